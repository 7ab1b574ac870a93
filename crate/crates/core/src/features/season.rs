use serde::{Deserialize, Serialize};

use crate::data::Dekad;

/// The growing season as consecutive calendar months, M1 being the first.
/// The standard window runs October (M1) to May (M8) and straddles the
/// year boundary; months before January belong to the previous calendar year.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonWindow {
    pub start_month: u8,
    pub n_months: u8,
}

impl Default for SeasonWindow {
    fn default() -> Self {
        Self::standard()
    }
}

impl SeasonWindow {
    pub const fn standard() -> Self {
        SeasonWindow {
            start_month: 10,
            n_months: 8,
        }
    }

    pub fn months(&self) -> u8 {
        self.n_months
    }

    /// Calendar (year, month) of season month `k` (1-based) for a harvest year.
    pub fn calendar_month(&self, harvest_year: i32, k: u8) -> (i32, u8) {
        let zero_based = (self.start_month - 1) as i32 + (k as i32 - 1);
        let month = (zero_based % 12) as u8 + 1;
        // the season ends in the harvest year
        let end_zero = (self.start_month - 1) as i32 + (self.n_months as i32 - 1);
        let year_offset = zero_based / 12 - end_zero / 12;
        (harvest_year + year_offset, month)
    }

    pub fn month_dekads(&self, harvest_year: i32, k: u8) -> [Dekad; 3] {
        let (year, month) = self.calendar_month(harvest_year, k);
        let first = 3 * (month - 1) + 1;
        [0u8, 1, 2].map(|i| Dekad::new(year, first + i).expect("valid dekad"))
    }

    /// Season dekads from M1 through month `through` inclusive.
    pub fn dekads(&self, harvest_year: i32, through: u8) -> Vec<Dekad> {
        (1..=through.min(self.n_months))
            .flat_map(|k| self.month_dekads(harvest_year, k))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_window_spans_october_to_may() {
        let w = SeasonWindow::standard();
        assert_eq!(w.calendar_month(2005, 1), (2004, 10));
        assert_eq!(w.calendar_month(2005, 3), (2004, 12));
        assert_eq!(w.calendar_month(2005, 4), (2005, 1));
        assert_eq!(w.calendar_month(2005, 8), (2005, 5));
        let idx: Vec<u8> = w.dekads(2005, 8).iter().map(|d| d.index()).collect();
        let expected: Vec<u8> = (28..=36).chain(1..=15).collect();
        assert_eq!(idx, expected);
        assert_eq!(w.dekads(2005, 6).len(), 18);
    }
}
