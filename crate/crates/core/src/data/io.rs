use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Crop, Dekad, PixelSample, SeriesCollection, Variable, YieldRecord};
use crate::error::{Error, Result};

pub const DEKADAL_HEADER: &str = "region_id,variable,year,dekad,value";
pub const PIXEL_HEADER: &str = "pixel_id,region_id,weight,variable,year,dekad,value";
pub const YIELD_HEADER: &str = "region_id,crop,year,yield_t_ha,area_share";

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn check_header(rdr: &mut csv::Reader<&[u8]>, expected: &str, file: &str) -> Result<()> {
    let header = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != expected {
        return Err(Error::Schema {
            file: file.to_string(),
            message: format!("expected header `{expected}`, found `{header}`"),
        });
    }
    Ok(())
}

fn field<'r>(rec: &'r csv::StringRecord, i: usize, file: &str, line: usize) -> Result<&'r str> {
    rec.get(i).ok_or_else(|| Error::Parse {
        file: file.to_string(),
        line,
        message: format!("missing column {}", i + 1),
    })
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str, file: &str, line: usize) -> Result<T> {
    s.parse::<T>().map_err(|_| Error::Parse {
        file: file.to_string(),
        line,
        message: format!("unparseable {what} `{s}`"),
    })
}

fn parse_dekad(year: &str, index: &str, file: &str, line: usize) -> Result<Dekad> {
    let year: i32 = parse_num(year, "year", file, line)?;
    let index: u8 = parse_num(index, "dekad", file, line)?;
    Dekad::new(year, index).map_err(|e| Error::Parse {
        file: file.to_string(),
        line,
        message: e.to_string(),
    })
}

fn line_of(rec: &csv::StringRecord) -> usize {
    rec.position().map(|p| p.line() as usize).unwrap_or(0)
}

pub fn parse_dekadal_csv(path: &Path) -> Result<SeriesCollection> {
    read_dekadal_str(&read_file(path)?, &path.display().to_string())
}

/// Parses dekadal CSV text. Empty or `NaN` values are recorded as explicit gaps.
pub fn read_dekadal_str(text: &str, file: &str) -> Result<SeriesCollection> {
    let mut rdr = reader(text);
    check_header(&mut rdr, DEKADAL_HEADER, file)?;
    let mut seen: HashMap<(String, Variable, Dekad), usize> = HashMap::new();
    let mut out = SeriesCollection::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let region = field(&rec, 0, file, line)?.to_string();
        let variable: Variable = field(&rec, 1, file, line)?
            .parse()
            .map_err(|e: Error| Error::Parse {
                file: file.to_string(),
                line,
                message: e.to_string(),
            })?;
        let dekad = parse_dekad(field(&rec, 2, file, line)?, field(&rec, 3, file, line)?, file, line)?;
        let raw = field(&rec, 4, file, line)?;
        let key = (region.clone(), variable, dekad);
        if let Some(first) = seen.insert(key.clone(), line) {
            return Err(Error::Duplicate {
                key: format!("({}, {}, {})", key.0, key.1, key.2),
                first,
                second: line,
            });
        }
        let series = out.entry(&region, variable);
        if raw.is_empty() || raw.eq_ignore_ascii_case("nan") {
            series.gaps.insert(dekad);
            continue;
        }
        let value: f64 = parse_num(raw, "value", file, line)?;
        variable.check_value(value).map_err(|message| Error::Parse {
            file: file.to_string(),
            line,
            message,
        })?;
        series.observations.insert(dekad, value);
    }
    Ok(out)
}

/// Serializes in canonical row order: (region_id, variable, year, dekad).
pub fn write_dekadal_string(series: &SeriesCollection) -> String {
    let mut out = String::from(DEKADAL_HEADER);
    out.push('\n');
    for s in series.iter() {
        let mut rows: Vec<(Dekad, Option<f64>)> = s
            .observations
            .iter()
            .map(|(d, v)| (*d, Some(*v)))
            .chain(s.gaps.iter().map(|d| (*d, None)))
            .collect();
        rows.sort_by_key(|(d, _)| *d);
        for (d, v) in rows {
            let value = match v {
                Some(v) => format!("{v}"),
                None => "NaN".to_string(),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.region_id,
                s.variable,
                d.year(),
                d.index(),
                value
            );
        }
    }
    out
}

pub fn write_dekadal_csv(series: &SeriesCollection, path: &Path) -> Result<()> {
    std::fs::write(path, write_dekadal_string(series)).map_err(|e| Error::io(path, e))
}

pub fn parse_pixel_csv(path: &Path) -> Result<Vec<PixelSample>> {
    read_pixel_str(&read_file(path)?, &path.display().to_string())
}

pub fn read_pixel_str(text: &str, file: &str) -> Result<Vec<PixelSample>> {
    let mut rdr = reader(text);
    check_header(&mut rdr, PIXEL_HEADER, file)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let variable: Variable = field(&rec, 3, file, line)?
            .parse()
            .map_err(|e: Error| Error::Parse {
                file: file.to_string(),
                line,
                message: e.to_string(),
            })?;
        let sample = PixelSample {
            pixel_id: field(&rec, 0, file, line)?.to_string(),
            region_id: field(&rec, 1, file, line)?.to_string(),
            weight: parse_num(field(&rec, 2, file, line)?, "weight", file, line)?,
            variable,
            dekad: parse_dekad(field(&rec, 4, file, line)?, field(&rec, 5, file, line)?, file, line)?,
            value: parse_num(field(&rec, 6, file, line)?, "value", file, line)?,
        };
        sample.validate().map_err(|message| Error::Parse {
            file: file.to_string(),
            line,
            message,
        })?;
        out.push(sample);
    }
    Ok(out)
}

pub fn parse_yield_csv(path: &Path) -> Result<Vec<YieldRecord>> {
    read_yield_str(&read_file(path)?, &path.display().to_string())
}

pub fn read_yield_str(text: &str, file: &str) -> Result<Vec<YieldRecord>> {
    let mut rdr = reader(text);
    check_header(&mut rdr, YIELD_HEADER, file)?;
    let mut seen: HashMap<(String, Crop, i32), usize> = HashMap::new();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let crop: Crop = field(&rec, 1, file, line)?
            .parse()
            .map_err(|e: Error| Error::Parse {
                file: file.to_string(),
                line,
                message: e.to_string(),
            })?;
        let record = YieldRecord {
            region_id: field(&rec, 0, file, line)?.to_string(),
            crop,
            year: parse_num(field(&rec, 2, file, line)?, "year", file, line)?,
            yield_t_ha: parse_num(field(&rec, 3, file, line)?, "yield", file, line)?,
            area_share: parse_num(field(&rec, 4, file, line)?, "area_share", file, line)?,
        };
        if !(record.yield_t_ha > 0.0 && record.yield_t_ha.is_finite()) {
            return Err(Error::Parse {
                file: file.to_string(),
                line,
                message: format!("yield must be positive, got {}", record.yield_t_ha),
            });
        }
        if !(0.0..=1.0).contains(&record.area_share) {
            return Err(Error::Parse {
                file: file.to_string(),
                line,
                message: format!("area_share {} outside [0, 1]", record.area_share),
            });
        }
        let key = (record.region_id.clone(), record.crop, record.year);
        if let Some(first) = seen.insert(key.clone(), line) {
            return Err(Error::Duplicate {
                key: format!("({}, {}, {})", key.0, key.1, key.2),
                first,
                second: line,
            });
        }
        out.push(record);
    }
    Ok(out)
}

pub fn write_yield_csv(records: &[YieldRecord], path: &Path) -> Result<()> {
    let mut out = String::from(YIELD_HEADER);
    out.push('\n');
    let mut sorted: Vec<&YieldRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.region_id, a.crop, a.year).cmp(&(&b.region_id, b.crop, b.year))
    });
    for r in sorted {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.region_id, r.crop, r.year, r.yield_t_ha, r.area_share
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
