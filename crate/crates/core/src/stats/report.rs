//! Report files: summary and fold tables, comparison and per-region charts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::HindcastReport;

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub model: String,
    pub pooled_rrmsep: Option<f64>,
    pub mean_rrmsep: Option<f64>,
    pub sd_rrmsep: Option<f64>,
    pub letters: String,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

fn summary_rows(report: &HindcastReport) -> Vec<SummaryRow> {
    report
        .models
        .iter()
        .map(|m| {
            let ms = m.mean_sd();
            SummaryRow {
                model: m.label.clone(),
                pooled_rrmsep: m.pooled_rrmsep,
                mean_rrmsep: ms.map(|v| v.0),
                sd_rrmsep: ms.map(|v| v.1),
                letters: m.letters.clone().unwrap_or_default(),
            }
        })
        .collect()
}

fn csv_string(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// `model,pooled_rrmsep,mean_rrmsep,sd_rrmsep,letters`
pub fn summary_csv(report: &HindcastReport) -> String {
    csv_string(
        &["model", "pooled_rrmsep", "mean_rrmsep", "sd_rrmsep", "letters"],
        summary_rows(report).into_iter().map(|r| {
            vec![
                r.model,
                fmt_opt(r.pooled_rrmsep),
                fmt_opt(r.mean_rrmsep),
                fmt_opt(r.sd_rrmsep),
                r.letters,
            ]
        }),
    )
}

fn folds_csv(report: &HindcastReport) -> String {
    let mut rows = Vec::new();
    for m in &report.models {
        for f in &m.folds {
            if let Some(e) = &f.error {
                rows.push(vec![
                    m.label.clone(),
                    f.test_year.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    format!("failed: {e}"),
                ]);
                continue;
            }
            let cfg = f.selected.as_ref().map(|s| s.label.clone()).unwrap_or_default();
            for p in &f.predictions {
                rows.push(vec![
                    m.label.clone(),
                    p.year.to_string(),
                    p.region_id.clone(),
                    format!("{}", p.observed),
                    format!("{}", p.predicted),
                    p.interval.map(|i| i.0.to_string()).unwrap_or_default(),
                    p.interval.map(|i| i.1.to_string()).unwrap_or_default(),
                    cfg.clone(),
                ]);
            }
        }
    }
    csv_string(
        &["model", "year", "region_id", "observed", "predicted", "low", "high", "config"],
        rows.into_iter(),
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Bar chart of mean per-year rRMSEp with ±1 sd error bars and group letters.
pub fn render_comparison_svg(report: &HindcastReport) -> String {
    let rows: Vec<SummaryRow> = summary_rows(report).into_iter().filter(|r| r.mean_rrmsep.is_some()).collect();
    let bar_w = 56.0;
    let gap = 24.0;
    let (left, top, plot_h, bottom) = (60.0, 40.0, 300.0, 120.0);
    let width = left + rows.len() as f64 * (bar_w + gap) + gap;
    let height = top + plot_h + bottom;
    let ymax = rows
        .iter()
        .map(|r| r.mean_rrmsep.unwrap_or(0.0) + r.sd_rrmsep.unwrap_or(0.0))
        .fold(1.0_f64, f64::max)
        * 1.15;
    let sy = |v: f64| top + plot_h - v / ymax * plot_h;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{left}" y="20" font-size="14">{} rRMSEp by model (cutoff M{})</text>"#,
        escape(&report.crop.to_string()),
        report.cutoff_month
    );
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{:.2}" stroke="black"/>"#, top + plot_h);
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{:.2}" x2="{width:.2}" y2="{:.2}" stroke="black"/>"#,
        top + plot_h,
        top + plot_h
    );
    for t in 0..=4 {
        let v = ymax * t as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"#,
            left - 6.0,
            sy(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" transform="rotate(-90 16 {:.2})" text-anchor="middle">rRMSEp (%)</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0
    );
    for (i, r) in rows.iter().enumerate() {
        let x = left + gap + i as f64 * (bar_w + gap);
        let m = r.mean_rrmsep.unwrap_or(0.0);
        let sd = r.sd_rrmsep.unwrap_or(0.0);
        let cx = x + bar_w / 2.0;
        let _ = writeln!(
            s,
            r##"<rect class="bar" x="{x:.2}" y="{:.2}" width="{bar_w:.2}" height="{:.2}" fill="#6a9fcf"/>"##,
            sy(m),
            top + plot_h - sy(m)
        );
        let _ = writeln!(
            s,
            r#"<line class="err" x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            sy((m - sd).max(0.0)),
            sy(m + sd)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
            cx - 6.0,
            sy(m + sd),
            cx + 6.0,
            sy(m + sd)
        );
        let _ = writeln!(
            s,
            r#"<text class="letters" x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sy(m + sd) - 6.0,
            escape(&r.letters)
        );
        let ly = top + plot_h + 14.0;
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{ly:.2}" text-anchor="end" transform="rotate(-40 {cx:.2} {ly:.2})">{}</text>"#,
            escape(&r.model)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// One bar of a per-region chart.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionBar {
    pub region: String,
    pub series: String,
    pub mean: f64,
    pub interval: Option<(f64, f64)>,
    /// Observed or externally estimated value, drawn as a marker.
    pub reference: Option<f64>,
}

const PALETTE: [&str; 8] = ["#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377", "#bbbbbb", "#000000"];

/// Grouped bars per region with interval whiskers and reference markers.
pub fn render_forecast_svg(title: &str, bars: &[RegionBar]) -> String {
    let mut regions: Vec<&str> = bars.iter().map(|b| b.region.as_str()).collect();
    regions.dedup();
    let mut seen = std::collections::BTreeSet::new();
    regions.retain(|r| seen.insert(*r));
    let mut series: Vec<&str> = Vec::new();
    for b in bars {
        if !series.contains(&b.series.as_str()) {
            series.push(&b.series);
        }
    }
    let bar_w = 18.0;
    let group_w = series.len().max(1) as f64 * bar_w + 20.0;
    let (left, top, plot_h, bottom) = (60.0, 40.0, 280.0, 70.0 + 16.0 * series.len() as f64);
    let width = left + regions.len() as f64 * group_w + 20.0;
    let height = top + plot_h + bottom;
    let ymax = bars
        .iter()
        .flat_map(|b| [b.mean, b.interval.map_or(0.0, |i| i.1), b.reference.unwrap_or(0.0)])
        .filter(|v| v.is_finite())
        .fold(1e-9_f64, f64::max)
        * 1.1;
    let sy = |v: f64| top + plot_h - v.max(0.0) / ymax * plot_h;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{left}" y="20" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{:.2}" stroke="black"/>"#, top + plot_h);
    for t in 0..=4 {
        let v = ymax * t as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text>"#, left - 6.0, sy(v) + 4.0);
    }
    for (gi, region) in regions.iter().enumerate() {
        let gx = left + 10.0 + gi as f64 * group_w;
        for b in bars.iter().filter(|b| b.region == *region) {
            let si = series.iter().position(|x| *x == b.series).unwrap_or(0);
            let x = gx + si as f64 * bar_w;
            let color = PALETTE[si % PALETTE.len()];
            let _ = writeln!(
                s,
                r#"<rect class="bar" x="{x:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
                sy(b.mean),
                bar_w - 2.0,
                top + plot_h - sy(b.mean)
            );
            let cx = x + (bar_w - 2.0) / 2.0;
            if let Some((lo, hi)) = b.interval {
                let _ = writeln!(
                    s,
                    r#"<line class="whisker" x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
                    sy(lo),
                    sy(hi)
                );
                for v in [lo, hi] {
                    let _ = writeln!(
                        s,
                        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
                        cx - 4.0,
                        sy(v),
                        cx + 4.0,
                        sy(v)
                    );
                }
            }
            if let Some(r) = b.reference {
                let _ = writeln!(s, r#"<circle class="reference" cx="{cx:.2}" cy="{:.2}" r="3" fill="black"/>"#, sy(r));
            }
        }
        let lx = gx + series.len() as f64 * bar_w / 2.0;
        let _ = writeln!(
            s,
            r#"<text x="{lx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            top + plot_h + 16.0,
            escape(region)
        );
    }
    for (si, name) in series.iter().enumerate() {
        let y = top + plot_h + 40.0 + si as f64 * 16.0;
        let _ = writeln!(
            s,
            r#"<rect x="{left}" y="{:.2}" width="10" height="10" fill="{}"/><text x="{:.2}" y="{y:.2}">{}</text>"#,
            y - 9.0,
            PALETTE[si % PALETTE.len()],
            left + 16.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn write(dir: &Path, name: &str, text: &str, out: &mut Vec<PathBuf>) -> Result<()> {
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    out.push(p);
    Ok(())
}

/// Writes `report.json`, `summary.csv`, `folds.csv`, `comparison.svg`, a
/// per-region chart of the last hindcast year and `timings.json`. All but
/// the timings are a pure function of the report.
pub fn emit_report(report: &HindcastReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if report.models.is_empty() || report.models.iter().all(|m| m.folds.is_empty()) {
        return Err(Error::EmptyReport("the report holds no folds".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut out = Vec::new();
    write(out_dir, "report.json", &report.to_json(), &mut out)?;
    write(out_dir, "summary.csv", &summary_csv(report), &mut out)?;
    write(out_dir, "folds.csv", &folds_csv(report), &mut out)?;
    write(out_dir, "comparison.svg", &render_comparison_svg(report), &mut out)?;
    if let Some(&year) = report.years.iter().max() {
        let mut bars = Vec::new();
        for m in &report.models {
            for f in m.folds.iter().filter(|f| f.test_year == year && !f.is_failed()) {
                for p in &f.predictions {
                    bars.push(RegionBar {
                        region: p.region_id.clone(),
                        series: m.label.clone(),
                        mean: p.predicted,
                        interval: p.interval,
                        reference: Some(p.observed),
                    });
                }
            }
        }
        bars.sort_by(|a, b| a.region.cmp(&b.region));
        let title = format!("{} hindcast {year}: predictions with 95% intervals, observed as dots", report.crop);
        write(out_dir, &format!("regions_{year}.svg"), &render_forecast_svg(&title, &bars), &mut out)?;
    }
    let timings = serde_json::to_string_pretty(&report.timings).expect("timings serialise") + "\n";
    write(out_dir, "timings.json", &timings, &mut out)?;
    Ok(out)
}
