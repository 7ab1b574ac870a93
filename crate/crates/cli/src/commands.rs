//! Subcommand bodies.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use yieldcast_core::bridge::Backend;
use yieldcast_core::data::write_dekadal_string;
use yieldcast_core::explain::{attributions_long_csv, rank_features, shap_csv};
use yieldcast_core::features::{trend_covariate, Climatology, ColumnKind, MonthlyTable, FULL_SET, TREND_COLUMN};
use yieldcast_core::harness::{
    explain_pipeline, nested_loyo_hindcast, operational_forecast, posthoc_ensemble, run_backend_default, select_configs,
    HindcastReport, PheConfig, PipelineConfig, ReplicateUnit,
};
use yieldcast_core::stats::{emit_report, render_forecast_svg, summary_csv, RegionBar};
use yieldcast_core::synth::{synth_generate, SynthSpec};

use crate::inputs::{create_dir, usage, write_file, CliResult, Settings};
use crate::{CommonArgs, ExplainArgs, FeaturesArgs, ForecastArgs, HindcastArgs, ReplicateChoice, ReportArgs, SynthArgs};

/// Label under which default-mode backend folds are reported.
pub const BACKEND_LABEL: &str = "backend";
pub const PHE_LABEL: &str = "backend (PHE)";

pub fn synth(a: SynthArgs) -> CliResult<()> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| yieldcast_core::Error::io(p, e))?;
            serde_json::from_str(&text).map_err(yieldcast_core::Error::from)?
        }
        None => SynthSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(r) = a.regions {
        spec.regions = r;
    }
    if let Some(y) = a.years {
        spec.years = y;
    }
    if let Some(n) = a.noise_sd {
        spec.noise_sd = n;
    }
    if let Some(t) = a.trend_slope {
        spec.trend_slope = t;
    }
    let panel = synth_generate(&spec, &a.out)?;
    log::info!("event=synth_written dir={} samples={}", a.out.display(), panel.yields.len());
    println!("wrote {} labelled samples to {}", panel.yields.len(), a.out.display());
    Ok(())
}

pub fn ingest(a: CommonArgs) -> CliResult<()> {
    let s = Settings::resolve(&a)?;
    let ds = s.load_dataset()?;
    create_dir(&s.out)?;
    let mut samples = String::from("region_id,year,yield_t_ha,missing_dekads\n");
    for smp in &ds.samples {
        let gaps: usize = smp.missing.values().map(Vec::len).sum();
        let _ = writeln!(samples, "{},{},{},{}", smp.region_id, smp.year, smp.yield_t_ha, gaps);
    }
    write_file(&s.out.join("samples.csv"), &samples)?;
    write_file(&s.out.join("region_series.csv"), &write_dekadal_string(&ds.series))?;
    println!(
        "{}: {} samples, {} regions, {} years ({}..={}), {} excluded",
        ds.crop,
        ds.len(),
        ds.regions.len(),
        ds.years.len(),
        ds.years.first().copied().unwrap_or_default(),
        ds.years.last().copied().unwrap_or_default(),
        ds.excluded.len()
    );
    Ok(())
}

pub fn features(a: FeaturesArgs) -> CliResult<()> {
    let s = Settings::resolve(&a.common)?;
    let ds = s.load_dataset()?;
    let catalog = s.catalog()?;
    let spec = catalog.get(a.feature_set.as_deref().unwrap_or(FULL_SET))?;
    let clim = if ds.has_gaps() { Climatology::from_years(&ds.series, &ds.window, &ds.years) } else { Climatology::none() };
    let table = MonthlyTable::for_dataset(&ds, s.config.cutoff_month, &clim)?;
    let mut fm = table.matrix(spec);
    let keys: Vec<(String, i32)> = ds.samples.iter().map(|x| (x.region_id.clone(), x.year)).collect();
    let visible: Vec<(String, i32, f64)> = ds.samples.iter().map(|x| (x.region_id.clone(), x.year, x.yield_t_ha)).collect();
    fm.push_column(TREND_COLUMN, ColumnKind::Trend, &trend_covariate(&keys, &visible))?;
    create_dir(&s.out)?;
    let path = s.out.join("features.csv");
    write_file(&path, &fm.to_csv_string())?;
    println!("wrote {} rows x {} columns to {}", fm.n_rows(), fm.n_cols(), path.display());
    Ok(())
}

pub fn hindcast(a: HindcastArgs) -> CliResult<()> {
    let mut s = Settings::resolve(&a.common)?;
    if let Some(r) = a.replicate {
        s.config.replicate = match r {
            ReplicateChoice::PerYear => ReplicateUnit::PerYear,
            ReplicateChoice::PerSample => ReplicateUnit::PerSample,
        };
    }
    if let Some(alpha) = a.alpha {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(usage(format!("--alpha must lie in (0,1), got {alpha}")));
        }
        s.config.alpha = alpha;
    }
    let ds = s.load_dataset()?;
    let mut opts = s.hindcast_options()?;
    opts.outer_years = a.outer_years.clone();
    opts.audit = a.audit;
    let (models, baselines) = s.kinds(a.models.as_deref(), a.baselines.as_deref())?;
    let kinds: Vec<_> = baselines.into_iter().chain(models).collect();
    let configs = s.configs(&kinds, a.no_options);
    log::info!("event=hindcast_start configs={} years={}", configs.len(), ds.years.len());
    let mut report = nested_loyo_hindcast(&ds, &configs, &opts)?;
    if let Some(mut backend) = s.backend(a.backend)? {
        let folds = run_backend_default(&ds, backend.as_mut(), &opts)?;
        report.add_model(BACKEND_LABEL, "backend", folds);
        let phe = a
            .phe_pool
            .map(|n| PheConfig {
                pool_size: n,
                time_budget_s: s.config.phe.as_ref().and_then(|p| p.time_budget_s),
            })
            .or_else(|| s.config.phe.clone());
        if let Some(phe) = phe {
            let folds = posthoc_ensemble(&ds, backend.as_mut(), &phe, &opts)?;
            report.add_model(PHE_LABEL, "backend", folds.into_iter().map(|f| f.fold).collect());
        }
    }
    emit_report(&report, &s.out)?;
    print!("{}", summary_csv(&report));
    log::info!("event=hindcast_done out={}", s.out.display());
    Ok(())
}

fn read_external(path: &Path) -> CliResult<BTreeMap<String, f64>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let line = i + 2;
        let (Some(region), Some(v)) = (rec.get(0), rec.get(1)) else {
            return Err(usage(format!("{}:{line}: expected `region_id,estimate`", path.display())));
        };
        let v: f64 = v.trim().parse().map_err(|_| usage(format!("{}:{line}: bad estimate `{v}`", path.display())))?;
        out.insert(region.trim().to_string(), v);
    }
    Ok(out)
}

/// Selected regressor pipelines (overall and per kind) plus the configured baselines.
fn chosen_pipelines(s: &Settings, ds: &yieldcast_core::data::Dataset, models: Option<&[String]>, no_options: bool) -> CliResult<Vec<(String, PipelineConfig)>> {
    let (models, baselines) = s.kinds(models, None)?;
    let opts = s.hindcast_options()?;
    let mut out: Vec<(String, PipelineConfig)> = s.configs(&baselines, true).into_iter().map(|c| (c.model.label().to_string(), c)).collect();
    for (label, cfg, score) in select_configs(ds, &s.configs(&models, no_options), &opts)? {
        log::info!("event=pipeline_selected label={label} pipeline={} inner_rmse={score:.6}", cfg.label());
        out.push((label, cfg));
    }
    Ok(out)
}

pub fn forecast(a: ForecastArgs) -> CliResult<()> {
    let s = Settings::resolve(&a.common)?;
    let ds = s.load_dataset()?;
    let external = a.external.as_deref().map(read_external).transpose()?.unwrap_or_default();
    if ds.years.contains(&a.year) {
        return Err(yieldcast_core::Error::AlreadyLabelled(a.year).into());
    }
    let chosen = chosen_pipelines(&s, &ds, a.models.as_deref(), a.no_options)?;
    let opts = s.hindcast_options()?;
    let mut backend = s.backend(a.backend)?;
    let report = operational_forecast(&ds, &chosen, a.year, &opts, backend.as_mut().map(|b| &mut **b as &mut dyn Backend), &external)?;
    create_dir(&s.out)?;
    write_file(&s.out.join("forecast.csv"), &report.to_csv_string())?;
    let json = serde_json::to_string_pretty(&report).map_err(yieldcast_core::Error::from)? + "\n";
    write_file(&s.out.join("forecast.json"), &json)?;
    let mut bars: Vec<RegionBar> = report
        .rows
        .iter()
        .map(|r| RegionBar {
            region: r.region_id.clone(),
            series: r.model.clone(),
            mean: r.mean,
            interval: r.interval,
            reference: r.external,
        })
        .collect();
    bars.sort_by(|x, y| x.region.cmp(&y.region));
    let title = format!("{} forecast {} at month {}", report.crop, a.year, report.cutoff_month);
    write_file(&s.out.join(format!("forecast_{}.svg", a.year)), &render_forecast_svg(&title, &bars))?;
    print!("{}", report.to_csv_string());
    Ok(())
}

pub fn explain(a: ExplainArgs) -> CliResult<()> {
    let s = Settings::resolve(&a.common)?;
    let ds = s.load_dataset()?;
    let chosen = chosen_pipelines(&s, &ds, a.models.as_deref(), a.no_options)?;
    let (_, cfg) = chosen
        .iter()
        .filter(|(_, c)| !c.model.is_baseline())
        .find(|(l, _)| *l == a.pipeline)
        .ok_or_else(|| {
            let names: Vec<&str> = chosen.iter().filter(|(_, c)| !c.model.is_baseline()).map(|(l, _)| l.as_str()).collect();
            usage(format!("no selected pipeline `{}`; choose one of: {}", a.pipeline, names.join(", ")))
        })?;
    let opts = s.hindcast_options()?;
    let atts = explain_pipeline(&ds, cfg, &opts, a.permutations)?;
    let ranks = rank_features(&atts)?;
    create_dir(&s.out)?;
    write_file(&s.out.join("shap.csv"), &shap_csv(&ranks))?;
    write_file(&s.out.join("shap_long.csv"), &attributions_long_csv(&atts))?;
    println!("{}: {}", a.pipeline, cfg.label());
    print!("{}", shap_csv(&ranks));
    Ok(())
}

pub fn report(a: ReportArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&a.input).map_err(|e| yieldcast_core::Error::io(&a.input, e))?;
    let report = HindcastReport::from_json(&text)?;
    let files = emit_report(&report, &a.out)?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}
