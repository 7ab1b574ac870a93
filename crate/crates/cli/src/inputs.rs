//! Resolution of flags, configuration file and environment into run settings.

use std::path::{Path, PathBuf};

use thiserror::Error;
use yieldcast_core::bridge::{Backend, BackendRegistry, BackendSpec};
use yieldcast_core::data::{
    aggregate_pixels_to_region, assemble_dataset, filter_marginal_regions, parse_dekadal_csv, parse_pixel_csv,
    parse_yield_csv, Crop, Dataset, SeriesCollection,
};
use yieldcast_core::features::FeatureSetCatalog;
use yieldcast_core::harness::{enumerate_configs, EnumerateOptions, HindcastOptions, PipelineConfig, RunConfig, DEFAULT_SEED};
use yieldcast_core::models::ModelKind;

use crate::{BackendChoice, CommonArgs};

pub const SEED_ENV: &str = "YIELDCAST_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Domain(#[from] yieldcast_core::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn write_file(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| yieldcast_core::Error::io(path, e).into())
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| yieldcast_core::Error::io(path, e).into())
}

pub struct Settings {
    pub config: RunConfig,
    pub seed: u64,
    pub out: PathBuf,
}

fn resolve_path(base: Option<&Path>, p: PathBuf) -> PathBuf {
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p,
    }
}

impl Settings {
    pub fn resolve(args: &CommonArgs) -> CliResult<Settings> {
        let mut config = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| yieldcast_core::Error::io(path, e))?;
                let mut cfg = RunConfig::from_json(&text)?;
                let base = path.parent();
                cfg.dekadal = cfg.dekadal.map(|p| resolve_path(base, p));
                cfg.pixels = cfg.pixels.map(|p| resolve_path(base, p));
                cfg.yields = cfg.yields.map(|p| resolve_path(base, p));
                cfg.feature_sets = cfg.feature_sets.map(|p| resolve_path(base, p));
                cfg.output_dir = resolve_path(base, cfg.output_dir);
                if let Some(BackendSpec::Process(l)) = &mut cfg.backend {
                    // a relative command next to the config file wins over PATH lookup
                    let local = resolve_path(base, PathBuf::from(&l.command));
                    if local.is_file() {
                        l.command = local.to_string_lossy().into_owned();
                    }
                }
                cfg
            }
            None => RunConfig::new(Crop::Maize),
        };
        if let Some(c) = &args.crop {
            config.crop = c.parse()?;
        }
        if let Some(dir) = &args.data {
            config.dekadal = Some(dir.join("dekadal.csv"));
            config.pixels = None;
            config.yields = Some(dir.join("yield.csv"));
        }
        if let Some(p) = &args.dekadal {
            config.dekadal = Some(p.clone());
            config.pixels = None;
        }
        if let Some(p) = &args.pixels {
            config.pixels = Some(p.clone());
            config.dekadal = None;
        }
        if let Some(p) = &args.yields {
            config.yields = Some(p.clone());
        }
        if let Some(m) = args.cutoff {
            config.cutoff_month = m;
        }
        if let Some(o) = &args.out {
            config.output_dir = o.clone();
        }
        let seed = match (args.seed, config.seed) {
            (Some(s), _) | (None, Some(s)) => s,
            (None, None) => match std::env::var(SEED_ENV) {
                Ok(v) => v.trim().parse().map_err(|_| usage(format!("{SEED_ENV} must be an unsigned integer, got `{v}`")))?,
                Err(_) => DEFAULT_SEED,
            },
        };
        config.seed = Some(seed);
        config.validate()?;
        Ok(Settings {
            out: config.output_dir.clone(),
            config,
            seed,
        })
    }

    pub fn load_dataset(&self) -> CliResult<Dataset> {
        let c = &self.config;
        let series: SeriesCollection = match (&c.pixels, &c.dekadal) {
            (Some(p), _) => aggregate_pixels_to_region(&parse_pixel_csv(p)?)?,
            (None, Some(d)) => parse_dekadal_csv(d)?,
            (None, None) => return Err(usage("no series input: pass --data, --dekadal or --pixels, or set them in the config")),
        };
        let yields_path = c.yields.as_ref().ok_or_else(|| usage("no yield input: pass --data or --yields, or set `yields` in the config"))?;
        let records = filter_marginal_regions(&parse_yield_csv(yields_path)?, c.area_threshold);
        let ds = assemble_dataset(&series, &records, c.crop)?;
        log::info!("event=dataset_ready crop={} samples={} regions={} years={}", c.crop, ds.len(), ds.regions.len(), ds.years.len());
        Ok(ds)
    }

    pub fn catalog(&self) -> CliResult<FeatureSetCatalog> {
        Ok(match &self.config.feature_sets {
            Some(p) => FeatureSetCatalog::from_path(p)?,
            None => FeatureSetCatalog::builtin(),
        })
    }

    pub fn hindcast_options(&self) -> CliResult<HindcastOptions> {
        Ok(HindcastOptions {
            cutoff_month: self.config.cutoff_month,
            seed: self.seed,
            grids: self.config.grid_overrides()?,
            catalog: Some(self.catalog()?),
            replicate: self.config.replicate,
            alpha: self.config.alpha,
            ..HindcastOptions::default()
        })
    }

    /// Regressor and baseline kinds after flag overrides.
    pub fn kinds(&self, models: Option<&[String]>, baselines: Option<&[String]>) -> CliResult<(Vec<ModelKind>, Vec<ModelKind>)> {
        let mut cfg = self.config.clone();
        if let Some(m) = models {
            cfg.models = m.to_vec();
        }
        if let Some(b) = baselines {
            cfg.baselines = b.to_vec();
        }
        // a bad model name is a bad argument, whether it came from a flag or the config file
        let models = cfg.model_kinds().map_err(|e| usage(e.to_string()))?;
        Ok((models, cfg.baseline_kinds().map_err(|e| usage(e.to_string()))?))
    }

    pub fn configs(&self, kinds: &[ModelKind], no_options: bool) -> Vec<PipelineConfig> {
        let mut opts = if no_options { EnumerateOptions::none() } else { self.config.options.clone() };
        if let Some(first) = self.config.options.feature_sets.first().filter(|_| no_options) {
            opts.feature_sets = vec![first.clone()];
        }
        enumerate_configs(kinds, &opts)
    }

    pub fn backend(&self, choice: Option<BackendChoice>) -> CliResult<Option<Box<dyn Backend>>> {
        let spec = match choice {
            None => self.config.backend.clone(),
            Some(BackendChoice::None) => None,
            Some(BackendChoice::Mock) => Some(BackendSpec::Mock),
            Some(BackendChoice::Process | BackendChoice::Tabpfn) => match &self.config.backend {
                Some(s @ BackendSpec::Process(_)) => Some(s.clone()),
                _ => return Err(usage("--backend process needs a `backend` launch spec of kind `process` in the config")),
            },
        };
        spec.map(|s| BackendRegistry::default().build(&s)).transpose().map_err(Into::into)
    }
}
