//! Monthly feature matrices, trend and region covariates, standardisation.

mod encode;
mod matrix;
mod monthly;
mod scale;
mod season;
mod sets;
mod trend;

pub use encode::{OneHotEncoder, OHE_PREFIX};
pub use matrix::{ColumnKind, FeatureMatrix, RowKey};
pub use monthly::{build_feature_matrix, monthly_aggregate, Climatology, MonthlyAggregate, MonthlyTable};
pub use scale::ZScore;
pub use season::SeasonWindow;
pub use sets::{variable_prefix, FeatureMember, FeatureSetCatalog, FeatureSetSpec, Metric, FULL_SET};
pub use trend::{theil_sen_trend, trend_covariate, TrendEstimate, TrendFit, MIN_TREND_YEARS, TREND_WINDOW};


/// Name of the trend covariate column.
pub const TREND_COLUMN: &str = "yield_trend";

/// Default forecast month: data through March, an early-April forecast.
pub const DEFAULT_CUTOFF_MONTH: u8 = 6;
