//! Market data ingestion and reversible preprocessing.

mod adf;
mod artifacts;
mod candles;
mod split;
mod transform;

pub use adf::{adf_test, AdfResult, CriticalValues};
pub use artifacts::{
    prepare, read_sidecar, read_value_csv, write_sidecar, write_value_csv, MarketData,
    PreparedData, PreprocessOptions, Sidecar,
};
pub use candles::{load_candles, Candle, CandleSeries, LoadReport};
pub use split::{chronological_split, make_windows, SplitSpec, Window};
pub use transform::{
    denormalize, denormalize_value, difference, invert_difference, minmax_normalize,
    normalize_value, DiffState, NormalizationParams,
};
