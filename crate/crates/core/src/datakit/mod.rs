//! Dataset ingestion, standardization, split management and surrogate
//! training.

mod dataset;
mod split;
mod standardize;
pub mod synthetic;
mod train;

pub use dataset::{ingest_csv, ingest_reader, CsvIngest, Dataset};
pub use split::{draw_and_split, SplitPlan, Splits};
pub use standardize::{fit_standardizer, Standardizer};
pub use train::{
    train, train_with_standardizer, DataSummary, Optimizer, TrainConfig, TrainedSurrogate,
};
