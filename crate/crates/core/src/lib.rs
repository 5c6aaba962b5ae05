//! Profile-based discovery of joinable attributes across independent tabular datasets.
//!
//! The pipeline is split so that the expensive part runs once per dataset:
//!
//! * [`ingest`] loads delimited files and decides which attributes are string-typed.
//! * [`profiler`] summarises every eligible attribute into an [`AttributeProfile`].
//! * [`comparator`] turns two profiles into a distance vector.
//! * [`oracle`] computes exact join quality from raw values, used for labels and testing.
//! * [`learner`] trains the chain of one-vs-rest random forests.
//! * [`discovery`] ranks candidate equi-joins for an attribute or a whole dataset.
//! * [`store`] persists profiles and models.
//! * [`evalkit`] builds confusion matrices and per-class metrics.
//!
//! Data-parallel loops go through [`Execution`]; with the `parallel` feature disabled every
//! loop runs sequentially.

pub mod comparator;
pub mod discovery;
pub mod error;
pub mod evalkit;
mod exec;
pub mod ingest;
pub mod learner;
pub mod oracle;
pub mod profiler;
pub mod store;
pub mod synth;

pub use comparator::{FeatureVector, NormalizationStats, PairFeatures};
pub use discovery::{JoinCandidate, Ranking};
pub use error::{Error, Result};
pub use exec::Execution;
pub use ingest::{Attribute, CsvOptions, Dataset};
pub use learner::{ChainModel, ClassProbabilities, ForestParams};
pub use oracle::{QualityClass, QualityThresholds};
pub use profiler::AttributeProfile;
