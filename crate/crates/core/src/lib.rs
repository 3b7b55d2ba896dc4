//! Fine-grained prediction from sparse, asynchronously sampled sensor streams.
//!
//! Each time slot the engine assembles a correlation graph over a sliding
//! window of `T_h` historical, one current and `T_f` future subgraphs of `L`
//! points of interest. Edges come from an adjusted cosine similarity of
//! weighted spatial, temporal and meteorological features. Node values are
//! obtained from a closed-form semi-supervised regression that balances graph
//! smoothness against a pre-estimate built from fresh readings, the previous
//! round's prediction and a recurrent forecast of the newly added slot.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64` for the common case.

pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod forecast;
pub mod graph;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod propagate;
pub mod scalar;
pub mod simgen;
pub mod tune;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Scalar;

pub use features::{FeatureVector, FeatureWeights, NormStats, WeatherRecord, WeatherSeries, WeatherType};
pub use graph::SimilarityParams;
pub use model::{CorrelationGraph, Deployment, NodeId, Poi, Prediction, Reading, Sensor, Slot, WindowConfig};

pub use forecast::{Forecaster, ForecasterKind, TrainConfig};
pub use pipeline::{PipelineConfig, PipelineState, StepOutput};
pub use propagate::{PreEstimate, PropagationParams, Solver};
pub use tune::{GaConfig, GaOutcome, Genotype, TuningSet};

/// Double-precision correlation graph.
pub type Graph = model::CorrelationGraph<f64>;
/// Single-precision correlation graph.
pub type Graph32 = model::CorrelationGraph<f32>;
pub type Pred = model::Prediction<f64>;
pub type Pred32 = model::Prediction<f32>;
pub type Weights = features::FeatureWeights<f64>;
pub type Weights32 = features::FeatureWeights<f32>;

pub type Config = pipeline::PipelineConfig<f64>;
pub type Config32 = pipeline::PipelineConfig<f32>;
pub type Pipeline = pipeline::PipelineState<f64>;
pub type Pipeline32 = pipeline::PipelineState<f32>;
pub type Tuning = tune::TuningSet<f64>;
