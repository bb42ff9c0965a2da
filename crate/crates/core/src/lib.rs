//! Longitudinal support vector machines.
//!
//! Subjects are observed repeatedly over time; a linear direction `w` is
//! trained so that the functional margin of every observation grows like
//! `a·t + d`. The crate covers the dual QP and its solver, prediction,
//! permutation significance maps, synthetic generators, baselines, VC-style
//! bounds and the file formats used by the `lsvm` command.
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix it to `f64`.

pub mod baselines;
pub mod bounds;
pub mod io;
pub mod linalg;
pub mod model;
pub mod qp;
pub mod scalar;
pub mod stats;
pub mod synth;
pub mod trainer;

pub use model::{
    average_margin, evaluate_margin, predict, FeatureScaling, Label, MarginFunction, Observation,
    PredictionOutcome, Subject,
};
pub use scalar::Scalar;
pub use stats::{bh_adjust, permutation_test, signed_rank_test};
pub use synth::SynthConfig;
pub use trainer::{train, train_with, TrainError, TrainOptions};

pub type Dataset = model::LongitudinalDataset<f64>;
pub type Classifier = model::TrainedClassifier<f64>;
pub type Report = stats::PermutationReport<f64>;
pub type QpProblem = qp::QpProblem<f64>;
