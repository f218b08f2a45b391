//! Online conversion modelling under delayed feedback.
//!
//! Conversions can arrive days after the click that caused them. Instead of
//! waiting for the full attribution window before training, the delay axis
//! is cut into windows and one generalized linear head is trained per
//! window, each as soon as its own window has elapsed. The heads' outputs
//! add up to the full-window prediction.
//!
//! The library is generic over the float type; the `*64` and `*32` aliases
//! below cover the usual choices.

pub mod baselines;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod glm;
pub mod learner;
pub mod multihead;
pub mod quantizer;
pub mod scalar;
pub mod stream;

pub use error::{Error, Result};
pub use eval::{evaluate_cvr, evaluate_vpc, windowed_eval, EvalHorizon, EvalReport};
pub use experiment::{run_comparison, Method, RunSpec};
pub use features::{featurize, FeatureConfig, RawRecord, Schema, SparseVector};
pub use glm::{GlmKind, GlmModel, TrainConfig};
pub use learner::{MholLearner, OnlineLearner};
pub use multihead::MultiHeadModel;
pub use quantizer::{design_windows, quantize, DelayWindows, QuantizedLabels, DAY};
pub use scalar::Scalar;
pub use stream::{ClickLog, ConversionStore, StreamState};

pub type SparseVector64 = SparseVector<f64>;
pub type SparseVector32 = SparseVector<f32>;
pub type GlmModel64 = GlmModel<f64>;
pub type GlmModel32 = GlmModel<f32>;
pub type TrainConfig64 = TrainConfig<f64>;
pub type TrainConfig32 = TrainConfig<f32>;
pub type MultiHeadModel64 = MultiHeadModel<f64>;
pub type MultiHeadModel32 = MultiHeadModel<f32>;
pub type ClickLog64 = ClickLog<f64>;
pub type ClickLog32 = ClickLog<f32>;
pub type ConversionStore64 = ConversionStore<f64>;
pub type ConversionStore32 = ConversionStore<f32>;
pub type EvalReport64 = EvalReport<f64>;
pub type EvalReport32 = EvalReport<f32>;
