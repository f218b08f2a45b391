//! Common interface for models replayed against a click log.

use crate::error::Result;
use crate::features::SparseVector;
use crate::glm::{GlmKind, TrainConfig};
use crate::multihead::MultiHeadModel;
use crate::scalar::Scalar;
use crate::stream::{ClickLog, ConversionStore, StreamState};

/// A model that trains itself from a replayed log.
pub trait OnlineLearner<F: Scalar> {
    fn name(&self) -> &str;

    fn kind(&self) -> GlmKind;

    /// Trains on every event visible at `clock` that originates from a click
    /// with log index below `upto`. Calls must not move `clock` backwards.
    fn catch_up(&mut self, log: &ClickLog<F>, store: &ConversionStore<F>, clock: u64, upto: usize) -> Result<()>;

    /// Raw output: probability (possibly a sum above 1) or value.
    fn predict(&self, x: &SparseVector<F>) -> F;

    /// Training updates applied so far.
    fn events(&self) -> u64;
}

/// Multi-head model driven by lagged stream cursors.
pub struct MholLearner<F> {
    name: String,
    pub model: MultiHeadModel<F>,
    pub state: StreamState<F>,
    cfg: TrainConfig<F>,
}

impl<F: Scalar> MholLearner<F> {
    pub fn new(model: MultiHeadModel<F>, cfg: TrainConfig<F>) -> Self {
        let state = StreamState::new(model.n_heads());
        MholLearner {
            name: "mhol".into(),
            model,
            state,
            cfg,
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_state(mut self, state: StreamState<F>) -> Self {
        self.state = state;
        self
    }
}

impl<F: Scalar> OnlineLearner<F> for MholLearner<F> {
    fn name(&self) -> &str {
        &self.name
    }

    fn kind(&self) -> GlmKind {
        self.model.kind()
    }

    fn catch_up(&mut self, log: &ClickLog<F>, store: &ConversionStore<F>, clock: u64, _upto: usize) -> Result<()> {
        // Every wait is at least one second, so a click is never visible to
        // a head at its own timestamp and `upto` needs no extra handling.
        if clock > self.state.clock() {
            self.state.advance(log, store, &mut self.model, &self.cfg, clock)?;
        }
        Ok(())
    }

    fn predict(&self, x: &SparseVector<F>) -> F {
        self.model.predict(x)
    }

    fn events(&self) -> u64 {
        self.state.consumed().iter().sum()
    }
}
