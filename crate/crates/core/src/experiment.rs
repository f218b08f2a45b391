//! Runs the methods side by side on one stream.

use std::fmt;
use std::str::FromStr;

use crate::baselines::{NaiveLearner, OracleLearner, ShiftedLearner};
use crate::error::{Error, Result};
use crate::eval::{windowed_eval, EvalHorizon, EvalReport};
use crate::glm::{GlmKind, GlmModel, TrainConfig};
use crate::learner::{MholLearner, OnlineLearner};
use crate::multihead::MultiHeadModel;
use crate::quantizer::DelayWindows;
use crate::scalar::Scalar;
use crate::stream::{ClickLog, ConversionStore, StreamState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Mhol,
    Naive,
    Shifted,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Oracle, Method::Mhol, Method::Shifted, Method::Naive];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mhol => "mhol",
            Method::Naive => "naive",
            Method::Shifted => "shifted",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown method {s:?}; expected mhol, naive, shifted or oracle")))
    }
}

/// Settings shared by every method in a comparison.
#[derive(Clone, Debug)]
pub struct RunSpec<F> {
    pub kind: GlmKind,
    pub hash_bits: u32,
    pub windows: DelayWindows,
    pub train: TrainConfig<F>,
    pub eval_days: i64,
    /// Threads per multi-head learner; 0 means one per head.
    pub workers: usize,
}

/// A fresh learner for `method`.
pub fn make_learner<F: Scalar>(
    method: Method,
    spec: &RunSpec<F>,
    log: &ClickLog<F>,
    store: &ConversionStore<F>,
) -> Result<Box<dyn OnlineLearner<F> + Send>> {
    spec.train.validate()?;
    let r = spec.windows.full_window();
    let glm = || GlmModel::new(spec.kind, spec.hash_bits);
    Ok(match method {
        Method::Mhol => {
            let model = MultiHeadModel::new(spec.kind, spec.hash_bits, spec.windows.clone())?;
            let workers = if spec.workers == 0 { model.n_heads() } else { spec.workers };
            let state = StreamState::new(model.n_heads()).with_workers(workers);
            Box::new(MholLearner::new(model, spec.train).with_state(state))
        }
        Method::Naive => Box::new(NaiveLearner::new(glm()?, spec.train, log, store)),
        Method::Shifted => Box::new(ShiftedLearner::new(glm()?, spec.train, r)?),
        Method::Oracle => Box::new(OracleLearner::new(glm()?, spec.train, r)?),
    })
}

/// Progressive evaluation of each method over the final `eval_days`.
/// Methods run on separate threads; results come back in input order.
pub fn run_comparison<F: Scalar>(
    log: &ClickLog<F>,
    store: &ConversionStore<F>,
    methods: &[Method],
    spec: &RunSpec<F>,
) -> Result<Vec<EvalReport<F>>> {
    let horizon = EvalHorizon::from_log(log, spec.eval_days, spec.windows.full_window())?;
    let mut learners = methods
        .iter()
        .map(|&m| make_learner(m, spec, log, store))
        .collect::<Result<Vec<_>>>()?;
    let clamp = spec.train.clamp_eps;
    std::thread::scope(|s| {
        let handles: Vec<_> = learners
            .iter_mut()
            .map(|l| s.spawn(move || windowed_eval(log, store, l.as_mut(), &horizon, clamp)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::input("evaluation thread panicked"))))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_stream, GenConfig};
    use crate::features::FeatureConfig;
    use crate::quantizer::DAY;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("greedy".parse::<Method>().is_err());
    }

    #[test]
    fn comparison_is_deterministic() {
        let gen = GenConfig {
            n_clicks: 4_000,
            n_days: 12,
            window_days: 4,
            ..GenConfig::default()
        };
        let feats = FeatureConfig { hash_bits: 12, ..FeatureConfig::default() };
        let s = generate_stream::<f64>(&gen, &feats).unwrap();
        let spec = RunSpec {
            kind: GlmKind::Logistic,
            hash_bits: 12,
            windows: DelayWindows::from_days(&[1, 2, 4]).unwrap(),
            train: TrainConfig::default(),
            eval_days: 3,
            workers: 0,
        };
        let a = run_comparison(&s.log, &s.store, &Method::ALL, &spec).unwrap();
        let b = run_comparison(&s.log, &s.store, &Method::ALL, &spec).unwrap();
        assert_eq!(a, b);
        let names: Vec<&str> = a.iter().map(|r| r.model_name.as_str()).collect();
        assert_eq!(names, ["oracle", "mhol", "shifted", "naive"]);
        assert!(a.iter().all(|r| r.n_examples == a[0].n_examples && r.eval_window == (10, 12)));
        assert_eq!(spec.windows.full_window(), 4 * DAY);
    }
}
