//! Single-model reference trainers.
//!
//! * naive: every click is a negative at click time and every conversion an
//!   extra positive when it happens.
//! * shifted: each click is trained once with its final label, after the
//!   full attribution window has passed.
//! * oracle: each click is trained once with its final label at click time.

use crate::error::Result;
use crate::features::SparseVector;
use crate::glm::{GlmKind, GlmModel, TrainConfig};
use crate::learner::OnlineLearner;
use crate::quantizer::DelayWindows;
use crate::scalar::Scalar;
use crate::stream::{ClickLog, ConversionStore};

pub struct NaiveLearner<F> {
    pub model: GlmModel<F>,
    cfg: TrainConfig<F>,
    next_click: usize,
    /// `(conversion_ts, click index, value)` in time order.
    positives: Vec<(u64, usize, F)>,
    next_positive: usize,
    events: u64,
}

impl<F: Scalar> NaiveLearner<F> {
    pub fn new(model: GlmModel<F>, cfg: TrainConfig<F>, log: &ClickLog<F>, store: &ConversionStore<F>) -> Self {
        let mut positives: Vec<(u64, usize, F)> = log
            .clicks()
            .iter()
            .enumerate()
            .filter_map(|(i, c)| store.get(&c.click_id).map(|(d, v)| (c.click_ts + d, i, v)))
            .collect();
        positives.sort_by_key(|&(t, i, _)| (t, i));
        NaiveLearner {
            model,
            cfg,
            next_click: 0,
            positives,
            next_positive: 0,
            events: 0,
        }
    }

    fn positive_label(&self, value: F) -> F {
        match self.model.kind() {
            GlmKind::Logistic => F::one(),
            GlmKind::Linear => value,
        }
    }
}

impl<F: Scalar> OnlineLearner<F> for NaiveLearner<F> {
    fn name(&self) -> &str {
        "naive"
    }

    fn kind(&self) -> GlmKind {
        self.model.kind()
    }

    fn catch_up(&mut self, log: &ClickLog<F>, _store: &ConversionStore<F>, clock: u64, upto: usize) -> Result<()> {
        let upto = upto.min(log.len());
        loop {
            let neg = (self.next_click < upto)
                .then(|| log.get(self.next_click).click_ts)
                .filter(|&t| t <= clock);
            let pos = self
                .positives
                .get(self.next_positive)
                .filter(|&&(t, i, _)| t <= clock && i < upto)
                .map(|&(t, _, _)| t);
            // Merge by time; a negative at the same instant goes first.
            let take_negative = match (neg, pos) {
                (None, None) => break,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (Some(n), Some(p)) => n <= p,
            };
            if take_negative {
                let c = log.get(self.next_click);
                self.model.sgd_step(&c.x, F::zero(), &self.cfg)?;
                self.next_click += 1;
            } else {
                let (_, i, v) = self.positives[self.next_positive];
                let label = self.positive_label(v);
                self.model.sgd_step(&log.get(i).x, label, &self.cfg)?;
                self.next_positive += 1;
            }
            self.events += 1;
        }
        Ok(())
    }

    fn predict(&self, x: &SparseVector<F>) -> F {
        self.model.predict(x)
    }

    fn events(&self) -> u64 {
        self.events
    }
}

pub struct ShiftedLearner<F> {
    pub model: GlmModel<F>,
    cfg: TrainConfig<F>,
    window: DelayWindows,
    cursor: usize,
}

impl<F: Scalar> ShiftedLearner<F> {
    pub fn new(model: GlmModel<F>, cfg: TrainConfig<F>, r: u64) -> Result<Self> {
        Ok(ShiftedLearner {
            model,
            cfg,
            window: DelayWindows::single(r)?,
            cursor: 0,
        })
    }
}

impl<F: Scalar> OnlineLearner<F> for ShiftedLearner<F> {
    fn name(&self) -> &str {
        "shifted"
    }

    fn kind(&self) -> GlmKind {
        self.model.kind()
    }

    fn catch_up(&mut self, log: &ClickLog<F>, store: &ConversionStore<F>, clock: u64, upto: usize) -> Result<()> {
        let r = self.window.full_window();
        while self.cursor < upto.min(log.len()) {
            let c = log.get(self.cursor);
            if c.click_ts.saturating_add(r) > clock {
                break;
            }
            let label = store.labels(&c.click_id, &self.window)?.full_label(self.model.kind());
            self.model.sgd_step(&c.x, label, &self.cfg)?;
            self.cursor += 1;
        }
        Ok(())
    }

    fn predict(&self, x: &SparseVector<F>) -> F {
        self.model.predict(x)
    }

    fn events(&self) -> u64 {
        self.cursor as u64
    }
}

pub struct OracleLearner<F> {
    pub model: GlmModel<F>,
    cfg: TrainConfig<F>,
    window: DelayWindows,
    cursor: usize,
}

impl<F: Scalar> OracleLearner<F> {
    pub fn new(model: GlmModel<F>, cfg: TrainConfig<F>, r: u64) -> Result<Self> {
        Ok(OracleLearner {
            model,
            cfg,
            window: DelayWindows::single(r)?,
            cursor: 0,
        })
    }
}

impl<F: Scalar> OnlineLearner<F> for OracleLearner<F> {
    fn name(&self) -> &str {
        "oracle"
    }

    fn kind(&self) -> GlmKind {
        self.model.kind()
    }

    fn catch_up(&mut self, log: &ClickLog<F>, store: &ConversionStore<F>, clock: u64, upto: usize) -> Result<()> {
        while self.cursor < upto.min(log.len()) {
            let c = log.get(self.cursor);
            if c.click_ts > clock {
                break;
            }
            let label = store.labels(&c.click_id, &self.window)?.full_label(self.model.kind());
            self.model.sgd_step(&c.x, label, &self.cfg)?;
            self.cursor += 1;
        }
        Ok(())
    }

    fn predict(&self, x: &SparseVector<F>) -> F {
        self.model.predict(x)
    }

    fn events(&self) -> u64 {
        self.cursor as u64
    }
}

/// Trains a naive model over the whole log; returns the number of updates.
pub fn train_naive<F: Scalar>(
    log: &ClickLog<F>,
    store: &ConversionStore<F>,
    model: GlmModel<F>,
    cfg: &TrainConfig<F>,
) -> Result<(GlmModel<F>, u64)> {
    let mut l = NaiveLearner::new(model, *cfg, log, store);
    l.catch_up(log, store, u64::MAX, log.len())?;
    Ok((l.model, l.events))
}

/// Trains a shifted model on every click matured by `until`.
pub fn train_shifted<F: Scalar>(
    log: &ClickLog<F>,
    store: &ConversionStore<F>,
    model: GlmModel<F>,
    cfg: &TrainConfig<F>,
    r: u64,
    until: u64,
) -> Result<(GlmModel<F>, u64)> {
    let mut l = ShiftedLearner::new(model, *cfg, r)?;
    l.catch_up(log, store, until, log.len())?;
    let n = l.events();
    Ok((l.model, n))
}

/// Trains an oracle model on every click, each at its own click time.
pub fn train_oracle<F: Scalar>(
    log: &ClickLog<F>,
    store: &ConversionStore<F>,
    model: GlmModel<F>,
    cfg: &TrainConfig<F>,
    r: u64,
) -> Result<(GlmModel<F>, u64)> {
    let mut l = OracleLearner::new(model, *cfg, r)?;
    l.catch_up(log, store, u64::MAX, log.len())?;
    let n = l.events();
    Ok((l.model, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::DAY;
    use crate::stream::Click;

    fn fixture(n: usize, every: usize) -> (ClickLog<f64>, ConversionStore<f64>) {
        let mut log = ClickLog::new();
        let mut store = ConversionStore::new();
        for i in 0..n {
            let id = format!("c{i}");
            log.push(Click {
                click_id: id.clone(),
                click_ts: i as u64 * 3600,
                x: SparseVector::from_terms(vec![((i % 11) as u32, 1.0)]).unwrap(),
            })
            .unwrap();
            if i % every == 0 {
                store.insert(&id, DAY / 2 + i as u64, 2.0).unwrap();
            }
        }
        (log, store)
    }

    fn model(kind: GlmKind) -> GlmModel<f64> {
        GlmModel::new(kind, 4).unwrap()
    }

    #[test]
    fn naive_event_counts() {
        let (log, store) = fixture(100, 5);
        assert_eq!(store.len(), 20);
        let (_, events) = train_naive(&log, &store, model(GlmKind::Logistic), &TrainConfig::default()).unwrap();
        assert_eq!(events, 120);
        // One converting click: a negative and a positive.
        let (log, store) = fixture(1, 1);
        assert_eq!(train_naive(&log, &store, model(GlmKind::Linear), &TrainConfig::default()).unwrap().1, 2);
        // One non-converting click: a single negative.
        let empty = ConversionStore::new();
        assert_eq!(train_naive(&log, &empty, model(GlmKind::Linear), &TrainConfig::default()).unwrap().1, 1);
    }

    #[test]
    fn naive_positive_arrives_after_delay() {
        let (log, store) = fixture(1, 1);
        let mut l = NaiveLearner::new(model(GlmKind::Logistic), TrainConfig::default(), &log, &store);
        l.catch_up(&log, &store, 0, 1).unwrap();
        assert_eq!(l.events(), 1);
        l.catch_up(&log, &store, DAY / 2 - 1, 1).unwrap();
        assert_eq!(l.events(), 1);
        l.catch_up(&log, &store, DAY / 2, 1).unwrap();
        assert_eq!(l.events(), 2);
    }

    #[test]
    fn shifted_waits_full_window() {
        let (log, store) = fixture(1, 1);
        let mut l = ShiftedLearner::new(model(GlmKind::Logistic), TrainConfig::default(), 30 * DAY).unwrap();
        l.catch_up(&log, &store, 30 * DAY - 1, 1).unwrap();
        assert_eq!(l.events(), 0);
        l.catch_up(&log, &store, 30 * DAY, 1).unwrap();
        assert_eq!(l.events(), 1);
        assert!(l.predict(&log.get(0).x) > 0.5);
    }

    #[test]
    fn shifted_skips_immature_tail() {
        // 100 hourly clicks; with r = 2 days and the horizon at the last click,
        // only clicks older than 48 hours are released.
        let (log, store) = fixture(100, 5);
        let until = log.last_ts().unwrap();
        let (_, n) = train_shifted(&log, &store, model(GlmKind::Logistic), &TrainConfig::default(), 2 * DAY, until).unwrap();
        assert_eq!(n, 100 - 48);
    }

    #[test]
    fn oracle_trains_at_click_time() {
        let (log, store) = fixture(3, 1);
        let mut l = OracleLearner::new(model(GlmKind::Logistic), TrainConfig::default(), 30 * DAY).unwrap();
        l.catch_up(&log, &store, 0, 1).unwrap();
        assert_eq!(l.events(), 1);
        assert!(l.predict(&log.get(0).x) > 0.5);
        // Never trains a click at or after `upto`.
        l.catch_up(&log, &store, 10 * DAY, 2).unwrap();
        assert_eq!(l.events(), 2);
        let (_, n) = train_oracle(&log, &store, model(GlmKind::Logistic), &TrainConfig::default(), 30 * DAY).unwrap();
        assert_eq!(n, 3);
    }
}
