//! Delay windows and per-window label quantization.
//!
//! The attribution window `(0, r]` is split at boundaries
//! `0 = t_0 < t_1 < ... < t_n = r` into half-open ranges `(t_{i-1}, t_i]`.
//! A conversion with delay `d` is credited to exactly the head whose range
//! contains `d`, so per-head labels always add back up to the full label.
//!
//! Heads are indexed from zero throughout the crate.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DAY: u64 = 86_400;

/// Ordered window boundaries in seconds, starting at 0 and ending at `r`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct DelayWindows {
    boundaries: Vec<u64>,
}

impl DelayWindows {
    pub fn new(boundaries: Vec<u64>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(Error::config("delay windows need at least one range"));
        }
        if boundaries[0] != 0 {
            return Err(Error::config("first window boundary must be 0"));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config(format!(
                "window boundaries must be strictly increasing: {boundaries:?}"
            )));
        }
        Ok(DelayWindows { boundaries })
    }

    /// Windows from upper boundaries given in whole days, e.g. `[1, 2, 5, 12, 30]`.
    pub fn from_days(days: &[u64]) -> Result<Self> {
        let mut b = vec![0];
        b.extend(days.iter().map(|d| d * DAY));
        DelayWindows::new(b)
    }

    /// A single window covering `(0, r]`.
    pub fn single(r: u64) -> Result<Self> {
        DelayWindows::new(vec![0, r])
    }

    pub fn boundaries(&self) -> &[u64] {
        &self.boundaries
    }

    pub fn n_heads(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// The full attribution window `r = t_n`.
    pub fn full_window(&self) -> u64 {
        *self.boundaries.last().unwrap()
    }

    /// How long head `i` waits after a click before its label is final.
    pub fn wait(&self, head: usize) -> u64 {
        self.boundaries[head + 1]
    }

    /// `(t_{i-1}, t_i]` for head `i`.
    pub fn range(&self, head: usize) -> (u64, u64) {
        (self.boundaries[head], self.boundaries[head + 1])
    }

    /// The head whose range contains `delay`, if any.
    pub fn head_of(&self, delay: u64) -> Option<usize> {
        if delay == 0 || delay > self.full_window() {
            return None;
        }
        // First boundary >= delay closes the owning range.
        Some(self.boundaries.partition_point(|&t| t < delay) - 1)
    }

    pub fn is_day_aligned(&self) -> bool {
        self.boundaries.iter().all(|t| t % DAY == 0)
    }

    /// Boundaries in whole days, when day aligned.
    pub fn days(&self) -> Option<Vec<u64>> {
        self.is_day_aligned()
            .then(|| self.boundaries.iter().map(|t| t / DAY).collect())
    }
}

impl TryFrom<Vec<u64>> for DelayWindows {
    type Error = Error;

    fn try_from(b: Vec<u64>) -> Result<Self> {
        DelayWindows::new(b)
    }
}

impl From<DelayWindows> for Vec<u64> {
    fn from(w: DelayWindows) -> Self {
        w.boundaries
    }
}

impl fmt::Display for DelayWindows {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.boundaries.iter().map(|b| b.to_string()).collect();
        f.write_str(&parts.join(" "))
    }
}

/// Full and per-head labels of one click.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedLabels<F> {
    pub y: u8,
    pub v: F,
    pub ys: Vec<u8>,
    pub vs: Vec<F>,
}

impl<F: Scalar> QuantizedLabels<F> {
    /// The head a conversion was credited to.
    pub fn head(&self) -> Option<usize> {
        self.ys.iter().position(|&y| y == 1)
    }

    /// Label for head `i`: the binary indicator or the value.
    pub fn label(&self, head: usize, kind: crate::glm::GlmKind) -> F {
        match kind {
            crate::glm::GlmKind::Logistic => F::from_u8(self.ys[head]).unwrap(),
            crate::glm::GlmKind::Linear => self.vs[head],
        }
    }

    /// Full-window label.
    pub fn full_label(&self, kind: crate::glm::GlmKind) -> F {
        match kind {
            crate::glm::GlmKind::Logistic => F::from_u8(self.y).unwrap(),
            crate::glm::GlmKind::Linear => self.v,
        }
    }
}

/// Splits a click's conversion into per-window labels.
pub fn quantize<F: Scalar>(delay: Option<u64>, value: Option<F>, windows: &DelayWindows) -> Result<QuantizedLabels<F>> {
    let n = windows.n_heads();
    let mut labels = QuantizedLabels {
        y: 0,
        v: F::zero(),
        ys: vec![0; n],
        vs: vec![F::zero(); n],
    };
    match (delay, value) {
        (None, None) => Ok(labels),
        (Some(d), Some(v)) => {
            let head = windows.head_of(d).ok_or_else(|| {
                Error::input(format!("delay {d}s outside (0, {}]", windows.full_window()))
            })?;
            if !(v.is_finite() && v >= F::zero()) {
                return Err(Error::input(format!("conversion value {v} must be finite and non-negative")));
            }
            labels.y = 1;
            labels.v = v;
            labels.ys[head] = 1;
            labels.vs[head] = v;
            Ok(labels)
        }
        _ => Err(Error::input("conversion delay and value must both be present or both absent")),
    }
}

/// How quantile boundaries are rounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnapPolicy {
    /// Use raw empirical quantiles (streaming mode).
    Raw,
    /// Round boundaries up to whole days (daily batch mode).
    Day,
}

/// Picks boundaries so each of the `n` windows holds about the same number
/// of observed conversions.
///
/// Boundary `k` is the empirical `k/n` quantile of `delays`. When two
/// quantiles coincide the later one moves to the next distinct observed
/// delay (or next whole day under [`SnapPolicy::Day`]).
pub fn design_windows(delays: &[u64], n: usize, r: u64, snap: SnapPolicy) -> Result<DelayWindows> {
    if n == 0 {
        return Err(Error::config("need at least one head"));
    }
    if delays.is_empty() {
        return Err(Error::input("no delays to design windows from"));
    }
    if let Some(d) = delays.iter().find(|&&d| d == 0 || d > r) {
        return Err(Error::input(format!("delay {d} outside (0, {r}]")));
    }
    if snap == SnapPolicy::Day && !r.is_multiple_of(DAY) {
        return Err(Error::config("day-snapped windows need a whole-day attribution window"));
    }
    let mut sorted = delays.to_vec();
    sorted.sort_unstable();
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < n {
        return Err(Error::input(format!(
            "only {} distinct delays; cannot form {n} windows, use fewer heads",
            distinct.len()
        )));
    }

    let total = sorted.len();
    let mut boundaries = vec![0u64];
    for k in 1..n {
        // Lower empirical quantile: smallest d with at least k/n of mass <= d.
        let rank = (k * total).div_ceil(n);
        let mut t = sorted[rank.max(1) - 1];
        let prev = *boundaries.last().unwrap();
        if snap == SnapPolicy::Day {
            t = t.div_ceil(DAY) * DAY;
            if t <= prev {
                t = prev + DAY;
            }
        } else if t <= prev {
            let next = distinct.partition_point(|&d| d <= prev);
            t = *distinct
                .get(next)
                .ok_or_else(|| Error::input(format!("delays too concentrated for {n} windows, use fewer heads")))?;
        }
        if t >= r {
            return Err(Error::input(format!(
                "delays too concentrated for {n} windows, use fewer heads"
            )));
        }
        boundaries.push(t);
    }
    boundaries.push(r);
    DelayWindows::new(boundaries)
}

/// Fraction of `delays` falling in each window.
pub fn head_share(delays: &[u64], windows: &DelayWindows) -> Result<Vec<f64>> {
    if delays.is_empty() {
        return Err(Error::input("no delays"));
    }
    let mut counts = vec![0usize; windows.n_heads()];
    for &d in delays {
        let h = windows
            .head_of(d)
            .ok_or_else(|| Error::input(format!("delay {d} outside (0, {}]", windows.full_window())))?;
        counts[h] += 1;
    }
    let total = delays.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / total).collect())
}
