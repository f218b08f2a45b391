//! Single-head generalized linear models trained online with Adam.
//!
//! A logistic head predicts a conversion probability and is fit on log loss;
//! a linear head predicts a value and is fit on squared error. Weights are a
//! dense array over the hashed feature space. Each update touches only the
//! coordinates present in the example, and L2 shrinkage is applied to those
//! coordinates alone (the intercept is not regularized).

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{SparseVector, MAX_HASH_BITS};
use crate::scalar::{sigmoid, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlmKind {
    Logistic,
    Linear,
}

impl GlmKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GlmKind::Logistic => "logistic",
            GlmKind::Linear => "linear",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(GlmKind::Logistic),
            "linear" => Ok(GlmKind::Linear),
            _ => Err(Error::input(format!("unknown model kind {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound = "F: Scalar + Serialize + for<'a> Deserialize<'a>")]
pub struct TrainConfig<F> {
    pub learning_rate: F,
    pub beta1: F,
    pub beta2: F,
    pub epsilon: F,
    pub l2_lambda: F,
    /// Probability floor used when computing log loss.
    pub clamp_eps: F,
    pub fit_intercept: bool,
}

impl<F: Scalar> Default for TrainConfig<F> {
    fn default() -> Self {
        TrainConfig {
            learning_rate: F::cast(0.01),
            beta1: F::cast(0.9),
            beta2: F::cast(0.999),
            epsilon: F::cast(1e-8),
            l2_lambda: F::cast(1e-6),
            clamp_eps: F::cast(1e-6),
            fit_intercept: true,
        }
    }
}

impl<F: Scalar> TrainConfig<F> {
    pub fn validate(&self) -> Result<()> {
        let open01 = |x: F| x > F::zero() && x < F::one();
        // A zero learning rate is allowed for frozen-model runs.
        if !(self.learning_rate >= F::zero() && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be a finite non-negative number"));
        }
        if !open01(self.beta1) || !open01(self.beta2) {
            return Err(Error::config("beta1 and beta2 must lie in (0, 1)"));
        }
        if !(self.epsilon > F::zero() && self.epsilon.is_finite()) {
            return Err(Error::config("epsilon must be positive"));
        }
        if !(self.l2_lambda >= F::zero() && self.l2_lambda.is_finite()) {
            return Err(Error::config("l2_lambda must be non-negative"));
        }
        if !(self.clamp_eps > F::zero() && self.clamp_eps < F::half()) {
            return Err(Error::config("clamp_eps must lie in (0, 0.5)"));
        }
        Ok(())
    }
}

/// Clamps a probability into `[eps, 1 - eps]`.
#[inline]
pub fn clamp_probability<F: Scalar>(p: F, eps: F) -> F {
    p.max(eps).min(F::one() - eps)
}

#[inline]
pub fn log_loss<F: Scalar>(p: F, y: F, eps: F) -> F {
    let p = clamp_probability(p, eps);
    -(y * p.ln() + (F::one() - y) * (F::one() - p).ln())
}

/// One head: weights, intercept and Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct GlmModel<F> {
    kind: GlmKind,
    hash_bits: u32,
    weights: Vec<F>,
    bias: F,
    m: Vec<F>,
    v: Vec<F>,
    bias_m: F,
    bias_v: F,
    step: u64,
}

impl<F: Scalar> GlmModel<F> {
    pub fn new(kind: GlmKind, hash_bits: u32) -> Result<Self> {
        if !(1..=MAX_HASH_BITS).contains(&hash_bits) {
            return Err(Error::config(format!("hash_bits must be in [1, {MAX_HASH_BITS}]")));
        }
        let dim = 1usize << hash_bits;
        Ok(GlmModel {
            kind,
            hash_bits,
            weights: vec![F::zero(); dim],
            bias: F::zero(),
            m: vec![F::zero(); dim],
            v: vec![F::zero(); dim],
            bias_m: F::zero(),
            bias_v: F::zero(),
            step: 0,
        })
    }

    pub fn kind(&self) -> GlmKind {
        self.kind
    }

    pub fn hash_bits(&self) -> u32 {
        self.hash_bits
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    pub fn bias(&self) -> F {
        self.bias
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[F], &[F]) {
        (&self.m, &self.v)
    }

    pub fn set_bias(&mut self, bias: F) {
        self.bias = bias;
    }

    pub fn set_weight(&mut self, index: usize, w: F) {
        self.weights[index] = w;
    }

    /// Linear score `w·x + b`.
    #[inline]
    pub fn margin(&self, x: &SparseVector<F>) -> F {
        x.dot(&self.weights) + self.bias
    }

    /// Probability for a logistic head, value for a linear head.
    #[inline]
    pub fn predict(&self, x: &SparseVector<F>) -> F {
        let z = self.margin(x);
        match self.kind {
            GlmKind::Logistic => sigmoid(z),
            GlmKind::Linear => z,
        }
    }

    pub fn loss(&self, x: &SparseVector<F>, label: F, clamp_eps: F) -> F {
        let pred = self.predict(x);
        match self.kind {
            GlmKind::Logistic => log_loss(pred, label, clamp_eps),
            GlmKind::Linear => (label - pred) * (label - pred),
        }
    }

    /// Per-example loss plus `l2/2 · Σ w_j²` over the coordinates in `x`.
    pub fn objective(&self, x: &SparseVector<F>, label: F, l2: F, clamp_eps: F) -> F {
        let reg = x
            .iter()
            .fold(F::zero(), |acc, (j, _)| acc + self.weights[j] * self.weights[j]);
        self.loss(x, label, clamp_eps) + l2 * F::half() * reg
    }

    /// Derivative of the loss with respect to the margin.
    #[inline]
    fn margin_gradient(&self, x: &SparseVector<F>, label: F) -> F {
        let pred = self.predict(x);
        match self.kind {
            GlmKind::Logistic => pred - label,
            GlmKind::Linear => F::two() * (pred - label),
        }
    }

    /// Gradient of [`objective`](Self::objective): one entry per coordinate of
    /// `x` (in `x` order) and the intercept gradient.
    pub fn gradient(&self, x: &SparseVector<F>, label: F, l2: F) -> (Vec<F>, F) {
        let dz = self.margin_gradient(x, label);
        let gw = x.iter().map(|(j, xj)| dz * xj + l2 * self.weights[j]).collect();
        (gw, dz)
    }

    /// One Adam update on a single example.
    ///
    /// Only coordinates in `x` (and the intercept, when fitted) change. The
    /// step counter advances once per call. Nothing is written if any
    /// updated value would be non-finite.
    pub fn sgd_step(&mut self, x: &SparseVector<F>, label: F, cfg: &TrainConfig<F>) -> Result<()> {
        let dz = self.margin_gradient(x, label);
        let t = self.step + 1;
        let c1 = F::one() - powu(cfg.beta1, t);
        let c2 = F::one() - powu(cfg.beta2, t);
        let one = F::one();

        let adam = |g: F, m: F, v: F, w: F| {
            let m = cfg.beta1 * m + (one - cfg.beta1) * g;
            let v = cfg.beta2 * v + (one - cfg.beta2) * g * g;
            let w = w - cfg.learning_rate * (m / c1) / ((v / c2).sqrt() + cfg.epsilon);
            (w, m, v)
        };

        let mut staged: Vec<(usize, F, F, F)> = Vec::with_capacity(x.len());
        for (j, xj) in x.iter() {
            let g = dz * xj + cfg.l2_lambda * self.weights[j];
            let (w, m, v) = adam(g, self.m[j], self.v[j], self.weights[j]);
            if !(w.is_finite() && m.is_finite() && v.is_finite()) {
                return Err(Error::Divergence { coord: Some(j as u32) });
            }
            staged.push((j, w, m, v));
        }
        let bias = if cfg.fit_intercept {
            let (b, m, v) = adam(dz, self.bias_m, self.bias_v, self.bias);
            if !(b.is_finite() && m.is_finite() && v.is_finite()) {
                return Err(Error::Divergence { coord: None });
            }
            Some((b, m, v))
        } else {
            None
        };

        for (j, w, m, v) in staged {
            self.weights[j] = w;
            self.m[j] = m;
            self.v[j] = v;
        }
        if let Some((b, m, v)) = bias {
            self.bias = b;
            self.bias_m = m;
            self.bias_v = v;
        }
        self.step = t;
        Ok(())
    }

    /// Writes the text checkpoint: a header, then one line per coordinate
    /// whose weight or moments are non-zero.
    ///
    /// ```text
    /// mhol-glm 1
    /// kind logistic
    /// hash_bits 16
    /// step 42
    /// bias <w> <m> <v>
    /// entries <count>
    /// <index> <w> <m> <v>
    /// ```
    ///
    /// Numbers are printed in shortest round-trip form, so reading a
    /// checkpoint back reproduces the model bit for bit.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "mhol-glm 1")?;
        writeln!(out, "kind {}", self.kind.as_str())?;
        writeln!(out, "hash_bits {}", self.hash_bits)?;
        writeln!(out, "step {}", self.step)?;
        writeln!(out, "bias {} {} {}", self.bias, self.bias_m, self.bias_v)?;
        let nz: Vec<usize> = (0..self.weights.len())
            .filter(|&j| !(self.weights[j].is_zero() && self.m[j].is_zero() && self.v[j].is_zero()))
            .collect();
        writeln!(out, "entries {}", nz.len())?;
        for j in nz {
            writeln!(out, "{j} {} {} {}", self.weights[j], self.m[j], self.v[j])?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, l)) => Ok((i + 1, l?)),
                None => Err(Error::input(format!("checkpoint truncated before {what}"))),
            }
        };
        let bad = |line: usize, msg: &str| Error::Parse { line, msg: msg.to_string() };

        let (n, header) = next("header")?;
        if header.trim() != "mhol-glm 1" {
            return Err(bad(n, "not a version 1 glm checkpoint"));
        }
        let mut keyed = |key: &str| -> Result<(usize, String)> {
            let (n, l) = next(key)?;
            let rest = l
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .ok_or_else(|| bad(n, &format!("expected `{key}`")))?;
            Ok((n, rest.to_string()))
        };
        let (_, kind) = keyed("kind")?;
        let kind = GlmKind::parse(kind.trim())?;
        let (n, bits) = keyed("hash_bits")?;
        let bits = bits.trim().parse::<u32>().map_err(|_| bad(n, "bad hash_bits"))?;
        let mut model = GlmModel::new(kind, bits)?;
        let (n, step) = keyed("step")?;
        model.step = step.trim().parse().map_err(|_| bad(n, "bad step"))?;
        let (n, bias) = keyed("bias")?;
        let [b, bm, bv] = parse_floats::<F, 3>(&bias).ok_or_else(|| bad(n, "bad bias line"))?;
        (model.bias, model.bias_m, model.bias_v) = (b, bm, bv);
        let (n, count) = keyed("entries")?;
        let count: usize = count.trim().parse().map_err(|_| bad(n, "bad entry count"))?;
        for _ in 0..count {
            let (n, l) = next("entry")?;
            let (idx, rest) = l.split_once(' ').ok_or_else(|| bad(n, "bad entry"))?;
            let j: usize = idx.parse().map_err(|_| bad(n, "bad entry index"))?;
            if j >= model.weights.len() {
                return Err(bad(n, "entry index out of range"));
            }
            let [w, m, v] = parse_floats::<F, 3>(rest).ok_or_else(|| bad(n, "bad entry values"))?;
            model.weights[j] = w;
            model.m[j] = m;
            model.v[j] = v;
        }
        Ok(model)
    }
}

fn parse_floats<F: Scalar, const N: usize>(s: &str) -> Option<[F; N]> {
    let mut out = [F::zero(); N];
    let mut it = s.split_whitespace();
    for slot in out.iter_mut() {
        *slot = it.next()?.parse::<F>().ok()?;
        if !slot.is_finite() {
            return None;
        }
    }
    it.next().is_none().then_some(out)
}

fn powu<F: Scalar>(base: F, exp: u64) -> F {
    match i32::try_from(exp) {
        Ok(e) => base.powi(e),
        Err(_) => base.powf(F::from_u64(exp).unwrap()),
    }
}
