//! One GLM head per delay window, combined by summation.
//!
//! Head `i` learns the probability (or value) of a conversion landing in
//! window `i`. Because the windows partition the attribution window, the
//! full-window prediction is the sum of the head outputs. For logistic heads
//! the sum of sigmoids is not bounded by 1; the raw sum is kept and callers
//! clamp it before computing log loss.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::SparseVector;
use crate::glm::{clamp_probability, GlmKind, GlmModel, TrainConfig};
use crate::quantizer::{DelayWindows, QuantizedLabels};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct MultiHeadModel<F> {
    windows: DelayWindows,
    heads: Vec<GlmModel<F>>,
    /// Clamp the combined CVR into `[eps, 1 - eps]` when scoring.
    pub combine_clamp: bool,
    /// Floor the combined VPC at zero when serving.
    pub floor_vpc: bool,
}

impl<F: Scalar> MultiHeadModel<F> {
    pub fn new(kind: GlmKind, hash_bits: u32, windows: DelayWindows) -> Result<Self> {
        let heads = (0..windows.n_heads())
            .map(|_| GlmModel::new(kind, hash_bits))
            .collect::<Result<Vec<_>>>()?;
        Ok(MultiHeadModel {
            windows,
            heads,
            combine_clamp: true,
            floor_vpc: false,
        })
    }

    pub fn from_heads(windows: DelayWindows, heads: Vec<GlmModel<F>>) -> Result<Self> {
        if heads.len() != windows.n_heads() {
            return Err(Error::config(format!(
                "{} heads for {} windows",
                heads.len(),
                windows.n_heads()
            )));
        }
        let first = &heads[0];
        if heads
            .iter()
            .any(|h| h.kind() != first.kind() || h.hash_bits() != first.hash_bits())
        {
            return Err(Error::config("all heads must share kind and hash_bits"));
        }
        Ok(MultiHeadModel {
            windows,
            heads,
            combine_clamp: true,
            floor_vpc: false,
        })
    }

    pub fn windows(&self) -> &DelayWindows {
        &self.windows
    }

    pub fn heads(&self) -> &[GlmModel<F>] {
        &self.heads
    }

    pub fn head(&self, i: usize) -> &GlmModel<F> {
        &self.heads[i]
    }

    pub fn head_mut(&mut self, i: usize) -> &mut GlmModel<F> {
        &mut self.heads[i]
    }

    pub(crate) fn heads_mut(&mut self) -> &mut [GlmModel<F>] {
        &mut self.heads
    }

    pub fn n_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn kind(&self) -> GlmKind {
        self.heads[0].kind()
    }

    pub fn hash_bits(&self) -> u32 {
        self.heads[0].hash_bits()
    }

    /// Trains head `head` on its own window label; other heads are untouched.
    pub fn train_example(
        &mut self,
        head: usize,
        x: &SparseVector<F>,
        labels: &QuantizedLabels<F>,
        cfg: &TrainConfig<F>,
    ) -> Result<()> {
        if head >= self.heads.len() {
            return Err(Error::input(format!("head {head} out of range 0..{}", self.heads.len())));
        }
        if labels.ys.len() != self.heads.len() {
            return Err(Error::input("labels were quantized with different windows"));
        }
        let kind = self.kind();
        self.heads[head].sgd_step(x, labels.label(head, kind), cfg)
    }

    /// Sum of head probabilities. May exceed 1.
    pub fn predict_cvr(&self, x: &SparseVector<F>) -> F {
        debug_assert_eq!(self.kind(), GlmKind::Logistic);
        self.heads.iter().fold(F::zero(), |acc, h| acc + h.predict(x))
    }

    /// Combined CVR as used for log loss.
    pub fn predict_cvr_scored(&self, x: &SparseVector<F>, clamp_eps: F) -> F {
        let raw = self.predict_cvr(x);
        if self.combine_clamp {
            clamp_probability(raw, clamp_eps)
        } else {
            raw
        }
    }

    /// Sum of head values `Σ (w_i·x + b_i)`.
    pub fn predict_vpc(&self, x: &SparseVector<F>) -> F {
        debug_assert_eq!(self.kind(), GlmKind::Linear);
        self.heads.iter().fold(F::zero(), |acc, h| acc + h.predict(x))
    }

    /// Combined VPC for serving, floored at zero when `floor_vpc` is set.
    pub fn serve_vpc(&self, x: &SparseVector<F>) -> F {
        let v = self.predict_vpc(x);
        if self.floor_vpc {
            v.max(F::zero())
        } else {
            v
        }
    }

    /// Raw combined output for either kind.
    pub fn predict(&self, x: &SparseVector<F>) -> F {
        self.heads.iter().fold(F::zero(), |acc, h| acc + h.predict(x))
    }

    /// Collapses linear heads into one model with summed weights and
    /// intercepts. Its prediction equals [`predict_vpc`](Self::predict_vpc)
    /// up to rounding. Optimizer state is not carried over.
    pub fn merged_linear(&self) -> Result<GlmModel<F>> {
        if self.kind() != GlmKind::Linear {
            return Err(Error::input("only linear heads can be merged"));
        }
        let mut merged = GlmModel::new(GlmKind::Linear, self.hash_bits())?;
        let dim = self.heads[0].weights().len();
        for j in 0..dim {
            let w = self.heads.iter().fold(F::zero(), |acc, h| acc + h.weights()[j]);
            if !w.is_zero() {
                merged.set_weight(j, w);
            }
        }
        merged.set_bias(self.heads.iter().fold(F::zero(), |acc, h| acc + h.bias()));
        Ok(merged)
    }

    /// Writes `manifest.txt` plus one `head_<i>.ckpt` per head into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut manifest = BufWriter::new(fs::File::create(dir.join("manifest.txt"))?);
        writeln!(manifest, "mhol-multihead 1")?;
        writeln!(manifest, "kind {}", self.kind().as_str())?;
        writeln!(manifest, "windows {}", self.windows)?;
        writeln!(manifest, "heads {}", self.heads.len())?;
        for (i, h) in self.heads.iter().enumerate() {
            let name = format!("head_{i}.ckpt");
            writeln!(manifest, "{name}")?;
            h.write_checkpoint(BufWriter::new(fs::File::create(dir.join(&name))?))?;
        }
        manifest.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join("manifest.txt"))?;
        let mut lines = text.lines();
        let bad = |msg: &str| Error::input(format!("{}: {msg}", dir.join("manifest.txt").display()));
        if lines.next() != Some("mhol-multihead 1") {
            return Err(bad("not a version 1 multi-head manifest"));
        }
        let kind = lines
            .next()
            .and_then(|l| l.strip_prefix("kind "))
            .ok_or_else(|| bad("missing kind"))
            .and_then(|k| GlmKind::parse(k.trim()))?;
        let windows = lines
            .next()
            .and_then(|l| l.strip_prefix("windows "))
            .ok_or_else(|| bad("missing windows"))?
            .split_whitespace()
            .map(|t| t.parse::<u64>().map_err(|_| bad("bad window boundary")))
            .collect::<Result<Vec<_>>>()
            .and_then(DelayWindows::new)?;
        let n: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("heads "))
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| bad("missing head count"))?;
        let mut heads = Vec::with_capacity(n);
        for _ in 0..n {
            let name = lines.next().ok_or_else(|| bad("missing head file"))?;
            let head = GlmModel::read_checkpoint(BufReader::new(fs::File::open(dir.join(name.trim()))?))?;
            if head.kind() != kind {
                return Err(bad("head kind disagrees with manifest"));
            }
            heads.push(head);
        }
        MultiHeadModel::from_heads(windows, heads)
    }
}

/// Value per click from a conversion rate and an expected conversion value.
#[inline]
pub fn compose_vpc<F: Scalar>(cvr: F, cv: F) -> F {
    debug_assert!(cvr >= F::zero() && cvr <= F::one() && cv >= F::zero());
    cvr * cv
}
