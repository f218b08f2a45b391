//! Synthetic click streams with delayed, valued conversions.
//!
//! Clicks are spread evenly (with jitter) over the horizon. Each click draws
//! one value per categorical field; the true conversion log-odds are an
//! intercept plus one additive effect per field value, so every learner here
//! is well specified. Optional drift moves the intercept linearly in time.
//! Delays come from a mixture of exponentials truncated to `(0, r]` and
//! values from a log-normal.
//!
//! Randomness is drawn from ChaCha streams keyed by block of clicks, so a
//! given seed always yields the same data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{featurize, FeatureConfig, RawRecord};
use crate::quantizer::DAY;
use crate::scalar::{sigmoid, Scalar};
use crate::stream::{Click, ClickLog, ConversionStore};

/// One exponential component of the delay mixture, rate in 1/days.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayComponent {
    pub weight: f64,
    pub rate_per_day: f64,
}

/// Mixture of exponentials, each truncated to `(0, r]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayMixture {
    pub components: Vec<DelayComponent>,
    pub window_days: f64,
}

impl DelayMixture {
    /// Analytic CDF at `d` days.
    pub fn cdf(&self, d: f64) -> f64 {
        let r = self.window_days;
        if d <= 0.0 {
            return 0.0;
        }
        if d >= r {
            return 1.0;
        }
        self.components
            .iter()
            .map(|c| c.weight * (-(-c.rate_per_day * d).exp_m1()) / (-(-c.rate_per_day * r).exp_m1()))
            .sum()
    }

    /// Inverse-CDF draw from a truncated component, in days.
    fn sample_days<R: Rng>(&self, rng: &mut R) -> f64 {
        let mut u = rng.random::<f64>();
        let mut comp = self.components.last().unwrap();
        for c in &self.components {
            if u < c.weight {
                comp = c;
                break;
            }
            u -= c.weight;
        }
        let mass = -(-comp.rate_per_day * self.window_days).exp_m1();
        let v = rng.random::<f64>();
        -(-v * mass).ln_1p() / comp.rate_per_day
    }
}

/// One categorical field of the synthetic feature space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub cardinality: u32,
    /// Standard deviation of the per-value log-odds effects.
    pub logit_scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_clicks: usize,
    pub n_days: u64,
    /// Attribution window `r` in days.
    pub window_days: u64,
    /// Mean conversion rate at the start of the horizon.
    pub base_cvr: f64,
    pub delay_mix: Vec<DelayComponent>,
    /// Shift of the log-odds intercept per day.
    pub drift_per_day: f64,
    pub value_mu: f64,
    pub value_sigma: f64,
    pub seed: u64,
    pub fields: Vec<FieldSpec>,
    /// Timestamp of the first day, in seconds.
    pub start_ts: u64,
}

/// Delay mixture fitted so 58.7% of conversions land on day one and 20%
/// after day seven, with a 30 day window.
pub fn default_delay_mix() -> Vec<DelayComponent> {
    vec![
        DelayComponent { weight: 0.498, rate_per_day: 6.0 },
        DelayComponent { weight: 0.171, rate_per_day: 0.5 },
        DelayComponent { weight: 0.331, rate_per_day: 0.06 },
    ]
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_clicks: 200_000,
            n_days: 60,
            window_days: 30,
            base_cvr: 0.1,
            delay_mix: default_delay_mix(),
            drift_per_day: 0.0,
            value_mu: 3.0,
            value_sigma: 0.8,
            seed: 1,
            fields: vec![
                FieldSpec { cardinality: 10, logit_scale: 0.6 },
                FieldSpec { cardinality: 30, logit_scale: 0.5 },
                FieldSpec { cardinality: 50, logit_scale: 0.4 },
                FieldSpec { cardinality: 100, logit_scale: 0.3 },
            ],
            start_ts: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clicks == 0 || self.n_days == 0 || self.window_days == 0 {
            return Err(Error::config("n_clicks, n_days and window_days must be positive"));
        }
        if !(self.base_cvr > 0.0 && self.base_cvr < 1.0) {
            return Err(Error::config("base_cvr must lie in (0, 1)"));
        }
        if self.delay_mix.is_empty() {
            return Err(Error::config("delay_mix needs at least one component"));
        }
        let w: f64 = self.delay_mix.iter().map(|c| c.weight).sum();
        if (w - 1.0).abs() > 1e-9 || self.delay_mix.iter().any(|c| c.weight < 0.0) {
            return Err(Error::config(format!("delay_mix weights must be non-negative and sum to 1, got {w}")));
        }
        if self.delay_mix.iter().any(|c| !(c.rate_per_day > 0.0 && c.rate_per_day.is_finite())) {
            return Err(Error::config("delay_mix rates must be positive"));
        }
        if !self.drift_per_day.is_finite() || !self.value_mu.is_finite() {
            return Err(Error::config("drift_per_day and value_mu must be finite"));
        }
        if !(self.value_sigma >= 0.0 && self.value_sigma.is_finite()) {
            return Err(Error::config("value_sigma must be non-negative"));
        }
        if self.fields.is_empty() || self.fields.iter().any(|f| f.cardinality == 0 || f.logit_scale.is_nan() || f.logit_scale < 0.0) {
            return Err(Error::config("fields need positive cardinality and non-negative logit_scale"));
        }
        Ok(())
    }

    pub fn mixture(&self) -> DelayMixture {
        DelayMixture {
            components: self.delay_mix.clone(),
            window_days: self.window_days as f64,
        }
    }

    pub fn window_secs(&self) -> u64 {
        self.window_days * DAY
    }

    pub fn field_names(&self) -> Vec<String> {
        (0..self.fields.len()).map(|i| format!("f{i}")).collect()
    }

    /// Mean conversion value `exp(mu + sigma²/2)`.
    pub fn mean_value(&self) -> f64 {
        (self.value_mu + 0.5 * self.value_sigma * self.value_sigma).exp()
    }
}

const BLOCK: usize = 4096;
const EFFECT_STREAM: u64 = u64::MAX;

/// A generated click with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedClick {
    pub record: RawRecord,
    /// True probability of converting within the window.
    pub cvr: f64,
}

struct Plan {
    effects: Vec<Vec<f64>>,
    values: Vec<Vec<u32>>,
    ts: Vec<u64>,
    base_logit: f64,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn plan(cfg: &GenConfig) -> Result<Plan> {
    cfg.validate()?;
    let mut erng = rng_for(cfg.seed, EFFECT_STREAM);
    let effects: Vec<Vec<f64>> = cfg
        .fields
        .iter()
        .map(|f| {
            let normal = Normal::new(0.0, f.logit_scale).expect("validated scale");
            (0..f.cardinality).map(|_| normal.sample(&mut erng)).collect()
        })
        .collect();

    let span = (cfg.n_days * DAY) as f64;
    let n = cfg.n_clicks;
    let mut ts = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for block in 0..n.div_ceil(BLOCK) {
        let mut rng = rng_for(cfg.seed, 2 * block as u64);
        for k in block * BLOCK..((block + 1) * BLOCK).min(n) {
            // Even spacing with jitter keeps timestamps sorted.
            let t = ((k as f64 + rng.random::<f64>()) * span / n as f64).floor() as u64;
            ts.push(cfg.start_ts + t);
            values.push(cfg.fields.iter().map(|f| rng.random_range(0..f.cardinality)).collect::<Vec<u32>>());
        }
    }

    // Intercept such that the mean true CVR over these clicks, before
    // drift, equals base_cvr.
    let offsets: Vec<f64> = values
        .iter()
        .map(|vs| vs.iter().zip(&effects).map(|(&v, e)| e[v as usize]).sum())
        .collect();
    let mean_at = |b: f64| offsets.iter().map(|o| sigmoid(b + o)).sum::<f64>() / n as f64;
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < cfg.base_cvr {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(Plan {
        effects,
        values,
        ts,
        base_logit: 0.5 * (lo + hi),
    })
}

/// Generates clicks in time order, handing each to `sink`.
pub fn generate_with<S: FnMut(GeneratedClick) -> Result<()>>(cfg: &GenConfig, mut sink: S) -> Result<()> {
    let p = plan(cfg)?;
    let mixture = cfg.mixture();
    let r = cfg.window_secs();
    let lognormal = LogNormal::new(cfg.value_mu, cfg.value_sigma).map_err(|e| Error::config(e.to_string()))?;
    let names = cfg.field_names();
    let n = cfg.n_clicks;
    for block in 0..n.div_ceil(BLOCK) {
        let mut rng = rng_for(cfg.seed, 2 * block as u64 + 1);
        for k in block * BLOCK..((block + 1) * BLOCK).min(n) {
            let vs = &p.values[k];
            let day = (p.ts[k] - cfg.start_ts) as f64 / DAY as f64;
            let logit = p.base_logit
                + cfg.drift_per_day * day
                + vs.iter().zip(&p.effects).map(|(&v, e)| e[v as usize]).sum::<f64>();
            let cvr = sigmoid(logit);
            let (delay, value) = if rng.random::<f64>() < cvr {
                let secs = (mixture.sample_days(&mut rng) * DAY as f64).ceil() as u64;
                (Some(secs.clamp(1, r)), Some(lognormal.sample(&mut rng)))
            } else {
                (None, None)
            };
            let fields = names
                .iter()
                .zip(vs)
                .map(|(name, v)| (name.clone(), v.to_string()))
                .collect();
            sink(GeneratedClick {
                record: RawRecord {
                    click_id: format!("c{k}"),
                    click_ts: p.ts[k],
                    fields,
                    conversion_delay: delay,
                    conversion_value: value,
                },
                cvr,
            })?;
        }
    }
    Ok(())
}

/// All generated clicks as raw records.
pub fn generate(cfg: &GenConfig) -> Result<Vec<GeneratedClick>> {
    let mut out = Vec::with_capacity(cfg.n_clicks);
    generate_with(cfg, |c| {
        out.push(c);
        Ok(())
    })?;
    Ok(out)
}

/// A featurized synthetic stream.
pub struct SyntheticStream<F> {
    pub log: ClickLog<F>,
    pub store: ConversionStore<F>,
    /// True CVR per click, in log order.
    pub truth: Vec<F>,
}

/// Generates and featurizes a stream without keeping raw records around.
pub fn generate_stream<F: Scalar>(cfg: &GenConfig, features: &FeatureConfig) -> Result<SyntheticStream<F>> {
    let mut log = ClickLog::new();
    let mut store = ConversionStore::new();
    let mut truth = Vec::with_capacity(cfg.n_clicks);
    generate_with(cfg, |c| {
        let r = c.record;
        if let (Some(d), Some(v)) = (r.conversion_delay, r.conversion_value) {
            store.insert(&r.click_id, d, F::cast(v))?;
        }
        log.push(Click {
            x: featurize(&r.fields, features)?,
            click_id: r.click_id,
            click_ts: r.click_ts,
        })?;
        truth.push(F::cast(c.cvr));
        Ok(())
    })?;
    Ok(SyntheticStream { log, store, truth })
}
