#![allow(dead_code)]

use mhol::datagen::{generate_stream, GenConfig, SyntheticStream};
use mhol::FeatureConfig;

/// A small synthetic stream spread evenly over `n_days`.
pub fn stream(n_clicks: usize, n_days: u64, window_days: u64, drift: f64, seed: u64) -> SyntheticStream<f64> {
    let gen = GenConfig {
        n_clicks,
        n_days,
        window_days,
        drift_per_day: drift,
        base_cvr: 0.2,
        seed,
        ..GenConfig::default()
    };
    generate_stream(&gen, &features(12)).unwrap()
}

pub fn features(hash_bits: u32) -> FeatureConfig {
    FeatureConfig { hash_bits, ..FeatureConfig::default() }
}

/// Bit patterns of a float slice, for exact comparisons that treat -0 and
/// NaN payloads strictly.
pub fn bits(xs: &[f64]) -> Vec<u64> {
    xs.iter().map(|x| x.to_bits()).collect()
}
