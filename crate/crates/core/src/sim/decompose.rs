use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Low-, mid- and high-frequency parts of a signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub lp: Vec<f64>,
    pub mp: Vec<f64>,
    pub hp: Vec<f64>,
}

/// Smoothing weight of a first-order low-pass with cutoff `fc`.
fn alpha(fc: f64, period_s: f64) -> f64 {
    1.0 - (-2.0 * PI * fc * period_s).exp()
}

/// First-order causal low-pass started from rest.
pub fn low_pass(x: &[f64], cutoff_hz: f64, period_s: f64) -> Vec<f64> {
    let a = alpha(cutoff_hz, period_s);
    let mut y = 0.0;
    x.iter()
        .map(|v| {
            y += a * (v - y);
            y
        })
        .collect()
}

/// Splits `g` into `G_LP + G_MP + G_HP`.
///
/// `G_LP` is the low-pass of `g` and `G_HP` the high-pass (complement of a
/// low-pass at `hp_hz`) of `g − G_LP`. `G_MP` is the residual
/// `g − G_LP − G_HP`, evaluated left to right.
pub fn frequency_decompose(g: &[f64], lp_hz: f64, hp_hz: f64, period_s: f64) -> Result<Decomposition> {
    let nyquist = 0.5 / period_s;
    if !(period_s > 0.0 && lp_hz > 0.0 && lp_hz < hp_hz && hp_hz < nyquist) {
        return Err(Error::BadCutoffs { lp: lp_hz, hp: hp_hz });
    }
    let lp = low_pass(g, lp_hz, period_s);
    let v: Vec<f64> = g.iter().zip(&lp).map(|(g, l)| g - l).collect();
    let smooth = low_pass(&v, hp_hz, period_s);
    let hp: Vec<f64> = v.iter().zip(&smooth).map(|(v, s)| v - s).collect();
    let mp = v.iter().zip(&hp).map(|(v, h)| v - h).collect();
    Ok(Decomposition { lp, mp, hp })
}

/// Wind-like net-load test signal in GW: a daily swing, a slow
/// Ornstein-Uhlenbeck drift and fast gusts.
pub fn synthetic_net_load(steps: usize, period_s: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let day = 86_400.0;
    let slow_tau = 6.0 * 3600.0;
    let fast_tau = 600.0;
    let (a_s, a_f) = ((-period_s / slow_tau).exp(), (-period_s / fast_tau).exp());
    let (mut s, mut f) = (0.0, 0.0);
    (0..steps)
        .map(|k| {
            let t = k as f64 * period_s;
            s = a_s * s + (1.0 - a_s * a_s).sqrt() * 0.8 * std.sample(&mut rng);
            f = a_f * f + (1.0 - a_f * a_f).sqrt() * 0.25 * std.sample(&mut rng);
            4.0 + 1.5 * (2.0 * PI * t / day).sin() + s + f
        })
        .collect()
}
