use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{StateFunction, StochasticMatrix};

/// Pool-pump ladder: states `(m, k)` with `m` off/on and `k` the time spent in mode `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolModelSpec {
    /// Ladder length `I` per mode.
    pub half_cycle: usize,
    /// Target mean on-time per day, hours.
    pub cycle_hours: f64,
    /// Geometric sampling rate `γ`.
    pub gamma: f64,
    /// Broadcast period, minutes.
    pub slot_minutes: f64,
    /// Power drawn while on, kW.
    pub power_kw: f64,
    /// Shape exponent of the sojourn CDF.
    pub hazard_shape: f64,
}

impl Default for PoolModelSpec {
    fn default() -> Self {
        Self {
            half_cycle: 48,
            cycle_hours: 12.0,
            gamma: 1.0 / 6.0,
            slot_minutes: 5.0,
            power_kw: 1.0,
            hazard_shape: 2.0,
        }
    }
}

impl PoolModelSpec {
    /// Hours represented by one step of the ladder kernel `S₀`.
    pub fn hours_per_step(&self) -> f64 {
        self.slot_minutes / (self.gamma * 60.0)
    }

    pub fn dim(&self) -> usize {
        2 * self.half_cycle
    }

    /// Index of `(m, k)`, `m = 0` off, `m = 1` on, `k ∈ 1..=I`.
    pub fn index(&self, on: bool, k: usize) -> usize {
        usize::from(on) * self.half_cycle + (k - 1)
    }

    fn validate(&self) -> Result<()> {
        if self.half_cycle < 2 {
            return Err(Error::InvalidParameter("half_cycle must exceed 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!("gamma {} not in (0, 1]", self.gamma)));
        }
        for (name, v) in [
            ("slot_minutes", self.slot_minutes),
            ("power_kw", self.power_kw),
            ("hazard_shape", self.hazard_shape),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if !(self.cycle_hours > 0.0 && self.cycle_hours < 24.0) {
            return Err(Error::InfeasibleDutyCycle {
                target_hours: self.cycle_hours,
            });
        }
        Ok(())
    }
}

/// Sojourn CDF on the ladder, `F(k) = exp(−u^ρ / (2σ^ρ))` with `u = (I − k)/(I − 1)`.
pub fn sojourn_cdf(i_len: usize, sigma: f64, rho: f64, k: usize) -> f64 {
    let u = (i_len - k) as f64 / (i_len - 1) as f64;
    (-(u.powf(rho)) / (2.0 * sigma.powf(rho))).exp()
}

/// `E[L] = 1 + Σ_{k<I} (1 − F(k))`.
pub fn mean_sojourn(i_len: usize, sigma: f64, rho: f64) -> f64 {
    1.0 + (1..i_len)
        .map(|k| 1.0 - sojourn_cdf(i_len, sigma, rho, k))
        .sum::<f64>()
}

/// Switch probabilities `p(k)`, the discrete hazard of `F`, with `p(I) = 1`.
pub fn hazards(i_len: usize, sigma: f64, rho: f64) -> Vec<f64> {
    let f = |k| sojourn_cdf(i_len, sigma, rho, k);
    (1..=i_len)
        .map(|k| match k {
            1 => f(1),
            k if k == i_len => 1.0,
            k => {
                let prev = f(k - 1);
                ((f(k) - prev) / (1.0 - prev)).clamp(0.0, 1.0)
            }
        })
        .collect()
}

/// Scale `σ` giving mean sojourn `target` steps; `E[L]` decreases in `σ`.
pub fn fit_sigma(i_len: usize, rho: f64, target: f64) -> Result<f64> {
    let infeasible = || Error::InfeasibleDutyCycle {
        target_hours: target,
    };
    if !(target > 1.0 && target < i_len as f64) {
        return Err(infeasible());
    }
    let (mut lo, mut hi) = (-30.0f64, 30.0f64);
    let mean = |ls: f64| mean_sojourn(i_len, ls.exp(), rho);
    if !(mean(lo) > target && mean(hi) < target) {
        return Err(infeasible());
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

#[derive(Debug, Clone)]
pub struct PoolModel {
    pub spec: PoolModelSpec,
    pub s0: StochasticMatrix,
    pub p0: StochasticMatrix,
    pub util: StateFunction,
    pub anchor: usize,
    pub sigma_on: f64,
    pub sigma_off: f64,
}

/// Ladder kernel `S₀` and `P₀ = (1 − γ)I + γS₀`.
pub fn build_pool_model(spec: &PoolModelSpec) -> Result<PoolModel> {
    spec.validate()?;
    let i_len = spec.half_cycle;
    let rho = spec.hazard_shape;
    let steps = |hours: f64| hours / spec.hours_per_step();
    let fit = |hours: f64| {
        fit_sigma(i_len, rho, steps(hours)).map_err(|_| Error::InfeasibleDutyCycle {
            target_hours: hours,
        })
    };
    let sigma_on = fit(spec.cycle_hours)?;
    let sigma_off = fit(24.0 - spec.cycle_hours)?;
    let p_on = hazards(i_len, sigma_off, rho);
    let p_off = hazards(i_len, sigma_on, rho);

    let d = spec.dim();
    let mut s = DMatrix::zeros(d, d);
    for (on, p) in [(false, &p_on), (true, &p_off)] {
        for k in 1..=i_len {
            let x = spec.index(on, k);
            s[(x, spec.index(!on, 1))] += p[k - 1];
            if k < i_len {
                s[(x, spec.index(on, k + 1))] += 1.0 - p[k - 1];
            }
        }
    }
    let s0 = StochasticMatrix::new(s)?;
    let p0 = s0.geometric(spec.gamma)?;
    let util = StateFunction::with_units(
        (0..d).map(|x| if x >= i_len { spec.power_kw } else { 0.0 }).collect(),
        "kW",
    );
    Ok(PoolModel {
        spec: spec.clone(),
        s0,
        p0,
        util,
        anchor: 0,
        sigma_on,
        sigma_off,
    })
}
