use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::design::DesignFamily;
use crate::error::{Error, Result};
use crate::linearize::{linearize, transfer_eval};
use crate::sim::meanfield::{propagate, KernelCache, KernelSampler, FleetState};
use crate::sim::signal::SignalSet;

/// Feedback law producing `ζ_t` from the fractional tracking error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Controller {
    /// `ζ_t = r_t`: the reference is broadcast as is.
    OpenLoop,
    Proportional { kp: f64 },
    Pi { kp: f64, ki: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    pub controller: Controller,
    /// Saturation as a fraction of the family's usable `|ζ|` range.
    /// `None` disables saturation.
    pub saturation: Option<f64>,
    pub anti_windup: bool,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            controller: Controller::Pi { kp: 0.5, ki: 0.25 },
            saturation: Some(0.9),
            anti_windup: true,
        }
    }
}

impl TrackingConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = match self.controller {
            Controller::OpenLoop => true,
            Controller::Proportional { kp } => kp.is_finite(),
            Controller::Pi { kp, ki } => kp.is_finite() && ki.is_finite(),
        };
        if !finite {
            return Err(Error::InvalidParameter("controller gains must be finite".into()));
        }
        if let Some(s) = self.saturation {
            if !(s > 0.0 && s <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "saturation fraction must lie in (0, 1], got {s}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Plant {
    Meanfield,
    Fleet { n: usize, seed: u64 },
}

/// Summary of a tracking run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingMetrics {
    pub steps: usize,
    pub mean_power_nominal: f64,
    pub dc_gain: f64,
    /// RMS of the fractional tracking error.
    pub rms_error: f64,
    pub max_abs_error: f64,
    pub zeta_max_abs: f64,
    pub zeta_mean_abs: f64,
    pub zeta_min: f64,
    pub zeta_max: f64,
    pub saturated_fraction: f64,
}

/// `|G⁺(1)| / Ū₀`: fractional output change per unit of `ζ` at DC.
pub fn dc_gain(family: &DesignFamily) -> Result<f64> {
    let model = linearize(family, 0.0)?;
    let (_, g1) = transfer_eval(&model, Complex::new(1.0, 0.0))?;
    let u0 = family.mean_power(0.0)?;
    Ok(if u0.abs() > 0.0 { g1.norm() / u0.abs() } else { g1.norm() })
}

/// Closed-loop run against `reference`, a fractional deviation of `Ū₀`.
///
/// The first sequence of `reference` (or the one named `reference`) is used.
/// Returned signals: `reference`, `zeta`, `y` (power per load), `y_frac`
/// and `error`.
pub fn track(
    reference: &SignalSet,
    family: &DesignFamily,
    config: &TrackingConfig,
    plant: Plant,
) -> Result<(SignalSet, TrackingMetrics)> {
    config.validate()?;
    let r = reference
        .get("reference")
        .or_else(|| reference.names().next().and_then(|n| reference.get(n)))
        .ok_or_else(|| Error::InvalidParameter("reference signal is empty".into()))?
        .to_vec();
    let u0 = family.mean_power(0.0)?;
    let scale = if u0.abs() > 0.0 { u0 } else { 1.0 };
    let g0 = match config.controller {
        Controller::OpenLoop => 1.0,
        _ => {
            let g = dc_gain(family)?;
            if g > 0.0 { g } else { 1.0 }
        }
    };
    let (lo, hi) = family.zeta_range();
    let bound = config.saturation.map(|s| s * hi.min(-lo));

    let util = family.util().values();
    let mut mu = family.pmf(0.0)?;
    let mut fleet = match plant {
        Plant::Meanfield => None,
        Plant::Fleet { n, seed } => Some(FleetState::from_pmf(n, &mu, seed)?),
    };
    let mut cache = KernelCache::default();

    let n = r.len();
    let (mut zetas, mut ys, mut yf, mut errs) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut integral = 0.0;
    let mut saturated = 0usize;
    for &rt in &r {
        let y = match &fleet {
            Some(f) => f.output(util),
            None => mu.expectation(util),
        };
        let frac = y / scale - 1.0;
        let e = rt - frac;
        let raw = match config.controller {
            Controller::OpenLoop => rt,
            Controller::Proportional { kp } => kp * e / g0,
            Controller::Pi { kp, .. } => (kp * e + integral) / g0,
        };
        let z = match bound {
            Some(b) => raw.clamp(-b, b),
            None => raw,
        };
        if z != raw {
            saturated += 1;
        }
        if let Controller::Pi { ki, .. } = config.controller {
            integral += ki * e;
            if config.anti_windup {
                integral += (z - raw) * g0;
            }
        }
        let p = cache.get(family, z)?;
        match &mut fleet {
            Some(f) => f.advance(&KernelSampler::new(p)),
            None => mu = propagate(&mu, p, util)?.0,
        }
        zetas.push(z);
        ys.push(y);
        yf.push(frac);
        errs.push(e);
    }

    let nf = n.max(1) as f64;
    let metrics = TrackingMetrics {
        steps: n,
        mean_power_nominal: u0,
        dc_gain: g0,
        rms_error: (errs.iter().map(|e| e * e).sum::<f64>() / nf).sqrt(),
        max_abs_error: errs.iter().fold(0.0, |m: f64, e| m.max(e.abs())),
        zeta_max_abs: zetas.iter().fold(0.0, |m: f64, z| m.max(z.abs())),
        zeta_mean_abs: zetas.iter().map(|z| z.abs()).sum::<f64>() / nf,
        zeta_min: zetas.iter().copied().fold(f64::INFINITY, f64::min),
        zeta_max: zetas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        saturated_fraction: saturated as f64 / nf,
    };
    let mut out = SignalSet::new(reference.period_s)?;
    out.insert("reference", r)?;
    out.insert("zeta", zetas)?;
    out.insert("y", ys)?;
    out.insert("y_frac", yf)?;
    out.insert("error", errs)?;
    Ok((out, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{exponential_family, DesignKind, NominalModel};
    use crate::markov::{StateFunction, StochasticMatrix};

    fn family() -> DesignFamily {
        let p = StochasticMatrix::from_rows(&[
            vec![0.6, 0.3, 0.1, 0.0],
            vec![0.1, 0.6, 0.3, 0.0],
            vec![0.0, 0.1, 0.6, 0.3],
            vec![0.3, 0.0, 0.1, 0.6],
        ])
        .unwrap();
        let nominal = NominalModel::plain(p, StateFunction::new(vec![0.0, 0.0, 1.0, 1.0])).unwrap();
        exponential_family(&nominal, DesignKind::Myopic, None, 2.0, 0.05).unwrap()
    }

    fn reference(values: Vec<f64>) -> SignalSet {
        let mut s = SignalSet::new(1.0).unwrap();
        s.insert("reference", values).unwrap();
        s
    }

    #[test]
    fn zero_reference_stays_at_equilibrium() {
        let fam = family();
        let (out, m) = track(&reference(vec![0.0; 50]), &fam, &TrackingConfig::default(), Plant::Meanfield).unwrap();
        assert!(out.get("zeta").unwrap().iter().all(|z| z.abs() < 1e-12));
        assert!(m.rms_error < 1e-12);
    }

    #[test]
    fn pi_removes_step_offset() {
        let fam = family();
        let (out, m) = track(&reference(vec![0.1; 300]), &fam, &TrackingConfig::default(), Plant::Meanfield).unwrap();
        let e = out.get("error").unwrap();
        assert!(e[299].abs() < 1e-3, "final error {}", e[299]);
        assert!(m.zeta_max_abs <= 0.9 * 2.0 + 1e-12);
    }

    #[test]
    fn saturation_bounds_zeta() {
        let fam = family();
        let cfg = TrackingConfig {
            controller: Controller::Pi { kp: 50.0, ki: 10.0 },
            ..Default::default()
        };
        let (out, m) = track(&reference(vec![5.0; 40]), &fam, &cfg, Plant::Meanfield).unwrap();
        assert!(out.get("zeta").unwrap().iter().all(|z| z.abs() <= 1.8 + 1e-12));
        assert!(m.saturated_fraction > 0.5);
        let unsat = TrackingConfig { saturation: None, ..cfg };
        assert!(matches!(
            track(&reference(vec![5.0; 40]), &fam, &unsat, Plant::Meanfield),
            Err(Error::OutOfGrid { .. })
        ));
    }

    #[test]
    fn fleet_plant_is_deterministic() {
        let fam = family();
        let r = reference((0..100).map(|t| 0.05 * (t as f64 / 10.0).sin()).collect());
        let plant = Plant::Fleet { n: 300, seed: 4 };
        let a = track(&r, &fam, &TrackingConfig::default(), plant).unwrap();
        let b = track(&r, &fam, &TrackingConfig::default(), plant).unwrap();
        assert_eq!(a.0, b.0);
    }
}
