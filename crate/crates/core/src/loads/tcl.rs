use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal};
use serde::{Deserialize, Serialize};

use crate::design::{DesignFamily, NatureStructure};
use crate::error::{Error, Result};
use crate::markov::{StateFunction, StochasticMatrix};

/// Cooling thermostatically controlled load on a temperature lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TclModelSpec {
    pub theta_set: f64,
    /// `[Θ_min, Θ_max]`, °C.
    pub deadband: [f64; 2],
    pub theta_a: f64,
    /// Thermal resistance, °C/kW.
    pub r: f64,
    /// Thermal capacitance, kWh/°C.
    pub c: f64,
    /// Energy transfer rate, kW.
    pub p_trans: f64,
    /// Number of states, `2 × lattice size`.
    pub d: usize,
    pub t_delta: f64,
    pub sigma: f64,
    pub rho: f64,
    /// Time represented by one step of the stochastic model, seconds.
    pub sample_period_s: f64,
    /// Interval used to discretize the thermal dynamics, seconds.
    pub broadcast_period_s: f64,
    pub noise_var: f64,
    pub gamma: f64,
    pub samples_per_state: usize,
    pub seed: u64,
}

impl Default for TclModelSpec {
    fn default() -> Self {
        Self {
            theta_set: 20.0,
            deadband: [19.5, 20.5],
            theta_a: 32.0,
            r: 2.0,
            c: 2.0,
            p_trans: 14.0,
            d: 42,
            t_delta: 0.05,
            sigma: 0.02,
            rho: 0.75,
            sample_period_s: 2.0,
            broadcast_period_s: 20.0,
            noise_var: 1e-6,
            gamma: 1.0 / 3.0,
            samples_per_state: 20_000,
            seed: 0,
        }
    }
}

/// Indices of the control component.
pub const OFF: usize = 0;
pub const ON: usize = 1;

impl TclModelSpec {
    pub fn theta_min(&self) -> f64 {
        self.deadband[0]
    }

    pub fn theta_max(&self) -> f64 {
        self.deadband[1]
    }

    pub fn lattice_len(&self) -> usize {
        self.d / 2
    }

    pub fn lattice(&self) -> Vec<f64> {
        (0..self.lattice_len())
            .map(|k| self.theta_min() + k as f64 * self.t_delta)
            .collect()
    }

    /// `ϱ = exp(−period / (RC))` with `RC` converted to seconds.
    pub fn varrho(&self) -> f64 {
        (-self.broadcast_period_s / (self.r * self.c * 3600.0)).exp()
    }

    /// `Θ_g = R P_trans`.
    pub fn theta_g(&self) -> f64 {
        self.r * self.p_trans
    }

    /// Drift magnitudes `(δ₋, δ₊)`: one-step displacement of the physical model at `Θ_set`.
    pub fn drifts(&self) -> (f64, f64) {
        let k = 1.0 - self.varrho();
        (
            k * (self.theta_g() - self.theta_a + self.theta_set),
            k * (self.theta_a - self.theta_set),
        )
    }

    /// Nearest lattice cell, clamped to the dead-band.
    pub fn cell(&self, theta: f64) -> usize {
        let k = ((theta - self.theta_min()) / self.t_delta).round();
        k.clamp(0.0, (self.lattice_len() - 1) as f64) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 4 || !self.d.is_multiple_of(2) {
            return Err(Error::LatticeMismatch(format!("d = {} must be even and ≥ 4", self.d)));
        }
        let width = self.theta_max() - self.theta_min();
        if !(width > 0.0) {
            return Err(Error::InvalidParameter("empty dead-band".into()));
        }
        let expected = width / (self.lattice_len() - 1) as f64;
        if !((self.t_delta - expected).abs() <= 1e-9 * expected.max(1.0)) {
            return Err(Error::LatticeMismatch(format!(
                "t_delta {} but {} points on the dead-band need {expected}",
                self.t_delta,
                self.lattice_len()
            )));
        }
        for (name, v) in [
            ("r", self.r),
            ("c", self.c),
            ("p_trans", self.p_trans),
            ("sigma", self.sigma),
            ("rho", self.rho),
            ("sample_period_s", self.sample_period_s),
            ("broadcast_period_s", self.broadcast_period_s),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if !(self.noise_var >= 0.0) {
            return Err(Error::InvalidParameter("noise_var must be nonnegative".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!("gamma {} not in (0, 1]", self.gamma)));
        }
        let (dm, dp) = self.drifts();
        if !(dm > 0.0 && dp > 0.0) {
            return Err(Error::InvalidParameter(
                "parameters do not give a cooling cycle at the set point".into(),
            ));
        }
        Ok(())
    }
}

/// Switching probabilities per lattice cell: `(p_on, p_off)`.
///
/// `p_on` is the hazard, along increasing temperature, of the CDF
/// `F(x) = exp(−(Θ_max − x)^ρ / (2σ^ρ))`, forced to 1 at `Θ_max`. `p_off`
/// mirrors it along decreasing temperature and is forced to 1 at `Θ_min`.
pub fn switching_probabilities(spec: &TclModelSpec) -> (Vec<f64>, Vec<f64>) {
    let n = spec.lattice_len();
    let lat = spec.lattice();
    let cdf = |dist: f64| (-(dist.max(0.0).powf(spec.rho)) / (2.0 * spec.sigma.powf(spec.rho))).exp();
    let hazard = |f: &dyn Fn(usize) -> f64, order: Vec<usize>| {
        let mut p = vec![0.0; n];
        for (pos, &j) in order.iter().enumerate() {
            p[j] = if pos == 0 {
                f(j)
            } else if pos == n - 1 {
                1.0
            } else {
                let prev = f(order[pos - 1]);
                ((f(j) - prev) / (1.0 - prev)).clamp(0.0, 1.0)
            };
        }
        p
    };
    let f_on = |j: usize| cdf(spec.theta_max() - lat[j]);
    let f_off = |j: usize| cdf(lat[j] - spec.theta_min());
    (
        hazard(&f_on, (0..n).collect()),
        hazard(&f_off, (0..n).rev().collect()),
    )
}

/// Nominal control kernel `R₀`, `d × 2`.
pub fn control_kernel(spec: &TclModelSpec) -> DMatrix<f64> {
    let n = spec.lattice_len();
    let (p_on, p_off) = switching_probabilities(spec);
    DMatrix::from_fn(spec.d, 2, |x, u| {
        let (m, j) = (x / n, x % n);
        let switch = if m == OFF { p_on[j] } else { p_off[j] };
        if u == m {
            1.0 - switch
        } else {
            switch
        }
    })
}

/// How a nature kernel was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NatureKernel {
    pub q0: StochasticMatrix,
    pub provenance: Provenance,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent seed for origin state `x`.
pub fn state_seed(master: u64, x: usize) -> u64 {
    splitmix64(master ^ splitmix64(x as u64))
}

fn epoch_sampler(gamma: f64) -> Geometric {
    Geometric::new(gamma).expect("gamma validated")
}

fn q0_row(spec: &TclModelSpec, x: usize, samples: usize, seed: u64) -> Vec<f64> {
    let n = spec.lattice_len();
    let (m, j) = (x / n, x % n);
    let (dm, dp) = spec.drifts();
    let drift = if m == ON { -dm } else { dp };
    let theta0 = spec.lattice()[j];
    let epoch = epoch_sampler(spec.gamma);
    let noise = Normal::new(0.0, spec.noise_var.sqrt()).expect("noise validated");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; n];
    for _ in 0..samples {
        let steps = 1 + epoch.sample(&mut rng);
        let mut theta = theta0;
        for _ in 0..steps {
            theta += drift;
            if spec.noise_var > 0.0 {
                theta += noise.sample(&mut rng);
            }
        }
        counts[spec.cell(theta)] += 1;
    }
    counts.iter().map(|c| *c as f64 / samples as f64).collect()
}

/// Monte-Carlo estimate of `Q₀(x, ·)`: the cell reached after one sampling
/// epoch (`Δ ~ Geometric(γ)` steps on `{1, 2, …}`) with the mode held fixed.
pub fn estimate_q0(spec: &TclModelSpec, samples_per_state: usize, seed: u64) -> Result<NatureKernel> {
    spec.validate()?;
    if samples_per_state == 0 {
        return Err(Error::InvalidParameter("samples_per_state must be positive".into()));
    }
    let row = |x: usize| q0_row(spec, x, samples_per_state, state_seed(seed, x));
    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        (0..spec.d).into_par_iter().map(row).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<f64>> = (0..spec.d).map(row).collect();
    Ok(NatureKernel {
        q0: StochasticMatrix::normalize_rows(crate::markov::matrix_from_rows(&rows)?)?,
        provenance: Provenance::MonteCarlo {
            samples: samples_per_state,
            seed,
        },
    })
}

#[derive(Debug, Clone)]
pub struct TclModel {
    pub spec: TclModelSpec,
    pub r0: DMatrix<f64>,
    pub q0: NatureKernel,
    pub nature: NatureStructure,
    pub s0: StochasticMatrix,
    pub p0: StochasticMatrix,
    pub util: StateFunction,
    pub anchor: usize,
}

/// `S₀(x, x') = R₀(x, x_u') Q₀(x, x_n')` and `P₀ = (1 − γ)I + γS₀`.
pub fn build_tcl_model(spec: &TclModelSpec) -> Result<TclModel> {
    spec.validate()?;
    let q0 = estimate_q0(spec, spec.samples_per_state, spec.seed)?;
    assemble(spec, q0)
}

/// Builds the model around a given nature kernel.
pub fn assemble(spec: &TclModelSpec, q0: NatureKernel) -> Result<TclModel> {
    spec.validate()?;
    let n = spec.lattice_len();
    if q0.q0.dim() != spec.d || q0.q0.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: spec.d,
            found: q0.q0.dim(),
        });
    }
    let r0 = control_kernel(spec);
    let nature = NatureStructure::new(2, q0.q0.clone())?;
    let s = DMatrix::from_fn(spec.d, spec.d, |x, y| {
        let (u, j) = nature.split(y);
        r0[(x, u)] * q0.q0.get(x, j)
    });
    let s0 = StochasticMatrix::normalize_rows(s)?;
    let p0 = s0.geometric(spec.gamma)?;
    let util = StateFunction::with_units(
        (0..spec.d).map(|x| if x / n == ON { spec.p_trans } else { 0.0 }).collect(),
        "kW",
    );
    Ok(TclModel {
        spec: spec.clone(),
        r0,
        q0,
        nature,
        s0,
        p0,
        util,
        anchor: 0,
    })
}

/// Period, in steps, of hysteresis cycling through the dead-band.
///
/// With `exact` the thermal recursion is used, otherwise the constant-drift one.
pub fn cycle_period(spec: &TclModelSpec, exact: bool) -> f64 {
    let k = 1.0 - spec.varrho();
    let (dm, dp) = spec.drifts();
    let step = |theta: f64, on: bool| {
        if exact {
            theta + k * (spec.theta_a - theta - if on { spec.theta_g() } else { 0.0 })
        } else if on {
            theta - dm
        } else {
            theta + dp
        }
    };
    let (mut theta, mut on) = (spec.theta_set, false);
    let mut crossings = Vec::new();
    let mut t = 0usize;
    while crossings.len() < 4 && t < 10_000_000 {
        theta = step(theta, on);
        t += 1;
        if !on && theta >= spec.theta_max() {
            on = true;
            crossings.push(t);
        } else if on && theta <= spec.theta_min() {
            on = false;
        }
    }
    match crossings.as_slice() {
        [.., a, b] => (b - a) as f64,
        _ => f64::INFINITY,
    }
}

/// Simulated path of one TCL under a broadcast `ζ` sequence.
#[derive(Debug, Clone, Default)]
pub struct TclTrajectory {
    pub t_s: Vec<f64>,
    pub theta: Vec<f64>,
    pub mode: Vec<u8>,
    pub zeta: Vec<f64>,
    pub epochs: usize,
    pub overrides: usize,
}

impl TclTrajectory {
    /// QoS overrides per sampling epoch.
    pub fn override_rate(&self) -> f64 {
        if self.epochs == 0 {
            0.0
        } else {
            self.overrides as f64 / self.epochs as f64
        }
    }
}

/// Runs the noisy drift model with mode changes drawn from `R_ζ` at sampling epochs.
///
/// The family must be built on `S₀` with the model's nature kernel; its tilted
/// kernel is `S_ζ`, from which `R_ζ` is read. Outside the dead-band the mode
/// is overridden (on above `Θ_max`, off below `Θ_min`).
pub fn tcl_trajectory(
    spec: &TclModelSpec,
    family: &DesignFamily,
    zeta: &[f64],
    seed: u64,
) -> Result<TclTrajectory> {
    spec.validate()?;
    let nature = family.nature();
    if nature.n_u() != 2 || nature.n_n() != spec.lattice_len() {
        return Err(Error::DimensionMismatch {
            expected: spec.d,
            found: family.base().dim(),
        });
    }
    let (dm, dp) = spec.drifts();
    let noise = Normal::new(0.0, spec.noise_var.sqrt()).expect("noise validated");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = spec.theta_set;
    let mut mode = OFF;
    let mut cell = spec.cell(theta);
    let mut out = TclTrajectory::default();
    let mut cached: Option<(u64, DMatrix<f64>)> = None;
    for (t, &z) in zeta.iter().enumerate() {
        theta += if mode == ON { -dm } else { dp };
        if spec.noise_var > 0.0 {
            theta += noise.sample(&mut rng);
        }
        if rng.random::<f64>() < spec.gamma {
            out.epochs += 1;
            let r = match &cached {
                Some((bits, r)) if *bits == z.to_bits() => r,
                _ => {
                    let s = family.tilted_kernel(z)?;
                    &cached.insert((z.to_bits(), nature.control_kernel(&s))).1
                }
            };
            let x = nature.index(mode, cell);
            mode = if rng.random::<f64>() < r[(x, ON)] { ON } else { OFF };
            cell = spec.cell(theta);
        }
        let forced = if theta > spec.theta_max() {
            ON
        } else if theta < spec.theta_min() {
            OFF
        } else {
            mode
        };
        if forced != mode {
            out.overrides += 1;
            mode = forced;
        }
        out.t_s.push((t + 1) as f64 * spec.sample_period_s);
        out.theta.push(theta);
        out.mode.push(mode as u8);
        out.zeta.push(z);
    }
    Ok(out)
}
