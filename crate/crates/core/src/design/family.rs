use serde::{Deserialize, Serialize};

use crate::design::maps::{ipd_map, spd_map, DesignMap};
use crate::design::optimality;
use crate::design::tilt::{tilt_reduced, NatureStructure};
use crate::error::{Error, Result};
use crate::markov::{
    check_irreducible_aperiodic, invariant_pmf_unchecked, Pmf, StateFunction, StochasticMatrix,
};
use crate::ode::rk4_step;

/// How the family's `h°_ζ` is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    /// Design ODE with the IPD map.
    Ipd,
    /// Design ODE with the SPD map.
    Spd,
    /// Exponential family with generator `𝒰`.
    Myopic,
    /// Exponential family with generator `ℋ°_IPD(P₀)`.
    Ipd0,
    /// Exponential family with generator `ℋ°_SPD(P₀)`.
    Spd0,
    /// Exponential family with a caller-supplied generator.
    Custom,
}

impl DesignKind {
    pub fn design_map(self) -> Option<DesignMap> {
        match self {
            DesignKind::Ipd => Some(DesignMap::Ipd),
            DesignKind::Spd => Some(DesignMap::Spd),
            _ => None,
        }
    }

    pub fn is_exponential(self) -> bool {
        self.design_map().is_none()
    }

    pub fn name(self) -> &'static str {
        match self {
            DesignKind::Ipd => "ipd",
            DesignKind::Spd => "spd",
            DesignKind::Myopic => "myopic",
            DesignKind::Ipd0 => "ipd0",
            DesignKind::Spd0 => "spd0",
            DesignKind::Custom => "custom",
        }
    }
}

/// Structural flag recorded with a family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Structure {
    Plain,
    Nature,
    /// `P_ζ = (1−γ)I + γS_ζ` on top of a tilted `S_ζ`.
    Geometric { gamma: f64, nature: bool },
}

/// The kernel being tilted together with its power map and structure.
#[derive(Debug, Clone, PartialEq)]
pub struct NominalModel {
    pub base: StochasticMatrix,
    pub nature: NatureStructure,
    pub util: StateFunction,
    pub anchor: usize,
}

impl NominalModel {
    pub fn new(
        base: StochasticMatrix,
        nature: NatureStructure,
        util: StateFunction,
        anchor: usize,
    ) -> Result<Self> {
        let d = base.dim();
        if !base.is_square() || nature.dim() != d || util.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: if nature.dim() != d { nature.dim() } else { util.dim() },
            });
        }
        if anchor >= d {
            return Err(Error::InvalidParameter(format!("anchor {anchor} out of range")));
        }
        let report = check_irreducible_aperiodic(&base);
        if !report.irreducible {
            return Err(Error::NotIrreducible);
        }
        if !report.aperiodic {
            return Err(Error::NotAperiodic {
                period: report.period,
            });
        }
        Ok(Self {
            base,
            nature,
            util,
            anchor,
        })
    }

    /// No exogenous randomness, anchor at state 0.
    pub fn plain(base: StochasticMatrix, util: StateFunction) -> Result<Self> {
        let d = base.dim();
        Self::new(base, NatureStructure::none(d), util, 0)
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }
}

/// Everything computed at one value of `ζ`.
#[derive(Debug, Clone)]
pub struct FamilyPoint {
    pub zeta: f64,
    pub h_circ: Vec<f64>,
    /// Tilted base kernel (`S_ζ` for geometric families).
    pub tilted: StochasticMatrix,
    /// The transition matrix actually used by the loads.
    pub kernel: StochasticMatrix,
    pub pi: Pmf,
    pub mean_power: f64,
}

/// A ζ-parameterized family `{P_ζ}` on a uniform grid containing 0.
///
/// Only `h°_ζ` and the per-point invariant pmfs are stored. Kernels are
/// re-tilted on demand, and off-grid values of `ζ` use linear interpolation
/// of `h°` followed by a fresh tilt, so every kernel is exactly stochastic.
#[derive(Debug, Clone)]
pub struct DesignFamily {
    kind: DesignKind,
    nominal: NominalModel,
    gamma: Option<f64>,
    step: f64,
    n_neg: usize,
    h_circ: Vec<Vec<f64>>,
    pis: Vec<Pmf>,
    mean_power: Vec<f64>,
    generator: Option<Vec<f64>>,
    trivial: bool,
}

fn grid_counts(zeta_max: f64, step: f64) -> Result<usize> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
    }
    if !(zeta_max > 0.0) || !zeta_max.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "zeta_max must be positive, got {zeta_max}"
        )));
    }
    let n = (zeta_max / step - 1e-9).ceil() as usize;
    Ok(n.max(1))
}

#[cfg(feature = "parallel")]
fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    rayon::join(a, b)
}

#[cfg(not(feature = "parallel"))]
fn join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA,
    B: FnOnce() -> RB,
{
    (a(), b())
}

fn rhs(nominal: &NominalModel, map: DesignMap, h: &[f64]) -> Result<Vec<f64>> {
    let (p, _) = tilt_reduced(&nominal.base, h, &nominal.nature)?;
    if !p.same_support(&nominal.base) {
        return Err(Error::NonFinite { state: 0 });
    }
    let pi = invariant_pmf_unchecked(&p)?;
    map.apply_with_pmf(&p, &pi, nominal.util.values(), nominal.anchor)
}

/// RK4 from `h°_0 = 0` over `n` steps of signed size `step`.
fn integrate_direction(
    nominal: &NominalModel,
    map: DesignMap,
    step: f64,
    n: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut f = |_t: f64, h: &[f64]| rhs(nominal, map, h);
    let mut path = Vec::with_capacity(n + 1);
    path.push(vec![0.0; nominal.dim()]);
    for k in 0..n {
        let t = k as f64 * step;
        let next = rk4_step(&mut f, t, &path[k], step).map_err(|e| Error::IntegrationDiverged {
            zeta: t,
            reason: e.to_string(),
        })?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrationDiverged {
                zeta: t,
                reason: "non-finite h".into(),
            });
        }
        path.push(next);
    }
    Ok(path)
}

/// Solves `dh°_ζ/dζ = ℋ°(P_ζ)`, `h°_0 ≡ 0`, on `[−ζ_max, ζ_max]`.
///
/// Fixed-step RK4 with `P_ζ` re-tilted at every stage. The two directions
/// are integrated independently. Grid points are stored every `step`.
pub fn solve_design_ode(
    nominal: &NominalModel,
    map: DesignMap,
    zeta_max: f64,
    step: f64,
) -> Result<DesignFamily> {
    let n = grid_counts(zeta_max, step)?;
    let kind = match map {
        DesignMap::Ipd => DesignKind::Ipd,
        DesignMap::Spd => DesignKind::Spd,
    };
    if map == DesignMap::Spd && !nominal.nature.is_trivial() {
        log::warn!(
            "SPD with exogenous randomness: the positive-real guarantee requires P0 = R0"
        );
    }
    let d = nominal.dim();
    let trivial = nominal.util.is_constant();
    let h_circ = if trivial {
        vec![vec![0.0; d]; 2 * n + 1]
    } else {
        // Surfaces precondition failures (e.g. a reducible P‡) as themselves.
        map.apply(&nominal.base, &nominal.util, nominal.anchor)?;
        let (up, down) = join(
            || integrate_direction(nominal, map, step, n),
            || integrate_direction(nominal, map, -step, n),
        );
        let (up, down) = (up?, down?);
        let mut all: Vec<Vec<f64>> = down.into_iter().skip(1).rev().collect();
        all.extend(up);
        all
    };
    DesignFamily::from_h_circ(nominal.clone(), kind, step, n, h_circ, None, None)
}

/// Generator `H°_e` for the exponential-family kinds.
pub fn exponential_generator(
    nominal: &NominalModel,
    kind: DesignKind,
    custom: Option<&StateFunction>,
) -> Result<StateFunction> {
    match kind {
        DesignKind::Myopic => Ok(nominal.util.clone()),
        DesignKind::Ipd0 => ipd_map(&nominal.base, &nominal.util, nominal.anchor),
        DesignKind::Spd0 => spd_map(&nominal.base, &nominal.util, nominal.anchor),
        DesignKind::Custom => custom
            .cloned()
            .ok_or_else(|| Error::InvalidParameter("custom family needs a generator".into())),
        DesignKind::Ipd | DesignKind::Spd => Err(Error::InvalidParameter(format!(
            "{} is not an exponential family",
            kind.name()
        ))),
    }
}

/// Single kernel of an exponential family: tilt of `P₀` by `ζ·lift(H°_e)`.
pub fn exponential_kernel(
    nominal: &NominalModel,
    generator: &StateFunction,
    zeta: f64,
) -> Result<StochasticMatrix> {
    let h: Vec<f64> = generator.values().iter().map(|v| zeta * v).collect();
    Ok(tilt_reduced(&nominal.base, &h, &nominal.nature)?.0)
}

/// Grid family `h°_ζ = ζ H°_e` for the exponential kinds.
pub fn exponential_family(
    nominal: &NominalModel,
    kind: DesignKind,
    custom: Option<&StateFunction>,
    zeta_max: f64,
    step: f64,
) -> Result<DesignFamily> {
    let n = grid_counts(zeta_max, step)?;
    let generator = exponential_generator(nominal, kind, custom)?;
    if generator.dim() != nominal.dim() {
        return Err(Error::DimensionMismatch {
            expected: nominal.dim(),
            found: generator.dim(),
        });
    }
    let h_circ = (0..=2 * n)
        .map(|k| {
            let zeta = (k as f64 - n as f64) * step;
            generator.values().iter().map(|v| zeta * v).collect()
        })
        .collect();
    DesignFamily::from_h_circ(
        nominal.clone(),
        kind,
        step,
        n,
        h_circ,
        Some(generator.into_values()),
        None,
    )
}

/// `P_ζ = (1 − γ)I + γS_ζ` at every grid point of an existing family.
pub fn geometric_compose(family: &DesignFamily, gamma: f64) -> Result<DesignFamily> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "sampling rate must lie in (0, 1), got {gamma}"
        )));
    }
    if family.gamma.is_some() {
        return Err(Error::InvalidParameter("family is already geometric".into()));
    }
    DesignFamily::from_h_circ(
        family.nominal.clone(),
        family.kind,
        family.step,
        family.n_neg,
        family.h_circ.clone(),
        family.generator.clone(),
        Some(gamma),
    )
}

impl DesignFamily {
    /// Assembles a family from stored `h°` values and recomputes `π_ζ`, `Ū_ζ`.
    ///
    /// `h_circ` holds `2n + 1` vectors for `ζ = −n·step, …, n·step`.
    pub fn from_h_circ(
        nominal: NominalModel,
        kind: DesignKind,
        step: f64,
        n: usize,
        h_circ: Vec<Vec<f64>>,
        generator: Option<Vec<f64>>,
        gamma: Option<f64>,
    ) -> Result<Self> {
        let d = nominal.dim();
        if h_circ.len() != 2 * n + 1 {
            return Err(Error::DimensionMismatch {
                expected: 2 * n + 1,
                found: h_circ.len(),
            });
        }
        if let Some(bad) = h_circ.iter().find(|h| h.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.len(),
            });
        }
        if let Some(g) = gamma {
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::InvalidParameter(format!("invalid gamma {g}")));
            }
        }
        let trivial = nominal.util.is_constant();
        let eval = |k: usize| -> Result<Pmf> {
            let zeta = (k as f64 - n as f64) * step;
            let diverged = |reason: String| Error::IntegrationDiverged { zeta, reason };
            let (p, _) = tilt_reduced(&nominal.base, &h_circ[k], &nominal.nature)
                .map_err(|e| diverged(e.to_string()))?;
            if !p.same_support(&nominal.base) {
                return Err(diverged("support changed".into()));
            }
            invariant_pmf_unchecked(&p).map_err(|e| diverged(e.to_string()))
        };
        #[cfg(feature = "parallel")]
        let pis: Vec<Pmf> = {
            use rayon::prelude::*;
            (0..h_circ.len()).into_par_iter().map(eval).collect::<Result<_>>()?
        };
        #[cfg(not(feature = "parallel"))]
        let pis: Vec<Pmf> = (0..h_circ.len()).map(eval).collect::<Result<_>>()?;

        let mean_power = pis
            .iter()
            .map(|pi| pi.expectation(nominal.util.values()))
            .collect();
        Ok(Self {
            kind,
            nominal,
            gamma,
            step,
            n_neg: n,
            h_circ,
            pis,
            mean_power,
            generator,
            trivial,
        })
    }

    pub fn kind(&self) -> DesignKind {
        self.kind
    }

    pub fn nominal(&self) -> &NominalModel {
        &self.nominal
    }

    pub fn base(&self) -> &StochasticMatrix {
        &self.nominal.base
    }

    pub fn nature(&self) -> &NatureStructure {
        &self.nominal.nature
    }

    pub fn util(&self) -> &StateFunction {
        &self.nominal.util
    }

    pub fn anchor(&self) -> usize {
        self.nominal.anchor
    }

    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn half_count(&self) -> usize {
        self.n_neg
    }

    pub fn is_trivial(&self) -> bool {
        self.trivial
    }

    pub fn generator(&self) -> Option<&[f64]> {
        self.generator.as_deref()
    }

    pub fn structure(&self) -> Structure {
        let nature = !self.nominal.nature.is_trivial();
        match self.gamma {
            Some(gamma) => Structure::Geometric { gamma, nature },
            None if nature => Structure::Nature,
            None => Structure::Plain,
        }
    }

    pub fn len(&self) -> usize {
        self.h_circ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h_circ.is_empty()
    }

    pub fn zeta_at(&self, k: usize) -> f64 {
        (k as f64 - self.n_neg as f64) * self.step
    }

    pub fn zeta_grid(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.zeta_at(k)).collect()
    }

    pub fn zeta_range(&self) -> (f64, f64) {
        (self.zeta_at(0), self.zeta_at(self.len() - 1))
    }

    pub fn h_circ_grid(&self) -> &[Vec<f64>] {
        &self.h_circ
    }

    pub fn pmf_grid(&self) -> &[Pmf] {
        &self.pis
    }

    /// `Ū_ζ` at each grid point.
    pub fn mean_power_grid(&self) -> &[f64] {
        &self.mean_power
    }

    /// Grid index `k` and weight `w` with `ζ = ζ_k + w·step`, `w ∈ [0, 1)`.
    fn locate(&self, zeta: f64) -> Result<(usize, f64)> {
        let (min, max) = self.zeta_range();
        let slack = 1e-9 * self.step;
        if !(zeta >= min - slack && zeta <= max + slack) {
            return Err(Error::OutOfGrid { zeta, min, max });
        }
        let pos = (zeta - min) / self.step;
        let k = pos.round();
        if (pos - k).abs() * self.step <= slack {
            return Ok((k as usize, 0.0));
        }
        let k = pos.floor() as usize;
        Ok((k, pos - k as f64))
    }

    /// Index of the grid point at `ζ`, if there is one.
    pub fn grid_index(&self, zeta: f64) -> Option<usize> {
        match self.locate(zeta) {
            Ok((k, 0.0)) => Some(k),
            _ => None,
        }
    }

    /// `h°_ζ`, linearly interpolated between grid points.
    pub fn h_circ(&self, zeta: f64) -> Result<Vec<f64>> {
        let (k, w) = self.locate(zeta)?;
        if w == 0.0 {
            return Ok(self.h_circ[k].clone());
        }
        let (a, b) = (&self.h_circ[k], &self.h_circ[k + 1]);
        Ok(a.iter().zip(b).map(|(x, y)| (1.0 - w) * x + w * y).collect())
    }

    /// Tilted base kernel at `ζ` (`S_ζ` for geometric families).
    pub fn tilted_kernel(&self, zeta: f64) -> Result<StochasticMatrix> {
        let h = self.h_circ(zeta)?;
        self.tilt_h(&h)
    }

    fn tilt_h(&self, h: &[f64]) -> Result<StochasticMatrix> {
        if h.iter().all(|v| *v == 0.0) {
            return Ok(self.nominal.base.clone());
        }
        Ok(tilt_reduced(&self.nominal.base, h, &self.nominal.nature)?.0)
    }

    fn compose(&self, tilted: &StochasticMatrix) -> Result<StochasticMatrix> {
        match self.gamma {
            Some(g) => tilted.geometric(g),
            None => Ok(tilted.clone()),
        }
    }

    /// `P_ζ` as used by the loads.
    pub fn kernel(&self, zeta: f64) -> Result<StochasticMatrix> {
        let tilted = self.tilted_kernel(zeta)?;
        self.compose(&tilted)
    }

    /// Invariant pmf `π_ζ`; stored on the grid, solved for off-grid `ζ`.
    pub fn pmf(&self, zeta: f64) -> Result<Pmf> {
        let (k, w) = self.locate(zeta)?;
        if w == 0.0 {
            return Ok(self.pis[k].clone());
        }
        invariant_pmf_unchecked(&self.tilted_kernel(zeta)?)
    }

    pub fn mean_power(&self, zeta: f64) -> Result<f64> {
        Ok(self.pmf(zeta)?.expectation(self.nominal.util.values()))
    }

    pub fn point(&self, zeta: f64) -> Result<FamilyPoint> {
        let (k, w) = self.locate(zeta)?;
        let h_circ = self.h_circ(zeta)?;
        let tilted = self.tilt_h(&h_circ)?;
        let kernel = self.compose(&tilted)?;
        let pi = if w == 0.0 {
            self.pis[k].clone()
        } else {
            invariant_pmf_unchecked(&tilted)?
        };
        let mean_power = pi.expectation(self.nominal.util.values());
        Ok(FamilyPoint {
            zeta,
            h_circ,
            tilted,
            kernel,
            pi,
            mean_power,
        })
    }

    /// `H°_ζ = dh°_ζ/dζ`: `ℋ°(S_ζ)` for ODE families, `H°_e` otherwise.
    pub fn h_derivative(&self, zeta: f64) -> Result<Vec<f64>> {
        if let Some(g) = &self.generator {
            self.locate(zeta)?;
            return Ok(g.clone());
        }
        let d = self.nominal.dim();
        if self.trivial {
            self.locate(zeta)?;
            return Ok(vec![0.0; d]);
        }
        let map = self.kind.design_map().expect("ODE family has a design map");
        let tilted = self.tilted_kernel(zeta)?;
        let pi = self.pmf(zeta)?;
        map.apply_with_pmf(&tilted, &pi, self.nominal.util.values(), self.nominal.anchor)
    }

    /// `η_ζ = ζ π_ζ(𝒰) − K(S_ζ‖S₀)` for the tilted kernel.
    pub fn reward(&self, zeta: f64) -> Result<f64> {
        let tilted = self.tilted_kernel(zeta)?;
        let pi = self.pmf(zeta)?;
        let k = crate::markov::dv_rate(&tilted, &self.nominal.base, &pi)?;
        Ok(zeta * pi.expectation(self.nominal.util.values()) - k)
    }

    /// AROE residual with `h* = h°_ζ` and `η* = η_ζ`.
    pub fn aroe_residual(&self, zeta: f64) -> Result<f64> {
        let h = StateFunction::new(self.h_circ(zeta)?);
        let eta = self.reward(zeta)?;
        optimality::aroe_residual(
            &self.nominal.base,
            &self.nominal.nature,
            &self.nominal.util,
            zeta,
            &h,
            eta,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::invariant_pmf;

    fn three_state() -> NominalModel {
        let p0 = StochasticMatrix::from_rows(&[
            vec![0.5, 0.3, 0.2],
            vec![0.2, 0.5, 0.3],
            vec![0.4, 0.1, 0.5],
        ])
        .unwrap();
        NominalModel::plain(p0, StateFunction::new(vec![0.0, 1.0, 2.0])).unwrap()
    }

    #[test]
    fn zero_recovers_nominal() {
        let nominal = three_state();
        let fam = solve_design_ode(&nominal, DesignMap::Ipd, 0.5, 0.05).unwrap();
        assert_eq!(fam.kernel(0.0).unwrap(), nominal.base);
        assert_eq!(fam.zeta_grid().len(), 21);
        assert!(fam.h_circ(0.0).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn grid_invariants() {
        let nominal = three_state();
        let fam = solve_design_ode(&nominal, DesignMap::Ipd, 1.0, 0.05).unwrap();
        for (k, zeta) in fam.zeta_grid().into_iter().enumerate() {
            let p = fam.kernel(zeta).unwrap();
            assert!(p.same_support(&nominal.base));
            let pi = &fam.pmf_grid()[k];
            assert!(pi.l1_distance(&p.left_apply(pi.as_slice())) < 1e-12);
            assert_eq!(fam.h_circ_grid()[k][nominal.anchor], 0.0);
        }
        let u = fam.mean_power_grid();
        assert!(u.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn aroe_small_at_grid_points() {
        let fam = solve_design_ode(&three_state(), DesignMap::Ipd, 1.0, 0.01).unwrap();
        for zeta in [-1.0, 0.5, 1.0] {
            let r = fam.aroe_residual(zeta).unwrap();
            assert!(r < 1e-8, "zeta {zeta}: {r}");
        }
    }

    #[test]
    fn interpolation_retilts() {
        let fam = solve_design_ode(&three_state(), DesignMap::Ipd, 1.0, 0.1).unwrap();
        let h0 = fam.h_circ(0.3).unwrap();
        let h1 = fam.h_circ(0.4).unwrap();
        let mid = fam.h_circ(0.35).unwrap();
        for i in 0..3 {
            assert!((mid[i] - 0.5 * (h0[i] + h1[i])).abs() < 1e-14);
        }
        let p = fam.kernel(0.35).unwrap();
        for x in 0..3 {
            assert!((p.row(x).iter().sum::<f64>() - 1.0).abs() < 1e-14);
        }
        assert!(matches!(fam.kernel(1.5), Err(Error::OutOfGrid { .. })));
    }

    #[test]
    fn constant_utility_is_trivial() {
        let p0 = three_state().base;
        let nominal = NominalModel::plain(p0.clone(), StateFunction::constant(3, 2.0)).unwrap();
        let fam = solve_design_ode(&nominal, DesignMap::Spd, 1.0, 0.1).unwrap();
        assert!(fam.is_trivial());
        assert_eq!(fam.kernel(0.7).unwrap(), p0);
    }

    #[test]
    fn myopic_kernel_and_constant_shift() {
        let nominal = three_state();
        let g = StateFunction::new(vec![0.0, 1.0, 2.0]);
        let shifted = StateFunction::new(vec![-5.0, -4.0, -3.0]);
        let a = exponential_kernel(&nominal, &g, 0.8).unwrap();
        let b = exponential_kernel(&nominal, &shifted, 0.8).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-14);
        assert_eq!(exponential_kernel(&nominal, &g, 0.0).unwrap().max_abs_diff(&nominal.base), 0.0);
    }

    #[test]
    fn geometric_keeps_pmfs() {
        let fam = exponential_family(&three_state(), DesignKind::Myopic, None, 1.0, 0.25).unwrap();
        let geo = geometric_compose(&fam, 1.0 / 3.0).unwrap();
        for zeta in fam.zeta_grid() {
            let s = fam.kernel(zeta).unwrap();
            let p = geo.kernel(zeta).unwrap();
            let expected = s.geometric(1.0 / 3.0).unwrap();
            assert_eq!(p, expected);
            let pi = invariant_pmf(&p).unwrap();
            assert!(pi.l1_distance(fam.pmf(zeta).unwrap().as_slice()) < 1e-12);
        }
        assert!(matches!(geo.structure(), Structure::Geometric { .. }));
        assert!(geometric_compose(&fam, 1.0).is_err());
    }
}
