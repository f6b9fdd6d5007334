use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{
    self, check_irreducible_aperiodic, invariant_pmf_unchecked, Pmf, StateFunction,
    StochasticMatrix,
};

/// The map `P ↦ ℋ°(P)` driving the design ODE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignMap {
    /// Poisson solution for `(P, 𝒰)` through the fundamental matrix of `P`.
    Ipd,
    /// Poisson solution for `(P†P, 𝒰)`.
    Spd,
}

fn check_inputs(p: &StochasticMatrix, util: &StateFunction, anchor: usize) -> Result<()> {
    if !p.is_square() || util.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: util.dim(),
        });
    }
    if anchor >= p.dim() {
        return Err(Error::InvalidParameter(format!("anchor {anchor} out of range")));
    }
    let report = check_irreducible_aperiodic(p);
    if !report.irreducible {
        return Err(Error::NotIrreducible);
    }
    if !report.aperiodic {
        return Err(Error::NotAperiodic {
            period: report.period,
        });
    }
    Ok(())
}

/// IPD map: `H°(x) = Σ_{x'} [Z(x,x') − Z(x°,x')] 𝒰(x')`.
pub fn ipd_map(p: &StochasticMatrix, util: &StateFunction, anchor: usize) -> Result<StateFunction> {
    check_inputs(p, util, anchor)?;
    let pi = invariant_pmf_unchecked(p)?;
    Ok(StateFunction::new(ipd_with_pmf(p, &pi, util.values(), anchor)?))
}

/// SPD map: as [`ipd_map`] with `Z‡ = [I − P†P + 1⊗π]⁻¹` in place of `Z`.
pub fn spd_map(p: &StochasticMatrix, util: &StateFunction, anchor: usize) -> Result<StateFunction> {
    check_inputs(p, util, anchor)?;
    let pi = invariant_pmf_unchecked(p)?;
    Ok(StateFunction::new(spd_with_pmf(p, &pi, util.values(), anchor)?))
}

/// `P‡ = P†P`, the adjoint product.
pub fn adjoint_product(p: &StochasticMatrix, pi: &Pmf) -> Result<StochasticMatrix> {
    markov::adjoint(p, pi)?.product(p)
}

pub(crate) fn ipd_with_pmf(
    p: &StochasticMatrix,
    pi: &Pmf,
    util: &[f64],
    anchor: usize,
) -> Result<Vec<f64>> {
    markov::poisson_with_pmf(p.matrix(), pi, util, anchor)
}

pub(crate) fn spd_with_pmf(
    p: &StochasticMatrix,
    pi: &Pmf,
    util: &[f64],
    anchor: usize,
) -> Result<Vec<f64>> {
    let pp = adjoint_product(p, pi)?;
    if !check_irreducible_aperiodic(&pp).irreducible {
        return Err(Error::AdjointProductReducible);
    }
    markov::poisson_with_pmf(pp.matrix(), pi, util, anchor)
}

impl DesignMap {
    pub fn apply(self, p: &StochasticMatrix, util: &StateFunction, anchor: usize) -> Result<StateFunction> {
        match self {
            DesignMap::Ipd => ipd_map(p, util, anchor),
            DesignMap::Spd => spd_map(p, util, anchor),
        }
    }

    pub(crate) fn apply_with_pmf(
        self,
        p: &StochasticMatrix,
        pi: &Pmf,
        util: &[f64],
        anchor: usize,
    ) -> Result<Vec<f64>> {
        match self {
            DesignMap::Ipd => ipd_with_pmf(p, pi, util, anchor),
            DesignMap::Spd => spd_with_pmf(p, pi, util, anchor),
        }
    }
}

/// Dense fundamental matrix of the adjoint product, `Z‡`.
pub fn adjoint_fundamental(p: &StochasticMatrix, pi: &Pmf) -> Result<DMatrix<f64>> {
    let pp = adjoint_product(p, pi)?;
    markov::fundamental_matrix(&pp, pi)
}
