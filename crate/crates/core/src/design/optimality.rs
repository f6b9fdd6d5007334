use crate::design::tilt::{tilt_reduced, NatureStructure};
use crate::error::{Error, Result};
use crate::markov::{dv_rate, invariant_pmf, StateFunction, StochasticMatrix};

/// `η = ζ π(𝒰) − K(P‖P₀)` with `π` the invariant pmf of `P`.
pub fn reward_value(
    p: &StochasticMatrix,
    p0: &StochasticMatrix,
    util: &StateFunction,
    zeta: f64,
) -> Result<f64> {
    let pi = invariant_pmf(p)?;
    Ok(zeta * pi.expectation(util.values()) - dv_rate(p, p0, &pi)?)
}

/// Largest violation of the average-reward optimality equation.
///
/// The inner maximum of `𝒲_ζ(x, P) + Σ P(x,x') h*(x')` over kernels of the
/// form `R(x,x_u') Q₀(x,x_n')` is attained by the tilt of `P₀` by the lifted
/// `h*`, and its value is the log-normalizer `Λ(x)`. The residual is therefore
/// `max_x |ζ𝒰(x) + Λ(x) − h*(x) − η*|`.
pub fn aroe_residual(
    p0: &StochasticMatrix,
    nature: &NatureStructure,
    util: &StateFunction,
    zeta: f64,
    h_star: &StateFunction,
    eta_star: f64,
) -> Result<f64> {
    let d = p0.dim();
    if util.dim() != d || h_star.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: h_star.dim(),
        });
    }
    let (_, cache) = tilt_reduced(p0, h_star.values(), nature)?;
    Ok((0..d)
        .map(|x| {
            (zeta * util.values()[x] + cache.lambda.values()[x] - h_star.values()[x] - eta_star).abs()
        })
        .fold(0.0, f64::max))
}
