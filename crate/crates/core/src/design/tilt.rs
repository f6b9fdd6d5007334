use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::markov::{StateFunction, StochasticMatrix};

/// Product structure `X = X_u × X_n` with the exogenous kernel `Q₀ : X → X_n`.
///
/// States are indexed `x = u·|X_n| + n`. Without exogenous randomness
/// `X_n` is a singleton and every state is controllable.
#[derive(Debug, Clone, PartialEq)]
pub struct NatureStructure {
    n_u: usize,
    n_n: usize,
    q0: Option<StochasticMatrix>,
}

impl NatureStructure {
    /// Singleton `X_n`: all randomness is by design.
    pub fn none(dim: usize) -> Self {
        Self {
            n_u: dim,
            n_n: 1,
            q0: None,
        }
    }

    /// `q0` must be `(n_u·n_n) × n_n` and row-stochastic.
    pub fn new(n_u: usize, q0: StochasticMatrix) -> Result<Self> {
        let n_n = q0.ncols();
        if q0.dim() != n_u * n_n {
            return Err(Error::DimensionMismatch {
                expected: n_u * n_n,
                found: q0.dim(),
            });
        }
        if n_n == 1 {
            return Ok(Self::none(n_u));
        }
        Ok(Self {
            n_u,
            n_n,
            q0: Some(q0),
        })
    }

    pub fn dim(&self) -> usize {
        self.n_u * self.n_n
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn n_n(&self) -> usize {
        self.n_n
    }

    pub fn is_trivial(&self) -> bool {
        self.q0.is_none()
    }

    pub fn q0(&self) -> Option<&StochasticMatrix> {
        self.q0.as_ref()
    }

    pub fn index(&self, u: usize, n: usize) -> usize {
        u * self.n_n + n
    }

    pub fn split(&self, x: usize) -> (usize, usize) {
        (x / self.n_n, x % self.n_n)
    }

    /// `H(x, u') = Σ_{n'} Q₀(x, n') H°(u', n')`, a `d × |X_u|` matrix.
    pub fn lift_compact(&self, h_circ: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        assert_eq!(h_circ.len(), d);
        match &self.q0 {
            None => DMatrix::from_fn(d, d, |_, u| h_circ[u]),
            Some(q0) => DMatrix::from_fn(d, self.n_u, |x, u| {
                (0..self.n_n)
                    .map(|n| q0.get(x, n) * h_circ[u * self.n_n + n])
                    .sum()
            }),
        }
    }

    /// Paired form `H(x, x')` on `X × X`, constant in `x_n'`.
    pub fn lift(&self, h_circ: &[f64]) -> DMatrix<f64> {
        let compact = self.lift_compact(h_circ);
        let d = self.dim();
        DMatrix::from_fn(d, d, |x, y| compact[(x, y / self.n_n)])
    }

    /// Controllable factor `R(x, u') = Σ_{n'} P(x, (u', n'))`.
    pub fn control_kernel(&self, p: &StochasticMatrix) -> DMatrix<f64> {
        DMatrix::from_fn(p.dim(), self.n_u, |x, u| {
            (0..self.n_n).map(|n| p.get(x, self.index(u, n))).sum()
        })
    }

    /// Largest deviation from the factorization `P(x,x') = R(x,x_u') Q₀(x,x_n')`.
    pub fn factorization_error(&self, p: &StochasticMatrix) -> f64 {
        let Some(q0) = &self.q0 else {
            return 0.0;
        };
        let r = self.control_kernel(p);
        let mut err: f64 = 0.0;
        for x in 0..p.dim() {
            for y in 0..p.dim() {
                let (u, n) = self.split(y);
                err = err.max((p.get(x, y) - r[(x, u)] * q0.get(x, n)).abs());
            }
        }
        err
    }
}

/// The function `h` in `P_h(x,x') = P₀(x,x') exp(h(x,x') − Λ_h(x))`.
#[derive(Debug, Clone, PartialEq)]
pub enum TiltFunction {
    /// Arbitrary `h(x, x')`, aligned with the support of `P₀`.
    Paired(DMatrix<f64>),
    /// Reduced `h°` on `X`, lifted through `Q₀` before tilting.
    Reduced(StateFunction),
}

impl TiltFunction {
    pub fn to_paired(&self, nature: &NatureStructure) -> DMatrix<f64> {
        match self {
            TiltFunction::Paired(h) => h.clone(),
            TiltFunction::Reduced(h) => nature.lift(h.values()),
        }
    }
}

/// Log-normalizer `Λ_h(x) = log Σ_{x'} P₀(x,x') exp(h(x,x'))`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizerCache {
    pub lambda: StateFunction,
}

/// `H(x, x_u') = Σ_{x_n'} Q₀(x, x_n') H°(x_u', x_n')` in paired form.
pub fn lift_nature(h_circ: &StateFunction, nature: &NatureStructure) -> TiltFunction {
    TiltFunction::Paired(nature.lift(h_circ.values()))
}

/// Exponential tilt of `P₀` by `h`; see [`tilt_with`].
pub fn tilt(
    p0: &StochasticMatrix,
    h: &TiltFunction,
    nature: &NatureStructure,
) -> Result<(StochasticMatrix, NormalizerCache)> {
    let paired = h.to_paired(nature);
    if paired.shape() != p0.matrix().shape() {
        return Err(Error::DimensionMismatch {
            expected: p0.dim(),
            found: paired.nrows(),
        });
    }
    tilt_with(p0, |x, y| paired[(x, y)])
}

/// Tilt of `P₀` by the reduced function `h°`.
pub fn tilt_reduced(
    p0: &StochasticMatrix,
    h_circ: &[f64],
    nature: &NatureStructure,
) -> Result<(StochasticMatrix, NormalizerCache)> {
    if h_circ.len() != p0.dim() || nature.dim() != p0.dim() {
        return Err(Error::DimensionMismatch {
            expected: p0.dim(),
            found: h_circ.len(),
        });
    }
    let compact = nature.lift_compact(h_circ);
    let n_n = nature.n_n();
    tilt_with(p0, |x, y| compact[(x, y / n_n)])
}

/// Row-wise tilt with a max-shifted log-sum-exp.
///
/// Fails with `NonFinite` when `h` is not finite on the support, or when a
/// supported entry underflows to zero (the tilt would change the support).
pub fn tilt_with<F>(p0: &StochasticMatrix, h: F) -> Result<(StochasticMatrix, NormalizerCache)>
where
    F: Fn(usize, usize) -> f64,
{
    let d = p0.dim();
    let p0m = p0.matrix();
    let mut out = DMatrix::zeros(d, p0.ncols());
    let mut lambda = Vec::with_capacity(d);
    let mut support = Vec::with_capacity(p0.ncols());
    for x in 0..d {
        support.clear();
        support.extend((0..p0.ncols()).filter(|&y| p0m[(x, y)] > 0.0));
        let mut shift = f64::NEG_INFINITY;
        for &y in &support {
            let v = h(x, y);
            if !v.is_finite() {
                return Err(Error::NonFinite { state: x });
            }
            shift = shift.max(v);
        }
        let s: f64 = support
            .iter()
            .map(|&y| p0m[(x, y)] * (h(x, y) - shift).exp())
            .sum();
        let lam = shift + s.ln();
        if !lam.is_finite() {
            return Err(Error::NonFinite { state: x });
        }
        for &y in &support {
            let v = p0m[(x, y)] * (h(x, y) - lam).exp();
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NonFinite { state: x });
            }
            out[(x, y)] = v;
        }
        lambda.push(lam);
    }
    Ok((
        StochasticMatrix::from_matrix_unchecked(out),
        NormalizerCache {
            lambda: StateFunction::new(lambda),
        },
    ))
}

/// Probability of leaving the current state, `1 − P(x,x)`.
///
/// When the design is applied to `P₀ = (1−γ)I + γS₀` with `S₀` free of
/// self-loops, this is the state-dependent sampling rate `γ_ζ(x)`.
pub fn sampling_rate_diagnostic(p: &StochasticMatrix) -> Vec<f64> {
    (0..p.dim()).map(|x| 1.0 - p.get(x, x)).collect()
}
