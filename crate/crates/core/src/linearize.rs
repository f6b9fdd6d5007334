//! Linearization of the mean-field recursion `μ_{t+1} = μ_t P_{ζ_t}` and
//! frequency-domain analysis of the resulting state-space model.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;

use crate::design::{adjoint_product, DesignFamily};
use crate::error::{Error, Result};
use crate::markov::{Pmf, StochasticMatrix};

/// Complex scalar used for transfer-function values.
pub type C64 = Complex<f64>;

/// Below this modulus the transfer function is evaluated without deflation.
const DEFLATION_RADIUS: f64 = 0.5;
/// Passivity tolerance on the realness margin.
pub const MARGIN_TOL: f64 = -1e-8;
/// Default number of frequency points on `[0, π]`.
pub const DEFAULT_THETA_COUNT: usize = 2048;

/// `𝓔(x,x') = P(x,x') [H(x,x') − Σ_{x''} P(x,x'') H(x,x'')]`.
///
/// This is `dP_ζ/dζ` when `H = dh_ζ/dζ`. Rows sum to zero.
pub fn kernel_derivative(p: &StochasticMatrix, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = p.dim();
    if h.nrows() != d || h.ncols() != p.ncols() {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: h.nrows(),
        });
    }
    let pm = p.matrix();
    let mut e = DMatrix::zeros(d, p.ncols());
    for x in 0..d {
        let mean: f64 = (0..p.ncols())
            .filter(|&y| pm[(x, y)] > 0.0)
            .map(|y| pm[(x, y)] * h[(x, y)])
            .sum();
        for y in 0..p.ncols() {
            if pm[(x, y)] > 0.0 {
                e[(x, y)] = pm[(x, y)] * (h[(x, y)] - mean);
            }
        }
    }
    Ok(e)
}

/// `(A, B, C)` of the linearized model at one `ζ`, with `A = P_ζᵀ`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub zeta: f64,
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub sigma2: f64,
    pub pi: Pmf,
    /// `B` from the adjoint-product form, present when `H_ζ` depends only on `x'`.
    pub b_adjoint: Option<Vec<f64>>,
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// `P_ζ`, recovered from `A`.
    pub fn kernel(&self) -> StochasticMatrix {
        StochasticMatrix::from_matrix_unchecked(self.a.transpose())
    }

    /// Markov parameters `C A^k B` for `k = 0..=k_max`.
    pub fn markov_parameters(&self, k_max: usize) -> Vec<f64> {
        let c = DVector::from_column_slice(&self.c);
        let mut w = DVector::from_column_slice(&self.b);
        let mut out = Vec::with_capacity(k_max + 1);
        for k in 0..=k_max {
            out.push(c.dot(&w));
            if k < k_max {
                w = &self.a * w;
            }
        }
        out
    }

    /// `𝒰̃_B = B / π`.
    pub fn util_b(&self) -> Vec<f64> {
        self.b
            .iter()
            .zip(self.pi.as_slice())
            .map(|(b, p)| b / p)
            .collect()
    }
}

/// Column-constant paired function, returned as a function of `x'`.
fn target_only(h: &DMatrix<f64>) -> Option<Vec<f64>> {
    let scale = h.amax().max(1.0);
    let first: Vec<f64> = h.row(0).iter().copied().collect();
    for x in 1..h.nrows() {
        for (y, v) in first.iter().enumerate() {
            if (h[(x, y)] - v).abs() > 1e-13 * scale {
                return None;
            }
        }
    }
    Some(first)
}

/// Linearizes the family at `ζ`.
///
/// `H_ζ` is `dh°/dζ` at `ζ` (the design map for ODE families, the fixed
/// generator otherwise), lifted through `Q₀`. Geometric families use
/// `𝓔_P = γ 𝓔_S`.
pub fn linearize(family: &DesignFamily, zeta: f64) -> Result<LinearModel> {
    let point = family.point(zeta)?;
    let h_der = family.h_derivative(zeta)?;
    let paired = family.nature().lift(&h_der);
    let gamma = family.gamma().unwrap_or(1.0);
    let e = kernel_derivative(&point.tilted, &paired)? * gamma;
    let d = family.base().dim();
    let pi = point.pi;
    let b: Vec<f64> = (0..d)
        .map(|i| (0..d).map(|x| pi.as_slice()[x] * e[(x, i)]).sum())
        .collect();
    let util = family.util();
    let c: Vec<f64> = if util.is_constant() {
        vec![0.0; d]
    } else {
        util.values().iter().map(|u| u - point.mean_power).collect()
    };
    let sigma2 = c
        .iter()
        .zip(pi.as_slice())
        .map(|(c, p)| p * c * c)
        .sum();
    // Needs π > 0 everywhere; skipped when some state has negligible mass.
    let b_adjoint = target_only(&paired).and_then(|h| {
        let pp = adjoint_product(&point.tilted, &pi).ok()?;
        let ph = pp.apply(&h);
        Some(
            (0..d)
                .map(|i| gamma * pi.as_slice()[i] * (h[i] - ph[i]))
                .collect(),
        )
    });
    Ok(LinearModel {
        zeta,
        a: point.kernel.matrix().transpose(),
        b,
        c,
        sigma2,
        pi,
        b_adjoint,
    })
}

/// Upper Hessenberg reduction `M = Q H Qᵀ` with `C Q` and `Qᵀ B` cached.
#[derive(Debug, Clone)]
struct Reduced {
    h: DMatrix<f64>,
    cq: Vec<f64>,
    qtb: Vec<f64>,
    scale: f64,
}

impl Reduced {
    fn new(m: DMatrix<f64>, b: &[f64], c: &[f64]) -> Self {
        let scale = m.amax().max(1.0);
        let (q, h) = nalgebra::linalg::Hessenberg::new(m).unpack();
        let cq = (q.transpose() * DVector::from_column_slice(c)).as_slice().to_vec();
        let qtb = (q.transpose() * DVector::from_column_slice(b)).as_slice().to_vec();
        Self { h, cq, qtb, scale }
    }

    /// `C (zI − M)⁻¹ B` by Gaussian elimination on the Hessenberg form.
    fn eval(&self, z: C64) -> Result<C64> {
        let n = self.h.nrows();
        if n == 0 {
            return Ok(C64::new(0.0, 0.0));
        }
        let mut m: Vec<Vec<C64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let v = C64::new(-self.h[(i, j)], 0.0);
                        if i == j {
                            v + z
                        } else {
                            v
                        }
                    })
                    .collect()
            })
            .collect();
        let mut rhs: Vec<C64> = self.qtb.iter().map(|v| C64::new(*v, 0.0)).collect();
        let tiny = 1e-14 * (self.scale + z.norm());
        for k in 0..n {
            if k + 1 < n && m[k + 1][k].norm() > m[k][k].norm() {
                m.swap(k, k + 1);
                rhs.swap(k, k + 1);
            }
            if m[k][k].norm() <= tiny {
                return Err(Error::NearSingular);
            }
            if k + 1 < n {
                let l = m[k + 1][k] / m[k][k];
                if l != C64::new(0.0, 0.0) {
                    for j in k..n {
                        let t = m[k][j];
                        m[k + 1][j] -= l * t;
                    }
                    let t = rhs[k];
                    rhs[k + 1] -= l * t;
                }
            }
        }
        let mut w = vec![C64::new(0.0, 0.0); n];
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for j in i + 1..n {
                s -= m[i][j] * w[j];
            }
            w[i] = s / m[i][i];
        }
        Ok(self.cq.iter().zip(&w).map(|(c, w)| w * *c).sum())
    }
}

/// Repeated evaluation of `G(z) = C(zI − A)⁻¹B` and `G⁺(z) = z G(z)`.
///
/// For `|z| ≥ 0.5` the Perron pair is deflated, `A' = A − π 1ᵀ`, which is
/// exact because `1ᵀB = 0`, and keeps `z = 1` off the spectrum.
#[derive(Debug, Clone)]
pub struct TransferEvaluator {
    deflated: Reduced,
    direct: Reduced,
}

impl TransferEvaluator {
    pub fn new(model: &LinearModel) -> Self {
        let d = model.dim();
        let pi = model.pi.as_slice();
        let deflated = DMatrix::from_fn(d, d, |i, j| model.a[(i, j)] - pi[i]);
        Self {
            deflated: Reduced::new(deflated, &model.b, &model.c),
            direct: Reduced::new(model.a.clone(), &model.b, &model.c),
        }
    }

    /// `(G(z), G⁺(z))`.
    pub fn eval(&self, z: C64) -> Result<(C64, C64)> {
        let g = if z.norm() < DEFLATION_RADIUS {
            self.direct.eval(z)?
        } else {
            self.deflated.eval(z)?
        };
        Ok((g, g * z))
    }
}

/// `(G(z), G⁺(z))` for a single `z`.
pub fn transfer_eval(model: &LinearModel, z: C64) -> Result<(C64, C64)> {
    TransferEvaluator::new(model).eval(z)
}

/// Spectral radius of `A` restricted to the complement of the Perron pair.
pub fn deflated_spectral_radius(model: &LinearModel) -> f64 {
    let d = model.dim();
    let pi = model.pi.as_slice();
    let m = DMatrix::from_fn(d, d, |i, j| model.a[(i, j)] - pi[i]);
    m.complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max)
}

/// Sampled frequency response on `θ ∈ [0, π]`.
#[derive(Debug, Clone, Serialize)]
pub struct FrequencyResponse {
    pub zeta: f64,
    pub sigma2: f64,
    pub theta: Vec<f64>,
    #[serde(skip)]
    pub g: Vec<C64>,
    #[serde(skip)]
    pub g_plus: Vec<C64>,
    /// `G⁺(e^{jθ}) + G⁺(e^{−jθ})`, real part.
    pub gplus_sum: Vec<f64>,
    /// `min_θ [G⁺(e^{jθ}) + G⁺(e^{−jθ}) − σ²]`.
    pub realness_margin: f64,
    pub passes: bool,
}

pub fn theta_grid(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        n => (0..n).map(|k| PI * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Evaluates `G⁺` on the unit circle and the realness margin.
pub fn positive_real_check(model: &LinearModel, theta_count: usize) -> Result<FrequencyResponse> {
    if theta_count == 0 {
        return Err(Error::InvalidParameter("theta_count must be positive".into()));
    }
    let radius = deflated_spectral_radius(model);
    if radius >= 1.0 - 1e-12 {
        return Err(Error::UnstablePole { radius });
    }
    let ev = TransferEvaluator::new(model);
    let theta = theta_grid(theta_count);
    let mut g = Vec::with_capacity(theta_count);
    let mut g_plus = Vec::with_capacity(theta_count);
    let mut gplus_sum = Vec::with_capacity(theta_count);
    let mut margin = f64::INFINITY;
    for &t in &theta {
        let z = C64::from_polar(1.0, t);
        let (gz, gp) = ev.eval(z)?;
        let (_, gm) = ev.eval(z.conj())?;
        let sum = (gp + gm).re;
        margin = margin.min(sum - model.sigma2);
        g.push(gz);
        g_plus.push(gp);
        gplus_sum.push(sum);
    }
    Ok(FrequencyResponse {
        zeta: model.zeta,
        sigma2: model.sigma2,
        theta,
        g,
        g_plus,
        gplus_sum,
        realness_margin: margin,
        passes: margin >= MARGIN_TOL,
    })
}

/// `E[f(X(0)) g(X(k))]` under the stationary chain, `k = 0..=k_max`.
pub fn covariance_sequence(
    p: &StochasticMatrix,
    pi: &Pmf,
    f: &[f64],
    g: &[f64],
    k_max: usize,
) -> Result<Vec<f64>> {
    let d = p.dim();
    if pi.dim() != d || f.len() != d || g.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: f.len().min(g.len()).min(pi.dim()),
        });
    }
    let weights: Vec<f64> = pi.as_slice().iter().zip(f).map(|(p, f)| p * f).collect();
    let mut v = g.to_vec();
    let mut out = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        out.push(weights.iter().zip(&v).map(|(w, v)| w * v).sum());
        if k < k_max {
            v = p.apply(&v);
        }
    }
    Ok(out)
}

/// Stationary autocovariances `c_k` of `𝒰̃`, truncated once the tail is negligible.
pub fn autocovariance(model: &LinearModel, max_terms: usize) -> Vec<f64> {
    let p = model.kernel();
    let pi = model.pi.as_slice();
    let abs_mean: f64 = pi.iter().zip(&model.c).map(|(p, c)| p * c.abs()).sum();
    let tol = 1e-14 * model.sigma2;
    let mut v = model.c.clone();
    let mut out = Vec::new();
    while out.len() < max_terms {
        out.push(pi.iter().zip(&model.c).zip(&v).map(|((p, c), v)| p * c * v).sum());
        // |c_k| ≤ ‖P^k 𝒰̃‖∞ E|𝒰̃| and ‖Pv‖∞ ≤ ‖v‖∞, so later terms are smaller still.
        let sup = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if sup * abs_mean < tol {
            break;
        }
        v = p.apply(&v);
    }
    out
}

/// `S⁺(θ) = σ² + Σ_{k≥1} c_k (e^{jkθ} + e^{−jkθ})`.
pub fn psd(model: &LinearModel, theta: &[f64]) -> Vec<f64> {
    let c = autocovariance(model, 1_000_000);
    theta
        .iter()
        .map(|t| {
            c.iter()
                .enumerate()
                .skip(1)
                .map(|(k, ck)| 2.0 * ck * (k as f64 * t).cos())
                .sum::<f64>()
                + c.first().copied().unwrap_or(0.0)
        })
        .collect()
}

/// Writes `(label, response)` pairs as one wide CSV, one column group per label.
///
/// With `period_s` set, a `freq_hz` column is added after `theta_rad`.
pub fn bode_export<W: Write>(
    out: W,
    responses: &[(String, FrequencyResponse)],
    period_s: Option<f64>,
) -> Result<()> {
    let theta = responses.first().map(|(_, r)| r.theta.clone()).unwrap_or_default();
    if let Some((label, _)) = responses.iter().find(|(_, r)| r.theta != theta) {
        return Err(Error::InvalidParameter(format!(
            "response '{label}' uses a different frequency grid"
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["theta_rad".to_string()];
    if period_s.is_some() {
        header.push("freq_hz".into());
    }
    for (label, _) in responses {
        for col in ["mag_db", "phase_deg", "re_gplus_sum", "margin"] {
            header.push(format!("{label}:{col}"));
        }
    }
    w.write_record(&header)?;
    for (i, t) in theta.iter().enumerate() {
        let mut row = vec![t.to_string()];
        if let Some(ts) = period_s {
            row.push((t / (2.0 * PI * ts)).to_string());
        }
        for (_, r) in responses {
            let gp = r.g_plus[i];
            row.push((20.0 * gp.norm().log10()).to_string());
            row.push(gp.arg().to_degrees().to_string());
            row.push(r.gplus_sum[i].to_string());
            row.push((r.gplus_sum[i] - r.sigma2).to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{
        exponential_family, exponential_kernel, solve_design_ode, DesignKind, DesignMap,
        NominalModel,
    };
    use crate::markov::StateFunction;
    use approx::assert_abs_diff_eq;

    fn two_state() -> NominalModel {
        let p = StochasticMatrix::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        NominalModel::plain(p, StateFunction::new(vec![0.0, 1.0])).unwrap()
    }

    fn four_state() -> NominalModel {
        let p = StochasticMatrix::from_rows(&[
            vec![0.6, 0.2, 0.2, 0.0],
            vec![0.1, 0.5, 0.3, 0.1],
            vec![0.0, 0.3, 0.4, 0.3],
            vec![0.25, 0.0, 0.25, 0.5],
        ])
        .unwrap();
        NominalModel::plain(p, StateFunction::new(vec![0.0, 1.0, 3.0, 2.0])).unwrap()
    }

    #[test]
    fn constant_h_gives_zero_derivative() {
        let p = four_state().base;
        let e = kernel_derivative(&p, &DMatrix::from_element(4, 4, 2.5)).unwrap();
        assert!(e.amax() < 1e-15);
    }

    #[test]
    fn derivative_matches_central_difference() {
        let nominal = four_state();
        let g = nominal.util.clone();
        let zeta = 0.7;
        let p = exponential_kernel(&nominal, &g, zeta).unwrap();
        let e = kernel_derivative(&p, &nominal.nature.lift(g.values())).unwrap();
        let fd = |delta: f64| {
            let hi = exponential_kernel(&nominal, &g, zeta + delta).unwrap();
            let lo = exponential_kernel(&nominal, &g, zeta - delta).unwrap();
            ((hi.matrix() - lo.matrix()) / (2.0 * delta) - &e).amax()
        };
        let ratio = fd(1e-3) / fd(5e-4);
        assert!((ratio - 4.0).abs() < 0.3, "ratio {ratio}");
        for x in 0..4 {
            assert!(e.row(x).sum().abs() < 1e-15);
        }
    }

    #[test]
    fn two_state_transfer_function() {
        // B = (−β, β) is an eigenvector of A with eigenvalue λ = 1 − a − b,
        // so G(z) = β / (z − λ) with β = Σ_x π(x) P(x,2)(1 − P(x,2)).
        let fam = exponential_family(&two_state(), DesignKind::Myopic, None, 1.0, 0.5).unwrap();
        let lin = linearize(&fam, 0.0).unwrap();
        let beta = 2.0 / 3.0 * 0.1 * 0.9 + 1.0 / 3.0 * 0.8 * 0.2;
        assert_abs_diff_eq!(lin.b[1], beta, epsilon = 1e-14);
        let ev = TransferEvaluator::new(&lin);
        for z in [C64::new(0.3, 0.1), C64::new(1.0, 0.0), C64::from_polar(1.0, 2.0), C64::new(-2.0, 0.5)] {
            let (g, gp) = ev.eval(z).unwrap();
            let expected = beta / (z - 0.7);
            assert!((g - expected).norm() < 1e-13);
            assert!((gp - z * expected).norm() < 1e-13);
        }
    }

    #[test]
    fn series_expansion_outside_unit_disk() {
        let fam = solve_design_ode(&four_state(), DesignMap::Ipd, 1.0, 0.05).unwrap();
        let lin = linearize(&fam, 0.5).unwrap();
        let z = C64::new(1.2, 1.6);
        let (_, gp) = transfer_eval(&lin, z).unwrap();
        let mk = lin.markov_parameters(80);
        let series: C64 = mk.iter().enumerate().map(|(k, m)| *m * z.powi(-(k as i32))).sum();
        assert!((gp - series).norm() < 1e-12);
    }

    #[test]
    fn constant_util_has_zero_response() {
        let p = four_state().base;
        let nominal = NominalModel::plain(p, StateFunction::constant(4, 1.0)).unwrap();
        let fam = exponential_family(&nominal, DesignKind::Myopic, None, 1.0, 0.5).unwrap();
        let lin = linearize(&fam, 0.5).unwrap();
        assert!(lin.c.iter().all(|c| *c == 0.0));
        let (g, _) = transfer_eval(&lin, C64::new(0.0, 1.0)).unwrap();
        assert_eq!(g.norm(), 0.0);
    }

    #[test]
    fn covariance_of_iid_chain_vanishes() {
        let row = vec![0.2, 0.5, 0.3];
        let p = StochasticMatrix::from_rows(&[row.clone(), row.clone(), row.clone()]).unwrap();
        let pi = Pmf::new(row).unwrap();
        let f = [1.0, -2.0, 0.5];
        let mean: f64 = pi.expectation(&f);
        let centered: Vec<f64> = f.iter().map(|v| v - mean).collect();
        let cov = covariance_sequence(&p, &pi, &centered, &centered, 5).unwrap();
        let var: f64 = pi.expectation(&centered.iter().map(|c| c * c).collect::<Vec<_>>());
        assert_abs_diff_eq!(cov[0], var, epsilon = 1e-15);
        assert!(cov[1..].iter().all(|c| c.abs() < 1e-15));
    }

    #[test]
    fn lemma_and_psd_identity_for_spd() {
        let fam = solve_design_ode(&four_state(), DesignMap::Spd, 1.0, 0.05).unwrap();
        for zeta in [-1.0, 0.0, 0.5] {
            let lin = linearize(&fam, zeta).unwrap();
            let ub = lin.util_b();
            for (a, b) in ub.iter().zip(&lin.c) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
            let cov = covariance_sequence(&lin.kernel(), &lin.pi, &ub, &lin.c, 20).unwrap();
            for (a, b) in cov.iter().zip(lin.markov_parameters(20)) {
                assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
            }
            let fr = positive_real_check(&lin, 64).unwrap();
            assert!(fr.passes, "margin {}", fr.realness_margin);
            let s = psd(&lin, &fr.theta);
            for (k, sp) in s.iter().enumerate() {
                assert!(*sp >= -1e-12);
                assert_abs_diff_eq!(fr.gplus_sum[k], sp + lin.sigma2, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn adjoint_form_of_b_agrees() {
        let fam = exponential_family(&four_state(), DesignKind::Myopic, None, 1.0, 0.5).unwrap();
        let lin = linearize(&fam, 0.5).unwrap();
        let alt = lin.b_adjoint.clone().unwrap();
        for (a, b) in lin.b.iter().zip(&alt) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        assert!(lin.b.iter().sum::<f64>().abs() < 1e-14);
    }

    #[test]
    fn bode_empty_and_single() {
        let mut buf = Vec::new();
        bode_export(&mut buf, &[], None).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim(), "theta_rad");

        let fam = exponential_family(&two_state(), DesignKind::Myopic, None, 1.0, 0.5).unwrap();
        let fr = positive_real_check(&linearize(&fam, 0.0).unwrap(), 5).unwrap();
        let mut buf = Vec::new();
        bode_export(&mut buf, &[("myopic".into(), fr)], Some(300.0)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0].split(',').count(), 6);
    }
}
