//! Acceptance criteria. Each test prints one PASS/FAIL line.

mod common;

use std::time::Instant;

use common::{max_abs, random_chain, random_util, report, rng};
use ddispatch::design::{
    exponential_family, geometric_compose, lift_nature, solve_design_ode, tilt, DesignFamily,
    DesignKind, DesignMap, NatureStructure, NominalModel, TiltFunction,
};
use ddispatch::linearize::{
    covariance_sequence, kernel_derivative, linearize, positive_real_check, theta_grid,
    TransferEvaluator, DEFAULT_THETA_COUNT,
};
use ddispatch::loads::{build_pool_model, build_tcl_model, tcl_trajectory, PoolModelSpec, TclModelSpec};
use ddispatch::markov::{
    adjoint, fundamental_matrix, invariant_pmf, poisson_solve, StateFunction, StochasticMatrix,
};
use ddispatch::sim::{frequency_decompose, synthetic_net_load, FleetState, KernelSampler};
use ddispatch::Error;
use nalgebra::{Complex, DMatrix};
use rand::Rng;

fn verdict(id: &str, pass: bool, detail: String) {
    report(id, pass, &detail);
    assert!(pass, "{id}: {detail}");
}

fn pool_nominal() -> NominalModel {
    let m = build_pool_model(&PoolModelSpec::default()).unwrap();
    NominalModel::new(m.p0, NatureStructure::none(96), m.util, m.anchor).unwrap()
}

/// `S₀` with its nature structure, and `γ`.
fn tcl_nominal() -> (TclModelSpec, NominalModel) {
    let spec = TclModelSpec::default();
    let m = build_tcl_model(&spec).unwrap();
    let nominal = NominalModel::new(m.s0, m.nature, m.util, m.anchor).unwrap();
    (spec, nominal)
}

#[test]
fn ac01_structural_suite() {
    let start = Instant::now();
    let mut r = rng(1);
    let (mut pi_res, mut z_res, mut adj_res, mut pois_res) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for trial in 0..200 {
        let d = 2 + trial % 49;
        let p = random_chain(&mut r, d, 0.15);
        let f = random_util(&mut r, d);
        let pi = invariant_pmf(&p).unwrap();
        pi_res = pi_res.max(max_abs(
            p.left_apply(pi.as_slice()).iter().zip(pi.as_slice()).map(|(a, b)| a - b),
        ));
        let z = fundamental_matrix(&p, &pi).unwrap();
        let m = DMatrix::from_fn(d, d, |i, j| {
            (if i == j { 1.0 } else { 0.0 }) - p.get(i, j) + pi.as_slice()[j]
        });
        z_res = z_res.max((z * m - DMatrix::identity(d, d)).amax());
        let back = adjoint(&adjoint(&p, &pi).unwrap(), &pi).unwrap();
        adj_res = adj_res.max(back.max_abs_diff(&p));
        let h = poisson_solve(&p, &f, 0).unwrap();
        let mean = pi.expectation(f.values());
        let ph = p.apply(h.values());
        pois_res = pois_res.max(max_abs(
            (0..d).map(|x| ph[x] - h.values()[x] + f.values()[x] - mean),
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = pi_res <= 1e-12 && z_res <= 1e-10 && adj_res <= 1e-12 && pois_res <= 1e-10 && secs < 10.0;
    verdict(
        "AC1",
        pass,
        format!("pi {pi_res:.1e}, Z {z_res:.1e}, adjoint {adj_res:.1e}, Poisson {pois_res:.1e}, {secs:.1}s"),
    );
}

#[test]
fn ac02_tilt_correctness() {
    let mut r = rng(2);
    let (mut zero, mut shift) = (0.0f64, 0.0f64);
    let mut support = true;
    for d in [3, 8, 20, 40] {
        let p0 = random_chain(&mut r, d, 0.3);
        let nature = NatureStructure::none(d);
        let (p, _) = tilt(&p0, &TiltFunction::Paired(DMatrix::zeros(d, d)), &nature).unwrap();
        zero = zero.max(p.max_abs_diff(&p0));
        let h = DMatrix::from_fn(d, d, |_, _| r.random_range(-2.0..2.0));
        let (a, _) = tilt(&p0, &TiltFunction::Paired(h.clone()), &nature).unwrap();
        let shifted = DMatrix::from_fn(d, d, |i, j| h[(i, j)] + 5.0 + i as f64);
        let (b, _) = tilt(&p0, &TiltFunction::Paired(shifted), &nature).unwrap();
        shift = shift.max(a.max_abs_diff(&b));
        support &= a.same_support(&p0);
        let lifted = lift_nature(&random_util(&mut r, d), &nature);
        support &= tilt(&p0, &lifted, &nature).unwrap().0.same_support(&p0);
    }
    let pass = zero <= 1e-15 && shift <= 1e-12 && support;
    verdict("AC2", pass, format!("zero tilt {zero:.1e}, shift {shift:.1e}, support kept {support}"));
}

fn ipd_residuals(nominal: &NominalModel, step: f64) -> Vec<f64> {
    let fam = solve_design_ode(nominal, DesignMap::Ipd, 1.0, step).unwrap();
    [-1.0, 0.5, 1.0].iter().map(|z| fam.aroe_residual(*z).unwrap()).collect()
}

#[test]
fn ac03_aroe_certificate() {
    let start = Instant::now();
    let mut r = rng(3);
    let mut worst = 0.0f64;
    let mut ratios = Vec::new();
    for d in [3, 5, 10] {
        let p0 = random_chain(&mut r, d, 0.5);
        let nominal = NominalModel::plain(p0, random_util(&mut r, d)).unwrap();
        let fine = ipd_residuals(&nominal, 0.01);
        let coarse = ipd_residuals(&nominal, 0.02);
        worst = worst.max(max_abs(fine.iter().copied()));
        ratios.extend(coarse.iter().zip(&fine).map(|(c, f)| c / f));
    }
    let secs = start.elapsed().as_secs_f64();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
    let pass = worst <= 1e-4 && lo >= 12.0 && hi <= 20.0 && secs < 30.0;
    verdict(
        "AC3",
        pass,
        format!("max residual {worst:.1e}, halving ratios in [{lo:.2}, {hi:.2}], {secs:.1}s"),
    );
}

fn monotone_violation(fam: &DesignFamily) -> f64 {
    fam.mean_power_grid()
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(0.0, f64::max)
}

#[test]
fn ac04_mean_power_monotone() {
    let pool = solve_design_ode(&pool_nominal(), DesignMap::Ipd, 10.0, 0.01).unwrap();
    let (spec, tcl) = tcl_nominal();
    let tcl = geometric_compose(&solve_design_ode(&tcl, DesignMap::Ipd, 10.0, 0.01).unwrap(), spec.gamma).unwrap();
    let (vp, vt) = (monotone_violation(&pool), monotone_violation(&tcl));
    let span = |f: &DesignFamily| {
        let m = f.mean_power_grid();
        (m[0], m[m.len() - 1])
    };
    let pass = vp < 1e-8 && vt < 1e-8;
    verdict(
        "AC4",
        pass,
        format!(
            "max decrease pool {vp:.1e} (U {:.3?}), tcl {vt:.1e} (U {:.3?})",
            span(&pool),
            span(&tcl)
        ),
    );
}

#[test]
fn ac05_spd_positive_real() {
    let start = Instant::now();
    let nominal = pool_nominal();
    let mut notes = Vec::new();
    let mut pass = true;
    match solve_design_ode(&nominal, DesignMap::Spd, 2.0, 0.01) {
        Ok(fam) => {
            for z in [-2.0, -1.0, 0.0, 1.0, 2.0] {
                let fr = positive_real_check(&linearize(&fam, z).unwrap(), DEFAULT_THETA_COUNT);
                match fr {
                    Ok(fr) => {
                        pass &= fr.passes;
                        notes.push(format!("zeta {z}: margin {:.2e}", fr.realness_margin));
                    }
                    Err(e) => {
                        pass = false;
                        notes.push(format!("zeta {z}: {e}"));
                    }
                }
            }
        }
        Err(e) => {
            pass = false;
            notes.push(format!("family on [-2, 2]: {e}"));
            // Margin on the part of the family that exists.
            let fam = solve_design_ode(&nominal, DesignMap::Spd, 0.09, 0.001).unwrap();
            for z in [-0.09, 0.0, 0.09] {
                let fr = positive_real_check(&linearize(&fam, z).unwrap(), DEFAULT_THETA_COUNT).unwrap();
                notes.push(format!("zeta {z}: margin {:.2e}", fr.realness_margin));
            }
        }
    }
    let n = 4;
    let mut cycle = vec![vec![0.0; n]; n];
    for (i, row) in cycle.iter_mut().enumerate().take(n - 1) {
        row[i + 1] = 1.0;
    }
    cycle[n - 1][n - 1] = 0.5;
    cycle[n - 1][0] = 0.5;
    let cyc = NominalModel::plain(
        StochasticMatrix::from_rows(&cycle).unwrap(),
        StateFunction::new(vec![0.0, 1.0, 0.0, 1.0]),
    )
    .unwrap();
    let rejected = matches!(
        solve_design_ode(&cyc, DesignMap::Spd, 1.0, 0.1),
        Err(Error::AdjointProductReducible)
    );
    let secs = start.elapsed().as_secs_f64();
    pass &= rejected && secs < 60.0;
    verdict(
        "AC5",
        pass,
        format!("{}; cycle rejected {rejected}; {secs:.1}s", notes.join("; ")),
    );
}

#[test]
fn ac06_ipd0_approximation() {
    let mut r = rng(6);
    let p0 = random_chain(&mut r, 5, 0.6);
    let nominal = NominalModel::plain(p0.clone(), random_util(&mut r, 5)).unwrap();
    let ipd = solve_design_ode(&nominal, DesignMap::Ipd, 0.5, 0.01).unwrap();
    let ipd0 = exponential_family(&nominal, DesignKind::Ipd0, None, 0.5, 0.01).unwrap();
    let gaps = |z: f64| {
        let k = ipd.kernel(z).unwrap().max_abs_diff(&ipd0.kernel(z).unwrap());
        let eta = ipd.reward(z).unwrap() - ipd0.reward(z).unwrap();
        (k, eta)
    };
    let mut k_ratios = Vec::new();
    let mut r_ratios = Vec::new();
    for z in [0.4, 0.2, 0.1] {
        let (k1, e1) = gaps(z);
        let (k2, e2) = gaps(z / 2.0);
        k_ratios.push(k1 / k2);
        r_ratios.push(e1 / e2);
    }
    let pass = k_ratios.iter().all(|r| (3.5..=4.5).contains(r)) && r_ratios.iter().all(|r| (12.0..=20.0).contains(r));
    verdict(
        "AC6",
        pass,
        format!("kernel gap ratios {k_ratios:.3?}, reward gap ratios {r_ratios:.2?}"),
    );
}

#[test]
fn ac07_linearization_identities() {
    let (spec, nominal) = tcl_nominal();
    let fam = geometric_compose(&exponential_family(&nominal, DesignKind::Myopic, None, 1.0, 0.01).unwrap(), spec.gamma).unwrap();
    let mut b_gap = 0.0f64;
    let mut cov_gap = 0.0f64;
    let mut have_adjoint = true;
    for z in [-0.5, 0.0, 0.5] {
        let lin = linearize(&fam, z).unwrap();
        match &lin.b_adjoint {
            Some(ba) => b_gap = b_gap.max(max_abs(lin.b.iter().zip(ba).map(|(a, b)| a - b))),
            None => have_adjoint = false,
        }
        let cov = covariance_sequence(&lin.kernel(), &lin.pi, &lin.util_b(), &lin.c, 20).unwrap();
        cov_gap = cov_gap.max(max_abs(cov.iter().zip(lin.markov_parameters(20)).map(|(a, b)| a - b)));
    }
    // Central differences of P_ζ against 𝓔_ζ at two step sizes.
    let z = 0.3;
    let point = fam.point(z).unwrap();
    let paired = fam.nature().lift(&fam.h_derivative(z).unwrap());
    let e = kernel_derivative(&point.tilted, &paired).unwrap() * spec.gamma;
    let fd_err = |delta: f64| {
        let plus = fam.kernel(z + delta).unwrap();
        let minus = fam.kernel(z - delta).unwrap();
        let fd = (plus.matrix() - minus.matrix()) / (2.0 * delta);
        (fd - &e).amax()
    };
    let (e1, e2) = (fd_err(1e-3), fd_err(5e-4));
    let order = (e1 / e2).log2();
    let pass = have_adjoint && b_gap <= 1e-10 && cov_gap <= 1e-10 && order >= 1.9;
    verdict(
        "AC7",
        pass,
        format!("B forms {b_gap:.1e} (adjoint form available {have_adjoint}), covariance {cov_gap:.1e}, finite-difference order {order:.2}"),
    );
}

#[test]
fn ac08_meanfield_consistency() {
    let start = Instant::now();
    let fam = solve_design_ode(&pool_nominal(), DesignMap::Ipd, 1.0, 0.01).unwrap();
    let steps = 500;
    let zeta: Vec<f64> = (0..steps)
        .map(|t| 0.5 * (std::f64::consts::TAU * t as f64 / 96.0).sin())
        .collect();
    let util = fam.util().values();
    let mu0 = fam.pmf(0.0).unwrap();
    let kernels: Vec<StochasticMatrix> = zeta.iter().map(|z| fam.kernel(*z).unwrap()).collect();
    let samplers: Vec<KernelSampler> = kernels.iter().map(KernelSampler::new).collect();
    let mut mu = mu0.clone();
    let y: Vec<f64> = kernels
        .iter()
        .map(|p| {
            let y = mu.expectation(util);
            mu = ddispatch::markov::Pmf::new(p.left_apply(mu.as_slice())).unwrap();
            y
        })
        .collect();
    let sizes = [1_000usize, 4_000, 16_000];
    let seeds = 8u64;
    let errs: Vec<f64> = sizes
        .iter()
        .map(|&n| {
            (0..seeds)
                .map(|s| {
                    let mut fleet = FleetState::from_pmf(n, &mu0, 1000 * n as u64 + s).unwrap();
                    let mut sup = 0.0f64;
                    for (t, sampler) in samplers.iter().enumerate() {
                        sup = sup.max((fleet.output(util) - y[t]).abs());
                        fleet.advance(sampler);
                    }
                    sup
                })
                .sum::<f64>()
                / seeds as f64
        })
        .collect();
    let lx: Vec<f64> = sizes.iter().map(|n| (*n as f64).ln()).collect();
    let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let mx = lx.iter().sum::<f64>() / 3.0;
    let my = ly.iter().sum::<f64>() / 3.0;
    let slope = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let exponent = -slope;
    let secs = start.elapsed().as_secs_f64();
    let monotone = errs.windows(2).all(|w| w[1] < w[0]);
    let pass = monotone && (0.35..=0.65).contains(&exponent) && secs < 120.0;
    verdict(
        "AC8",
        pass,
        format!("mean sup-error {errs:.3?} for N {sizes:?}, exponent {exponent:.3}, {secs:.1}s"),
    );
}

#[test]
fn ac09_load_model_facts() {
    let spec = PoolModelSpec::default();
    let pool = build_pool_model(&spec).unwrap();
    let pi = invariant_pmf(&pool.p0).unwrap();
    // Mean holding time of P₀ in minutes.
    let hold: f64 = (0..pool.p0.dim())
        .map(|x| pi.as_slice()[x] / (1.0 - pool.p0.get(x, x)))
        .sum::<f64>()
        * spec.slot_minutes;
    let pool_ok = pool.p0.dim() == 96 && spec.gamma == 1.0 / 6.0 && (hold - 30.0).abs() <= spec.slot_minutes;

    let tcl_spec = TclModelSpec::default();
    let varrho_ok = tcl_spec.varrho() == (-1.0f64 / 720.0).exp();
    let (_, nominal) = tcl_nominal();
    let fam = geometric_compose(&exponential_family(&nominal, DesignKind::Myopic, None, 1.0, 0.1).unwrap(), tcl_spec.gamma).unwrap();
    let traj = tcl_trajectory(&tcl_spec, &fam, &vec![0.0; 43_200], 9).unwrap();
    let (dm, dp) = tcl_spec.drifts();
    let slack = dm.max(dp) + 6.0 * tcl_spec.noise_var.sqrt();
    let (lo, hi) = (tcl_spec.theta_min() - slack, tcl_spec.theta_max() + slack);
    let inside = traj.theta.iter().all(|t| *t >= lo && *t <= hi);
    let rate = traj.override_rate();
    let pass = pool_ok && varrho_ok && inside && rate < 0.05 && tcl_spec.gamma == 1.0 / 3.0;
    verdict(
        "AC9",
        pass,
        format!(
            "pool d {} gamma {:.4} holding {hold:.2} min; varrho exact {varrho_ok}; TCL in band {inside}, override rate {:.2}%",
            pool.p0.dim(),
            spec.gamma,
            100.0 * rate
        ),
    );
}

#[test]
fn ac10_decomposition_identity() {
    let period = 300.0;
    let g = synthetic_net_load(30 * 288, period, 10);
    let (lp_hz, hp_hz) = (1.0 / (2.0 * 86_400.0), 1.0 / (2.0 * 3600.0));
    let d = frequency_decompose(&g, lp_hz, hp_hz, period).unwrap();
    let exact = (0..g.len()).all(|i| d.mp[i] == g[i] - d.lp[i] - d.hp[i]);
    let recon = max_abs((0..g.len()).map(|i| (d.lp[i] + d.mp[i] + d.hp[i] - g[i]) / g[i].abs().max(1.0)));
    let rms = (g.iter().map(|v| v * v).sum::<f64>() / g.len() as f64).sqrt();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (m_mp, m_hp) = (mean(&d.mp), mean(&d.hp));
    let c = frequency_decompose(&vec![4.0; 20 * 288], lp_hz, hp_hz, period).unwrap();
    let last = c.lp.len() - 1;
    let settled = (c.lp[last] - 4.0).abs() < 1e-6 && c.mp[last].abs() < 1e-6 && c.hp[last].abs() < 1e-6;
    let pass = exact && recon <= 4.0 * f64::EPSILON && settled && m_mp.abs() <= 0.02 * rms && m_hp.abs() <= 0.02 * rms;
    verdict(
        "AC10",
        pass,
        format!(
            "residual identity bitwise {exact}, reconstruction {recon:.1e}, mean MP {:.2}% HP {:.2}% of RMS, constant input -> ({:.6}, {:.1e}, {:.1e})",
            100.0 * m_mp.abs() / rms,
            100.0 * m_hp.abs() / rms,
            c.lp[last],
            c.mp[last],
            c.hp[last]
        ),
    );
}

fn gplus_mags(fam: &DesignFamily, z: f64, theta: &[f64]) -> Vec<f64> {
    let ev = TransferEvaluator::new(&linearize(fam, z).unwrap());
    theta
        .iter()
        .map(|t| ev.eval(Complex::from_polar(1.0, *t)).unwrap().1.norm())
        .collect()
}

/// Mean over θ of the standard deviation over ζ of `20 log10 |G⁺|`.
fn dispersion(fam: &DesignFamily, zetas: &[f64], theta: &[f64]) -> f64 {
    let mags: Vec<Vec<f64>> = zetas.iter().map(|z| gplus_mags(fam, *z, theta)).collect();
    let n = zetas.len() as f64;
    (0..theta.len())
        .map(|t| {
            let db: Vec<f64> = mags.iter().map(|m| 20.0 * m[t].max(1e-300).log10()).collect();
            let mean = db.iter().sum::<f64>() / n;
            (db.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .sum::<f64>()
        / theta.len() as f64
}

#[test]
fn ac11_bode_comparison() {
    let (spec, nominal) = tcl_nominal();
    let ipd = geometric_compose(&solve_design_ode(&nominal, DesignMap::Ipd, 3.0, 0.01).unwrap(), spec.gamma).unwrap();
    let myopic = geometric_compose(&exponential_family(&nominal, DesignKind::Myopic, None, 3.0, 0.01).unwrap(), spec.gamma).unwrap();
    // (a) shapes at ζ = 0 after matching the DC gain (a rescaling of ζ).
    let theta = theta_grid(DEFAULT_THETA_COUNT);
    let mi = gplus_mags(&ipd, 0.0, &theta);
    let mm = gplus_mags(&myopic, 0.0, &theta);
    let scale = mi[0] / mm[0];
    let shape_gap = max_abs(mi.iter().zip(&mm).map(|(a, b)| (b * scale - a) / a));
    // (b) dispersion across ζ ∈ [−3, 3].
    let zetas: Vec<f64> = (-6..=6).map(|k| 0.5 * k as f64).collect();
    let theta64 = theta_grid(64);
    let (di, dm) = (dispersion(&ipd, &zetas, &theta64), dispersion(&myopic, &zetas, &theta64));
    let pass = shape_gap <= 0.05 && dm > di;
    verdict(
        "AC11",
        pass,
        format!(
            "zeta=0 magnitude gap {:.2}% after DC matching (raw gain ratio {scale:.3}); dispersion ipd {di:.2} dB < myopic {dm:.2} dB: {}",
            100.0 * shape_gap,
            dm > di
        ),
    );
}
