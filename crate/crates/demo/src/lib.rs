//! Browser demo: Bode comparison of pool-pump designs, mean-field response
//! to a sinusoidal broadcast, and a single TCL trajectory.
//!
//! Exported functions return JSON strings for the page to plot.

use std::cell::RefCell;
use std::f64::consts::TAU;

use ddispatch::design::{
    exponential_family, geometric_compose, solve_design_ode, DesignFamily, DesignKind, DesignMap,
    NatureStructure, NominalModel,
};
use ddispatch::linearize::{linearize, theta_grid, TransferEvaluator, C64};
use ddispatch::loads::{build_pool_model, build_tcl_model, tcl_trajectory, PoolModelSpec, TclModelSpec};
use ddispatch::sim::meanfield_response;
use serde::Serialize;
use wasm_bindgen::prelude::*;

type Res<T> = Result<T, String>;

thread_local! {
    static POOL: RefCell<Option<NominalModel>> = const { RefCell::new(None) };
}

fn pool_nominal() -> Res<NominalModel> {
    POOL.with(|cell| {
        if let Some(m) = cell.borrow().as_ref() {
            return Ok(m.clone());
        }
        let m = build_pool_model(&PoolModelSpec::default()).map_err(|e| e.to_string())?;
        let d = m.p0.dim();
        let nominal = NominalModel::new(m.p0, NatureStructure::none(d), m.util, m.anchor)
            .map_err(|e| e.to_string())?;
        *cell.borrow_mut() = Some(nominal.clone());
        Ok(nominal)
    })
}

fn parse_kind(name: &str) -> Res<DesignKind> {
    match name {
        "myopic" => Ok(DesignKind::Myopic),
        "ipd0" => Ok(DesignKind::Ipd0),
        "ipd" => Ok(DesignKind::Ipd),
        other => Err(format!("unknown design '{other}'")),
    }
}

/// Pool family covering `[−zeta_max, zeta_max]`.
fn pool_family(kind: DesignKind, zeta_max: f64) -> Res<DesignFamily> {
    let nominal = pool_nominal()?;
    let zeta_max = zeta_max.abs().max(0.02);
    let fam = match kind {
        DesignKind::Ipd => solve_design_ode(&nominal, DesignMap::Ipd, zeta_max, 0.01),
        k => exponential_family(&nominal, k, None, zeta_max, 0.01),
    };
    fam.map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct BodeSeries {
    label: String,
    mag_db: Vec<f64>,
    phase_deg: Vec<f64>,
}

#[derive(Serialize)]
struct Bode {
    theta: Vec<f64>,
    series: Vec<BodeSeries>,
}

/// `G⁺(e^{jθ})` of the myopic, IPD₀ and IPD pool designs linearized at `zeta`.
pub fn pool_bode_json(zeta: f64, theta_count: usize) -> Res<String> {
    let theta: Vec<f64> = theta_grid(theta_count.clamp(8, 1024)).into_iter().skip(1).collect();
    let mut series = Vec::new();
    for name in ["myopic", "ipd0", "ipd"] {
        let fam = pool_family(parse_kind(name)?, zeta)?;
        let lin = linearize(&fam, zeta).map_err(|e| e.to_string())?;
        let ev = TransferEvaluator::new(&lin);
        let mut mag_db = Vec::with_capacity(theta.len());
        let mut phase_deg = Vec::with_capacity(theta.len());
        for t in &theta {
            let (_, gp) = ev.eval(C64::from_polar(1.0, *t)).map_err(|e| e.to_string())?;
            mag_db.push(20.0 * gp.norm().max(1e-300).log10());
            phase_deg.push(gp.arg().to_degrees());
        }
        series.push(BodeSeries { label: name.into(), mag_db, phase_deg });
    }
    serde_json::to_string(&Bode { theta, series }).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Response {
    zeta: Vec<f64>,
    y: Vec<f64>,
    mean_power: f64,
}

/// Mean-field power per load under `ζ_t = amplitude·sin(2πt/period_steps)`.
pub fn meanfield_sine_json(design: &str, amplitude: f64, period_steps: f64, steps: usize) -> Res<String> {
    if !(period_steps >= 2.0) {
        return Err("period must be at least 2 steps".into());
    }
    let fam = pool_family(parse_kind(design)?, amplitude)?;
    let zeta: Vec<f64> = (0..steps.min(20_000))
        .map(|t| amplitude * (TAU * t as f64 / period_steps).sin())
        .collect();
    let mu0 = fam.pmf(0.0).map_err(|e| e.to_string())?;
    let y = meanfield_response(&fam, &mu0, &zeta).map_err(|e| e.to_string())?;
    let mean_power = fam.mean_power(0.0).map_err(|e| e.to_string())?;
    serde_json::to_string(&Response { zeta, y, mean_power }).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Trajectory {
    t_s: Vec<f64>,
    theta: Vec<f64>,
    mode: Vec<u8>,
    deadband: [f64; 2],
    override_rate: f64,
}

/// One TCL under a constant broadcast `zeta` for `hours`, myopic design.
pub fn tcl_trajectory_json(zeta: f64, hours: f64, seed: u64) -> Res<String> {
    let spec = TclModelSpec {
        samples_per_state: 2000,
        ..TclModelSpec::default()
    };
    let model = build_tcl_model(&spec).map_err(|e| e.to_string())?;
    let nominal = NominalModel::new(model.s0, model.nature, model.util, model.anchor)
        .map_err(|e| e.to_string())?;
    let zeta_max = zeta.abs().max(0.1);
    let fam = exponential_family(&nominal, DesignKind::Myopic, None, zeta_max, zeta_max)
        .and_then(|f| geometric_compose(&f, spec.gamma))
        .map_err(|e| e.to_string())?;
    let steps = (hours.clamp(0.1, 48.0) * 3600.0 / spec.sample_period_s) as usize;
    let traj = tcl_trajectory(&spec, &fam, &vec![zeta; steps], seed).map_err(|e| e.to_string())?;
    let override_rate = traj.override_rate();
    let stride = (steps / 4000).max(1);
    let pick = |v: &[f64]| v.iter().step_by(stride).copied().collect::<Vec<_>>();
    serde_json::to_string(&Trajectory {
        t_s: pick(&traj.t_s),
        theta: pick(&traj.theta),
        mode: traj.mode.iter().step_by(stride).copied().collect(),
        deadband: spec.deadband,
        override_rate,
    })
    .map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn pool_bode(zeta: f64, theta_count: usize) -> Result<String, JsValue> {
    pool_bode_json(zeta, theta_count).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn meanfield_sine(design: &str, amplitude: f64, period_steps: f64, steps: usize) -> Result<String, JsValue> {
    meanfield_sine_json(design, amplitude, period_steps, steps).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn tcl_run(zeta: f64, hours: f64, seed: u64) -> Result<String, JsValue> {
    tcl_trajectory_json(zeta, hours, seed).map_err(|e| JsValue::from_str(&e))
}
