use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ddispatch::design::{geometric_compose, DesignFamily, DesignKind};
use ddispatch::error::Category;
use ddispatch::io::{
    design_family, pool_model_file, read_family, read_json, tcl_model_file, write_atomic,
    write_json, FamilyFile, LoadModel, ModelFile, Route, Scenario, FORMAT_VERSION,
};
use ddispatch::linearize::{bode_export, deflated_spectral_radius, linearize, positive_real_check};
use ddispatch::loads::{build_pool_model, build_tcl_model, PoolModelSpec, TclModelSpec};
use ddispatch::markov::StateFunction;
use ddispatch::sim::{frequency_decompose, track, Plant, SignalSet};
use ddispatch::Error;
use serde_json::json;

/// Design and analysis of randomized local control for flexible loads.
///
/// Exit codes: 0 success, 2 unreadable or malformed input, 3 validation
/// failure, 4 mathematical precondition violated, 5 numerical divergence.
#[derive(Parser, Debug)]
#[command(name = "ddispatch", version)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, env = "DDISPATCH_THREADS", global = true, hide_env_values = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelKind {
    Pool,
    Tcl,
    Custom,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Ipd,
    Spd,
    Myopic,
    Ipd0,
    Spd0,
    Custom,
}

impl From<Kind> for DesignKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Ipd => DesignKind::Ipd,
            Kind::Spd => DesignKind::Spd,
            Kind::Myopic => DesignKind::Myopic,
            Kind::Ipd0 => DesignKind::Ipd0,
            Kind::Spd0 => DesignKind::Spd0,
            Kind::Custom => DesignKind::Custom,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RouteArg {
    Direct,
    Sampled,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a load model (pool pump, TCL, or a custom matrix) and write it as JSON.
    Model {
        #[arg(long, value_enum)]
        kind: ModelKind,
        /// Parameter file; pool and TCL fall back to built-in defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Seed for the Monte Carlo estimate of the TCL nature kernel.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize a zeta-parameterized family of transition matrices.
    Design {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long, default_value_t = 10.0, value_parser = positive)]
        zeta_max: f64,
        #[arg(long, default_value_t = 0.01, value_parser = positive)]
        step: f64,
        /// Kernel to design on; defaults to `sampled` when the model has a sampling section.
        #[arg(long, value_enum)]
        route: Option<RouteArg>,
        /// Compose the designed kernels as (1 - gamma) I + gamma S (direct route only).
        #[arg(long)]
        gamma: Option<f64>,
        /// JSON array with the generator of a custom exponential family.
        #[arg(long)]
        generator: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Linearize a family and export Bode data plus a passivity summary.
    Analyze {
        #[arg(long)]
        family: PathBuf,
        /// Comma-separated zeta values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        zeta: Vec<f64>,
        #[arg(long, default_value_t = 2048)]
        theta_count: usize,
        /// Sampling period used for the frequency axis in Hz.
        #[arg(long)]
        period_s: Option<f64>,
        /// Bode CSV.
        #[arg(long)]
        out: PathBuf,
        /// Passivity JSON (default: the CSV path with a .json extension).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Run a tracking scenario and write signals and metrics.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the fleet seed of the scenario.
        #[arg(long)]
        seed: Option<u64>,
        /// Signals CSV.
        #[arg(long)]
        out: PathBuf,
        /// Metrics JSON (default: the CSV path with a .json extension).
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Split a signal into low-, mid- and high-frequency components.
    Decompose {
        #[arg(long)]
        signal: PathBuf,
        #[arg(long)]
        lp_cutoff: f64,
        #[arg(long)]
        hp_cutoff: f64,
        /// Column to decompose (default: the first one).
        #[arg(long)]
        column: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive, got {v}"))
    }
}

fn sibling_json(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn check_output(path: &Path) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !dir.is_dir() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("output directory '{}' does not exist", dir.display()),
        )))
        .context(format!("cannot write {}", path.display()));
    }
    Ok(())
}

fn cmd_model(kind: ModelKind, spec: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let file = match kind {
        ModelKind::Pool => {
            let spec: PoolModelSpec = match spec {
                Some(p) => read_json(p)?,
                None => PoolModelSpec::default(),
            };
            pool_model_file(&build_pool_model(&spec)?)
        }
        ModelKind::Tcl => {
            let mut spec: TclModelSpec = match spec {
                Some(p) => read_json(p)?,
                None => TclModelSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            tcl_model_file(&build_tcl_model(&spec)?)
        }
        ModelKind::Custom => {
            let p = spec.context("--spec is required for custom models")?;
            read_json::<ModelFile>(p)?
        }
    };
    let model = LoadModel::from_file(file)?;
    if !model.structure.irreducible {
        return Err(Error::NotIrreducible.into());
    }
    if !model.structure.aperiodic {
        return Err(Error::NotAperiodic { period: model.structure.period }.into());
    }
    model.write(out)?;
    log::info!(
        "model: d = {}, irreducible {}, aperiodic {}, hash {}",
        model.dim(),
        model.structure.irreducible,
        model.structure.aperiodic,
        model.hash()
    );
    println!("{}", out.display());
    Ok(())
}

fn synthesis_log(family: &DesignFamily) {
    let m = family.mean_power_grid();
    let worst = m.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
    log::info!(
        "mean power {:.4} .. {:.4}; largest decrease between grid points {worst:.2e}",
        m[0],
        m[m.len() - 1]
    );
    let bad = family
        .zeta_grid()
        .into_iter()
        .filter(|z| {
            family
                .kernel(*z)
                .map(|p| {
                    let r = ddispatch::markov::check_irreducible_aperiodic(&p);
                    !(r.irreducible && r.aperiodic)
                })
                .unwrap_or(true)
        })
        .count();
    log::info!("{} grid points, {bad} without irreducible aperiodic kernels", family.len());
}

#[allow(clippy::too_many_arguments)]
fn cmd_design(
    model_path: &Path,
    kind: Kind,
    zeta_max: f64,
    step: f64,
    route: Option<RouteArg>,
    gamma: Option<f64>,
    generator: Option<&Path>,
    out: &Path,
) -> Result<()> {
    check_output(out)?;
    let model = LoadModel::read(model_path)?;
    let route = match route {
        Some(RouteArg::Direct) => Route::Direct,
        Some(RouteArg::Sampled) => Route::Sampled,
        None => model.default_route(),
    };
    if gamma.is_some() && route != Route::Direct {
        return Err(Error::InvalidParameter("--gamma applies to the direct route only".into()).into());
    }
    let generator = generator
        .map(|p| read_json::<Vec<f64>>(p).map(StateFunction::new))
        .transpose()?;
    let family = design_family(&model, kind.into(), route, zeta_max, step, generator.as_ref())
        .map_err(|e| match e {
            Error::IntegrationDiverged { zeta, reason } => {
                let last = zeta - step * zeta.signum();
                anyhow::Error::new(Error::IntegrationDiverged { zeta, reason })
                    .context(format!("last good zeta {last}"))
            }
            other => other.into(),
        })?;
    let family = match gamma {
        Some(g) => geometric_compose(&family, g)?,
        None => family,
    };
    synthesis_log(&family);
    write_json(out, &FamilyFile::new(&model, route, &family))?;
    println!("{}", out.display());
    Ok(())
}

fn cmd_analyze(
    family_path: &Path,
    zetas: &[f64],
    theta_count: usize,
    period_s: Option<f64>,
    out: &Path,
    summary: Option<&Path>,
) -> Result<()> {
    if zetas.is_empty() {
        return Err(Error::InvalidParameter("empty zeta list".into()).into());
    }
    check_output(out)?;
    let (_, family) = read_family(family_path)?;
    let mut responses = Vec::new();
    let mut rows = Vec::new();
    for &z in zetas {
        let lin = linearize(&family, z)?;
        let radius = deflated_spectral_radius(&lin);
        let fr = positive_real_check(&lin, theta_count)?;
        log::info!("zeta {z}: margin {:.3e}", fr.realness_margin);
        rows.push(json!({
            "zeta": z,
            "sigma2": fr.sigma2,
            "realness_margin": fr.realness_margin,
            "passes": fr.passes,
            "spectral_radius": radius,
        }));
        responses.push((format!("{}@{z}", family.kind().name()), fr));
    }
    let mut buf = Vec::new();
    bode_export(&mut buf, &responses, period_s)?;
    write_atomic(out, &buf)?;
    let summary = summary.map(Path::to_path_buf).unwrap_or_else(|| sibling_json(out));
    write_json(
        &summary,
        &json!({
            "format_version": FORMAT_VERSION,
            "design_kind": family.kind(),
            "theta_count": theta_count,
            "points": rows,
        }),
    )?;
    println!("{}", out.display());
    Ok(())
}

fn cmd_simulate(scenario_path: &Path, seed: Option<u64>, out: &Path, metrics: Option<&Path>) -> Result<()> {
    check_output(out)?;
    let mut scenario = Scenario::read(scenario_path)?;
    if let (Some(s), Plant::Fleet { n, .. }) = (seed, scenario.plant) {
        scenario.plant = Plant::Fleet { n, seed: s };
    }
    let (_, family) = read_family(&scenario.family)
        .with_context(|| format!("family {}", scenario.family.display()))?;
    let reference = scenario.reference_signal()?;
    let (mut signals, m) = track(&reference, &family, &scenario.controller, scenario.plant)?;
    signals.meta.insert("design_kind".into(), family.kind().name().into());
    let mut buf = Vec::new();
    signals.write_csv(&mut buf)?;
    write_atomic(out, &buf)?;
    let metrics = metrics.map(Path::to_path_buf).unwrap_or_else(|| sibling_json(out));
    write_json(
        &metrics,
        &json!({
            "format_version": FORMAT_VERSION,
            "plant": scenario.plant,
            "controller": scenario.controller,
            "metrics": m,
            // Markov-chain agents have no temperature constraint to override.
            "qos_overrides": 0,
        }),
    )?;
    println!("{}", out.display());
    Ok(())
}

fn cmd_decompose(signal: &Path, lp: f64, hp: f64, column: Option<&str>, out: &Path) -> Result<()> {
    check_output(out)?;
    let input = SignalSet::read_csv(std::fs::File::open(signal)?)
        .with_context(|| format!("reading {}", signal.display()))?;
    let name = match column {
        Some(c) => c.to_string(),
        None => match input.names().next() {
            Some(n) => n.to_string(),
            None => bail!(Error::Format(format!("{}: no signal column", signal.display()))),
        },
    };
    let g = input
        .get(&name)
        .ok_or_else(|| Error::Format(format!("column '{name}' not found")))?;
    let d = frequency_decompose(g, lp, hp, input.period_s)?;
    let mut set = SignalSet::new(input.period_s)?;
    set.meta = input.meta.clone();
    set.meta.insert("lp_cutoff_hz".into(), lp.to_string());
    set.meta.insert("hp_cutoff_hz".into(), hp.to_string());
    set.insert("g_r", g.to_vec())?;
    set.insert("g_lp", d.lp)?;
    set.insert("g_mp", d.mp)?;
    set.insert("g_hp", d.hp)?;
    let mut buf = Vec::new();
    set.write_csv(&mut buf)?;
    write_atomic(out, &buf)?;
    println!("{}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Model { kind, spec, seed, out } => cmd_model(kind, spec.as_deref(), seed, &out),
        Command::Design { model, kind, zeta_max, step, route, gamma, generator, out } => {
            cmd_design(&model, kind, zeta_max, step, route, gamma, generator.as_deref(), &out)
        }
        Command::Analyze { family, zeta, theta_count, period_s, out, summary } => {
            cmd_analyze(&family, &zeta, theta_count, period_s, &out, summary.as_deref())
        }
        Command::Simulate { scenario, seed, out, metrics } => {
            cmd_simulate(&scenario, seed, &out, metrics.as_deref())
        }
        Command::Decompose { signal, lp_cutoff, hp_cutoff, column, out } => {
            cmd_decompose(&signal, lp_cutoff, hp_cutoff, column.as_deref(), &out)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(e) => match e.category() {
            Category::Parse => 2,
            Category::Validation => 3,
            Category::Precondition => 4,
            Category::Divergence => 5,
        },
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
