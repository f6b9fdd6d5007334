//! Versioned JSON artifacts: load models, design families and simulation
//! scenarios.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::design::{
    exponential_family, geometric_compose, solve_design_ode, DesignFamily, DesignKind,
    NatureStructure, NominalModel, Structure,
};
use crate::error::{Error, Result};
use crate::loads::{PoolModel, TclModel};
use crate::markov::{check_irreducible_aperiodic, StateFunction, StochasticMatrix, StructureReport};
use crate::sim::{Plant, SignalSet, TrackingConfig};

pub const FORMAT_VERSION: u32 = 1;

fn check_version(found: u32, what: &str) -> Result<()> {
    if found != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{what}: unsupported format_version {found} (expected {FORMAT_VERSION})"
        )));
    }
    Ok(())
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("'{}' is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Format(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column()))
    })
}

/// `P = (1−γ)I + γS₀`: the kernel `S₀` of the sampled process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    pub gamma: f64,
    pub s0: Vec<Vec<f64>>,
}

/// Exogenous part of the state, `x = u·n_n + n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NatureSpec {
    pub n_u: usize,
    pub n_n: usize,
    pub q0: Vec<Vec<f64>>,
}

/// A nominal load model as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    /// `pool`, `tcl` or `custom`.
    #[serde(default = "custom_kind")]
    pub kind: String,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub dim: Option<usize>,
    pub p0: Vec<Vec<f64>>,
    #[serde(default)]
    pub sampling: Option<Sampling>,
    #[serde(default)]
    pub nature: Option<NatureSpec>,
    pub util: Vec<f64>,
    #[serde(default)]
    pub units: Option<String>,
    #[serde(default)]
    pub anchor: usize,
    /// Filled in on write; ignored on read.
    #[serde(default)]
    pub structure: Option<StructureReport>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

fn custom_kind() -> String {
    "custom".into()
}

/// Which kernel the design acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    /// Tilt `P₀` itself.
    Direct,
    /// Tilt `S₀` and compose `(1−γ)I + γS_ζ`.
    Sampled,
}

/// A validated model.
#[derive(Debug, Clone)]
pub struct LoadModel {
    pub file: ModelFile,
    pub p0: StochasticMatrix,
    pub s0: Option<(f64, StochasticMatrix)>,
    pub nature: NatureStructure,
    pub util: StateFunction,
    pub structure: StructureReport,
}

impl LoadModel {
    pub fn from_file(mut file: ModelFile) -> Result<Self> {
        check_version(file.format_version, "model")?;
        let p0 = StochasticMatrix::from_rows(&file.p0)?;
        let d = p0.dim();
        if let Some(dim) = file.dim {
            if dim != d {
                return Err(Error::DimensionMismatch { expected: dim, found: d });
            }
        }
        if file.util.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: file.util.len() });
        }
        if file.util.iter().any(|u| !u.is_finite()) {
            return Err(Error::InvalidParameter("util must be finite".into()));
        }
        if file.anchor >= d {
            return Err(Error::InvalidParameter(format!("anchor {} out of range", file.anchor)));
        }
        let nature = match &file.nature {
            None => NatureStructure::none(d),
            Some(n) => {
                if n.n_u * n.n_n != d {
                    return Err(Error::DimensionMismatch { expected: d, found: n.n_u * n.n_n });
                }
                let q0 = StochasticMatrix::rectangular(crate::markov::matrix_from_rows(&n.q0)?)?;
                NatureStructure::new(n.n_u, q0)?
            }
        };
        let s0 = match &file.sampling {
            None => None,
            Some(s) => {
                if !(s.gamma > 0.0 && s.gamma <= 1.0) {
                    return Err(Error::InvalidParameter(format!("invalid gamma {}", s.gamma)));
                }
                let s0 = StochasticMatrix::from_rows(&s.s0)?;
                if s0.dim() != d {
                    return Err(Error::DimensionMismatch { expected: d, found: s0.dim() });
                }
                if s0.geometric(s.gamma)?.max_abs_diff(&p0) > 1e-9 {
                    return Err(Error::InvalidParameter(
                        "p0 differs from (1 - gamma) I + gamma s0".into(),
                    ));
                }
                Some((s.gamma, s0))
            }
        };
        let structure = check_irreducible_aperiodic(&p0);
        file.structure = Some(structure);
        file.dim = Some(d);
        let util = match &file.units {
            Some(u) => StateFunction::with_units(file.util.clone(), u.clone()),
            None => StateFunction::new(file.util.clone()),
        };
        Ok(Self { file, p0, s0, nature, util, structure })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_file(read_json(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, &self.file)
    }

    pub fn dim(&self) -> usize {
        self.p0.dim()
    }

    pub fn default_route(&self) -> Route {
        if self.s0.is_some() {
            Route::Sampled
        } else {
            Route::Direct
        }
    }

    /// Kernel to tilt and the sampling rate to compose with afterwards.
    ///
    /// The direct route is refused when the model has exogenous randomness:
    /// `P₀` then mixes the nature kernel with the identity and has no
    /// nature/nurture factorization.
    pub fn nominal(&self, route: Route) -> Result<(NominalModel, Option<f64>)> {
        let anchor = self.file.anchor;
        match route {
            Route::Direct => {
                if !self.nature.is_trivial() && self.s0.is_some() {
                    return Err(Error::InvalidParameter(
                        "direct route is unavailable for sampled models with exogenous randomness".into(),
                    ));
                }
                let nominal = NominalModel::new(self.p0.clone(), self.nature.clone(), self.util.clone(), anchor)?;
                Ok((nominal, None))
            }
            Route::Sampled => {
                let (gamma, s0) = self.s0.clone().ok_or_else(|| {
                    Error::InvalidParameter("model has no sampling section".into())
                })?;
                let nominal = NominalModel::new(s0, self.nature.clone(), self.util.clone(), anchor)?;
                Ok((nominal, (gamma < 1.0).then_some(gamma)))
            }
        }
    }

    /// SHA-256 of the model content (matrices, power map and anchor).
    pub fn hash(&self) -> String {
        let content = serde_json::json!({
            "p0": self.file.p0,
            "sampling": self.file.sampling,
            "nature": self.file.nature,
            "util": self.file.util,
            "anchor": self.file.anchor,
        });
        hex::encode(Sha256::digest(content.to_string().as_bytes()))
    }
}

fn rows(m: &StochasticMatrix) -> Vec<Vec<f64>> {
    m.rows()
}

pub fn pool_model_file(model: &PoolModel) -> ModelFile {
    ModelFile {
        format_version: FORMAT_VERSION,
        kind: "pool".into(),
        name: Some("pool pump".into()),
        dim: Some(model.p0.dim()),
        p0: rows(&model.p0),
        sampling: Some(Sampling { gamma: model.spec.gamma, s0: rows(&model.s0) }),
        nature: None,
        util: model.util.values().to_vec(),
        units: Some("kW".into()),
        anchor: model.anchor,
        structure: Some(check_irreducible_aperiodic(&model.p0)),
        meta: serde_json::json!({
            "spec": model.spec,
            "sigma_on": model.sigma_on,
            "sigma_off": model.sigma_off,
        }),
    }
}

pub fn tcl_model_file(model: &TclModel) -> ModelFile {
    ModelFile {
        format_version: FORMAT_VERSION,
        kind: "tcl".into(),
        name: Some("thermostatically controlled load".into()),
        dim: Some(model.p0.dim()),
        p0: rows(&model.p0),
        sampling: Some(Sampling { gamma: model.spec.gamma, s0: rows(&model.s0) }),
        nature: Some(NatureSpec {
            n_u: 2,
            n_n: model.spec.lattice_len(),
            q0: model.q0.q0.rows(),
        }),
        util: model.util.values().to_vec(),
        units: Some("kW".into()),
        anchor: model.anchor,
        structure: Some(check_irreducible_aperiodic(&model.p0)),
        meta: serde_json::json!({
            "spec": model.spec,
            "q0_provenance": model.q0.provenance,
            "varrho": model.spec.varrho(),
        }),
    }
}

/// Synthesizes a family from a model.
pub fn design_family(
    model: &LoadModel,
    kind: DesignKind,
    route: Route,
    zeta_max: f64,
    step: f64,
    generator: Option<&StateFunction>,
) -> Result<DesignFamily> {
    let (nominal, gamma) = model.nominal(route)?;
    let family = match kind.design_map() {
        Some(map) => solve_design_ode(&nominal, map, zeta_max, step)?,
        None => exponential_family(&nominal, kind, generator, zeta_max, step)?,
    };
    match gamma {
        Some(g) => geometric_compose(&family, g),
        None => Ok(family),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaGrid {
    pub step: f64,
    /// Grid points on each side of zero.
    pub n: usize,
}

/// A design family as stored on disk; kernels are regenerated on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyFile {
    pub format_version: u32,
    pub model_hash: String,
    pub model: ModelFile,
    pub design_kind: DesignKind,
    pub structure: Structure,
    pub route: Route,
    pub zeta: ZetaGrid,
    pub h_circ: Vec<Vec<f64>>,
    #[serde(default)]
    pub generator: Option<Vec<f64>>,
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Informational: `Ū_ζ` on the grid.
    #[serde(default)]
    pub mean_power: Vec<f64>,
}

impl FamilyFile {
    pub fn new(model: &LoadModel, route: Route, family: &DesignFamily) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            model_hash: model.hash(),
            model: model.file.clone(),
            design_kind: family.kind(),
            structure: family.structure(),
            route,
            zeta: ZetaGrid { step: family.step(), n: family.half_count() },
            h_circ: family.h_circ_grid().to_vec(),
            generator: family.generator().map(<[f64]>::to_vec),
            gamma: family.gamma(),
            mean_power: family.mean_power_grid().to_vec(),
        }
    }

    /// Rebuilds the family after checking version and model hash.
    pub fn into_family(self) -> Result<(LoadModel, DesignFamily)> {
        check_version(self.format_version, "family")?;
        let model = LoadModel::from_file(self.model)?;
        if model.hash() != self.model_hash {
            return Err(Error::Format("model_hash does not match the embedded model".into()));
        }
        let (nominal, _) = model.nominal(self.route)?;
        let family = DesignFamily::from_h_circ(
            nominal,
            self.design_kind,
            self.zeta.step,
            self.zeta.n,
            self.h_circ,
            self.generator,
            self.gamma,
        )?;
        Ok((model, family))
    }
}

pub fn read_family(path: &Path) -> Result<(LoadModel, DesignFamily)> {
    read_json::<FamilyFile>(path)?.into_family()
}

/// Reference signal of a scenario, in fractions of `Ū₀` (or `ζ` for the
/// open-loop controller).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ReferenceSpec {
    Constant { value: f64 },
    Sine { amplitude: f64, period_steps: f64, #[serde(default)] offset: f64 },
    Square { amplitude: f64, period_steps: usize },
    /// Signal CSV; path relative to the scenario file.
    Csv { path: PathBuf, #[serde(default)] column: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub format_version: u32,
    /// Family file; relative paths resolve against the scenario's directory.
    pub family: PathBuf,
    pub steps: usize,
    pub period_s: f64,
    pub reference: ReferenceSpec,
    #[serde(default)]
    pub controller: TrackingConfig,
    #[serde(default = "meanfield")]
    pub plant: Plant,
}

fn meanfield() -> Plant {
    Plant::Meanfield
}

impl Scenario {
    pub fn read(path: &Path) -> Result<Self> {
        let mut s: Scenario = read_json(path)?;
        check_version(s.format_version, "scenario")?;
        let base = path.parent().unwrap_or(Path::new(""));
        if s.family.is_relative() {
            s.family = base.join(&s.family);
        }
        if let ReferenceSpec::Csv { path: p, .. } = &mut s.reference {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(s)
    }

    /// Materializes the reference as a one-column signal set.
    pub fn reference_signal(&self) -> Result<SignalSet> {
        let n = self.steps;
        let values: Vec<f64> = match &self.reference {
            ReferenceSpec::Constant { value } => vec![*value; n],
            ReferenceSpec::Sine { amplitude, period_steps, offset } => (0..n)
                .map(|t| offset + amplitude * (std::f64::consts::TAU * t as f64 / period_steps).sin())
                .collect(),
            ReferenceSpec::Square { amplitude, period_steps } => {
                if *period_steps < 2 {
                    return Err(Error::InvalidParameter("square period must be at least 2 steps".into()));
                }
                (0..n)
                    .map(|t| if t % period_steps < period_steps / 2 { *amplitude } else { -amplitude })
                    .collect()
            }
            ReferenceSpec::Csv { path, column } => {
                let set = SignalSet::read_csv(fs::File::open(path)?)?;
                let name = column.clone().or_else(|| set.names().next().map(str::to_string));
                let v = name
                    .as_deref()
                    .and_then(|c| set.get(c))
                    .ok_or_else(|| Error::Format(format!("{}: reference column missing", path.display())))?;
                if v.len() < n {
                    return Err(Error::DimensionMismatch { expected: n, found: v.len() });
                }
                v[..n].to_vec()
            }
        };
        let mut set = SignalSet::new(self.period_s)?;
        set.insert("reference", values)?;
        Ok(set)
    }
}
