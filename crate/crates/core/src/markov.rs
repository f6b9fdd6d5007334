//! Exact finite-state Markov chain algebra.
//!
//! Everything here is dense: the load models of interest have at most a few
//! hundred states, and a direct LU solve is both exact and deterministic.

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerical tolerances used by the post-condition checks.
pub mod tol {
    /// Row sums of a stochastic matrix.
    pub const ROW_SUM: f64 = 1e-12;
    /// Total mass of a pmf.
    pub const PMF_SUM: f64 = 1e-12;
    /// `‖πP − π‖₁` for a computed invariant pmf.
    pub const INVARIANCE: f64 = 1e-12;
    /// Entrywise residual of `Z (I − P + 1⊗π) = I`.
    pub const FUNDAMENTAL: f64 = 1e-10;
    /// Residual of Poisson's equation.
    pub const POISSON: f64 = 1e-10;
}

/// A row-stochastic matrix.
///
/// Square matrices hold transition kernels. The rectangular form is used
/// for the nature kernel `Q₀ : X → X_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    entries: DMatrix<f64>,
}

fn validate_entries(entries: &DMatrix<f64>) -> Result<()> {
    if entries.nrows() == 0 || entries.ncols() == 0 {
        return Err(Error::NotStochastic("empty matrix".into()));
    }
    for i in 0..entries.nrows() {
        let mut sum = 0.0;
        for j in 0..entries.ncols() {
            let v = entries[(i, j)];
            if !v.is_finite() || v < 0.0 {
                return Err(Error::NotStochastic(format!(
                    "entry ({i}, {j}) = {v} is not a probability"
                )));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > tol::ROW_SUM {
            return Err(Error::NotStochastic(format!("row {i} sums to {sum}")));
        }
    }
    Ok(())
}

impl StochasticMatrix {
    /// Wraps a square matrix after checking nonnegativity and row sums.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                found: entries.ncols(),
            });
        }
        validate_entries(&entries)?;
        Ok(Self { entries })
    }

    /// Wraps a possibly rectangular row-stochastic map.
    pub fn rectangular(entries: DMatrix<f64>) -> Result<Self> {
        validate_entries(&entries)?;
        Ok(Self { entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = matrix_from_rows(rows)?;
        if m.nrows() == m.ncols() {
            Self::new(m)
        } else {
            Self::rectangular(m)
        }
    }

    /// Divides each row by its sum; rejects rows with no mass.
    pub fn normalize_rows(mut entries: DMatrix<f64>) -> Result<Self> {
        for i in 0..entries.nrows() {
            let sum: f64 = entries.row(i).iter().sum();
            if !(sum > 0.0) || !sum.is_finite() {
                return Err(Error::NotStochastic(format!("row {i} has no mass")));
            }
            entries.row_mut(i).scale_mut(1.0 / sum);
        }
        Self::rectangular(entries)
    }

    /// Skips validation. Callers guarantee stochasticity by construction.
    pub(crate) fn from_matrix_unchecked(entries: DMatrix<f64>) -> Self {
        debug_assert!(validate_entries(&entries).is_ok());
        Self { entries }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: DMatrix::identity(dim, dim),
        }
    }

    /// Number of rows (the state-space dimension for square kernels).
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.entries.nrows() == self.entries.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.entries.row(i).iter().copied().collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.row(i)).collect()
    }

    pub fn is_supported(&self, i: usize, j: usize) -> bool {
        self.entries[(i, j)] > 0.0
    }

    pub fn support_mask(&self) -> DMatrix<bool> {
        self.entries.map(|v| v > 0.0)
    }

    pub fn same_support(&self, other: &Self) -> bool {
        self.entries.shape() == other.entries.shape()
            && self
                .entries
                .iter()
                .zip(other.entries.iter())
                .all(|(a, b)| (*a > 0.0) == (*b > 0.0))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (&self.entries - &other.entries).amax()
    }

    /// `Pf (x) = Σ_{x'} P(x,x') f(x')`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.ncols());
        let v = &self.entries * DVector::from_column_slice(f);
        v.iter().copied().collect()
    }

    /// Row vector times matrix, `μP`.
    pub fn left_apply(&self, mu: &[f64]) -> Vec<f64> {
        assert_eq!(mu.len(), self.dim());
        let v = self.entries.tr_mul(&DVector::from_column_slice(mu));
        v.iter().copied().collect()
    }

    /// Matrix product `self · other`, itself row-stochastic.
    pub fn product(&self, other: &Self) -> Result<Self> {
        if self.ncols() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.ncols(),
                found: other.dim(),
            });
        }
        let mut m = &self.entries * &other.entries;
        renormalize_rows(&mut m);
        Ok(Self { entries: m })
    }

    /// Geometric sampling `(1 − γ)I + γS` with `γ ∈ (0, 1]`.
    pub fn geometric(&self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "sampling rate must lie in (0, 1], got {gamma}"
            )));
        }
        if !self.is_square() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: self.ncols(),
            });
        }
        let d = self.dim();
        let mut m = &self.entries * gamma;
        for i in 0..d {
            m[(i, i)] += 1.0 - gamma;
        }
        Ok(Self { entries: m })
    }

    /// `w·self + (1 − w)·other`.
    pub fn convex(&self, other: &Self, w: f64) -> Result<Self> {
        if self.entries.shape() != other.entries.shape() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::InvalidParameter(format!("weight {w} not in [0, 1]")));
        }
        Ok(Self {
            entries: &self.entries * w + &other.entries * (1.0 - w),
        })
    }
}

pub(crate) fn renormalize_rows(m: &mut DMatrix<f64>) {
    for i in 0..m.nrows() {
        let s: f64 = m.row(i).iter().sum();
        if s > 0.0 {
            m.row_mut(i).scale_mut(1.0 / s);
        }
    }
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch {
            expected: ncols,
            found: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// A probability mass function, stored as a row vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pmf(Vec<f64>);

impl Pmf {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidPmf("empty".into()));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::InvalidPmf(format!("weight {i} = {w}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > tol::PMF_SUM {
            return Err(Error::InvalidPmf(format!("weights sum to {sum}")));
        }
        Ok(Self(weights))
    }

    pub(crate) fn from_vec_unchecked(weights: Vec<f64>) -> Self {
        Self(weights)
    }

    pub fn uniform(dim: usize) -> Self {
        Self(vec![1.0 / dim as f64; dim])
    }

    pub fn point_mass(dim: usize, state: usize) -> Self {
        let mut w = vec![0.0; dim];
        w[state] = 1.0;
        Self(w)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// `π(f) = Σ π(x) f(x)`.
    pub fn expectation(&self, f: &[f64]) -> f64 {
        self.0.iter().zip(f).map(|(p, v)| p * v).sum()
    }

    pub fn l1_distance(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| (a - b).abs()).sum()
    }
}

/// A real function on the state space, e.g. the power map `𝒰` in kW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFunction {
    values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    units: Option<String>,
}

impl StateFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values,
            units: None,
        }
    }

    pub fn with_units(values: Vec<f64>, units: impl Into<String>) -> Self {
        Self {
            values,
            units: Some(units.into()),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::new(vec![c; dim])
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn units(&self) -> Option<&str> {
        self.units.as_deref()
    }

    /// `f − π(f)`.
    pub fn centered(&self, pi: &Pmf) -> StateFunction {
        let mean = pi.expectation(&self.values);
        Self {
            values: self.values.iter().map(|v| v - mean).collect(),
            units: self.units.clone(),
        }
    }

    pub fn is_constant(&self) -> bool {
        let first = self.values.first().copied().unwrap_or(0.0);
        self.values.iter().all(|v| (v - first).abs() <= 1e-14 * (1.0 + first.abs()))
    }
}

/// Outcome of [`check_irreducible_aperiodic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureReport {
    pub irreducible: bool,
    pub aperiodic: bool,
    /// Largest period over communicating classes that contain a cycle.
    pub period: usize,
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Structural test on the support digraph of `P`.
///
/// Irreducibility is strong connectivity. The period of a communicating
/// class is the gcd of `level(u) + 1 − level(v)` over its internal edges,
/// with levels from a BFS rooted in the class; this equals the gcd of all
/// cycle lengths through the root.
pub fn check_irreducible_aperiodic(p: &StochasticMatrix) -> StructureReport {
    let d = p.dim();
    let mut graph = DiGraph::<(), ()>::with_capacity(d, d * 4);
    let nodes: Vec<_> = (0..d).map(|_| graph.add_node(())).collect();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); d];
    for i in 0..d {
        for j in 0..p.ncols().min(d) {
            if p.is_supported(i, j) {
                graph.add_edge(nodes[i], nodes[j], ());
                succ[i].push(j);
            }
        }
    }
    let classes = tarjan_scc(&graph);
    let irreducible = classes.len() == 1;

    let mut class_of = vec![0usize; d];
    for (c, members) in classes.iter().enumerate() {
        for n in members {
            class_of[n.index()] = c;
        }
    }

    let mut period = 1;
    for (c, members) in classes.iter().enumerate() {
        let root = members[0].index();
        let mut level = vec![usize::MAX; d];
        level[root] = 0;
        let mut queue = std::collections::VecDeque::from([root]);
        let mut g = 0usize;
        while let Some(u) = queue.pop_front() {
            for &v in &succ[u] {
                if class_of[v] != c {
                    continue;
                }
                if level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                } else {
                    let diff = (level[u] + 1).abs_diff(level[v]);
                    g = gcd(g, diff);
                }
            }
        }
        // g == 0 means the class has no cycle (a transient singleton).
        if g > 0 {
            period = period.max(g);
        }
    }

    StructureReport {
        irreducible,
        aperiodic: period == 1,
        period,
    }
}

fn require_square(p: &StochasticMatrix) -> Result<()> {
    if p.is_square() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: p.ncols(),
        })
    }
}

/// Unique invariant pmf of an irreducible chain.
///
/// Invariant pmf by Grassmann–Taksar–Heyman elimination.
///
/// This is Gaussian elimination on `(Pᵀ − I)π = 0` arranged so that every
/// operation adds nonnegative numbers. Each component keeps full relative
/// accuracy, so states of very small stationary mass stay positive.
pub fn invariant_pmf(p: &StochasticMatrix) -> Result<Pmf> {
    require_square(p)?;
    if !check_irreducible_aperiodic(p).irreducible {
        return Err(Error::NotIrreducible);
    }
    invariant_pmf_unchecked(p)
}

/// Same as [`invariant_pmf`] without the structural check.
pub(crate) fn invariant_pmf_unchecked(p: &StochasticMatrix) -> Result<Pmf> {
    let d = p.dim();
    let mut a = p.matrix().clone();
    for n in (1..d).rev() {
        let s: f64 = (0..n).map(|j| a[(n, j)]).sum();
        if !(s > 0.0) {
            return Err(Error::SingularSystem);
        }
        for i in 0..n {
            a[(i, n)] /= s;
        }
        for i in 0..n {
            let ain = a[(i, n)];
            if ain != 0.0 {
                for j in 0..n {
                    a[(i, j)] += ain * a[(n, j)];
                }
            }
        }
    }
    let mut w = vec![0.0; d];
    w[0] = 1.0;
    for n in 1..d {
        w[n] = (0..n).map(|i| w[i] * a[(i, n)]).sum();
    }
    let s: f64 = w.iter().sum();
    if !s.is_finite() || !(s > 0.0) {
        return Err(Error::SingularSystem);
    }
    w.iter_mut().for_each(|v| *v /= s);
    Ok(Pmf(w))
}

/// `I − P + 1⊗π`.
fn resolvent_operator(p: &DMatrix<f64>, pi: &Pmf) -> DMatrix<f64> {
    let d = p.nrows();
    DMatrix::from_fn(d, d, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - p[(i, j)] + pi.0[j]
    })
}

/// Fundamental matrix `Z = [I − P + 1⊗π]⁻¹`.
pub fn fundamental_matrix(p: &StochasticMatrix, pi: &Pmf) -> Result<DMatrix<f64>> {
    require_square(p)?;
    if pi.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: pi.dim(),
        });
    }
    resolvent_operator(p.matrix(), pi)
        .try_inverse()
        .ok_or(Error::SingularSystem)
}

/// Adjoint (time reversal) in `L₂(π)`: `P†(x,x') = π(x') P(x',x) / π(x)`.
pub fn adjoint(p: &StochasticMatrix, pi: &Pmf) -> Result<StochasticMatrix> {
    require_square(p)?;
    let d = p.dim();
    if pi.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: pi.dim(),
        });
    }
    if let Some(state) = pi.0.iter().position(|w| *w <= 0.0) {
        return Err(Error::ZeroMass { state });
    }
    let pm = p.matrix();
    let mut m = DMatrix::from_fn(d, d, |i, j| pi.0[j] * pm[(j, i)] / pi.0[i]);
    renormalize_rows(&mut m);
    StochasticMatrix::new(m)
}

/// Solves `(I − P + 1⊗π) v = f` and anchors: `H(x) = v(x) − v(x°)`.
///
/// `v = Z f`, so this is `Σ_{x'} [Z(x,x') − Z(x°,x')] f(x')` without forming
/// `Z` explicitly.
pub(crate) fn poisson_with_pmf(
    p: &DMatrix<f64>,
    pi: &Pmf,
    f: &[f64],
    anchor: usize,
) -> Result<Vec<f64>> {
    let m = resolvent_operator(p, pi);
    let v = m
        .lu()
        .solve(&DVector::from_column_slice(f))
        .ok_or(Error::SingularSystem)?;
    let base = v[anchor];
    Ok(v.iter().map(|x| x - base).collect())
}

/// Solution of Poisson's equation `P H = H − f + π(f)` with `H(x°) = 0`.
pub fn poisson_solve(p: &StochasticMatrix, f: &StateFunction, anchor: usize) -> Result<StateFunction> {
    require_square(p)?;
    if f.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: f.dim(),
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
    let pi = invariant_pmf_unchecked(p)?;
    let h = poisson_with_pmf(p.matrix(), &pi, f.values(), anchor)?;
    Ok(StateFunction {
        values: h,
        units: f.units.clone(),
    })
}

/// Donsker–Varadhan relative entropy rate
/// `K(P‖P₀) = Σ π(x) P(x,x') log(P(x,x')/P₀(x,x'))`, with `0·log(0/q) = 0`.
pub fn dv_rate(p: &StochasticMatrix, p0: &StochasticMatrix, pi: &Pmf) -> Result<f64> {
    if p.matrix().shape() != p0.matrix().shape() {
        return Err(Error::DimensionMismatch {
            expected: p0.dim(),
            found: p.dim(),
        });
    }
    if pi.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: pi.dim(),
        });
    }
    let mut k = 0.0;
    for i in 0..p.dim() {
        let mut row = 0.0;
        for j in 0..p.ncols() {
            let a = p.get(i, j);
            if a > 0.0 {
                let b = p0.get(i, j);
                if b <= 0.0 {
                    return Err(Error::SupportViolation { row: i, col: j });
                }
                row += a * (a / b).ln();
            }
        }
        k += pi.0[i] * row;
    }
    Ok(k.max(0.0))
}
