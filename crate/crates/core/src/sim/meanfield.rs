use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::design::DesignFamily;
use crate::error::{Error, Result};
use crate::markov::{Pmf, StochasticMatrix};

/// One step of `μ_{t+1} = μ_t P_ζ`, returning `μ_{t+1}` and `y_t = Σ μ_t 𝒰`.
pub fn meanfield_step(mu: &Pmf, zeta: f64, family: &DesignFamily) -> Result<(Pmf, f64)> {
    let p = family.kernel(zeta)?;
    propagate(mu, &p, family.util().values())
}

pub(crate) fn propagate(mu: &Pmf, p: &StochasticMatrix, util: &[f64]) -> Result<(Pmf, f64)> {
    if mu.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: mu.dim(),
        });
    }
    let y = mu.expectation(util);
    let mut next = p.left_apply(mu.as_slice());
    for v in &mut next {
        *v = v.max(0.0);
    }
    let s: f64 = next.iter().sum();
    next.iter_mut().for_each(|v| *v /= s);
    Ok((Pmf::from_vec_unchecked(next), y))
}

/// Re-tilts only when `ζ` changes.
#[derive(Debug, Default)]
pub(crate) struct KernelCache {
    last: Option<(u64, StochasticMatrix)>,
}

impl KernelCache {
    pub(crate) fn get(&mut self, family: &DesignFamily, zeta: f64) -> Result<&StochasticMatrix> {
        let bits = zeta.to_bits();
        if self.last.as_ref().map(|(b, _)| *b) != Some(bits) {
            self.last = Some((bits, family.kernel(zeta)?));
        }
        Ok(&self.last.as_ref().expect("just filled").1)
    }
}

/// Cumulative sparse rows of a kernel for inverse-CDF sampling.
#[derive(Debug, Clone)]
pub struct KernelSampler {
    rows: Vec<Vec<(usize, f64)>>,
}

impl KernelSampler {
    pub fn new(p: &StochasticMatrix) -> Self {
        let rows = (0..p.dim())
            .map(|x| {
                let mut acc = 0.0;
                let mut row: Vec<(usize, f64)> = (0..p.ncols())
                    .filter(|&y| p.get(x, y) > 0.0)
                    .map(|y| {
                        acc += p.get(x, y);
                        (y, acc)
                    })
                    .collect();
                if let Some(last) = row.last_mut() {
                    last.1 = f64::INFINITY;
                }
                row
            })
            .collect();
        Self { rows }
    }

    /// Next state from `x` given `u ∈ [0, 1)`.
    pub fn sample(&self, x: usize, u: f64) -> usize {
        let row = &self.rows[x];
        let k = row.partition_point(|(_, c)| *c <= u);
        row[k].0
    }
}

/// `N` independent agents sharing one random stream.
#[derive(Debug, Clone)]
pub struct FleetState {
    pub states: Vec<usize>,
    rng: ChaCha8Rng,
}

impl FleetState {
    pub fn from_states(states: Vec<usize>, seed: u64) -> Self {
        Self {
            states,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Draws `n` initial states i.i.d. from `mu`.
    pub fn from_pmf(n: usize, mu: &Pmf, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("fleet size must be positive".into()));
        }
        let d = mu.dim();
        let init = StochasticMatrix::from_rows(&[mu.as_slice().to_vec()])?;
        let sampler = KernelSampler::new(&init);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states = (0..n).map(|_| sampler.sample(0, rng.random::<f64>())).collect();
        debug_assert!(d > 0);
        Ok(Self { states, rng })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `y^N = (1/N) Σ 𝒰(Xⁱ)`.
    pub fn output(&self, util: &[f64]) -> f64 {
        self.states.iter().map(|&x| util[x]).sum::<f64>() / self.states.len() as f64
    }

    pub fn empirical_pmf(&self, d: usize) -> Pmf {
        let mut counts = vec![0usize; d];
        for &x in &self.states {
            counts[x] += 1;
        }
        let n = self.states.len() as f64;
        Pmf::from_vec_unchecked(counts.into_iter().map(|c| c as f64 / n).collect())
    }

    /// Advances every agent once with a prepared sampler.
    pub fn advance(&mut self, sampler: &KernelSampler) {
        for x in &mut self.states {
            *x = sampler.sample(*x, self.rng.random::<f64>());
        }
    }
}

/// Returns `y^N_t` for the current states, then advances them under `P_ζ`.
pub fn fleet_step(state: &mut FleetState, zeta: f64, family: &DesignFamily) -> Result<f64> {
    let p = family.kernel(zeta)?;
    let y = state.output(family.util().values());
    state.advance(&KernelSampler::new(&p));
    Ok(y)
}

/// Mean-field output `y_t` for a `ζ` sequence, started from `μ₀`.
pub fn meanfield_response(family: &DesignFamily, mu0: &Pmf, zeta: &[f64]) -> Result<Vec<f64>> {
    let mut cache = KernelCache::default();
    let mut mu = mu0.clone();
    let util = family.util().values();
    zeta.iter()
        .map(|&z| {
            let (next, y) = propagate(&mu, cache.get(family, z)?, util)?;
            mu = next;
            Ok(y)
        })
        .collect()
}

/// Fleet output `y^N_t` for a `ζ` sequence.
pub fn fleet_response(
    family: &DesignFamily,
    fleet: &mut FleetState,
    zeta: &[f64],
) -> Result<Vec<f64>> {
    let util = family.util().values();
    let mut last: Option<(u64, KernelSampler)> = None;
    zeta.iter()
        .map(|&z| {
            if last.as_ref().map(|(b, _)| *b) != Some(z.to_bits()) {
                last = Some((z.to_bits(), KernelSampler::new(&family.kernel(z)?)));
            }
            let y = fleet.output(util);
            fleet.advance(&last.as_ref().expect("just filled").1);
            Ok(y)
        })
        .collect()
}
