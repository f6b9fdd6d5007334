#![allow(dead_code)]

use std::io::Write;

use ddispatch::markov::{StateFunction, StochasticMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random irreducible aperiodic chain: a cycle through all states, a
/// self-loop at state 0, and extra edges with probability `density`.
pub fn random_chain(rng: &mut ChaCha8Rng, d: usize, density: f64) -> StochasticMatrix {
    let mut rows = vec![vec![0.0; d]; d];
    for (i, row) in rows.iter_mut().enumerate() {
        row[(i + 1) % d] = rng.random_range(0.2..1.0);
        for v in row.iter_mut() {
            if *v == 0.0 && rng.random::<f64>() < density {
                *v = rng.random_range(0.01..1.0);
            }
        }
    }
    rows[0][0] += 0.3;
    for row in &mut rows {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    StochasticMatrix::normalize_rows(nalgebra::DMatrix::from_fn(d, d, |i, j| rows[i][j])).unwrap()
}

pub fn random_util(rng: &mut ChaCha8Rng, d: usize) -> StateFunction {
    StateFunction::new((0..d).map(|_| rng.random_range(0.0..1.0)).collect())
}

pub fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Writes a verdict line that bypasses the test harness' output capture.
pub fn report(id: &str, pass: bool, detail: &str) {
    let line = format!("{id} {}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}
