//! Classical fixed-step fourth-order Runge–Kutta.

/// One RK4 step of `y' = f(t, y)` from `(t, y)` with step `h`.
pub fn rk4_step<F, E>(f: &mut F, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>, E>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, E>,
{
    let n = y.len();
    let axpy = |a: f64, k: &[f64]| -> Vec<f64> { (0..n).map(|i| y[i] + a * k[i]).collect() };

    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, &axpy(0.5 * h, &k1))?;
    let k3 = f(t + 0.5 * h, &axpy(0.5 * h, &k2))?;
    let k4 = f(t + h, &axpy(h, &k3))?;
    Ok((0..n)
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Integrates `steps` RK4 steps and returns every state including `y0`.
pub fn rk4_path<F, E>(f: &mut F, t0: f64, y0: &[f64], h: f64, steps: usize) -> Result<Vec<Vec<f64>>, E>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, E>,
{
    let mut out = Vec::with_capacity(steps + 1);
    out.push(y0.to_vec());
    let mut t = t0;
    for _ in 0..steps {
        let next = rk4_step(f, t, out.last().unwrap(), h)?;
        out.push(next);
        t += h;
    }
    Ok(out)
}
