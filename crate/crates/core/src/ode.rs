//! Adaptive Dormand-Prince 5(4) integrator for small dense systems.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub h0: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-11, atol: 1e-13, max_steps: 200_000, h0: 1e-3 }
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// Integrate y' = f(t, y) from t0 to t1. Checkpoints (sorted, within range)
/// trigger the callback with the state reached exactly at each one.
pub fn integrate<F, G>(
    f: F,
    t0: f64,
    t1: f64,
    y0: &[f64],
    opts: OdeOptions,
    checkpoints: &[f64],
    mut on_checkpoint: G,
) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64], &mut [f64]),
    G: FnMut(f64, &[f64]) -> Result<()>,
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut h = opts.h0.min(t1 - t0);
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut targets: Vec<f64> = checkpoints.iter().copied().filter(|&c| c > t0 && c < t1).collect();
    targets.push(t1);
    let mut ti = 0;
    let mut steps = 0;
    if t1 <= t0 {
        return Ok(y);
    }
    while ti < targets.len() {
        let target = targets[ti];
        let last = target - t <= h;
        let hh = if last { target - t } else { h };
        f(t, &y, &mut k[0]);
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for j in 0..s {
                    acc += hh * A[s][j] * k[j][i];
                }
                tmp[i] = acc;
            }
            f(t + C[s] * hh, &tmp, &mut k[s]);
        }
        let mut err = 0.0f64;
        let mut ynew = vec![0.0; n];
        for i in 0..n {
            let mut y5 = y[i];
            let mut y4 = y[i];
            for s in 0..7 {
                y5 += hh * B5[s] * k[s][i];
                y4 += hh * B4[s] * k[s][i];
            }
            let sc = opts.atol + opts.rtol * y5.abs().max(y[i].abs());
            err = err.max(((y5 - y4) / sc).abs());
            ynew[i] = y5;
        }
        if !err.is_finite() {
            return Err(Error::BlowUp("non-finite state in ODE step".into()));
        }
        if err <= 1.0 {
            t = if last { target } else { t + hh };
            y = ynew;
            if last {
                if checkpoints.contains(&target) {
                    on_checkpoint(t, &y)?;
                }
                ti += 1;
            }
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        if !last || err > 1.0 {
            h = hh * fac;
        }
        steps += 1;
        if steps > opts.max_steps || h < 1e-14 * (t1 - t0).abs() {
            return Err(Error::Quadrature(format!("ODE step failure at t={t}")));
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_and_oscillator() {
        let y = integrate(|_, y, d| d[0] = -y[0], 0.0, 2.0, &[1.0], OdeOptions::default(), &[], |_, _| Ok(())).unwrap();
        assert!((y[0] - (-2.0f64).exp()).abs() < 1e-11);
        let mut seen = vec![];
        let y = integrate(
            |_, y, d| {
                d[0] = y[1];
                d[1] = -y[0];
            },
            0.0,
            3.0,
            &[0.0, 1.0],
            OdeOptions::default(),
            &[1.0, 2.0, 3.0],
            |t, y| {
                seen.push((t, y[0]));
                Ok(())
            },
        )
        .unwrap();
        assert!((y[0] - 3f64.sin()).abs() < 1e-10);
        assert_eq!(seen.len(), 3);
        assert!((seen[0].1 - 1f64.sin()).abs() < 1e-10);
    }
}
