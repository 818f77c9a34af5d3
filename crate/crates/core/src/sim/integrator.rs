//! Dormand–Prince 5(4) with step-size control and continuous output.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OdeSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Steps below `min_step·max(1,|t|)` count as underflow.
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for OdeSettings {
    fn default() -> Self {
        Self { rel_tol: 1e-9, abs_tol: 1e-12, min_step: 1e-14, max_steps: 1_000_000 }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Result of one call to [`integrate`].
#[derive(Debug, Clone, Default)]
pub struct OdeOutput {
    /// State at each requested output time, in order.
    pub samples: Vec<Vec<f64>>,
    /// `(t, y)` at the end of every accepted step.
    pub steps: Vec<(f64, Vec<f64>)>,
    pub y_end: Vec<f64>,
    pub evaluations: usize,
}

/// Integrates `y' = f(t, y)` from `t0` to `t1 > t0`.
///
/// `out_times` must be sorted and inside `[t0, t1]`; they are filled from the
/// continuous extension of each step.
pub fn integrate<F>(mut f: F, t0: f64, y0: &[f64], t1: f64, out_times: &[f64], s: &OdeSettings) -> Result<OdeOutput>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if !(t1 >= t0) {
        return Err(invalid("integration interval must be forward in time"));
    }
    if out_times.windows(2).any(|w| w[1] < w[0]) || out_times.iter().any(|&t| t < t0 - 1e-12 || t > t1 + 1e-12) {
        return Err(invalid("output times must be sorted and inside the interval"));
    }
    let n = y0.len();
    let mut out = OdeOutput { y_end: y0.to_vec(), ..Default::default() };
    let mut next_out = 0;
    while next_out < out_times.len() && out_times[next_out] <= t0 {
        out.samples.push(y0.to_vec());
        next_out += 1;
    }
    if t1 == t0 {
        return Ok(out);
    }

    let mut k = vec![vec![0.0; n]; 7];
    let mut y = y0.to_vec();
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut t = t0;
    f(t, &y, &mut k[0]);
    out.evaluations += 1;
    let mut h = initial_step(&mut f, t0, &y, &k[0], t1 - t0, s, &mut out.evaluations);
    let mut fac_old = 1e-4_f64;
    let mut steps = 0usize;
    let mut rejected_last = false;

    while t < t1 {
        if steps >= s.max_steps {
            return Err(Error::IntegrationFailure { t });
        }
        steps += 1;
        let last = t + h >= t1 || t1 - (t + h) < 1e-12 * t1.abs().max(1.0);
        if last {
            h = t1 - t;
        }
        if h < s.min_step * t.abs().max(1.0) {
            return Err(Error::IntegrationFailure { t });
        }
        let stage = |ks: &[Vec<f64>], coeffs: &[f64], yt: &mut [f64]| {
            for i in 0..n {
                let mut acc = 0.0;
                for (kj, c) in ks.iter().zip(coeffs) {
                    acc += c * kj[i];
                }
                yt[i] = y[i] + h * acc;
            }
        };
        stage(&k[..1], &[A21], &mut ytmp);
        f(t + C2 * h, &ytmp, &mut k[1]);
        stage(&k[..2], &[A31, A32], &mut ytmp);
        f(t + C3 * h, &ytmp, &mut k[2]);
        stage(&k[..3], &[A41, A42, A43], &mut ytmp);
        f(t + C4 * h, &ytmp, &mut k[3]);
        stage(&k[..4], &[A51, A52, A53, A54], &mut ytmp);
        f(t + C5 * h, &ytmp, &mut k[4]);
        stage(&k[..5], &[A61, A62, A63, A64, A65], &mut ytmp);
        f(t + h, &ytmp, &mut k[5]);
        stage(&k[..6], &[A71, 0.0, A73, A74, A75, A76], &mut ynew);
        let (head, tail) = k.split_at_mut(6);
        f(t + h, &ynew, &mut tail[0]);
        out.evaluations += 6;
        let k7 = &tail[0];

        let mut err = 0.0;
        for i in 0..n {
            let e = h * (E1 * head[0][i] + E3 * head[2][i] + E4 * head[3][i] + E5 * head[4][i] + E6 * head[5][i] + E7 * k7[i]);
            let sc = s.abs_tol + s.rel_tol * y[i].abs().max(ynew[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / n.max(1) as f64).sqrt();
        if !err.is_finite() {
            h *= 0.2;
            rejected_last = true;
            continue;
        }

        // PI step control
        let fac11 = err.powf(0.17);
        let fac = (fac11 / fac_old.powf(0.04) / 0.9).clamp(0.1, 5.0);
        let mut h_new = h / fac;
        if err <= 1.0 {
            fac_old = err.max(1e-4);
            let t_new = if last { t1 } else { t + h };
            // continuous output over [t, t_new]
            while next_out < out_times.len() && out_times[next_out] <= t_new {
                let th = ((out_times[next_out] - t) / h).clamp(0.0, 1.0);
                let th1 = 1.0 - th;
                let mut v = vec![0.0; n];
                for i in 0..n {
                    let ydiff = ynew[i] - y[i];
                    let bspl = h * head[0][i] - ydiff;
                    let r4 = ydiff - h * k7[i] - bspl;
                    let r5 = h * (D1 * head[0][i] + D3 * head[2][i] + D4 * head[3][i] + D5 * head[4][i] + D6 * head[5][i] + D7 * k7[i]);
                    v[i] = y[i] + th * (ydiff + th1 * (bspl + th * (r4 + th1 * r5)));
                }
                out.samples.push(v);
                next_out += 1;
            }
            y.copy_from_slice(&ynew);
            t = t_new;
            out.steps.push((t, y.clone()));
            let k7c = tail[0].clone();
            head[0].copy_from_slice(&k7c);
            if rejected_last {
                h_new = h_new.min(h);
            }
            rejected_last = false;
        } else {
            h_new = h / (fac11 / 0.9).min(5.0);
            rejected_last = true;
        }
        h = h_new;
    }
    out.y_end = y;
    Ok(out)
}

fn initial_step<F>(f: &mut F, t0: f64, y0: &[f64], f0: &[f64], span: f64, s: &OdeSettings, evals: &mut usize) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len().max(1) as f64;
    let sc: Vec<f64> = y0.iter().map(|v| s.abs_tol + s.rel_tol * v.abs()).collect();
    let dnf = (f0.iter().zip(&sc).map(|(v, c)| (v / c).powi(2)).sum::<f64>() / n).sqrt();
    let dny = (y0.iter().zip(&sc).map(|(v, c)| (v / c).powi(2)).sum::<f64>() / n).sqrt();
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { 0.01 * dny / dnf };
    h = h.min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, d)| y + h * d).collect();
    let mut f1 = vec![0.0; y0.len()];
    f(t0 + h, &y1, &mut f1);
    *evals += 1;
    let der2 = (f1.iter().zip(f0).zip(&sc).map(|((a, b), c)| ((a - b) / c).powi(2)).sum::<f64>() / n).sqrt() / h;
    let der = der2.max(dnf);
    let h1 = if der <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / der).powf(0.2) };
    (100.0 * h).min(h1).min(span)
}
