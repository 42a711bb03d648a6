//! Small quadrature helpers used for coupling-block integrals and scalar
//! antiderivatives along trajectories.

use nalgebra::DMatrix;

/// Composite Simpson weights for `m + 1` equally spaced samples spanning
/// `m` intervals of width `h`.
///
/// Odd interval counts get the standard 3/8-rule correction on the last
/// three intervals; one interval falls back to the trapezoid, zero intervals
/// to a single zero weight.
pub fn simpson_weights(m: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; m + 1];
    if m == 0 {
        return w;
    }
    if m == 1 {
        w[0] = 0.5 * h;
        w[1] = 0.5 * h;
        return w;
    }
    let even_part = if m % 2 == 0 { m } else { m - 3 };
    // Simpson 1/3 over [0, even_part]
    if even_part >= 2 {
        w[0] += h / 3.0;
        w[even_part] += h / 3.0;
        for k in 1..even_part {
            w[k] += if k % 2 == 1 { 4.0 * h / 3.0 } else { 2.0 * h / 3.0 };
        }
    }
    if m % 2 == 1 {
        if m == 1 {
            unreachable!()
        }
        // Simpson 3/8 over the trailing three intervals
        let s = m - 3;
        w[s] += 3.0 * h / 8.0;
        w[s + 1] += 9.0 * h / 8.0;
        w[s + 2] += 9.0 * h / 8.0;
        w[s + 3] += 3.0 * h / 8.0;
    }
    w
}

/// Integrate matrix samples on a uniform grid with composite Simpson.
pub fn integrate_samples(samples: &[DMatrix<f64>], h: f64) -> DMatrix<f64> {
    assert!(!samples.is_empty());
    let w = simpson_weights(samples.len() - 1, h);
    let mut acc = DMatrix::zeros(samples[0].nrows(), samples[0].ncols());
    for (wi, s) in w.iter().zip(samples) {
        acc += s * *wi;
    }
    acc
}

/// Cumulative integral of scalar samples on a uniform grid: returns
/// `F(t_k) = ∫_{t_0}^{t_k}` for every node, with `F(t_0) = 0`.
///
/// Uses Simpson on each completed pair of intervals and a quadratic
/// (three-point) end correction on odd prefixes, so the cumulative values
/// are O(h^4) accurate for smooth integrands rather than the O(h^2) a
/// running trapezoid would give.
pub fn cumulative_scalar(samples: &[f64], h: f64) -> Vec<f64> {
    let n = samples.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    for k in 1..n {
        if k % 2 == 0 {
            out[k] = out[k - 2]
                + h / 3.0 * (samples[k - 2] + 4.0 * samples[k - 1] + samples[k]);
        } else if k == 1 {
            // Quadratic through the first three samples, integrated over the
            // first interval only.
            if n >= 3 {
                out[1] = h / 12.0 * (5.0 * samples[0] + 8.0 * samples[1] - samples[2]);
            } else {
                out[1] = 0.5 * h * (samples[0] + samples[1]);
            }
        } else {
            out[k] = out[k - 1]
                + h / 12.0 * (-samples[k - 2] + 8.0 * samples[k - 1] + 5.0 * samples[k]);
        }
    }
    out
}
