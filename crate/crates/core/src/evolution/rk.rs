//! Dormand-Prince 5(4) embedded pair with proportional step control, on
//! matrix-valued states (vectors are n x 1 matrices).

use super::EvolutionError;
use nalgebra::DMatrix;

const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
/// Fifth-order weights (also the last tableau row: first-same-as-last).
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
/// Difference between the 5th- and embedded 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Integrate `y' = f(t, y)` from `t0` to `t1 >= t0`.
///
/// The local error estimate per step is kept below `tol * (1 + ||y||)` in the
/// max norm. `cap` aborts with a blow-up report when the state grows past it
/// (used as non-continuation evidence by the stability prober).
pub fn rk45<F>(
    f: &F,
    t0: f64,
    t1: f64,
    y0: DMatrix<f64>,
    tol: f64,
    cap: Option<f64>,
) -> Result<DMatrix<f64>, EvolutionError>
where
    F: Fn(f64, &DMatrix<f64>) -> Result<DMatrix<f64>, EvolutionError>,
{
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(y0);
    }
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y)?;
    // Conservative initial step from the first derivative sample.
    let mut h = (0.1 * (1.0 + max_abs(&y)) / (1.0 + max_abs(&k1)))
        .min(span / 4.0)
        .max(span * 1e-10);
    let h_floor = span.max(1.0) * 1e-14;

    let mut ks: [DMatrix<f64>; 7] = [
        k1.clone(),
        k1.clone(),
        k1.clone(),
        k1.clone(),
        k1.clone(),
        k1.clone(),
        k1.clone(),
    ];

    loop {
        if t >= t1 {
            return Ok(y);
        }
        if h < h_floor {
            return Err(EvolutionError::StepUnderflow { t, err: h });
        }
        let h_step = h.min(t1 - t);

        ks[0] = k1.clone();
        let stage = |coeffs: &[f64], ks: &[DMatrix<f64>; 7]| -> DMatrix<f64> {
            let mut acc = y.clone();
            for (c, k) in coeffs.iter().zip(ks.iter()) {
                if *c != 0.0 {
                    acc += k * (*c * h_step);
                }
            }
            acc
        };
        ks[1] = f(t + C[0] * h_step, &stage(&A2, &ks))?;
        ks[2] = f(t + C[1] * h_step, &stage(&A3, &ks))?;
        ks[3] = f(t + C[2] * h_step, &stage(&A4, &ks))?;
        ks[4] = f(t + C[3] * h_step, &stage(&A5, &ks))?;
        ks[5] = f(t + C[4] * h_step, &stage(&A6, &ks))?;
        let y_new = stage(&B, &ks);
        ks[6] = f(t + h_step, &y_new)?;

        let mut err_mat = DMatrix::zeros(y.nrows(), y.ncols());
        for (c, k) in E.iter().zip(ks.iter()) {
            if *c != 0.0 {
                err_mat += k * (*c * h_step);
            }
        }
        let scale = tol * (1.0 + max_abs(&y_new));
        let err = max_abs(&err_mat);

        if !err.is_finite() || !y_new.iter().all(|v| v.is_finite()) {
            // Retry with a much smaller step before giving up.
            h *= 0.1;
            if h < h_floor {
                return Err(EvolutionError::NonFinite { t });
            }
            k1 = f(t, &y)?;
            continue;
        }

        if err <= scale {
            t += h_step;
            y = y_new;
            k1 = ks[6].clone();
            if let Some(cap) = cap {
                if max_abs(&y) > cap {
                    return Err(EvolutionError::BlowUp { t, cap });
                }
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * (scale / err).powf(0.2)).clamp(0.2, 5.0)
            };
            h = h_step * factor;
        } else {
            let factor = (0.9 * (scale / err).powf(0.2)).clamp(0.1, 1.0);
            h = h_step * factor;
            if h < h_floor {
                return Err(EvolutionError::StepUnderflow { t, err });
            }
        }
    }
}
