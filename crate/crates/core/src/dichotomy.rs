//! Invariant projector estimation and nonuniform certificate fitting.
//!
//! Growth certificates bound `||T(t,s)|| <= M e^{nu (t-s) + delta s}` and
//! dichotomy certificates bound the projected evolution by
//! `K e^{-alpha (t-s) + eps s}` forward and `K e^{-alpha (s-t) + eps s}`
//! backward. Both are fitted over grid pairs as log-domain linear programs
//! (see [`crate::envelope`]) and certified by exhaustive verification sweeps.
//! All certificates are grid-relative: refinement studies quantify the drift.

use crate::envelope::{self, EnvelopeFit, FitError, PairSample};
use crate::evolution::{spectral_norm, EvolutionError, EvolutionGrid};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DichotomyError {
    #[error("anchor {anchor} + horizon {horizon} nodes exceeds the grid ({nodes} nodes)")]
    AnchorOutOfRange {
        anchor: usize,
        horizon: usize,
        nodes: usize,
    },
    #[error(
        "no usable singular-value gap: log-gap {gap:.4} over horizon {horizon:.2} is below \
         {needed:.4}; the shift looks spectral"
    )]
    NoGap { gap: f64, horizon: f64, needed: f64 },
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Tunables for projector estimation and certificate fitting.
#[derive(Debug, Clone, Copy)]
pub struct DichotomyParams {
    /// Enforced distance between eps and alpha (strict inequality margin).
    pub margin: f64,
    /// Required log singular-value gap per unit of horizon time.
    pub gap_tol: f64,
    /// Pair-sample budget for the fit; sources are strided above it and the
    /// exhaustive verification pass pulls violated pairs back in.
    pub max_pairs: usize,
}

impl Default for DichotomyParams {
    fn default() -> Self {
        DichotomyParams {
            margin: 1e-3,
            gap_tol: 0.1,
            max_pairs: 60_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GrowthKind {
    Half,
    Full,
}

/// Bounded-growth certificate `||T(t,s)|| <= M e^{nu (t-s) + delta s}`
/// (t >= s for half, both orders with |t-s| for full).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GrowthCertificate {
    pub kind: GrowthKind,
    pub log_m: f64,
    pub nu: f64,
    pub delta: f64,
    /// Max signed log-violation from the exhaustive sweep (valid iff <= 0).
    pub max_violation: f64,
}

impl GrowthCertificate {
    pub fn m(&self) -> f64 {
        self.log_m.exp()
    }
}

/// A family of invariant projectors on the grid nodes.
///
/// Constructed at an anchor node from the singular-value split of the
/// transition over a horizon and propagated by conjugation, which makes the
/// invariance identity exact up to numerics.
#[derive(Debug, Clone)]
pub struct ProjectorFamily {
    projectors: Vec<DMatrix<f64>>,
    rank: usize,
    pub anchor: usize,
    /// Log singular-value gap at the stable/unstable split (infinite when the
    /// split is trivial: rank 0 or n).
    pub sv_gap: f64,
    /// Max relative idempotency defect over nodes.
    pub idempotency_residual: f64,
    /// Max relative invariance defect over steps.
    pub invariance_residual: f64,
    /// Largest projector norm over nodes (a conditioning indicator).
    pub max_norm: f64,
}

impl ProjectorFamily {
    /// Rank of the projectors (dimension of the stable range).
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn projector(&self, node: usize) -> &DMatrix<f64> {
        &self.projectors[node]
    }

    pub fn num_nodes(&self) -> usize {
        self.projectors.len()
    }

    /// The constant family P = I (used for contraction tests).
    pub fn identity(dim: usize, num_nodes: usize) -> ProjectorFamily {
        ProjectorFamily {
            projectors: vec![DMatrix::identity(dim, dim); num_nodes],
            rank: dim,
            anchor: 0,
            sv_gap: f64::INFINITY,
            idempotency_residual: 0.0,
            invariance_residual: 0.0,
            max_norm: 1.0,
        }
    }

    /// The constant family P = 0 (expansion-only side).
    pub fn zero(dim: usize, num_nodes: usize) -> ProjectorFamily {
        ProjectorFamily {
            projectors: vec![DMatrix::zeros(dim, dim); num_nodes],
            rank: 0,
            anchor: 0,
            sv_gap: f64::INFINITY,
            idempotency_residual: 0.0,
            invariance_residual: 0.0,
            max_norm: 0.0,
        }
    }

    /// Assemble a family from per-node matrices, recording its residuals.
    pub fn from_matrices(
        eg: &EvolutionGrid,
        projectors: Vec<DMatrix<f64>>,
        anchor: usize,
    ) -> ProjectorFamily {
        let rank = rank_of(&projectors[anchor]);
        let mut fam = ProjectorFamily {
            projectors,
            rank,
            anchor,
            sv_gap: f64::INFINITY,
            idempotency_residual: 0.0,
            invariance_residual: 0.0,
            max_norm: 0.0,
        };
        fam.measure_residuals(eg);
        fam
    }

    fn measure_residuals(&mut self, eg: &EvolutionGrid) {
        let mut idem = 0.0f64;
        let mut inv = 0.0f64;
        let mut max_norm = 0.0f64;
        for (i, p) in self.projectors.iter().enumerate() {
            let pn = spectral_norm(p);
            max_norm = max_norm.max(pn);
            let defect = spectral_norm(&(p * p - p)) / (1.0 + pn * pn);
            idem = idem.max(defect);
            if i + 1 < self.projectors.len() {
                let s = eg.step(i);
                let lhs = s * p;
                let rhs = &self.projectors[i + 1] * s;
                let d = spectral_norm(&(&lhs - &rhs)) / (1.0 + spectral_norm(&lhs));
                inv = inv.max(d);
            }
        }
        self.idempotency_residual = idem;
        self.invariance_residual = inv;
        self.max_norm = max_norm;
    }
}

fn rank_of(p: &DMatrix<f64>) -> usize {
    // Projector ranks are safely read off the trace.
    p.trace().round().max(0.0) as usize
}

/// Estimate the invariant projector family from the singular-value split of
/// `T(anchor + horizon, anchor)`.
///
/// Right singular directions with singular values below one span the stable
/// subspace, the rest the unstable one; the split is accepted only when the
/// log singular-value gap is at least `gap_tol` per unit of horizon time
/// (trivial splits of rank 0 or n are always accepted). The anchor projector
/// is propagated to every node by conjugation with the transition.
pub fn estimate_projectors(
    eg: &EvolutionGrid,
    anchor: usize,
    horizon_nodes: usize,
    gap_tol: f64,
) -> Result<ProjectorFamily, DichotomyError> {
    let n = eg.dim();
    let nodes = eg.num_nodes();
    if horizon_nodes == 0 || anchor + horizon_nodes >= nodes {
        return Err(DichotomyError::AnchorOutOfRange {
            anchor,
            horizon: horizon_nodes,
            nodes,
        });
    }
    let t_h = eg.transition(anchor + horizon_nodes, anchor)?;
    let horizon_time = eg.times()[anchor + horizon_nodes] - eg.times()[anchor];

    let svd = t_h.clone().svd(true, true);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let v_t = svd.v_t.as_ref().expect("svd requested with vectors");
    // Unstable directions fail to contract over the horizon.
    let r = order
        .iter()
        .filter(|&&i| svd.singular_values[i] >= 1.0)
        .count();

    let sv_gap = if r == 0 || r == n {
        f64::INFINITY
    } else {
        let smallest_unstable = svd.singular_values[order[r - 1]];
        let largest_stable = svd.singular_values[order[r]];
        let gap = smallest_unstable.ln() - largest_stable.ln();
        let needed = gap_tol * horizon_time;
        if gap < needed {
            return Err(DichotomyError::NoGap {
                gap,
                horizon: horizon_time,
                needed,
            });
        }
        gap
    };

    // P(anchor): orthogonal projector onto the span of the stable right
    // singular directions (rows r.. of V^T in decreasing-sigma order).
    let mut p0 = DMatrix::zeros(n, n);
    for &idx in order.iter().skip(r) {
        let v = v_t.row(idx).transpose();
        p0 += &v * v.transpose();
    }

    let from_anchor = transitions_from(eg, anchor)?;
    let to_anchor = transitions_to(eg, anchor)?;
    let projectors: Vec<DMatrix<f64>> = (0..nodes)
        .map(|i| &from_anchor[i] * &p0 * &to_anchor[i])
        .collect();

    let mut fam = ProjectorFamily {
        projectors,
        rank: n - r,
        anchor,
        sv_gap,
        idempotency_residual: 0.0,
        invariance_residual: 0.0,
        max_norm: 0.0,
    };
    fam.measure_residuals(eg);
    Ok(fam)
}

/// T(t_i, anchor) for every node i.
pub(crate) fn transitions_from(
    eg: &EvolutionGrid,
    anchor: usize,
) -> Result<Vec<DMatrix<f64>>, EvolutionError> {
    let nodes = eg.num_nodes();
    let id = DMatrix::identity(eg.dim(), eg.dim());
    let mut out = vec![id.clone(); nodes];
    eg.scan_forward(anchor, |i, m| out[i] = m.clone());
    eg.scan_backward(anchor, |i, m| out[i] = m.clone())?;
    Ok(out)
}

/// T(anchor, t_i) for every node i.
pub(crate) fn transitions_to(
    eg: &EvolutionGrid,
    anchor: usize,
) -> Result<Vec<DMatrix<f64>>, EvolutionError> {
    let nodes = eg.num_nodes();
    let n = eg.dim();
    let id = DMatrix::identity(n, n);
    let mut out = vec![id.clone(); nodes];
    // i > anchor: T(anchor, t_i) undoes the steps anchor..i (right-multiply by
    // inverse steps, implemented as transposed solves).
    let mut acc = id.clone();
    for i in (anchor + 1)..nodes {
        let lu = eg.step(i - 1).transpose().lu();
        acc = lu
            .solve(&acc.transpose())
            .ok_or(EvolutionError::Singular {
                cond: f64::INFINITY,
            })?
            .transpose();
        out[i] = acc.clone();
    }
    // i < anchor: T(anchor, t_i) is the forward product of steps i..anchor.
    let mut acc = id;
    for i in (0..anchor).rev() {
        acc = &acc * eg.step(i);
        out[i] = acc.clone();
    }
    Ok(out)
}

/// Nonuniform exponential dichotomy certificate with its projector family.
#[derive(Debug, Clone)]
pub struct DichotomyCertificate {
    pub log_k: f64,
    pub alpha: f64,
    pub eps: f64,
    pub projectors: ProjectorFamily,
    /// Max signed log-violations from the exhaustive sweep (valid iff <= 0).
    pub stable_violation: f64,
    pub unstable_violation: f64,
    pub feasible: bool,
    pub active_constraints: usize,
}

impl DichotomyCertificate {
    pub fn k(&self) -> f64 {
        self.log_k.exp()
    }

    pub fn rank(&self) -> usize {
        self.projectors.rank()
    }
}

/// Signed log-violations of a certificate over every grid pair.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ViolationReport {
    /// max over t >= s of log||T(t,s)P(s)|| - (log K - alpha(t-s) + eps s)
    pub stable: f64,
    /// max over s >= t of log||T(t,s)Q(s)|| - (log K - alpha(s-t) + eps s)
    pub unstable: f64,
    pub valid: bool,
}

fn source_stride(num_nodes: usize, max_pairs: usize) -> usize {
    let total = num_nodes * (num_nodes + 1) / 2;
    (total / max_pairs.max(1)).max(1)
}

/// Log-norm samples of `T(t,s) P(s)` over forward pairs, strided at the
/// source to stay within the budget.
fn stable_samples(eg: &EvolutionGrid, pf: &ProjectorFamily, stride: usize) -> Vec<PairSample> {
    let times = eg.times();
    let sources: Vec<usize> = (0..eg.num_nodes()).step_by(stride).collect();
    sources
        .par_iter()
        .flat_map_iter(|&j| {
            let mut acc = pf.projector(j).clone();
            let mut out = Vec::with_capacity(eg.num_nodes() - j);
            out.push(PairSample {
                sep: 0.0,
                src: times[j],
                logval: spectral_norm(&acc).ln(),
            });
            for i in (j + 1)..eg.num_nodes() {
                acc = eg.step(i - 1) * acc;
                out.push(PairSample {
                    sep: times[i] - times[j],
                    src: times[j],
                    logval: spectral_norm(&acc).ln(),
                });
            }
            out
        })
        .collect()
}

/// Log-norm samples of `T(t,s) Q(s)` over backward pairs (t <= s).
fn unstable_samples(
    eg: &EvolutionGrid,
    pf: &ProjectorFamily,
    stride: usize,
) -> Result<Vec<PairSample>, EvolutionError> {
    let times = eg.times();
    let n = eg.dim();
    let id = DMatrix::identity(n, n);
    let sources: Vec<usize> = (0..eg.num_nodes()).step_by(stride).collect();
    let chunks: Result<Vec<Vec<PairSample>>, EvolutionError> = sources
        .par_iter()
        .map(|&j| {
            let mut acc = &id - pf.projector(j);
            let mut out = Vec::with_capacity(j + 1);
            out.push(PairSample {
                sep: 0.0,
                src: times[j],
                logval: spectral_norm(&acc).ln(),
            });
            for i in (0..j).rev() {
                let lu = eg.step(i).clone().lu();
                acc = lu.solve(&acc).ok_or(EvolutionError::Singular {
                    cond: f64::INFINITY,
                })?;
                out.push(PairSample {
                    sep: times[j] - times[i],
                    src: times[j],
                    logval: spectral_norm(&acc).ln(),
                });
            }
            Ok(out)
        })
        .collect();
    Ok(chunks?.into_iter().flatten().collect())
}

/// Fit a dichotomy certificate for the given projector family:
/// lexicographically minimal log K, then maximal alpha, then minimal eps,
/// over both inequality families, with the strictness margin
/// `eps <= alpha - margin`. The fitted certificate is certified by an
/// exhaustive sweep; violated pairs re-enter the fit.
pub fn fit_dichotomy(
    eg: &EvolutionGrid,
    pf: &ProjectorFamily,
    params: &DichotomyParams,
) -> Result<DichotomyCertificate, DichotomyError> {
    let stride = source_stride(eg.num_nodes(), params.max_pairs);
    let mut stable = stable_samples(eg, pf, stride);
    let mut unstable = unstable_samples(eg, pf, stride)?;

    let mut fit;
    let mut report;
    let mut rounds = 0usize;
    loop {
        fit = fit_decay_samples(&stable, &unstable, params.margin)?;
        report = verify_fit(eg, pf, fit.log_const, fit.rate, fit.nonuni);
        rounds += 1;
        if (report.0.stable <= 1e-9 && report.0.unstable <= 1e-9) || rounds > 4 || stride == 1 {
            break;
        }
        let (vs, vu) = report.1;
        if vs.is_empty() && vu.is_empty() {
            break;
        }
        stable.extend(vs);
        unstable.extend(vu);
    }

    let feasible = !fit.rate_pinned && !fit.at_box_bound && fit.rate > params.margin;
    Ok(DichotomyCertificate {
        log_k: fit.log_const,
        alpha: fit.rate,
        eps: fit.nonuni,
        projectors: pf.clone(),
        stable_violation: report.0.stable,
        unstable_violation: report.0.unstable,
        feasible,
        active_constraints: fit.active_constraints,
    })
}

/// Core decay fit shared with the spectrum engine: both inequality families
/// in one constraint set.
pub(crate) fn fit_decay_samples(
    stable: &[PairSample],
    unstable: &[PairSample],
    margin: f64,
) -> Result<EnvelopeFit, FitError> {
    let mut all = Vec::with_capacity(stable.len() + unstable.len());
    all.extend_from_slice(stable);
    all.extend_from_slice(unstable);
    envelope::fit_decay_envelope(&all, margin)
}

type ViolatingPairs = (Vec<PairSample>, Vec<PairSample>);

fn verify_fit(
    eg: &EvolutionGrid,
    pf: &ProjectorFamily,
    log_k: f64,
    alpha: f64,
    eps: f64,
) -> (ViolationReport, ViolatingPairs) {
    let full_stable = stable_samples(eg, pf, 1);
    let full_unstable = unstable_samples(eg, pf, 1).unwrap_or_default();
    let viol = |p: &PairSample| p.logval - (log_k - alpha * p.sep + eps * p.src);
    let mut worst_s = f64::NEG_INFINITY;
    let mut worst_u = f64::NEG_INFINITY;
    let mut vs = Vec::new();
    let mut vu = Vec::new();
    for p in &full_stable {
        if !p.logval.is_finite() {
            continue;
        }
        let v = viol(p);
        worst_s = worst_s.max(v);
        if v > 1e-9 {
            vs.push(*p);
        }
    }
    for p in &full_unstable {
        if !p.logval.is_finite() {
            continue;
        }
        let v = viol(p);
        worst_u = worst_u.max(v);
        if v > 1e-9 {
            vu.push(*p);
        }
    }
    // Rank-degenerate sides contribute no constraints at all.
    if !worst_s.is_finite() {
        worst_s = 0.0;
    }
    if !worst_u.is_finite() {
        worst_u = 0.0;
    }
    vs.sort_by(|a, b| viol(b).total_cmp(&viol(a)));
    vu.sort_by(|a, b| viol(b).total_cmp(&viol(a)));
    vs.truncate(64);
    vu.truncate(64);
    (
        ViolationReport {
            stable: worst_s,
            unstable: worst_u,
            valid: worst_s <= 0.0 && worst_u <= 0.0,
        },
        (vs, vu),
    )
}

/// Exhaustive violation sweep of an existing certificate on a grid.
pub fn verify_certificate(eg: &EvolutionGrid, cert: &DichotomyCertificate) -> ViolationReport {
    verify_fit(eg, &cert.projectors, cert.log_k, cert.alpha, cert.eps).0
}

/// Fit a bounded-growth certificate. Half bounds forward pairs only; full
/// combines the forward fit with a fit of the inverse flow and keeps the
/// worse of the two envelopes (the |t-s| bound is governed by whichever
/// direction grows faster).
pub fn fit_growth(
    eg: &EvolutionGrid,
    kind: GrowthKind,
    params: &DichotomyParams,
) -> Result<GrowthCertificate, DichotomyError> {
    let stride = source_stride(eg.num_nodes(), params.max_pairs);
    let id = ProjectorFamily::identity(eg.dim(), eg.num_nodes());
    let zero = ProjectorFamily::zero(eg.dim(), eg.num_nodes());
    let forward = stable_samples(eg, &id, stride);
    let f_fit = envelope::fit_growth_envelope(&forward, -1e4)?;
    let (log_m, nu, delta) = match kind {
        GrowthKind::Half => (f_fit.log_const, f_fit.rate, f_fit.nonuni),
        GrowthKind::Full => {
            // Inverse flow: ||T(t,s)|| for t <= s against M e^{nu (s-t) + delta t},
            // with the nonuniform factor re-anchored at the earlier time (the
            // source of the inverse flow).
            let backward: Vec<PairSample> = unstable_samples(eg, &zero, stride)?
                .iter()
                .map(|p| PairSample {
                    sep: p.sep,
                    src: p.src - p.sep,
                    logval: p.logval,
                })
                .collect();
            let b_fit = envelope::fit_growth_envelope(&backward, -1e4)?;
            (
                f_fit.log_const.max(b_fit.log_const),
                f_fit.rate.max(b_fit.rate),
                f_fit.nonuni.max(b_fit.nonuni),
            )
        }
    };

    // Exhaustive verification in the definition's form (nonuniform factor at
    // the source, i.e. the second argument of T).
    let fwd_all = stable_samples(eg, &id, 1);
    let mut max_violation = fwd_all
        .iter()
        .map(|p| p.logval - (log_m + nu * p.sep + delta * p.src))
        .fold(f64::NEG_INFINITY, f64::max);
    if kind == GrowthKind::Full {
        for p in &unstable_samples(eg, &zero, 1)? {
            max_violation = max_violation.max(p.logval - (log_m + nu * p.sep + delta * p.src));
        }
    }

    Ok(GrowthCertificate {
        kind,
        log_m,
        nu,
        delta,
        max_violation,
    })
}

/// Contraction test: fit with the identity projector family.
pub fn is_contraction(
    eg: &EvolutionGrid,
    params: &DichotomyParams,
) -> Result<(bool, DichotomyCertificate), DichotomyError> {
    let pf = ProjectorFamily::identity(eg.dim(), eg.num_nodes());
    let cert = fit_dichotomy(eg, &pf, params)?;
    let ok = cert.feasible && cert.alpha > 0.0 && cert.eps < cert.alpha;
    Ok((ok, cert))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{build_grid, TimeGrid};
    use crate::sysdef::SystemDef;

    pub(crate) fn scalar_grid(a: &str, t_end: f64, h: f64) -> EvolutionGrid {
        let sys = SystemDef::linear("s", 1, &[vec![a.to_string()]], false, None).unwrap();
        build_grid(&sys, TimeGrid::uniform(0.0, t_end, h).unwrap(), 1e-10).unwrap()
    }

    pub(crate) fn diag_grid(d: &[&str], t_end: f64, h: f64) -> EvolutionGrid {
        let n = d.len();
        let rows: Vec<Vec<String>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { d[i].to_string() } else { "0".to_string() })
                    .collect()
            })
            .collect();
        let sys = SystemDef::linear("diag", n, &rows, false, None).unwrap();
        build_grid(&sys, TimeGrid::uniform(0.0, t_end, h).unwrap(), 1e-10).unwrap()
    }

    #[test]
    fn saddle_projector_is_recovered() {
        let eg = diag_grid(&["-1", "1"], 10.0, 0.1);
        let pf = estimate_projectors(&eg, 0, 50, 0.1).unwrap();
        assert_eq!(pf.rank(), 1);
        let p = pf.projector(0);
        assert!((p[(0, 0)] - 1.0).abs() < 1e-9);
        assert!(p[(1, 1)].abs() < 1e-9);
        assert!(pf.idempotency_residual < 1e-10);
        assert!(pf.invariance_residual < 1e-9);
    }

    #[test]
    fn contraction_takes_the_identity_branch() {
        let eg = diag_grid(&["-1", "-2"], 10.0, 0.1);
        let pf = estimate_projectors(&eg, 0, 99, 0.1).unwrap();
        assert_eq!(pf.rank(), 2);
        let p = pf.projector(37);
        assert!(spectral_norm(&(p - DMatrix::<f64>::identity(2, 2))) < 1e-9);
    }

    #[test]
    fn tiny_gap_is_rejected() {
        let eg = diag_grid(&["-0.001", "0.001"], 10.0, 0.1);
        // Total log-gap is 0.02 over horizon ~10; we require 0.1 per unit time.
        let err = estimate_projectors(&eg, 0, 99, 0.1).unwrap_err();
        assert!(matches!(err, DichotomyError::NoGap { .. }));
    }

    #[test]
    fn constant_scalar_certificate_is_exact() {
        let eg = scalar_grid("-1", 10.0, 0.1);
        let pf = ProjectorFamily::identity(1, eg.num_nodes());
        let cert = fit_dichotomy(&eg, &pf, &DichotomyParams::default()).unwrap();
        assert!(cert.feasible);
        assert!((cert.alpha - 1.0).abs() < 1e-6, "alpha = {}", cert.alpha);
        assert!(cert.eps.abs() < 1e-6);
        assert!(cert.log_k.abs() < 1e-6);
        assert!(cert.stable_violation <= 1e-9);
    }

    #[test]
    fn saddle_certificate() {
        let eg = diag_grid(&["-1", "1"], 10.0, 0.1);
        let pf = estimate_projectors(&eg, 0, 99, 0.1).unwrap();
        let cert = fit_dichotomy(&eg, &pf, &DichotomyParams::default()).unwrap();
        assert!(cert.feasible);
        assert!((cert.alpha - 1.0).abs() < 1e-6, "alpha = {}", cert.alpha);
        assert!(cert.eps.abs() < 1e-6);
        assert!(cert.log_k.abs() < 1e-5);
        assert!(cert.unstable_violation <= 1e-9);
    }

    #[test]
    fn nonuniform_scalar_needs_eps() {
        let eg = scalar_grid("-3 - t*sin(t)", 40.0, 0.1);
        let pf = ProjectorFamily::identity(1, eg.num_nodes());
        let cert = fit_dichotomy(&eg, &pf, &DichotomyParams::default()).unwrap();
        assert!(cert.feasible);
        assert!((cert.alpha - 2.0).abs() < 0.05, "alpha = {}", cert.alpha);
        assert!((cert.eps - 2.0).abs() < 0.05, "eps = {}", cert.eps);
        assert!(cert.eps < cert.alpha);
        assert!(cert.stable_violation <= 1e-9);
    }

    #[test]
    fn growth_certificates() {
        let eg = scalar_grid("-1", 10.0, 0.1);
        let p = DichotomyParams::default();
        let half = fit_growth(&eg, GrowthKind::Half, &p).unwrap();
        assert!((half.nu + 1.0).abs() < 1e-6, "nu = {}", half.nu);
        assert!(half.delta.abs() < 1e-6);
        assert!(half.log_m.abs() < 1e-6);
        assert!(half.max_violation <= 1e-9);

        let full = fit_growth(&eg, GrowthKind::Full, &p).unwrap();
        assert!((full.nu - 1.0).abs() < 1e-6, "nu = {}", full.nu);
        assert!(full.delta.abs() < 1e-6);
        assert!(full.max_violation <= 1e-9);
    }

    #[test]
    fn nonuniform_growth() {
        let eg = scalar_grid("-3 - t*sin(t)", 40.0, 0.1);
        let half = fit_growth(&eg, GrowthKind::Half, &DichotomyParams::default()).unwrap();
        assert!((half.nu + 2.0).abs() < 0.05, "nu = {}", half.nu);
        assert!((half.delta - 2.0).abs() < 0.12, "delta = {}", half.delta);
        assert!(half.max_violation <= 1e-9);
    }

    #[test]
    fn contraction_classification() {
        let p = DichotomyParams::default();
        let (yes, _) = is_contraction(&diag_grid(&["-1", "-2"], 10.0, 0.1), &p).unwrap();
        assert!(yes);
        let (no, _) = is_contraction(&diag_grid(&["-1", "1"], 10.0, 0.1), &p).unwrap();
        assert!(!no);
        let (bv, cert) = is_contraction(&scalar_grid("-3 - t*sin(t)", 30.0, 0.1), &p).unwrap();
        assert!(bv);
        assert!(cert.eps > 0.0);
    }

    #[test]
    fn halved_constant_is_flagged() {
        let eg = scalar_grid("-1", 10.0, 0.1);
        let pf = ProjectorFamily::identity(1, eg.num_nodes());
        let mut cert = fit_dichotomy(&eg, &pf, &DichotomyParams::default()).unwrap();
        cert.log_k -= 2.0f64.ln(); // halve K
        let report = verify_certificate(&eg, &cert);
        assert!(!report.valid);
        assert!(report.stable > 0.0);
    }

    #[test]
    fn certificate_transports_to_finer_grid() {
        let coarse = scalar_grid("-2 + sin(t)", 20.0, 0.2);
        let pf = ProjectorFamily::identity(1, coarse.num_nodes());
        let cert = fit_dichotomy(&coarse, &pf, &DichotomyParams::default()).unwrap();
        let fine = scalar_grid("-2 + sin(t)", 20.0, 0.05);
        let mut fine_cert = cert.clone();
        fine_cert.projectors = ProjectorFamily::identity(1, fine.num_nodes());
        let report = verify_certificate(&fine, &fine_cert);
        // Nodes between coarse nodes can poke above the envelope only within
        // discretization slack.
        assert!(report.stable <= 2e-2, "violation {}", report.stable);
    }

    #[test]
    fn refinement_does_not_increase_alpha() {
        for a in ["-1", "-3 - t*sin(t)", "-2 + sin(t)"] {
            let coarse = scalar_grid(a, 20.0, 0.4);
            let fine = scalar_grid(a, 20.0, 0.1);
            let pfc = ProjectorFamily::identity(1, coarse.num_nodes());
            let pff = ProjectorFamily::identity(1, fine.num_nodes());
            let cc = fit_dichotomy(&coarse, &pfc, &DichotomyParams::default()).unwrap();
            let cf = fit_dichotomy(&fine, &pff, &DichotomyParams::default()).unwrap();
            assert!(
                cf.alpha <= cc.alpha + 1e-6,
                "{a}: fine alpha {} > coarse alpha {}",
                cf.alpha,
                cc.alpha
            );
        }
    }
}
