//! Metrization of a quasi-metric by chains.
//!
//! With `(3 T^2)^alpha = 2`, the metric is the chain infimum
//! `rho(x, y) = min over chains x = x_1, ..., x_m = y of sum delta(x_i, x_{i+1})^alpha`,
//! which on a finite set is an all-pairs shortest-path problem on the
//! complete graph with weights `delta^alpha`.

use serde::Serialize;

use crate::error::{domain, invariant, Error, Result};
use crate::exec::Exec;
use crate::stripes::QuasiMetricMatrix;

/// Relative slack for the two-sided equivalence bounds.
pub const EQUIVALENCE_TOL_REL: f64 = 1e-9;
/// Slack for the construction-level bound `rho^beta <= delta`.
pub const CONSTRUCTION_TOL_REL: f64 = 1e-12;
/// Safety cap on relaxation passes; a handful suffice in practice.
const MAX_PASSES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetrizationParams {
    pub t: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// `alpha = ln 2 / ln(3 T^2)`, `beta = 1 / alpha`.
pub fn compute_exponent(t: f64) -> Result<MetrizationParams> {
    if !(t >= 1.0 && t.is_finite()) {
        return Err(domain(format!("T must be >= 1, got {t}")));
    }
    let alpha = std::f64::consts::LN_2 / (3.0 * t * t).ln();
    Ok(MetrizationParams {
        t,
        alpha,
        beta: 1.0 / alpha,
    })
}

/// A true metric: symmetric, zero exactly on the diagonal, and the
/// triangle inequality holds on the stored floats.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainMetricMatrix {
    n: usize,
    data: Vec<f64>,
}

impl ChainMetricMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    /// Wraps a matrix loaded from elsewhere after checking it is a metric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Format("metric matrix is not square".into()));
        }
        let data = rows.concat();
        let check = certify_metric(n, &data);
        if !check.pass {
            return Err(invariant(format!("not a metric: {}", check.reason)));
        }
        Ok(Self { n, data })
    }
}

pub fn chain_metric(delta: &QuasiMetricMatrix, alpha: f64) -> Result<ChainMetricMatrix> {
    chain_metric_with(delta, alpha, Exec::default())
}

/// Chain metric of `delta^alpha`. `alpha = 1` is allowed, which makes the
/// construction idempotent on metrics.
pub fn chain_metric_with(
    delta: &QuasiMetricMatrix,
    alpha: f64,
    exec: Exec,
) -> Result<ChainMetricMatrix> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(domain(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let n = delta.n();
    let mut data: Vec<f64> = if alpha == 1.0 {
        delta.entries().to_vec()
    } else {
        delta.entries().iter().map(|d| d.powf(alpha)).collect()
    };
    relax_to_fixed_point(n, &mut data, exec)?;
    Ok(ChainMetricMatrix { n, data })
}

/// One Floyd-Warshall pass: every pivot `k`, rows updated independently.
/// Returns whether any entry decreased.
pub fn relax_pass(n: usize, data: &mut [f64], exec: Exec) -> bool {
    let mut changed = false;
    let mut pivot = vec![0.0; n];
    for k in 0..n {
        pivot.copy_from_slice(&data[k * n..(k + 1) * n]);
        let flags = std::sync::atomic::AtomicBool::new(false);
        exec.for_each_row(data, n, |_, row| {
            let dik = row[k];
            let mut hit = false;
            for (cell, &dkj) in row.iter_mut().zip(&pivot) {
                let via = dik + dkj;
                if via < *cell {
                    *cell = via;
                    hit = true;
                }
            }
            if hit {
                flags.store(true, std::sync::atomic::Ordering::Relaxed);
            }
        });
        changed |= flags.into_inner();
    }
    changed
}

// Path sums taken in opposite directions can differ in the last bit, so
// symmetrise with the smaller (still attainable) value and repeat until the
// stored floats are a fixed point.
fn relax_to_fixed_point(n: usize, data: &mut [f64], exec: Exec) -> Result<usize> {
    for pass in 1..=MAX_PASSES {
        let mut changed = relax_pass(n, data, exec);
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (data[i * n + j], data[j * n + i]);
                if a != b {
                    let m = a.min(b);
                    data[i * n + j] = m;
                    data[j * n + i] = m;
                    changed = true;
                }
            }
        }
        if !changed {
            return Ok(pass);
        }
    }
    Err(Error::Numeric(format!(
        "all-pairs relaxation did not settle after {MAX_PASSES} passes"
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    /// Smallest `rho^beta / delta` over distinct pairs.
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    /// Both ratios within `[4^-beta, 2^beta]`.
    pub pass: bool,
    /// `rho^beta <= delta`, the bound the single-edge chain gives.
    pub tight_upper_pass: bool,
}

pub fn certify_equivalence(
    delta: &QuasiMetricMatrix,
    rho: &ChainMetricMatrix,
    beta: f64,
) -> Result<EquivalenceReport> {
    if delta.n() != rho.n() {
        return Err(invariant("delta and rho differ in size"));
    }
    let n = delta.n();
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = f64::NEG_INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = delta.get(i, j);
            let r = rho.get(i, j);
            if !(d > 0.0) || !(r > 0.0) {
                return Err(Error::Degenerate(format!("zero distance at ({i}, {j})")));
            }
            let ratio = r.powf(beta) / d;
            min_ratio = min_ratio.min(ratio);
            max_ratio = max_ratio.max(ratio);
        }
    }
    if n < 2 {
        min_ratio = 1.0;
        max_ratio = 1.0;
    }
    let lower_bound = 4f64.powf(-beta);
    let upper_bound = 2f64.powf(beta);
    Ok(EquivalenceReport {
        min_ratio,
        max_ratio,
        lower_bound,
        upper_bound,
        pass: min_ratio >= lower_bound * (1.0 - EQUIVALENCE_TOL_REL)
            && max_ratio <= upper_bound * (1.0 + EQUIVALENCE_TOL_REL),
        tight_upper_pass: max_ratio <= 1.0 + CONSTRUCTION_TOL_REL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricCheck {
    pub pass: bool,
    pub counterexample: Option<[usize; 3]>,
    pub reason: String,
}

/// Exact check of the metric axioms on a row-major `n x n` matrix; the
/// triangle inequality is compared on the stored floats without slack.
pub fn certify_metric(n: usize, data: &[f64]) -> MetricCheck {
    let fail = |ce: [usize; 3], reason: String| MetricCheck {
        pass: false,
        counterexample: Some(ce),
        reason,
    };
    if data.len() != n * n {
        return fail([0, 0, 0], format!("expected {} entries", n * n));
    }
    let at = |i: usize, j: usize| data[i * n + j];
    for i in 0..n {
        if at(i, i) != 0.0 {
            return fail([i, i, i], format!("nonzero diagonal at {i}"));
        }
        for j in (i + 1)..n {
            if at(i, j) != at(j, i) {
                return fail([i, j, i], format!("asymmetric at ({i}, {j})"));
            }
            if !(at(i, j) > 0.0 && at(i, j).is_finite()) {
                return fail([i, j, j], format!("non-positive distance at ({i}, {j})"));
            }
        }
    }
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                if at(x, z) > at(x, y) + at(y, z) {
                    return fail(
                        [x, y, z],
                        format!(
                            "triangle fails: d({x},{z}) = {} > {} + {}",
                            at(x, z),
                            at(x, y),
                            at(y, z)
                        ),
                    );
                }
            }
        }
    }
    MetricCheck {
        pass: true,
        counterexample: None,
        reason: String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qm(rows: &[[f64; 3]]) -> QuasiMetricMatrix {
        QuasiMetricMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn exponent_examples() {
        let p = compute_exponent(2.0).unwrap();
        assert!((p.beta - 3.584_962_500_721_156).abs() < 1e-12);
        assert!((p.beta - 12f64.log2()).abs() < 1e-12);
        let p1 = compute_exponent(1.0).unwrap();
        assert!((p1.alpha - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert!((p1.alpha - 0.6309).abs() < 1e-4);
        assert!(compute_exponent(3.0).unwrap().alpha < p.alpha);
        assert!(compute_exponent(0.5).is_err());
    }

    #[test]
    fn chain_metric_keeps_direct_edges() {
        let alpha = 1.0 / 12f64.log2();
        let d = qm(&[[0.0, 1.0, 4.0], [1.0, 0.0, 1.0], [4.0, 1.0, 0.0]]);
        let rho = chain_metric(&d, alpha).unwrap();
        assert_eq!(rho.get(0, 2), 4f64.powf(alpha));
        assert!((rho.get(0, 2) - 1.472_110_422_281_875_5).abs() < 1e-12);
        assert_eq!(rho.get(0, 1), 1.0);
        let d = qm(&[[0.0, 1.0, 0.1], [1.0, 0.0, 1.0], [0.1, 1.0, 0.0]]);
        let rho = chain_metric(&d, alpha).unwrap();
        assert!((rho.get(0, 2) - 0.526_086_375_129_851_9).abs() < 1e-12);
    }

    #[test]
    fn chain_metric_shortcuts_long_edges() {
        // 0.5 + 0.5 < 100^0.5 = 10
        let d = qm(&[[0.0, 0.25, 100.0], [0.25, 0.0, 0.25], [100.0, 0.25, 0.0]]);
        let rho = chain_metric(&d, 0.5).unwrap();
        assert_eq!(rho.get(0, 2), 1.0);
        assert!(certify_metric(3, rho.entries()).pass);
    }

    #[test]
    fn metric_check_examples() {
        let raw: Vec<f64> = [0.0, 1.0, 4.0, 1.0, 0.0, 1.0, 4.0, 1.0, 0.0]
            .iter()
            .map(|d: &f64| d.powf(0.9))
            .collect();
        let c = certify_metric(3, &raw);
        assert!(!c.pass);
        assert_eq!(c.counterexample, Some([0, 1, 2]));
        assert!(certify_metric(2, &[0.0, 1.0, 1.0, 0.0]).pass);
    }

    #[test]
    fn equivalence_on_three_point_pipeline_delta() {
        let beta = 12f64.log2();
        let d = qm(&[[0.0, 0.25, 0.5], [0.25, 0.0, 0.25], [0.5, 0.25, 0.0]]);
        let rho = chain_metric(&d, 1.0 / beta).unwrap();
        let rep = certify_equivalence(&d, &rho, beta).unwrap();
        assert!(rep.pass && rep.tight_upper_pass);
        assert!((rep.min_ratio - 1.0).abs() < 1e-12);
        assert!((rep.max_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_outside_range_is_rejected() {
        let d = qm(&[[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]]);
        assert!(chain_metric(&d, 0.0).is_err());
        assert!(chain_metric(&d, 1.5).is_err());
    }
}
