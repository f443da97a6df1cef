//! Finite affinity kernels: validation of (K1)-(K3), exact certification of
//! the quantitative transitivity (K4), and estimation of an admissible
//! modulus from the data.

mod estimate;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::profiles::TransitivityModulus;

pub use estimate::{estimate_modulus, solve_modulus_lp, ModulusEstimate};

/// Relative tolerance of the symmetry check and of the (K4) comparison.
pub const SYMMETRY_TOL_REL: f64 = 1e-12;
pub const TRANSITIVITY_TOL_REL: f64 = 1e-12;
pub const DEFAULT_SLACK: f64 = 0.05;
pub const DEFAULT_S_MIN: f64 = 0.01;

/// A positive extended real: finite value or `+inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    Infinite,
}

impl ExtReal {
    pub fn is_infinite(self) -> bool {
        matches!(self, ExtReal::Infinite)
    }

    /// `+inf` maps to `f64::INFINITY`.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::Finite(v) => v,
            ExtReal::Infinite => f64::INFINITY,
        }
    }
}

impl From<f64> for ExtReal {
    fn from(v: f64) -> Self {
        if v == f64::INFINITY {
            ExtReal::Infinite
        } else {
            ExtReal::Finite(v)
        }
    }
}

impl FromStr for ExtReal {
    type Err = Error;

    /// Accepts any float literal; `inf` in any case is `+inf`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let v: f64 = t
            .parse()
            .map_err(|_| Error::Format(format!("not a number: {t:?}")))?;
        if v.is_nan() || v == f64::NEG_INFINITY {
            return Err(Error::Format(format!(
                "not a positive extended real: {t:?}"
            )));
        }
        Ok(ExtReal::from(v))
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "axiom")]
pub enum AxiomViolation {
    /// K(i,j) != K(j,i).
    K1 { i: usize, j: usize },
    /// K(i,j) <= 0.
    K2 { i: usize, j: usize },
    /// Finite diagonal (`i == j`) or infinite off-diagonal entry.
    K3 { i: usize, j: usize },
}

impl fmt::Display for AxiomViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxiomViolation::K1 { i, j } => write!(f, "K1 (symmetry) fails at ({i}, {j})"),
            AxiomViolation::K2 { i, j } => write!(f, "K2 (positivity) fails at ({i}, {j})"),
            AxiomViolation::K3 { i, j } if i == j => {
                write!(
                    f,
                    "K3 (diagonal singularity) fails: finite self-affinity at ({i}, {j})"
                )
            }
            AxiomViolation::K3 { i, j } => {
                write!(
                    f,
                    "K3 (diagonal singularity) fails: infinite affinity at ({i}, {j})"
                )
            }
        }
    }
}

/// A validated kernel: symmetric, positive, `+inf` exactly on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    n: usize,
    // row-major, diagonal stored as f64::INFINITY
    data: Vec<f64>,
}

impl AffinityMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> ExtReal {
        ExtReal::from(self.data[i * self.n + j])
    }

    /// Off-diagonal entry as a plain float; `+inf` on the diagonal.
    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub(crate) fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Smallest and largest off-diagonal entry.
    pub fn finite_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    let v = self.value(i, j);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        (lo, hi)
    }

    /// Builds a kernel from off-diagonal values `f(i, j)` for `i < j`.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let raw: Vec<Vec<ExtReal>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| match i.cmp(&j) {
                        std::cmp::Ordering::Equal => ExtReal::Infinite,
                        std::cmp::Ordering::Less => ExtReal::from(f(i, j)),
                        std::cmp::Ordering::Greater => ExtReal::from(f(j, i)),
                    })
                    .collect()
            })
            .collect();
        validate_matrix(&raw)
    }

    /// Relabels points: entry `(i, j)` of the result is `(perm[i], perm[j])`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                data[i * n + j] = self.data[perm[i] * n + perm[j]];
            }
        }
        Self { n, data }
    }

    /// Multiplies every entry by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn to_raw(&self) -> Vec<Vec<ExtReal>> {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|&v| ExtReal::from(v)).collect())
            .collect()
    }
}

fn check_square(raw: &[Vec<ExtReal>]) -> Result<usize> {
    let n = raw.len();
    if n < 2 {
        return Err(Error::Format(format!(
            "kernel needs at least 2 points, got {n}"
        )));
    }
    if let Some((i, row)) = raw.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(Error::Format(format!(
            "matrix is not square: row {i} has {} entries, expected {n}",
            row.len()
        )));
    }
    Ok(n)
}

/// Every (K1)-(K3) violation, row-major, upper triangle for symmetric
/// conditions.
#[allow(clippy::needless_range_loop)]
pub fn axiom_violations(raw: &[Vec<ExtReal>]) -> Result<Vec<AxiomViolation>> {
    let n = check_square(raw)?;
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let v = raw[i][j];
            if i == j {
                if let ExtReal::Finite(_) = v {
                    out.push(AxiomViolation::K3 { i, j });
                }
                continue;
            }
            if let ExtReal::Finite(x) = v {
                if x <= 0.0 {
                    out.push(AxiomViolation::K2 { i, j });
                }
            }
            if j > i {
                if v.is_infinite() {
                    out.push(AxiomViolation::K3 { i, j });
                }
                let ok = match (v, raw[j][i]) {
                    (ExtReal::Finite(a), ExtReal::Finite(b)) => {
                        (a - b).abs() <= SYMMETRY_TOL_REL * a.abs().max(b.abs())
                    }
                    (ExtReal::Infinite, ExtReal::Infinite) => true,
                    _ => false,
                };
                if !ok {
                    out.push(AxiomViolation::K1 { i, j });
                }
            } else if v.is_infinite() && !raw[j][i].is_infinite() {
                out.push(AxiomViolation::K3 { i, j });
            }
        }
    }
    Ok(out)
}

/// Validates a raw square array as an [`AffinityMatrix`], or returns the
/// full list of violations.
pub fn validate_matrix(raw: &[Vec<ExtReal>]) -> Result<AffinityMatrix> {
    let violations = axiom_violations(raw)?;
    if !violations.is_empty() {
        return Err(Error::Axioms(violations));
    }
    let n = raw.len();
    let mut data = vec![f64::INFINITY; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (raw[i][j].to_f64(), raw[j][i].to_f64());
            let v = if a == b { a } else { 0.5 * (a + b) };
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    Ok(AffinityMatrix { n, data })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomCheck {
    pub pass: bool,
    pub counterexample: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitivityReport {
    pub pass: bool,
    /// Lexicographically smallest triple attaining the worst ratio.
    pub worst_triple: Option<[usize; 3]>,
    /// `min K(x,z) / nu(min(K(x,y), K(y,z)))` over distinct triples.
    pub worst_ratio: Option<f64>,
    pub triples: u64,
}

/// Results of (K1)-(K4). `k4` is absent when no modulus was supplied or
/// when (K1)-(K3) already fail.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomReport {
    pub n: usize,
    pub k1: AxiomCheck,
    pub k2: AxiomCheck,
    pub k3: AxiomCheck,
    pub k4: Option<TransitivityReport>,
    pub violations: Vec<String>,
}

impl AxiomReport {
    pub fn pass(&self) -> bool {
        self.k1.pass && self.k2.pass && self.k3.pass && self.k4.as_ref().is_some_and(|k| k.pass)
    }

    /// Certifies (K1)-(K3) on raw data and, if they hold and a modulus is
    /// given, (K4).
    pub fn evaluate(raw: &[Vec<ExtReal>], nu: Option<&TransitivityModulus>) -> Result<Self> {
        let violations = axiom_violations(raw)?;
        let first = |pick: fn(&AxiomViolation) -> Option<[usize; 2]>| {
            let ce = violations.iter().find_map(pick);
            AxiomCheck {
                pass: ce.is_none(),
                counterexample: ce,
            }
        };
        let k1 = first(|v| match v {
            AxiomViolation::K1 { i, j } => Some([*i, *j]),
            _ => None,
        });
        let k2 = first(|v| match v {
            AxiomViolation::K2 { i, j } => Some([*i, *j]),
            _ => None,
        });
        let k3 = first(|v| match v {
            AxiomViolation::K3 { i, j } => Some([*i, *j]),
            _ => None,
        });
        let k4 = match (violations.is_empty(), nu) {
            (true, Some(nu)) => Some(check_transitivity(&validate_matrix(raw)?, nu)),
            _ => None,
        };
        Ok(Self {
            n: raw.len(),
            k1,
            k2,
            k3,
            k4,
            violations: violations.iter().map(ToString::to_string).collect(),
        })
    }
}

/// For an unordered pair `x < z`, the best middleman: the largest
/// `min(K(x,y), K(y,z))` over `y` outside `{x, z}`, and the smallest `y`
/// attaining it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bottleneck {
    pub x: usize,
    pub z: usize,
    pub y: usize,
    pub level: f64,
}

/// Max-min composition over all pairs `x < z`, in row-major order. Empty
/// for `n < 3`.
pub fn bottlenecks(k: &AffinityMatrix, exec: Exec) -> Vec<Bottleneck> {
    let n = k.n;
    if n < 3 {
        return Vec::new();
    }
    let rows = exec.map(n, |x| {
        let kx = k.row(x);
        let mut out = Vec::with_capacity(n - x - 1);
        for z in (x + 1)..n {
            let kz = k.row(z);
            let mut best = f64::NEG_INFINITY;
            let mut arg = usize::MAX;
            for y in 0..n {
                if y == x || y == z {
                    continue;
                }
                let m = kx[y].min(kz[y]);
                if m > best {
                    best = m;
                    arg = y;
                }
            }
            out.push(Bottleneck {
                x,
                z,
                y: arg,
                level: best,
            });
        }
        out
    });
    rows.into_iter().flatten().collect()
}

/// Exact (K4) certification: `K(x,z) >= nu(min(K(x,y), K(y,z)))` for every
/// ordered triple of distinct indices.
pub fn check_transitivity(k: &AffinityMatrix, nu: &TransitivityModulus) -> TransitivityReport {
    check_transitivity_with(k, nu, Exec::default())
}

pub fn check_transitivity_with(
    k: &AffinityMatrix,
    nu: &TransitivityModulus,
    exec: Exec,
) -> TransitivityReport {
    let n = k.n as u64;
    let triples = n * n.saturating_sub(1) * n.saturating_sub(2);
    let mut worst: Option<(f64, [usize; 3])> = None;
    // Each unordered pair represents (x,y,z) and (z,y,x); x < z is the
    // lexicographically smaller of the two.
    for b in bottlenecks(k, exec) {
        let ratio = k.value(b.x, b.z) / nu.value(b.level);
        let triple = [b.x, b.y, b.z];
        let better = match worst {
            None => true,
            Some((r, t)) => ratio < r || (ratio == r && triple < t),
        };
        if better {
            worst = Some((ratio, triple));
        }
    }
    TransitivityReport {
        pass: worst.is_none_or(|(r, _)| r >= 1.0 - TRANSITIVITY_TOL_REL),
        worst_triple: worst.map(|(_, t)| t),
        worst_ratio: worst.map(|(r, _)| r),
        triples,
    }
}

/// Empirical transitivity constraints `(lambda, kappa)`: a modulus is
/// admissible iff `nu(lambda) <= kappa` for all of them.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitivityScatter {
    points: Vec<(f64, f64)>,
}

impl TransitivityScatter {
    /// Keeps the Pareto frontier of `points` (maximal lambda, minimal kappa).
    pub fn from_points(points: &[(f64, f64)]) -> Self {
        Self {
            points: pareto_frontier(points),
        }
    }

    /// Keeps every point, dominated or not.
    pub fn unpruned(points: Vec<(f64, f64)>) -> Self {
        Self { points }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Points not dominated by another (`lambda' >= lambda`, `kappa' <= kappa`),
/// duplicates collapsed, sorted by increasing lambda.
pub fn pareto_frontier(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)));
    let mut out = Vec::new();
    let mut min_kappa = f64::INFINITY;
    for (lambda, kappa) in sorted {
        if kappa < min_kappa {
            out.push((lambda, kappa));
            min_kappa = kappa;
        }
    }
    out.reverse();
    out
}

/// Pareto frontier of `(min(K(x,y), K(y,z)), K(x,z))` over distinct triples.
///
/// Only the best middleman of each pair can be on the frontier, so this
/// runs on the max-min composition rather than on all triples.
pub fn collect_scatter(k: &AffinityMatrix) -> TransitivityScatter {
    if k.n < 3 {
        log::warn!("kernel has {} points: no triples, empty scatter", k.n);
        return TransitivityScatter { points: Vec::new() };
    }
    let candidates: Vec<(f64, f64)> = bottlenecks(k, Exec::default())
        .into_iter()
        .map(|b| (b.level, k.value(b.x, b.z)))
        .collect();
    TransitivityScatter::from_points(&candidates)
}

/// Every ordered distinct triple as a constraint, unpruned.
pub fn collect_scatter_raw(k: &AffinityMatrix) -> TransitivityScatter {
    let n = k.n;
    let mut points = Vec::with_capacity(n * n.saturating_sub(1) * n.saturating_sub(2));
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                if x != y && y != z && x != z {
                    points.push((k.value(x, y).min(k.value(y, z)), k.value(x, z)));
                }
            }
        }
    }
    TransitivityScatter::unpruned(points)
}
