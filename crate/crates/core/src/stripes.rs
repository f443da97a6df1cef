//! Stripe families around the diagonal and their induced quasi-metric.
//!
//! A family `V(r)` is kept intensional: a membership predicate plus its
//! parameters. Boolean pair sets are only materialised per grid point while
//! checking the composition axiom (S6).

use serde::Serialize;

use crate::error::{domain, invariant, Error, Result};
use crate::exec::Exec;
use crate::kernel::AffinityMatrix;
use crate::profiles::{Direction, MonotonePl};

/// Symmetric, nonnegative, zero exactly on the diagonal, with a certified
/// triangle constant.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiMetricMatrix {
    n: usize,
    data: Vec<f64>,
    tau: f64,
}

impl QuasiMetricMatrix {
    /// Validates row-major `data` and certifies its triangle constant.
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        Self::new_with(n, data, Exec::default())
    }

    pub fn new_with(n: usize, data: Vec<f64>, exec: Exec) -> Result<Self> {
        validate_dissimilarity(n, &data)?;
        let tau = certify_tau_with(n, &data, exec)?;
        Ok(Self { n, data, tau })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Format("dissimilarity matrix is not square".into()));
        }
        Self::new(n, rows.concat())
    }

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

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(<[f64]>::to_vec).collect()
    }
}

fn validate_dissimilarity(n: usize, data: &[f64]) -> Result<()> {
    if data.len() != n * n {
        return Err(Error::Format(format!(
            "expected {} entries for n = {n}, got {}",
            n * n,
            data.len()
        )));
    }
    for i in 0..n {
        if data[i * n + i] != 0.0 {
            return Err(invariant(format!("nonzero diagonal at ({i}, {i})")));
        }
        for j in (i + 1)..n {
            let (a, b) = (data[i * n + j], data[j * n + i]);
            if a != b {
                return Err(invariant(format!("asymmetric at ({i}, {j}): {a} vs {b}")));
            }
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::Degenerate(format!(
                    "off-diagonal entry ({i}, {j}) = {a} must be positive and finite"
                )));
            }
        }
    }
    Ok(())
}

/// `max delta(x,z) / (delta(x,y) + delta(y,z))` over distinct triples,
/// clamped below at 1.
pub fn certify_tau(n: usize, data: &[f64]) -> Result<f64> {
    certify_tau_with(n, data, Exec::default())
}

pub fn certify_tau_with(n: usize, data: &[f64], exec: Exec) -> Result<f64> {
    for i in 0..n {
        for j in 0..n {
            if i != j && !(data[i * n + j] > 0.0) {
                return Err(Error::Degenerate(format!(
                    "zero dissimilarity between distinct points ({i}, {j})"
                )));
            }
        }
    }
    let rows = exec.map(n, |x| {
        let dx = &data[x * n..(x + 1) * n];
        let mut worst = 1.0_f64;
        for z in (x + 1)..n {
            let dz = &data[z * n..(z + 1) * n];
            let mut shortest = f64::INFINITY;
            for y in 0..n {
                if y != x && y != z {
                    shortest = shortest.min(dx[y] + dz[y]);
                }
            }
            if shortest.is_finite() {
                worst = worst.max(dx[z] / shortest);
            }
        }
        worst
    });
    Ok(rows.into_iter().fold(1.0, f64::max))
}

const MAX_ULP_NUDGES: usize = 64;

/// A one-parameter family `V(r)` of subsets of `X x X`.
#[derive(Debug, Clone, Copy)]
pub enum StripeFamily<'a> {
    /// `(x, y) in V(r)` iff `K(x, y) > eta(r)`.
    KernelThreshold {
        kernel: &'a AffinityMatrix,
        eta: &'a MonotonePl,
    },
    /// `(x, y) in V(r)` iff `delta(x, y) < r`.
    QuasiMetricBalls { delta: &'a QuasiMetricMatrix },
}

impl StripeFamily<'_> {
    pub fn n(&self) -> usize {
        match self {
            StripeFamily::KernelThreshold { kernel, .. } => kernel.n(),
            StripeFamily::QuasiMetricBalls { delta } => delta.n(),
        }
    }

    pub fn contains(&self, r: f64, x: usize, y: usize) -> bool {
        self.member(&self.level(r), x, y)
    }

    fn level(&self, r: f64) -> f64 {
        match self {
            StripeFamily::KernelThreshold { eta, .. } => eta.at(r),
            StripeFamily::QuasiMetricBalls { .. } => r,
        }
    }

    #[inline]
    fn member(&self, level: &f64, x: usize, y: usize) -> bool {
        match self {
            StripeFamily::KernelThreshold { kernel, .. } => x == y || kernel.value(x, y) > *level,
            StripeFamily::QuasiMetricBalls { delta } => delta.get(x, y) < *level,
        }
    }

    /// The radii at which membership of some pair changes, sorted, distinct.
    pub fn thresholds(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                out.push(match self {
                    StripeFamily::KernelThreshold { kernel, eta } => {
                        eta.solve(kernel.value(i, j)).unwrap_or(f64::NAN)
                    }
                    StripeFamily::QuasiMetricBalls { delta } => delta.get(i, j),
                });
            }
        }
        out.retain(|v| v.is_finite());
        sorted_distinct(out)
    }

    fn bitset(&self, r: f64) -> BitMatrix {
        let n = self.n();
        let level = self.level(r);
        let mut m = BitMatrix::new(n);
        for x in 0..n {
            for y in 0..n {
                if self.member(&level, x, y) {
                    m.set(x, y);
                }
            }
        }
        m
    }
}

fn sorted_distinct(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Thresholds plus midpoints, with a 10% margin below the first and above
/// the last.
pub fn default_r_grid(thresholds: &[f64]) -> Vec<f64> {
    let t = sorted_distinct(thresholds.to_vec());
    if t.is_empty() {
        return Vec::new();
    }
    let mut grid = Vec::with_capacity(2 * t.len() + 1);
    grid.push(0.9 * t[0]);
    for (i, &v) in t.iter().enumerate() {
        if i > 0 {
            grid.push(0.5 * (t[i - 1] + v));
        }
        grid.push(v);
    }
    grid.push(1.1 * t[t.len() - 1]);
    grid
}

/// `delta(x, y) = inf { r : (x, y) in V(r) }`.
///
/// For kernel thresholds the infimum is `psi(K(x, y))` with `psi = eta^-1`,
/// nudged up by at most a few ulps so that every float `r > delta` has the
/// pair inside `V(r)`.
pub fn induce_quasimetric(family: &StripeFamily<'_>) -> Result<QuasiMetricMatrix> {
    match family {
        StripeFamily::QuasiMetricBalls { delta } => Ok((*delta).clone()),
        StripeFamily::KernelThreshold { kernel, eta } => {
            if eta.direction() != Direction::Decreasing {
                return Err(invariant("kernel thresholds need a decreasing eta"));
            }
            let psi = eta.inverse();
            let n = kernel.n();
            let mut data = vec![0.0; n * n];
            for i in 0..n {
                for j in (i + 1)..n {
                    let k = kernel.value(i, j);
                    let mut d = psi.eval(k)?;
                    for _ in 0..MAX_ULP_NUDGES {
                        if eta.at(d.next_up()) < k {
                            break;
                        }
                        d = d.next_up();
                    }
                    data[i * n + j] = d;
                    data[j * n + i] = d;
                }
            }
            QuasiMetricMatrix::new(n, data)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StripeCheck {
    pub pass: bool,
    /// The grid could not decide the axiom (range not covered).
    pub inconclusive: bool,
    pub at_r: Option<f64>,
    pub pair: Option<[usize; 2]>,
}

impl StripeCheck {
    fn ok() -> Self {
        Self {
            pass: true,
            inconclusive: false,
            at_r: None,
            pair: None,
        }
    }

    fn fail(r: f64, x: usize, y: usize) -> Self {
        Self {
            pass: false,
            inconclusive: false,
            at_r: Some(r),
            pair: Some([x, y]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StripeAxiomReport {
    pub t: f64,
    pub grid_points: usize,
    pub s1: StripeCheck,
    pub s2: StripeCheck,
    pub s3: StripeCheck,
    pub s4: StripeCheck,
    pub s5: StripeCheck,
    pub s6: StripeCheck,
}

impl StripeAxiomReport {
    pub fn pass(&self) -> bool {
        [&self.s1, &self.s2, &self.s3, &self.s4, &self.s5, &self.s6]
            .iter()
            .all(|c| c.pass)
    }

    pub fn inconclusive(&self) -> bool {
        self.s4.inconclusive || self.s5.inconclusive
    }
}

struct BitMatrix {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl BitMatrix {
    fn new(n: usize) -> Self {
        let words = n.div_ceil(64).max(1);
        Self {
            n,
            words,
            bits: vec![0; n * words],
        }
    }

    fn set(&mut self, x: usize, y: usize) {
        self.bits[x * self.words + y / 64] |= 1 << (y % 64);
    }

    fn get(&self, x: usize, y: usize) -> bool {
        (self.bits[x * self.words + y / 64] >> (y % 64)) & 1 == 1
    }

    fn row(&self, x: usize) -> &[u64] {
        &self.bits[x * self.words..(x + 1) * self.words]
    }

    fn transpose(&self) -> Self {
        let mut t = BitMatrix::new(self.n);
        for x in 0..self.n {
            for y in 0..self.n {
                if self.get(x, y) {
                    t.set(y, x);
                }
            }
        }
        t
    }
}

/// Checks (S1)-(S6) on the grid. (S4) and (S5) are flagged inconclusive
/// when the grid does not reach far enough.
pub fn check_stripe_axioms(
    family: &StripeFamily<'_>,
    r_grid: &[f64],
    t: f64,
) -> Result<StripeAxiomReport> {
    check_stripe_axioms_with(family, r_grid, t, Exec::default())
}

pub fn check_stripe_axioms_with(
    family: &StripeFamily<'_>,
    r_grid: &[f64],
    t: f64,
    exec: Exec,
) -> Result<StripeAxiomReport> {
    if r_grid.is_empty() {
        return Err(domain("stripe grid is empty"));
    }
    if r_grid.windows(2).any(|w| !(w[1] > w[0])) || !(r_grid[0] > 0.0) {
        return Err(domain(
            "stripe grid must be positive and strictly increasing",
        ));
    }
    if !(t >= 1.0) {
        return Err(domain(format!(
            "composition constant T must be >= 1, got {t}"
        )));
    }
    let n = family.n();
    let mut s1 = StripeCheck::ok();
    let mut s2 = StripeCheck::ok();
    let mut s3 = StripeCheck::ok();
    let mut s6 = StripeCheck::ok();
    let sets: Vec<BitMatrix> = r_grid.iter().map(|&r| family.bitset(r)).collect();
    for (gi, (&r, v)) in r_grid.iter().zip(&sets).enumerate() {
        'outer: for x in 0..n {
            if s2.pass && !v.get(x, x) {
                s2 = StripeCheck::fail(r, x, x);
            }
            for y in (x + 1)..n {
                if s1.pass && v.get(x, y) != v.get(y, x) {
                    s1 = StripeCheck::fail(r, x, y);
                    break 'outer;
                }
            }
        }
        if s3.pass {
            if let Some(next) = sets.get(gi + 1) {
                if let Some((x, y)) = first_not_subset(v, next) {
                    s3 = StripeCheck::fail(r, x, y);
                }
            }
        }
        if s6.pass {
            let wider = family.bitset(t * r);
            let cols = v.transpose();
            let found = exec.map(n, |x| {
                (0..n).find(|&z| {
                    !wider.get(x, z) && v.row(x).iter().zip(cols.row(z)).any(|(a, b)| a & b != 0)
                })
            });
            if let Some((x, Some(z))) = found.into_iter().enumerate().find(|(_, z)| z.is_some()) {
                s6 = StripeCheck::fail(r, x, z);
            }
        }
    }
    let top = sets.last().unwrap();
    let s4 = match (0..n)
        .flat_map(|x| (0..n).map(move |y| (x, y)))
        .find(|&(x, y)| !top.get(x, y))
    {
        None => StripeCheck::ok(),
        Some((x, y)) => StripeCheck {
            inconclusive: true,
            ..StripeCheck::fail(*r_grid.last().unwrap(), x, y)
        },
    };
    let bottom = &sets[0];
    let s5 = match (0..n)
        .flat_map(|x| (0..n).map(move |y| (x, y)))
        .find(|&(x, y)| x != y && bottom.get(x, y))
    {
        None => StripeCheck::ok(),
        Some((x, y)) => StripeCheck {
            inconclusive: true,
            ..StripeCheck::fail(r_grid[0], x, y)
        },
    };
    Ok(StripeAxiomReport {
        t,
        grid_points: r_grid.len(),
        s1,
        s2,
        s3,
        s4,
        s5,
        s6,
    })
}

fn first_not_subset(a: &BitMatrix, b: &BitMatrix) -> Option<(usize, usize)> {
    (0..a.n)
        .flat_map(|x| (0..a.n).map(move |y| (x, y)))
        .find(|&(x, y)| a.get(x, y) && !b.get(x, y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Inclusion {
    /// `V_delta(r) subset V(r)`.
    Inner,
    /// `V(r) subset V_delta((1 + gamma) r)`.
    Outer,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichViolation {
    pub r: f64,
    pub pair: [usize; 2],
    pub inclusion: Inclusion,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    pub pass: bool,
    pub gamma: f64,
    pub counterexample: Option<SandwichViolation>,
}

/// `V_delta(r) subset V(r) subset V_delta((1 + gamma) r)` at every grid `r`.
pub fn check_sandwich(
    family: &StripeFamily<'_>,
    delta: &QuasiMetricMatrix,
    gamma: f64,
    r_grid: &[f64],
) -> Result<SandwichReport> {
    if !(gamma > 0.0) {
        return Err(domain(format!("gamma must be positive, got {gamma}")));
    }
    if delta.n() != family.n() {
        return Err(invariant("family and quasi-metric differ in size"));
    }
    let n = delta.n();
    for &r in r_grid {
        let level = family.level(r);
        for x in 0..n {
            for y in 0..n {
                let d = delta.get(x, y);
                let inside = family.member(&level, x, y);
                let violation = if d < r && !inside {
                    Some(Inclusion::Inner)
                } else if inside && !(d < (1.0 + gamma) * r) {
                    Some(Inclusion::Outer)
                } else {
                    None
                };
                if let Some(inclusion) = violation {
                    return Ok(SandwichReport {
                        pass: false,
                        gamma,
                        counterexample: Some(SandwichViolation {
                            r,
                            pair: [x, y],
                            inclusion,
                        }),
                    });
                }
            }
        }
    }
    Ok(SandwichReport {
        pass: true,
        gamma,
        counterexample: None,
    })
}

/// Lossless grid for [`check_sandwich`]: thresholds of both the family and
/// `delta`.
pub fn sandwich_grid(family: &StripeFamily<'_>, delta: &QuasiMetricMatrix) -> Vec<f64> {
    let mut t = family.thresholds();
    t.extend(StripeFamily::QuasiMetricBalls { delta }.thresholds());
    default_r_grid(&t)
}
