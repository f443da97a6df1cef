//! Monotone piecewise-linear profiles.
//!
//! The transitivity modulus `nu`, the ladder `lambda_k` (the orbit of 1
//! under `nu` and its inverse), the profile `psi` with `psi(lambda_k) = M^k`,
//! its inverse `eta`, and the final profile `phi(r) = eta(r^beta)`.

use serde::Serialize;

use crate::error::{domain, invariant, Error, Result};

/// Hard cap on ladder rungs in either direction.
pub const LADDER_MAX_RUNGS: usize = 1_000_000;
/// Relative width at which modulus bisection stops (absolute near 1).
pub const BISECTION_TOL: f64 = 1e-13;
pub const BISECTION_MAX_ITER: usize = 200;
/// Consecutive abscissae closer than this (relative) are merged.
pub const KNOT_MERGE_REL: f64 = 1e-15;
/// Relative slack of the functional inequality `psi(nu(l)) <= M psi(l)`.
pub const FUNCTIONAL_TOL_REL: f64 = 1e-9;

/// A concave, increasing surjection of `(0, inf)` onto itself with
/// `nu(l) < l`.
#[derive(Debug, Clone, PartialEq)]
pub enum TransitivityModulus {
    /// `nu(l) = a * l`, `0 < a < 1`.
    Linear {
        a: f64,
    },
    /// `nu(l) = c * ln(1 + l)`, `0 < c <= 1`.
    Log1p {
        c: f64,
    },
    PiecewiseLinear(PiecewiseModulus),
}

/// Piecewise-linear modulus through the origin with a linear tail.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseModulus {
    knots: Vec<f64>,
    values: Vec<f64>,
    tail_slope: f64,
}

impl PiecewiseModulus {
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tail_slope(&self) -> f64 {
        self.tail_slope
    }

    /// Segment slopes, the first from the origin, the tail last.
    pub fn slopes(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .knots
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(g, v)| (v[1] - v[0]) / (g[1] - g[0]))
            .collect();
        out.push(self.tail_slope);
        out
    }

    fn value(&self, lambda: f64) -> f64 {
        let n = self.knots.len();
        let i = self.knots.partition_point(|&g| g <= lambda);
        if i == n {
            return self.values[n - 1] + self.tail_slope * (lambda - self.knots[n - 1]);
        }
        // knots[0] = 0 < lambda, so i >= 1
        let (g0, g1) = (self.knots[i - 1], self.knots[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        if g0 == lambda {
            return v0;
        }
        v0 + (v1 - v0) * ((lambda - g0) / (g1 - g0))
    }

    fn inverse_value(&self, mu: f64) -> f64 {
        let n = self.values.len();
        let i = self.values.partition_point(|&v| v <= mu);
        if i == n {
            return self.knots[n - 1] + (mu - self.values[n - 1]) / self.tail_slope;
        }
        let (g0, g1) = (self.knots[i - 1], self.knots[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        if v0 == mu {
            return g0;
        }
        g0 + (g1 - g0) * ((mu - v0) / (v1 - v0))
    }
}

impl TransitivityModulus {
    pub fn linear(a: f64) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(domain(format!("linear modulus needs 0 < a < 1, got {a}")));
        }
        Ok(Self::Linear { a })
    }

    pub fn log1p(c: f64) -> Result<Self> {
        if !(c > 0.0 && c <= 1.0) {
            return Err(domain(format!("log1p modulus needs 0 < c <= 1, got {c}")));
        }
        Ok(Self::Log1p { c })
    }

    /// Builds a piecewise-linear modulus from knots `(knots[i], values[i])`
    /// starting at `(0, 0)` and a tail slope beyond the last knot.
    ///
    /// Concavity is checked on segment slopes up to the rounding of the
    /// stored ordinates; every other invariant is checked exactly.
    pub fn piecewise_linear(knots: Vec<f64>, values: Vec<f64>, tail_slope: f64) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(invariant(
                "piecewise modulus needs matching, nonempty knot and value lists",
            ));
        }
        if knots[0] != 0.0 || values[0] != 0.0 {
            return Err(invariant("piecewise modulus must start at (0, 0)"));
        }
        if knots.iter().chain(&values).any(|v| !v.is_finite()) || !tail_slope.is_finite() {
            return Err(invariant("piecewise modulus has non-finite entries"));
        }
        for i in 1..knots.len() {
            if knots[i] <= knots[i - 1] {
                return Err(invariant(format!(
                    "knots not strictly increasing at row {i}"
                )));
            }
            if values[i] <= values[i - 1] {
                return Err(invariant(format!(
                    "values not strictly increasing at row {i}"
                )));
            }
            if values[i] >= knots[i] {
                return Err(invariant(format!(
                    "nu({}) = {} is not below the identity",
                    knots[i], values[i]
                )));
            }
        }
        if !(tail_slope > 0.0 && tail_slope < 1.0) {
            return Err(invariant(format!(
                "tail slope must lie in (0, 1), got {tail_slope}"
            )));
        }
        let pwl = PiecewiseModulus {
            knots,
            values,
            tail_slope,
        };
        let slopes = pwl.slopes();
        if slopes[0] >= 1.0 {
            return Err(invariant(format!(
                "first segment slope {} must be below 1",
                slopes[0]
            )));
        }
        for i in 1..slopes.len() {
            if slopes[i] > slopes[i - 1] + pwl.slope_slack(i) {
                return Err(invariant(format!(
                    "modulus not concave: slope {} follows {} at segment {i}",
                    slopes[i],
                    slopes[i - 1]
                )));
            }
        }
        Ok(Self::PiecewiseLinear(pwl))
    }

    /// `nu(lambda)` for `lambda > 0`.
    pub fn eval(&self, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0) {
            return Err(domain(format!(
                "modulus argument must be positive, got {lambda}"
            )));
        }
        Ok(self.value(lambda))
    }

    pub(crate) fn value(&self, lambda: f64) -> f64 {
        match self {
            Self::Linear { a } => a * lambda,
            Self::Log1p { c } => c * lambda.ln_1p(),
            Self::PiecewiseLinear(p) => p.value(lambda),
        }
    }

    /// The unique `lambda` with `nu(lambda) = mu`.
    pub fn invert(&self, mu: f64) -> Result<f64> {
        if !(mu > 0.0) {
            return Err(domain(format!("modulus inverse needs mu > 0, got {mu}")));
        }
        match self {
            Self::Linear { a } => Ok(mu / a),
            Self::PiecewiseLinear(p) => Ok(p.inverse_value(mu)),
            Self::Log1p { .. } => bisect_inverse(|l| self.value(l), mu),
        }
    }

    /// Spec string understood by [`crate::io::parse_modulus_spec`], when
    /// the modulus has a closed form.
    pub fn spec_string(&self) -> Option<String> {
        match self {
            Self::Linear { a } => Some(format!("linear:{a}")),
            Self::Log1p { c } => Some(format!("log1p:{c}")),
            Self::PiecewiseLinear(_) => None,
        }
    }
}

impl PiecewiseModulus {
    // Rounding budget of two adjacent slopes computed from stored ordinates.
    fn slope_slack(&self, i: usize) -> f64 {
        let eps = 4.0 * f64::EPSILON;
        let seg = |j: usize| -> f64 {
            if j >= self.knots.len() {
                return 0.0;
            }
            (self.values[j].abs() + self.values[j - 1].abs()) / (self.knots[j] - self.knots[j - 1])
        };
        eps * (seg(i) + seg(i + 1))
    }
}

fn bisect_inverse(f: impl Fn(f64) -> f64, mu: f64) -> Result<f64> {
    let mut lo = 0.0_f64;
    let mut hi = mu.max(1.0);
    while f(hi) < mu {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Numeric(format!(
                "cannot bracket the inverse at {mu}"
            )));
        }
    }
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= BISECTION_TOL * hi || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if f(mid) < mu {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Numeric(format!(
        "bisection did not converge after {BISECTION_MAX_ITER} iterations at {mu}"
    )))
}

/// The two-sided orbit `lambda_0 = 1`, `lambda_{k+1} = nu(lambda_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileLadder {
    k_min: i64,
    // lambdas[i] = lambda_{k_min + i}, strictly decreasing
    lambdas: Vec<f64>,
}

impl ProfileLadder {
    pub fn k_min(&self) -> i64 {
        self.k_min
    }

    pub fn k_max(&self) -> i64 {
        self.k_min + self.lambdas.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambda(&self, k: i64) -> Option<f64> {
        let i = k.checked_sub(self.k_min)?;
        usize::try_from(i)
            .ok()
            .and_then(|i| self.lambdas.get(i).copied())
    }

    /// `(k, lambda_k)` in increasing `k`, i.e. decreasing `lambda`.
    pub fn rungs(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.lambdas
            .iter()
            .enumerate()
            .map(move |(i, &l)| (self.k_min + i as i64, l))
    }

    /// Builds a ladder from raw rungs, checking strict decrease. Used to
    /// feed hand-built or perturbed ladders to [`build_psi`].
    pub fn from_rungs(k_min: i64, lambdas: Vec<f64>) -> Self {
        Self { k_min, lambdas }
    }
}

/// Iterates `nu` forward until a rung is `<= lo` and `nu^{-1}` backward
/// until a rung is `>= hi`.
pub fn build_ladder(nu: &TransitivityModulus, lo: f64, hi: f64) -> Result<ProfileLadder> {
    build_ladder_capped(nu, lo, hi, LADDER_MAX_RUNGS)
}

pub fn build_ladder_capped(
    nu: &TransitivityModulus,
    lo: f64,
    hi: f64,
    max_rungs: usize,
) -> Result<ProfileLadder> {
    if !(lo > 0.0 && lo < 1.0 && hi > 1.0 && hi.is_finite()) {
        return Err(domain(format!(
            "ladder range must satisfy 0 < lo < 1 < hi, got lo={lo}, hi={hi}"
        )));
    }
    let mut forward = vec![1.0_f64];
    while *forward.last().unwrap() > lo {
        let prev = *forward.last().unwrap();
        let next = nu.value(prev);
        if !(next < prev && next > 0.0) {
            return Err(invariant(format!(
                "ladder stalled going down: nu({prev}) = {next}"
            )));
        }
        forward.push(next);
        if forward.len() > max_rungs {
            return Err(Error::Resource(format!(
                "ladder toward lo={lo} exceeds {max_rungs} rungs (reached {next}); \
                 nu decays too slowly"
            )));
        }
    }
    let mut backward: Vec<f64> = Vec::new();
    let mut prev = 1.0_f64;
    while prev < hi {
        let next = nu.invert(prev)?;
        if !next.is_finite() {
            return Err(Error::Numeric(format!("nu^-1({prev}) overflowed")));
        }
        if next <= prev {
            return Err(invariant(format!(
                "ladder stalled going up: nu^-1({prev}) = {next}"
            )));
        }
        backward.push(next);
        prev = next;
        if backward.len() > max_rungs {
            return Err(Error::Resource(format!(
                "ladder toward hi={hi} exceeds {max_rungs} rungs (reached {next}); \
                 nu^-1 grows too slowly"
            )));
        }
    }
    let k_min = -(backward.len() as i64);
    let mut lambdas: Vec<f64> = backward.into_iter().rev().collect();
    lambdas.extend(forward);
    Ok(ProfileLadder { k_min, lambdas })
}

/// The ladder profile: `psi(lambda_k) = M^k`, linear in between, with
/// power tails matching the outermost slopes.
pub fn build_psi(ladder: &ProfileLadder, m: f64) -> Result<MonotonePl> {
    if !(m > 1.0 && m.is_finite()) {
        return Err(domain(format!("profile base M must exceed 1, got {m}")));
    }
    if ladder.len() < 2 {
        return Err(invariant("ladder needs at least two rungs"));
    }
    if ladder.lambdas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invariant("ladder is not strictly decreasing"));
    }
    let mut xs = Vec::with_capacity(ladder.len());
    let mut ys = Vec::with_capacity(ladder.len());
    for (k, lambda) in ladder.rungs().collect::<Vec<_>>().into_iter().rev() {
        let exp = i32::try_from(k).map_err(|_| Error::Numeric(format!("rung index {k}")))?;
        let y = m.powi(exp);
        if !(y.is_finite() && y > 0.0) {
            return Err(Error::Numeric(format!("M^{k} is not representable")));
        }
        xs.push(lambda);
        ys.push(y);
    }
    MonotonePl::decreasing_with_power_tails(xs, ys)
}

/// `psi(r) = r^m` with `m = 1 / log2(a)`, the exact solution of
/// `psi(a l) = 2 psi(l)`.
pub fn power_law_psi(a: f64) -> Result<MonotonePl> {
    if !(a > 0.0 && a < 1.0) {
        return Err(domain(format!("power law needs 0 < a < 1, got {a}")));
    }
    Ok(MonotonePl::power_law(1.0, 1.0 / a.log2()))
}

pub fn invert_pl(f: &MonotonePl) -> MonotonePl {
    f.inverse()
}

/// `phi(r) = eta(r^beta)`.
pub fn compose_phi(eta: &MonotonePl, beta: f64) -> Result<PhiProfile> {
    if eta.direction() != Direction::Decreasing {
        return Err(invariant("phi needs a decreasing eta"));
    }
    if !(beta > 1.0 && beta.is_finite()) {
        return Err(domain(format!("beta must exceed 1, got {beta}")));
    }
    Ok(PhiProfile {
        eta: eta.clone(),
        beta,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FunctionalInequalityReport {
    /// Largest `psi(nu(l)) / (M psi(l))` over the grid.
    pub max_ratio: f64,
    pub worst_lambda: f64,
    pub min_ratio: f64,
    pub pass: bool,
}

/// Evaluates `psi(nu(l)) <= M psi(l)` on a grid.
pub fn check_functional_inequality(
    psi: &MonotonePl,
    nu: &TransitivityModulus,
    m: f64,
    grid: &[f64],
) -> Result<FunctionalInequalityReport> {
    if grid.is_empty() {
        return Err(domain("functional inequality grid is empty"));
    }
    let mut max_ratio = f64::NEG_INFINITY;
    let mut min_ratio = f64::INFINITY;
    let mut worst_lambda = grid[0];
    for &lambda in grid {
        let lhs = psi.eval(nu.eval(lambda)?)?;
        let rhs = m * psi.eval(lambda)?;
        let ratio = lhs / rhs;
        if ratio > max_ratio {
            max_ratio = ratio;
            worst_lambda = lambda;
        }
        min_ratio = min_ratio.min(ratio);
    }
    Ok(FunctionalInequalityReport {
        max_ratio,
        worst_lambda,
        min_ratio,
        pass: max_ratio <= 1.0 + FUNCTIONAL_TOL_REL,
    })
}

/// `count` points from `lo` to `hi` inclusive, evenly spaced in log scale.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == count - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increasing,
    Decreasing,
}

/// Behaviour outside the knot span, anchored at the end knot `(xe, ye)`.
///
/// The power variants evaluate `ye * (x / xe)^exponent`; which one applies
/// depends on the side and the direction of the function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extension {
    Linear { slope: f64 },
    PoleToInfinity { exponent: f64 },
    DecayToZero { exponent: f64 },
}

impl Extension {
    fn eval(self, x: f64, xe: f64, ye: f64) -> f64 {
        match self {
            Extension::Linear { slope } => ye + slope * (x - xe),
            Extension::PoleToInfinity { exponent } | Extension::DecayToZero { exponent } => {
                ye * (x / xe).powf(exponent)
            }
        }
    }

    fn inverse_eval(self, y: f64, xe: f64, ye: f64) -> f64 {
        match self {
            Extension::Linear { slope } => xe + (y - ye) / slope,
            Extension::PoleToInfinity { exponent } | Extension::DecayToZero { exponent } => {
                xe * (y / ye).powf(1.0 / exponent)
            }
        }
    }

    fn inverted(self, direction: Direction) -> Extension {
        match (self, direction) {
            (Extension::Linear { slope }, _) => Extension::Linear { slope: 1.0 / slope },
            (Extension::PoleToInfinity { exponent }, Direction::Increasing) => {
                Extension::PoleToInfinity {
                    exponent: 1.0 / exponent,
                }
            }
            (Extension::DecayToZero { exponent }, Direction::Increasing) => {
                Extension::DecayToZero {
                    exponent: 1.0 / exponent,
                }
            }
            (Extension::PoleToInfinity { exponent }, Direction::Decreasing) => {
                Extension::DecayToZero {
                    exponent: 1.0 / exponent,
                }
            }
            (Extension::DecayToZero { exponent }, Direction::Decreasing) => {
                Extension::PoleToInfinity {
                    exponent: 1.0 / exponent,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Knots {
        xs: Vec<f64>,
        ys: Vec<f64>,
        direction: Direction,
        left: Extension,
        right: Extension,
    },
    /// `coefficient * x^exponent`, exact.
    PowerLaw { coefficient: f64, exponent: f64 },
}

/// A strictly monotone function on `(0, inf)`: either linear interpolation
/// over knots with typed extensions, or an exact power law.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonePl {
    repr: Repr,
}

impl MonotonePl {
    pub fn from_knots(
        xs: Vec<f64>,
        ys: Vec<f64>,
        left: Extension,
        right: Extension,
    ) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(invariant("knot abscissae and ordinates differ in length"));
        }
        let (xs, ys) = merge_close_knots(xs, ys);
        if xs.len() < 2 {
            return Err(invariant(
                "a monotone profile needs at least two distinct knots",
            ));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) || xs[0] <= 0.0 {
            return Err(invariant("knots must be finite with positive abscissae"));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invariant("knot abscissae not strictly increasing"));
        }
        let direction = if ys[1] > ys[0] {
            Direction::Increasing
        } else {
            Direction::Decreasing
        };
        let strict = match direction {
            Direction::Increasing => ys.windows(2).all(|w| w[1] > w[0]),
            Direction::Decreasing => ys.windows(2).all(|w| w[1] < w[0]),
        };
        if !strict {
            return Err(invariant("knot ordinates not strictly monotone"));
        }
        check_extension(left, direction, true)?;
        check_extension(right, direction, false)?;
        Ok(Self {
            repr: Repr::Knots {
                xs,
                ys,
                direction,
                left,
                right,
            },
        })
    }

    /// Decreasing knots with a pole at 0 and decay at infinity, each tail
    /// matching value and slope of the adjacent linear piece.
    pub fn decreasing_with_power_tails(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let (xs, ys) = merge_close_knots(xs, ys);
        if xs.len() < 2 {
            return Err(invariant(
                "a monotone profile needs at least two distinct knots",
            ));
        }
        let n = xs.len();
        let first_slope = (ys[1] - ys[0]) / (xs[1] - xs[0]);
        let last_slope = (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]);
        let left = Extension::PoleToInfinity {
            exponent: first_slope * xs[0] / ys[0],
        };
        let right = Extension::DecayToZero {
            exponent: last_slope * xs[n - 1] / ys[n - 1],
        };
        Self::from_knots(xs, ys, left, right)
    }

    pub fn power_law(coefficient: f64, exponent: f64) -> Self {
        assert!(coefficient > 0.0 && exponent != 0.0 && exponent.is_finite());
        Self {
            repr: Repr::PowerLaw {
                coefficient,
                exponent,
            },
        }
    }

    pub fn direction(&self) -> Direction {
        match &self.repr {
            Repr::Knots { direction, .. } => *direction,
            Repr::PowerLaw { exponent, .. } if *exponent > 0.0 => Direction::Increasing,
            Repr::PowerLaw { .. } => Direction::Decreasing,
        }
    }

    /// True for closed-form power laws, which carry no interpolation error.
    pub fn is_exact(&self) -> bool {
        matches!(self.repr, Repr::PowerLaw { .. })
    }

    /// `(coefficient, exponent)` of a closed-form power law.
    pub fn power_law_params(&self) -> Option<(f64, f64)> {
        match self.repr {
            Repr::PowerLaw {
                coefficient,
                exponent,
            } => Some((coefficient, exponent)),
            Repr::Knots { .. } => None,
        }
    }

    pub fn knots(&self) -> Option<(&[f64], &[f64])> {
        match &self.repr {
            Repr::Knots { xs, ys, .. } => Some((xs, ys)),
            Repr::PowerLaw { .. } => None,
        }
    }

    pub fn extensions(&self) -> Option<(Extension, Extension)> {
        match &self.repr {
            Repr::Knots { left, right, .. } => Some((*left, *right)),
            Repr::PowerLaw { .. } => None,
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(domain(format!(
                "profile argument must be positive, got {x}"
            )));
        }
        Ok(self.at(x))
    }

    pub(crate) fn at(&self, x: f64) -> f64 {
        match &self.repr {
            Repr::PowerLaw {
                coefficient,
                exponent,
            } => coefficient * x.powf(*exponent),
            Repr::Knots {
                xs,
                ys,
                left,
                right,
                ..
            } => {
                let n = xs.len();
                let i = xs.partition_point(|&v| v < x);
                if i < n && xs[i] == x {
                    return ys[i];
                }
                if i == 0 {
                    return left.eval(x, xs[0], ys[0]);
                }
                if i == n {
                    return right.eval(x, xs[n - 1], ys[n - 1]);
                }
                let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
                y0 + (y1 - y0) * ((x - x0) / (x1 - x0))
            }
        }
    }

    /// The exact inverse: knot coordinates swap, extensions are mapped to
    /// the side they land on.
    pub fn inverse(&self) -> MonotonePl {
        let repr = match &self.repr {
            Repr::PowerLaw {
                coefficient,
                exponent,
            } => Repr::PowerLaw {
                coefficient: coefficient.powf(-1.0 / exponent),
                exponent: 1.0 / exponent,
            },
            Repr::Knots {
                xs,
                ys,
                direction,
                left,
                right,
            } => match direction {
                Direction::Increasing => Repr::Knots {
                    xs: ys.clone(),
                    ys: xs.clone(),
                    direction: Direction::Increasing,
                    left: left.inverted(Direction::Increasing),
                    right: right.inverted(Direction::Increasing),
                },
                Direction::Decreasing => Repr::Knots {
                    xs: ys.iter().rev().copied().collect(),
                    ys: xs.iter().rev().copied().collect(),
                    direction: Direction::Decreasing,
                    left: right.inverted(Direction::Decreasing),
                    right: left.inverted(Direction::Decreasing),
                },
            },
        };
        MonotonePl { repr }
    }

    /// Evaluates the inverse without materialising it.
    pub fn solve(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) {
            return Err(domain(format!("profile value must be positive, got {y}")));
        }
        match &self.repr {
            Repr::PowerLaw {
                coefficient,
                exponent,
            } => Ok((y / coefficient).powf(1.0 / exponent)),
            Repr::Knots {
                xs,
                ys,
                direction,
                left,
                right,
            } => {
                let n = xs.len();
                // index of the first knot at or "past" y in x-order
                let i = match direction {
                    Direction::Increasing => ys.partition_point(|&v| v < y),
                    Direction::Decreasing => ys.partition_point(|&v| v > y),
                };
                if i < n && ys[i] == y {
                    return Ok(xs[i]);
                }
                if i == 0 {
                    return Ok(left.inverse_eval(y, xs[0], ys[0]));
                }
                if i == n {
                    return Ok(right.inverse_eval(y, xs[n - 1], ys[n - 1]));
                }
                let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
                Ok(x0 + (x1 - x0) * ((y - y0) / (y1 - y0)))
            }
        }
    }

    /// Knot slopes nondecreasing left to right (exact comparison). Power
    /// laws report their analytic convexity.
    pub fn is_convex(&self) -> bool {
        match &self.repr {
            Repr::PowerLaw { exponent, .. } => *exponent < 0.0 || *exponent >= 1.0,
            Repr::Knots { xs, ys, .. } => {
                let slopes: Vec<f64> = xs
                    .windows(2)
                    .zip(ys.windows(2))
                    .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
                    .collect();
                slopes.windows(2).all(|s| s[1] >= s[0])
            }
        }
    }
}

fn check_extension(ext: Extension, direction: Direction, left: bool) -> Result<()> {
    let ok = match (ext, direction, left) {
        (Extension::Linear { slope }, Direction::Increasing, _) => slope > 0.0,
        (Extension::Linear { slope }, Direction::Decreasing, _) => slope < 0.0,
        (Extension::PoleToInfinity { exponent }, Direction::Decreasing, true) => exponent < 0.0,
        (Extension::PoleToInfinity { exponent }, Direction::Increasing, false) => exponent > 0.0,
        (Extension::DecayToZero { exponent }, Direction::Decreasing, false) => exponent < 0.0,
        (Extension::DecayToZero { exponent }, Direction::Increasing, true) => exponent > 0.0,
        _ => false,
    };
    let finite = match ext {
        Extension::Linear { slope } => slope.is_finite(),
        Extension::PoleToInfinity { exponent } | Extension::DecayToZero { exponent } => {
            exponent.is_finite()
        }
    };
    if ok && finite {
        Ok(())
    } else {
        Err(invariant(format!(
            "extension {ext:?} does not fit the {} side of a {direction:?} profile",
            if left { "left" } else { "right" }
        )))
    }
}

fn merge_close_knots(xs: Vec<f64>, ys: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    let mut out_x: Vec<f64> = Vec::with_capacity(xs.len());
    let mut out_y: Vec<f64> = Vec::with_capacity(ys.len());
    for (x, y) in xs.into_iter().zip(ys) {
        if let Some(&last) = out_x.last() {
            if (x - last).abs() <= KNOT_MERGE_REL * x.abs().max(last.abs()) {
                continue;
            }
        }
        out_x.push(x);
        out_y.push(y);
    }
    (out_x, out_y)
}

/// `phi(r) = eta(r^beta)`: continuous, decreasing, `phi(0+) = inf`,
/// `phi(inf) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiProfile {
    eta: MonotonePl,
    beta: f64,
}

impl PhiProfile {
    pub fn eta(&self) -> &MonotonePl {
        &self.eta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(domain(format!("phi argument must be positive, got {r}")));
        }
        Ok(self.eta.at(r.powf(self.beta)))
    }
}
