//! Largest concave admissible modulus on the frontier grid, as an LP.
//!
//! Variables are `v_i = nu(g_i)` on the sorted distinct frontier lambdas.
//! Maximise `sum v_i` subject to: segment slopes `>= s_min`, slopes
//! nonincreasing starting from the origin, first slope `<= 1 - slack`, and
//! `v_i <= kappa_t` for every constraint with `lambda_t >= g_i`. The tail
//! continues the last segment.

use minilp::{ComparisonOp, OptimizationDirection, Problem};

use super::{pareto_frontier, TransitivityScatter};
use crate::error::{Error, Result};
use crate::profiles::TransitivityModulus;

#[derive(Debug, Clone)]
pub struct ModulusEstimate {
    pub modulus: TransitivityModulus,
    /// Optimal `sum v_i` as reported by the solver.
    pub lp_objective: f64,
    pub grid: Vec<f64>,
    pub constraint_rows: usize,
}

pub fn estimate_modulus(
    scatter: &TransitivityScatter,
    slack: f64,
    s_min: f64,
) -> Result<TransitivityModulus> {
    solve_modulus_lp(scatter, slack, s_min).map(|e| e.modulus)
}

/// Solves the LP. The grid is always the frontier of `scatter`; every point
/// of `scatter` contributes a cap row, so an unpruned scatter yields the
/// same program with redundant rows.
pub fn solve_modulus_lp(
    scatter: &TransitivityScatter,
    slack: f64,
    s_min: f64,
) -> Result<ModulusEstimate> {
    if scatter.is_empty() {
        return Err(Error::Estimation(
            "empty scatter: no triples to constrain the modulus".into(),
        ));
    }
    if !(slack > 0.0 && slack < 1.0) {
        return Err(Error::Domain(format!(
            "slack must lie in (0, 1), got {slack}"
        )));
    }
    if !(s_min > 0.0 && s_min < 1.0 - slack) {
        return Err(Error::Domain(format!(
            "s_min must lie in (0, 1 - slack) = (0, {}), got {s_min}",
            1.0 - slack
        )));
    }
    let grid: Vec<f64> = pareto_frontier(scatter.points())
        .into_iter()
        .map(|(l, _)| l)
        .collect();
    let m = grid.len();

    // cap rows attach to the largest grid point not above lambda_t; the
    // smaller grid points are covered by monotonicity
    let mut caps: Vec<(usize, f64, f64)> = Vec::new();
    for &(lambda, kappa) in scatter.points() {
        let above = grid.partition_point(|&g| g <= lambda);
        if above == 0 {
            continue;
        }
        let i = above - 1;
        if s_min * grid[i] > kappa {
            return Err(Error::Estimation(format!(
                "infeasible: constraint nu({lambda}) <= {kappa} conflicts with the minimum \
                 slope s_min = {s_min} (needs nu({}) >= {})",
                grid[i],
                s_min * grid[i]
            )));
        }
        caps.push((i, kappa, lambda));
    }

    let scale = grid[m - 1];
    let h: Vec<f64> = grid.iter().map(|g| g / scale).collect();
    let width = |i: usize| if i == 0 { h[0] } else { h[i] - h[i - 1] };

    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = (0..m)
        .map(|_| lp.add_var(1.0, (0.0, f64::INFINITY)))
        .collect();
    lp.add_constraint([(vars[0], 1.0)], ComparisonOp::Le, (1.0 - slack) * h[0]);
    lp.add_constraint([(vars[0], 1.0)], ComparisonOp::Ge, s_min * h[0]);
    for i in 1..m {
        lp.add_constraint(
            [(vars[i], 1.0), (vars[i - 1], -1.0)],
            ComparisonOp::Ge,
            s_min * width(i),
        );
        // (v_i - v_{i-1}) / w_i <= (v_{i-1} - v_{i-2}) / w_{i-1}
        let (wi, wp) = (width(i), width(i - 1));
        let mut row = vec![(vars[i], wp), (vars[i - 1], -(wp + wi))];
        if i >= 2 {
            row.push((vars[i - 2], wi));
        }
        lp.add_constraint(row.as_slice(), ComparisonOp::Le, 0.0);
    }
    for &(i, kappa, _) in &caps {
        lp.add_constraint([(vars[i], 1.0)], ComparisonOp::Le, kappa / scale);
    }
    let solution = lp.solve().map_err(|e| match e {
        minilp::Error::Infeasible => Error::Estimation("modulus LP is infeasible".into()),
        minilp::Error::Unbounded => Error::Estimation("modulus LP is unbounded".into()),
    })?;
    let lp_objective = solution.objective() * scale;
    let raw: Vec<f64> = vars.iter().map(|&v| solution[v] * scale).collect();

    // Per-point caps, tightest first.
    let mut cap_at = vec![f64::INFINITY; m];
    for &(i, kappa, _) in &caps {
        cap_at[i] = cap_at[i].min(kappa);
    }

    // Re-derive the values slope by slope so every constraint holds on the
    // stored numbers, not just within solver tolerance.
    let mut values = Vec::with_capacity(m);
    let mut prev_v = 0.0_f64;
    let mut prev_g = 0.0_f64;
    let mut prev_s = 1.0 - slack;
    for i in 0..m {
        let dg = grid[i] - prev_g;
        let mut s = (raw[i] - prev_v) / dg;
        s = s.min(prev_s).min((cap_at[i] - prev_v) / dg).max(s_min);
        let v = prev_v + s * dg;
        values.push(v);
        prev_v = v;
        prev_g = grid[i];
        prev_s = s;
    }
    let mut knots = Vec::with_capacity(m + 1);
    knots.push(0.0);
    knots.extend_from_slice(&grid);
    let mut vals = Vec::with_capacity(m + 1);
    vals.push(0.0);
    vals.extend_from_slice(&values);
    let modulus = TransitivityModulus::piecewise_linear(knots, vals, prev_s)
        .map_err(|e| Error::Estimation(format!("estimated modulus rejected: {e}")))?;
    Ok(ModulusEstimate {
        modulus,
        lp_objective,
        grid,
        constraint_rows: caps.len() + 2 * m,
    })
}
