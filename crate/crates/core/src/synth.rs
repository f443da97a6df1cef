//! Synthetic point clouds and kernels.
//!
//! `invpow:p` gives `K = |x - y|^-p`, which satisfies quantitative
//! transitivity with `nu(l) = 2^-p l`: by the triangle inequality one of
//! `|x - y|`, `|y - z|` is at least `|x - z| / 2`. `gaussian:sigma` is a
//! negative fixture; its diagonal is finite.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::decompose::{certify, decompose, CertificationReport};
use crate::error::{domain, Error, Result};
use crate::kernel::{validate_matrix, ExtReal};
use crate::profiles::{log_spaced, TransitivityModulus};

pub const MAX_RESAMPLES: usize = 100;
pub const KNOT_TOL_REL: f64 = 1e-12;
const PHI_TOL_REL: f64 = 1e-9;
const PHI_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    InvPow { p: f64 },
    Gaussian { sigma: f64 },
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| Error::Format(format!("bad kernel spec {s:?}")))?;
        let v: f64 = arg
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad number in kernel spec {s:?}")))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(domain(format!(
                "kernel parameter must be positive, got {v}"
            )));
        }
        match kind.trim() {
            "invpow" => Ok(KernelSpec::InvPow { p: v }),
            "gaussian" => Ok(KernelSpec::Gaussian { sigma: v }),
            other => Err(Error::Format(format!("unknown kernel kind {other:?}"))),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::InvPow { p } => write!(f, "invpow:{p}"),
            KernelSpec::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
        }
    }
}

impl KernelSpec {
    /// The linear modulus an `invpow` kernel is guaranteed to satisfy.
    pub fn modulus(&self) -> Option<TransitivityModulus> {
        match self {
            KernelSpec::InvPow { p } => TransitivityModulus::linear(2f64.powf(-p)).ok(),
            KernelSpec::Gaussian { .. } => None,
        }
    }
}

/// `n` distinct points uniform in `[0, 1)^dim`. A point coinciding with an
/// earlier one is redrawn, at most [`MAX_RESAMPLES`] times in total.
pub fn generate_points(n: usize, dim: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n < 2 || dim < 1 {
        return Err(domain(format!(
            "need n >= 2 and dim >= 1, got n={n}, dim={dim}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_distinct(n, dim, || rng.gen::<f64>())
}

fn draw_distinct(n: usize, dim: usize, mut draw: impl FnMut() -> f64) -> Result<Vec<Vec<f64>>> {
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut retries = 0;
    while pts.len() < n {
        let p: Vec<f64> = (0..dim).map(|_| draw()).collect();
        if pts.iter().any(|q| distance(q, &p) == 0.0) {
            retries += 1;
            if retries > MAX_RESAMPLES {
                return Err(Error::Resource(format!(
                    "could not draw {n} distinct points after {MAX_RESAMPLES} resamples"
                )));
            }
            continue;
        }
        pts.push(p);
    }
    Ok(pts)
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Raw kernel matrix for a point cloud; not validated.
pub fn kernel_matrix(points: &[Vec<f64>], spec: KernelSpec) -> Result<Vec<Vec<ExtReal>>> {
    let n = points.len();
    if let Some(p) = points.iter().find(|p| p.len() != points[0].len()) {
        return Err(Error::Format(format!(
            "points of dimension {} and {}",
            points[0].len(),
            p.len()
        )));
    }
    let mut rows = vec![vec![ExtReal::Infinite; n]; n];
    for i in 0..n {
        for j in 0..n {
            let dist = distance(&points[i], &points[j]);
            rows[i][j] = match spec {
                KernelSpec::InvPow { .. } if i == j => ExtReal::Infinite,
                KernelSpec::InvPow { p } => {
                    if dist == 0.0 {
                        return Err(Error::Degenerate(format!("points {i} and {j} coincide")));
                    }
                    ExtReal::Finite(dist.powf(-p))
                }
                KernelSpec::Gaussian { sigma } => {
                    ExtReal::Finite((-dist * dist / (2.0 * sigma * sigma)).exp())
                }
            };
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundtripReport {
    pub schema: u32,
    pub n: usize,
    pub dim: usize,
    pub p: f64,
    pub seed: u64,
    pub nu: Option<String>,
    pub certification: CertificationReport,
    /// Worst relative gap between `psi` at its knots and `r^(-1/p)`.
    pub psi_knot_max_rel_err: f64,
    pub psi_knot_pass: bool,
    /// `phi(r) r^(p beta)` on samples spanning the ladder.
    pub phi_ratio_min: f64,
    pub phi_ratio_max: f64,
    /// Largest value linear interpolation of `s^-p` between dyadic knots
    /// can reach, relative to `s^-p`.
    pub phi_ratio_bound: f64,
    pub phi_pass: bool,
    pub rho_ratio_min: f64,
    pub rho_ratio_max: f64,
    pub rho_pass: bool,
    pub failed: Vec<String>,
    pub pass: bool,
}

/// `max_{s in [1, 2]} l(s) s^p` where `l` interpolates `s^-p` linearly
/// between 1 and 2.
pub fn dyadic_interpolation_bound(p: f64) -> f64 {
    let q = 2f64.powf(-p);
    let (a, b) = (2.0 - q, 1.0 - q);
    let f = |s: f64| (a - b * s) * s.powf(p);
    let s_star = (p * a / ((p + 1.0) * b)).clamp(1.0, 2.0);
    f(s_star).max(f(1.0)).max(f(2.0))
}

/// Invpow world, decomposition with `nu = linear(2^-p)`, and the power-law
/// checks on top of the certification.
pub fn roundtrip(n: usize, dim: usize, p: f64, seed: u64) -> Result<RoundtripReport> {
    let spec = KernelSpec::InvPow { p };
    if !(p > 0.0 && p.is_finite()) {
        return Err(domain(format!("p must be positive, got {p}")));
    }
    let points = generate_points(n, dim, seed)?;
    let k = validate_matrix(&kernel_matrix(&points, spec)?)?;
    let nu = spec.modulus().ok_or_else(|| domain("no modulus"))?;
    let dec = decompose(&k, &nu)?;
    let cert = certify(&dec, &k)?;

    let (xs, ys) = dec
        .psi()
        .knots()
        .ok_or_else(|| Error::Invariant("ladder profile has no knots".into()))?;
    let psi_knot_max_rel_err = xs
        .iter()
        .zip(ys)
        .map(|(l, y)| (l.powf(-1.0 / p) - y).abs() / y)
        .fold(0.0, f64::max);
    let psi_knot_pass = psi_knot_max_rel_err <= KNOT_TOL_REL;

    // The knots of eta sit at s = psi(lambda_k) = 2^k.
    let beta = dec.beta();
    let (s_lo, s_hi) = (ys[0].min(ys[ys.len() - 1]), ys[0].max(ys[ys.len() - 1]));
    let mut ss = log_spaced(s_lo, s_hi, PHI_SAMPLES);
    ss.extend(ys.iter().copied());
    let mut phi_ratio_min = f64::INFINITY;
    let mut phi_ratio_max = f64::NEG_INFINITY;
    for s in ss {
        let r = s.powf(1.0 / beta);
        let ratio = dec.phi().eval(r)? * r.powf(p * beta);
        phi_ratio_min = phi_ratio_min.min(ratio);
        phi_ratio_max = phi_ratio_max.max(ratio);
    }
    let phi_ratio_bound = dyadic_interpolation_bound(p);
    let phi_pass = phi_ratio_min >= 1.0 - PHI_TOL_REL
        && phi_ratio_max <= phi_ratio_bound * (1.0 + PHI_TOL_REL);

    let rho_ratio_min = cert.sandwich.min_ratio;
    let rho_ratio_max = cert.sandwich.max_ratio;
    let rho_pass = cert.sandwich.pass && cert.sandwich.tight_upper_pass;

    let mut failed = Vec::new();
    if !cert.pass {
        failed.push("certification".to_string());
    }
    if !psi_knot_pass {
        failed.push("psi_knots".to_string());
    }
    if !phi_pass {
        failed.push("phi_power_law".to_string());
    }
    if !rho_pass {
        failed.push("rho_sandwich".to_string());
    }
    Ok(RoundtripReport {
        schema: crate::decompose::REPORT_SCHEMA,
        n,
        dim,
        p,
        seed,
        nu: nu.spec_string(),
        certification: cert,
        psi_knot_max_rel_err,
        psi_knot_pass,
        phi_ratio_min,
        phi_ratio_max,
        phi_ratio_bound,
        phi_pass,
        rho_ratio_min,
        rho_ratio_max,
        rho_pass,
        pass: failed.is_empty(),
        failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{axiom_violations, check_transitivity, AxiomViolation};

    #[test]
    fn invpow_two_points() {
        let pts = vec![vec![0.0, 0.0], vec![0.5, 0.0]];
        let m = kernel_matrix(&pts, KernelSpec::InvPow { p: 1.0 }).unwrap();
        assert_eq!(m[0][1], ExtReal::Finite(2.0));
        assert_eq!(m[0][0], ExtReal::Infinite);
    }

    #[test]
    fn invpow_worlds_satisfy_linear_transitivity() {
        for (seed, p) in [(1, 1.0), (2, 2.0), (3, 0.5)] {
            let pts = generate_points(25, 3, seed).unwrap();
            let spec = KernelSpec::InvPow { p };
            let k = validate_matrix(&kernel_matrix(&pts, spec).unwrap()).unwrap();
            assert!(check_transitivity(&k, &spec.modulus().unwrap()).pass);
        }
    }

    #[test]
    fn gaussian_violates_diagonal_axiom() {
        let pts = generate_points(5, 2, 0).unwrap();
        let m = kernel_matrix(&pts, KernelSpec::Gaussian { sigma: 1.0 }).unwrap();
        let v = axiom_violations(&m).unwrap();
        assert!(v.iter().any(|v| matches!(v, AxiomViolation::K3 { .. })));
    }

    #[test]
    fn points_are_reproducible() {
        assert_eq!(
            generate_points(10, 2, 7).unwrap(),
            generate_points(10, 2, 7).unwrap()
        );
        assert_ne!(
            generate_points(10, 2, 7).unwrap(),
            generate_points(10, 2, 8).unwrap()
        );
        assert!(generate_points(1, 2, 0).is_err());
        assert!(generate_points(3, 0, 0).is_err());
    }

    #[test]
    fn duplicates_exhaust_the_resample_budget() {
        let mut calls = 0;
        let err = draw_distinct(3, 2, || {
            calls += 1;
            0.5
        })
        .unwrap_err();
        assert!(matches!(err, Error::Resource(_)));
        assert_eq!(calls, 2 * (MAX_RESAMPLES + 2));
        let mut v = 0.0;
        let ok = draw_distinct(3, 1, || {
            v = if v == 0.0 { 0.25 } else { 0.0 };
            v
        });
        assert!(ok.is_err());
    }

    #[test]
    fn kernel_specs_parse() {
        assert_eq!(
            "invpow:2".parse::<KernelSpec>().unwrap(),
            KernelSpec::InvPow { p: 2.0 }
        );
        assert_eq!(
            "gaussian:0.5".parse::<KernelSpec>().unwrap(),
            KernelSpec::Gaussian { sigma: 0.5 }
        );
        assert!("invpow:-1".parse::<KernelSpec>().is_err());
        assert!("cauchy:1".parse::<KernelSpec>().is_err());
    }

    #[test]
    fn interpolation_bound_for_inverse_distance() {
        assert!((dyadic_interpolation_bound(1.0) - 1.125).abs() < 1e-15);
        // brute force over one gap
        for p in [0.5, 1.0, 2.0, 3.0] {
            let q = 2f64.powf(-p);
            let brute = (0..=100_000)
                .map(|i| 1.0 + i as f64 / 100_000.0)
                .map(|s| ((2.0 - s) + (s - 1.0) * q) * s.powf(p))
                .fold(0.0, f64::max);
            assert!(
                (dyadic_interpolation_bound(p) - brute).abs() < 1e-9,
                "p={p}"
            );
        }
    }

    #[test]
    fn roundtrip_default_instance() {
        let rep = roundtrip(30, 2, 1.0, 7).unwrap();
        assert!(rep.pass, "{:?}", rep.failed);
        assert!(rep.psi_knot_max_rel_err <= 1e-12);
        assert!(rep.phi_ratio_max <= 1.125 + 1e-9);
        let two = roundtrip(2, 2, 1.0, 7).unwrap();
        assert!(two.pass);
        assert_eq!(
            (two.certification.h_min, two.certification.h_max),
            (1.0, 1.0)
        );
    }

    #[test]
    fn quartic_ladder_for_p_two() {
        let rep = roundtrip(12, 2, 2.0, 3).unwrap();
        assert!(rep.pass, "{:?}", rep.failed);
        assert!(rep.psi_knot_max_rel_err <= 1e-12);
    }
}
