//! Assembly of `K(x, y) = phi(h(x, y) rho(x, y))` and its certification.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{domain, invariant, Error, Result};
use crate::exec::Exec;
use crate::kernel::{check_transitivity_with, AffinityMatrix, AxiomReport};
use crate::metrize::{
    certify_equivalence, certify_metric, chain_metric_with, compute_exponent, ChainMetricMatrix,
    EquivalenceReport, MetrizationParams,
};
use crate::profiles::{
    build_ladder, build_psi, compose_phi, log_spaced, MonotonePl, PhiProfile, TransitivityModulus,
};
use crate::stripes::{
    certify_tau_with, default_r_grid, induce_quasimetric, QuasiMetricMatrix, StripeFamily,
};

pub const REPORT_SCHEMA: u32 = 1;
/// Composition constant of the kernel stripes when the profile base is 2.
pub const STRIPE_T: f64 = 2.0;
pub const RECONSTRUCTION_TOL_REL: f64 = 1e-9;
pub const BOUND_TOL: f64 = 1e-9;
pub const DEFAULT_CHAINS: usize = 200;
pub const DEFAULT_CHAIN_SEED: u64 = 0x6e65_7774;
/// Up to this size every length-3 chain is checked.
pub const EXHAUSTIVE_CHAIN_MAX_N: usize = 12;
const MAX_CHAIN_LEN: usize = 8;

#[derive(Debug, Clone)]
pub struct NewtonianDecomposition {
    nu: TransitivityModulus,
    psi: MonotonePl,
    eta: MonotonePl,
    params: MetrizationParams,
    delta: QuasiMetricMatrix,
    rho: ChainMetricMatrix,
    h: Vec<f64>,
    phi: PhiProfile,
    d: Vec<f64>,
}

impl NewtonianDecomposition {
    pub fn n(&self) -> usize {
        self.delta.n()
    }
    pub fn nu(&self) -> &TransitivityModulus {
        &self.nu
    }
    pub fn psi(&self) -> &MonotonePl {
        &self.psi
    }
    pub fn eta(&self) -> &MonotonePl {
        &self.eta
    }
    pub fn params(&self) -> MetrizationParams {
        self.params
    }
    pub fn alpha(&self) -> f64 {
        self.params.alpha
    }
    pub fn beta(&self) -> f64 {
        self.params.beta
    }
    pub fn delta(&self) -> &QuasiMetricMatrix {
        &self.delta
    }
    pub fn rho(&self) -> &ChainMetricMatrix {
        &self.rho
    }
    /// Row-major correction factor, ones on the diagonal.
    pub fn h(&self) -> &[f64] {
        &self.h
    }
    pub fn phi(&self) -> &PhiProfile {
        &self.phi
    }
    /// Row-major `d = h * rho`.
    pub fn d(&self) -> &[f64] {
        &self.d
    }
}

pub fn decompose(k: &AffinityMatrix, nu: &TransitivityModulus) -> Result<NewtonianDecomposition> {
    decompose_with(k, nu, Exec::default())
}

/// Runs the full pipeline. Refuses when `nu` is not a valid transitivity
/// modulus for `k`, naming the worst triple.
pub fn decompose_with(
    k: &AffinityMatrix,
    nu: &TransitivityModulus,
    exec: Exec,
) -> Result<NewtonianDecomposition> {
    let (nu, psi, eta, params, delta) = front_half(k, nu, exec)?;
    let rho = chain_metric_with(&delta, 1.0 / params.beta, exec)?;
    assemble(nu, psi, eta, params, delta, rho, None)
}

/// Rebuilds a decomposition around a stored metric (and optionally a
/// stored correction factor), so previously emitted artifacts can be
/// certified as they are.
pub fn from_parts(
    k: &AffinityMatrix,
    nu: &TransitivityModulus,
    rho: ChainMetricMatrix,
    h: Option<Vec<f64>>,
) -> Result<NewtonianDecomposition> {
    let (nu, psi, eta, params, delta) = front_half(k, nu, Exec::default())?;
    if rho.n() != delta.n() {
        return Err(invariant(format!(
            "metric has size {}, kernel has size {}",
            rho.n(),
            delta.n()
        )));
    }
    assemble(nu, psi, eta, params, delta, rho, h)
}

type FrontHalf = (
    TransitivityModulus,
    MonotonePl,
    MonotonePl,
    MetrizationParams,
    QuasiMetricMatrix,
);

fn front_half(k: &AffinityMatrix, nu: &TransitivityModulus, exec: Exec) -> Result<FrontHalf> {
    let tr = check_transitivity_with(k, nu, exec);
    if !tr.pass {
        let [x, y, z] = tr.worst_triple.unwrap_or([0, 0, 0]);
        return Err(Error::Transitivity {
            x,
            y,
            z,
            ratio: tr.worst_ratio.unwrap_or(f64::NAN),
        });
    }
    let (kmin, kmax) = k.finite_range();
    // One spare rung below the smallest and above the largest affinity.
    let lo = nu.eval(kmin.min(1.0))?;
    let hi = nu.invert(kmax.max(1.0))?;
    let ladder = build_ladder(nu, lo, hi)?;
    let psi = build_psi(&ladder, 2.0)?;
    let eta = psi.inverse();
    let delta = induce_quasimetric(&StripeFamily::KernelThreshold {
        kernel: k,
        eta: &eta,
    })?;
    let params = compute_exponent(STRIPE_T)?;
    Ok((nu.clone(), psi, eta, params, delta))
}

fn assemble(
    nu: TransitivityModulus,
    psi: MonotonePl,
    eta: MonotonePl,
    params: MetrizationParams,
    delta: QuasiMetricMatrix,
    rho: ChainMetricMatrix,
    h: Option<Vec<f64>>,
) -> Result<NewtonianDecomposition> {
    let n = delta.n();
    let h = match h {
        Some(h) if h.len() != n * n => {
            return Err(Error::Format(format!(
                "correction matrix has {} entries, expected {}",
                h.len(),
                n * n
            )))
        }
        Some(h) => h,
        None => compute_h(&delta, &rho, params.beta)?,
    };
    let d: Vec<f64> = h.iter().zip(rho.entries()).map(|(a, b)| a * b).collect();
    let phi = compose_phi(&eta, params.beta)?;
    Ok(NewtonianDecomposition {
        nu,
        psi,
        eta,
        params,
        delta,
        rho,
        h,
        phi,
        d,
    })
}

/// `h(x, y) = delta(x, y)^(1/beta) / rho(x, y)` off the diagonal, 1 on it.
pub fn compute_h(
    delta: &QuasiMetricMatrix,
    rho: &ChainMetricMatrix,
    beta: f64,
) -> Result<Vec<f64>> {
    if delta.n() != rho.n() {
        return Err(invariant("delta and rho differ in size"));
    }
    let n = delta.n();
    let exp = 1.0 / beta;
    let mut h = vec![1.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let r = rho.get(i, j);
            if !(r > 0.0) {
                return Err(Error::Degenerate(format!("rho({i}, {j}) = {r}")));
            }
            h[i * n + j] = delta.get(i, j).powf(exp) / r;
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InclusionViolation {
    pub s: f64,
    pub pair: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InclusionCheck {
    pub pass: bool,
    pub grid_points: usize,
    pub counterexample: Option<InclusionViolation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainCheck {
    pub pass: bool,
    pub exhaustive: bool,
    pub chains: usize,
    /// `2^(2 + 1/beta)`.
    pub bound: f64,
    pub max_ratio: Option<f64>,
    pub worst_chain: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificationReport {
    pub schema: u32,
    pub n: usize,
    pub nu: Option<String>,
    pub axioms: AxiomReport,
    pub t: f64,
    pub alpha: f64,
    pub beta: f64,
    pub tau_delta: f64,
    pub tau_delta_pass: bool,
    pub metric_pass: bool,
    pub metric_counterexample: Option<[usize; 3]>,
    /// Ratios `rho^beta / delta`.
    pub sandwich: EquivalenceReport,
    pub h_min: f64,
    pub h_max: f64,
    pub h_lower_bound: f64,
    pub h_upper_bound: f64,
    pub h_pass: bool,
    /// `h >= 1`, which the chain metric guarantees.
    pub h_tight_pass: bool,
    pub h_symmetric: bool,
    pub reconstruction_max_rel_err: f64,
    pub reconstruction_worst_pair: Option<[usize; 2]>,
    pub reconstruction_pass: bool,
    pub tau_d: f64,
    pub chain_quasitriangle_max_ratio: Option<f64>,
    pub chain: ChainCheck,
    /// `{rho < s/4} subset {d < s}`.
    pub inclusion_inner: InclusionCheck,
    /// `{d < s} subset {rho < 2^(1 + 1/beta) s}`.
    pub inclusion_outer: InclusionCheck,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct CertifyOptions {
    pub chains: usize,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            chains: DEFAULT_CHAINS,
            seed: DEFAULT_CHAIN_SEED,
            exec: Exec::default(),
        }
    }
}

pub fn certify(dec: &NewtonianDecomposition, k: &AffinityMatrix) -> Result<CertificationReport> {
    certify_with(dec, k, &CertifyOptions::default())
}

/// Checks every promised bound of `dec` against the kernel it came from.
pub fn certify_with(
    dec: &NewtonianDecomposition,
    k: &AffinityMatrix,
    opts: &CertifyOptions,
) -> Result<CertificationReport> {
    let n = dec.n();
    if k.n() != n {
        return Err(invariant(format!(
            "decomposition has size {n}, kernel has size {}",
            k.n()
        )));
    }
    let beta = dec.beta();
    let axioms = AxiomReport::evaluate(&k.to_raw(), Some(&dec.nu))?;
    let tau_delta = dec.delta.tau();
    let metric = certify_metric(n, dec.rho.entries());
    let sandwich = certify_equivalence(&dec.delta, &dec.rho, beta)?;

    let (mut h_min, mut h_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut h_symmetric = true;
    let mut rec_err = 0.0_f64;
    let mut rec_pair = None;
    for i in 0..n {
        if dec.h[i * n + i] != 1.0 {
            h_symmetric = false;
        }
        for j in 0..n {
            if i == j {
                continue;
            }
            let hv = dec.h[i * n + j];
            h_min = h_min.min(hv);
            h_max = h_max.max(hv);
            if hv != dec.h[j * n + i] {
                h_symmetric = false;
            }
            let kv = k.value(i, j);
            let err = match dec.phi.eval(dec.d[i * n + j]) {
                Ok(v) => ((v - kv) / kv).abs(),
                Err(_) => f64::INFINITY,
            };
            if !(err <= rec_err) {
                rec_err = if err.is_nan() { f64::INFINITY } else { err };
                rec_pair = Some([i, j]);
            }
        }
    }
    if n < 2 {
        h_min = 1.0;
        h_max = 1.0;
    }
    let h_lower_bound = 2f64.powf(-1.0 / beta);
    let h_upper_bound = 4.0;
    let h_pass = h_min >= h_lower_bound - BOUND_TOL && h_max <= h_upper_bound + BOUND_TOL;
    let h_tight_pass = h_min >= 1.0 - BOUND_TOL;

    let tau_d = certify_tau_with(n, &dec.d, opts.exec).unwrap_or(f64::INFINITY);
    let chain = check_chains(n, &dec.d, beta, opts);
    let (inclusion_inner, inclusion_outer) = check_inclusions(n, &dec.d, &dec.rho, beta);

    let tau_delta_pass = tau_delta <= STRIPE_T + BOUND_TOL;
    let reconstruction_pass = rec_err <= RECONSTRUCTION_TOL_REL;
    let pass = axioms.pass()
        && tau_delta_pass
        && metric.pass
        && sandwich.pass
        && sandwich.tight_upper_pass
        && h_pass
        && h_tight_pass
        && h_symmetric
        && reconstruction_pass
        && tau_d.is_finite()
        && chain.pass
        && inclusion_inner.pass
        && inclusion_outer.pass;
    Ok(CertificationReport {
        schema: REPORT_SCHEMA,
        n,
        nu: dec.nu.spec_string(),
        axioms,
        t: dec.params.t,
        alpha: dec.params.alpha,
        beta,
        tau_delta,
        tau_delta_pass,
        metric_pass: metric.pass,
        metric_counterexample: metric.counterexample,
        sandwich,
        h_min,
        h_max,
        h_lower_bound,
        h_upper_bound,
        h_pass,
        h_tight_pass,
        h_symmetric,
        reconstruction_max_rel_err: rec_err,
        reconstruction_worst_pair: rec_pair,
        reconstruction_pass,
        tau_d,
        chain_quasitriangle_max_ratio: chain.max_ratio,
        chain,
        inclusion_inner,
        inclusion_outer,
        pass,
    })
}

fn check_chains(n: usize, d: &[f64], beta: f64, opts: &CertifyOptions) -> ChainCheck {
    let bound = 2f64.powf(2.0 + 1.0 / beta);
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut chains = 0usize;
    let mut consider = |chain: &[usize]| {
        let total: f64 = chain.windows(2).map(|w| d[w[0] * n + w[1]]).sum();
        let ends = d[chain[0] * n + chain[chain.len() - 1]];
        let ratio = ends / total;
        chains += 1;
        if best.as_ref().is_none_or(|(r, _)| ratio > *r) {
            best = Some((ratio, chain.to_vec()));
        }
    };
    let exhaustive = n <= EXHAUSTIVE_CHAIN_MAX_N;
    if n >= 3 {
        if exhaustive {
            for x in 0..n {
                for y in 0..n {
                    for z in 0..n {
                        if x != y && y != z && x != z {
                            consider(&[x, y, z]);
                        }
                    }
                }
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let longest = n.min(MAX_CHAIN_LEN);
            for _ in 0..opts.chains {
                let m = rng.gen_range(3..=longest);
                let chain = sample(&mut rng, n, m).into_vec();
                consider(&chain);
            }
        }
    }
    let pass = best
        .as_ref()
        .is_none_or(|(r, _)| *r <= bound * (1.0 + BOUND_TOL));
    ChainCheck {
        pass,
        exhaustive,
        chains,
        bound,
        max_ratio: best.as_ref().map(|b| b.0),
        worst_chain: best.map(|b| b.1),
    }
}

// Membership of a pair in each set is a threshold in s, so a violation
// happens on an interval whose right end is a pair threshold; checking the
// thresholds (plus midpoints) of d and rho / 2^(1 + 1/beta) is lossless.
fn check_inclusions(
    n: usize,
    d: &[f64],
    rho: &ChainMetricMatrix,
    beta: f64,
) -> (InclusionCheck, InclusionCheck) {
    let c = 2f64.powf(1.0 + 1.0 / beta);
    let mut thresholds = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in (i + 1)..n {
            thresholds.push(d[i * n + j]);
            thresholds.push(rho.get(i, j) / c);
        }
    }
    let grid = default_r_grid(&thresholds);
    let mut inner = None;
    let mut outer = None;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (dv, rv) = (d[i * n + j], rho.get(i, j));
            if inner.is_none() {
                // Largest grid s with d >= s; the inner set grows with s.
                let idx = grid.partition_point(|&s| !(dv < s));
                if idx > 0 {
                    let s = grid[idx - 1];
                    if rv < s / 4.0 {
                        inner = Some(InclusionViolation { s, pair: [i, j] });
                    }
                }
            }
            if outer.is_none() {
                // Smallest grid s with d < s.
                let idx = grid.partition_point(|&s| !(dv < s));
                if let Some(&s) = grid.get(idx) {
                    if !(rv < c * s) {
                        outer = Some(InclusionViolation { s, pair: [i, j] });
                    }
                }
            }
        }
    }
    let mk = |ce: Option<InclusionViolation>| InclusionCheck {
        pass: ce.is_none(),
        grid_points: grid.len(),
        counterexample: ce,
    };
    (mk(inner), mk(outer))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    Log,
}

/// Plot table of `phi` on `[r_lo, r_hi]`.
pub fn sample_phi(
    phi: &PhiProfile,
    r_lo: f64,
    r_hi: f64,
    count: usize,
    spacing: Spacing,
) -> Result<Vec<(f64, f64)>> {
    if !(r_lo > 0.0 && r_hi > r_lo && r_hi.is_finite()) {
        return Err(domain(format!(
            "phi range needs 0 < lo < hi, got {r_lo}:{r_hi}"
        )));
    }
    if count < 2 {
        return Err(domain("phi sampling needs at least two points"));
    }
    let rs = match spacing {
        Spacing::Log => log_spaced(r_lo, r_hi, count),
        Spacing::Linear => (0..count)
            .map(|i| {
                if i == count - 1 {
                    r_hi
                } else {
                    r_lo + (r_hi - r_lo) * i as f64 / (count - 1) as f64
                }
            })
            .collect(),
    };
    rs.into_iter().map(|r| Ok((r, phi.eval(r)?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_point() -> AffinityMatrix {
        AffinityMatrix::from_fn(3, |i, j| if (i, j) == (0, 2) { 2.0 } else { 4.0 }).unwrap()
    }

    #[test]
    fn three_point_pipeline() {
        let k = three_point();
        let nu = TransitivityModulus::linear(0.5).unwrap();
        let dec = decompose(&k, &nu).unwrap();
        assert_eq!(dec.delta().get(0, 1), 0.25);
        assert_eq!(dec.delta().get(1, 2), 0.25);
        assert_eq!(dec.delta().get(0, 2), 0.5);
        let a = 1.0 / dec.beta();
        assert_eq!(dec.rho().get(0, 2), 0.5f64.powf(a));
        assert!(dec.h().iter().all(|&h| h == 1.0));
        assert!((dec.phi().eval(dec.rho().get(0, 2)).unwrap() - 2.0).abs() < 1e-12);
        assert!((dec.phi().eval(0.25f64.powf(a)).unwrap() - 4.0).abs() < 1e-12);
        let rep = certify(&dec, &k).unwrap();
        assert!(rep.pass, "{rep:#?}");
        assert!(rep.reconstruction_max_rel_err < 1e-12);
        assert_eq!((rep.h_min, rep.h_max), (1.0, 1.0));
        assert!((rep.h_lower_bound - 0.824_194_678_786_026_7).abs() < 1e-12);
        assert!((rep.chain.bound - 4.853_222_306_520_689).abs() < 1e-12);
        assert!(rep.chain.exhaustive);
        assert_eq!(rep.chain.chains, 6);
    }

    #[test]
    fn two_points_are_degenerate_but_pass() {
        let k = AffinityMatrix::from_fn(2, |_, _| 3.0).unwrap();
        let nu = TransitivityModulus::linear(0.5).unwrap();
        let dec = decompose(&k, &nu).unwrap();
        assert!(dec.h().iter().all(|&h| h == 1.0));
        let rep = certify(&dec, &k).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.chain.chains, 0);
    }

    #[test]
    fn inadmissible_modulus_is_refused() {
        let k = three_point();
        let nu = TransitivityModulus::linear(0.9).unwrap();
        match decompose(&k, &nu) {
            Err(Error::Transitivity { x, y, z, .. }) => assert_eq!([x, y, z], [0, 1, 2]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn h_examples() {
        let delta = QuasiMetricMatrix::from_rows(&[
            vec![0.0, 1.0, 8.0],
            vec![1.0, 0.0, 1.0],
            vec![8.0, 1.0, 0.0],
        ])
        .unwrap();
        let beta = 3.0;
        // rho(0, 2) halved relative to 8^(1/3) = 2
        let rho = ChainMetricMatrix::from_rows(&[
            vec![0.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
        ])
        .unwrap();
        let h = compute_h(&delta, &rho, beta).unwrap();
        assert_eq!(h[2], 2.0);
        assert_eq!(h[6], 2.0);
        assert_eq!(h[0], 1.0);
        assert_eq!(h[1], 1.0);
    }

    #[test]
    fn stored_parts_reproduce_the_report() {
        let k = three_point();
        let nu = TransitivityModulus::linear(0.5).unwrap();
        let dec = decompose(&k, &nu).unwrap();
        let again = from_parts(&k, &nu, dec.rho().clone(), Some(dec.h().to_vec())).unwrap();
        assert_eq!(certify(&dec, &k).unwrap(), certify(&again, &k).unwrap());
    }

    #[test]
    fn tampered_h_fails_reconstruction() {
        let k = three_point();
        let nu = TransitivityModulus::linear(0.5).unwrap();
        let dec = decompose(&k, &nu).unwrap();
        let mut h = dec.h().to_vec();
        h[2] = 1.1;
        h[6] = 1.1;
        let bad = from_parts(&k, &nu, dec.rho().clone(), Some(h)).unwrap();
        let rep = certify(&bad, &k).unwrap();
        assert!(!rep.reconstruction_pass && !rep.pass);
        assert_eq!(rep.reconstruction_worst_pair, Some([0, 2]));
    }

    #[test]
    fn phi_samples() {
        let beta = 12f64.log2();
        let phi = compose_phi(&MonotonePl::power_law(1.0, -1.0), beta).unwrap();
        let t = sample_phi(&phi, 1.0, 2.0, 5, Spacing::Linear).unwrap();
        assert!((t[0].1 - 1.0).abs() < 1e-15);
        assert!((t[4].1 - 1.0 / 12.0).abs() < 1e-15);
        assert!(t.windows(2).all(|w| w[1].1 < w[0].1));
        assert!(sample_phi(&phi, 0.0, 1.0, 5, Spacing::Log).is_err());
        assert!(sample_phi(&phi, 1.0, 2.0, 1, Spacing::Log).is_err());
    }
}
