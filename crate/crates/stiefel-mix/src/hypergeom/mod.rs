//! The matrix-argument hypergeometric function 0F1(d/2; diag(kappa^2)/4)
//! that normalizes matrix Langevin densities on V_{p,d}, together with its
//! Monte Carlo cross-check and the moment coefficients derived from it.
//!
//! ```text
//! 0F1(a; S) = sum_{k>=0} sum_{lambda |- k} C_lambda(S) / ((a)_lambda k!),
//! S = diag(kappa_1^2, ..., kappa_p^2) / 4,  a = d/2.
//! ```
//!
//! The series is evaluated entirely in log space, grouped by total weight k
//! with the per-weight tables from [`zonal`]. Truncation is adaptive: the
//! sum stops once the last weight block contributes less than a 1e-12
//! relative tail, escalating past the configured order up to a hard factor
//! before giving up. With the normalized-Haar convention used throughout the
//! crate, 0F1 *is* the Langevin normalizing constant, so every value here is
//! checkable against plain Monte Carlo over Haar draws; the Monte Carlo
//! route is the ground truth whenever the two disagree.

mod zonal;

use crate::manifold::{self, StiefelPoint};
use crate::numeric::{logaddexp, logsumexp, Welford};
use nalgebra::DMatrix;
use once_cell::sync::Lazy;
use rand::Rng;
use statrs::function::gamma::ln_gamma;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use thiserror::Error;

/// Relative mass the final series block may carry before the truncation is
/// declared insufficient.
pub const RELATIVE_TAIL_TOL: f64 = 1e-12;

/// Adaptive escalation runs the series up to this multiple of the configured
/// truncation order before erroring out.
const ESCALATION_FACTOR: usize = 4;

/// Concentration values are memoized after quantization at this resolution.
const CACHE_QUANTUM: f64 = 1e-12;

/// Cached log 0F1 values are dropped wholesale when the table exceeds this
/// (sampler sweeps generate a stream of one-off concentrations).
const VALUE_CACHE_CAP: usize = 200_000;

/// Below this concentration a coordinate is treated as effectively uniform
/// and the finite-difference moment coefficient refuses to run.
pub const NEAR_UNIFORM_KAPPA: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum HypergeomError {
    #[error(
        "0F1 series did not reach a {RELATIVE_TAIL_TOL:.0e} relative tail by order {order_reached}; \
         raise truncation_order"
    )]
    TruncationInsufficient { order_reached: usize },
    #[error(
        "concentration entry {index} is {value:.3e} < {NEAR_UNIFORM_KAPPA:.0e}; the density is \
         near-uniform there and the moment coefficient step underflows (the limit value is 0)"
    )]
    NearUniform { index: usize, value: f64 },
    #[error("invalid input: {0}")]
    BadInput(String),
}

/// Diagonal concentration vector kappa: p finite non-negative reals.
#[derive(Clone, Debug, PartialEq)]
pub struct Concentration(Vec<f64>);

impl Concentration {
    pub fn new(kappa: Vec<f64>) -> Result<Self, HypergeomError> {
        if kappa.is_empty() {
            return Err(HypergeomError::BadInput("kappa must be non-empty".into()));
        }
        if kappa.iter().any(|k| !k.is_finite() || *k < 0.0) {
            return Err(HypergeomError::BadInput(
                "kappa entries must be finite and non-negative".into(),
            ));
        }
        Ok(Concentration(kappa))
    }

    pub fn p(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Copy with entry `i` replaced; preserves validity checks.
    pub fn with_entry(&self, i: usize, value: f64) -> Result<Self, HypergeomError> {
        let mut v = self.0.clone();
        v[i] = value;
        Concentration::new(v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HypergeomConfig {
    /// Base truncation order: max total partition weight before escalation.
    pub truncation_order: usize,
    /// Default Monte Carlo budget for `mc_normalizer` callers that take it.
    pub mc_samples: usize,
}

impl Default for HypergeomConfig {
    fn default() -> Self {
        HypergeomConfig {
            truncation_order: 60,
            mc_samples: 100_000,
        }
    }
}

/// Per-(a, p) series tables, extended lazily one weight at a time.
static WEIGHT_TABLES: Lazy<Mutex<HashMap<(u64, usize), Vec<Arc<zonal::WeightBlock>>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

/// Converged log 0F1 values keyed on (a, quantized sorted kappa).
static VALUE_CACHE: Lazy<Mutex<HashMap<(u64, Vec<u64>), f64>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

fn weight_block(half_d: f64, p: usize, k: u32) -> Arc<zonal::WeightBlock> {
    let mut tables = WEIGHT_TABLES.lock().unwrap();
    let blocks = tables.entry((half_d.to_bits(), p)).or_default();
    while blocks.len() <= k as usize {
        let next = blocks.len() as u32;
        blocks.push(Arc::new(zonal::build_weight_block(next, p, half_d)));
    }
    Arc::clone(&blocks[k as usize])
}

/// log 0F1(half_d; diag(kappa^2)/4).
///
/// Invariant under permutations of kappa (the argument is sorted before
/// evaluation, so permuted inputs return bit-identical values). Returns
/// exactly 0 for kappa = 0. Errors if the adaptive truncation cannot push
/// the relative tail below `RELATIVE_TAIL_TOL`.
pub fn log_0f1(
    half_d: f64,
    kappa: &Concentration,
    cfg: &HypergeomConfig,
) -> Result<f64, HypergeomError> {
    let p = kappa.p();
    if !(half_d > 0.0) || 2.0 * half_d + 1e-9 < p as f64 {
        return Err(HypergeomError::BadInput(format!(
            "need half_d > 0 and 2*half_d >= p; got half_d={half_d}, p={p}"
        )));
    }
    if kappa.as_slice().iter().any(|&k| k > 1e6) {
        return Err(HypergeomError::BadInput(
            "kappa entries above 1e6 are not supported".into(),
        ));
    }
    let mut sorted: Vec<f64> = kappa.as_slice().to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());

    let key = (
        half_d.to_bits(),
        sorted
            .iter()
            .map(|k| (k / CACHE_QUANTUM).round() as u64)
            .collect::<Vec<u64>>(),
    );
    if let Some(&v) = VALUE_CACHE.lock().unwrap().get(&key) {
        return Ok(v);
    }

    // Quantize the evaluation point itself so that any two kappa within one
    // quantum produce the same cached value.
    let ln_y: Vec<f64> = key
        .1
        .iter()
        .map(|&q| {
            let k = q as f64 * CACHE_QUANTUM;
            if k == 0.0 {
                f64::NEG_INFINITY
            } else {
                2.0 * k.ln() - (4.0f64).ln()
            }
        })
        .collect();

    let cap = (cfg.truncation_order.max(1) * ESCALATION_FACTOR).max(16);
    let mut total = 0.0f64; // k = 0 block: log 1
    let mut prev_block = 0.0f64;
    let mut converged = false;
    let mut buf: Vec<f64> = Vec::new();
    for k in 1..=cap {
        let block = weight_block(half_d, p, k as u32);
        buf.clear();
        for entry in &block.entries {
            if entry.log_d == f64::NEG_INFINITY {
                continue;
            }
            let mut m = f64::NEG_INFINITY;
            for expo in &entry.exponents {
                let mut s = 0.0f64;
                for (e, ly) in expo.iter().zip(&ln_y) {
                    if *e > 0 {
                        s += f64::from(*e) * ly;
                    }
                }
                m = logaddexp(m, s);
            }
            buf.push(entry.log_d + m);
        }
        let block_val = logsumexp(&buf) - ln_gamma(k as f64 + 1.0);
        total = logaddexp(total, block_val);
        if block_val == f64::NEG_INFINITY
            || (block_val < prev_block && block_val <= total + RELATIVE_TAIL_TOL.ln())
        {
            converged = true;
            break;
        }
        prev_block = block_val;
    }
    if !converged {
        return Err(HypergeomError::TruncationInsufficient { order_reached: cap });
    }

    let mut cache = VALUE_CACHE.lock().unwrap();
    if cache.len() >= VALUE_CACHE_CAP {
        cache.clear();
    }
    cache.insert(key, total);
    Ok(total)
}

/// Monte Carlo estimate of the Langevin normalizer E_Haar[etr(F^T X)] with
/// F = G diag(kappa), returned as (mean, standard error). This is the
/// independent oracle for `log_0f1`; by Haar invariance the estimand does
/// not depend on G.
pub fn mc_normalizer<R: Rng + ?Sized>(
    d: usize,
    p: usize,
    kappa: &Concentration,
    g: &StiefelPoint,
    n_samples: usize,
    rng: &mut R,
) -> Result<(f64, f64), HypergeomError> {
    if g.d() != d || g.p() != p || kappa.p() != p {
        return Err(HypergeomError::BadInput(format!(
            "inconsistent shapes: d={d}, p={p}, G is {}x{}, kappa has {} entries",
            g.d(),
            g.p(),
            kappa.p()
        )));
    }
    if n_samples == 0 {
        return Err(HypergeomError::BadInput("n_samples must be positive".into()));
    }
    let mut acc = Welford::default();
    for _ in 0..n_samples {
        let x = manifold::sample_haar(d, p, rng).expect("valid shape");
        let mut t = 0.0;
        for j in 0..p {
            t += kappa.get(j) * g.column_dot(&x, j);
        }
        acc.push(t.exp());
    }
    Ok((acc.mean(), acc.std_error()))
}

/// Diagonal p x p matrix U of moment coefficients: U_ii is twice the partial
/// derivative of log 0F1(d/2; diag(q)/4) in q_i = kappa_i^2, so that the
/// Langevin mean is F U. Computed by central finite differences in the
/// squared concentrations; near-uniform coordinates (kappa_i < 1e-4) are
/// refused because the step underflows (the limiting value there is 0).
pub fn mean_coefficient_matrix(
    d: usize,
    kappa: &Concentration,
    cfg: &HypergeomConfig,
) -> Result<DMatrix<f64>, HypergeomError> {
    let p = kappa.p();
    for (i, &k) in kappa.as_slice().iter().enumerate() {
        if k < NEAR_UNIFORM_KAPPA {
            return Err(HypergeomError::NearUniform { index: i, value: k });
        }
    }
    let half_d = d as f64 / 2.0;
    let mut u = DMatrix::zeros(p, p);
    for i in 0..p {
        let q = kappa.get(i) * kappa.get(i);
        // Step is kept inside the domain: q - h >= 0 always.
        let h = (1e-5f64).max(1e-5 * q).min(q);
        let plus = kappa.with_entry(i, (q + h).sqrt())?;
        let minus = kappa.with_entry(i, (q - h).sqrt())?;
        let lp = log_0f1(half_d, &plus, cfg)?;
        let lm = log_0f1(half_d, &minus, cfg)?;
        u[(i, i)] = (lp - lm) / h;
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn conc(v: &[f64]) -> Concentration {
        Concentration::new(v.to_vec()).unwrap()
    }

    /// Scalar-series oracle: 0F1(a; z) = sum z^k / ((a)_k k!).
    fn scalar_0f1(a: f64, z: f64) -> f64 {
        let mut total = 0.0f64;
        let mut term = 1.0f64;
        for k in 0..500 {
            total += term;
            term *= z / ((a + k as f64) * (k as f64 + 1.0));
            if term < 1e-17 * total {
                break;
            }
        }
        total
    }

    /// Modified Bessel function of the first kind by its power series;
    /// oracle for non-half-integer orders.
    fn bessel_i(nu: f64, x: f64) -> f64 {
        let mut total = 0.0f64;
        for m in 0..200 {
            let lt = (2.0 * m as f64 + nu) * (x / 2.0).ln()
                - ln_gamma(m as f64 + 1.0)
                - ln_gamma(m as f64 + nu + 1.0);
            total += lt.exp();
        }
        total
    }

    #[test]
    fn zero_concentration_is_exactly_zero() {
        for p in 1..=3 {
            let v = log_0f1(1.5, &conc(&vec![0.0; p]), &HypergeomConfig::default()).unwrap();
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn p1_d3_matches_sinh_closed_form() {
        // 0F1(3/2; kappa^2/4) = sinh(kappa)/kappa.
        let cfg = HypergeomConfig::default();
        for &k in &[0.1, 1.0, 2.0, 5.0, 10.0, 20.0] {
            let got = log_0f1(1.5, &conc(&[k]), &cfg).unwrap();
            let expect = (k.sinh() / k).ln();
            assert!(
                (got - expect).abs() <= 1e-8,
                "kappa={k}: {got} vs sinh form {expect}"
            );
            // and against the independent scalar series
            let series = scalar_0f1(1.5, k * k / 4.0).ln();
            assert!((got - series).abs() <= 1e-10, "kappa={k} vs scalar series");
        }
        let two = log_0f1(1.5, &conc(&[2.0]), &cfg).unwrap();
        assert!((two.exp() - 1.8134302039).abs() < 1e-8);
    }

    #[test]
    fn p1_general_d_matches_bessel() {
        // 0F1(a; kappa^2/4) = Gamma(a) (kappa/2)^{1-a} I_{a-1}(kappa).
        let cfg = HypergeomConfig::default();
        for &d in &[4usize, 5] {
            let a = d as f64 / 2.0;
            for &k in &[0.5, 2.0, 7.0, 12.0] {
                let got = log_0f1(a, &conc(&[k]), &cfg).unwrap();
                let expect =
                    ln_gamma(a) + (1.0 - a) * (k / 2.0).ln() + bessel_i(a - 1.0, k).ln();
                assert!(
                    (got - expect).abs() <= 1e-9,
                    "d={d} kappa={k}: {got} vs Bessel {expect}"
                );
            }
        }
    }

    #[test]
    fn permutation_symmetry_is_exact() {
        let cfg = HypergeomConfig::default();
        let a = log_0f1(1.5, &conc(&[5.0, 2.0]), &cfg).unwrap();
        let b = log_0f1(1.5, &conc(&[2.0, 5.0]), &cfg).unwrap();
        assert_eq!(a, b);
        let c = log_0f1(2.5, &conc(&[1.0, 4.0, 2.5]), &cfg).unwrap();
        let d = log_0f1(2.5, &conc(&[4.0, 2.5, 1.0]), &cfg).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn monotone_in_each_coordinate() {
        let cfg = HypergeomConfig::default();
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=10 {
            let v = log_0f1(1.5, &conc(&[k as f64]), &cfg).unwrap();
            assert!(v > prev || (k == 0 && v == 0.0), "p=1 not increasing at {k}");
            prev = v;
        }
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=10 {
            let v = log_0f1(1.5, &conc(&[k as f64, 3.0]), &cfg).unwrap();
            assert!(v > prev, "p=2 not increasing at {k}");
            prev = v;
        }
    }

    #[test]
    fn matches_mc_normalizer_p2() {
        let cfg = HypergeomConfig::default();
        let mut r = rng(99);
        let g = manifold::sample_haar(3, 2, &mut r).unwrap();
        let kappa = conc(&[5.0, 2.0]);
        let (est, se) = mc_normalizer(3, 2, &kappa, &g, 1_000_000, &mut r).unwrap();
        let series = log_0f1(1.5, &kappa, &cfg).unwrap().exp();
        println!("series {series}, mc {est} +- {se}");
        assert!(
            (series - est).abs() <= 3.0 * se,
            "series {series} vs MC {est} +- {se}"
        );
    }

    #[test]
    fn mc_normalizer_edge_cases() {
        let mut r = rng(5);
        let g = manifold::sample_haar(3, 2, &mut r).unwrap();
        let (est, se) = mc_normalizer(3, 2, &conc(&[0.0, 0.0]), &g, 1_000, &mut r).unwrap();
        assert_eq!((est, se), (1.0, 0.0));

        let g1 = manifold::sample_haar(3, 1, &mut r).unwrap();
        let (est, se) = mc_normalizer(3, 1, &conc(&[5.0]), &g1, 200_000, &mut r).unwrap();
        let expect = 5.0f64.sinh() / 5.0;
        assert!(
            (est - expect).abs() <= 3.0 * se,
            "{est} +- {se} vs sinh(5)/5 = {expect}"
        );
    }

    #[test]
    fn mc_normalizer_invariant_to_location() {
        let mut r = rng(17);
        let kappa = conc(&[4.0, 1.5]);
        let g1 = manifold::sample_haar(3, 2, &mut r).unwrap();
        let g2 = manifold::sample_haar(3, 2, &mut r).unwrap();
        let (e1, s1) = mc_normalizer(3, 2, &kappa, &g1, 400_000, &mut r).unwrap();
        let (e2, s2) = mc_normalizer(3, 2, &kappa, &g2, 400_000, &mut r).unwrap();
        let joint = (s1 * s1 + s2 * s2).sqrt();
        assert!(
            (e1 - e2).abs() <= 3.0 * joint,
            "{e1}+-{s1} vs {e2}+-{s2} should agree"
        );
    }

    #[test]
    fn exponential_growth_envelope_is_flat() {
        // exp(sum kappa - log 0F1) / prod kappa_i stays within a 10x band of
        // its value at kappa = (5,5): the normalizer grows like
        // e^{sum kappa} / prod kappa up to a bounded constant.
        let cfg = HypergeomConfig::default();
        let v = |k: f64| -> f64 {
            let lz = log_0f1(1.5, &conc(&[k, k]), &cfg).unwrap();
            (2.0 * k - lz).exp() / (k * k)
        };
        let base = v(5.0);
        for &k in &[10.0, 20.0, 40.0] {
            let ratio = v(k) / base;
            println!("envelope ratio at kappa={k}: {ratio}");
            assert!(
                ratio <= 10.0 && ratio >= 0.1,
                "envelope ratio {ratio} at kappa={k}"
            );
        }
    }

    #[test]
    fn truncation_error_reports_order() {
        let cfg = HypergeomConfig {
            truncation_order: 4,
            mc_samples: 1000,
        };
        // kappa chosen so no other test caches this point at full order.
        match log_0f1(1.5, &conc(&[23.0, 17.0]), &cfg) {
            Err(HypergeomError::TruncationInsufficient { order_reached }) => {
                assert_eq!(order_reached, 16);
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn near_uniform_coordinate_is_refused() {
        let cfg = HypergeomConfig::default();
        match mean_coefficient_matrix(3, &conc(&[5e-5]), &cfg) {
            Err(HypergeomError::NearUniform { index: 0, .. }) => {}
            other => panic!("expected NearUniform, got {other:?}"),
        }
    }

    #[test]
    fn moment_coefficient_matches_coth_form() {
        // p = 1, d = 3: U_11 = (coth kappa - 1/kappa) / kappa.
        let cfg = HypergeomConfig::default();
        for &k in &[2.0f64, 5.0] {
            let u = mean_coefficient_matrix(3, &conc(&[k]), &cfg).unwrap();
            let expect = (1.0 / k.tanh() - 1.0 / k) / k;
            let rel = (u[(0, 0)] - expect).abs() / expect;
            assert!(rel <= 1e-7, "kappa={k}: U11 {} vs {expect}", u[(0, 0)]);
        }
        // The mean F U then has norm coth(kappa) - 1/kappa; at kappa = 5
        // that is 0.8000908.
        let u = mean_coefficient_matrix(3, &conc(&[5.0]), &cfg).unwrap();
        let norm = 5.0 * u[(0, 0)];
        assert!((norm - 0.8000908039) .abs() < 1e-7, "mean norm {norm}");
    }

    #[test]
    fn moment_coefficient_vanishes_near_uniform_limit() {
        let cfg = HypergeomConfig::default();
        let u = mean_coefficient_matrix(3, &conc(&[1e-3, 1e-3]), &cfg).unwrap();
        // kappa U_ii -> 0 as kappa -> 0 (mean shrinks to the origin).
        for i in 0..2 {
            assert!((1e-3 * u[(i, i)]).abs() < 1e-3);
        }
    }

    #[test]
    fn large_concentration_converges_with_escalation() {
        // Default order 60 escalates to 240, enough for kappa = (20, 20).
        let cfg = HypergeomConfig::default();
        let v = log_0f1(1.5, &conc(&[20.0, 20.0]), &cfg).unwrap();
        assert!(v.is_finite() && v > 0.0);
        println!("log 0F1 at (20,20): {v}");
    }
}
