//! Zonal polynomial coefficients for diagonal matrix arguments.
//!
//! A zonal polynomial indexed by a partition lambda of k expands in monomial
//! symmetric functions over partitions mu below lambda in dominance order:
//!
//! ```text
//! C_lambda(Y) = sum_{mu <= lambda} c_{lambda,mu} m_mu(y1, ..., yp)
//! ```
//!
//! The leading coefficient has a closed hook-product form,
//!
//! ```text
//! c_{lambda,lambda} = 2^k k! / prod_{cells (i,j)} (2 a(i,j) + l(i,j) + 2)
//! ```
//!
//! with a = arm length, l = leg length, and the rest follow from the
//! classical downward recurrence
//!
//! ```text
//! c_{lambda,mu} = sum_{(i,j,t)} (mu_i - mu_j + 2t) / (rho_lambda - rho_mu) * c_{lambda,nu},
//! rho_kappa = sum_i kappa_i (kappa_i - i),
//! ```
//!
//! where nu is mu with t units moved from part j up to part i < j and then
//! re-sorted; every (i, j, t) yielding a valid partition contributes one
//! term. All terms are positive and rho is strictly increasing along
//! dominance, so the recurrence runs in log space with no cancellation.
//!
//! Only partitions with at most p parts matter for a rank-p argument
//! (monomials with more parts vanish), which keeps the tables small.

use crate::numeric::{logaddexp, logsumexp};
use statrs::function::gamma::ln_gamma;

/// All partitions of `k` with at most `max_parts` parts, in descending
/// lexicographic order. Dominance-larger partitions always come earlier,
/// which is the processing order the recurrence needs.
pub(crate) fn partitions_of(k: u32, max_parts: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur: Vec<u32> = Vec::new();
    fn rec(remaining: u32, max_part: u32, slots: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if remaining == 0 {
            out.push(cur.clone());
            return;
        }
        if slots == 0 {
            return;
        }
        let hi = remaining.min(max_part);
        // Largest first part first gives descending lexicographic order.
        let lo = remaining.div_ceil(slots as u32);
        if lo > hi {
            return;
        }
        for part in (lo..=hi).rev() {
            cur.push(part);
            rec(remaining - part, part, slots - 1, cur, out);
            cur.pop();
        }
    }
    rec(k, k, max_parts, &mut cur, &mut out);
    out
}

/// rho statistic of a partition: sum_i lambda_i (lambda_i - i), 1-based i.
fn rho(parts: &[u32]) -> i64 {
    parts
        .iter()
        .enumerate()
        .map(|(idx, &part)| part as i64 * (part as i64 - (idx as i64 + 1)))
        .sum()
}

/// log c_{lambda,lambda} via the hook product.
fn log_leading_coeff(parts: &[u32]) -> f64 {
    let k: u32 = parts.iter().sum();
    let mut log_b = 0.0;
    for (i, &row) in parts.iter().enumerate() {
        for j in 1..=row {
            let arm = row - j;
            let leg = parts[i + 1..].iter().filter(|&&r| r >= j).count() as u32;
            log_b += f64::from(2 * arm + leg + 2).ln();
        }
    }
    k as f64 * std::f64::consts::LN_2 + ln_gamma(k as f64 + 1.0) - log_b
}

/// Monomial coefficient table of every zonal polynomial of weight `k` in at
/// most `max_parts` variables.
pub(crate) struct ZonalBlock {
    /// Partitions of k with <= max_parts parts, descending lexicographic.
    pub parts: Vec<Vec<u32>>,
    /// Per lambda index: (mu index, log c_{lambda,mu}) for every mu with a
    /// nonzero coefficient (exactly the mu <= lambda in dominance).
    pub log_c: Vec<Vec<(usize, f64)>>,
}

pub(crate) fn zonal_block(k: u32, max_parts: usize) -> ZonalBlock {
    let parts = partitions_of(k, max_parts);
    let index: std::collections::HashMap<Vec<u32>, usize> = parts
        .iter()
        .enumerate()
        .map(|(i, p)| (p.clone(), i))
        .collect();
    let rhos: Vec<i64> = parts.iter().map(|p| rho(p)).collect();
    let mut log_c: Vec<Vec<(usize, f64)>> = Vec::with_capacity(parts.len());

    let mut scratch: Vec<u32> = Vec::new();
    let mut contrib: Vec<f64> = Vec::new();
    for (li, lambda) in parts.iter().enumerate() {
        // log ratios c_{lambda,mu} / c_{lambda,lambda}; -inf marks mu above
        // lambda in dominance (coefficient zero).
        let mut log_r = vec![f64::NEG_INFINITY; parts.len()];
        log_r[li] = 0.0;
        for mi in li + 1..parts.len() {
            let mu = &parts[mi];
            contrib.clear();
            for j in 1..mu.len() {
                for i in 0..j {
                    for t in 1..=mu[j] {
                        scratch.clear();
                        scratch.extend_from_slice(mu);
                        scratch[i] += t;
                        scratch[j] -= t;
                        scratch.sort_unstable_by(|a, b| b.cmp(a));
                        while scratch.last() == Some(&0) {
                            scratch.pop();
                        }
                        if let Some(&ni) = index.get(&scratch) {
                            if log_r[ni] > f64::NEG_INFINITY {
                                let coeff = f64::from(mu[i] - mu[j] + 2 * t);
                                contrib.push(coeff.ln() + log_r[ni]);
                            }
                        }
                    }
                }
            }
            if !contrib.is_empty() {
                let denom = (rhos[li] - rhos[mi]) as f64;
                log_r[mi] = logsumexp(&contrib) - denom.ln();
            }
        }
        let lead = log_leading_coeff(lambda);
        let cols: Vec<(usize, f64)> = log_r
            .iter()
            .enumerate()
            .filter(|(_, r)| **r > f64::NEG_INFINITY)
            .map(|(mi, r)| (mi, lead + r))
            .collect();
        log_c.push(cols);
    }
    ZonalBlock { parts, log_c }
}

/// Generalized Pochhammer symbol in log space:
/// log (a)_lambda = sum_i [lgamma(a - (i-1)/2 + lambda_i) - lgamma(a - (i-1)/2)].
/// Requires a > (len(lambda) - 1) / 2.
pub(crate) fn log_pochhammer(a: f64, parts: &[u32]) -> f64 {
    parts
        .iter()
        .enumerate()
        .map(|(idx, &part)| {
            let base = a - idx as f64 / 2.0;
            ln_gamma(base + f64::from(part)) - ln_gamma(base)
        })
        .sum()
}

/// Distinct permutations of the parts of `mu` padded with zeros to length
/// `p`: the exponent vectors of the monomial symmetric function m_mu.
pub(crate) fn monomial_exponents(mu: &[u32], p: usize) -> Vec<Vec<u32>> {
    let mut padded = vec![0u32; p];
    padded[..mu.len()].copy_from_slice(mu);
    padded.sort_unstable_by(|a, b| b.cmp(a));
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(p);
    let mut used = vec![false; p];
    fn rec(padded: &[u32], used: &mut [bool], cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == padded.len() {
            out.push(cur.clone());
            return;
        }
        let mut last: Option<u32> = None;
        for i in 0..padded.len() {
            if used[i] || last == Some(padded[i]) {
                continue;
            }
            last = Some(padded[i]);
            used[i] = true;
            cur.push(padded[i]);
            rec(padded, used, cur, out);
            cur.pop();
            used[i] = false;
        }
    }
    rec(&padded, &mut used, &mut cur, &mut out);
    out
}

/// Weight-k slice of the 0F1 series with the Pochhammer denominators folded
/// in: for each mu of weight k, log D_mu with
/// D_mu = sum_{lambda >= mu} c_{lambda,mu} / (a)_lambda, plus the exponent
/// vectors needed to evaluate m_mu.
pub(crate) struct WeightBlock {
    pub entries: Vec<WeightEntry>,
}

pub(crate) struct WeightEntry {
    pub log_d: f64,
    pub exponents: Vec<Vec<u32>>,
}

pub(crate) fn build_weight_block(k: u32, p: usize, half_d: f64) -> WeightBlock {
    let block = zonal_block(k, p);
    let mut log_d = vec![f64::NEG_INFINITY; block.parts.len()];
    for (li, cols) in block.log_c.iter().enumerate() {
        let lp = log_pochhammer(half_d, &block.parts[li]);
        for &(mi, lc) in cols {
            log_d[mi] = logaddexp(log_d[mi], lc - lp);
        }
    }
    let entries = block
        .parts
        .iter()
        .zip(log_d)
        .map(|(mu, d)| WeightEntry {
            log_d: d,
            exponents: monomial_exponents(mu, p),
        })
        .collect();
    WeightBlock { entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_enumeration() {
        assert_eq!(
            partitions_of(4, 4),
            vec![
                vec![4],
                vec![3, 1],
                vec![2, 2],
                vec![2, 1, 1],
                vec![1, 1, 1, 1]
            ]
        );
        assert_eq!(partitions_of(4, 2), vec![vec![4], vec![3, 1], vec![2, 2]]);
        assert_eq!(partitions_of(0, 3), vec![Vec::<u32>::new()]);
    }

    #[test]
    fn known_small_tables() {
        // Classical values: C_(2) = m_2 + (2/3) m_11, C_(11) = (4/3) m_11,
        // C_(3) = m_3 + (3/5) m_21 + (2/5) m_111,
        // C_(21) = (12/5) m_21 + (18/5) m_111, C_(111) = 2 m_111.
        let b2 = zonal_block(2, 3);
        assert_eq!(b2.parts, vec![vec![2], vec![1, 1]]);
        let get = |b: &ZonalBlock, li: usize, mi: usize| -> f64 {
            b.log_c[li]
                .iter()
                .find(|(m, _)| *m == mi)
                .map(|(_, v)| v.exp())
                .unwrap_or(0.0)
        };
        assert!((get(&b2, 0, 0) - 1.0).abs() < 1e-12);
        assert!((get(&b2, 0, 1) - 2.0 / 3.0).abs() < 1e-12);
        assert!((get(&b2, 1, 1) - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(b2.log_c[1].len(), 1, "no m_2 term in C_(11)");

        let b3 = zonal_block(3, 3);
        assert_eq!(b3.parts, vec![vec![3], vec![2, 1], vec![1, 1, 1]]);
        assert!((get(&b3, 0, 0) - 1.0).abs() < 1e-12);
        assert!((get(&b3, 0, 1) - 3.0 / 5.0).abs() < 1e-12);
        assert!((get(&b3, 0, 2) - 2.0 / 5.0).abs() < 1e-12);
        assert!((get(&b3, 1, 1) - 12.0 / 5.0).abs() < 1e-12);
        assert!((get(&b3, 1, 2) - 18.0 / 5.0).abs() < 1e-12);
        assert!((get(&b3, 2, 2) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn normalization_identity() {
        // sum_{lambda >= mu} c_{lambda,mu} = k! / prod_i mu_i!  (the
        // multinomial coefficient of m_mu in (tr Y)^k), for every mu.
        // Restricting lambda to <= p parts is exact because dominance-larger
        // partitions never have more parts.
        for p in 1..=3usize {
            for k in 1..=8u32 {
                let block = zonal_block(k, p);
                let mut sums = vec![0.0f64; block.parts.len()];
                for cols in &block.log_c {
                    for &(mi, lc) in cols {
                        sums[mi] += lc.exp();
                    }
                }
                for (mi, mu) in block.parts.iter().enumerate() {
                    let mut expect = ln_gamma(k as f64 + 1.0);
                    for &part in mu {
                        expect -= ln_gamma(f64::from(part) + 1.0);
                    }
                    let expect = expect.exp();
                    let rel = (sums[mi] - expect).abs() / expect;
                    assert!(
                        rel < 1e-10,
                        "p={p} k={k} mu={mu:?}: sum {} vs multinomial {expect}",
                        sums[mi]
                    );
                }
            }
        }
    }

    /// Dimension of the irreducible S_n representation indexed by a
    /// partition, by the hook length formula. Independent oracle.
    fn sym_dim(parts: &[u32]) -> f64 {
        let n: u32 = parts.iter().sum();
        let mut log_hooks = 0.0;
        for (i, &row) in parts.iter().enumerate() {
            for j in 1..=row {
                let arm = row - j;
                let leg = parts[i + 1..].iter().filter(|&&r| r >= j).count() as u32;
                log_hooks += f64::from(arm + leg + 1).ln();
            }
        }
        (ln_gamma(f64::from(n) + 1.0) - log_hooks).exp()
    }

    #[test]
    fn identity_argument_matches_dimension_formula() {
        // C_lambda(I_m) = 2^{2k} k! (m/2)_lambda dim[2 lambda] / (2k)!,
        // where dim is the S_{2k} hook-length dimension. Evaluated from the
        // coefficient table via m_mu(1,...,1) = #distinct permutations.
        for m in 1..=3usize {
            for k in 1..=6u32 {
                let block = zonal_block(k, m);
                for (li, lambda) in block.parts.iter().enumerate() {
                    let mut total = 0.0;
                    for &(mi, lc) in &block.log_c[li] {
                        let count = monomial_exponents(&block.parts[mi], m).len() as f64;
                        total += lc.exp() * count;
                    }
                    let two_lambda: Vec<u32> = lambda.iter().map(|&x| 2 * x).collect();
                    let expect = (2.0 * k as f64 * std::f64::consts::LN_2
                        + ln_gamma(k as f64 + 1.0)
                        + log_pochhammer(m as f64 / 2.0, lambda)
                        - ln_gamma(2.0 * k as f64 + 1.0))
                    .exp()
                        * sym_dim(&two_lambda);
                    let rel = (total - expect).abs() / expect;
                    assert!(
                        rel < 1e-10,
                        "m={m} lambda={lambda:?}: C(I) {total} vs oracle {expect}"
                    );
                }
            }
        }
    }

    #[test]
    fn trace_power_identity_random_argument() {
        // sum_lambda C_lambda(Y) = (tr Y)^k for random diagonal Y.
        let ys = [[0.7f64, 1.9, 0.3], [2.5, 0.1, 1.1]];
        for y in ys {
            for p in 1..=3usize {
                let yy = &y[..p];
                for k in 1..=8u32 {
                    let block = zonal_block(k, p);
                    let mut total = 0.0;
                    for cols in &block.log_c {
                        for &(mi, lc) in cols {
                            let m_mu: f64 = monomial_exponents(&block.parts[mi], p)
                                .iter()
                                .map(|e| {
                                    e.iter()
                                        .zip(yy)
                                        .map(|(&ei, &yi)| yi.powi(ei as i32))
                                        .product::<f64>()
                                })
                                .sum();
                            total += lc.exp() * m_mu;
                        }
                    }
                    let expect = yy.iter().sum::<f64>().powi(k as i32);
                    let rel = (total - expect).abs() / expect;
                    assert!(rel < 1e-9, "p={p} k={k}: {total} vs {expect}");
                }
            }
        }
    }

    #[test]
    fn pochhammer_reduces_to_scalar() {
        // One part: (a)_(k) is the ordinary rising factorial.
        let a = 1.5;
        assert_eq!(log_pochhammer(a, &[]), 0.0);
        let mut rising = 1.0f64;
        for k in 1..=6u32 {
            rising *= a + f64::from(k) - 1.0;
            let got = log_pochhammer(a, &[k]);
            assert!((got - rising.ln()).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn monomial_exponent_counts() {
        assert_eq!(monomial_exponents(&[2], 1), vec![vec![2]]);
        assert_eq!(monomial_exponents(&[2, 1], 2).len(), 2);
        assert_eq!(monomial_exponents(&[1, 1], 2).len(), 1);
        assert_eq!(monomial_exponents(&[2, 1], 3).len(), 6);
        assert_eq!(monomial_exponents(&[1, 1, 1], 3).len(), 1);
    }
}
