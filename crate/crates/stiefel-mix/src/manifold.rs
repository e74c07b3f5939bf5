//! Orthonormal p-frames in R^d (the Stiefel manifold V_{p,d}) and the
//! geometric primitives the rest of the crate is built on.
//!
//! A point is a d x p matrix X with X^T X = I_p. Special cases: p = 1 is the
//! unit sphere, p = d the orthogonal group. The uniform (Haar) distribution
//! is normalized to a probability measure throughout, so the uniform density
//! is identically 1 and every other density is taken with respect to it.
//!
//! ```text
//! sample_haar:  X = QR(Z), Z_ij ~ N(0,1) iid, columns sign-fixed so that
//!               diag(R) > 0; Q is then exactly Haar-distributed.
//! distance:     rho(X, Y) = ||X - Y||_F
//! project:      argmin_{V in V_{p,d}} ||M - V||_F = U V^T from the thin SVD
//!               M = U S V^T  (polar factor; unique iff M has full rank).
//! ```

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Orthonormality tolerance enforced at construction: max |X^T X - I| must
/// not exceed this. Products of a few hundred well-conditioned operations
/// stay well inside it; genuinely broken inputs do not.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// Relative singular-value floor below which `project` refuses the input.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ManifoldError {
    #[error("matrix is {rows}x{cols}; need d >= p >= 1")]
    BadShape { rows: usize, cols: usize },
    #[error("matrix entries must be finite")]
    NonFinite,
    #[error("columns not orthonormal: max |X^T X - I| = {deviation:.3e} > {tol:.1e}")]
    NotOrthonormal { deviation: f64, tol: f64 },
    #[error("dimension mismatch: {d0}x{p0} vs {d1}x{p1}")]
    DimensionMismatch { d0: usize, p0: usize, d1: usize, p1: usize },
    #[error("degenerate input: smallest singular value {smin:.3e} (relative floor {floor:.1e})")]
    Degenerate { smin: f64, floor: f64 },
    #[error("cannot parse frame row: {0}")]
    Parse(String),
}

/// A validated point of V_{p,d}, stored as its d x p matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct StiefelPoint {
    mat: DMatrix<f64>,
}

impl StiefelPoint {
    /// Wraps a matrix after checking shape, finiteness and orthonormality
    /// (at `ORTHONORMALITY_TOL`).
    pub fn new(mat: DMatrix<f64>) -> Result<Self, ManifoldError> {
        let (d, p) = (mat.nrows(), mat.ncols());
        if p == 0 || d < p {
            return Err(ManifoldError::BadShape { rows: d, cols: p });
        }
        if mat.iter().any(|v| !v.is_finite()) {
            return Err(ManifoldError::NonFinite);
        }
        let deviation = orthonormality_deviation(&mat);
        if deviation > ORTHONORMALITY_TOL {
            return Err(ManifoldError::NotOrthonormal {
                deviation,
                tol: ORTHONORMALITY_TOL,
            });
        }
        Ok(StiefelPoint { mat })
    }

    pub fn d(&self) -> usize {
        self.mat.nrows()
    }

    pub fn p(&self) -> usize {
        self.mat.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    /// Dot product of column `j` of self with column `j` of `x`.
    pub fn column_dot(&self, x: &StiefelPoint, j: usize) -> f64 {
        self.mat.column(j).dot(&x.mat.column(j))
    }

    /// Serializes as a single CSV row: `d,p,` then the d*p entries in
    /// row-major order. Entries use the shortest representation that parses
    /// back to the identical f64.
    pub fn to_csv_row(&self) -> String {
        let mut out = format!("{},{}", self.d(), self.p());
        for i in 0..self.d() {
            for j in 0..self.p() {
                out.push(',');
                out.push_str(&format!("{}", self.mat[(i, j)]));
            }
        }
        out
    }

    /// Parses a row produced by `to_csv_row`.
    pub fn from_csv_row(line: &str) -> Result<Self, ManifoldError> {
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() < 3 {
            return Err(ManifoldError::Parse(format!(
                "expected at least 3 fields, got {}",
                fields.len()
            )));
        }
        let d: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| ManifoldError::Parse(format!("bad d field {:?}", fields[0])))?;
        let p: usize = fields[1]
            .trim()
            .parse()
            .map_err(|_| ManifoldError::Parse(format!("bad p field {:?}", fields[1])))?;
        if fields.len() != 2 + d * p {
            return Err(ManifoldError::Parse(format!(
                "expected {} value fields for a {}x{} frame, got {}",
                d * p,
                d,
                p,
                fields.len() - 2
            )));
        }
        let mut mat = DMatrix::zeros(d, p);
        for i in 0..d {
            for j in 0..p {
                let raw = fields[2 + i * p + j].trim();
                let v: f64 = raw
                    .parse()
                    .map_err(|_| ManifoldError::Parse(format!("bad value {:?}", raw)))?;
                mat[(i, j)] = v;
            }
        }
        StiefelPoint::new(mat)
    }
}

/// Max-abs entry of M^T M - I_p: 0 for exactly orthonormal columns.
pub fn orthonormality_deviation(m: &DMatrix<f64>) -> f64 {
    let p = m.ncols();
    let gram = m.transpose() * m;
    let mut dev = 0.0f64;
    for i in 0..p {
        for j in 0..p {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((gram[(i, j)] - target).abs());
        }
    }
    dev
}

/// True iff `m` has orthonormal columns up to `tol` in max-abs Gram deviation.
pub fn validate(m: &DMatrix<f64>, tol: f64) -> bool {
    m.ncols() >= 1 && m.nrows() >= m.ncols() && orthonormality_deviation(m) <= tol
}

/// Draws a uniform (Haar) point of V_{p,d}: thin QR of an iid Gaussian
/// matrix, with each column of Q sign-fixed so the corresponding diagonal
/// entry of R is positive. The sign fix is what makes the law exactly Haar
/// rather than QR-convention-dependent.
pub fn sample_haar<R: Rng + ?Sized>(
    d: usize,
    p: usize,
    rng: &mut R,
) -> Result<StiefelPoint, ManifoldError> {
    if p == 0 || d < p {
        return Err(ManifoldError::BadShape { rows: d, cols: p });
    }
    let z = DMatrix::from_fn(d, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = z.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    // A Gaussian matrix is full rank almost surely, so Q is a valid frame.
    StiefelPoint::new(q)
}

/// Frobenius distance ||X - Y||_F between two frames of the same shape.
pub fn frobenius_distance(x: &StiefelPoint, y: &StiefelPoint) -> Result<f64, ManifoldError> {
    if x.d() != y.d() || x.p() != y.p() {
        return Err(ManifoldError::DimensionMismatch {
            d0: x.d(),
            p0: x.p(),
            d1: y.d(),
            p1: y.p(),
        });
    }
    Ok((x.matrix() - y.matrix()).norm())
}

/// Nearest orthonormal frame to an arbitrary full-rank d x p matrix in
/// Frobenius norm: the polar factor U V^T of the thin SVD.
pub fn project(m: &DMatrix<f64>) -> Result<StiefelPoint, ManifoldError> {
    let (d, p) = (m.nrows(), m.ncols());
    if p == 0 || d < p {
        return Err(ManifoldError::BadShape { rows: d, cols: p });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(ManifoldError::NonFinite);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let floor = RANK_TOL * smax.max(1.0);
    if smin <= floor {
        return Err(ManifoldError::Degenerate { smin, floor });
    }
    let u = svd.u.expect("thin U requested");
    let v_t = svd.v_t.expect("thin V^T requested");
    let polar = u * v_t;
    // The polar factor of a full-rank matrix is orthonormal to machine
    // precision; construction re-checks it.
    StiefelPoint::new(polar)
}

/// Random walk step on the manifold: project(X + step * E) with E iid
/// standard Gaussian. step = 0 returns X unchanged, bit for bit.
pub fn perturb<R: Rng + ?Sized>(
    x: &StiefelPoint,
    step: f64,
    rng: &mut R,
) -> Result<StiefelPoint, ManifoldError> {
    if step == 0.0 {
        return Ok(x.clone());
    }
    let e = DMatrix::from_fn(x.d(), x.p(), |_, _| rng.sample::<f64, _>(StandardNormal));
    let moved = x.matrix() + step * e;
    project(&moved)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Independent construction used as an oracle: classical Gram-Schmidt on
    /// iid Gaussian columns, no QR involved.
    fn gram_schmidt_frame<R: Rng>(d: usize, p: usize, rng: &mut R) -> DMatrix<f64> {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(p);
        while cols.len() < p {
            let mut v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            for u in &cols {
                let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= dot * ui;
                }
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm < 1e-8 {
                continue; // numerically degenerate draw; retry
            }
            for vi in v.iter_mut() {
                *vi /= norm;
            }
            cols.push(v);
        }
        DMatrix::from_fn(d, p, |i, j| cols[j][i])
    }

    #[test]
    fn validate_identity_embedding() {
        let m = DMatrix::from_fn(5, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        assert!(validate(&m, 1e-10));
    }

    #[test]
    fn validate_rejects_scaled_column() {
        let mut m = DMatrix::from_fn(5, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        m[(1, 1)] = 1.0 + 1e-6;
        assert!(!validate(&m, 1e-10));
        assert!(StiefelPoint::new(m).is_err());
    }

    #[test]
    fn validate_accepts_gram_schmidt_construction() {
        let mut r = rng(11);
        for _ in 0..50 {
            let m = gram_schmidt_frame(6, 3, &mut r);
            assert!(
                validate(&m, 1e-10),
                "Gram-Schmidt frame deviation {:.3e}",
                orthonormality_deviation(&m)
            );
        }
    }

    #[test]
    fn haar_d1_p1_is_fair_sign() {
        let mut r = rng(42);
        let n = 10_000usize;
        let mut plus = 0usize;
        for _ in 0..n {
            let x = sample_haar(1, 1, &mut r).unwrap();
            let v = x.matrix()[(0, 0)];
            assert!((v.abs() - 1.0).abs() < 1e-12);
            if v > 0.0 {
                plus += 1;
            }
        }
        let freq = plus as f64 / n as f64;
        let se = 0.5 / (n as f64).sqrt();
        assert!(
            (freq - 0.5).abs() <= 3.0 * se,
            "sign frequency {freq} outside 3 SE of 1/2"
        );
    }

    #[test]
    fn haar_entry_means_vanish() {
        let mut r = rng(7);
        let n = 10_000usize;
        let (d, p) = (3, 2);
        let mut sums = DMatrix::zeros(d, p);
        for _ in 0..n {
            let x = sample_haar(d, p, &mut r).unwrap();
            assert!(validate(x.matrix(), 1e-10));
            sums += x.matrix();
        }
        // Each entry has variance 1/d under Haar.
        let se = (1.0 / d as f64 / n as f64).sqrt();
        for v in sums.iter() {
            let mean = v / n as f64;
            assert!(
                mean.abs() <= 3.0 * se,
                "entry mean {mean} outside 3 SE ({se})"
            );
        }
    }

    #[test]
    fn haar_is_left_invariant() {
        // Two-sample Kolmogorov-Smirnov on tr(A^T Q X) vs tr(A^T X) for a
        // fixed rotation Q and fixed test frame A, at level 0.01.
        let mut r = rng(2024);
        let (d, p) = (3, 2);
        let q = sample_haar(d, d, &mut r).unwrap();
        let a = sample_haar(d, p, &mut r).unwrap();
        let n = 10_000usize;
        let mut s0: Vec<f64> = Vec::with_capacity(n);
        let mut s1: Vec<f64> = Vec::with_capacity(n);
        for _ in 0..n {
            let x = sample_haar(d, p, &mut r).unwrap();
            s0.push((a.matrix().transpose() * x.matrix()).trace());
            let qx = q.matrix() * x.matrix();
            s1.push((a.matrix().transpose() * qx).trace());
        }
        s0.sort_by(|x, y| x.partial_cmp(y).unwrap());
        s1.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let ks = two_sample_ks(&s0, &s1);
        // c(0.01) = 1.628 for the two-sample statistic.
        let crit = 1.628 * ((n + n) as f64 / (n * n) as f64).sqrt();
        assert!(ks <= crit, "KS {ks} exceeds critical {crit}");
    }

    fn two_sample_ks(a: &[f64], b: &[f64]) -> f64 {
        let (mut i, mut j) = (0usize, 0usize);
        let mut gap = 0.0f64;
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            let fa = i as f64 / a.len() as f64;
            let fb = j as f64 / b.len() as f64;
            gap = gap.max((fa - fb).abs());
        }
        gap
    }

    #[test]
    fn distance_examples() {
        let mut r = rng(3);
        let x = sample_haar(4, 2, &mut r).unwrap();
        assert_eq!(frobenius_distance(&x, &x).unwrap(), 0.0);
        let neg = StiefelPoint::new(-x.matrix().clone()).unwrap();
        let d = frobenius_distance(&x, &neg).unwrap();
        assert!((d - 2.0 * (2.0f64).sqrt()).abs() < 1e-12, "got {d}");
    }

    #[test]
    fn distance_is_a_metric() {
        let mut r = rng(5);
        for _ in 0..1_000 {
            let x = sample_haar(3, 2, &mut r).unwrap();
            let y = sample_haar(3, 2, &mut r).unwrap();
            let z = sample_haar(3, 2, &mut r).unwrap();
            let dxy = frobenius_distance(&x, &y).unwrap();
            let dyx = frobenius_distance(&y, &x).unwrap();
            assert!((dxy - dyx).abs() <= 1e-12);
            let dxz = frobenius_distance(&x, &z).unwrap();
            let dyz = frobenius_distance(&y, &z).unwrap();
            assert!(dxz <= dxy + dyz + 1e-12);
        }
    }

    #[test]
    fn trace_distance_identity() {
        // tr(F^T X) = (p + sum kappa_i^2 - rho^2(F, X)) / 2 with F = G diag(kappa).
        let mut r = rng(17);
        for _ in 0..1_000 {
            let g = sample_haar(4, 2, &mut r).unwrap();
            let x = sample_haar(4, 2, &mut r).unwrap();
            let kappa = [r.random::<f64>() * 20.0, r.random::<f64>() * 20.0];
            let mut f = g.matrix().clone();
            for j in 0..2 {
                for i in 0..4 {
                    f[(i, j)] *= kappa[j];
                }
            }
            let tr = (f.transpose() * x.matrix()).trace();
            let rho2 = (&f - x.matrix()).norm_squared();
            let k2: f64 = kappa.iter().map(|k| k * k).sum();
            let rhs = (2.0 + k2 - rho2) / 2.0;
            assert!(
                (tr - rhs).abs() <= 1e-12 * (1.0 + tr.abs()),
                "trace {tr} vs identity {rhs}"
            );
        }
    }

    #[test]
    fn project_fixes_orthonormal_and_drops_scale() {
        let mut r = rng(23);
        let x = sample_haar(5, 3, &mut r).unwrap();
        let px = project(x.matrix()).unwrap();
        assert!(frobenius_distance(&x, &px).unwrap() < 1e-12);
        let scaled = x.matrix() * 2.0;
        let ps = project(&scaled).unwrap();
        assert!(frobenius_distance(&x, &ps).unwrap() < 1e-12);
    }

    #[test]
    fn project_rejects_rank_deficient() {
        let mut m = DMatrix::zeros(4, 2);
        m[(0, 0)] = 1.0;
        m[(1, 0)] = 2.0;
        m[(0, 1)] = 0.5;
        m[(1, 1)] = 1.0; // second column is a multiple of the first
        match project(&m) {
            Err(ManifoldError::Degenerate { .. }) => {}
            other => panic!("expected Degenerate, got {other:?}"),
        }
    }

    #[test]
    fn project_is_nearest_frame() {
        // Monte Carlo check of minimality: no Haar draw beats the projection.
        let mut r = rng(29);
        let m = DMatrix::from_fn(3, 2, |_, _| r.sample::<f64, _>(StandardNormal));
        let best = project(&m).unwrap();
        let d_best = (&m - best.matrix()).norm();
        for _ in 0..100_000 {
            let cand = sample_haar(3, 2, &mut r).unwrap();
            let d = (&m - cand.matrix()).norm();
            assert!(
                d >= d_best - 1e-12,
                "random frame at {d} beats projection at {d_best}"
            );
        }
    }

    #[test]
    fn perturb_zero_step_is_identity() {
        let mut r = rng(31);
        let x = sample_haar(4, 2, &mut r).unwrap();
        let y = perturb(&x, 0.0, &mut r).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn perturb_stays_on_manifold_and_scales_with_step() {
        let mut r = rng(37);
        let x = sample_haar(3, 2, &mut r).unwrap();
        let mut means = Vec::new();
        for &step in &[0.01, 0.1, 1.0] {
            let mut acc = 0.0;
            let n = 1_000;
            for _ in 0..n {
                let y = perturb(&x, step, &mut r).unwrap();
                assert!(validate(y.matrix(), 1e-10));
                acc += frobenius_distance(&x, &y).unwrap();
            }
            means.push(acc / n as f64);
        }
        println!("mean perturbation distances: {means:?}");
        assert!(means[0] < means[1] && means[1] < means[2]);
    }

    #[test]
    fn csv_row_round_trip_is_exact() {
        let mut r = rng(41);
        for _ in 0..20 {
            let x = sample_haar(3, 2, &mut r).unwrap();
            let row = x.to_csv_row();
            let back = StiefelPoint::from_csv_row(&row).unwrap();
            assert_eq!(x, back, "shortest-float round trip must be exact");
        }
    }
}
