//! The matrix Langevin kernel on V_{p,d}: density proportional to
//! etr(F^T X) with F = G diag(kappa), location G a frame and kappa a
//! non-negative concentration per column. All densities are with respect
//! to normalized Haar, so kappa = 0 gives the constant density 1 and the
//! normalizer is exactly the hypergeometric function from [`crate::hypergeom`].
//!
//! Sampling is exact rejection from Haar with envelope exp(sum kappa):
//! acceptance probability exp(sum_i kappa_i (g_i . x_i - 1)), expected cost
//! exp(sum kappa)/Z. That is fine up to sum kappa = 200; past the guard use
//! [`sample_gibbs`], a per-column von Mises-Fisher Gibbs chain that targets
//! the same distribution but is approximate at any finite sweep count.

use crate::hypergeom::{self, Concentration, HypergeomConfig, HypergeomError};
use crate::manifold::{self, ManifoldError, StiefelPoint};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use thiserror::Error;

/// Rejection sampling is refused above this concentration budget; the
/// expected proposal count grows like prod(kappa_i) and the envelope test
/// itself stays stable only while exp(-sum kappa) is representable.
pub const MAX_REJECTION_KAPPA_SUM: f64 = 200.0;

#[derive(Debug, Error)]
pub enum LangevinError {
    #[error("location is {gd}x{gp} but kappa has {kp} entries (point is {xd}x{xp})")]
    ShapeMismatch {
        gd: usize,
        gp: usize,
        kp: usize,
        xd: usize,
        xp: usize,
    },
    #[error(
        "sum of concentrations {sum:.1} exceeds {MAX_REJECTION_KAPPA_SUM}; rejection from Haar \
         is infeasible — reduce kappa or draw with sample_gibbs"
    )]
    ConcentrationTooLarge { sum: f64 },
    #[error(transparent)]
    Hypergeom(#[from] HypergeomError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
}

/// Kernel parameters (G, kappa). The third factor of the usual F = G k H^T
/// parameterization is fixed at H = I and deliberately has no field here.
#[derive(Clone, Debug, PartialEq)]
pub struct LangevinParams {
    g: StiefelPoint,
    kappa: Concentration,
}

impl LangevinParams {
    pub fn new(g: StiefelPoint, kappa: Concentration) -> Result<Self, LangevinError> {
        if kappa.p() != g.p() {
            return Err(LangevinError::ShapeMismatch {
                gd: g.d(),
                gp: g.p(),
                kp: kappa.p(),
                xd: g.d(),
                xp: g.p(),
            });
        }
        Ok(LangevinParams { g, kappa })
    }

    pub fn d(&self) -> usize {
        self.g.d()
    }

    pub fn p(&self) -> usize {
        self.g.p()
    }

    pub fn location(&self) -> &StiefelPoint {
        &self.g
    }

    /// With H = I the density's mode is the location itself.
    pub fn mode(&self) -> &StiefelPoint {
        &self.g
    }

    pub fn concentration(&self) -> &Concentration {
        &self.kappa
    }

    pub fn into_parts(self) -> (StiefelPoint, Concentration) {
        (self.g, self.kappa)
    }

    /// F = G diag(kappa), the d x p natural parameter.
    pub fn natural_parameter(&self) -> DMatrix<f64> {
        let mut f = self.g.matrix().clone();
        for j in 0..self.p() {
            let k = self.kappa.get(j);
            f.column_mut(j).scale_mut(k);
        }
        f
    }

    pub fn log_normalizer(&self, cfg: &HypergeomConfig) -> Result<f64, HypergeomError> {
        hypergeom::log_0f1(self.d() as f64 / 2.0, &self.kappa, cfg)
    }

    fn check_point(&self, x: &StiefelPoint) -> Result<(), LangevinError> {
        if x.d() != self.d() || x.p() != self.p() {
            return Err(LangevinError::ShapeMismatch {
                gd: self.d(),
                gp: self.p(),
                kp: self.kappa.p(),
                xd: x.d(),
                xp: x.p(),
            });
        }
        Ok(())
    }
}

/// tr(F^T X) = sum_j kappa_j (g_j . x_j), the unnormalized log-density.
pub fn log_tilt(params: &LangevinParams, x: &StiefelPoint) -> f64 {
    let mut t = 0.0;
    for j in 0..params.p() {
        t += params.kappa.get(j) * params.g.column_dot(x, j);
    }
    t
}

/// Log-density with respect to normalized Haar.
pub fn log_density(
    x: &StiefelPoint,
    params: &LangevinParams,
    cfg: &HypergeomConfig,
) -> Result<f64, LangevinError> {
    params.check_point(x)?;
    Ok(log_tilt(params, x) - params.log_normalizer(cfg)?)
}

/// Exact draw by rejection from Haar. Returns the accepted point together
/// with the number of proposals consumed (>= 1).
pub fn sample<R: Rng + ?Sized>(
    params: &LangevinParams,
    rng: &mut R,
) -> Result<(StiefelPoint, u64), LangevinError> {
    let budget = params.kappa.sum();
    if budget > MAX_REJECTION_KAPPA_SUM {
        return Err(LangevinError::ConcentrationTooLarge { sum: budget });
    }
    let mut proposals = 0u64;
    loop {
        proposals += 1;
        let x = manifold::sample_haar(params.d(), params.p(), rng)?;
        // log acceptance = tr(F^T X) - sum kappa, always <= 0
        let ln_acc = log_tilt(params, &x) - budget;
        if rng.random::<f64>().ln() < ln_acc {
            return Ok((x, proposals));
        }
    }
}

/// Gibbs sampler over columns: each column in turn is redrawn from its
/// exact conditional, a von Mises-Fisher distribution on the unit sphere
/// of the orthogonal complement of the remaining columns. The chain starts
/// at the mode and runs `sweeps` full passes; the output is distributed
/// approximately (exactly in the limit of many sweeps, and exactly after
/// one sweep when p = 1). Intended for concentrations past the rejection
/// guard; never used for density evaluation.
pub fn sample_gibbs<R: Rng + ?Sized>(
    params: &LangevinParams,
    sweeps: usize,
    rng: &mut R,
) -> Result<StiefelPoint, LangevinError> {
    let (d, p) = (params.d(), params.p());
    let mut x = params.g.matrix().clone();
    for s in 0..sweeps.max(1) {
        for j in 0..p {
            gibbs_column(&mut x, params, j, rng);
        }
        // Orthonormality drifts by machine eps per redraw; rein it in.
        if (s + 1) % 64 == 0 {
            x = manifold::project(&x)?.into_matrix();
        }
    }
    debug_assert_eq!((x.nrows(), x.ncols()), (d, p));
    Ok(manifold::project(&x)?)
}

/// Redraw column j of x from its conditional given the other columns.
fn gibbs_column<R: Rng + ?Sized>(
    x: &mut DMatrix<f64>,
    params: &LangevinParams,
    j: usize,
    rng: &mut R,
) {
    let (d, p) = (x.nrows(), x.ncols());
    let m = d - p + 1;
    let fixed: Vec<DVector<f64>> = (0..p)
        .filter(|&c| c != j)
        .map(|c| x.column(c).into_owned())
        .collect();

    // Orthonormal basis of the complement of the fixed columns, by
    // Gram-Schmidt completion from Gaussian starts (twice-orthogonalized).
    let mut comp: Vec<DVector<f64>> = Vec::with_capacity(m);
    while comp.len() < m {
        let mut v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        for _ in 0..2 {
            for b in fixed.iter().chain(comp.iter()) {
                let c = b.dot(&v);
                v.axpy(-c, b, 1.0);
            }
        }
        let n = v.norm();
        if n > 1e-8 {
            comp.push(v / n);
        }
    }
    let basis = DMatrix::from_columns(&comp); // d x m

    let mu_raw = basis.transpose() * params.g.matrix().column(j);
    let norm = mu_raw.norm();
    let lambda = params.kappa.get(j) * norm;
    let w = if lambda < 1e-12 {
        uniform_sphere(m, rng)
    } else {
        sample_vmf(&(mu_raw / norm), lambda, rng)
    };
    x.set_column(j, &(basis * w));
}

fn uniform_sphere<R: Rng + ?Sized>(m: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-8 {
            return v / n;
        }
    }
}

/// von Mises-Fisher draw on S^{m-1} with mean direction mu (unit) and
/// concentration lambda > 0, by the classic envelope-on-the-cosine scheme:
/// the cosine w = mu . x is drawn by rejection from a transformed Beta, the
/// orthogonal part is uniform.
fn sample_vmf<R: Rng + ?Sized>(mu: &DVector<f64>, lambda: f64, rng: &mut R) -> DVector<f64> {
    let m = mu.len();
    if m == 1 {
        // S^0: two points, probabilities proportional to exp(+-lambda mu).
        let p_plus = 1.0 / (1.0 + (-2.0 * lambda * mu[0]).exp());
        let sign = if rng.random::<f64>() < p_plus { 1.0 } else { -1.0 };
        return DVector::from_element(1, sign);
    }
    let mf = (m - 1) as f64;
    let b = mf / (2.0 * lambda + (4.0 * lambda * lambda + mf * mf).sqrt());
    let x0 = (1.0 - b) / (1.0 + b);
    let c = lambda * x0 + mf * (1.0 - x0 * x0).ln();
    let beta = Beta::new(mf / 2.0, mf / 2.0).expect("valid shape");
    let w = loop {
        let z: f64 = beta.sample(rng);
        let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        let u: f64 = rng.random();
        if lambda * w + mf * (1.0 - x0 * w).ln() - c >= u.ln() {
            break w.clamp(-1.0, 1.0);
        }
    };
    // Uniform direction orthogonal to mu.
    let v = loop {
        let mut y = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let c = mu.dot(&y);
        y.axpy(-c, mu, 1.0);
        let n = y.norm();
        if n > 1e-8 {
            break y / n;
        }
    };
    mu * w + v * (1.0 - w * w).sqrt()
}

/// E[X] = F U with U the diagonal moment-coefficient matrix. The result is
/// a d x p matrix strictly inside the manifold's convex hull, not a frame.
pub fn mean(params: &LangevinParams, cfg: &HypergeomConfig) -> Result<DMatrix<f64>, LangevinError> {
    let u = hypergeom::mean_coefficient_matrix(params.d(), &params.kappa, cfg)?;
    Ok(params.natural_parameter() * u)
}
