//! Monte Carlo diagnostics over densities on V_{p,d}: Hellinger and KL
//! estimators by Haar importance sampling, the kernel-smoothing
//! approximation error, empirical Lipschitz ratios of the kernel in its
//! location and concentration arguments, and the prior tail-mass check.
//!
//! Everything here treats a density as a black-box log-density plus its
//! (d, p); all integrals use the uniform (Haar) distribution as the
//! proposal, which is unbiased and adequate for the moderate
//! concentrations these checks run at.

use crate::hypergeom::{self, Concentration, HypergeomConfig};
use crate::langevin::LangevinParams;
use crate::manifold::{self, StiefelPoint};
use crate::mixture::{KappaPrior, MixtureError};
use crate::numeric::{logsumexp, Welford};
use rand::Rng;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error(transparent)]
    Hypergeom(#[from] hypergeom::HypergeomError),
    #[error(transparent)]
    Manifold(#[from] manifold::ManifoldError),
    #[error(transparent)]
    Mixture(#[from] MixtureError),
}

/// A log-density on V_{p,d} with respect to normalized Haar, as an
/// evaluable handle with shape metadata. Normalization is the caller's
/// responsibility (and checkable by Monte Carlo).
#[derive(Clone)]
pub struct DensityHandle {
    d: usize,
    p: usize,
    log_f: Arc<dyn Fn(&StiefelPoint) -> f64 + Send + Sync>,
}

impl DensityHandle {
    pub fn from_fn<F>(d: usize, p: usize, log_f: F) -> Self
    where
        F: Fn(&StiefelPoint) -> f64 + Send + Sync + 'static,
    {
        DensityHandle { d, p, log_f: Arc::new(log_f) }
    }

    /// The constant density 1.
    pub fn uniform(d: usize, p: usize) -> Self {
        DensityHandle::from_fn(d, p, |_| 0.0)
    }

    /// A single Langevin kernel; its normalizer is computed once here.
    pub fn langevin(params: &LangevinParams, cfg: &HypergeomConfig) -> Result<Self, DiagnosticsError> {
        let lz = params.log_normalizer(cfg)?;
        let params = params.clone();
        Ok(DensityHandle::from_fn(params.d(), params.p(), move |x| {
            crate::langevin::log_tilt(&params, x) - lz
        }))
    }

    /// A finite mixture of Langevin kernels with the given weights
    /// (normalized here; must be positive).
    pub fn langevin_mixture(
        components: &[(f64, LangevinParams)],
        cfg: &HypergeomConfig,
    ) -> Result<Self, DiagnosticsError> {
        if components.is_empty() {
            return Err(DiagnosticsError::BadInput("empty mixture".into()));
        }
        if components.iter().any(|(w, _)| !(w > &0.0)) {
            return Err(DiagnosticsError::BadInput("weights must be positive".into()));
        }
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        let (d, p) = (components[0].1.d(), components[0].1.p());
        let mut parts = Vec::with_capacity(components.len());
        for (w, params) in components {
            if params.d() != d || params.p() != p {
                return Err(DiagnosticsError::BadInput("mixture shape mismatch".into()));
            }
            let lz = params.log_normalizer(cfg)?;
            parts.push(((w / total).ln() - lz, params.clone()));
        }
        Ok(DensityHandle::from_fn(d, p, move |x| {
            let terms: Vec<f64> = parts
                .iter()
                .map(|(base, params)| base + crate::langevin::log_tilt(params, x))
                .collect();
            logsumexp(&terms)
        }))
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn log_density(&self, x: &StiefelPoint) -> f64 {
        (self.log_f)(x)
    }
}

/// A Monte Carlo estimate with its standard error. `clamped` marks
/// estimates pushed back into the valid range (e.g. a negative squared
/// Hellinger radicand from noise).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub clamped: bool,
}

fn check_pair(f: &DensityHandle, g: &DensityHandle) -> Result<(), DiagnosticsError> {
    if f.d() != g.d() || f.p() != g.p() {
        return Err(DiagnosticsError::BadInput(format!(
            "densities on different spaces: {}x{} vs {}x{}",
            f.d(),
            f.p(),
            g.d(),
            g.p()
        )));
    }
    Ok(())
}

/// Hellinger distance sqrt(1 - E_Haar[sqrt(f g)]) with a delta-method
/// standard error. The affinity estimate is clamped into [0, 1] when noise
/// carries it outside; at the boundary the delta method degenerates and the
/// reported error falls back to sqrt(SE of the affinity), the correct scale
/// for a folded estimate at zero.
pub fn hellinger_mc<R: Rng + ?Sized>(
    f: &DensityHandle,
    g: &DensityHandle,
    n_samples: usize,
    rng: &mut R,
) -> Result<McEstimate, DiagnosticsError> {
    check_pair(f, g)?;
    if n_samples < 2 {
        return Err(DiagnosticsError::BadInput("need at least 2 samples".into()));
    }
    let mut acc = Welford::default();
    for _ in 0..n_samples {
        let x = manifold::sample_haar(f.d(), f.p(), rng)?;
        acc.push(((f.log_density(&x) + g.log_density(&x)) / 2.0).exp());
    }
    let (affinity, se_aff) = (acc.mean(), acc.std_error());
    let raw = 1.0 - affinity;
    let clamped = raw < 0.0;
    let h = raw.max(0.0).sqrt();
    let std_error = if h > 1e-8 { se_aff / (2.0 * h) } else { se_aff.sqrt() };
    Ok(McEstimate { estimate: h, std_error, clamped })
}

/// KL divergence E_{f0}[log(f0/f)] by Haar importance sampling:
/// E_Haar[f0 (log f0 - log f)].
pub fn kl_mc<R: Rng + ?Sized>(
    f0: &DensityHandle,
    f: &DensityHandle,
    n_samples: usize,
    rng: &mut R,
) -> Result<McEstimate, DiagnosticsError> {
    check_pair(f0, f)?;
    if n_samples < 2 {
        return Err(DiagnosticsError::BadInput("need at least 2 samples".into()));
    }
    let mut acc = Welford::default();
    for _ in 0..n_samples {
        let x = manifold::sample_haar(f0.d(), f0.p(), rng)?;
        let l0 = f0.log_density(&x);
        acc.push(l0.exp() * (l0 - f.log_density(&x)));
    }
    Ok(McEstimate { estimate: acc.mean(), std_error: acc.std_error(), clamped: false })
}

/// max over the given probe points of |f(X) - (smoothing of f by the
/// Langevin kernel at concentration kappa)(X)|, the inner integral
/// estimated over one shared Haar pool (importance sampling with the
/// uniform proposal). Sharing probes and pool across kappa values gives
/// common random numbers for monotonicity comparisons.
pub fn kernel_approx_error_with_pool(
    f: &DensityHandle,
    kappa: &Concentration,
    probes: &[StiefelPoint],
    pool: &[StiefelPoint],
    cfg: &HypergeomConfig,
) -> Result<f64, DiagnosticsError> {
    if probes.is_empty() || pool.is_empty() {
        return Err(DiagnosticsError::BadInput("need probes and a pool".into()));
    }
    let half_d = f.d() as f64 / 2.0;
    let lz = hypergeom::log_0f1(half_d, kappa, cfg)?;
    let pool_lf: Vec<f64> = pool.iter().map(|g| f.log_density(g)).collect();
    let ln_b = (pool.len() as f64).ln();
    let mut worst = 0.0f64;
    let mut terms = Vec::with_capacity(pool.len());
    for x in probes {
        terms.clear();
        for (g, lf) in pool.iter().zip(&pool_lf) {
            let mut t = 0.0;
            for j in 0..kappa.p() {
                t += kappa.get(j) * g.column_dot(x, j);
            }
            terms.push(t - lz + lf);
        }
        let smoothed = (logsumexp(&terms) - ln_b).exp();
        worst = worst.max((f.log_density(x).exp() - smoothed).abs());
    }
    Ok(worst)
}

/// Convenience form drawing `n_outer` Haar probes and an `n_inner` Haar
/// pool itself. Probe augmentation (e.g. with the density's modes) is the
/// caller's business via [`kernel_approx_error_with_pool`].
pub fn kernel_approx_error<R: Rng + ?Sized>(
    f: &DensityHandle,
    kappa: &Concentration,
    n_outer: usize,
    n_inner: usize,
    rng: &mut R,
    cfg: &HypergeomConfig,
) -> Result<f64, DiagnosticsError> {
    if n_outer < 1_000 || n_inner < 1_000 {
        return Err(DiagnosticsError::BadInput(
            "need at least 1000 probes and 1000 pool draws".into(),
        ));
    }
    let probes: Vec<StiefelPoint> = (0..n_outer)
        .map(|_| manifold::sample_haar(f.d(), f.p(), rng))
        .collect::<Result<_, _>>()?;
    let pool: Vec<StiefelPoint> = (0..n_inner)
        .map(|_| manifold::sample_haar(f.d(), f.p(), rng))
        .collect::<Result<_, _>>()?;
    kernel_approx_error_with_pool(f, kappa, &probes, &pool, cfg)
}

/// max over sampled (X, G1, G2) of
/// |g(X,G1,kappa) - g(X,G2,kappa)| / rho(G1, G2). Besides independent Haar
/// triples, a share of trials places G2 near G1 and X near the common
/// location, where the supremum actually lives.
pub fn lipschitz_ratio_location<R: Rng + ?Sized>(
    kappa: &Concentration,
    trials: usize,
    rng: &mut R,
    cfg: &HypergeomConfig,
) -> Result<f64, DiagnosticsError> {
    if trials < 1_000 {
        return Err(DiagnosticsError::BadInput("need at least 1000 trials".into()));
    }
    let p = kappa.p();
    let d = p + 1; // smallest interesting ambient dimension for this probe
    lipschitz_ratio_location_dim(kappa, d, trials, rng, cfg)
}

/// As [`lipschitz_ratio_location`] with an explicit ambient dimension.
pub fn lipschitz_ratio_location_dim<R: Rng + ?Sized>(
    kappa: &Concentration,
    d: usize,
    trials: usize,
    rng: &mut R,
    cfg: &HypergeomConfig,
) -> Result<f64, DiagnosticsError> {
    let p = kappa.p();
    let half_d = d as f64 / 2.0;
    let lz = hypergeom::log_0f1(half_d, kappa, cfg)?;
    let dens = |g: &StiefelPoint, x: &StiefelPoint| -> f64 {
        let mut t = 0.0;
        for j in 0..p {
            t += kappa.get(j) * g.column_dot(x, j);
        }
        (t - lz).exp()
    };
    let mut worst = 0.0f64;
    for t in 0..trials {
        let g1 = manifold::sample_haar(d, p, rng)?;
        let (g2, x) = match t % 4 {
            0 => (manifold::sample_haar(d, p, rng)?, manifold::sample_haar(d, p, rng)?),
            1 => (manifold::perturb(&g1, 0.01, rng)?, manifold::sample_haar(d, p, rng)?),
            2 => (manifold::perturb(&g1, 0.01, rng)?, manifold::perturb(&g1, 0.1, rng)?),
            _ => (manifold::perturb(&g1, 0.3, rng)?, manifold::perturb(&g1, 0.05, rng)?),
        };
        let rho = manifold::frobenius_distance(&g1, &g2)?;
        if rho < 1e-12 {
            continue; // coincident pair: 0/0, skipped by contract
        }
        let ratio = (dens(&g1, &x) - dens(&g2, &x)).abs() / rho;
        assert!(ratio.is_finite());
        worst = worst.max(ratio);
    }
    Ok(worst)
}

/// max over sampled (X, G, kappa, kappa~) with phi of both below `k_bound`
/// of |g(X,G,kappa) - g(X,G,kappa~)| / |kappa - kappa~|_2.
pub fn lipschitz_ratio_concentration<R: Rng + ?Sized>(
    k_bound: f64,
    d: usize,
    p: usize,
    trials: usize,
    rng: &mut R,
    cfg: &HypergeomConfig,
) -> Result<f64, DiagnosticsError> {
    if trials < 1_000 {
        return Err(DiagnosticsError::BadInput("need at least 1000 trials".into()));
    }
    // kappa_i <= c_max keeps phi <= k_bound coordinate-wise
    let c_max = k_bound / (p as f64).sqrt() - 1.0;
    if c_max <= 0.0 {
        return Err(DiagnosticsError::BadInput(format!(
            "k_bound {k_bound} is below the phi floor sqrt(p)"
        )));
    }
    let half_d = d as f64 / 2.0;
    let mut worst = 0.0f64;
    for t in 0..trials {
        let base: Vec<f64> = (0..p).map(|_| rng.random::<f64>() * c_max).collect();
        let other: Vec<f64> = match t % 3 {
            0 => (0..p).map(|_| rng.random::<f64>() * c_max).collect(),
            1 => {
                // a small coordinate bump probes the gradient regime
                let i = t % p;
                let mut v = base.clone();
                v[i] = (v[i] + 1e-3).min(c_max);
                v
            }
            _ => {
                let i = t % p;
                let mut v = base.clone();
                v[i] = (v[i] + 0.1).min(c_max);
                v
            }
        };
        let ka = Concentration::new(base)?;
        let kb = Concentration::new(other)?;
        let dist: f64 = ka
            .as_slice()
            .iter()
            .zip(kb.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if dist < 1e-12 {
            continue;
        }
        let g = manifold::sample_haar(d, p, rng)?;
        let x = if t % 2 == 0 {
            manifold::sample_haar(d, p, rng)?
        } else {
            manifold::perturb(&g, 0.05, rng)?
        };
        let mut ta = 0.0;
        let mut tb = 0.0;
        for j in 0..p {
            let c = g.column_dot(&x, j);
            ta += ka.get(j) * c;
            tb += kb.get(j) * c;
        }
        let da = (ta - hypergeom::log_0f1(half_d, &ka, cfg)?).exp();
        let db = (tb - hypergeom::log_0f1(half_d, &kb, cfg)?).exp();
        let ratio = (da - db).abs() / dist;
        assert!(ratio.is_finite());
        worst = worst.max(ratio);
    }
    Ok(worst)
}

/// phi(kappa) = sqrt(sum_i (kappa_i + 1)^2), the radial control function of
/// the prior tail condition. Note the floor phi >= sqrt(p).
pub fn phi(kappa: &Concentration) -> f64 {
    kappa
        .as_slice()
        .iter()
        .map(|k| (k + 1.0) * (k + 1.0))
        .sum::<f64>()
        .sqrt()
}

/// Ordinary least-squares slope of ln(y) on ln(x); inputs must be positive.
pub fn fit_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64, DiagnosticsError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(DiagnosticsError::BadInput("need matched samples, at least 2".into()));
    }
    if xs.iter().chain(ys.iter()).any(|v| !(v > &0.0)) {
        return Err(DiagnosticsError::BadInput("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in lx.iter().zip(&ly) {
        num += (a - mx) * (b - my);
        den += (a - mx) * (a - mx);
    }
    if den == 0.0 {
        return Err(DiagnosticsError::BadInput("degenerate abscissae".into()));
    }
    Ok(num / den)
}

/// Result of the prior tail-mass check at one sample size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailCheck {
    pub n: u64,
    /// the radius n^a the tail is measured beyond
    pub threshold: f64,
    /// Monte Carlo estimate of prior mass of { phi(kappa) > threshold }
    pub mass: f64,
    /// the required bound exp(-n beta)
    pub bound: f64,
    pub pass: bool,
}

/// For each n in `n_grid`, estimates the prior mass of
/// { phi(kappa) > n^a } from `draws` prior samples and compares it against
/// exp(-n beta). Requires the exponent window 0 < a < 1/((p+2) d p).
pub fn tail_condition_check<R: Rng + ?Sized>(
    prior: &KappaPrior,
    d: usize,
    p: usize,
    a: f64,
    beta: f64,
    n_grid: &[u64],
    draws: usize,
    rng: &mut R,
) -> Result<Vec<TailCheck>, DiagnosticsError> {
    let a_max = 1.0 / ((p as f64 + 2.0) * d as f64 * p as f64);
    if !(a > 0.0 && a < a_max) {
        return Err(DiagnosticsError::BadInput(format!(
            "need 0 < a < {a_max:.5}, got {a}"
        )));
    }
    if !(beta > 0.0) || draws == 0 {
        return Err(DiagnosticsError::BadInput("beta and draws must be positive".into()));
    }
    let phis: Vec<f64> = (0..draws)
        .map(|_| {
            let v: Vec<f64> = (0..p).map(|_| prior.sample_one(rng)).collect();
            v.iter().map(|k| (k + 1.0) * (k + 1.0)).sum::<f64>().sqrt()
        })
        .collect();
    Ok(n_grid
        .iter()
        .map(|&n| {
            let threshold = (n as f64).powf(a);
            let count = phis.iter().filter(|&&v| v > threshold).count();
            let mass = count as f64 / draws as f64;
            let bound = (-(n as f64) * beta).exp();
            TailCheck { n, threshold, mass, bound, pass: mass <= bound }
        })
        .collect())
}
