//! Dirichlet-process mixture of Langevin kernels: CRP Gibbs sweeps over
//! partitions with auxiliary-parameter proposals for new clusters,
//! Metropolis updates of cluster locations and concentrations, a seeded
//! chain driver, and posterior summaries (co-clustering counts, cluster
//! count histogram, adjusted Rand index).
//!
//! Two model variants: every cluster carries its own concentration vector
//! ("location-scale"), or all clusters share one ("location-only"). In the
//! shared variant per-cluster kappa is absent by construction and the
//! state-level `shared_kappa` is the single source of truth.

mod predictive;

pub use predictive::{log_predictive, PredictiveDensity};

use crate::hypergeom::{self, Concentration, HypergeomConfig, HypergeomError};
use crate::langevin::LangevinError;
use crate::manifold::{self, ManifoldError, StiefelPoint};
use crate::numeric::logsumexp;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma as GammaDist, StandardNormal, Weibull as WeibullDist};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MixtureError {
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error("state invariant violated: {0}")]
    InvalidState(String),
    #[error(transparent)]
    Hypergeom(#[from] HypergeomError),
    #[error(transparent)]
    Langevin(#[from] LangevinError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
}

/// Per-coordinate prior on concentration entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum KappaPrior {
    /// rate * exp(-rate (x - lower)) on [lower, inf)
    TruncatedExponential { rate: f64, lower: f64 },
    /// Weibull with the usual (shape, scale); shape > 1 gives the
    /// lighter-than-exponential tail wanted by the consistency checks.
    Weibull { shape: f64, scale: f64 },
    /// Gamma in the shape/rate parameterization.
    Gamma { shape: f64, rate: f64 },
    /// Degenerate prior; parameter updates are skipped under it.
    PointMass { value: f64 },
}

impl KappaPrior {
    pub fn validate(&self) -> Result<(), MixtureError> {
        let ok = match *self {
            KappaPrior::TruncatedExponential { rate, lower } => rate > 0.0 && lower >= 0.0,
            KappaPrior::Weibull { shape, scale } => shape > 0.0 && scale > 0.0,
            KappaPrior::Gamma { shape, rate } => shape > 0.0 && rate > 0.0,
            KappaPrior::PointMass { value } => value >= 0.0 && value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(MixtureError::BadInput(format!("bad prior parameters: {self:?}")))
        }
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            KappaPrior::TruncatedExponential { rate, lower } => {
                lower + Exp::new(rate).expect("validated").sample(rng)
            }
            KappaPrior::Weibull { shape, scale } => {
                WeibullDist::new(scale, shape).expect("validated").sample(rng)
            }
            KappaPrior::Gamma { shape, rate } => {
                GammaDist::new(shape, 1.0 / rate).expect("validated").sample(rng)
            }
            KappaPrior::PointMass { value } => value,
        }
    }

    /// Normalized log-density (log point mass for the degenerate case);
    /// -inf outside the support.
    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            KappaPrior::TruncatedExponential { rate, lower } => {
                if x >= lower {
                    rate.ln() - rate * (x - lower)
                } else {
                    f64::NEG_INFINITY
                }
            }
            KappaPrior::Weibull { shape, scale } => {
                if x > 0.0 {
                    (shape / scale).ln() + (shape - 1.0) * (x / scale).ln()
                        - (x / scale).powf(shape)
                } else {
                    f64::NEG_INFINITY
                }
            }
            KappaPrior::Gamma { shape, rate } => {
                if x > 0.0 {
                    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
                } else {
                    f64::NEG_INFINITY
                }
            }
            KappaPrior::PointMass { value } => {
                if x == value {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn is_point_mass(&self) -> bool {
        matches!(self, KappaPrior::PointMass { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Each cluster has its own concentration vector.
    LocationScale,
    /// All clusters share one concentration vector.
    LocationOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub alpha: f64,
    pub kappa_prior: KappaPrior,
    pub variant: Variant,
}

impl PriorSpec {
    pub fn new(alpha: f64, kappa_prior: KappaPrior, variant: Variant) -> Result<Self, MixtureError> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(MixtureError::BadInput(format!("alpha must be positive, got {alpha}")));
        }
        kappa_prior.validate()?;
        Ok(PriorSpec { alpha, kappa_prior, variant })
    }
}

/// One mixture component. `kappa` is None exactly in the shared-scale
/// variant, where the state's `shared_kappa` applies.
#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    pub g: StiefelPoint,
    pub kappa: Option<Concentration>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureState {
    /// Cluster label per observation; labels are dense in 0..clusters.len().
    pub assignments: Vec<usize>,
    pub clusters: Vec<Cluster>,
    pub shared_kappa: Option<Concentration>,
    pub alpha: f64,
    pub sweep_index: u64,
}

impl MixtureState {
    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.clusters.len()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// The concentration governing cluster `c` under either variant.
    pub fn kappa_of(&self, c: usize) -> Result<&Concentration, MixtureError> {
        self.clusters[c]
            .kappa
            .as_ref()
            .or(self.shared_kappa.as_ref())
            .ok_or_else(|| {
                MixtureError::InvalidState(format!("cluster {c} has no concentration"))
            })
    }

    pub fn validate(&self, n: usize) -> Result<(), MixtureError> {
        if self.assignments.len() != n {
            return Err(MixtureError::InvalidState(format!(
                "{} assignments for {n} observations",
                self.assignments.len()
            )));
        }
        let sizes = self.cluster_sizes();
        if self.assignments.iter().any(|&a| a >= self.clusters.len()) {
            return Err(MixtureError::InvalidState("label out of range".into()));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(MixtureError::InvalidState("empty cluster".into()));
        }
        if sizes.iter().sum::<usize>() != n {
            return Err(MixtureError::InvalidState("sizes do not sum to n".into()));
        }
        for c in 0..self.clusters.len() {
            let has_own = self.clusters[c].kappa.is_some();
            let has_shared = self.shared_kappa.is_some();
            if has_own == has_shared {
                return Err(MixtureError::InvalidState(format!(
                    "cluster {c}: exactly one of per-cluster and shared kappa must be set"
                )));
            }
        }
        Ok(())
    }
}

/// Proposal scales for the Metropolis updates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    /// Gaussian scale of the location proposal.
    pub location: f64,
    /// Log-scale standard deviation of the concentration proposal.
    pub concentration: f64,
}

impl Default for StepSizes {
    fn default() -> Self {
        StepSizes { location: 0.05, concentration: 0.3 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AcceptanceCounters {
    pub location_attempts: u64,
    pub location_accepts: u64,
    pub concentration_attempts: u64,
    pub concentration_accepts: u64,
}

impl AcceptanceCounters {
    pub fn location_rate(&self) -> f64 {
        if self.location_attempts == 0 {
            1.0
        } else {
            self.location_accepts as f64 / self.location_attempts as f64
        }
    }

    pub fn concentration_rate(&self) -> f64 {
        if self.concentration_attempts == 0 {
            1.0
        } else {
            self.concentration_accepts as f64 / self.concentration_attempts as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainSettings {
    pub iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub m_aux: usize,
    pub steps: StepSizes,
    pub prior: PriorSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainOutput {
    pub retained: Vec<MixtureState>,
    pub log_joint: Vec<f64>,
    pub acceptance: AcceptanceCounters,
    pub seed: u64,
    pub settings: ChainSettings,
    pub n_obs: usize,
}

/// sum_j kappa_j (g_j . x_j), the log kernel without its normalizer.
fn tilt(g: &StiefelPoint, kappa: &Concentration, x: &StiefelPoint) -> f64 {
    let mut t = 0.0;
    for j in 0..kappa.p() {
        t += kappa.get(j) * g.column_dot(x, j);
    }
    t
}

/// Normalized log kernel density of `x` under cluster `c` of `state`.
pub fn log_kernel(
    state: &MixtureState,
    c: usize,
    x: &StiefelPoint,
    cfg: &HypergeomConfig,
) -> Result<f64, MixtureError> {
    let kappa = state.kappa_of(c)?;
    let g = &state.clusters[c].g;
    let lz = hypergeom::log_0f1(x.d() as f64 / 2.0, kappa, cfg)?;
    Ok(tilt(g, kappa, x) - lz)
}

fn base_draw<R: Rng + ?Sized>(
    d: usize,
    p: usize,
    prior: &PriorSpec,
    rng: &mut R,
) -> Result<Cluster, MixtureError> {
    let g = manifold::sample_haar(d, p, rng)?;
    let kappa = match prior.variant {
        Variant::LocationScale => {
            let draws: Vec<f64> = (0..p).map(|_| prior.kappa_prior.sample_one(rng)).collect();
            Some(Concentration::new(draws)?)
        }
        Variant::LocationOnly => None,
    };
    Ok(Cluster { g, kappa })
}

pub fn init_state<R: Rng + ?Sized>(
    data: &[StiefelPoint],
    prior: &PriorSpec,
    rng: &mut R,
) -> Result<MixtureState, MixtureError> {
    let n = data.len();
    if n == 0 {
        return Err(MixtureError::BadInput("need at least one observation".into()));
    }
    let (d, p) = (data[0].d(), data[0].p());
    if data.iter().any(|x| x.d() != d || x.p() != p) {
        return Err(MixtureError::BadInput("observations disagree on (d, p)".into()));
    }
    let shared_kappa = match prior.variant {
        Variant::LocationScale => None,
        Variant::LocationOnly => {
            let draws: Vec<f64> = (0..p).map(|_| prior.kappa_prior.sample_one(rng)).collect();
            Some(Concentration::new(draws)?)
        }
    };
    let cluster = base_draw(d, p, prior, rng)?;
    let state = MixtureState {
        assignments: vec![0; n],
        clusters: vec![cluster],
        shared_kappa,
        alpha: prior.alpha,
        sweep_index: 0,
    };
    state.validate(n)?;
    Ok(state)
}

fn remove_cluster(state: &mut MixtureState, c: usize) -> Cluster {
    let removed = state.clusters.remove(c);
    for a in &mut state.assignments {
        if *a > c {
            *a -= 1;
        }
    }
    removed
}

/// One full reassignment pass with a caller-supplied generator of auxiliary
/// (new-cluster) parameters. The production sweep passes the base measure;
/// tests may pass a discretized space to compare against brute-force
/// enumeration. Auxiliary handling: a departing singleton's parameters
/// serve as the first auxiliary draw, so singletons can keep their table.
pub fn reassign_sweep_with_aux<R, F>(
    state: &mut MixtureState,
    data: &[StiefelPoint],
    m_aux: usize,
    cfg: &HypergeomConfig,
    rng: &mut R,
    mut draw_aux: F,
) -> Result<(), MixtureError>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Result<Cluster, MixtureError>,
{
    if m_aux == 0 {
        return Err(MixtureError::BadInput("m_aux must be at least 1".into()));
    }
    let n = data.len();
    let mut sizes = state.cluster_sizes();
    let ln_aux_weight = (state.alpha / m_aux as f64).ln();
    let mut weights: Vec<f64> = Vec::new();
    let mut aux: Vec<Cluster> = Vec::with_capacity(m_aux);

    for i in 0..n {
        let old = state.assignments[i];
        sizes[old] -= 1;
        aux.clear();
        if sizes[old] == 0 {
            let removed = remove_cluster(state, old);
            sizes.remove(old);
            aux.push(removed);
        }
        while aux.len() < m_aux {
            aux.push(draw_aux(rng)?);
        }

        weights.clear();
        for c in 0..state.clusters.len() {
            let w = if c == old && sizes[c] == 0 {
                // unreachable: emptied clusters were just removed
                f64::NEG_INFINITY
            } else {
                (sizes[c] as f64).ln() + log_kernel(state, c, &data[i], cfg)?
            };
            weights.push(w);
        }
        for cand in &aux {
            let kappa = cand
                .kappa
                .as_ref()
                .or(state.shared_kappa.as_ref())
                .ok_or_else(|| MixtureError::InvalidState("auxiliary without kappa".into()))?;
            let lz = hypergeom::log_0f1(data[i].d() as f64 / 2.0, kappa, cfg)?;
            weights.push(ln_aux_weight + tilt(&cand.g, kappa, &data[i]) - lz);
        }

        // categorical draw by log-space normalization and one uniform
        let total = logsumexp(&weights);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = weights.len() - 1;
        for (k, w) in weights.iter().enumerate() {
            acc += (w - total).exp();
            if u < acc {
                pick = k;
                break;
            }
        }

        if pick < state.clusters.len() {
            state.assignments[i] = pick;
            sizes[pick] += 1;
        } else {
            let chosen = aux[pick - state.clusters.len()].clone();
            state.clusters.push(chosen);
            sizes.push(1);
            state.assignments[i] = state.clusters.len() - 1;
        }
    }
    state.sweep_index += 1;
    Ok(())
}

/// Production reassignment sweep: auxiliaries come from the base measure
/// (Haar location, prior concentration or the shared one).
pub fn reassign_sweep<R: Rng + ?Sized>(
    state: &mut MixtureState,
    data: &[StiefelPoint],
    prior: &PriorSpec,
    m_aux: usize,
    cfg: &HypergeomConfig,
    rng: &mut R,
) -> Result<(), MixtureError> {
    let (d, p) = (data[0].d(), data[0].p());
    let prior = prior.clone();
    reassign_sweep_with_aux(state, data, m_aux, cfg, rng, move |r| {
        base_draw(d, p, &prior, r)
    })
}

/// Metropolis updates of every cluster's location and of the concentration
/// parameters (per cluster, or the shared vector). Locations get a
/// projected-Gaussian step (exact rotation proposal when p = d);
/// concentrations a log-normal random walk with the matching Jacobian,
/// rejected outright outside the prior support.
pub fn update_cluster_params<R: Rng + ?Sized>(
    state: &mut MixtureState,
    data: &[StiefelPoint],
    prior: &PriorSpec,
    steps: StepSizes,
    cfg: &HypergeomConfig,
    rng: &mut R,
    counters: &mut AcceptanceCounters,
) -> Result<(), MixtureError> {
    let (d, p) = (data[0].d(), data[0].p());
    let half_d = d as f64 / 2.0;
    let k = state.clusters.len();

    // per-cluster sums of member frames (sufficient statistic for both moves)
    let mut stat: Vec<DMatrix<f64>> = vec![DMatrix::zeros(d, p); k];
    let mut sizes = vec![0usize; k];
    for (i, &a) in state.assignments.iter().enumerate() {
        stat[a] += data[i].matrix();
        sizes[a] += 1;
    }

    for c in 0..k {
        // --- location move ---
        let kappa = state.kappa_of(c)?.clone();
        let g_old = state.clusters[c].g.clone();
        let g_new = if p == d {
            // exact symmetric proposal: left-rotate by exp(step * skew)
            let b = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let skew = (&b - b.transpose()) * (0.5 * steps.location);
            let q = skew.exp();
            StiefelPoint::new(q * g_old.matrix())?
        } else {
            manifold::perturb(&g_old, steps.location, rng)?
        };
        let mut delta = 0.0;
        for j in 0..p {
            let diff = g_new.matrix().column(j) - g_old.matrix().column(j);
            delta += kappa.get(j) * diff.dot(&stat[c].column(j));
        }
        counters.location_attempts += 1;
        if rng.random::<f64>().ln() < delta {
            state.clusters[c].g = g_new;
            counters.location_accepts += 1;
        }

        // --- per-cluster concentration move ---
        if prior.variant == Variant::LocationScale && !prior.kappa_prior.is_point_mass() {
            for j in 0..p {
                let kappa_cur = state.clusters[c].kappa.as_ref().expect("location-scale").clone();
                let old = kappa_cur.get(j);
                let prop = old * (steps.concentration * rng.sample::<f64, _>(StandardNormal)).exp();
                let prior_new = prior.kappa_prior.log_density(prop);
                counters.concentration_attempts += 1;
                if prior_new == f64::NEG_INFINITY {
                    continue;
                }
                let kappa_new = kappa_cur.with_entry(j, prop)?;
                let tj = state.clusters[c].g.matrix().column(j).dot(&stat[c].column(j));
                let lz_old = hypergeom::log_0f1(half_d, &kappa_cur, cfg)?;
                let lz_new = hypergeom::log_0f1(half_d, &kappa_new, cfg)?;
                let delta = (prop - old) * tj + sizes[c] as f64 * (lz_old - lz_new)
                    + prior_new
                    - prior.kappa_prior.log_density(old)
                    + (prop / old).ln(); // log-normal proposal Jacobian
                if rng.random::<f64>().ln() < delta {
                    state.clusters[c].kappa = Some(kappa_new);
                    counters.concentration_accepts += 1;
                }
            }
        }
    }

    // --- shared concentration move ---
    if prior.variant == Variant::LocationOnly && !prior.kappa_prior.is_point_mass() {
        let n: usize = sizes.iter().sum();
        for j in 0..p {
            let shared = state.shared_kappa.as_ref().expect("location-only").clone();
            let old = shared.get(j);
            let prop = old * (steps.concentration * rng.sample::<f64, _>(StandardNormal)).exp();
            let prior_new = prior.kappa_prior.log_density(prop);
            counters.concentration_attempts += 1;
            if prior_new == f64::NEG_INFINITY {
                continue;
            }
            let shared_new = shared.with_entry(j, prop)?;
            let mut tj = 0.0;
            for c in 0..k {
                tj += state.clusters[c].g.matrix().column(j).dot(&stat[c].column(j));
            }
            let lz_old = hypergeom::log_0f1(half_d, &shared, cfg)?;
            let lz_new = hypergeom::log_0f1(half_d, &shared_new, cfg)?;
            let delta = (prop - old) * tj + n as f64 * (lz_old - lz_new) + prior_new
                - prior.kappa_prior.log_density(old)
                + (prop / old).ln();
            if rng.random::<f64>().ln() < delta {
                state.shared_kappa = Some(shared_new);
                counters.concentration_accepts += 1;
            }
        }
    }
    Ok(())
}

/// Log joint density of (partition, parameters, data): CRP partition mass,
/// concentration priors (locations are uniform under normalized Haar), and
/// the kernel likelihood.
pub fn log_joint(
    state: &MixtureState,
    data: &[StiefelPoint],
    prior: &PriorSpec,
    cfg: &HypergeomConfig,
) -> Result<f64, MixtureError> {
    let n = data.len();
    let sizes = state.cluster_sizes();
    let mut total = state.clusters.len() as f64 * state.alpha.ln();
    for &s in &sizes {
        total += ln_gamma(s as f64);
    }
    for i in 0..n {
        total -= (state.alpha + i as f64).ln();
    }
    match prior.variant {
        Variant::LocationScale => {
            for c in &state.clusters {
                let kappa = c.kappa.as_ref().expect("location-scale");
                for j in 0..kappa.p() {
                    total += prior.kappa_prior.log_density(kappa.get(j));
                }
            }
        }
        Variant::LocationOnly => {
            let kappa = state.shared_kappa.as_ref().expect("location-only");
            for j in 0..kappa.p() {
                total += prior.kappa_prior.log_density(kappa.get(j));
            }
        }
    }
    for (i, &a) in state.assignments.iter().enumerate() {
        total += log_kernel(state, a, &data[i], cfg)?;
    }
    Ok(total)
}

/// Run a full chain: alternate reassignment and parameter sweeps, retain
/// every `thin`-th post-burn-in state. Deterministic given the seed.
#[allow(clippy::too_many_arguments)]
pub fn run_chain(
    data: &[StiefelPoint],
    prior: &PriorSpec,
    iters: usize,
    burn_in: usize,
    thin: usize,
    m_aux: usize,
    steps: StepSizes,
    seed: u64,
    cfg: &HypergeomConfig,
) -> Result<ChainOutput, MixtureError> {
    if iters <= burn_in {
        return Err(MixtureError::BadInput(format!(
            "iters ({iters}) must exceed burn_in ({burn_in})"
        )));
    }
    if thin == 0 {
        return Err(MixtureError::BadInput("thin must be at least 1".into()));
    }
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = init_state(data, prior, &mut rng)?;
    let mut counters = AcceptanceCounters::default();
    let mut retained = Vec::new();
    let mut joints = Vec::new();
    for it in 0..iters {
        reassign_sweep(&mut state, data, prior, m_aux, cfg, &mut rng)?;
        update_cluster_params(&mut state, data, prior, steps, cfg, &mut rng, &mut counters)?;
        if (it + 1) % 256 == 0 {
            // counter orthonormality drift from long proposal chains
            for c in &mut state.clusters {
                c.g = manifold::project(c.g.matrix())?;
            }
        }
        if it >= burn_in && (it - burn_in) % thin == 0 {
            retained.push(state.clone());
            joints.push(log_joint(&state, data, prior, cfg)?);
        }
    }
    Ok(ChainOutput {
        retained,
        log_joint: joints,
        acceptance: counters,
        seed,
        settings: ChainSettings {
            iters,
            burn_in,
            thin,
            m_aux,
            steps,
            prior: prior.clone(),
        },
        n_obs: data.len(),
    })
}

/// Counts of co-assignment across retained states; diagonal equals the
/// retained-state count, and the matrix is symmetric by construction.
pub fn coclustering_matrix(chain: &ChainOutput) -> DMatrix<u32> {
    let n = chain.n_obs;
    let mut m = DMatrix::<u32>::zeros(n, n);
    for state in &chain.retained {
        for i in 0..n {
            for j in i..n {
                if state.assignments[i] == state.assignments[j] {
                    m[(i, j)] += 1;
                    m[(j, i)] = m[(i, j)];
                }
            }
        }
    }
    for i in 0..n {
        m[(i, i)] = chain.retained.len() as u32;
    }
    m
}

/// Histogram over retained states of the number of clusters with at least
/// `min_size` members.
pub fn cluster_count_histogram(chain: &ChainOutput, min_size: usize) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for state in &chain.retained {
        let count = state
            .cluster_sizes()
            .into_iter()
            .filter(|&s| s >= min_size)
            .count();
        *hist.entry(count).or_insert(0) += 1;
    }
    hist
}

/// Retained state of highest log joint density.
pub fn map_state(chain: &ChainOutput) -> Option<&MixtureState> {
    let idx = chain
        .log_joint
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())?
        .0;
    chain.retained.get(idx)
}

/// Adjusted Rand index between two labelings of the same items: 1 for
/// identical partitions, approximately 0 for independent ones.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same items");
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for i in 0..n {
        table[a[i]][b[i]] += 1;
    }
    let choose2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut sum_cells = 0.0;
    let mut row_sums = vec![0u64; ka];
    let mut col_sums = vec![0u64; kb];
    for (i, row) in table.iter().enumerate() {
        for (j, &cell) in row.iter().enumerate() {
            sum_cells += choose2(cell);
            row_sums[i] += cell;
            col_sums[j] += cell;
        }
    }
    let sum_rows: f64 = row_sums.iter().map(|&x| choose2(x)).sum();
    let sum_cols: f64 = col_sums.iter().map(|&x| choose2(x)).sum();
    let total = choose2(n as u64);
    let expected = sum_rows * sum_cols / total;
    let max_index = (sum_rows + sum_cols) / 2.0;
    if (max_index - expected).abs() < 1e-300 {
        return 1.0; // degenerate: both partitions trivial
    }
    (sum_cells - expected) / (max_index - expected)
}
