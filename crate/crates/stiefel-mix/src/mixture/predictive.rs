//! Posterior predictive density: the Rao-Blackwellized average over
//! retained states of the CRP one-step-ahead mixture, with the new-cluster
//! term estimated by Monte Carlo over a pool of base-measure draws. The
//! pool is drawn once at construction and frozen, so a built
//! [`PredictiveDensity`] is a genuine fixed density — deterministic in its
//! argument and integrating to one up to the pool's Monte Carlo error.

use super::{ChainOutput, MixtureError, PriorSpec, Variant};
use crate::hypergeom::{self, Concentration, HypergeomConfig};
use crate::manifold::{self, StiefelPoint};
use crate::numeric::logsumexp;
use rand::Rng;

/// One retained state, flattened for evaluation: per-cluster location,
/// concentration, size, and the state's shared concentration if any.
struct StateSnapshot {
    clusters: Vec<(StiefelPoint, Concentration, usize)>,
    /// log normalizer per cluster, precomputed
    log_z: Vec<f64>,
    /// shared concentration (location-only variant), for the base term
    shared: Option<Concentration>,
}

pub struct PredictiveDensity {
    d: usize,
    p: usize,
    alpha: f64,
    n_obs: usize,
    states: Vec<StateSnapshot>,
    /// frozen base-measure pool: locations, plus concentrations in the
    /// location-scale variant (location-only reuses each state's shared)
    pool_g: Vec<StiefelPoint>,
    pool_kappa: Option<Vec<Concentration>>,
    /// log normalizer per pool concentration (location-scale)
    pool_log_z: Option<Vec<f64>>,
    cfg: HypergeomConfig,
}

fn tilt(g: &StiefelPoint, kappa: &Concentration, x: &StiefelPoint) -> f64 {
    let mut t = 0.0;
    for j in 0..kappa.p() {
        t += kappa.get(j) * g.column_dot(x, j);
    }
    t
}

impl PredictiveDensity {
    /// Build from a completed chain. `pool_size` is the fixed Monte Carlo
    /// budget for the new-cluster (base measure) term.
    pub fn new<R: Rng + ?Sized>(
        chain: &ChainOutput,
        prior: &PriorSpec,
        pool_size: usize,
        rng: &mut R,
        cfg: &HypergeomConfig,
    ) -> Result<Self, MixtureError> {
        if chain.retained.is_empty() {
            return Err(MixtureError::BadInput("chain has no retained states".into()));
        }
        if pool_size == 0 {
            return Err(MixtureError::BadInput("pool_size must be positive".into()));
        }
        let first = &chain.retained[0].clusters[0].g;
        let (d, p) = (first.d(), first.p());
        let half_d = d as f64 / 2.0;

        let mut states = Vec::with_capacity(chain.retained.len());
        for state in &chain.retained {
            let sizes = state.cluster_sizes();
            let mut clusters = Vec::with_capacity(state.clusters.len());
            let mut log_z = Vec::with_capacity(state.clusters.len());
            for (c, cl) in state.clusters.iter().enumerate() {
                let kappa = state.kappa_of(c)?.clone();
                log_z.push(hypergeom::log_0f1(half_d, &kappa, cfg)?);
                clusters.push((cl.g.clone(), kappa, sizes[c]));
            }
            states.push(StateSnapshot {
                clusters,
                log_z,
                shared: state.shared_kappa.clone(),
            });
        }

        let pool_g: Vec<StiefelPoint> = (0..pool_size)
            .map(|_| manifold::sample_haar(d, p, rng))
            .collect::<Result<_, _>>()?;
        let (pool_kappa, pool_log_z) = match prior.variant {
            Variant::LocationScale => {
                let ks: Vec<Concentration> = (0..pool_size)
                    .map(|_| {
                        let v: Vec<f64> =
                            (0..p).map(|_| prior.kappa_prior.sample_one(rng)).collect();
                        Concentration::new(v)
                    })
                    .collect::<Result<_, _>>()?;
                let lz: Vec<f64> = ks
                    .iter()
                    .map(|k| hypergeom::log_0f1(half_d, k, cfg))
                    .collect::<Result<_, _>>()?;
                (Some(ks), Some(lz))
            }
            Variant::LocationOnly => (None, None),
        };

        Ok(PredictiveDensity {
            d,
            p,
            alpha: prior.alpha,
            n_obs: chain.n_obs,
            states,
            pool_g,
            pool_kappa,
            pool_log_z,
            cfg: cfg.clone(),
        })
    }

    /// Prior-only predictive (no data): just the base-measure marginal.
    pub fn prior_only<R: Rng + ?Sized>(
        d: usize,
        p: usize,
        prior: &PriorSpec,
        pool_size: usize,
        rng: &mut R,
        cfg: &HypergeomConfig,
    ) -> Result<Self, MixtureError> {
        if pool_size == 0 {
            return Err(MixtureError::BadInput("pool_size must be positive".into()));
        }
        let half_d = d as f64 / 2.0;
        let pool_g: Vec<StiefelPoint> = (0..pool_size)
            .map(|_| manifold::sample_haar(d, p, rng))
            .collect::<Result<_, _>>()?;
        let ks: Vec<Concentration> = (0..pool_size)
            .map(|_| {
                let v: Vec<f64> = (0..p).map(|_| prior.kappa_prior.sample_one(rng)).collect();
                Concentration::new(v)
            })
            .collect::<Result<_, _>>()?;
        let lz: Vec<f64> = ks
            .iter()
            .map(|k| hypergeom::log_0f1(half_d, k, cfg))
            .collect::<Result<_, _>>()?;
        Ok(PredictiveDensity {
            d,
            p,
            alpha: prior.alpha,
            n_obs: 0,
            states: Vec::new(),
            pool_g,
            pool_kappa: Some(ks),
            pool_log_z: Some(lz),
            cfg: cfg.clone(),
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// log of the Monte Carlo base-measure marginal at x, optionally with a
    /// state-specific shared concentration.
    fn log_base(&self, x: &StiefelPoint, shared: Option<&Concentration>) -> Result<f64, MixtureError> {
        let b = self.pool_g.len() as f64;
        let mut terms = Vec::with_capacity(self.pool_g.len());
        match (&self.pool_kappa, shared) {
            (Some(ks), _) => {
                let lz = self.pool_log_z.as_ref().expect("built together");
                for (i, g) in self.pool_g.iter().enumerate() {
                    terms.push(tilt(g, &ks[i], x) - lz[i]);
                }
            }
            (None, Some(kappa)) => {
                let lz = hypergeom::log_0f1(self.d as f64 / 2.0, kappa, &self.cfg)?;
                for g in &self.pool_g {
                    terms.push(tilt(g, kappa, x) - lz);
                }
            }
            (None, None) => {
                return Err(MixtureError::InvalidState(
                    "location-only predictive needs a shared concentration".into(),
                ));
            }
        }
        Ok(logsumexp(&terms) - b.ln())
    }

    /// Log predictive density at x (with respect to normalized Haar).
    pub fn log_density(&self, x: &StiefelPoint) -> Result<f64, MixtureError> {
        if x.d() != self.d || x.p() != self.p {
            return Err(MixtureError::BadInput(format!(
                "point is {}x{}, predictive is over {}x{}",
                x.d(),
                x.p(),
                self.d,
                self.p
            )));
        }
        if self.states.is_empty() {
            return self.log_base(x, None);
        }
        let denom = (self.n_obs as f64 + self.alpha).ln();
        let mut per_state = Vec::with_capacity(self.states.len());
        let mut terms = Vec::new();
        for st in &self.states {
            terms.clear();
            for (c, (g, kappa, size)) in st.clusters.iter().enumerate() {
                terms.push((*size as f64).ln() + tilt(g, kappa, x) - st.log_z[c]);
            }
            terms.push(self.alpha.ln() + self.log_base(x, st.shared.as_ref())?);
            per_state.push(logsumexp(&terms) - denom);
        }
        Ok(logsumexp(&per_state) - (self.states.len() as f64).ln())
    }
}

/// Convenience wrapper: build a fresh predictive (new pool every call) and
/// evaluate it once.
pub fn log_predictive<R: Rng + ?Sized>(
    x: &StiefelPoint,
    chain: &ChainOutput,
    prior: &PriorSpec,
    pool_size: usize,
    rng: &mut R,
    cfg: &HypergeomConfig,
) -> Result<f64, MixtureError> {
    PredictiveDensity::new(chain, prior, pool_size, rng, cfg)?.log_density(x)
}

#[cfg(test)]
mod tests {
    use super::super::{run_chain, KappaPrior, StepSizes, Variant};
    use super::*;
    use crate::langevin::{self, LangevinParams};
    use crate::numeric::Welford;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn prior_only_point_mass_at_zero_is_uniform() {
        let cfg = HypergeomConfig::default();
        let mut r = rng(1);
        let prior = PriorSpec::new(
            1.0,
            KappaPrior::PointMass { value: 0.0 },
            Variant::LocationScale,
        )
        .unwrap();
        let pred = PredictiveDensity::prior_only(3, 2, &prior, 64, &mut r, &cfg).unwrap();
        for _ in 0..10 {
            let x = manifold::sample_haar(3, 2, &mut r).unwrap();
            assert_eq!(pred.log_density(&x).unwrap(), 0.0);
        }
    }

    fn three_component_data(r: &mut ChaCha8Rng, per: usize, kappa: f64) -> (Vec<StiefelPoint>, Vec<StiefelPoint>) {
        let mut data = Vec::new();
        let mut modes = Vec::new();
        for _ in 0..3 {
            let g = manifold::sample_haar(3, 2, r).unwrap();
            let params = LangevinParams::new(
                g.clone(),
                Concentration::new(vec![kappa, kappa]).unwrap(),
            )
            .unwrap();
            for _ in 0..per {
                data.push(langevin::sample(&params, r).unwrap().0);
            }
            modes.push(g);
        }
        (data, modes)
    }

    #[test]
    fn predictive_integrates_to_one_and_peaks_at_components() {
        let cfg = HypergeomConfig::default();
        let mut r = rng(2);
        let (data, modes) = three_component_data(&mut r, 8, 12.0);
        let prior = PriorSpec::new(
            1.0,
            KappaPrior::TruncatedExponential { rate: 1.0, lower: 5.0 },
            Variant::LocationScale,
        )
        .unwrap();
        let chain = run_chain(&data, &prior, 300, 100, 10, 3, StepSizes::default(), 7, &cfg).unwrap();
        assert_eq!(chain.retained.len(), 20);
        let pred = PredictiveDensity::new(&chain, &prior, 128, &mut r, &cfg).unwrap();

        let mut acc = Welford::default();
        for _ in 0..20_000 {
            let x = manifold::sample_haar(3, 2, &mut r).unwrap();
            acc.push(pred.log_density(&x).unwrap().exp());
        }
        let (est, se) = (acc.mean(), acc.std_error());
        assert!(
            (est - 1.0).abs() <= 3.0 * se,
            "predictive integral {est} +- {se}"
        );

        // density at the true component locations dominates a Haar point
        let haar_point = manifold::sample_haar(3, 2, &mut r).unwrap();
        let at_haar = pred.log_density(&haar_point).unwrap();
        for (i, m) in modes.iter().enumerate() {
            let at_mode = pred.log_density(m).unwrap();
            assert!(
                at_mode > at_haar,
                "mode {i}: predictive {at_mode} not above Haar point {at_haar}"
            );
        }
    }

    #[test]
    fn frozen_pool_makes_evaluation_deterministic() {
        let cfg = HypergeomConfig::default();
        let mut r = rng(3);
        let (data, _) = three_component_data(&mut r, 4, 10.0);
        let prior = PriorSpec::new(
            1.0,
            KappaPrior::TruncatedExponential { rate: 1.0, lower: 5.0 },
            Variant::LocationOnly,
        )
        .unwrap();
        let chain = run_chain(&data, &prior, 60, 20, 4, 3, StepSizes::default(), 11, &cfg).unwrap();
        let pred = PredictiveDensity::new(&chain, &prior, 32, &mut r, &cfg).unwrap();
        let x = manifold::sample_haar(3, 2, &mut r).unwrap();
        let a = pred.log_density(&x).unwrap();
        let b = pred.log_density(&x).unwrap();
        assert_eq!(a, b);
        assert!(a.is_finite());
    }
}
