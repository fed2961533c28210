//! MCMC samplers for both models under proper and truncated-improper
//! priors.
//!
//! A single chain is strictly sequential; chains with distinct seeds share
//! no mutable state and may run concurrently. Every sampler consumes a
//! counter-based generator (ChaCha8) with one substream per parameter
//! block, so output is reproducible regardless of thread schedule.

mod betabinom;
pub mod geweke;
mod normal;
mod slice;

pub use betabinom::{mcmc_betabinom, BetaBinomMcmc};
pub use normal::{gibbs_normal_hier, NormalHierGibbs};

use crate::error::{Error, Result};
use crate::models::{BetaBinomialParams, ModelKind, NormalHierParams, ObsVariance, PriorSpec};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Run-length and tuning configuration for one chain.
///
/// `iterations` counts total sweeps including burn-in; sweeps after
/// `burn_in` are retained at stride `thin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    #[serde(default)]
    pub step_sizes: BTreeMap<String, f64>,
}

impl ChainConfig {
    pub fn new(iterations: usize, burn_in: usize, thin: usize, seed: u64) -> Result<Self> {
        let cfg = ChainConfig {
            iterations,
            burn_in,
            thin,
            seed,
            step_sizes: BTreeMap::new(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::InvalidArgument("thin must be >= 1".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidArgument(format!(
                "burn_in {} must be below iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.retained() == 0 {
            return Err(Error::InvalidArgument(
                "configuration retains no draws".into(),
            ));
        }
        for (name, v) in &self.step_sizes {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::OutOfRange {
                    name: "step size",
                    value: *v,
                    expected: "finite and >= 0",
                });
            }
            let _ = name;
        }
        Ok(())
    }

    /// Number of retained draws.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    pub fn with_step_size(mut self, name: &str, value: f64) -> Self {
        self.step_sizes.insert(name.to_string(), value);
        self
    }

    /// Desk-scale preset: 6000 sweeps, 1000 burn-in.
    pub fn desk(seed: u64) -> Self {
        ChainConfig::new(6000, 1000, 1, seed).expect("valid preset")
    }

    /// Preset retaining 50_000 draws, the scale used for the p-value
    /// histograms.
    pub fn pivotal_survey(seed: u64) -> Self {
        ChainConfig::new(51_000, 1000, 1, seed).expect("valid preset")
    }

    /// Preset retaining 250_000 draws, the scale used for the
    /// largest-order-statistic plot.
    pub fn max_stat_survey(seed: u64) -> Self {
        ChainConfig::new(251_000, 1000, 1, seed).expect("valid preset")
    }

    /// Whether sweep `t` (1-based) is retained.
    pub(crate) fn keep(&self, t: usize) -> bool {
        t > self.burn_in && (t - self.burn_in) % self.thin == 0
    }
}

/// A chain of posterior draws together with everything needed to reproduce
/// and audit it.
#[derive(Debug, Clone, Serialize)]
pub struct PosteriorDraws<P> {
    pub model: ModelKind,
    pub draws: Vec<P>,
    /// Post-burn-in acceptance rate per Metropolis block (empty for pure
    /// Gibbs chains).
    pub acceptance_rates: BTreeMap<String, f64>,
    pub prior: PriorSpec,
    pub config: ChainConfig,
    pub data_fingerprint: u64,
    pub warnings: Vec<String>,
}

impl<P> PosteriorDraws<P> {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// The designated single draw for per-replicate diagnostics (the final
    /// retained draw, farthest from initialization).
    pub fn last_draw(&self) -> Result<&P> {
        self.draws.last().ok_or(Error::Empty("PosteriorDraws"))
    }
}

impl PosteriorDraws<NormalHierParams> {
    /// Per-draw invariant: parameters valid and inside the prior support.
    pub fn validate(&self) -> Result<()> {
        for (i, d) in self.draws.iter().enumerate() {
            d.validate()?;
            if !self.prior.normal_params_in_support(d) {
                return Err(Error::Sampler(format!(
                    "draw {i} escaped the prior support box"
                )));
            }
        }
        Ok(())
    }
}

impl PosteriorDraws<BetaBinomialParams> {
    pub fn validate(&self) -> Result<()> {
        for (i, d) in self.draws.iter().enumerate() {
            d.validate()?;
            if !self.prior.betabinom_params_in_support(d) {
                return Err(Error::Sampler(format!(
                    "draw {i} escaped the prior support box"
                )));
            }
        }
        Ok(())
    }
}

/// Flattening of a parameter record into named scalar columns, used by the
/// chain summary and the draws CSV.
pub trait ParamRecord {
    fn column_names(&self) -> Vec<String>;
    fn column_values(&self) -> Vec<f64>;
}

impl ParamRecord for NormalHierParams {
    fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.theta.len())
            .map(|i| format!("theta_{i}"))
            .collect();
        names.push("mu".into());
        names.push("tau2".into());
        match &self.sigma2 {
            ObsVariance::Shared(_) => names.push("sigma2".into()),
            ObsVariance::PerGroup(vs) => {
                names.extend((1..=vs.len()).map(|i| format!("sigma2_{i}")))
            }
        }
        names
    }

    fn column_values(&self) -> Vec<f64> {
        let mut vals = self.theta.clone();
        vals.push(self.mu);
        vals.push(self.tau2);
        match &self.sigma2 {
            ObsVariance::Shared(v) => vals.push(*v),
            ObsVariance::PerGroup(vs) => vals.extend_from_slice(vs),
        }
        vals
    }
}

impl ParamRecord for BetaBinomialParams {
    fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.p.len()).map(|i| format!("p_{i}")).collect();
        names.push("alpha".into());
        names.push("beta".into());
        names
    }

    fn column_values(&self) -> Vec<f64> {
        let mut vals = self.p.clone();
        vals.push(self.alpha);
        vals.push(self.beta);
        vals
    }
}

/// Per-parameter summary of a chain.
#[derive(Debug, Clone, Serialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub ess: f64,
    /// Set when the column is constant, in which case `ess` is reported as
    /// the chain length.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainSummary {
    pub draws: usize,
    pub params: Vec<ParamSummary>,
    pub acceptance_rates: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

/// Means, standard deviations, autocorrelation-based effective sample
/// sizes, and acceptance rates for a chain.
pub fn chain_summary<P: ParamRecord>(draws: &PosteriorDraws<P>) -> Result<ChainSummary> {
    let first = draws.draws.first().ok_or(Error::Empty("chain_summary"))?;
    let names = first.column_names();
    let n = draws.draws.len();
    let mut columns = vec![Vec::with_capacity(n); names.len()];
    for d in &draws.draws {
        let vals = d.column_values();
        if vals.len() != names.len() {
            return Err(Error::DimensionMismatch(
                "inconsistent parameter record widths in chain".into(),
            ));
        }
        for (c, v) in columns.iter_mut().zip(vals) {
            c.push(v);
        }
    }
    let params = names
        .into_iter()
        .zip(&columns)
        .map(|(name, col)| {
            let (mean, sd) = mean_sd(col);
            let (ess, degenerate) = effective_sample_size(col);
            ParamSummary {
                name,
                mean,
                sd,
                ess,
                degenerate,
            }
        })
        .collect();
    Ok(ChainSummary {
        draws: n,
        params,
        acceptance_rates: draws.acceptance_rates.clone(),
        warnings: draws.warnings.clone(),
    })
}

pub(crate) fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Autocorrelation-based effective sample size (initial positive sequence
/// estimator on lag pairs). Returns the chain length with a degeneracy
/// flag for constant chains.
pub fn effective_sample_size(x: &[f64]) -> (f64, bool) {
    let n = x.len();
    if n < 2 {
        return (n as f64, true);
    }
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let gamma = |lag: usize| -> f64 {
        (0..n - lag)
            .map(|t| (x[t] - mean) * (x[t + lag] - mean))
            .sum::<f64>()
            / nf
    };
    let g0 = gamma(0);
    if g0 <= 0.0 || !g0.is_finite() {
        return (nf, true);
    }
    // Sum Gamma_m = gamma_{2m} + gamma_{2m+1} while positive.
    let mut sum = 0.0;
    let mut m = 0usize;
    loop {
        let lag = 2 * m;
        if lag + 1 >= n || m > 1000 {
            break;
        }
        let pair = gamma(lag) + gamma(lag + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        m += 1;
    }
    let tau = (2.0 * sum / g0 - 1.0).max(1.0 / nf);
    ((nf / tau).clamp(1.0, nf), false)
}

/// Derives an independent stream seed; used for per-replicate and
/// per-chain seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x51_7c_c1_b7_27_22_0a_95)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One generator per parameter block, all derived from the chain seed.
pub(crate) fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn chain_config_validation() {
        assert!(ChainConfig::new(100, 100, 1, 0).is_err());
        assert!(ChainConfig::new(100, 10, 0, 0).is_err());
        assert!(ChainConfig::new(100, 99, 5, 0).is_err()); // retains nothing
        let c = ChainConfig::new(100, 10, 3, 0).unwrap();
        assert_eq!(c.retained(), 30);
        assert_eq!(
            (1..=100).filter(|&t| c.keep(t)).count(),
            c.retained()
        );
    }

    #[test]
    fn presets_retain_expected_counts() {
        assert_eq!(ChainConfig::pivotal_survey(0).retained(), 50_000);
        assert_eq!(ChainConfig::max_stat_survey(0).retained(), 250_000);
    }

    #[test]
    fn ess_of_iid_draws_is_near_length() {
        let mut rng = block_rng(77, 0);
        let d = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..20_000).map(|_| d.sample(&mut rng)).collect();
        let (ess, degenerate) = effective_sample_size(&x);
        assert!(!degenerate);
        assert!(
            (ess - 20_000.0).abs() < 2_000.0,
            "ess = {ess} for iid chain"
        );
    }

    #[test]
    fn ess_of_constant_chain_flags_degeneracy() {
        let x = vec![3.25; 500];
        let (ess, degenerate) = effective_sample_size(&x);
        assert!(degenerate);
        assert_eq!(ess, 500.0);
        let (_, sd) = mean_sd(&x);
        assert_eq!(sd, 0.0);
    }

    #[test]
    fn ess_detects_strong_autocorrelation() {
        let mut rng = block_rng(78, 0);
        let d = Normal::new(0.0, 1.0).unwrap();
        let mut x = vec![0.0f64];
        for _ in 1..20_000 {
            let prev = *x.last().unwrap();
            x.push(0.95 * prev + d.sample(&mut rng));
        }
        let (ess, _) = effective_sample_size(&x);
        // AR(1) with rho = 0.95 has tau = (1+rho)/(1-rho) = 39.
        assert!(ess < 2_000.0, "ess = {ess}");
    }

    #[test]
    fn two_draw_chain_mean_is_midpoint() {
        let x = [1.0, 3.0];
        let (mean, _) = mean_sd(&x);
        assert_eq!(mean, 2.0);
    }

    #[test]
    fn derive_seed_spreads() {
        let a = derive_seed(42, 0);
        let b = derive_seed(42, 1);
        let c = derive_seed(43, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(42, 0));
    }

    #[test]
    fn block_rngs_are_independent_streams() {
        let mut r0 = block_rng(1, 0);
        let mut r1 = block_rng(1, 1);
        let a: f64 = r0.random();
        let b: f64 = r1.random();
        assert_ne!(a, b);
    }
}
