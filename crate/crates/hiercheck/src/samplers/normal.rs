//! Gibbs sampler for the normal-normal hierarchy.
//!
//! theta and mu have exact normal full conditionals (mu truncated to
//! (-a, a) by inverse-CDF sampling under the improper prior); sigma2 and
//! tau2 have inverse-gamma-form conditionals, drawn directly under the
//! proper prior and by bounded slice sampling on (1/a, a) under the
//! truncated improper prior.

use super::slice::slice_sample_bounded;
use super::{block_rng, ChainConfig, PosteriorDraws};
use crate::error::{Error, Result};
use crate::models::{GroupedNormalData, ModelKind, NormalHierParams, ObsVariance, PriorSpec};
use crate::special::{phi_raw, std_normal_quantile, Probability};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeMap;

const BLOCK_THETA: u64 = 1;
const BLOCK_MU: u64 = 2;
const BLOCK_SIGMA: u64 = 3;
const BLOCK_TAU: u64 = 4;

/// Builder for the Gibbs chain; any of mu, tau2, sigma2 can be pinned to a
/// known value, which is how the conjugate toys and known-variance setups
/// are expressed.
pub struct NormalHierGibbs<'a> {
    data: &'a GroupedNormalData,
    prior: PriorSpec,
    config: ChainConfig,
    fixed_mu: Option<f64>,
    fixed_tau2: Option<f64>,
    fixed_sigma2: Option<ObsVariance>,
}

/// Runs the Gibbs sampler with all hierarchy parameters free.
pub fn gibbs_normal_hier(
    data: &GroupedNormalData,
    prior: &PriorSpec,
    config: &ChainConfig,
) -> Result<PosteriorDraws<NormalHierParams>> {
    NormalHierGibbs::new(data, prior, config)?.run()
}

impl<'a> NormalHierGibbs<'a> {
    pub fn new(data: &'a GroupedNormalData, prior: &PriorSpec, config: &ChainConfig) -> Result<Self> {
        if !prior.is_normal_kind() {
            return Err(Error::UnsupportedPrior(format!(
                "{} is not a normal-hier prior",
                prior.kind_name()
            )));
        }
        config.validate()?;
        Ok(NormalHierGibbs {
            data,
            prior: prior.clone(),
            config: config.clone(),
            fixed_mu: None,
            fixed_tau2: None,
            fixed_sigma2: None,
        })
    }

    pub fn fix_mu(mut self, mu: f64) -> Self {
        self.fixed_mu = Some(mu);
        self
    }

    pub fn fix_tau2(mut self, tau2: f64) -> Self {
        self.fixed_tau2 = Some(tau2);
        self
    }

    pub fn fix_sigma2(mut self, sigma2: ObsVariance) -> Self {
        self.fixed_sigma2 = Some(sigma2);
        self
    }

    pub fn run(self) -> Result<PosteriorDraws<NormalHierParams>> {
        let n_groups = self.data.group_count();
        if self.fixed_tau2.is_none() && n_groups < 2 {
            return Err(Error::InvalidArgument(
                "sampling tau2 requires at least two groups; fix tau2 for single-group data"
                    .into(),
            ));
        }
        if let Some(s) = &self.fixed_sigma2 {
            s.validate(n_groups)?;
        }
        if let Some(t) = self.fixed_tau2 {
            if !t.is_finite() || t <= 0.0 {
                return Err(Error::OutOfRange {
                    name: "fixed tau2",
                    value: t,
                    expected: "> 0",
                });
            }
        }
        let mut core = NormalGibbsCore::new(
            self.data,
            self.prior.clone(),
            self.config.seed,
            self.fixed_mu,
            self.fixed_tau2,
            self.fixed_sigma2.clone(),
        )?;
        let mut draws = Vec::with_capacity(self.config.retained());
        for t in 1..=self.config.iterations {
            core.sweep(self.data)?;
            if self.config.keep(t) {
                draws.push(core.params());
            }
        }
        Ok(PosteriorDraws {
            model: ModelKind::NormalHier,
            draws,
            acceptance_rates: BTreeMap::new(),
            prior: self.prior,
            config: self.config,
            data_fingerprint: self.data.fingerprint(),
            warnings: Vec::new(),
        })
    }
}

/// Sweepable state; also driven directly by the Geweke harness.
pub(crate) struct NormalGibbsCore {
    prior: PriorSpec,
    fixed_mu: Option<f64>,
    fixed_tau2: Option<f64>,
    sigma_sampled: bool,
    pub(crate) theta: Vec<f64>,
    pub(crate) mu: f64,
    pub(crate) tau2: f64,
    pub(crate) sigma2: ObsVariance,
    rng_theta: ChaCha8Rng,
    rng_mu: ChaCha8Rng,
    rng_sigma: ChaCha8Rng,
    rng_tau: ChaCha8Rng,
}

impl NormalGibbsCore {
    pub(crate) fn new(
        data: &GroupedNormalData,
        prior: PriorSpec,
        seed: u64,
        fixed_mu: Option<f64>,
        fixed_tau2: Option<f64>,
        fixed_sigma2: Option<ObsVariance>,
    ) -> Result<Self> {
        let means = data.group_means();
        let n_groups = means.len();
        let grand = means.iter().sum::<f64>() / n_groups as f64;
        let box_bounds = match &prior {
            PriorSpec::TruncatedImproperNormal { a } => Some((1.0 / a, *a, *a)),
            _ => None,
        };

        let mu0 = fixed_mu.unwrap_or_else(|| match box_bounds {
            Some((_, _, a)) => grand.clamp(-0.99 * a, 0.99 * a),
            None => grand,
        });

        let between = if n_groups > 1 {
            means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (n_groups as f64 - 1.0)
        } else {
            1.0
        };
        let tau20 = fixed_tau2.unwrap_or_else(|| clamp_to_box(between.max(1e-3), box_bounds));

        let sigma_sampled = fixed_sigma2.is_none();
        let sigma20 = match fixed_sigma2 {
            Some(s) => s,
            None => {
                let mut sse = 0.0;
                let mut df = 0.0;
                for (g, m) in data.groups().iter().zip(&means) {
                    for &y in g {
                        sse += (y - m).powi(2);
                    }
                    df += (g.len() - 1) as f64;
                }
                let pooled = if df > 0.0 { sse / df } else { 1.0 };
                ObsVariance::Shared(clamp_to_box(pooled.max(1e-3), box_bounds))
            }
        };

        // Fixed values must sit inside the truncation box or the support
        // check can never pass.
        if let Some((lo, hi, a)) = box_bounds {
            if let Some(m) = fixed_mu {
                if m <= -a || m >= a {
                    return Err(Error::Sampler(format!(
                        "fixed mu {m} lies outside the truncation box (-{a}, {a})"
                    )));
                }
            }
            if let Some(t) = fixed_tau2 {
                if t <= lo || t >= hi {
                    return Err(Error::Sampler(format!(
                        "fixed tau2 {t} lies outside the truncation box ({lo}, {hi})"
                    )));
                }
            }
        }

        Ok(NormalGibbsCore {
            prior,
            fixed_mu,
            fixed_tau2,
            sigma_sampled,
            theta: means,
            mu: mu0,
            tau2: tau20,
            sigma2: sigma20,
            rng_theta: block_rng(seed, BLOCK_THETA),
            rng_mu: block_rng(seed, BLOCK_MU),
            rng_sigma: block_rng(seed, BLOCK_SIGMA),
            rng_tau: block_rng(seed, BLOCK_TAU),
        })
    }

    pub(crate) fn params(&self) -> NormalHierParams {
        NormalHierParams {
            theta: self.theta.clone(),
            mu: self.mu,
            tau2: self.tau2,
            sigma2: self.sigma2.clone(),
        }
    }

    pub(crate) fn set_state(&mut self, theta: Vec<f64>, mu: f64, tau2: f64, sigma2: ObsVariance) {
        self.theta = theta;
        self.mu = mu;
        self.tau2 = tau2;
        self.sigma2 = sigma2;
    }

    pub(crate) fn sweep(&mut self, data: &GroupedNormalData) -> Result<()> {
        self.update_theta(data);
        self.update_mu()?;
        if self.sigma_sampled {
            self.update_sigma2(data)?;
        }
        if self.fixed_tau2.is_none() {
            self.update_tau2()?;
        }
        Ok(())
    }

    fn update_theta(&mut self, data: &GroupedNormalData) {
        for (i, group) in data.groups().iter().enumerate() {
            let n = group.len() as f64;
            let s2 = self.sigma2.for_group(i);
            let ybar = group.iter().sum::<f64>() / n;
            let precision = n / s2 + 1.0 / self.tau2;
            let mean = (n * ybar / s2 + self.mu / self.tau2) / precision;
            let sd = precision.recip().sqrt();
            self.theta[i] = Normal::new(mean, sd).expect("positive sd").sample(&mut self.rng_theta);
        }
    }

    fn update_mu(&mut self) -> Result<()> {
        if let Some(m) = self.fixed_mu {
            self.mu = m;
            return Ok(());
        }
        let i_count = self.theta.len() as f64;
        let theta_bar = self.theta.iter().sum::<f64>() / i_count;
        match &self.prior {
            PriorSpec::ProperNormal { mu_mean, mu_var, .. } => {
                let v = 1.0 / (i_count / self.tau2 + 1.0 / mu_var);
                let mean = v * (i_count * theta_bar / self.tau2 + mu_mean / mu_var);
                self.mu = Normal::new(mean, v.sqrt())
                    .expect("positive sd")
                    .sample(&mut self.rng_mu);
            }
            PriorSpec::TruncatedImproperNormal { a } => {
                let mean = theta_bar;
                let sd = (self.tau2 / i_count).sqrt();
                self.mu =
                    truncated_normal_inverse_cdf(mean, sd, -a, *a, &mut self.rng_mu).map_err(
                        |_| {
                            Error::Sampler(format!(
                            "truncation interval (-{a}, {a}) holds no posterior mass for mu; \
                             the prior box is too narrow for these data"
                        ))
                        },
                    )?;
            }
            _ => unreachable!("prior kind checked at construction"),
        }
        Ok(())
    }

    fn update_sigma2(&mut self, data: &GroupedNormalData) -> Result<()> {
        let mut sse = 0.0;
        let mut count = 0.0;
        for (i, group) in data.groups().iter().enumerate() {
            for &y in group {
                sse += (y - self.theta[i]).powi(2);
            }
            count += group.len() as f64;
        }
        match &self.prior {
            PriorSpec::ProperNormal {
                sigma2_shape,
                sigma2_scale,
                ..
            } => {
                let v = crate::models::sample_inv_gamma(
                    sigma2_shape + count / 2.0,
                    sigma2_scale + sse / 2.0,
                    &mut self.rng_sigma,
                )?;
                self.sigma2 = ObsVariance::Shared(v);
            }
            PriorSpec::TruncatedImproperNormal { a } => {
                // Density prop. to v^-(count/2 + 1) exp(-sse/(2v)) on (1/a, a).
                let shape = count / 2.0 + 1.0;
                let logf = |v: f64| -shape * v.ln() - sse / (2.0 * v);
                let current = match self.sigma2 {
                    ObsVariance::Shared(v) => v,
                    ObsVariance::PerGroup(_) => unreachable!("per-group sigma is never sampled"),
                };
                let v =
                    slice_sample_bounded(logf, current, 1.0 / a, *a, &mut self.rng_sigma)?;
                self.sigma2 = ObsVariance::Shared(v);
            }
            _ => unreachable!(),
        }
        Ok(())
    }

    fn update_tau2(&mut self) -> Result<()> {
        let i_count = self.theta.len() as f64;
        let s: f64 = self.theta.iter().map(|t| (t - self.mu).powi(2)).sum();
        match &self.prior {
            PriorSpec::ProperNormal {
                tau2_shape,
                tau2_scale,
                ..
            } => {
                self.tau2 = crate::models::sample_inv_gamma(
                    tau2_shape + i_count / 2.0,
                    tau2_scale + s / 2.0,
                    &mut self.rng_tau,
                )?;
            }
            PriorSpec::TruncatedImproperNormal { a } => {
                // Prior (tau2)^(-1/2) times the normal likelihood gives
                // density prop. to v^-((I+1)/2) exp(-s/(2v)) on (1/a, a).
                let shape = (i_count + 1.0) / 2.0;
                let logf = |v: f64| -shape * v.ln() - s / (2.0 * v);
                self.tau2 =
                    slice_sample_bounded(logf, self.tau2, 1.0 / a, *a, &mut self.rng_tau)?;
            }
            _ => unreachable!(),
        }
        Ok(())
    }
}

fn clamp_to_box(v: f64, box_bounds: Option<(f64, f64, f64)>) -> f64 {
    match box_bounds {
        Some((lo, hi, _)) => v.clamp(lo * 1.000001, hi * 0.999999),
        None => v,
    }
}

/// Exact draw from N(mean, sd^2) truncated to (lo, hi) by inversion.
fn truncated_normal_inverse_cdf<R: Rng>(
    mean: f64,
    sd: f64,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<f64> {
    let p_lo = phi_raw((lo - mean) / sd);
    let p_hi = phi_raw((hi - mean) / sd);
    let mass = p_hi - p_lo;
    if !(mass > 1e-290) {
        return Err(Error::Sampler("empty truncation interval".into()));
    }
    let u: f64 = rng.random();
    let p = (p_lo + u * mass).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
    let z = std_normal_quantile(Probability::new(p)?)?;
    Ok((mean + sd * z).clamp(lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::chain_summary;

    fn single_group_toy() -> GroupedNormalData {
        GroupedNormalData::new(vec![vec![2.0]]).unwrap()
    }

    #[test]
    fn conjugate_single_observation_posterior() {
        // theta ~ N(0, 1), y | theta ~ N(theta, 1), y = 2: posterior is
        // N(1, 1/2).
        let data = single_group_toy();
        let prior = PriorSpec::proper_normal(0.0, 1.0, 2.0, 2.0, 2.0, 2.0).unwrap();
        let config = ChainConfig::new(101_000, 1000, 1, 42).unwrap();
        let draws = NormalHierGibbs::new(&data, &prior, &config)
            .unwrap()
            .fix_mu(0.0)
            .fix_tau2(1.0)
            .fix_sigma2(ObsVariance::Shared(1.0))
            .run()
            .unwrap();
        assert_eq!(draws.len(), 100_000);
        let thetas: Vec<f64> = draws.draws.iter().map(|d| d.theta[0]).collect();
        let n = thetas.len() as f64;
        let mean = thetas.iter().sum::<f64>() / n;
        let var = thetas.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        assert!((var - 0.5).abs() < 0.02, "var {var}");
    }

    #[test]
    fn same_seed_gives_bit_identical_chains() {
        let data =
            GroupedNormalData::new(vec![vec![1.0, 2.0], vec![-0.5, 0.5], vec![3.0, 2.1]]).unwrap();
        let prior = PriorSpec::truncated_improper_normal(100.0).unwrap();
        let config = ChainConfig::new(500, 100, 2, 7).unwrap();
        let a = gibbs_normal_hier(&data, &prior, &config).unwrap();
        let b = gibbs_normal_hier(&data, &prior, &config).unwrap();
        assert_eq!(a.draws.len(), b.draws.len());
        for (x, y) in a.draws.iter().zip(&b.draws) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn draws_stay_inside_prior_box() {
        let data =
            GroupedNormalData::new(vec![vec![0.4, 1.2, 0.1], vec![-1.0, -0.2], vec![2.0, 1.4]])
                .unwrap();
        let prior = PriorSpec::truncated_improper_normal(50.0).unwrap();
        let config = ChainConfig::new(2000, 200, 1, 3).unwrap();
        let draws = gibbs_normal_hier(&data, &prior, &config).unwrap();
        draws.validate().unwrap();
    }

    #[test]
    fn free_tau2_requires_two_groups() {
        let data = single_group_toy();
        let prior = PriorSpec::truncated_improper_normal(100.0).unwrap();
        let config = ChainConfig::desk(0);
        assert!(gibbs_normal_hier(&data, &prior, &config).is_err());
    }

    #[test]
    fn narrow_mu_box_reports_degeneracy() {
        // Data far outside a tiny box: the mu conditional has no mass there.
        let data = GroupedNormalData::new(vec![vec![5000.0; 40], vec![5000.1; 40]]).unwrap();
        let prior = PriorSpec::truncated_improper_normal(1.001).unwrap();
        let config = ChainConfig::new(200, 100, 1, 1).unwrap();
        let r = gibbs_normal_hier(&data, &prior, &config)
            .unwrap_err();
        assert!(matches!(r, Error::Sampler(_)), "got {r:?}");
    }

    #[test]
    fn conjugate_mu_posterior_with_fixed_variances() {
        // tau2 and sigma2 fixed, proper prior on mu: the marginal posterior
        // of mu is normal with closed-form moments.
        let data = GroupedNormalData::new(vec![
            vec![1.2, 0.8, 1.5],
            vec![-0.3, 0.1, 0.4],
            vec![2.2, 1.9, 2.4],
            vec![0.6, 0.9, 0.2],
        ])
        .unwrap();
        let tau2 = 0.8;
        let sigma2 = 0.5;
        let (m0, v0) = (0.0, 4.0);
        let prior = PriorSpec::proper_normal(m0, v0, 2.0, 2.0, 2.0, 2.0).unwrap();
        let config = ChainConfig::new(60_000, 2000, 1, 11).unwrap();
        let draws = NormalHierGibbs::new(&data, &prior, &config)
            .unwrap()
            .fix_tau2(tau2)
            .fix_sigma2(ObsVariance::Shared(sigma2))
            .run()
            .unwrap();

        // Closed form: ybar_i ~ N(mu, tau2 + sigma2/n_i).
        let mut prec = 1.0 / v0;
        let mut wsum = m0 / v0;
        for (g, m) in data.groups().iter().zip(data.group_means()) {
            let v = tau2 + sigma2 / g.len() as f64;
            prec += 1.0 / v;
            wsum += m / v;
        }
        let post_var = 1.0 / prec;
        let post_mean = post_var * wsum;

        let summary = chain_summary(&draws).unwrap();
        let mu = summary.params.iter().find(|p| p.name == "mu").unwrap();
        let mcse = mu.sd / mu.ess.sqrt();
        assert!(
            (mu.mean - post_mean).abs() < 3.0 * mcse,
            "mu mean {} vs {} (mcse {mcse})",
            mu.mean,
            post_mean
        );
        assert!(
            (mu.sd.powi(2) - post_var).abs() < 3.0 * post_var * (2.0 / mu.ess).sqrt(),
            "mu var {} vs {}",
            mu.sd.powi(2),
            post_var
        );
    }

    #[test]
    fn per_group_known_variances_are_passed_through() {
        let data = GroupedNormalData::new(vec![vec![1.0, 2.0], vec![0.0, 0.4, 0.9]]).unwrap();
        let prior = PriorSpec::truncated_improper_normal(100.0).unwrap();
        let config = ChainConfig::new(300, 100, 1, 5).unwrap();
        let sigmas = ObsVariance::PerGroup(vec![0.7, 1.3]);
        let draws = NormalHierGibbs::new(&data, &prior, &config)
            .unwrap()
            .fix_sigma2(sigmas.clone())
            .run()
            .unwrap();
        for d in &draws.draws {
            assert_eq!(d.sigma2, sigmas);
        }
    }
}
