//! Data containers, likelihoods, and prior densities for the two
//! hierarchical models, plus forward simulation from each stage.
//!
//! All log-density functions are pure and return the distinguished
//! [`LOG_ZERO`] sentinel (never an arithmetic overflow) outside a prior's
//! support.

use crate::error::{Error, Result};
use crate::special::{beta_logpdf, ln_gamma, std_normal_logpdf};
use rand::Rng;
use rand_distr::{Beta as BetaDist, Binomial, Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

/// Distinguished "log of zero density" sentinel.
pub const LOG_ZERO: f64 = f64::NEG_INFINITY;

/// Which of the two supported models a value belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    NormalHier,
    BetaBinom,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::NormalHier => "normal-hier",
            ModelKind::BetaBinom => "beta-binom",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal-hier" => Ok(ModelKind::NormalHier),
            "beta-binom" => Ok(ModelKind::BetaBinom),
            other => Err(Error::InvalidArgument(format!(
                "unknown model kind `{other}` (expected normal-hier or beta-binom)"
            ))),
        }
    }
}

/// Observations for the normal-normal hierarchical model: a set of groups,
/// each a nonempty sequence of real observations.
///
/// A single group is accepted so the conjugate single-group toys work; the
/// samplers additionally require at least two groups whenever the
/// second-stage parameters are free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedNormalData {
    groups: Vec<Vec<f64>>,
}

impl GroupedNormalData {
    pub fn new(groups: Vec<Vec<f64>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Empty("GroupedNormalData needs at least one group"));
        }
        for (i, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::InvalidArgument(format!("group {} is empty", i + 1)));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("GroupedNormalData observation"));
            }
        }
        Ok(GroupedNormalData { groups })
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[Vec<f64>] {
        &self.groups
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    pub fn total_count(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn group_means(&self) -> Vec<f64> {
        self.groups
            .iter()
            .map(|g| g.iter().sum::<f64>() / g.len() as f64)
            .collect()
    }

    /// Stable 64-bit content hash (FNV-1a over the IEEE bit patterns).
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        h.write_u64(self.groups.len() as u64);
        for g in &self.groups {
            h.write_u64(g.len() as u64);
            for &v in g {
                h.write_u64(v.to_bits());
            }
        }
        h.finish()
    }
}

/// One beta-binomial unit: `successes` out of `trials`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BetaBinomialUnit {
    pub trials: u64,
    pub successes: u64,
}

/// Counts for the beta-binomial model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaBinomialData {
    units: Vec<BetaBinomialUnit>,
}

impl BetaBinomialData {
    pub fn new(units: Vec<BetaBinomialUnit>) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::Empty("BetaBinomialData needs at least one unit"));
        }
        for (i, u) in units.iter().enumerate() {
            if u.trials == 0 {
                return Err(Error::InvalidArgument(format!(
                    "unit {} has zero trials",
                    i + 1
                )));
            }
            if u.successes > u.trials {
                return Err(Error::InvalidArgument(format!(
                    "unit {}: successes {} exceed trials {}",
                    i + 1,
                    u.successes,
                    u.trials
                )));
            }
        }
        Ok(BetaBinomialData { units })
    }

    pub fn unit_count(&self) -> usize {
        self.units.len()
    }

    pub fn units(&self) -> &[BetaBinomialUnit] {
        &self.units
    }

    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        h.write_u64(self.units.len() as u64);
        for u in &self.units {
            h.write_u64(u.trials);
            h.write_u64(u.successes);
        }
        h.finish()
    }
}

/// Observation variance: one shared sampled value, or known per-group
/// values supplied as input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObsVariance {
    Shared(f64),
    PerGroup(Vec<f64>),
}

impl ObsVariance {
    pub fn validate(&self, n_groups: usize) -> Result<()> {
        match self {
            ObsVariance::Shared(v) => {
                if !v.is_finite() || *v <= 0.0 {
                    return Err(Error::OutOfRange {
                        name: "sigma2",
                        value: *v,
                        expected: "> 0",
                    });
                }
            }
            ObsVariance::PerGroup(vs) => {
                if vs.len() != n_groups {
                    return Err(Error::DimensionMismatch(format!(
                        "sigma2 has {} entries for {} groups",
                        vs.len(),
                        n_groups
                    )));
                }
                if vs.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                    return Err(Error::OutOfRange {
                        name: "sigma2 entry",
                        value: f64::NAN,
                        expected: "> 0",
                    });
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn for_group(&self, i: usize) -> f64 {
        match self {
            ObsVariance::Shared(v) => *v,
            ObsVariance::PerGroup(vs) => vs[i],
        }
    }
}

/// Parameters of the normal-normal hierarchy: group means `theta`, second
/// stage mean `mu` and variance `tau2`, observation variance `sigma2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalHierParams {
    pub theta: Vec<f64>,
    pub mu: f64,
    pub tau2: f64,
    pub sigma2: ObsVariance,
}

impl NormalHierParams {
    pub fn new(theta: Vec<f64>, mu: f64, tau2: f64, sigma2: ObsVariance) -> Result<Self> {
        let p = NormalHierParams {
            theta,
            mu,
            tau2,
            sigma2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.is_empty() {
            return Err(Error::Empty("theta"));
        }
        if self.theta.iter().any(|v| !v.is_finite()) || !self.mu.is_finite() {
            return Err(Error::NonFinite("NormalHierParams"));
        }
        if !self.tau2.is_finite() || self.tau2 <= 0.0 {
            return Err(Error::OutOfRange {
                name: "tau2",
                value: self.tau2,
                expected: "> 0",
            });
        }
        self.sigma2.validate(self.theta.len())
    }

    pub fn tau(&self) -> f64 {
        self.tau2.sqrt()
    }
}

/// Parameters of the beta-binomial hierarchy: unit rates `p` and the
/// second-stage Beta shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaBinomialParams {
    pub p: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
}

impl BetaBinomialParams {
    pub fn new(p: Vec<f64>, alpha: f64, beta: f64) -> Result<Self> {
        let params = BetaBinomialParams { p, alpha, beta };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p.is_empty() {
            return Err(Error::Empty("p"));
        }
        if self.p.iter().any(|v| !(0.0 < *v && *v < 1.0)) {
            return Err(Error::OutOfRange {
                name: "p entry",
                value: f64::NAN,
                expected: "(0, 1) exclusive",
            });
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0 && self.beta.is_finite() && self.beta > 0.0)
        {
            return Err(Error::OutOfRange {
                name: "alpha/beta",
                value: self.alpha.min(self.beta),
                expected: "> 0",
            });
        }
        Ok(())
    }
}

/// How the beta-binomial hyperprior behaves inside its truncation box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HyperDensity {
    /// Stand-in pi(alpha, beta) proportional to (alpha + beta)^(-5/2).
    #[default]
    PowerLaw,
    /// Constant inside the box.
    Flat,
}

/// Prior configuration for either model.
///
/// Truncation boxes are normalized to (lo, hi) intervals with `a > 1`:
/// mu lives on (-a, a) and variance-like or shape-like parameters on
/// (1/a, a).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PriorSpec {
    /// Proper conjugate prior for the normal hierarchy:
    /// mu ~ N(mu_mean, mu_var), sigma2 ~ InvGamma(sigma2_shape, sigma2_scale),
    /// tau2 ~ InvGamma(tau2_shape, tau2_scale).
    ProperNormal {
        mu_mean: f64,
        mu_var: f64,
        sigma2_shape: f64,
        sigma2_scale: f64,
        tau2_shape: f64,
        tau2_scale: f64,
    },
    /// mu ~ U(-a, a), pi(sigma2) prop. 1/sigma2 on (1/a, a),
    /// pi(tau2) prop. 1/tau on (1/a, a).
    TruncatedImproperNormal { a: f64 },
    /// Plug-in density on (alpha, beta) restricted to (1/a, a) x (1/a, a).
    TruncatedJeffreysBetaBinom {
        a: f64,
        #[serde(default)]
        density: HyperDensity,
    },
    /// Proper prior for the beta-binomial hyperparameters:
    /// alpha ~ U(alpha_lo, alpha_hi), beta ~ U(beta_lo, beta_hi).
    ProperBetaBinom {
        alpha_lo: f64,
        alpha_hi: f64,
        beta_lo: f64,
        beta_hi: f64,
    },
}

impl PriorSpec {
    /// Default truncation for the normal model ("sufficiently large").
    pub const DEFAULT_NORMAL_A: f64 = 1e6;
    /// Default truncation giving the beta-binomial box (1e-3, 1e3).
    pub const DEFAULT_BETABINOM_A: f64 = 1e3;

    pub fn truncated_improper_normal(a: f64) -> Result<Self> {
        check_a(a)?;
        Ok(PriorSpec::TruncatedImproperNormal { a })
    }

    pub fn truncated_jeffreys_betabinom(a: f64) -> Result<Self> {
        check_a(a)?;
        Ok(PriorSpec::TruncatedJeffreysBetaBinom {
            a,
            density: HyperDensity::PowerLaw,
        })
    }

    pub fn truncated_flat_betabinom(a: f64) -> Result<Self> {
        check_a(a)?;
        Ok(PriorSpec::TruncatedJeffreysBetaBinom {
            a,
            density: HyperDensity::Flat,
        })
    }

    pub fn proper_normal(
        mu_mean: f64,
        mu_var: f64,
        sigma2_shape: f64,
        sigma2_scale: f64,
        tau2_shape: f64,
        tau2_scale: f64,
    ) -> Result<Self> {
        if !mu_mean.is_finite() {
            return Err(Error::NonFinite("mu_mean"));
        }
        for v in [mu_var, sigma2_shape, sigma2_scale, tau2_shape, tau2_scale] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::OutOfRange {
                    name: "proper-normal hyperparameter",
                    value: v,
                    expected: "> 0",
                });
            }
        }
        Ok(PriorSpec::ProperNormal {
            mu_mean,
            mu_var,
            sigma2_shape,
            sigma2_scale,
            tau2_shape,
            tau2_scale,
        })
    }

    pub fn proper_betabinom(
        alpha_lo: f64,
        alpha_hi: f64,
        beta_lo: f64,
        beta_hi: f64,
    ) -> Result<Self> {
        if ![alpha_lo, alpha_hi, beta_lo, beta_hi]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::NonFinite("proper-betabinom bounds"));
        }
        if alpha_lo <= 0.0 || beta_lo <= 0.0 || alpha_hi <= alpha_lo || beta_hi <= beta_lo {
            return Err(Error::InvalidArgument(
                "proper-betabinom bounds must satisfy 0 < lo < hi".into(),
            ));
        }
        Ok(PriorSpec::ProperBetaBinom {
            alpha_lo,
            alpha_hi,
            beta_lo,
            beta_hi,
        })
    }

    pub fn is_normal_kind(&self) -> bool {
        matches!(
            self,
            PriorSpec::ProperNormal { .. } | PriorSpec::TruncatedImproperNormal { .. }
        )
    }

    pub fn is_betabinom_kind(&self) -> bool {
        matches!(
            self,
            PriorSpec::TruncatedJeffreysBetaBinom { .. } | PriorSpec::ProperBetaBinom { .. }
        )
    }

    /// True for the kinds defined by truncating an improper density.
    pub fn is_truncated_improper(&self) -> bool {
        matches!(
            self,
            PriorSpec::TruncatedImproperNormal { .. } | PriorSpec::TruncatedJeffreysBetaBinom { .. }
        )
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            PriorSpec::ProperNormal { .. } => "proper-normal",
            PriorSpec::TruncatedImproperNormal { .. } => "truncated-improper-normal",
            PriorSpec::TruncatedJeffreysBetaBinom { .. } => "truncated-jeffreys-betabinom",
            PriorSpec::ProperBetaBinom { .. } => "proper-betabinom",
        }
    }

    /// Box for (alpha, beta) under the beta-binomial kinds.
    pub fn hyper_box(&self) -> Option<(f64, f64, f64, f64)> {
        match self {
            PriorSpec::TruncatedJeffreysBetaBinom { a, .. } => Some((1.0 / a, *a, 1.0 / a, *a)),
            PriorSpec::ProperBetaBinom {
                alpha_lo,
                alpha_hi,
                beta_lo,
                beta_hi,
            } => Some((*alpha_lo, *alpha_hi, *beta_lo, *beta_hi)),
            _ => None,
        }
    }

    /// Support check backing the samplers' per-draw invariant.
    pub fn normal_params_in_support(&self, params: &NormalHierParams) -> bool {
        match self {
            PriorSpec::ProperNormal { .. } => true,
            PriorSpec::TruncatedImproperNormal { a } => {
                let sigma_ok = match &params.sigma2 {
                    ObsVariance::Shared(v) => *v > 1.0 / a && *v < *a,
                    // Per-group variances are known inputs, not sampled.
                    ObsVariance::PerGroup(_) => true,
                };
                params.mu > -a
                    && params.mu < *a
                    && params.tau2 > 1.0 / a
                    && params.tau2 < *a
                    && sigma_ok
            }
            _ => false,
        }
    }

    pub fn betabinom_params_in_support(&self, params: &BetaBinomialParams) -> bool {
        match self.hyper_box() {
            Some((alo, ahi, blo, bhi)) => {
                params.alpha > alo && params.alpha < ahi && params.beta > blo && params.beta < bhi
            }
            None => false,
        }
    }
}

fn check_a(a: f64) -> Result<()> {
    if !a.is_finite() || a <= 1.0 {
        return Err(Error::OutOfRange {
            name: "truncation bound a",
            value: a,
            expected: "> 1",
        });
    }
    Ok(())
}

/// Normal log-density with standard deviation `sd`.
#[inline]
pub fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    std_normal_logpdf((x - mean) / sd) - sd.ln()
}

/// Log-likelihood of the grouped normal data:
/// sum over groups and observations of log phi((y - theta_i)/sigma_i) - log sigma_i.
pub fn loglik_normal_hier(data: &GroupedNormalData, params: &NormalHierParams) -> Result<f64> {
    params.validate()?;
    if params.theta.len() != data.group_count() {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} entries for {} groups",
            params.theta.len(),
            data.group_count()
        )));
    }
    let mut total = 0.0;
    for (i, group) in data.groups().iter().enumerate() {
        let sd = params.sigma2.for_group(i).sqrt();
        for &y in group {
            total += normal_logpdf(y, params.theta[i], sd);
        }
    }
    Ok(total)
}

/// Log prior density for the normal hierarchy (unnormalized; constants
/// omitted). Returns [`LOG_ZERO`] outside the truncation box.
pub fn logprior_normal_hier(params: &NormalHierParams, prior: &PriorSpec) -> Result<f64> {
    params.validate()?;
    match prior {
        PriorSpec::TruncatedImproperNormal { .. } => {
            if !prior.normal_params_in_support(params) {
                return Ok(LOG_ZERO);
            }
            let sigma_term = match &params.sigma2 {
                ObsVariance::Shared(v) => -v.ln(),
                ObsVariance::PerGroup(_) => 0.0,
            };
            // flat in mu; 1/sigma2; 1/tau = (tau2)^(-1/2)
            Ok(sigma_term - 0.5 * params.tau2.ln())
        }
        PriorSpec::ProperNormal {
            mu_mean,
            mu_var,
            sigma2_shape,
            sigma2_scale,
            tau2_shape,
            tau2_scale,
        } => {
            let mut lp = normal_logpdf(params.mu, *mu_mean, mu_var.sqrt());
            if let ObsVariance::Shared(v) = &params.sigma2 {
                lp += inv_gamma_logpdf(*v, *sigma2_shape, *sigma2_scale);
            }
            lp += inv_gamma_logpdf(params.tau2, *tau2_shape, *tau2_scale);
            Ok(lp)
        }
        other => Err(Error::UnsupportedPrior(format!(
            "{} is not a normal-hier prior",
            other.kind_name()
        ))),
    }
}

/// Inverse-gamma log-density with shape `a` and scale `b`.
pub fn inv_gamma_logpdf(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return LOG_ZERO;
    }
    a * b.ln() - ln_gamma(a) - (a + 1.0) * x.ln() - b / x
}

/// Log-likelihood of the beta-binomial model up to a constant:
/// sum_i [x_i log p_i + (n_i - x_i) log(1 - p_i)] plus the second-stage
/// Beta(alpha, beta) log-density of each p_i.
pub fn loglik_betabinom(data: &BetaBinomialData, params: &BetaBinomialParams) -> Result<f64> {
    params.validate()?;
    if params.p.len() != data.unit_count() {
        return Err(Error::DimensionMismatch(format!(
            "p has {} entries for {} units",
            params.p.len(),
            data.unit_count()
        )));
    }
    let mut total = 0.0;
    for (unit, &p) in data.units().iter().zip(&params.p) {
        total +=
            unit.successes as f64 * p.ln() + (unit.trials - unit.successes) as f64 * (1.0 - p).ln();
        total += beta_logpdf(p, params.alpha, params.beta);
    }
    Ok(total)
}

/// Log hyperprior density on (alpha, beta); [`LOG_ZERO`] outside the box.
pub fn logprior_betabinom(params: &BetaBinomialParams, prior: &PriorSpec) -> Result<f64> {
    params.validate()?;
    match prior {
        PriorSpec::TruncatedJeffreysBetaBinom { density, .. } => {
            if !prior.betabinom_params_in_support(params) {
                return Ok(LOG_ZERO);
            }
            Ok(match density {
                HyperDensity::PowerLaw => -2.5 * (params.alpha + params.beta).ln(),
                HyperDensity::Flat => 0.0,
            })
        }
        PriorSpec::ProperBetaBinom { .. } => {
            if !prior.betabinom_params_in_support(params) {
                return Ok(LOG_ZERO);
            }
            // Uniform on the box; constant omitted.
            Ok(0.0)
        }
        other => Err(Error::UnsupportedPrior(format!(
            "{} is not a beta-binomial prior",
            other.kind_name()
        ))),
    }
}

/// Like [`logprior_betabinom`] but with a caller-supplied plug-in density
/// on the truncation box.
pub fn logprior_betabinom_with(
    params: &BetaBinomialParams,
    prior: &PriorSpec,
    log_density: impl Fn(f64, f64) -> f64,
) -> Result<f64> {
    params.validate()?;
    if !prior.is_betabinom_kind() {
        return Err(Error::UnsupportedPrior(format!(
            "{} is not a beta-binomial prior",
            prior.kind_name()
        )));
    }
    if !prior.betabinom_params_in_support(params) {
        return Ok(LOG_ZERO);
    }
    Ok(log_density(params.alpha, params.beta))
}

/// Hyperparameter draw for the normal model. Supports the proper prior and
/// the truncated-improper prior (which is proper on its box, with a
/// closed-form inverse CDF for each coordinate).
pub fn sample_normal_hyper<R: Rng>(prior: &PriorSpec, rng: &mut R) -> Result<(f64, f64, f64)> {
    match prior {
        PriorSpec::ProperNormal {
            mu_mean,
            mu_var,
            sigma2_shape,
            sigma2_scale,
            tau2_shape,
            tau2_scale,
        } => {
            let mu = Normal::new(*mu_mean, mu_var.sqrt())
                .map_err(|e| Error::Sampler(e.to_string()))?
                .sample(rng);
            let sigma2 = sample_inv_gamma(*sigma2_shape, *sigma2_scale, rng)?;
            let tau2 = sample_inv_gamma(*tau2_shape, *tau2_scale, rng)?;
            Ok((mu, sigma2, tau2))
        }
        PriorSpec::TruncatedImproperNormal { a } => {
            let mu = rng.random_range(-a..*a);
            // pi(v) prop. 1/v on (1/a, a): v = a^(2u - 1).
            let u: f64 = rng.random();
            let sigma2 = a.powf(2.0 * u - 1.0);
            // pi(v) prop. v^(-1/2) on (1/a, a): sqrt(v) uniform on (sqrt(1/a), sqrt(a)).
            let u: f64 = rng.random();
            let lo = (1.0 / a).sqrt();
            let hi = a.sqrt();
            let tau2 = (lo + u * (hi - lo)).powi(2);
            Ok((mu, sigma2, tau2))
        }
        other => Err(Error::UnsupportedPrior(format!(
            "cannot draw normal hyperparameters from {}",
            other.kind_name()
        ))),
    }
}

/// Hyperparameter draw for the beta-binomial model (proper kind only).
pub fn sample_betabinom_hyper<R: Rng>(prior: &PriorSpec, rng: &mut R) -> Result<(f64, f64)> {
    match prior {
        PriorSpec::ProperBetaBinom {
            alpha_lo,
            alpha_hi,
            beta_lo,
            beta_hi,
        } => {
            let alpha = rng.random_range(*alpha_lo..*alpha_hi);
            let beta = rng.random_range(*beta_lo..*beta_hi);
            Ok((alpha, beta))
        }
        other => Err(Error::UnsupportedPrior(format!(
            "cannot draw beta-binomial hyperparameters from {}",
            other.kind_name()
        ))),
    }
}

pub(crate) fn sample_inv_gamma<R: Rng>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0)
        .map_err(|e| Error::Sampler(e.to_string()))?
        .sample(rng);
    if g <= 0.0 {
        return Err(Error::Sampler("degenerate gamma draw".into()));
    }
    Ok(scale / g)
}

/// Stage-two draw: group means theta_i ~ N(mu, tau2).
pub fn sample_group_means<R: Rng>(mu: f64, tau2: f64, n_groups: usize, rng: &mut R) -> Vec<f64> {
    let d = Normal::new(mu, tau2.sqrt()).expect("tau2 > 0");
    (0..n_groups).map(|_| d.sample(rng)).collect()
}

/// Stage-one draw: observations y_ij ~ N(theta_i, sigma_i^2).
pub fn simulate_grouped_normal<R: Rng>(
    theta: &[f64],
    sigma2: &ObsVariance,
    group_sizes: &[usize],
    rng: &mut R,
) -> Result<GroupedNormalData> {
    if theta.len() != group_sizes.len() {
        return Err(Error::DimensionMismatch(
            "theta and group_sizes lengths differ".into(),
        ));
    }
    let mut groups = Vec::with_capacity(theta.len());
    for (i, (&t, &n)) in theta.iter().zip(group_sizes).enumerate() {
        let d = Normal::new(t, sigma2.for_group(i).sqrt())
            .map_err(|e| Error::Sampler(e.to_string()))?;
        groups.push((0..n).map(|_| d.sample(rng)).collect());
    }
    GroupedNormalData::new(groups)
}

/// Stage-two draw for the beta-binomial model: p_i ~ Beta(alpha, beta).
pub fn sample_unit_rates<R: Rng>(
    alpha: f64,
    beta: f64,
    n_units: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let d = BetaDist::new(alpha, beta).map_err(|e| Error::Sampler(e.to_string()))?;
    Ok((0..n_units)
        .map(|_| clamp_open_unit(d.sample(rng)))
        .collect())
}

/// Stage-one draw: x_i ~ Binomial(n_i, p_i).
pub fn simulate_betabinom<R: Rng>(
    p: &[f64],
    trials: &[u64],
    rng: &mut R,
) -> Result<BetaBinomialData> {
    if p.len() != trials.len() {
        return Err(Error::DimensionMismatch(
            "p and trials lengths differ".into(),
        ));
    }
    let mut units = Vec::with_capacity(p.len());
    for (&pi, &n) in p.iter().zip(trials) {
        let d = Binomial::new(n, pi).map_err(|e| Error::Sampler(e.to_string()))?;
        units.push(BetaBinomialUnit {
            trials: n,
            successes: d.sample(rng),
        });
    }
    BetaBinomialData::new(units)
}

/// Nudges a rate into the open unit interval; exact 0/1 draws can occur
/// for extreme shapes.
pub(crate) fn clamp_open_unit(p: f64) -> f64 {
    p.clamp(1e-12, 1.0 - 1e-12)
}

/// FNV-1a, used for stable data fingerprints and config hashes.
pub(crate) struct Fnv(u64);

impl Fnv {
    pub fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    pub fn write_u64(&mut self, v: u64) {
        self.write_bytes(&v.to_le_bytes());
    }

    pub fn write_bytes(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shared(v: f64) -> ObsVariance {
        ObsVariance::Shared(v)
    }

    #[test]
    fn grouped_data_validation() {
        assert!(GroupedNormalData::new(vec![]).is_err());
        assert!(GroupedNormalData::new(vec![vec![1.0], vec![]]).is_err());
        assert!(GroupedNormalData::new(vec![vec![f64::NAN]]).is_err());
        let d = GroupedNormalData::new(vec![vec![1.0, 2.0], vec![3.0]]).unwrap();
        assert_eq!(d.group_count(), 2);
        assert_eq!(d.group_means(), vec![1.5, 3.0]);
    }

    #[test]
    fn betabinom_data_validation() {
        assert!(BetaBinomialData::new(vec![]).is_err());
        assert!(BetaBinomialData::new(vec![BetaBinomialUnit {
            trials: 0,
            successes: 0
        }])
        .is_err());
        assert!(BetaBinomialData::new(vec![BetaBinomialUnit {
            trials: 3,
            successes: 5
        }])
        .is_err());
    }

    #[test]
    fn loglik_normal_single_standardized_point() {
        let data = GroupedNormalData::new(vec![vec![2.0]]).unwrap();
        let params = NormalHierParams::new(vec![2.0], 0.0, 1.0, shared(1.0)).unwrap();
        let ll = loglik_normal_hier(&data, &params).unwrap();
        assert!((ll - (-0.9189385332046727)).abs() < 1e-14);
    }

    #[test]
    fn loglik_normal_scale_factor() {
        // Doubling sigma with y = theta lowers the log-likelihood by log 2
        // per observation.
        let data = GroupedNormalData::new(vec![vec![1.0, 1.0, 1.0]]).unwrap();
        let p1 = NormalHierParams::new(vec![1.0], 0.0, 1.0, shared(1.0)).unwrap();
        let p2 = NormalHierParams::new(vec![1.0], 0.0, 1.0, shared(4.0)).unwrap();
        let l1 = loglik_normal_hier(&data, &p1).unwrap();
        let l2 = loglik_normal_hier(&data, &p2).unwrap();
        assert!((l1 - l2 - 3.0 * 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn loglik_normal_matches_pointwise_oracle() {
        let data = GroupedNormalData::new(vec![vec![0.3, -1.2], vec![2.5]]).unwrap();
        let params = NormalHierParams::new(vec![0.1, 2.0], 0.5, 2.0, shared(1.7)).unwrap();
        let got = loglik_normal_hier(&data, &params).unwrap();
        let sd = 1.7f64.sqrt();
        let phi = |y: f64, m: f64| {
            -0.5 * ((y - m) / sd).powi(2) - (2.0 * std::f64::consts::PI).ln() / 2.0 - sd.ln()
        };
        let want = phi(0.3, 0.1) + phi(-1.2, 0.1) + phi(2.5, 2.0);
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn loglik_normal_dimension_mismatch() {
        let data = GroupedNormalData::new(vec![vec![1.0], vec![2.0]]).unwrap();
        let params = NormalHierParams::new(vec![0.0], 0.0, 1.0, shared(1.0)).unwrap();
        assert!(loglik_normal_hier(&data, &params).is_err());
    }

    #[test]
    fn logprior_truncated_improper_box() {
        let prior = PriorSpec::truncated_improper_normal(10.0).unwrap();
        let inside = NormalHierParams::new(vec![0.0], 0.0, 1.0, shared(1.0)).unwrap();
        assert_eq!(logprior_normal_hier(&inside, &prior).unwrap(), 0.0);

        let mu_out = NormalHierParams::new(vec![0.0], 11.0, 1.0, shared(1.0)).unwrap();
        assert_eq!(logprior_normal_hier(&mu_out, &prior).unwrap(), LOG_ZERO);

        let sigma4 = NormalHierParams::new(vec![0.0], 0.0, 1.0, shared(4.0)).unwrap();
        assert!((logprior_normal_hier(&sigma4, &prior).unwrap() - (-4.0f64.ln())).abs() < 1e-14);
    }

    #[test]
    fn loglik_betabinom_uniform_second_stage() {
        // alpha = beta = 1 makes the Beta density term vanish.
        let data = BetaBinomialData::new(vec![
            BetaBinomialUnit {
                trials: 10,
                successes: 3,
            },
            BetaBinomialUnit {
                trials: 5,
                successes: 5,
            },
        ])
        .unwrap();
        let params = BetaBinomialParams::new(vec![0.3, 0.9], 1.0, 1.0).unwrap();
        let got = loglik_betabinom(&data, &params).unwrap();
        let want = 3.0 * 0.3f64.ln() + 7.0 * 0.7f64.ln() + 5.0 * 0.9f64.ln();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn loglik_betabinom_log_gamma_oracle() {
        // One unit, n=10, x=3, p=0.3, alpha=2, beta=5; direct evaluation
        // with log-gamma gives -5.338118218967645.
        let data = BetaBinomialData::new(vec![BetaBinomialUnit {
            trials: 10,
            successes: 3,
        }])
        .unwrap();
        let params = BetaBinomialParams::new(vec![0.3], 2.0, 5.0).unwrap();
        let got = loglik_betabinom(&data, &params).unwrap();
        assert!((got - (-5.338118218967645)).abs() < 1e-10, "got {got}");
    }

    #[test]
    fn betabinom_params_reject_unit_rates() {
        assert!(BetaBinomialParams::new(vec![0.0], 1.0, 1.0).is_err());
        assert!(BetaBinomialParams::new(vec![1.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn logprior_betabinom_stand_in_and_flat() {
        let prior = PriorSpec::truncated_jeffreys_betabinom(1e3).unwrap();
        let params = BetaBinomialParams::new(vec![0.5], 1.0, 1.0).unwrap();
        let got = logprior_betabinom(&params, &prior).unwrap();
        assert!((got - (-2.5 * 2.0f64.ln())).abs() < 1e-14);

        let outside = BetaBinomialParams::new(vec![0.5], 2e3, 1.0).unwrap();
        assert_eq!(logprior_betabinom(&outside, &prior).unwrap(), LOG_ZERO);

        let flat = PriorSpec::truncated_flat_betabinom(1e3).unwrap();
        assert_eq!(logprior_betabinom(&params, &flat).unwrap(), 0.0);

        let custom = logprior_betabinom_with(&params, &prior, |_, _| 0.0).unwrap();
        assert_eq!(custom, 0.0);
    }

    #[test]
    fn logprior_rejects_wrong_kind() {
        let normal_prior = PriorSpec::truncated_improper_normal(10.0).unwrap();
        let bb = BetaBinomialParams::new(vec![0.5], 1.0, 1.0).unwrap();
        assert!(logprior_betabinom(&bb, &normal_prior).is_err());

        let bb_prior = PriorSpec::truncated_jeffreys_betabinom(10.0).unwrap();
        let nh = NormalHierParams::new(vec![0.0], 0.0, 1.0, shared(1.0)).unwrap();
        assert!(logprior_normal_hier(&nh, &bb_prior).is_err());
    }

    #[test]
    fn prior_spec_requires_a_above_one() {
        assert!(PriorSpec::truncated_improper_normal(1.0).is_err());
        assert!(PriorSpec::truncated_improper_normal(0.5).is_err());
        assert!(PriorSpec::truncated_improper_normal(f64::INFINITY).is_err());
    }

    #[test]
    fn truncated_prior_draws_stay_in_box() {
        let prior = PriorSpec::truncated_improper_normal(4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..2000 {
            let (mu, s2, t2) = sample_normal_hyper(&prior, &mut rng).unwrap();
            assert!(mu > -4.0 && mu < 4.0);
            assert!(s2 > 0.25 && s2 < 4.0);
            assert!(t2 > 0.25 && t2 < 4.0);
        }
    }

    #[test]
    fn fingerprints_are_stable_and_distinguishing() {
        let d1 = GroupedNormalData::new(vec![vec![1.0, 2.0]]).unwrap();
        let d2 = GroupedNormalData::new(vec![vec![1.0, 2.0]]).unwrap();
        let d3 = GroupedNormalData::new(vec![vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(d1.fingerprint(), d2.fingerprint());
        assert_ne!(d1.fingerprint(), d3.fingerprint());
    }

    proptest! {
        #[test]
        fn loglik_translation_invariance(
            shift in -50.0..50.0f64,
            y in prop::collection::vec(-5.0..5.0f64, 2..6),
        ) {
            let data = GroupedNormalData::new(vec![y.clone()]).unwrap();
            let params = NormalHierParams::new(vec![0.7], 0.0, 1.0, shared(1.3)).unwrap();
            let base = loglik_normal_hier(&data, &params).unwrap();

            let shifted_data =
                GroupedNormalData::new(vec![y.iter().map(|v| v + shift).collect()]).unwrap();
            let shifted_params =
                NormalHierParams::new(vec![0.7 + shift], 0.0, 1.0, shared(1.3)).unwrap();
            let moved = loglik_normal_hier(&shifted_data, &shifted_params).unwrap();
            prop_assert!((base - moved).abs() < 1e-9 * (1.0 + base.abs()));
        }

        #[test]
        fn logprior_sentinel_only_off_box(mu in -20.0..20.0f64, tau2 in 0.01..20.0f64) {
            let prior = PriorSpec::truncated_improper_normal(10.0).unwrap();
            let params = NormalHierParams::new(vec![0.0], mu, tau2, shared(1.0)).unwrap();
            let lp = logprior_normal_hier(&params, &prior).unwrap();
            let inside = mu > -10.0 && mu < 10.0 && tau2 > 0.1 && tau2 < 10.0;
            if inside {
                prop_assert!(lp.is_finite());
            } else {
                prop_assert_eq!(lp, LOG_ZERO);
            }
        }
    }
}
