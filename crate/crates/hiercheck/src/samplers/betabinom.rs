//! MCMC for the beta-binomial hierarchy: exact Beta full conditionals for
//! the unit rates and a random-walk Metropolis block on the log scale for
//! (alpha, beta), restricted to the prior truncation box.
//!
//! The hyper step size starts at 0.5 on the log scale, is adapted toward
//! 40% acceptance during burn-in, and is frozen afterwards.

use super::{block_rng, ChainConfig, PosteriorDraws};
use crate::error::{Error, Result};
use crate::models::{
    clamp_open_unit, logprior_betabinom, BetaBinomialData, BetaBinomialParams, ModelKind,
    PriorSpec,
};
use crate::special::beta_logpdf;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta as BetaDist, Distribution, Normal};
use std::collections::BTreeMap;

const BLOCK_RATES: u64 = 1;
const BLOCK_HYPER: u64 = 2;

const DEFAULT_HYPER_STEP: f64 = 0.5;
const TARGET_ACCEPTANCE: f64 = 0.4;
const ADAPT_BATCH: usize = 50;

/// Builder; alpha and beta can be pinned for conjugate checks.
pub struct BetaBinomMcmc<'a> {
    data: &'a BetaBinomialData,
    prior: PriorSpec,
    config: ChainConfig,
    fixed_alpha: Option<f64>,
    fixed_beta: Option<f64>,
}

/// Runs the chain with both hyperparameters free.
pub fn mcmc_betabinom(
    data: &BetaBinomialData,
    prior: &PriorSpec,
    config: &ChainConfig,
) -> Result<PosteriorDraws<BetaBinomialParams>> {
    BetaBinomMcmc::new(data, prior, config)?.run()
}

impl<'a> BetaBinomMcmc<'a> {
    pub fn new(data: &'a BetaBinomialData, prior: &PriorSpec, config: &ChainConfig) -> Result<Self> {
        if !prior.is_betabinom_kind() {
            return Err(Error::UnsupportedPrior(format!(
                "{} is not a beta-binomial prior",
                prior.kind_name()
            )));
        }
        config.validate()?;
        Ok(BetaBinomMcmc {
            data,
            prior: prior.clone(),
            config: config.clone(),
            fixed_alpha: None,
            fixed_beta: None,
        })
    }

    pub fn fix_hyper(mut self, alpha: f64, beta: f64) -> Self {
        self.fixed_alpha = Some(alpha);
        self.fixed_beta = Some(beta);
        self
    }

    pub fn run(self) -> Result<PosteriorDraws<BetaBinomialParams>> {
        let hyper_free = self.fixed_alpha.is_none() || self.fixed_beta.is_none();
        if hyper_free && self.data.unit_count() < 2 {
            return Err(Error::InvalidArgument(
                "sampling (alpha, beta) requires at least two units; fix them for single-unit data"
                    .into(),
            ));
        }
        let step = *self
            .config
            .step_sizes
            .get("hyper")
            .unwrap_or(&DEFAULT_HYPER_STEP);
        let mut core = BetaBinomCore::new(
            self.data,
            self.prior.clone(),
            self.config.seed,
            self.fixed_alpha,
            self.fixed_beta,
            step,
            true,
        )?;

        let mut warnings = Vec::new();
        if hyper_free && step == 0.0 {
            warnings.push(
                "hyper step size is zero: (alpha, beta) never move and the acceptance \
                 rate is 1 by construction"
                    .to_string(),
            );
        }

        let mut draws = Vec::with_capacity(self.config.retained());
        for t in 1..=self.config.iterations {
            core.sweep(self.data, t <= self.config.burn_in)?;
            if t == self.config.burn_in && hyper_free && step > 0.0 && core.accepted_total == 0 {
                return Err(Error::Sampler(
                    "no (alpha, beta) proposal was accepted during an entire burn-in pass; \
                     the truncation box may hold no posterior mass"
                        .into(),
                ));
            }
            if self.config.keep(t) {
                draws.push(core.params());
            }
        }

        let mut acceptance_rates = BTreeMap::new();
        if hyper_free {
            acceptance_rates.insert("hyper".to_string(), core.post_burnin_rate());
            if step > 0.0 && core.post_burnin_rate() == 0.0 {
                warnings.push("(alpha, beta) block accepted nothing after burn-in".to_string());
            }
        }

        Ok(PosteriorDraws {
            model: ModelKind::BetaBinom,
            draws,
            acceptance_rates,
            prior: self.prior,
            config: self.config,
            data_fingerprint: self.data.fingerprint(),
            warnings,
        })
    }
}

pub(crate) struct BetaBinomCore {
    prior: PriorSpec,
    fixed_alpha: Option<f64>,
    fixed_beta: Option<f64>,
    pub(crate) p: Vec<f64>,
    pub(crate) alpha: f64,
    pub(crate) beta: f64,
    step: f64,
    adapt: bool,
    batch_proposals: usize,
    batch_accepts: usize,
    accepted_total: usize,
    post_accepts: usize,
    post_proposals: usize,
    rng_rates: ChaCha8Rng,
    rng_hyper: ChaCha8Rng,
}

impl BetaBinomCore {
    pub(crate) fn new(
        data: &BetaBinomialData,
        prior: PriorSpec,
        seed: u64,
        fixed_alpha: Option<f64>,
        fixed_beta: Option<f64>,
        step: f64,
        adapt: bool,
    ) -> Result<Self> {
        let (alo, ahi, blo, bhi) = prior
            .hyper_box()
            .ok_or_else(|| Error::UnsupportedPrior(prior.kind_name().into()))?;
        for (name, v) in [("alpha", fixed_alpha), ("beta", fixed_beta)] {
            if let Some(v) = v {
                if !v.is_finite() || v <= 0.0 {
                    return Err(Error::OutOfRange {
                        name: "fixed hyperparameter",
                        value: v,
                        expected: "> 0",
                    });
                }
                let _ = name;
            }
        }
        // Method-of-moments starting point, clipped into the box.
        let rates: Vec<f64> = data
            .units()
            .iter()
            .map(|u| (u.successes as f64 + 0.5) / (u.trials as f64 + 1.0))
            .collect();
        let m = rates.iter().sum::<f64>() / rates.len() as f64;
        let v = if rates.len() > 1 {
            rates.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (rates.len() as f64 - 1.0)
        } else {
            0.0
        };
        let m = m.clamp(0.05, 0.95);
        let total = if v > 1e-8 {
            (m * (1.0 - m) / v - 1.0).clamp(0.5, 200.0)
        } else {
            10.0
        };
        let alpha0 = fixed_alpha.unwrap_or((m * total).clamp(alo * 1.000001, ahi * 0.999999));
        let beta0 = fixed_beta.unwrap_or(((1.0 - m) * total).clamp(blo * 1.000001, bhi * 0.999999));

        Ok(BetaBinomCore {
            prior,
            fixed_alpha,
            fixed_beta,
            p: rates.iter().map(|r| clamp_open_unit(*r)).collect(),
            alpha: alpha0,
            beta: beta0,
            step,
            adapt,
            batch_proposals: 0,
            batch_accepts: 0,
            accepted_total: 0,
            post_accepts: 0,
            post_proposals: 0,
            rng_rates: block_rng(seed, BLOCK_RATES),
            rng_hyper: block_rng(seed, BLOCK_HYPER),
        })
    }

    pub(crate) fn params(&self) -> BetaBinomialParams {
        BetaBinomialParams {
            p: self.p.clone(),
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    pub(crate) fn set_state(&mut self, p: Vec<f64>, alpha: f64, beta: f64) {
        self.p = p;
        self.alpha = alpha;
        self.beta = beta;
    }

    fn post_burnin_rate(&self) -> f64 {
        if self.post_proposals == 0 {
            0.0
        } else {
            self.post_accepts as f64 / self.post_proposals as f64
        }
    }

    pub(crate) fn sweep(&mut self, data: &BetaBinomialData, in_burnin: bool) -> Result<()> {
        self.update_rates(data)?;
        if self.fixed_alpha.is_none() || self.fixed_beta.is_none() {
            self.update_hyper(in_burnin)?;
        }
        Ok(())
    }

    fn update_rates(&mut self, data: &BetaBinomialData) -> Result<()> {
        for (i, unit) in data.units().iter().enumerate() {
            let a = self.alpha + unit.successes as f64;
            let b = self.beta + (unit.trials - unit.successes) as f64;
            let d = BetaDist::new(a, b).map_err(|e| Error::Sampler(e.to_string()))?;
            self.p[i] = clamp_open_unit(d.sample(&mut self.rng_rates));
        }
        Ok(())
    }

    /// Joint random walk on (log alpha, log beta); the log-scale proposal
    /// contributes the Jacobian term log(alpha') - log(alpha) per
    /// coordinate.
    fn update_hyper(&mut self, in_burnin: bool) -> Result<()> {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let e_alpha: f64 = normal.sample(&mut self.rng_hyper);
        let e_beta: f64 = normal.sample(&mut self.rng_hyper);
        let u: f64 = self.rng_hyper.random();

        let alpha_new = if self.fixed_alpha.is_some() {
            self.alpha
        } else {
            (self.alpha.ln() + self.step * e_alpha).exp()
        };
        let beta_new = if self.fixed_beta.is_some() {
            self.beta
        } else {
            (self.beta.ln() + self.step * e_beta).exp()
        };

        let cur = self.hyper_log_target(self.alpha, self.beta)?;
        let prop = self.hyper_log_target(alpha_new, beta_new)?;
        let accept = prop - cur >= u.max(1e-300).ln();
        if accept {
            self.alpha = alpha_new;
            self.beta = beta_new;
        }

        if in_burnin {
            self.batch_proposals += 1;
            self.batch_accepts += usize::from(accept);
            self.accepted_total += usize::from(accept);
            if self.adapt && self.batch_proposals == ADAPT_BATCH {
                let rate = self.batch_accepts as f64 / self.batch_proposals as f64;
                self.step = (self.step * (0.7 * (rate - TARGET_ACCEPTANCE)).exp()).min(5.0);
                self.batch_proposals = 0;
                self.batch_accepts = 0;
            }
        } else {
            self.post_proposals += 1;
            self.post_accepts += usize::from(accept);
        }
        Ok(())
    }

    fn hyper_log_target(&self, alpha: f64, beta: f64) -> Result<f64> {
        if !(alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        let params = BetaBinomialParams {
            p: self.p.clone(),
            alpha,
            beta,
        };
        let prior_term = logprior_betabinom(&params, &self.prior)?;
        if prior_term == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        let lik: f64 = self
            .p
            .iter()
            .map(|&pi| beta_logpdf(pi, alpha, beta))
            .sum();
        Ok(lik + prior_term + alpha.ln() + beta.ln())
    }
}
