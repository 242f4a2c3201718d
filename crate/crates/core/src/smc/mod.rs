//! Sequential Monte Carlo over KL coefficient vectors.
//!
//! The meta-posterior is a weighted particle set. Each new observation
//! contributes an incremental likelihood per particle (the ratio of the
//! user's marginal likelihood with and without it). That increment is
//! folded in through an adaptively tempered sequence: each stage raises the
//! increment's exponent from β to β′, reweights, and when weights degenerate
//! resamples systematically and rejuvenates with MALA moves aimed at the
//! tempered full-data posterior.

mod mala;
mod target;

pub use mala::{mala_log_acceptance, mala_step, Evaluated, LogTarget, StandardNormalTarget};
pub use target::{log_target_and_grad, PosteriorTarget, UserData};

use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CocoError, Result};
use crate::kernel_basis::{eval_particle, Grid, KLBasis};
use crate::logdensity::{
    conditional_from_log_density, history_log_likelihoods, posterior_from_log_density,
    ConditionalDensity, History, NoiseModel,
};
use target::{log_joint_evidence, Term};

/// SMC hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmcConfig {
    pub particles: usize,
    /// Resample when ESS < τ·N.
    pub ess_threshold: f64,
    /// MALA step size η.
    pub langevin_step: f64,
    /// Maximum tempering/rejuvenation stages per update.
    pub n_max: usize,
    pub mcmc_steps_per_rejuvenation: usize,
    /// Target ESS fraction when choosing the next inverse temperature.
    pub temper_target: f64,
    /// Force a resample-and-rejuvenate pass every this many updates (0 = off).
    pub resample_every: usize,
    /// Tempered sweeps used to recover from evidence collapse.
    pub collapse_sweeps: usize,
}

impl Default for SmcConfig {
    fn default() -> Self {
        Self {
            particles: 200,
            ess_threshold: 0.5,
            langevin_step: 0.05,
            n_max: 5,
            mcmc_steps_per_rejuvenation: 5,
            temper_target: 0.5,
            resample_every: 5,
            collapse_sweeps: 20,
        }
    }
}

impl SmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(CocoError::config("smc.particles", "must be positive"));
        }
        if !(self.ess_threshold > 0.0 && self.ess_threshold < 1.0) {
            return Err(CocoError::config("smc.ess_threshold", "must lie in (0, 1)"));
        }
        if !(self.langevin_step > 0.0 && self.langevin_step.is_finite()) {
            return Err(CocoError::config("smc.langevin_step", "must be positive"));
        }
        if self.n_max == 0 {
            return Err(CocoError::config("smc.n_max", "must be at least 1"));
        }
        if self.mcmc_steps_per_rejuvenation == 0 {
            return Err(CocoError::config(
                "smc.mcmc_steps_per_rejuvenation",
                "must be positive",
            ));
        }
        if !(self.temper_target > 0.0 && self.temper_target < 1.0) {
            return Err(CocoError::config("smc.temper_target", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// A user whose history grew since the last update.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryIncrement {
    pub context_index: usize,
    pub previous: History,
    pub current: History,
}

/// What one [`MetaPosterior::smc_update`] call did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateReport {
    pub stages: usize,
    pub resampled: bool,
    pub ess: f64,
    pub proposals: usize,
    pub accepted: usize,
    pub recovered_from_collapse: bool,
}

/// Running diagnostics over the lifetime of a posterior.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SmcStats {
    pub updates: usize,
    pub resample_events: usize,
    pub mala_proposals: usize,
    pub mala_accepts: usize,
    pub collapse_recoveries: usize,
    pub min_ess: Option<f64>,
}

impl SmcStats {
    pub fn acceptance_rate(&self) -> Option<f64> {
        (self.mala_proposals > 0).then(|| self.mala_accepts as f64 / self.mala_proposals as f64)
    }
}

/// Weighted particle approximation of the meta-posterior.
#[derive(Debug, Clone)]
pub struct MetaPosterior {
    grid: Arc<Grid>,
    basis: Arc<KLBasis>,
    noise: NoiseModel,
    config: SmcConfig,
    particles: Vec<Vec<f64>>,
    /// Log-density values of each particle over the grid; always in sync
    /// with `particles`.
    log_grids: Vec<Vec<f64>>,
    weights: Vec<f64>,
    rng: ChaCha8Rng,
    stats: SmcStats,
}

/// N i.i.d. standard-normal coefficient vectors with uniform weights.
pub fn init_posterior(
    grid: Arc<Grid>,
    basis: Arc<KLBasis>,
    noise: NoiseModel,
    config: SmcConfig,
    seed: u64,
) -> Result<MetaPosterior> {
    config.validate()?;
    if basis.grid_len() != grid.len() {
        return Err(CocoError::InvalidInput(format!(
            "basis covers {} points but the grid has {}",
            basis.grid_len(),
            grid.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.particles;
    let m = basis.order();
    let particles: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..m).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    let log_grids = particles
        .par_iter()
        .map(|xi| eval_particle(xi, &basis))
        .collect();
    Ok(MetaPosterior {
        grid,
        basis,
        noise,
        config,
        particles,
        log_grids,
        weights: vec![1.0 / n as f64; n],
        rng,
        stats: SmcStats::default(),
    })
}

/// 1 / Σ w².
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Parent index of each of the N offspring for a single uniform offset
/// `u ∈ [0, 1)`, stride 1/N.
pub fn systematic_offspring(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    let mut parents = Vec::with_capacity(n);
    let mut cumulative = weights[0];
    let mut parent = 0;
    for i in 0..n {
        let position = (i as f64 + u) / n as f64;
        while position >= cumulative && parent + 1 < n {
            parent += 1;
            cumulative += weights[parent];
        }
        parents.push(parent);
    }
    parents
}

/// Next inverse temperature β ∈ (β_prev, 1] so that the ESS of weights
/// ∝ exp((β − β_prev)·loglik) is `temper_target·N`, or 1 when the full step
/// keeps ESS above that.
pub fn adaptive_beta_schedule(incremental_loglik: &[f64], beta_prev: f64, temper_target: f64) -> f64 {
    let n = incremental_loglik.len() as f64;
    let goal = temper_target * n;
    let ess_at = |delta: f64| {
        let max = incremental_loglik
            .iter()
            .map(|l| delta * l)
            .fold(f64::NEG_INFINITY, f64::max);
        let ws: Vec<f64> = incremental_loglik
            .iter()
            .map(|l| (delta * l - max).exp())
            .collect();
        let s: f64 = ws.iter().sum();
        let s2: f64 = ws.iter().map(|w| w * w).sum();
        s * s / s2
    };
    let span = 1.0 - beta_prev;
    if ess_at(span) >= goal {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let ess = ess_at(mid);
        if (ess - goal).abs() <= 0.01 * goal * 0.5 {
            return beta_prev + mid;
        }
        if ess > goal {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // lo keeps ESS above target; never return β_prev itself.
    beta_prev + if lo > 0.0 { lo } else { hi }
}

impl MetaPosterior {
    /// Posterior over explicitly given coefficient vectors, uniform weights.
    pub fn from_particles(
        grid: Arc<Grid>,
        basis: Arc<KLBasis>,
        noise: NoiseModel,
        config: SmcConfig,
        particles: Vec<Vec<f64>>,
        seed: u64,
    ) -> Result<Self> {
        if particles.is_empty() || particles.iter().any(|p| p.len() != basis.order()) {
            return Err(CocoError::InvalidInput(
                "particles must be non-empty and of length M".into(),
            ));
        }
        let n = particles.len();
        let log_grids = particles.par_iter().map(|xi| eval_particle(xi, &basis)).collect();
        Ok(Self {
            grid,
            basis,
            noise,
            config: SmcConfig {
                particles: n,
                ..config
            },
            particles,
            log_grids,
            weights: vec![1.0 / n as f64; n],
            rng: ChaCha8Rng::seed_from_u64(seed),
            stats: SmcStats::default(),
        })
    }

    /// Replaces the weights with a normalized copy of `weights`.
    pub fn set_weights(&mut self, weights: &[f64]) -> Result<()> {
        let total: f64 = weights.iter().sum();
        if weights.len() != self.len() || weights.iter().any(|w| *w < 0.0) || !(total > 0.0) {
            return Err(CocoError::InvalidInput("weights must be non-negative with positive sum".into()));
        }
        self.weights = weights.iter().map(|w| w / total).collect();
        Ok(())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn grid_arc(&self) -> Arc<Grid> {
        Arc::clone(&self.grid)
    }

    pub fn basis(&self) -> &KLBasis {
        &self.basis
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn config(&self) -> &SmcConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[Vec<f64>] {
        &self.particles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_grid(&self, s: usize) -> &[f64] {
        &self.log_grids[s]
    }

    pub fn stats(&self) -> &SmcStats {
        &self.stats
    }

    pub fn ess(&self) -> f64 {
        effective_sample_size(&self.weights)
    }

    /// Particle `s`'s density over μ at a context.
    pub fn particle_conditional(&self, s: usize, context_index: usize) -> Result<ConditionalDensity> {
        conditional_from_log_density(&self.log_grids[s], &self.grid, context_index)
    }

    /// Particle `s`'s density over μ at a context, conditioned on a history
    /// given as log point likelihoods.
    pub fn particle_posterior(
        &self,
        s: usize,
        context_index: usize,
        log_g: &[f64],
    ) -> Result<ConditionalDensity> {
        posterior_from_log_density(&self.log_grids[s], &self.grid, context_index, log_g)
    }

    /// w ← normalize(w ⊙ lik).
    pub fn reweight(&mut self, likelihoods: &[f64]) -> Result<()> {
        assert_eq!(likelihoods.len(), self.len());
        let updated: Vec<f64> = self
            .weights
            .iter()
            .zip(likelihoods)
            .map(|(w, l)| w * l)
            .collect();
        let total: f64 = updated.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(CocoError::EvidenceCollapse {
                particles: self.len(),
            });
        }
        self.weights = updated.into_iter().map(|w| w / total).collect();
        Ok(())
    }

    /// w ← normalize(w ⊙ exp(loglik)), computed without leaving log space.
    pub fn reweight_log(&mut self, log_likelihoods: &[f64]) -> Result<()> {
        assert_eq!(log_likelihoods.len(), self.len());
        let logs: Vec<f64> = self
            .weights
            .iter()
            .zip(log_likelihoods)
            .map(|(&w, &l)| if w > 0.0 && !l.is_nan() { w.ln() + l } else { f64::NEG_INFINITY })
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(CocoError::EvidenceCollapse {
                particles: self.len(),
            });
        }
        let updated: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = updated.iter().sum();
        self.weights = updated.into_iter().map(|w| w / total).collect();
        Ok(())
    }

    /// Systematic resampling with one uniform offset; weights reset to 1/N.
    pub fn systematic_resample(&mut self) {
        let u: f64 = self.rng.random();
        let parents = systematic_offspring(&self.weights, u);
        self.particles = parents.iter().map(|&p| self.particles[p].clone()).collect();
        self.log_grids = parents.iter().map(|&p| self.log_grids[p].clone()).collect();
        let n = self.len();
        self.weights = vec![1.0 / n as f64; n];
        self.stats.resample_events += 1;
    }

    /// Draws a particle index from Categorical(w).
    pub fn sample_particle<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(&self.weights, rng)
    }

    /// Particle indices in decreasing weight order (ties by index).
    pub fn particles_by_weight(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.weights[b].total_cmp(&self.weights[a]).then(a.cmp(&b)));
        order
    }

    /// Runs `steps` MALA moves on every particle against `target`. Each
    /// particle draws from its own generator seeded in particle order, so
    /// results do not depend on the thread count.
    fn rejuvenate(&mut self, target: &PosteriorTarget<'_>, steps: usize) -> (usize, usize) {
        let eta = self.config.langevin_step;
        let seeds: Vec<u64> = (0..self.len()).map(|_| self.rng.next_u64()).collect();
        let particles = std::mem::take(&mut self.particles);
        let moved: Vec<(Evaluated<Vec<f64>>, usize)> = particles
            .into_par_iter()
            .zip(seeds.into_par_iter())
            .map(|(xi, seed)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut state = target.evaluate(xi);
                let mut accepted = 0;
                for _ in 0..steps {
                    let (next, ok) = mala_step(state, target, eta, &mut rng);
                    state = next;
                    accepted += ok as usize;
                }
                (state, accepted)
            })
            .collect();
        let mut total_accepted = 0;
        self.particles = Vec::with_capacity(moved.len());
        self.log_grids = Vec::with_capacity(moved.len());
        for (state, accepted) in moved {
            total_accepted += accepted;
            self.particles.push(state.x);
            self.log_grids.push(state.extra);
        }
        let proposals = steps * self.len();
        self.stats.mala_proposals += proposals;
        self.stats.mala_accepts += total_accepted;
        (proposals, total_accepted)
    }

    /// Per-particle log of P(current | x) / P(previous | x), summed over the
    /// increments.
    fn incremental_loglik(&self, increments: &[(usize, Vec<f64>, Vec<f64>)]) -> Vec<f64> {
        self.log_grids
            .par_iter()
            .map(|f| {
                increments
                    .iter()
                    .map(|(c, prev, cur)| {
                        let slice = &f[self.grid.context_slice(*c)];
                        log_joint_evidence(slice, cur) - log_joint_evidence(slice, prev)
                    })
                    .sum()
            })
            .collect()
    }

    /// Likelihood terms for a target in which every user in `dataset`
    /// enters fully except that each increment's new observations are
    /// raised to the power `beta`. `scale` multiplies the whole likelihood.
    fn terms_for(
        &self,
        base: &[Term],
        increments: &[(usize, Vec<f64>, Vec<f64>)],
        beta: f64,
        scale: f64,
    ) -> Vec<Term> {
        let mut terms: Vec<Term> = base
            .iter()
            .map(|t| Term {
                coefficient: t.coefficient * scale,
                ..t.clone()
            })
            .collect();
        if beta < 1.0 {
            for (c, prev, cur) in increments {
                terms.push(Term {
                    context_index: *c,
                    log_g: cur.clone(),
                    coefficient: -(1.0 - beta) * scale,
                });
                if prev.iter().any(|&x| x != 0.0) {
                    terms.push(Term {
                        context_index: *c,
                        log_g: prev.clone(),
                        coefficient: (1.0 - beta) * scale,
                    });
                }
            }
        }
        terms
    }

    /// Folds new observations into the particle approximation.
    ///
    /// `dataset` must hold every user's current history, including the
    /// increments' `current` histories. Rejuvenation targets the posterior
    /// given all of it.
    pub fn smc_update(
        &mut self,
        increments: &[HistoryIncrement],
        dataset: &[UserData],
    ) -> Result<UpdateReport> {
        let arms = self.grid.arms();
        for inc in increments {
            inc.current.validate(arms)?;
            if inc.context_index >= self.grid.context_len() {
                return Err(CocoError::InvalidInput(format!(
                    "context index {} out of range",
                    inc.context_index
                )));
            }
        }
        let grid = Arc::clone(&self.grid);
        let basis = Arc::clone(&self.basis);
        let noise = self.noise;
        let increments: Vec<(usize, Vec<f64>, Vec<f64>)> = increments
            .iter()
            .map(|inc| {
                (
                    inc.context_index,
                    history_log_likelihoods(&grid, &inc.previous, &noise),
                    history_log_likelihoods(&grid, &inc.current, &noise),
                )
            })
            .collect();
        let base: Vec<Term> = dataset
            .iter()
            .filter(|u| !u.history.is_empty())
            .map(|u| Term::new(&grid, u.context_index, &u.history, &noise, 1.0))
            .collect();

        self.stats.updates += 1;
        let mut report = UpdateReport::default();
        let n = self.len() as f64;

        let mut inc_ll = self.incremental_loglik(&increments);
        if inc_ll.iter().all(|l| !l.is_finite()) {
            self.recover_from_collapse(&grid, &basis, &base, &increments, &mut report)?;
            inc_ll = self.incremental_loglik(&increments);
            if inc_ll.iter().all(|l| !l.is_finite()) {
                return Err(CocoError::EvidenceCollapse {
                    particles: self.len(),
                });
            }
        }

        let mut beta = 0.0;
        while beta < 1.0 {
            report.stages += 1;
            let next = if report.stages >= self.config.n_max {
                1.0
            } else {
                adaptive_beta_schedule(&inc_ll, beta, self.config.temper_target)
            };
            let step: Vec<f64> = inc_ll.iter().map(|l| (next - beta) * l).collect();
            self.reweight_log(&step)?;
            beta = next;

            if beta < 1.0 || self.ess() < self.config.ess_threshold * n {
                self.systematic_resample();
                report.resampled = true;
                let terms = self.terms_for(&base, &increments, beta, 1.0);
                let target = PosteriorTarget::from_terms(&grid, &basis, terms);
                let (p, a) = self.rejuvenate(&target, self.config.mcmc_steps_per_rejuvenation);
                report.proposals += p;
                report.accepted += a;
                if beta < 1.0 {
                    inc_ll = self.incremental_loglik(&increments);
                }
            }
        }

        let every = self.config.resample_every;
        if every > 0 && self.stats.updates % every == 0 && !report.resampled {
            self.systematic_resample();
            report.resampled = true;
            let target = PosteriorTarget::from_terms(&grid, &basis, base.clone());
            let (p, a) = self.rejuvenate(&target, self.config.mcmc_steps_per_rejuvenation);
            report.proposals += p;
            report.accepted += a;
        }

        report.ess = self.ess();
        let min = self.stats.min_ess.map_or(report.ess, |m| m.min(report.ess));
        self.stats.min_ess = Some(min);
        Ok(report)
    }

    /// Every particle gave the new data zero likelihood: restart from the
    /// prior and anneal towards the posterior of the data seen before the
    /// increments.
    fn recover_from_collapse(
        &mut self,
        grid: &Grid,
        basis: &KLBasis,
        base: &[Term],
        increments: &[(usize, Vec<f64>, Vec<f64>)],
        report: &mut UpdateReport,
    ) -> Result<()> {
        let sweeps = self.config.collapse_sweeps.max(1);
        log::warn!("evidence collapse across {} particles; re-annealing", self.len());
        let n = self.len();
        self.weights = vec![1.0 / n as f64; n];
        for k in 1..=sweeps {
            let scale = k as f64 / sweeps as f64;
            let terms = self.terms_for(base, increments, 0.0, scale);
            let target = PosteriorTarget::from_terms(grid, basis, terms);
            let (p, a) = self.rejuvenate(&target, 1);
            report.proposals += p;
            report.accepted += a;
        }
        self.stats.collapse_recoveries += 1;
        report.recovered_from_collapse = true;
        Ok(())
    }

    /// E_{f∼Q}[P^(f)(μ | x, H)] as a single density: the weight-averaged
    /// history-conditioned densities of all particles.
    pub fn mixture_posterior(&self, context_index: usize, history: &History) -> Result<ConditionalDensity> {
        let log_g = history_log_likelihoods(&self.grid, history, &self.noise);
        let mut probs = vec![0.0; self.grid.mu_len()];
        for (s, &w) in self.weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let post = self.particle_posterior(s, context_index, &log_g)?;
            for (p, q) in probs.iter_mut().zip(&post.probs) {
                *p += w * q;
            }
        }
        Ok(ConditionalDensity {
            probs,
            context_index,
        })
    }
}

/// Index drawn from an (already normalized) probability vector.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_positive
}
