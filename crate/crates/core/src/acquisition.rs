//! Arm selection rules: Thompson sampling through one sampled particle,
//! global information-directed sampling over particle-weight entropy,
//! independent per-user Thompson sampling, and Thompson sampling with the
//! true conditional.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CocoError, Result};
use crate::kernel_basis::Grid;
use crate::logdensity::{
    condition_on_log_history, history_log_likelihoods, ConditionalDensity, History, NoiseModel,
};
use crate::smc::{sample_categorical, MetaPosterior};

/// Probability of each arm being optimal.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmDistribution {
    pub probs: Vec<f64>,
}

impl ArmDistribution {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(&self.probs, rng)
    }
}

/// What a policy may see of a user: the snapped context and its own
/// reward history. Nothing about the user's true means is reachable here.
#[derive(Debug, Clone, Copy)]
pub struct UserView<'a> {
    pub context_index: usize,
    pub history: &'a History,
}

/// Settings for global information-directed sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GidsConfig {
    /// Hypothetical reward outcomes. When absent, `reward_points` values
    /// spread evenly over the grid's μ range widened by 3σ on each side.
    pub reward_grid: Option<Vec<f64>>,
    pub reward_points: usize,
    pub ratio_epsilon: f64,
    pub eg_steps: usize,
    pub eg_learning_rate: f64,
}

impl Default for GidsConfig {
    fn default() -> Self {
        Self {
            reward_grid: None,
            reward_points: 21,
            ratio_epsilon: 1e-8,
            eg_steps: 200,
            eg_learning_rate: 0.5,
        }
    }
}

impl GidsConfig {
    pub fn validate(&self) -> Result<()> {
        match &self.reward_grid {
            Some(r) if r.is_empty() => {
                return Err(CocoError::config("gids.reward_grid", "must not be empty"))
            }
            Some(r) if r.iter().any(|x| !x.is_finite()) => {
                return Err(CocoError::config("gids.reward_grid", "values must be finite"))
            }
            None if self.reward_points == 0 => {
                return Err(CocoError::config("gids.reward_points", "must be positive"))
            }
            _ => {}
        }
        if !(self.ratio_epsilon > 0.0) {
            return Err(CocoError::config("gids.ratio_epsilon", "must be positive"));
        }
        if !(self.eg_learning_rate > 0.0) {
            return Err(CocoError::config("gids.eg_learning_rate", "must be positive"));
        }
        Ok(())
    }

    /// The outcome set 𝓡 used for expected information gain.
    pub fn rewards(&self, grid: &Grid, noise: &NoiseModel) -> Vec<f64> {
        if let Some(r) = &self.reward_grid {
            return r.clone();
        }
        let axis = grid.mu_axis();
        let lo = axis[0] - 3.0 * noise.sigma();
        let hi = axis[axis.len() - 1] + 3.0 * noise.sigma();
        let n = self.reward_points;
        if n == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// p̂_a = mass of grid points whose (lowest-index) argmax arm is a.
pub fn arm_optimality_probs(density: &ConditionalDensity, grid: &Grid) -> ArmDistribution {
    let mut probs = vec![0.0; grid.arms()];
    for (j, &p) in density.probs.iter().enumerate() {
        probs[grid.best_arm(j)] += p;
    }
    ArmDistribution { probs }
}

/// Δ_a = Σ_j π_j (max_a′ μ_{j,a′} − μ_{j,a}).
pub fn gids_per_arm_regret(density: &ConditionalDensity, grid: &Grid) -> Vec<f64> {
    let mut out = vec![0.0; grid.arms()];
    for (j, &p) in density.probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let best = grid.best_mean(j);
        for (a, o) in out.iter_mut().enumerate() {
            *o += p * (best - grid.mu(j, a));
        }
    }
    out
}

/// Every particle's density for this user, conditioned on their history.
/// Particles whose density is degenerate come back as `None`.
fn conditioned_densities(posterior: &MetaPosterior, user: UserView<'_>) -> Vec<Option<ConditionalDensity>> {
    let log_g = history_log_likelihoods(posterior.grid(), user.history, posterior.noise());
    (0..posterior.len())
        .map(|s| posterior.particle_posterior(s, user.context_index, &log_g).ok())
        .collect()
}

/// Particle `s`'s history-conditioned density, or, when it is degenerate,
/// the next heaviest particle's.
fn density_with_fallback(
    posterior: &MetaPosterior,
    user: UserView<'_>,
    s: usize,
) -> Option<(usize, ConditionalDensity)> {
    let log_g = history_log_likelihoods(posterior.grid(), user.history, posterior.noise());
    if let Ok(d) = posterior.particle_posterior(s, user.context_index, &log_g) {
        return Some((s, d));
    }
    posterior
        .particles_by_weight()
        .into_iter()
        .filter(|&o| o != s)
        .find_map(|o| {
            posterior
                .particle_posterior(o, user.context_index, &log_g)
                .ok()
                .map(|d| (o, d))
        })
}

fn uniform_arm<R: Rng + ?Sized>(arms: usize, rng: &mut R) -> usize {
    log::warn!("no particle yields a usable density; choosing an arm uniformly");
    rng.random_range(0..arms)
}

/// Thompson sampling through one particle drawn from the meta-posterior.
pub fn npm_ts_select<R: Rng + ?Sized>(posterior: &MetaPosterior, user: UserView<'_>, rng: &mut R) -> usize {
    let s = posterior.sample_particle(rng);
    match density_with_fallback(posterior, user, s) {
        Some((_, density)) => arm_optimality_probs(&density, posterior.grid()).sample(rng),
        None => uniform_arm(posterior.grid().arms(), rng),
    }
}

/// Shannon entropy in nats.
fn entropy(ws: &[f64]) -> f64 {
    -ws.iter().filter(|&&w| w > 0.0).map(|w| w * w.ln()).sum::<f64>()
}

/// Per particle, the density's marginal over arm `arm`'s axis values.
fn arm_marginal(density: &ConditionalDensity, grid: &Grid, arm: usize) -> Vec<f64> {
    let n = grid.mu_axis().len();
    let stride = n.pow(arm as u32);
    let mut out = vec![0.0; n];
    for (j, &p) in density.probs.iter().enumerate() {
        out[(j / stride) % n] += p;
    }
    out
}

/// EIG for one arm given every particle's conditioned density, with the
/// outcome distribution taken from particle `sampled`.
fn eig_from_densities(
    weights: &[f64],
    densities: &[Option<ConditionalDensity>],
    grid: &Grid,
    noise: &NoiseModel,
    rewards: &[f64],
    arm: usize,
    sampled: usize,
) -> f64 {
    let axis = grid.mu_axis();
    // pdf[r][i] = N(r; axis_i, σ²)
    let pdf: Vec<Vec<f64>> = rewards
        .iter()
        .map(|&r| axis.iter().map(|&m| noise.pdf(r, m)).collect())
        .collect();
    let marginals: Vec<Option<Vec<f64>>> = densities
        .iter()
        .map(|d| d.as_ref().map(|d| arm_marginal(d, grid, arm)))
        .collect();
    let predictive = |marg: &[f64], r: usize| -> f64 {
        marg.iter().zip(&pdf[r]).map(|(p, q)| p * q).sum()
    };

    let sampled_marg = match &marginals[sampled] {
        Some(m) => m,
        None => return 0.0,
    };
    let outcome: Vec<f64> = (0..rewards.len()).map(|r| predictive(sampled_marg, r)).collect();
    let outcome_mass: f64 = outcome.iter().sum();
    if !(outcome_mass > 0.0) {
        return 0.0;
    }

    let prior_entropy = entropy(weights);
    let mut expected_posterior_entropy = 0.0;
    for (r, &p_r) in outcome.iter().enumerate() {
        if p_r == 0.0 {
            continue;
        }
        let updated: Vec<f64> = weights
            .iter()
            .zip(&marginals)
            .map(|(w, m)| m.as_ref().map_or(0.0, |m| w * predictive(m, r)))
            .collect();
        let total: f64 = updated.iter().sum();
        let h = if total > 0.0 {
            let normalized: Vec<f64> = updated.iter().map(|w| w / total).collect();
            entropy(&normalized)
        } else {
            prior_entropy
        };
        expected_posterior_entropy += p_r / outcome_mass * h;
    }
    (prior_entropy - expected_posterior_entropy).max(0.0)
}

/// Expected reduction in particle-weight entropy from pulling `arm` for
/// this user, with outcomes distributed as particle `sampled` predicts.
pub fn gids_per_arm_eig(
    posterior: &MetaPosterior,
    user: UserView<'_>,
    arm: usize,
    config: &GidsConfig,
    sampled: usize,
) -> f64 {
    let densities = conditioned_densities(posterior, user);
    let rewards = config.rewards(posterior.grid(), posterior.noise());
    eig_from_densities(
        posterior.weights(),
        &densities,
        posterior.grid(),
        posterior.noise(),
        &rewards,
        arm,
        sampled,
    )
}

/// Ψ(π) = (πᵀΔ)² / (πᵀE + ε).
pub fn gids_objective(pi: &[f64], regret: &[f64], eig: &[f64], epsilon: f64) -> f64 {
    let r: f64 = pi.iter().zip(regret).map(|(p, d)| p * d).sum();
    let e: f64 = pi.iter().zip(eig).map(|(p, e)| p * e).sum();
    r * r / (e + epsilon)
}

/// Minimizes Ψ over the simplex by exponentiated gradient from the uniform
/// policy, keeping the best iterate seen (and any better vertex).
pub fn gids_policy(regret: &[f64], eig: &[f64], config: &GidsConfig) -> ArmDistribution {
    let k = regret.len();
    assert_eq!(k, eig.len());
    let eps = config.ratio_epsilon;

    let zero_regret: Vec<usize> = (0..k).filter(|&a| regret[a] <= 0.0).collect();
    if !zero_regret.is_empty() {
        let mut best = zero_regret[0];
        for &a in &zero_regret[1..] {
            if eig[a] > eig[best] {
                best = a;
            }
        }
        let mut probs = vec![0.0; k];
        probs[best] = 1.0;
        return ArmDistribution { probs };
    }

    let mut pi = vec![1.0 / k as f64; k];
    let mut best_pi = pi.clone();
    let mut best_val = gids_objective(&pi, regret, eig, eps);
    let mut log_pi: Vec<f64> = pi.iter().map(|p| p.ln()).collect();
    for step in 0..config.eg_steps {
        let r: f64 = pi.iter().zip(regret).map(|(p, d)| p * d).sum();
        let d: f64 = pi.iter().zip(eig).map(|(p, e)| p * e).sum::<f64>() + eps;
        let grad: Vec<f64> = (0..k)
            .map(|a| 2.0 * r * regret[a] / d - r * r * eig[a] / (d * d))
            .collect();
        let mean = grad.iter().sum::<f64>() / k as f64;
        let scale = grad.iter().map(|g| (g - mean).abs()).fold(0.0, f64::max);
        if !(scale > 0.0) || !scale.is_finite() {
            break;
        }
        let lr = config.eg_learning_rate / ((step + 1) as f64).sqrt();
        for (lp, g) in log_pi.iter_mut().zip(&grad) {
            *lp -= lr * (g - mean) / scale;
        }
        let max = log_pi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = log_pi.iter().map(|l| (l - max).exp()).sum();
        for (p, l) in pi.iter_mut().zip(log_pi.iter_mut()) {
            *l -= max + total.ln();
            *p = l.exp();
        }
        let val = gids_objective(&pi, regret, eig, eps);
        if val < best_val {
            best_val = val;
            best_pi = pi.clone();
        }
    }
    for a in 0..k {
        let mut vertex = vec![0.0; k];
        vertex[a] = 1.0;
        let val = gids_objective(&vertex, regret, eig, eps);
        if val < best_val {
            best_val = val;
            best_pi = vertex;
        }
    }
    let total: f64 = best_pi.iter().sum();
    ArmDistribution {
        probs: best_pi.into_iter().map(|p| p / total).collect(),
    }
}

/// Everything GIDS computed for one decision.
#[derive(Debug, Clone)]
pub struct GidsDecision {
    pub particle: usize,
    pub regret: Vec<f64>,
    pub eig: Vec<f64>,
    pub policy: ArmDistribution,
    pub arm: usize,
}

/// Global information-directed sampling for one user.
pub fn gids_decide<R: Rng + ?Sized>(
    posterior: &MetaPosterior,
    user: UserView<'_>,
    config: &GidsConfig,
    rng: &mut R,
) -> Option<GidsDecision> {
    let grid = posterior.grid();
    let drawn = posterior.sample_particle(rng);
    let densities = conditioned_densities(posterior, user);
    let (s, density) = match &densities[drawn] {
        Some(d) => (drawn, d.clone()),
        None => density_with_fallback(posterior, user, drawn)?,
    };
    let regret = gids_per_arm_regret(&density, grid);
    let rewards = config.rewards(grid, posterior.noise());
    let eig: Vec<f64> = (0..grid.arms())
        .map(|a| {
            eig_from_densities(
                posterior.weights(),
                &densities,
                grid,
                posterior.noise(),
                &rewards,
                a,
                s,
            )
        })
        .collect();
    let policy = gids_policy(&regret, &eig, config);
    let arm = policy.sample(rng);
    Some(GidsDecision {
        particle: s,
        regret,
        eig,
        policy,
        arm,
    })
}

pub fn gids_select<R: Rng + ?Sized>(
    posterior: &MetaPosterior,
    user: UserView<'_>,
    config: &GidsConfig,
    rng: &mut R,
) -> usize {
    match gids_decide(posterior, user, config, rng) {
        Some(d) => d.arm,
        None => uniform_arm(posterior.grid().arms(), rng),
    }
}

/// Thompson sampling from a uniform prior over the μ-subgrid, conditioned
/// only on this user's own history.
pub fn ind_ts_select<R: Rng + ?Sized>(
    history: &History,
    grid: &Grid,
    noise: &NoiseModel,
    rng: &mut R,
) -> usize {
    let prior = ConditionalDensity::uniform(grid.mu_len(), 0);
    ts_from_prior(&prior, history, grid, noise, rng)
}

/// Thompson sampling from the true conditional, conditioned on the history
/// this oracle itself collected.
pub fn oracle_ts_select<R: Rng + ?Sized>(
    oracle: &ConditionalDensity,
    history: &History,
    grid: &Grid,
    noise: &NoiseModel,
    rng: &mut R,
) -> usize {
    ts_from_prior(oracle, history, grid, noise, rng)
}

/// Thompson draw from `prior` updated with `history`.
pub fn ts_from_prior<R: Rng + ?Sized>(
    prior: &ConditionalDensity,
    history: &History,
    grid: &Grid,
    noise: &NoiseModel,
    rng: &mut R,
) -> usize {
    let log_g = history_log_likelihoods(grid, history, noise);
    match condition_on_log_history(prior, &log_g) {
        Ok(post) => arm_optimality_probs(&post, grid).sample(rng),
        Err(_) => uniform_arm(grid.arms(), rng),
    }
}

/// Weight-averaged best-arm distribution over all particles. Diagnostic
/// only; the selectors draw a single particle instead.
pub fn marginal_best_arm(posterior: &MetaPosterior, user: UserView<'_>) -> ArmDistribution {
    let grid = posterior.grid();
    let mut probs = vec![0.0; grid.arms()];
    for (s, d) in conditioned_densities(posterior, user).into_iter().enumerate() {
        if let Some(d) = d {
            let w = posterior.weights()[s];
            for (p, q) in probs.iter_mut().zip(arm_optimality_probs(&d, grid).probs) {
                *p += w * q;
            }
        }
    }
    let total: f64 = probs.iter().sum();
    ArmDistribution {
        probs: probs.into_iter().map(|p| p / total).collect(),
    }
}
