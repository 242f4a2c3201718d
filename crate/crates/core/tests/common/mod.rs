//! Independent reference implementations and check routines shared by the
//! integration tests and the acceptance suite.

#![allow(dead_code)]

use std::sync::Arc;

use coco_core::acquisition::{
    arm_optimality_probs, gids_objective, gids_per_arm_eig, gids_per_arm_regret, gids_policy,
    GidsConfig, UserView,
};
use coco_core::kernel_basis::{
    build_grid, compute_kl_basis, eval_particle, se_kernel, Grid, GridSpec, Interval, KernelParams,
};
use coco_core::logdensity::{
    condition_on_history, history_point_likelihoods, log_marginal_likelihood,
    marginal_likelihood, normalize_on_grid, ConditionalDensity, History, NoiseModel,
};
use coco_core::smc::{
    effective_sample_size, init_posterior, log_target_and_grad, mala_step, systematic_offspring,
    HistoryIncrement, LogTarget, MetaPosterior, SmcConfig, StandardNormalTarget, UserData,
};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

/// Outcome of one check: pass/fail plus a human-readable measurement.
#[derive(Debug, Clone)]
pub struct Check {
    pub ok: bool,
    pub detail: String,
}

impl Check {
    pub fn new(ok: bool, detail: impl Into<String>) -> Self {
        Self {
            ok,
            detail: detail.into(),
        }
    }

    pub fn all(parts: Vec<(&str, Check)>) -> Check {
        let ok = parts.iter().all(|(_, c)| c.ok);
        let detail = parts
            .iter()
            .map(|(name, c)| format!("{name}: {}{}", if c.ok { "" } else { "FAILED " }, c.detail))
            .collect::<Vec<_>>()
            .join("; ");
        Check { ok, detail }
    }
}

pub fn grid(arms: usize, mu_points: usize, context_points: &[usize]) -> Grid {
    build_grid(&GridSpec {
        arms,
        mu_range: Interval::new(-2.0, 2.0),
        mu_points_per_dim: mu_points,
        context_ranges: context_points.iter().map(|_| Interval::new(-1.0, 1.0)).collect(),
        context_points_per_dim: context_points.to_vec(),
    })
    .unwrap()
}

/// The 4×4×3 grid: two arm axes of 4 points and one context axis of 3.
pub fn grid_443() -> Grid {
    grid(2, 4, &[3])
}

/// Arm-mean coordinates of μ-subgrid point `j`, computed without the grid
/// type: axis 0 fastest, `n` evenly spaced points on [lo, hi].
pub fn mu_coords(j: usize, arms: usize, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..arms)
        .map(|a| {
            let i = (j / n.pow(a as u32)) % n;
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        })
        .collect()
}

pub fn dense_kernel(g: &Grid, params: &KernelParams) -> DMatrix<f64> {
    let pts: Vec<Vec<f64>> = (0..g.len()).map(|l| g.point(l)).collect();
    DMatrix::from_fn(g.len(), g.len(), |i, j| se_kernel(&pts[i], &pts[j], params))
}

pub fn random_history<R: Rng>(arms: usize, len: usize, rng: &mut R) -> History {
    History::from_entries(
        (0..len)
            .map(|_| (rng.random_range(0..arms), rng.random_range(-1.5..1.5)))
            .collect(),
    )
}

pub fn random_density<R: Rng>(len: usize, rng: &mut R) -> ConditionalDensity {
    let raw: Vec<f64> = (0..len).map(|_| -rng.random::<f64>().ln()).collect();
    let total: f64 = raw.iter().sum();
    ConditionalDensity {
        probs: raw.into_iter().map(|p| p / total).collect(),
        context_index: 0,
    }
}

// ---------------------------------------------------------------- kernel

/// Kronecker eigenpairs against a dense eigendecomposition of the full
/// kernel matrix.
pub fn check_kronecker_vs_dense() -> Check {
    let g = grid_443();
    let params = KernelParams {
        lengthscale: 0.7,
        signal_variance: 1.3,
    };
    let k = dense_kernel(&g, &params);
    let basis = compute_kl_basis(&g, &params, g.len()).unwrap();
    let mut dense: Vec<f64> = SymmetricEigen::new(k.clone()).eigenvalues.iter().copied().collect();
    dense.sort_by(|a, b| b.total_cmp(a));
    let value_err = dense
        .iter()
        .zip(basis.eigenvalues())
        .map(|(a, b)| (a.max(0.0) - b).abs())
        .fold(0.0, f64::max);
    // each Kronecker pair must be an eigenpair of the dense matrix
    let mut residual: f64 = 0.0;
    let mut ortho: f64 = 0.0;
    for m in 0..basis.order() {
        let v = DMatrix::from_column_slice(g.len(), 1, basis.eigenvector(m));
        let r = &k * &v - &v * basis.eigenvalues()[m];
        residual = residual.max(r.amax());
        for n in 0..=m {
            let dot: f64 = basis
                .eigenvector(m)
                .iter()
                .zip(basis.eigenvector(n))
                .map(|(a, b)| a * b)
                .sum();
            let want = if m == n { 1.0 } else { 0.0 };
            ortho = ortho.max((dot - want).abs());
        }
    }
    let worst = value_err.max(residual).max(ortho);
    Check::new(
        worst < 1e-8,
        format!("eigenvalue err {value_err:.2e}, residual {residual:.2e}, orthonormality {ortho:.2e}"),
    )
}

/// Σ λ φ φᵀ over all L terms reproduces the dense kernel.
pub fn check_full_rank_reconstruction() -> Check {
    let g = grid_443();
    let params = KernelParams::default();
    let k = dense_kernel(&g, &params);
    let basis = compute_kl_basis(&g, &params, g.len()).unwrap();
    let mut rebuilt = DMatrix::zeros(g.len(), g.len());
    for m in 0..basis.order() {
        let v = DMatrix::from_column_slice(g.len(), 1, basis.eigenvector(m));
        rebuilt += &v * v.transpose() * basis.eigenvalues()[m];
    }
    let err = (rebuilt - k).amax();
    Check::new(err < 1e-8, format!("max abs err {err:.2e}"))
}

/// Empirical covariance of sampled grid functions against the truncated
/// kernel Σ_{m<M} λ φ φᵀ.
pub fn check_sampled_covariance(draws: usize, seed: u64) -> Check {
    let g = grid_443();
    let params = KernelParams::default();
    let m = 20;
    let basis = compute_kl_basis(&g, &params, m).unwrap();
    let l = g.len();
    let mut truncated = DMatrix::zeros(l, l);
    for k in 0..m {
        let v = DMatrix::from_column_slice(l, 1, basis.eigenvector(k));
        truncated += &v * v.transpose() * basis.eigenvalues()[k];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut second = DMatrix::<f64>::zeros(l, l);
    let mut first = vec![0.0; l];
    for _ in 0..draws {
        let xi: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let f = eval_particle(&xi, &basis);
        let fv = DMatrix::from_column_slice(l, 1, &f);
        second += &fv * fv.transpose();
        for (a, b) in first.iter_mut().zip(&f) {
            *a += b;
        }
    }
    let n = draws as f64;
    let mean = DMatrix::from_iterator(l, 1, first.iter().map(|v| v / n));
    let cov = second / n - &mean * mean.transpose();
    let err = (cov - truncated).amax();
    Check::new(err < 5e-2, format!("max abs cov err {err:.3e} over {draws} draws"))
}

// ------------------------------------------------------------ logdensity

/// Every density produced from random log-densities sums to one.
pub fn check_simplex_validity(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = grid(2, 5, &[3]);
    let noise = NoiseModel::new(0.3).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let f: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-30.0..30.0)).collect();
        let joint = normalize_on_grid(&f).unwrap();
        worst = worst.max((joint.probs.iter().sum::<f64>() - 1.0).abs());
        let c = rng.random_range(0..g.context_len());
        let cond = coco_core::logdensity::conditional_from_log_density(&f, &g, c).unwrap();
        worst = worst.max((cond.probs.iter().sum::<f64>() - 1.0).abs());
        let h = random_history(2, 3, &mut rng);
        let post = condition_on_history(&cond, &history_point_likelihoods(&g, &h, &noise)).unwrap();
        worst = worst.max((post.probs.iter().sum::<f64>() - 1.0).abs());
        let arms = arm_optimality_probs(&post, &g);
        worst = worst.max((arms.probs.iter().sum::<f64>() - 1.0).abs());
        if post.probs.iter().chain(&arms.probs).any(|p| *p < 0.0) {
            return Check::new(false, "negative probability");
        }
    }
    let basis = compute_kl_basis(&g, &KernelParams::default(), 12).unwrap();
    let mut post = init_posterior(
        Arc::new(g.clone()),
        Arc::new(basis),
        noise,
        SmcConfig {
            particles: 30,
            ..SmcConfig::default()
        },
        seed,
    )
    .unwrap();
    for _ in 0..20 {
        let lik: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
        post.reweight(&lik).unwrap();
        worst = worst.max((post.weights().iter().sum::<f64>() - 1.0).abs());
    }
    Check::new(worst <= 1e-10, format!("max |Σp − 1| = {worst:.2e}"))
}

/// Conditioning on H1 then H2 equals conditioning on H1 ∪ H2.
pub fn check_sequential_bayes(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = grid(3, 4, &[]);
    let noise = NoiseModel::new(0.5).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let prior = random_density(g.mu_len(), &mut rng);
        let h1 = random_history(3, rng.random_range(0..4), &mut rng);
        let h2 = random_history(3, rng.random_range(0..4), &mut rng);
        let g1 = history_point_likelihoods(&g, &h1, &noise);
        let g2 = history_point_likelihoods(&g, &h2, &noise);
        let g12 = history_point_likelihoods(&g, &h1.concat(&h2), &noise);
        let seq = condition_on_history(&condition_on_history(&prior, &g1).unwrap(), &g2).unwrap();
        let joint = condition_on_history(&prior, &g12).unwrap();
        for (a, b) in seq.probs.iter().zip(&joint.probs) {
            worst = worst.max((a - b).abs());
        }
    }
    Check::new(worst <= 1e-10, format!("max abs diff {worst:.2e}"))
}

/// log p(H1 ∪ H2) = log p(H1) + log p(H2 | H1).
pub fn check_evidence_chain_rule(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = grid(2, 6, &[]);
    let noise = NoiseModel::new(0.4).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let prior = random_density(g.mu_len(), &mut rng);
        let h1 = random_history(2, rng.random_range(1..4), &mut rng);
        let h2 = random_history(2, rng.random_range(1..4), &mut rng);
        let lg = |h: &History| coco_core::logdensity::history_log_likelihoods(&g, h, &noise);
        let whole = log_marginal_likelihood(&prior, &lg(&h1.concat(&h2)));
        let first = log_marginal_likelihood(&prior, &lg(&h1));
        let mid = condition_on_history(&prior, &history_point_likelihoods(&g, &h1, &noise)).unwrap();
        let second = log_marginal_likelihood(&mid, &lg(&h2));
        let rel = (whole - (first + second)).abs() / whole.abs().max(1e-300);
        worst = worst.max(rel);
        // the plain-space evidence agrees with the log form
        let plain = marginal_likelihood(&prior, &history_point_likelihoods(&g, &h1, &noise));
        if plain > 1e-200 {
            worst = worst.max((plain.ln() - first).abs() / first.abs().max(1.0));
        }
    }
    Check::new(worst <= 1e-10, format!("max relative err {worst:.2e}"))
}

// ------------------------------------------------------------------- smc

pub fn check_ess_closed_forms() -> Check {
    let n = 40;
    let uniform = vec![1.0 / n as f64; n];
    let mut one_hot = vec![0.0; n];
    one_hot[7] = 1.0;
    let a: f64 = 0.3;
    let two = [a, 1.0 - a];
    let errs = [
        (effective_sample_size(&uniform) - n as f64).abs(),
        (effective_sample_size(&one_hot) - 1.0).abs(),
        (effective_sample_size(&two) - 1.0 / (a * a + (1.0 - a) * (1.0 - a))).abs(),
    ];
    let worst = errs.iter().copied().fold(0.0, f64::max);
    Check::new(worst < 1e-10, format!("max err {worst:.2e}"))
}

/// Mean offspring counts equal N·w within 3 standard errors.
pub fn check_resampling_unbiased(trials: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = [0.05, 0.3, 0.01, 0.14, 0.2, 0.1, 0.07, 0.13];
    let total: f64 = raw.iter().sum();
    let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let n = w.len();
    let mut sums = vec![0.0; n];
    let mut sq = vec![0.0; n];
    for _ in 0..trials {
        let mut counts = vec![0.0; n];
        for p in systematic_offspring(&w, rng.random()) {
            counts[p] += 1.0;
        }
        for i in 0..n {
            sums[i] += counts[i];
            sq[i] += counts[i] * counts[i];
        }
    }
    let t = trials as f64;
    let mut worst_z: f64 = 0.0;
    for i in 0..n {
        let m = sums[i] / t;
        let var = (sq[i] / t - m * m).max(0.0);
        let se = (var / t).sqrt().max(1e-12);
        let expected = n as f64 * w[i];
        worst_z = worst_z.max((m - expected).abs() / se.max(1e-3 / t.sqrt()));
    }
    Check::new(worst_z <= 3.0, format!("max |z| {worst_z:.2} over {trials} trials"))
}

/// Long-run moments of a MALA chain on N(0, I).
pub fn check_mala_moments(steps: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = StandardNormalTarget;
    let dim = 2;
    let mut state = target.evaluate(vec![2.0; dim]);
    let mut sum = vec![0.0; dim];
    let mut sq = vec![0.0; dim];
    let mut accepted = 0;
    for _ in 0..steps {
        let (next, ok) = mala_step(state, &target, 0.9, &mut rng);
        state = next;
        accepted += ok as usize;
        for d in 0..dim {
            sum[d] += state.x[d];
            sq[d] += state.x[d] * state.x[d];
        }
    }
    let n = steps as f64;
    let mut mean_err: f64 = 0.0;
    let mut var_err: f64 = 0.0;
    for d in 0..dim {
        let m = sum[d] / n;
        mean_err = mean_err.max(m.abs());
        var_err = var_err.max((sq[d] / n - m * m - 1.0).abs());
    }
    Check::new(
        mean_err <= 0.05 && var_err <= 0.1,
        format!(
            "|mean| {mean_err:.4}, |var − 1| {var_err:.4}, acceptance {:.3}",
            accepted as f64 / n
        ),
    )
}

/// Analytic gradient of the tempered log target against central differences.
pub fn check_gradient_fd(points: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = grid(2, 5, &[3]);
    let basis = compute_kl_basis(&g, &KernelParams::default(), 15).unwrap();
    let noise = NoiseModel::new(0.3).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let dataset: Vec<UserData> = (0..3)
            .map(|_| UserData {
                context_index: rng.random_range(0..g.context_len()),
                history: random_history(2, rng.random_range(1..4), &mut rng),
            })
            .collect();
        let beta = rng.random_range(0.1..1.0);
        let xi: Vec<f64> = (0..basis.order()).map(|_| rng.sample(StandardNormal)).collect();
        let (_, grad) = log_target_and_grad(&xi, &g, &basis, &dataset, &noise, beta);
        let h = 1e-5;
        let fd: Vec<f64> = (0..xi.len())
            .map(|k| {
                let mut up = xi.clone();
                let mut dn = xi.clone();
                up[k] += h;
                dn[k] -= h;
                let fu = log_target_and_grad(&up, &g, &basis, &dataset, &noise, beta).0;
                let fdn = log_target_and_grad(&dn, &g, &basis, &dataset, &noise, beta).0;
                (fu - fdn) / (2.0 * h)
            })
            .collect();
        let diff: f64 = grad.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let norm: f64 = grad.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
        worst = worst.max(diff / norm);
    }
    Check::new(worst <= 1e-4, format!("max relative err {worst:.2e} over {points} points"))
}

// ------------------------------------------------------------- conjugate

/// Normal-Normal toy: one arm, one context, a single user with 20
/// observations folded in one at a time. Returns (SMC mean, exact mean).
pub fn conjugate_toy(seed: u64) -> (f64, f64) {
    let prior_mean = 0.3;
    let prior_sd = 0.5;
    let sigma = 0.1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = Normal::new(prior_mean, prior_sd).unwrap().sample(&mut rng);
    let g = Arc::new(grid(1, 101, &[]));
    let basis = Arc::new(compute_kl_basis(&g, &KernelParams::default(), 30).unwrap());
    let noise = NoiseModel::new(sigma).unwrap();
    let mut post = init_posterior(
        Arc::clone(&g),
        basis,
        noise,
        SmcConfig {
            particles: 100,
            ..SmcConfig::default()
        },
        seed.wrapping_add(1000),
    )
    .unwrap();
    let mut history = History::new();
    for _ in 0..20 {
        let r = truth + sigma * rng.sample::<f64, _>(StandardNormal);
        let previous = history.clone();
        history.push(0, r);
        post.smc_update(
            &[HistoryIncrement {
                context_index: 0,
                previous,
                current: history.clone(),
            }],
            &[UserData {
                context_index: 0,
                history: history.clone(),
            }],
        )
        .unwrap();
    }
    let smc_mean = post.mixture_posterior(0, &history).unwrap().mean(&g)[0];
    let n = history.len() as f64;
    let sum: f64 = history.entries().iter().map(|(_, r)| r).sum();
    let precision = 1.0 / (prior_sd * prior_sd) + n / (sigma * sigma);
    let exact = (prior_mean / (prior_sd * prior_sd) + sum / (sigma * sigma)) / precision;
    (smc_mean, exact)
}

pub fn check_conjugate(seeds: u64) -> Check {
    let mut worst: f64 = 0.0;
    for s in 0..seeds {
        let (smc, exact) = conjugate_toy(s);
        worst = worst.max((smc - exact).abs());
    }
    Check::new(worst < 0.05, format!("max |SMC − exact| {worst:.4} over {seeds} seeds"))
}

// ----------------------------------------------------------- acquisition

/// p̂_a by explicit partition of randomly weighted grid points.
pub fn check_arm_optimality_oracle(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let arms = rng.random_range(2..=3);
        let n = rng.random_range(2..=5);
        let g = grid(arms, n, &[]);
        let d = random_density(g.mu_len(), &mut rng);
        let mut brute = vec![0.0; arms];
        for (j, p) in d.probs.iter().enumerate() {
            let mu = mu_coords(j, arms, n, -2.0, 2.0);
            let mut best = 0;
            for a in 1..arms {
                if mu[a] > mu[best] {
                    best = a;
                }
            }
            brute[best] += p;
        }
        let got = arm_optimality_probs(&d, &g);
        for (a, b) in got.probs.iter().zip(&brute) {
            worst = worst.max((a - b).abs());
        }
    }
    Check::new(worst <= 1e-3, format!("max abs err {worst:.2e} over {instances} instances"))
}

pub fn check_regret_oracle(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let arms = rng.random_range(2..=3);
        let n = rng.random_range(2..=5);
        let g = grid(arms, n, &[]);
        let d = random_density(g.mu_len(), &mut rng);
        let got = gids_per_arm_regret(&d, &g);
        for a in 0..arms {
            let mut brute = 0.0;
            for (j, p) in d.probs.iter().enumerate() {
                let mu = mu_coords(j, arms, n, -2.0, 2.0);
                let best = mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                brute += p * (best - mu[a]);
            }
            worst = worst.max((got[a] - brute).abs());
        }
    }
    Check::new(worst <= 1e-3, format!("max abs err {worst:.2e} over {instances} instances"))
}

fn entropy(w: &[f64]) -> f64 {
    -w.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

fn gauss_pdf(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// EIG from scratch: particle functions rebuilt from the raw eigenvectors,
/// history-conditioned densities over the full μ grid, predictive
/// likelihoods summed over every grid point.
pub fn brute_force_eig(
    post: &MetaPosterior,
    g: &Grid,
    noise: &NoiseModel,
    context_index: usize,
    history: &History,
    arm: usize,
    rewards: &[f64],
    sampled: usize,
) -> f64 {
    let basis = post.basis();
    let sigma = noise.sigma();
    let arms = g.arms();
    let n = g.mu_axis().len();
    let (lo, hi) = (g.mu_axis()[0], g.mu_axis()[n - 1]);
    let densities: Vec<Vec<f64>> = post
        .particles()
        .iter()
        .map(|xi| {
            let mut f = vec![0.0; g.len()];
            for (m, x) in xi.iter().enumerate() {
                let s = basis.eigenvalues()[m].sqrt() * x;
                for (o, v) in f.iter_mut().zip(basis.eigenvector(m)) {
                    *o += s * v;
                }
            }
            let offset = context_index * g.mu_len();
            let raw: Vec<f64> = (0..g.mu_len())
                .map(|j| {
                    let mu = mu_coords(j, arms, n, lo, hi);
                    let lik: f64 = history
                        .entries()
                        .iter()
                        .map(|&(a, r)| gauss_pdf(r, mu[a], sigma))
                        .product();
                    f[offset + j].exp() * lik
                })
                .collect();
            let z: f64 = raw.iter().sum();
            raw.into_iter().map(|p| p / z).collect()
        })
        .collect();
    let lik = |s: usize, r: f64| -> f64 {
        densities[s]
            .iter()
            .enumerate()
            .map(|(j, p)| p * gauss_pdf(r, mu_coords(j, arms, n, lo, hi)[arm], sigma))
            .sum()
    };
    let w = post.weights();
    let outcome: Vec<f64> = rewards.iter().map(|&r| lik(sampled, r)).collect();
    let z: f64 = outcome.iter().sum();
    let mut expected = 0.0;
    for (k, &r) in rewards.iter().enumerate() {
        let upd: Vec<f64> = (0..w.len()).map(|s| w[s] * lik(s, r)).collect();
        let t: f64 = upd.iter().sum();
        let h = entropy(&upd.iter().map(|u| u / t).collect::<Vec<_>>());
        expected += outcome[k] / z * h;
    }
    (entropy(w) - expected).max(0.0)
}

pub fn random_posterior(g: &Grid, particles: usize, order: usize, seed: u64) -> MetaPosterior {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = compute_kl_basis(g, &KernelParams::default(), order).unwrap();
    let xs: Vec<Vec<f64>> = (0..particles)
        .map(|_| (0..order).map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let mut post = MetaPosterior::from_particles(
        Arc::new(g.clone()),
        Arc::new(basis),
        NoiseModel::new(0.3).unwrap(),
        SmcConfig {
            particles,
            ..SmcConfig::default()
        },
        xs,
        seed,
    )
    .unwrap();
    let raw: Vec<f64> = (0..particles).map(|_| rng.random_range(0.1..1.0)).collect();
    let t: f64 = raw.iter().sum();
    post.set_weights(&raw.iter().map(|x| x / t).collect::<Vec<_>>()).unwrap();
    post
}

pub fn check_eig_oracle(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let config = GidsConfig::default();
    for i in 0..instances {
        let g = grid(2, 5, &[2]);
        let post = random_posterior(&g, 6, 10, seed * 1000 + i as u64);
        let noise = *post.noise();
        let c = rng.random_range(0..2);
        let history = random_history(2, rng.random_range(0..3), &mut rng);
        let arm = rng.random_range(0..2);
        let sampled = rng.random_range(0..6);
        let rewards = config.rewards(&g, &noise);
        let view = UserView {
            context_index: c,
            history: &history,
        };
        let got = gids_per_arm_eig(&post, view, arm, &config, sampled);
        let brute = brute_force_eig(&post, &g, &noise, c, &history, arm, &rewards, sampled);
        worst = worst.max((got - brute).abs());
    }
    Check::new(worst <= 1e-3, format!("max abs err {worst:.2e} over {instances} instances"))
}

/// Min of Ψ over the simplex grid with spacing `step`, for K = 3.
pub fn simplex_grid_min(regret: &[f64], eig: &[f64], eps: f64, step: f64) -> f64 {
    let n = (1.0 / step).round() as usize;
    let mut best = f64::INFINITY;
    for i in 0..=n {
        for j in 0..=(n - i) {
            let p = [i as f64 / n as f64, j as f64 / n as f64, (n - i - j) as f64 / n as f64];
            best = best.min(gids_objective(&p, regret, eig, eps));
        }
    }
    best
}

pub fn check_policy_oracle(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = GidsConfig::default();
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut cases = vec![(vec![0.2, 0.5, 0.9], vec![0.01, 0.4, 0.9])];
    for _ in 1..instances {
        cases.push((
            (0..3).map(|_| rng.random_range(0.05..1.0)).collect(),
            (0..3).map(|_| rng.random_range(0.0..1.0)).collect(),
        ));
    }
    for (regret, eig) in &cases {
        let pi = gids_policy(regret, eig, &config);
        let got = gids_objective(&pi.probs, regret, eig, config.ratio_epsilon);
        let grid_best = simplex_grid_min(regret, eig, config.ratio_epsilon, 0.01);
        worst = worst.max(got - grid_best);
    }
    Check::new(
        worst <= 1e-3,
        format!("max (solver − grid) objective {worst:.2e} over {} instances", cases.len()),
    )
}
