use std::collections::BTreeMap;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand::RngCore;

use crate::acquisition::{gids_select, ind_ts_select, npm_ts_select, oracle_ts_select, UserView};
use crate::environments::{observe_reward, Population, Task};
use crate::error::{CocoError, Result};
use crate::kernel_basis::{build_grid, compute_kl_basis, Grid, KLBasis};
use crate::logdensity::{ConditionalDensity, History, NoiseModel};
use crate::smc::{init_posterior, HistoryIncrement, MetaPosterior, SmcStats, UserData};

use super::config::{PolicyKind, SimConfig};
use super::regret::{RegretLedger, StepRecord};
use super::streams::{stream_rng, Stream};

/// A user as the simulation loop tracks them.
#[derive(Debug, Clone, PartialEq)]
pub struct UserRecord {
    pub id: usize,
    /// True continuous observed context.
    pub x_obs: f64,
    /// Nearest grid context, used by every model-facing operation.
    pub context_index: usize,
    pub history: History,
    pub count: usize,
    pub active: bool,
}

/// Posterior state after a round, with the evaluation-batch result.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub round: usize,
    /// Interactions completed when the snapshot was taken.
    pub t: usize,
    pub ess: Option<f64>,
    pub acceptance_rate: Option<f64>,
    pub avg_cum_bayes_regret: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub t: usize,
    pub user_id: usize,
    pub context_index: usize,
    pub arm: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub policy: PolicyKind,
    pub interactions: Vec<Interaction>,
    pub snapshots: Vec<Snapshot>,
    pub smc: Option<SmcStats>,
    pub users: Vec<UserRecord>,
}

/// Everything fixed by the configuration and seed before any policy acts.
pub struct World {
    pub config: SimConfig,
    pub grid: Arc<Grid>,
    pub basis: Option<Arc<KLBasis>>,
    pub noise: NoiseModel,
    pub population: Population,
    /// Every user that will be recruited, in recruitment order.
    pub tasks: Vec<Task>,
    /// True conditional per grid context.
    pub oracle: Vec<ConditionalDensity>,
    pub eval_tasks: Vec<Task>,
}

impl World {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let grid = Arc::new(build_grid(&config.grid)?);
        let basis = if config.policy.uses_posterior() {
            Some(Arc::new(compute_kl_basis(&grid, &config.kernel, config.truncation)?))
        } else {
            None
        };
        let noise = NoiseModel::new(config.noise_sigma)?;
        let seed = config.seed;

        let mut env_rng = stream_rng(seed, Stream::Environment);
        let population = config.environment.instantiate(&mut env_rng)?;
        let total = config.recruitment_rounds * config.batch_size;
        let tasks = (0..total).map(|_| population.sample_task(&mut env_rng)).collect();

        let oracle = (0..grid.context_len())
            .map(|c| {
                let x = grid.context_point(c)[0];
                population.oracle_conditional(x, &grid, c, &mut stream_rng(seed, Stream::OracleTable(c)))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut eval_rng = stream_rng(seed, Stream::EvalTasks);
        let eval_tasks = (0..config.eval.batch_size)
            .map(|_| population.sample_task(&mut eval_rng))
            .collect();

        Ok(Self {
            config: config.clone(),
            grid,
            basis,
            noise,
            population,
            tasks,
            oracle,
            eval_tasks,
        })
    }

    pub fn context_index(&self, task: &Task) -> usize {
        self.grid.nearest_context_index(&[task.x_obs()])
    }
}

/// Prior used by the evaluation batch.
#[derive(Clone, Copy)]
pub enum EvalPrior<'a> {
    Meta(&'a MetaPosterior),
    Uniform,
    Oracle(&'a [ConditionalDensity]),
}

/// Average cumulative Bayes regret of Thompson sampling from `prior` over
/// `tasks`, each run for `interactions` steps on its own history. The
/// prior itself is never updated. Fully determined by `seed`.
pub fn evaluate_batch(
    prior: EvalPrior<'_>,
    tasks: &[Task],
    grid: &Grid,
    noise: &NoiseModel,
    interactions: usize,
    seed: u64,
) -> f64 {
    let mut policy_rng = stream_rng(seed, Stream::EvalPolicy);
    let mut total = 0.0;
    for (u, task) in tasks.iter().enumerate() {
        let mut reward_rng = stream_rng(seed, Stream::EvalReward(u));
        let c = grid.nearest_context_index(&[task.x_obs()]);
        let mut history = History::new();
        for _ in 0..interactions {
            let arm = match prior {
                EvalPrior::Meta(post) => npm_ts_select(
                    post,
                    UserView {
                        context_index: c,
                        history: &history,
                    },
                    &mut policy_rng,
                ),
                EvalPrior::Uniform => ind_ts_select(&history, grid, noise, &mut policy_rng),
                EvalPrior::Oracle(table) => oracle_ts_select(&table[c], &history, grid, noise, &mut policy_rng),
            };
            let r = observe_reward(task, arm, noise, &mut reward_rng);
            total += task.gap(arm);
            history.push(arm, r);
        }
    }
    total / tasks.len() as f64
}

struct PolicyRun {
    records: Vec<StepRecord>,
    trajectory: Trajectory,
}

fn with_step(t: usize, user_id: usize) -> impl Fn(CocoError) -> CocoError {
    move |e| CocoError::Simulation {
        t,
        user_id,
        source: Box::new(e),
    }
}

/// Runs one policy through the recruitment schedule.
fn run_policy(world: &World, policy: PolicyKind, policy_stream: Stream, evaluate: bool) -> Result<PolicyRun> {
    let cfg = &world.config;
    let grid = &world.grid;
    let noise = &world.noise;
    let seed = cfg.seed;
    let mut policy_rng = stream_rng(seed, policy_stream);

    let mut posterior = if policy.uses_posterior() {
        let basis = world.basis.clone().ok_or_else(|| {
            CocoError::InvalidInput("posterior policies need a KL basis".to_string())
        })?;
        let post_seed = stream_rng(seed, Stream::Posterior).next_u64();
        Some(init_posterior(
            Arc::clone(grid),
            basis,
            *noise,
            cfg.smc.clone(),
            post_seed,
        )?)
    } else {
        None
    };

    let mut users: Vec<UserRecord> = Vec::with_capacity(world.tasks.len());
    let mut reward_rngs: Vec<ChaCha8Rng> = Vec::with_capacity(world.tasks.len());
    let mut batches = 0;
    let recruit = |users: &mut Vec<UserRecord>, reward_rngs: &mut Vec<ChaCha8Rng>| {
        for _ in 0..cfg.batch_size {
            let id = users.len();
            let task = &world.tasks[id];
            users.push(UserRecord {
                id,
                x_obs: task.x_obs(),
                context_index: world.context_index(task),
                history: History::new(),
                count: 0,
                active: true,
            });
            reward_rngs.push(stream_rng(seed, Stream::Reward(id)));
        }
    };
    recruit(&mut users, &mut reward_rngs);
    batches += 1;

    let snapshot = |round: usize, t: usize, posterior: &Option<MetaPosterior>| -> Snapshot {
        let prior = match (policy, posterior) {
            (_, Some(p)) => EvalPrior::Meta(p),
            (PolicyKind::OracleTs, None) => EvalPrior::Oracle(&world.oracle),
            _ => EvalPrior::Uniform,
        };
        Snapshot {
            round,
            t,
            ess: posterior.as_ref().map(|p| p.ess()),
            acceptance_rate: posterior.as_ref().and_then(|p| p.stats().acceptance_rate()),
            avg_cum_bayes_regret: evaluate_batch(
                prior,
                &world.eval_tasks,
                grid,
                noise,
                cfg.eval.interactions,
                seed,
            ),
        }
    };

    let mut snapshots = Vec::new();
    if evaluate {
        snapshots.push(snapshot(0, 0, &posterior));
    }

    let mut records = Vec::with_capacity(world.tasks.len() * cfg.user_horizon);
    let mut interactions = Vec::with_capacity(records.capacity());
    // user id → history before the first observation not yet folded in
    let mut pending: BTreeMap<usize, History> = BTreeMap::new();
    let mut since_update = 0;
    let mut t = 0;
    let mut round = 0;

    let flush = |posterior: &mut MetaPosterior,
                 pending: &mut BTreeMap<usize, History>,
                 users: &[UserRecord]|
     -> Result<()> {
        let increments: Vec<HistoryIncrement> = std::mem::take(pending)
            .into_iter()
            .map(|(id, previous)| HistoryIncrement {
                context_index: users[id].context_index,
                previous,
                current: users[id].history.clone(),
            })
            .collect();
        let dataset: Vec<UserData> = users
            .iter()
            .filter(|u| !u.history.is_empty())
            .map(|u| UserData {
                context_index: u.context_index,
                history: u.history.clone(),
            })
            .collect();
        posterior.smc_update(&increments, &dataset).map(|_| ())
    };

    loop {
        let order: Vec<usize> = users.iter().filter(|u| u.active).map(|u| u.id).collect();
        for id in order {
            t += 1;
            let err = with_step(t, id);
            let user = &users[id];
            let view = UserView {
                context_index: user.context_index,
                history: &user.history,
            };
            let arm = match policy {
                PolicyKind::NpmTs => npm_ts_select(posterior.as_ref().expect("posterior"), view, &mut policy_rng),
                PolicyKind::Gids => gids_select(
                    posterior.as_ref().expect("posterior"),
                    view,
                    &cfg.gids,
                    &mut policy_rng,
                ),
                PolicyKind::IndTs => ind_ts_select(&user.history, grid, noise, &mut policy_rng),
                PolicyKind::OracleTs => oracle_ts_select(
                    &world.oracle[user.context_index],
                    &user.history,
                    grid,
                    noise,
                    &mut policy_rng,
                ),
            };
            let task = &world.tasks[id];
            let reward = observe_reward(task, arm, noise, &mut reward_rngs[id]);
            records.push(StepRecord {
                t,
                user_id: id,
                arm,
                reward,
                means: task.means().to_vec(),
            });
            interactions.push(Interaction {
                t,
                user_id: id,
                context_index: user.context_index,
                arm,
                reward,
            });

            let user = &mut users[id];
            pending.entry(id).or_insert_with(|| user.history.clone());
            user.history.push(arm, reward);
            user.count += 1;
            if user.count == cfg.user_horizon {
                user.active = false;
            }
            since_update += 1;
            if let Some(post) = posterior.as_mut() {
                if since_update >= cfg.update_every {
                    flush(post, &mut pending, &users).map_err(&err)?;
                    since_update = 0;
                }
            }
        }
        round += 1;
        if batches < cfg.recruitment_rounds {
            recruit(&mut users, &mut reward_rngs);
            batches += 1;
        }
        let done = users.iter().all(|u| !u.active);
        if done {
            break;
        }
        if evaluate && round % cfg.eval.every == 0 {
            snapshots.push(snapshot(round, t, &posterior));
        }
    }

    if let Some(post) = posterior.as_mut() {
        if !pending.is_empty() {
            let last = records.last().map_or(0, |r| r.user_id);
            flush(post, &mut pending, &users).map_err(with_step(t, last))?;
        }
    }
    if evaluate {
        snapshots.push(snapshot(round, t, &posterior));
    }

    Ok(PolicyRun {
        records,
        trajectory: Trajectory {
            policy,
            interactions,
            snapshots,
            smc: posterior.map(|p| p.stats().clone()),
            users,
        },
    })
}

/// Output of one seeded simulation.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trajectory: Trajectory,
    pub ledger: RegretLedger,
}

/// Runs the configured policy and the paired oracle over the same users,
/// contexts, means and reward noise, with independent policy randomness.
pub fn run_simulation(config: &SimConfig) -> Result<SimOutput> {
    let world = World::new(config)?;
    run_in_world(&world)
}

pub fn run_in_world(world: &World) -> Result<SimOutput> {
    let alg = run_policy(world, world.config.policy, Stream::Policy, true)?;
    let oracle = run_policy(world, PolicyKind::OracleTs, Stream::OraclePolicy, false)?;
    let ledger = RegretLedger::new(alg.records, oracle.records)?;
    Ok(SimOutput {
        trajectory: alg.trajectory,
        ledger,
    })
}
