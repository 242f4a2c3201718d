use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;

use super::config::{PolicyKind, SimConfig};
use super::sim::{run_simulation, SimOutput};
use super::stats::{
    mean, paired_difference_ci, wilcoxon_signed_rank_less, MeanSd, PairedDifference, WilcoxonResult,
};

/// Headline numbers from one seeded run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub policy: PolicyKind,
    pub final_bayes_regret: f64,
    pub final_multi_task_regret: f64,
    pub first_eval_regret: f64,
    pub final_eval_regret: f64,
    pub min_ess: Option<f64>,
    pub acceptance_rate: Option<f64>,
    pub resample_events: usize,
    pub collapse_recoveries: usize,
}

impl SeedResult {
    pub fn from_output(seed: u64, out: &SimOutput) -> Self {
        let snaps = &out.trajectory.snapshots;
        let smc = out.trajectory.smc.as_ref();
        Self {
            seed,
            policy: out.trajectory.policy,
            final_bayes_regret: out.ledger.bayes_regret().last().copied().unwrap_or(0.0),
            final_multi_task_regret: out.ledger.multi_task_regret().last().copied().unwrap_or(0.0),
            first_eval_regret: snaps.first().map_or(f64::NAN, |s| s.avg_cum_bayes_regret),
            final_eval_regret: snaps.last().map_or(f64::NAN, |s| s.avg_cum_bayes_regret),
            min_ess: smc.and_then(|s| s.min_ess),
            acceptance_rate: smc.and_then(|s| s.acceptance_rate()),
            resample_events: smc.map_or(0, |s| s.resample_events),
            collapse_recoveries: smc.map_or(0, |s| s.collapse_recoveries),
        }
    }
}

/// Across-seed aggregates for one policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    pub policy: PolicyKind,
    pub seeds: usize,
    pub final_bayes_regret: MeanSd,
    pub final_multi_task_regret: MeanSd,
    pub first_eval_regret: MeanSd,
    pub final_eval_regret: MeanSd,
    pub mean_min_ess: Option<f64>,
    pub mean_acceptance_rate: Option<f64>,
    pub resample_events: usize,
    pub collapse_recoveries: usize,
}

impl PolicySummary {
    pub fn of(policy: PolicyKind, results: &[SeedResult]) -> Self {
        let pick = |f: fn(&SeedResult) -> f64| MeanSd::of(&results.iter().map(f).collect::<Vec<_>>());
        let opt_mean = |f: fn(&SeedResult) -> Option<f64>| {
            let xs: Vec<f64> = results.iter().filter_map(f).collect();
            (!xs.is_empty()).then(|| mean(&xs))
        };
        Self {
            policy,
            seeds: results.len(),
            final_bayes_regret: pick(|r| r.final_bayes_regret),
            final_multi_task_regret: pick(|r| r.final_multi_task_regret),
            first_eval_regret: pick(|r| r.first_eval_regret),
            final_eval_regret: pick(|r| r.final_eval_regret),
            mean_min_ess: opt_mean(|r| r.min_ess),
            mean_acceptance_rate: opt_mean(|r| r.acceptance_rate),
            resample_events: results.iter().map(|r| r.resample_events).sum(),
            collapse_recoveries: results.iter().map(|r| r.collapse_recoveries).sum(),
        }
    }
}

/// Runs every seed, in parallel across seeds. Output order follows `seeds`.
pub fn run_seeds(config: &SimConfig, seeds: &[u64]) -> Result<Vec<(u64, SimOutput)>> {
    seeds
        .par_iter()
        .map(|&s| run_simulation(&config.with_seed(s)).map(|o| (s, o)))
        .collect()
}

/// Cross-policy comparisons over seeds paired by index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparisons {
    /// One-sided Wilcoxon tests that a policy's final multi-task regret
    /// is below Ind-TS.
    pub mtr_below_ind_ts: Vec<(PolicyKind, WilcoxonResult)>,
    /// GIDS minus NPM-TS final multi-task regret, 95% t interval.
    pub gids_minus_npm_ts_mtr: Option<PairedDifference>,
    /// NPM-TS evaluation regret, final snapshot below first.
    pub npm_ts_eval_trend: Option<WilcoxonResult>,
    pub lowest_mean_bayes_regret: Option<PolicyKind>,
}

fn column(results: &[SeedResult], f: fn(&SeedResult) -> f64) -> Vec<f64> {
    results.iter().map(f).collect()
}

pub fn compare(by_policy: &[(PolicyKind, Vec<SeedResult>)]) -> Comparisons {
    let get = |p: PolicyKind| by_policy.iter().find(|(q, _)| *q == p).map(|(_, r)| r.as_slice());
    let mtr = |r: &[SeedResult]| column(r, |s| s.final_multi_task_regret);

    let mut mtr_below_ind_ts = Vec::new();
    if let Some(ind) = get(PolicyKind::IndTs) {
        for p in [PolicyKind::NpmTs, PolicyKind::Gids] {
            if let Some(r) = get(p) {
                mtr_below_ind_ts.push((p, wilcoxon_signed_rank_less(&mtr(r), &mtr(ind))));
            }
        }
    }
    let gids_minus_npm_ts_mtr = match (get(PolicyKind::Gids), get(PolicyKind::NpmTs)) {
        (Some(g), Some(n)) => Some(paired_difference_ci(&mtr(g), &mtr(n), 0.95)),
        _ => None,
    };
    let npm_ts_eval_trend = get(PolicyKind::NpmTs).map(|r| {
        wilcoxon_signed_rank_less(
            &column(r, |s| s.final_eval_regret),
            &column(r, |s| s.first_eval_regret),
        )
    });
    let lowest_mean_bayes_regret = by_policy
        .iter()
        .map(|(p, r)| (*p, mean(&column(r, |s| s.final_bayes_regret))))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(p, _)| p);
    Comparisons {
        mtr_below_ind_ts,
        gids_minus_npm_ts_mtr,
        npm_ts_eval_trend,
        lowest_mean_bayes_regret,
    }
}
