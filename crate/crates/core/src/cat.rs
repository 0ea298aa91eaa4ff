//! Constraints-as-terminations scoring. Collision violations become
//! per-stage termination hazards; rollouts are ranked by their
//! survival-weighted reward against adaptive baselines instead of a
//! penalized cost.

use serde::{Deserialize, Serialize};

use crate::costs::CostWeights;
use crate::error::{check_len, Error, Result};
use crate::mppi::{compute_weights, RolloutBatch};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatConfig {
    /// Largest per-stage termination probability.
    pub p_max: f64,
    /// EMA factor of the violation normalizer.
    pub tau_c: f64,
    /// EMA factor of the reward baselines.
    pub tau_b: f64,
    pub epsilon: f64,
}

impl Default for CatConfig {
    fn default() -> Self {
        CatConfig {
            p_max: 0.3,
            tau_c: 0.95,
            tau_b: 0.95,
            epsilon: 1e-6,
        }
    }
}

impl CatConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_max) {
            return Err(Error::InvalidConfig(format!("p_max must lie in [0, 1], got {}", self.p_max)));
        }
        for (name, tau) in [("tau_c", self.tau_c), ("tau_b", self.tau_b)] {
            if !(0.0..1.0).contains(&tau) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1), got {tau}")));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Running normalizer and baselines, carried across control cycles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatState {
    /// Violation normalizer, always `>= epsilon`.
    pub c_max: f64,
    /// Running-stage reward baseline.
    pub baseline: f64,
    /// Terminal reward baseline.
    pub terminal_baseline: f64,
}

impl CatState {
    pub fn new(config: &CatConfig) -> Self {
        CatState {
            c_max: config.epsilon,
            baseline: 0.0,
            terminal_baseline: 0.0,
        }
    }
}

/// Termination probability `p_max * clip(v / c_max, 0, 1)`.
pub fn hazard(violation: f64, c_max: f64, p_max: f64) -> Result<f64> {
    if !(c_max > 0.0) {
        return Err(Error::InvalidConfig(format!("c_max must be positive, got {c_max}")));
    }
    Ok(p_max * (violation / c_max).clamp(0.0, 1.0))
}

/// `c_max <- max(tau_c c_max + (1 - tau_c) batch_max, epsilon)`.
pub fn update_cmax(state: &mut CatState, batch_max_violation: f64, config: &CatConfig) {
    let ema = config.tau_c * state.c_max + (1.0 - config.tau_c) * batch_max_violation;
    state.c_max = ema.max(config.epsilon);
}

/// `b <- max(tau_b b + (1 - tau_b) b_bar, b_bar) + epsilon`, likewise for the
/// terminal baseline. Afterwards every reward in the batch is at least
/// `epsilon`.
pub fn update_baselines(state: &mut CatState, batch_max_task: f64, batch_max_terminal: f64, config: &CatConfig) {
    let blend = |b: f64, bar: f64| (config.tau_b * b + (1.0 - config.tau_b) * bar).max(bar) + config.epsilon;
    state.baseline = blend(state.baseline, batch_max_task);
    state.terminal_baseline = blend(state.terminal_baseline, batch_max_terminal);
}

/// Cumulative survival `S_t = prod_{m <= t} (1 - delta_m)`.
pub fn survival(hazards: &[f64]) -> Vec<f64> {
    let mut acc = 1.0;
    hazards
        .iter()
        .map(|d| {
            acc *= 1.0 - d;
            acc
        })
        .collect()
}

/// Pseudo-cost `-(sum_t gamma_t S_t r_t)` over `T + 1` stages, terminal last.
pub fn cat_score(survival: &[f64], rewards: &[f64], weights: &CostWeights) -> Result<f64> {
    check_len("rewards", survival.len(), rewards.len())?;
    Ok(-survival
        .iter()
        .zip(rewards)
        .enumerate()
        .map(|(t, (s, r))| weights.discount_at(t) * s * r)
        .sum::<f64>())
}

/// Soft-min weights over CaT pseudo-costs.
pub fn cat_weights(pseudo_costs: &[f64], temperature: f64) -> Result<Vec<f64>> {
    compute_weights(pseudo_costs, temperature)
}

/// Scores a fully evaluated batch: updates the normalizer and baselines from
/// this batch, then fills `batch.survival` and `batch.costs`.
pub fn score_batch(
    batch: &mut RolloutBatch,
    state: &mut CatState,
    config: &CatConfig,
    weights: &CostWeights,
) -> Result<()> {
    let stages = batch.horizon + 1;
    let max_violation = batch.violations.iter().copied().fold(0.0, f64::max);
    let (mut max_task, mut max_terminal) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for row in batch.task_costs.chunks(stages) {
        for c in &row[..stages - 1] {
            max_task = max_task.max(*c);
        }
        max_terminal = max_terminal.max(row[stages - 1]);
    }
    if let Some(index) = batch
        .task_costs
        .iter()
        .chain(&batch.violations)
        .position(|c| !c.is_finite())
    {
        return Err(Error::NonFiniteCost {
            index: index % batch.task_costs.len() / stages,
        });
    }
    update_cmax(state, max_violation, config);
    update_baselines(state, max_task, max_terminal, config);

    let discounts: Vec<f64> = (0..stages).map(|t| weights.discount_at(t)).collect();
    let c_max = state.c_max;
    for ((violations, tasks), (survival, cost)) in batch
        .violations
        .chunks(stages)
        .zip(batch.task_costs.chunks(stages))
        .zip(batch.survival.chunks_mut(stages).zip(batch.costs.iter_mut()))
    {
        let mut alive = 1.0;
        let mut score = 0.0;
        for t in 0..stages {
            alive *= 1.0 - config.p_max * (violations[t] / c_max).clamp(0.0, 1.0);
            survival[t] = alive;
            let b = if t + 1 == stages {
                state.terminal_baseline
            } else {
                state.baseline
            };
            score += discounts[t] * alive * (b - tasks[t]);
        }
        *cost = -score;
    }
    Ok(())
}
