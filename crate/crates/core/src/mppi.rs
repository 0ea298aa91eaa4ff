//! Vanilla MPPI: Gaussian policy sampling, batched double-integrator
//! rollouts, discounted scoring, soft-min weighting, mean update and the
//! receding-horizon shift. The CaT scoring layer plugs in through
//! [`Mode::Cat`].

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cat::{self, CatConfig, CatState};
use crate::costs::{control_reg_cost, control_reg_zero, goal_cost_from_pose, state_reg_slices, ControlReference, CostWeights};
use crate::error::{check_len, Error, Result};
use crate::geometry::{Capsule, Pose};
use crate::robot::{RobotModel, State};
use crate::scene::{CollisionPairSet, SceneSnapshot};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Vanilla,
    Cat,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Vanilla => "vanilla",
            Mode::Cat => "cat",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vanilla" => Ok(Mode::Vanilla),
            "cat" => Ok(Mode::Cat),
            other => Err(Error::InvalidConfig(format!(
                "unknown controller mode {other:?} (expected vanilla or cat)"
            ))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the freed last stage is filled after a horizon shift.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShiftFill {
    #[default]
    HoldLast,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MppiConfig {
    /// Number of sampled rollouts `K`.
    pub rollouts: usize,
    /// Soft-min temperature `beta`.
    pub temperature: f64,
    /// Mean update step `alpha_mu` in `(0, 1]`.
    pub step_size: f64,
    /// Integration step in seconds (the control period).
    pub dt: f64,
    /// Horizon length `T` in stages.
    pub horizon: usize,
    pub seed: u64,
    pub shift_fill: ShiftFill,
    /// Evaluate rollouts on the rayon pool.
    pub parallel: bool,
}

impl Default for MppiConfig {
    /// 1000 rollouts over 50 stages at 50 Hz.
    fn default() -> Self {
        MppiConfig {
            rollouts: 1000,
            temperature: 1.0,
            step_size: 1.0,
            dt: 0.02,
            horizon: 50,
            seed: 0,
            shift_fill: ShiftFill::HoldLast,
            parallel: true,
        }
    }
}

impl MppiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rollouts == 0 {
            return Err(Error::InvalidConfig("rollouts must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.step_size > 0.0 && self.step_size <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "step size must lie in (0, 1], got {}",
                self.step_size
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}

/// Product of independent per-stage Gaussians over joint accelerations.
#[derive(Clone, Debug)]
pub struct GaussianPolicy {
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
    /// Symmetric square roots of the covariances.
    sqrt_covariances: Vec<DMatrix<f64>>,
}

fn psd_sqrt(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if (cov - cov.transpose()).amax() > 1e-12 {
        return Err(Error::InvalidConfig("covariance must be symmetric".into()));
    }
    let eig = cov.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|l| *l < -1e-12) {
        return Err(Error::InvalidConfig("covariance must be positive semidefinite".into()));
    }
    let sqrt_l = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt_l) * eig.eigenvectors.transpose())
}

impl GaussianPolicy {
    pub fn new(means: Vec<DVector<f64>>, covariances: Vec<DMatrix<f64>>) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::InvalidConfig("policy horizon must be at least 1".into()));
        }
        check_len("policy covariances", means.len(), covariances.len())?;
        let n = means[0].len();
        for (m, c) in means.iter().zip(&covariances) {
            check_len("policy mean", n, m.len())?;
            check_len("policy covariance rows", n, c.nrows())?;
            check_len("policy covariance cols", n, c.ncols())?;
        }
        let sqrt_covariances = covariances.iter().map(psd_sqrt).collect::<Result<_>>()?;
        Ok(GaussianPolicy {
            means,
            covariances,
            sqrt_covariances,
        })
    }

    /// Zero-mean policy with the same diagonal covariance `diag(std^2)` at
    /// every stage.
    pub fn zero_mean(horizon: usize, std: &[f64]) -> Result<Self> {
        let n = std.len();
        let cov = DMatrix::from_diagonal(&DVector::from_iterator(n, std.iter().map(|s| s * s)));
        GaussianPolicy::new(vec![DVector::zeros(n); horizon], vec![cov; horizon])
    }

    pub fn horizon(&self) -> usize {
        self.means.len()
    }

    pub fn dof(&self) -> usize {
        self.means[0].len()
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn mean(&self, t: usize) -> &DVector<f64> {
        &self.means[t]
    }

    pub fn covariance(&self, t: usize) -> &DMatrix<f64> {
        &self.covariances[t]
    }

    pub fn set_means(&mut self, means: Vec<DVector<f64>>) -> Result<()> {
        check_len("policy means", self.horizon(), means.len())?;
        for m in &means {
            check_len("policy mean", self.dof(), m.len())?;
        }
        self.means = means;
        Ok(())
    }

    /// Receding-horizon shift: `mu'_t = mu_{t+1}`, last stage filled per `fill`.
    pub fn shift(&mut self, fill: ShiftFill) {
        let last = self.means.len() - 1;
        self.means.rotate_left(1);
        match fill {
            ShiftFill::HoldLast => {
                if last > 0 {
                    self.means[last] = self.means[last - 1].clone();
                } else {
                    // Single-stage horizon: rotation left the mean in place.
                }
            }
            ShiftFill::Zero => self.means[last].fill(0.0),
        }
    }

    /// Draws one control sequence (`T * n`, stage-major) into `out`, clamping
    /// each coordinate to `±limits[i]`.
    pub fn sample_into(&self, rng: &mut ChaCha8Rng, limits: &[f64], out: &mut [f64]) {
        let n = self.dof();
        let mut xi = DVector::<f64>::zeros(n);
        for (t, (mean, sqrt_cov)) in self.means.iter().zip(&self.sqrt_covariances).enumerate() {
            for x in xi.iter_mut() {
                *x = StandardNormal.sample(rng);
            }
            let row = &mut out[t * n..(t + 1) * n];
            for i in 0..n {
                let mut s = mean[i];
                for j in 0..n {
                    s += sqrt_cov[(i, j)] * xi[j];
                }
                row[i] = s.clamp(-limits[i], limits[i]);
            }
        }
    }
}

/// Independent random stream for rollout `k` of control cycle `cycle`.
pub fn rollout_rng(seed: u64, cycle: u64, k: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&cycle.to_le_bytes());
    bytes[16..24].copy_from_slice(&k.to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

/// `K` control sequences for one cycle, each `T * n` stage-major.
pub fn sample_controls(policy: &GaussianPolicy, config: &MppiConfig, cycle: u64, limits: &[f64]) -> Vec<Vec<f64>> {
    let len = policy.horizon() * policy.dof();
    (0..config.rollouts)
        .map(|k| {
            let mut out = vec![0.0; len];
            policy.sample_into(&mut rollout_rng(config.seed, cycle, k as u64), limits, &mut out);
            out
        })
        .collect()
}

/// One semi-implicit Euler step `v += u dt; q += v dt` with velocity clamping
/// and position clamping that zeroes the velocity at the bound.
#[inline]
pub fn integrate_step(model: &RobotModel, q: &mut [f64], v: &mut [f64], u: &[f64], dt: f64) {
    for (i, joint) in model.joints.iter().enumerate() {
        let vmax = joint.velocity_limit;
        let mut vi = (v[i] + u[i] * dt).clamp(-vmax, vmax);
        let mut qi = q[i] + vi * dt;
        let (lo, hi) = joint.position_limits;
        if qi < lo {
            qi = lo;
            vi = 0.0;
        } else if qi > hi {
            qi = hi;
            vi = 0.0;
        }
        q[i] = qi;
        v[i] = vi;
    }
}

/// Integrates a control sequence (`T * n`) from `x0`; returns `T + 1` states.
pub fn rollout(model: &RobotModel, x0: &State, controls: &[f64], dt: f64) -> Result<Vec<State>> {
    let n = model.dof();
    check_len("initial state", n, x0.dof())?;
    if !controls.len().is_multiple_of(n) {
        return Err(Error::DimensionMismatch {
            what: "control sequence",
            expected: n * (controls.len() / n + 1),
            got: controls.len(),
        });
    }
    let mut q = x0.q.as_slice().to_vec();
    let mut v = x0.v.as_slice().to_vec();
    let mut out = Vec::with_capacity(controls.len() / n + 1);
    out.push(x0.clone());
    for u in controls.chunks(n) {
        integrate_step(model, &mut q, &mut v, u, dt);
        out.push(State {
            q: DVector::from_column_slice(&q),
            v: DVector::from_column_slice(&v),
        });
    }
    Ok(out)
}

/// `L_k = sum_t gamma_t l_{t,k} + gamma_T l_{T,k}` for stage costs laid out
/// as `K` rows of `T + 1` entries (terminal last).
pub fn score_rollouts(stage_costs: &[f64], horizon: usize, weights: &CostWeights) -> Vec<f64> {
    let discounts: Vec<f64> = (0..=horizon).map(|t| weights.discount_at(t)).collect();
    stage_costs
        .chunks(horizon + 1)
        .map(|row| row.iter().zip(&discounts).map(|(c, g)| c * g).sum())
        .collect()
}

/// Soft-min weights `exp(-(L_k - min L)/beta)`, normalized.
pub fn compute_weights(costs: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if costs.is_empty() {
        return Err(Error::InvalidConfig("at least one rollout cost is required".into()));
    }
    if !(temperature > 0.0) {
        return Err(Error::InvalidConfig(format!("temperature must be positive, got {temperature}")));
    }
    if let Some(index) = costs.iter().position(|c| !c.is_finite()) {
        return Err(Error::NonFiniteCost { index });
    }
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = costs.iter().map(|c| (-(c - min) / temperature).exp()).collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    Ok(w)
}

/// `mu_t <- (1 - alpha) mu_t + alpha sum_k eta_k u_{t,k}` for every stage.
/// `controls` holds `K` rows of `T * n`.
pub fn update_mean(policy: &mut GaussianPolicy, controls: &[f64], weights: &[f64], step_size: f64) {
    let n = policy.dof();
    let horizon = policy.horizon();
    let row = horizon * n;
    let mut avg = vec![0.0; row];
    for (k, w) in weights.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        for (a, u) in avg.iter_mut().zip(&controls[k * row..(k + 1) * row]) {
            *a += w * u;
        }
    }
    for (t, mean) in policy.means.iter_mut().enumerate() {
        for i in 0..n {
            mean[i] = (1.0 - step_size) * mean[i] + step_size * avg[t * n + i];
        }
    }
}

/// Low-level torque `rnea(q1*, v1*, u*) + K_fix (x1* - x)`; `gain` is `n x 2n`
/// acting on the stacked `[q; v]` error.
pub fn low_level_torque(
    model: &RobotModel,
    measured: &State,
    reference: &State,
    acceleration: &[f64],
    gain: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let n = model.dof();
    check_len("measured state", n, measured.dof())?;
    check_len("reference state", n, reference.dof())?;
    check_len("feedback gain rows", n, gain.nrows())?;
    check_len("feedback gain cols", 2 * n, gain.ncols())?;
    let ff = model.rnea(reference.q.as_slice(), reference.v.as_slice(), acceleration)?;
    let error = reference.stacked() - measured.stacked();
    Ok(ff + gain * error)
}

/// Rollout storage for one control cycle. Per-rollout rows are contiguous;
/// stage arrays have `T + 1` entries per rollout with the terminal stage last.
#[derive(Clone, Debug, Default)]
pub struct RolloutBatch {
    pub rollouts: usize,
    pub horizon: usize,
    pub dof: usize,
    /// `K x T x n` sampled controls.
    pub controls: Vec<f64>,
    /// `K x (T + 1) x 2n` states, `[q, v]` per stage.
    pub states: Vec<f64>,
    /// `K x (T + 1)` task costs (goal + regularization).
    pub task_costs: Vec<f64>,
    /// `K x (T + 1)` collision violations (unweighted hinge sums).
    pub violations: Vec<f64>,
    /// `K x (T + 1)` vanilla stage costs (task + weighted collision).
    pub stage_costs: Vec<f64>,
    /// Largest signed clearance (positive = overlap) met by each rollout.
    pub worst_clearance: Vec<f64>,
    /// `K x (T + 1)` survival factors (CaT mode only, else ones).
    pub survival: Vec<f64>,
    /// Rollout scores `L_k` (vanilla cost or CaT pseudo-cost).
    pub costs: Vec<f64>,
    /// Importance weights `eta_k`.
    pub weights: Vec<f64>,
}

impl RolloutBatch {
    pub fn new(rollouts: usize, horizon: usize, dof: usize) -> Self {
        let stages = rollouts * (horizon + 1);
        RolloutBatch {
            rollouts,
            horizon,
            dof,
            controls: vec![0.0; rollouts * horizon * dof],
            states: vec![0.0; stages * 2 * dof],
            task_costs: vec![0.0; stages],
            violations: vec![0.0; stages],
            stage_costs: vec![0.0; stages],
            worst_clearance: vec![f64::NEG_INFINITY; rollouts],
            survival: vec![1.0; stages],
            costs: vec![0.0; rollouts],
            weights: vec![0.0; rollouts],
        }
    }

    pub fn control(&self, k: usize, t: usize) -> &[f64] {
        let n = self.dof;
        let start = (k * self.horizon + t) * n;
        &self.controls[start..start + n]
    }

    pub fn state(&self, k: usize, t: usize) -> (&[f64], &[f64]) {
        let n = self.dof;
        let start = (k * (self.horizon + 1) + t) * 2 * n;
        (&self.states[start..start + n], &self.states[start + n..start + 2 * n])
    }

    pub fn stage_index(&self, k: usize, t: usize) -> usize {
        k * (self.horizon + 1) + t
    }
}

/// Everything a rollout worker reads; shared immutably across workers.
pub struct RolloutContext<'a> {
    pub model: &'a RobotModel,
    pub snapshot: &'a SceneSnapshot,
    pub pairs: &'a CollisionPairSet,
    pub weights: &'a CostWeights,
    pub goal_inv: Pose,
    /// State regularization reference.
    pub reference: &'a State,
    pub accel_limits: &'a [f64],
    pub dt: f64,
}

struct Scratch {
    frames: Vec<Pose>,
    capsules: Vec<Capsule>,
    clearances: Vec<f64>,
}

impl Scratch {
    fn new(ctx: &RolloutContext) -> Self {
        Scratch {
            frames: vec![Pose::identity(); ctx.model.dof() + 1],
            capsules: ctx.model.capsules.iter().map(|c| c.capsule).collect(),
            clearances: vec![0.0; ctx.pairs.len()],
        }
    }
}

struct RolloutRow<'b> {
    controls: &'b mut [f64],
    states: &'b mut [f64],
    task: &'b mut [f64],
    violation: &'b mut [f64],
    stage: &'b mut [f64],
    worst: &'b mut f64,
}

/// Distance beyond the safety margin past which rollout clearances saturate.
/// Violations stay exact because they vanish below the margin.
pub const BROAD_PHASE_RANGE: f64 = 0.1;

/// Task cost, violation and worst clearance at one state.
#[inline]
fn evaluate_state(ctx: &RolloutContext, scratch: &mut Scratch, q: &[f64], v: &[f64]) -> (f64, f64, f64) {
    let model = ctx.model;
    model.link_frames_into(q, &mut scratch.frames);
    let ee = model.end_effector_pose(&scratch.frames);
    let goal = goal_cost_from_pose(&ee, &ctx.goal_inv, &ctx.weights.ee);
    let state = state_reg_slices(q, v, ctx.reference, ctx.weights);
    model.world_capsules_into(&scratch.frames, &mut scratch.capsules);
    let margin = ctx.pairs.margin();
    ctx.pairs.clearances_floored_into(
        &scratch.capsules,
        ctx.snapshot,
        margin + BROAD_PHASE_RANGE,
        &mut scratch.clearances,
    );
    let mut violation = 0.0;
    let mut worst = f64::NEG_INFINITY;
    for d in &scratch.clearances {
        violation += (d + margin).max(0.0);
        worst = worst.max(*d);
    }
    (goal + state, violation, worst)
}

fn evaluate_rollout(ctx: &RolloutContext, scratch: &mut Scratch, x0: &State, row: RolloutRow) {
    let n = ctx.model.dof();
    let horizon = row.task.len() - 1;
    let mut q = x0.q.as_slice().to_vec();
    let mut v = x0.v.as_slice().to_vec();
    let mut worst = f64::NEG_INFINITY;
    for t in 0..=horizon {
        let s = &mut row.states[t * 2 * n..(t + 1) * 2 * n];
        s[..n].copy_from_slice(&q);
        s[n..].copy_from_slice(&v);
        let (mut task, violation, w) = evaluate_state(ctx, scratch, &q, &v);
        worst = worst.max(w);
        if t < horizon {
            let u = &row.controls[t * n..(t + 1) * n];
            task += match ctx.weights.control_reference {
                ControlReference::Zero => control_reg_zero(u, ctx.weights),
                // Unreachable dimension errors: u and q are sized from the model.
                ControlReference::GravityTorque => {
                    control_reg_cost(ctx.model, &q, u, ctx.weights).unwrap_or(f64::INFINITY)
                }
            };
            integrate_step(ctx.model, &mut q, &mut v, u, ctx.dt);
        }
        row.task[t] = task;
        row.violation[t] = violation;
        row.stage[t] = task + ctx.weights.collision_weight * violation;
    }
    *row.worst = worst;
}

/// Samples and evaluates every rollout of a cycle into `batch`.
pub fn evaluate_batch(
    ctx: &RolloutContext,
    policy: &GaussianPolicy,
    x0: &State,
    seed: u64,
    cycle: u64,
    parallel: bool,
    batch: &mut RolloutBatch,
) {
    let n = batch.dof;
    let horizon = batch.horizon;
    let stages = horizon + 1;
    let rows: Vec<RolloutRow> = batch
        .controls
        .chunks_mut(horizon * n)
        .zip(batch.states.chunks_mut(stages * 2 * n))
        .zip(batch.task_costs.chunks_mut(stages))
        .zip(batch.violations.chunks_mut(stages))
        .zip(batch.stage_costs.chunks_mut(stages))
        .zip(batch.worst_clearance.iter_mut())
        .map(|(((((controls, states), task), violation), stage), worst)| RolloutRow {
            controls,
            states,
            task,
            violation,
            stage,
            worst,
        })
        .collect();

    let work = |scratch: &mut Scratch, (k, row): (usize, RolloutRow)| {
        policy.sample_into(&mut rollout_rng(seed, cycle, k as u64), ctx.accel_limits, row.controls);
        evaluate_rollout(ctx, scratch, x0, row);
    };
    if parallel {
        rows.into_par_iter()
            .enumerate()
            .for_each_init(|| Scratch::new(ctx), work);
    } else {
        let mut scratch = Scratch::new(ctx);
        rows.into_iter().enumerate().for_each(|item| work(&mut scratch, item));
    }
}

/// Per-cycle record streamed to the runner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleDiagnostics {
    pub cycle: u64,
    pub mode: Mode,
    pub rollout_costs: Vec<f64>,
    pub min_cost: f64,
    pub mean_cost: f64,
    /// `1 / sum eta^2`.
    pub effective_samples: f64,
    /// Largest signed clearance (positive = overlap) over all rollout stages,
    /// saturated from below at `-(margin + BROAD_PHASE_RANGE)`.
    pub worst_rollout_clearance: f64,
    /// Mean terminal survival over rollouts (1 in vanilla mode).
    pub mean_terminal_survival: f64,
    pub min_terminal_survival: f64,
    pub c_max: Option<f64>,
    pub wall_time_ms: f64,
}

#[derive(Clone, Debug)]
pub struct ControlOutput {
    /// First control `u*_0` of the optimized sequence.
    pub control: DVector<f64>,
    /// `x1*`: `x0` integrated one step with `u*_0`.
    pub reference: State,
    pub diagnostics: CycleDiagnostics,
}

/// Goal, reference and collision setup for one task.
#[derive(Clone, Debug)]
pub struct Task {
    pub goal: Pose,
    /// State regularization reference.
    pub reference: State,
    pub pairs: CollisionPairSet,
}

/// Receding-horizon MPPI controller (vanilla or CaT).
#[derive(Clone, Debug)]
pub struct Controller {
    model: RobotModel,
    config: MppiConfig,
    weights: CostWeights,
    cat_config: CatConfig,
    mode: Mode,
    task: Task,
    policy: GaussianPolicy,
    cat_state: CatState,
    accel_limits: Vec<f64>,
    cycle: u64,
    batch: RolloutBatch,
}

impl Controller {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: RobotModel,
        config: MppiConfig,
        weights: CostWeights,
        cat_config: CatConfig,
        mode: Mode,
        policy: GaussianPolicy,
        task: Task,
    ) -> Result<Self> {
        config.validate()?;
        cat_config.validate()?;
        let n = model.dof();
        weights.validate(n)?;
        check_len("policy joints", n, policy.dof())?;
        check_len("policy horizon", config.horizon, policy.horizon())?;
        check_len("reference state", n, task.reference.dof())?;
        let accel_limits = model.acceleration_limits();
        let batch = RolloutBatch::new(config.rollouts, config.horizon, n);
        Ok(Controller {
            cat_state: CatState::new(&cat_config),
            model,
            config,
            weights,
            cat_config,
            mode,
            task,
            policy,
            accel_limits,
            cycle: 0,
            batch,
        })
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn config(&self) -> &MppiConfig {
        &self.config
    }

    pub fn weights(&self) -> &CostWeights {
        &self.weights
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn policy(&self) -> &GaussianPolicy {
        &self.policy
    }

    pub fn batch(&self) -> &RolloutBatch {
        &self.batch
    }

    pub fn cat_state(&self) -> &CatState {
        &self.cat_state
    }

    pub fn task(&self) -> &Task {
        &self.task
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    /// One full cycle: sample, roll out, score, weight, update the mean,
    /// extract the first control and shift the horizon.
    pub fn control_step(&mut self, x0: &State, snapshot: &SceneSnapshot) -> Result<ControlOutput> {
        let started = Instant::now();
        let n = self.model.dof();
        check_len("measured state", n, x0.dof())?;
        if snapshot.len() < self.task.pairs.pairs().iter().map(|p| p.env + 1).max().unwrap_or(0) {
            return Err(Error::InvalidConfig("scene snapshot is missing paired primitives".into()));
        }

        let ctx = RolloutContext {
            model: &self.model,
            snapshot,
            pairs: &self.task.pairs,
            weights: &self.weights,
            goal_inv: self.task.goal.inverse(),
            reference: &self.task.reference,
            accel_limits: &self.accel_limits,
            dt: self.config.dt,
        };
        evaluate_batch(
            &ctx,
            &self.policy,
            x0,
            self.config.seed,
            self.cycle,
            self.config.parallel,
            &mut self.batch,
        );

        match self.mode {
            Mode::Vanilla => {
                self.batch.costs = score_rollouts(&self.batch.stage_costs, self.config.horizon, &self.weights);
                self.batch.survival.fill(1.0);
            }
            Mode::Cat => {
                cat::score_batch(&mut self.batch, &mut self.cat_state, &self.cat_config, &self.weights)?;
            }
        }
        self.batch.weights = compute_weights(&self.batch.costs, self.config.temperature)?;
        update_mean(&mut self.policy, &self.batch.controls, &self.batch.weights, self.config.step_size);

        let control = DVector::from_iterator(
            n,
            self.policy.mean(0).iter().zip(&self.accel_limits).map(|(u, l)| u.clamp(-*l, *l)),
        );
        let mut q = x0.q.as_slice().to_vec();
        let mut v = x0.v.as_slice().to_vec();
        integrate_step(&self.model, &mut q, &mut v, control.as_slice(), self.config.dt);
        let reference = State {
            q: DVector::from_vec(q),
            v: DVector::from_vec(v),
        };
        self.policy.shift(self.config.shift_fill);

        let diagnostics = self.diagnostics(started);
        self.cycle += 1;
        Ok(ControlOutput {
            control,
            reference,
            diagnostics,
        })
    }

    fn diagnostics(&self, started: Instant) -> CycleDiagnostics {
        let b = &self.batch;
        let k = b.rollouts as f64;
        let stages = b.horizon + 1;
        let terminal = || b.survival.chunks(stages).map(|row| row[stages - 1]);
        CycleDiagnostics {
            cycle: self.cycle,
            mode: self.mode,
            rollout_costs: b.costs.clone(),
            min_cost: b.costs.iter().copied().fold(f64::INFINITY, f64::min),
            mean_cost: b.costs.iter().sum::<f64>() / k,
            effective_samples: 1.0 / b.weights.iter().map(|w| w * w).sum::<f64>(),
            worst_rollout_clearance: b.worst_clearance.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_terminal_survival: terminal().sum::<f64>() / k,
            min_terminal_survival: terminal().fold(f64::INFINITY, f64::min),
            c_max: (self.mode == Mode::Cat).then_some(self.cat_state.c_max),
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        }
    }
}
