//! Closed-loop benchmark harness: trials, metrics, multi-seed campaigns and
//! result persistence (JSON lines plus a rendered text table).

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mppi::{integrate_step, low_level_torque, Controller, Mode};
use crate::robot::State;
use crate::scenario::{resolve_scenario, Scenario, ScenarioFile};

/// Why an episode ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// End-effector error fell below the settle distance.
    Settled,
    /// Some collision pair reached zero or negative clearance.
    Collision,
    Timeout,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialOptions {
    /// Keep the per-cycle trace in the result.
    pub record_trace: bool,
    /// Overrides the scenario's rollout parallelism.
    pub parallel_rollouts: Option<bool>,
}

/// One control cycle of a closed-loop episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub time: f64,
    /// Plant state at the start of the cycle.
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub control: Vec<f64>,
    pub torque: Vec<f64>,
    /// Smallest separation (m, positive = clear) over all pairs at the
    /// start of the cycle.
    pub clearance: Option<f64>,
    /// End-effector translation error (m) at the start of the cycle.
    pub distance: f64,
    pub ee_position: [f64; 3],
    pub min_cost: f64,
    pub effective_samples: f64,
    pub mean_terminal_survival: f64,
    pub c_max: Option<f64>,
    pub wall_time_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub scenario: String,
    pub mode: Mode,
    pub seed: u64,
    pub success: bool,
    pub outcome: Outcome,
    /// Executed control cycles.
    pub cycles: usize,
    /// Final end-effector translation error in cm.
    pub distance_cm: f64,
    /// Minimum separation to non-fixture obstacles in cm (positive = clear);
    /// `None` when the scenario has none.
    pub obstacle_clearance_cm: Option<f64>,
    /// Minimum separation over every collision pair, fixtures included.
    pub min_clearance_cm: Option<f64>,
    /// `sum ||tau_{c+1} - tau_c||^2 dt`.
    pub smoothness: f64,
    /// Mean control-cycle wall time in ms (0 when no cycle ran).
    pub compute_time_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<CycleRecord>>,
}

impl TrialResult {
    pub fn collided(&self) -> bool {
        self.outcome == Outcome::Collision
    }
}

/// Metric inputs gathered along an episode.
#[derive(Clone, Debug, Default)]
pub struct EpisodeTrace {
    pub dt: f64,
    pub torques: Vec<DVector<f64>>,
    pub wall_times_ms: Vec<f64>,
    /// Per-cycle minimum separation over non-fixture pairs (m).
    pub obstacle_clearances: Vec<f64>,
    /// Per-cycle minimum separation over all pairs (m).
    pub all_clearances: Vec<f64>,
    pub final_distance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub distance_cm: f64,
    pub obstacle_clearance_cm: Option<f64>,
    pub min_clearance_cm: Option<f64>,
    pub smoothness: f64,
    pub compute_time_ms: f64,
}

pub fn compute_metrics(trace: &EpisodeTrace) -> Metrics {
    let min = |xs: &[f64]| xs.iter().copied().reduce(f64::min).map(|d| d * 100.0);
    let smoothness = trace
        .torques
        .windows(2)
        .map(|w| (&w[1] - &w[0]).norm_squared() * trace.dt)
        .sum();
    let compute_time_ms = if trace.wall_times_ms.is_empty() {
        0.0
    } else {
        trace.wall_times_ms.iter().sum::<f64>() / trace.wall_times_ms.len() as f64
    };
    Metrics {
        distance_cm: trace.final_distance * 100.0,
        obstacle_clearance_cm: min(&trace.obstacle_clearances),
        min_clearance_cm: min(&trace.all_clearances),
        smoothness,
        compute_time_ms,
    }
}

/// Plant noise stream, disjoint from every rollout stream of the same seed.
fn plant_rng(seed: u64) -> ChaCha8Rng {
    crate::mppi::rollout_rng(seed, u64::MAX, u64::MAX)
}

/// Runs one closed-loop episode.
pub fn run_trial(scenario: &Scenario, mode: Mode, seed: u64, options: &TrialOptions) -> Result<TrialResult> {
    let model = &scenario.robot;
    let n = model.dof();
    let mut config = scenario.mppi.clone();
    config.seed = seed;
    if let Some(p) = options.parallel_rollouts {
        config.parallel = p;
    }
    let dt = config.dt;
    let mut controller = Controller::new(
        model.clone(),
        config,
        scenario.weights.clone(),
        scenario.cat,
        mode,
        scenario.policy()?,
        scenario.task(),
    )?;

    let pairs = &scenario.pairs;
    let is_obstacle: Vec<bool> = pairs
        .pairs()
        .iter()
        .map(|p| !scenario.scene.obstacles[p.env].fixture)
        .collect();
    let noise = (scenario.episode.state_noise_std > 0.0)
        .then(|| Normal::new(0.0, scenario.episode.state_noise_std).expect("validated std"));
    let mut rng = plant_rng(seed);

    let mut trace = EpisodeTrace {
        dt,
        ..Default::default()
    };
    let mut records = Vec::new();
    let mut x = scenario.start.clone();
    let max_cycles = scenario.max_cycles();
    let goal = scenario.goal.translation.vector;
    let mut cycle = 0;
    let outcome = loop {
        let time = cycle as f64 * dt;
        let snapshot = scenario.scene.snapshot_at(time);
        let d_sgn = crate::scene::min_clearances(model, x.q.as_slice(), &snapshot, pairs)?;
        let ee = model.forward_kinematics(x.q.as_slice())?.end_effector;
        let distance = (ee.translation.vector - goal).norm();
        let mut worst_all = f64::INFINITY;
        let mut worst_obstacle = f64::INFINITY;
        for (d, obstacle) in d_sgn.iter().zip(&is_obstacle) {
            let separation = -d;
            worst_all = worst_all.min(separation);
            if *obstacle {
                worst_obstacle = worst_obstacle.min(separation);
            }
        }
        if !d_sgn.is_empty() {
            trace.all_clearances.push(worst_all);
        }
        if is_obstacle.iter().any(|o| *o) {
            trace.obstacle_clearances.push(worst_obstacle);
        }
        trace.final_distance = distance;

        if !d_sgn.is_empty() && worst_all <= 0.0 {
            break Outcome::Collision;
        }
        if distance < scenario.episode.settle_distance {
            break Outcome::Settled;
        }
        if cycle >= max_cycles {
            break Outcome::Timeout;
        }

        let out = controller.control_step(&x, &snapshot)?;
        let torque = low_level_torque(model, &x, &out.reference, out.control.as_slice(), &scenario.gain)?;
        if options.record_trace {
            let d = &out.diagnostics;
            records.push(CycleRecord {
                time,
                q: x.q.as_slice().to_vec(),
                v: x.v.as_slice().to_vec(),
                control: out.control.as_slice().to_vec(),
                torque: torque.as_slice().to_vec(),
                clearance: (!d_sgn.is_empty()).then_some(worst_all),
                distance,
                ee_position: ee.translation.vector.into(),
                min_cost: d.min_cost,
                effective_samples: d.effective_samples,
                mean_terminal_survival: d.mean_terminal_survival,
                c_max: d.c_max,
                wall_time_ms: d.wall_time_ms,
            });
        }
        trace.torques.push(torque);
        trace.wall_times_ms.push(out.diagnostics.wall_time_ms);

        let mut q = x.q.as_slice().to_vec();
        let mut v = x.v.as_slice().to_vec();
        integrate_step(model, &mut q, &mut v, out.control.as_slice(), dt);
        if let Some(normal) = &noise {
            for i in 0..n {
                q[i] += normal.sample(&mut rng);
                v[i] += normal.sample(&mut rng);
            }
            for (i, joint) in model.joints.iter().enumerate() {
                q[i] = q[i].clamp(joint.position_limits.0, joint.position_limits.1);
            }
        }
        x = State {
            q: DVector::from_vec(q),
            v: DVector::from_vec(v),
        };
        cycle += 1;
    };

    let metrics = compute_metrics(&trace);
    let collided = outcome == Outcome::Collision;
    Ok(TrialResult {
        scenario: scenario.name().to_string(),
        mode,
        seed,
        success: !collided && trace.final_distance < scenario.episode.success_distance,
        outcome,
        cycles: cycle,
        distance_cm: metrics.distance_cm,
        obstacle_clearance_cm: metrics.obstacle_clearance_cm,
        min_clearance_cm: metrics.min_clearance_cm,
        smoothness: metrics.smoothness,
        compute_time_ms: metrics.compute_time_ms,
        trace: options.record_trace.then_some(records),
    })
}

fn default_modes() -> Vec<Mode> {
    vec![Mode::Vanilla, Mode::Cat]
}

fn default_seeds() -> usize {
    10
}

/// Campaign description, usually read from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    /// Bundled scenario numbers (`"1"`..`"6"`) or scenario file paths.
    pub scenarios: Vec<String>,
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    /// Number of seeds per (scenario, mode).
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub first_seed: u64,
    /// Overrides every scenario's episode duration (s).
    #[serde(default)]
    pub max_duration: Option<f64>,
    /// Overrides every scenario's success threshold (m).
    #[serde(default)]
    pub success_distance: Option<f64>,
    /// Multiplies every scenario's collision weight.
    #[serde(default)]
    pub collision_weight_scale: Option<f64>,
    /// Run trials concurrently.
    #[serde(default)]
    pub parallel_trials: bool,
    /// Overrides rollout parallelism inside each trial.
    #[serde(default)]
    pub parallel_rollouts: Option<bool>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl CampaignConfig {
    pub fn new(scenarios: Vec<String>) -> Self {
        CampaignConfig {
            scenarios,
            modes: default_modes(),
            seeds: default_seeds(),
            first_seed: 0,
            max_duration: None,
            success_distance: None,
            collision_weight_scale: None,
            parallel_trials: false,
            parallel_rollouts: None,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::InvalidConfig("seeds must be at least 1".into()));
        }
        if self.scenarios.is_empty() || self.modes.is_empty() {
            return Err(Error::InvalidConfig("campaign needs at least one scenario and mode".into()));
        }
        if let Some(d) = self.success_distance {
            if !(d > 0.0) {
                return Err(Error::InvalidConfig(format!("success distance must be positive, got {d}")));
            }
        }
        if let Some(s) = self.collision_weight_scale {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidConfig(format!("collision weight scale must be non-negative, got {s}")));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: CampaignConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        // Scenario paths are relative to the campaign file.
        if let Some(dir) = path.parent() {
            for s in &mut config.scenarios {
                if s.parse::<usize>().is_err() && Path::new(s).is_relative() {
                    *s = dir.join(&*s).to_string_lossy().into_owned();
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.first_seed + i).collect()
    }

    /// Loads every scenario with the campaign overrides applied.
    pub fn resolve_scenarios(&self) -> Result<Vec<Scenario>> {
        self.scenarios
            .iter()
            .map(|spec| {
                let mut s = resolve_scenario(spec)?;
                if let Some(d) = self.max_duration {
                    s.episode.max_duration = d;
                    s.file.episode.max_duration = d;
                }
                if let Some(d) = self.success_distance {
                    s.episode.success_distance = d;
                    s.file.episode.success_distance = d;
                }
                if let Some(k) = self.collision_weight_scale {
                    s.weights.collision_weight *= k;
                    s.file.costs.collision_weight *= k;
                }
                s.episode.validate()?;
                Ok(s)
            })
            .collect()
    }
}

/// Header record of a results file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignMetadata {
    pub tool: String,
    pub version: String,
    pub config: CampaignConfig,
    pub seeds: Vec<u64>,
    /// Effective scenario documents, overrides applied.
    pub scenarios: Vec<ScenarioFile>,
}

/// Aggregate over the seeds of one (scenario, mode).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scenario: String,
    pub mode: Mode,
    pub trials: usize,
    pub success_rate: f64,
    pub mean_distance_cm: f64,
    pub mean_obstacle_clearance_cm: Option<f64>,
    pub worst_obstacle_clearance_cm: Option<f64>,
    pub mean_smoothness: f64,
    pub mean_compute_time_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignResults {
    pub metadata: CampaignMetadata,
    pub trials: Vec<TrialResult>,
}

impl CampaignResults {
    /// Rows in first-appearance order of (scenario, mode).
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        aggregate(&self.trials)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let ser = |v: &serde_json::Value| serde_json::to_string(v).map_err(|e| Error::Serialization(e.to_string()));
        let mut out = ser(&serde_json::json!({ "metadata": self.metadata }))?;
        out.push('\n');
        for t in &self.trials {
            out.push_str(&ser(&serde_json::json!({ "trial": t }))?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl()?.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            message: format!("line {line}: {message}"),
        };
        let mut metadata = None;
        let mut trials = Vec::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            #[derive(Deserialize)]
            #[serde(rename_all = "snake_case")]
            enum Record {
                Metadata(CampaignMetadata),
                Trial(TrialResult),
            }
            match serde_json::from_str::<Record>(&line).map_err(|e| parse_err(i + 1, e.to_string()))? {
                Record::Metadata(m) => metadata = Some(m),
                Record::Trial(t) => trials.push(t),
            }
        }
        let metadata = metadata.ok_or_else(|| parse_err(1, "missing metadata record".into()))?;
        Ok(CampaignResults { metadata, trials })
    }
}

pub fn aggregate(trials: &[TrialResult]) -> Vec<AggregateRow> {
    let mut keys: Vec<(String, Mode)> = Vec::new();
    for t in trials {
        let key = (t.scenario.clone(), t.mode);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(scenario, mode)| {
            let group: Vec<&TrialResult> = trials
                .iter()
                .filter(|t| t.scenario == scenario && t.mode == mode)
                .collect();
            let n = group.len() as f64;
            let mean = |f: &dyn Fn(&TrialResult) -> f64| group.iter().map(|t| f(t)).sum::<f64>() / n;
            let clearances: Vec<f64> = group.iter().filter_map(|t| t.obstacle_clearance_cm).collect();
            AggregateRow {
                trials: group.len(),
                success_rate: group.iter().filter(|t| t.success).count() as f64 / n,
                mean_distance_cm: mean(&|t| t.distance_cm),
                mean_obstacle_clearance_cm: (!clearances.is_empty())
                    .then(|| clearances.iter().sum::<f64>() / clearances.len() as f64),
                worst_obstacle_clearance_cm: clearances.iter().copied().reduce(f64::min),
                mean_smoothness: mean(&|t| t.smoothness),
                mean_compute_time_ms: mean(&|t| t.compute_time_ms),
                scenario,
                mode,
            }
        })
        .collect()
}

/// Renders aggregate rows as a fixed-width comparison table.
pub fn render_table(rows: &[AggregateRow]) -> String {
    let mut out = String::new();
    let header = [
        "Scenario", "Method", "N", "Success", "Dist.Target[cm]", "Dist.Obst[cm]", "Worst.Obst[cm]", "Smoothness",
        "Comp.Time[ms]",
    ];
    let fmt_opt = |x: Option<f64>| x.map_or_else(|| "--".to_string(), |v| format!("{v:.2}"));
    let mut lines: Vec<[String; 9]> = vec![header.map(String::from)];
    for r in rows {
        lines.push([
            r.scenario.clone(),
            match r.mode {
                Mode::Vanilla => "MPPI".to_string(),
                Mode::Cat => "CaT-MPPI".to_string(),
            },
            r.trials.to_string(),
            format!("{:.2}", r.success_rate),
            format!("{:.2}", r.mean_distance_cm),
            fmt_opt(r.mean_obstacle_clearance_cm),
            fmt_opt(r.worst_obstacle_clearance_cm),
            format!("{:.3}", r.mean_smoothness),
            format!("{:.2}", r.mean_compute_time_ms),
        ]);
    }
    let mut widths = [0usize; 9];
    for l in &lines {
        for (w, cell) in widths.iter_mut().zip(l) {
            *w = (*w).max(cell.len());
        }
    }
    for (i, l) in lines.iter().enumerate() {
        let cells: Vec<String> = l
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, w))| if c < 2 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        if i == 0 {
            let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            let _ = writeln!(out, "{}", "-".repeat(total));
        }
    }
    out
}

/// Runs every (scenario, mode, seed) trial of a campaign. Trial order in the
/// result is scenario-major, then mode, then seed, independent of
/// `parallel_trials`.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignResults> {
    config.validate()?;
    let scenarios = config.resolve_scenarios()?;
    let seeds = config.seed_list();
    let mut jobs: Vec<(usize, Mode, u64)> = Vec::new();
    for s in 0..scenarios.len() {
        for mode in &config.modes {
            jobs.extend(seeds.iter().map(|seed| (s, *mode, *seed)));
        }
    }
    let options = TrialOptions {
        record_trace: false,
        parallel_rollouts: config.parallel_rollouts,
    };
    let run = |(s, mode, seed): &(usize, Mode, u64)| run_trial(&scenarios[*s], *mode, *seed, &options);
    let trials: Vec<TrialResult> = if config.parallel_trials {
        jobs.par_iter().map(run).collect::<Result<_>>()?
    } else {
        jobs.iter().map(run).collect::<Result<_>>()?
    };
    let results = CampaignResults {
        metadata: CampaignMetadata {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            seeds,
            scenarios: scenarios.iter().map(|s| s.file.clone()).collect(),
        },
        trials,
    };
    if let Some(path) = &config.output {
        results.write_jsonl(path)?;
    }
    Ok(results)
}
