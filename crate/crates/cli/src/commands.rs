//! Subcommand implementations, shared by the binary and the test suites.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use thiserror::Error;

use fgplan_core::backups::BackupRule;
use fgplan_core::engine::{posteriors, solve_horizon, steady_state, Boundary, EngineError};
use fgplan_core::model::{build_grid_model, load_map, GridSpec};
use fgplan_core::oracle;
use fgplan_core::policy::{
    extract_policy, greedy_rollout, mean_row_entropy, parallel_decode, progressive_decode,
    sampled_rollout, PolicyError,
};
use fgplan_core::{MdpModel64, PolicyTable64};

use crate::output;

/// Process exit codes: 2 parse/config, 3 divergence, 4 infeasibility.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse: {0}")]
    Parse(String),
    #[error("solve: {0}")]
    Diverged(String),
    #[error("solve: {0}")]
    Infeasible(String),
    #[error("write: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Diverged(_) => 3,
            CliError::Infeasible(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

fn engine_err(stage: &str, e: EngineError) -> CliError {
    match e {
        EngineError::Diverged { .. } => CliError::Diverged(format!("{stage}: {e}")),
        EngineError::Infeasible { .. } => CliError::Infeasible(format!("{stage}: {e}")),
        _ => CliError::Parse(format!("{stage}: {e}")),
    }
}

fn policy_err(stage: &str, e: PolicyError) -> CliError {
    match e {
        PolicyError::InfeasibleState(_) | PolicyError::InfeasibleStep { .. } => {
            CliError::Infeasible(format!("{stage}: {e}"))
        }
        _ => CliError::Parse(format!("{stage}: {e}")),
    }
}

/// One backup family plus its parameter, in `family[:param]` syntax
/// (`sum-product`, `max-product`, `sum-max:3`, `dp`, `softdp:0.2`,
/// `max-rew-ent:6`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleSpec {
    pub rule: BackupRule<f64>,
}

impl FromStr for RuleSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let (family, param) = match s.split_once(':') {
            Some((f, p)) => {
                let v: f64 = p
                    .parse()
                    .map_err(|_| CliError::Parse(format!("rule '{s}': bad parameter '{p}'")))?;
                (f, Some(v))
            }
            None => (s, None),
        };
        let rule = match (family, param) {
            ("sum-product", None) => BackupRule::SumProduct,
            ("max-product", None) => BackupRule::MaxProduct,
            ("sum-max", Some(alpha)) => BackupRule::SumMaxProduct { alpha },
            ("dp", None) => BackupRule::Dp,
            ("softdp", Some(beta)) => BackupRule::SoftDp { beta },
            ("max-rew-ent", Some(alpha)) => BackupRule::MaxRewEnt { alpha },
            ("sum-max" | "softdp" | "max-rew-ent", None) => {
                return Err(CliError::Parse(format!(
                    "rule '{s}' needs a parameter (family:value)"
                )))
            }
            _ => return Err(CliError::Parse(format!("unknown rule '{s}'"))),
        };
        rule.validate()
            .map_err(|e| CliError::Parse(format!("rule '{s}': {e}")))?;
        Ok(RuleSpec { rule })
    }
}

impl fmt::Display for RuleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.rule {
            BackupRule::SumProduct => write!(f, "sum-product"),
            BackupRule::MaxProduct => write!(f, "max-product"),
            BackupRule::SumMaxProduct { alpha } => write!(f, "sum-max:{}", output::fmt_g12(alpha)),
            BackupRule::Dp => write!(f, "dp"),
            BackupRule::SoftDp { beta } => write!(f, "softdp:{}", output::fmt_g12(beta)),
            BackupRule::MaxRewEnt { alpha } => write!(f, "max-rew-ent:{}", output::fmt_g12(alpha)),
        }
    }
}

/// Shared run configuration (one mode: steady-state unless `horizon` set).
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub map_path: PathBuf,
    pub rule: RuleSpec,
    pub gamma: f64,
    pub intent_prob: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub horizon: Option<usize>,
    pub start: Option<(usize, usize)>,
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn load_grid(&self) -> Result<GridSpec, CliError> {
        let text = fs::read_to_string(&self.map_path)
            .map_err(|e| CliError::Parse(format!("map '{}': {e}", self.map_path.display())))?;
        load_map(&text)
            .map_err(|e| CliError::Parse(format!("map '{}': {e}", self.map_path.display())))
    }

    pub fn build_model(&self, grid: &GridSpec, gamma: f64) -> Result<MdpModel64, CliError> {
        build_grid_model(grid, self.intent_prob, gamma)
            .map_err(|e| CliError::Parse(format!("model: {e}")))
    }

    fn start_state(&self, grid: &GridSpec) -> Result<Option<usize>, CliError> {
        match self.start {
            None => Ok(None),
            Some((r, c)) => {
                if r >= grid.height || c >= grid.width {
                    return Err(CliError::Parse(format!(
                        "start {r},{c} outside the {}x{} grid",
                        grid.width, grid.height
                    )));
                }
                Ok(Some(grid.state_index(r, c)))
            }
        }
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

struct SteadyRun {
    q: fgplan_core::QTable64,
    v: fgplan_core::VTable64,
    increments: Vec<f64>,
    iterations: usize,
    policy: PolicyTable64,
    mean_entropy: f64,
}

fn run_steady(
    model: &MdpModel64,
    rule: &BackupRule<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<SteadyRun, CliError> {
    let (q, v, report) =
        steady_state(model, rule, tol, max_iter).map_err(|e| engine_err("steady-state", e))?;
    let policy = extract_policy(rule, &q, &v).map_err(|e| policy_err("policy", e))?;
    let mean_entropy = mean_row_entropy(&policy);
    Ok(SteadyRun {
        q,
        v,
        increments: report.increments,
        iterations: report.iterations,
        policy,
        mean_entropy,
    })
}

/// `plan`: solve one map with one rule and write the report files.
pub fn cmd_plan(config: &RunConfig) -> Result<(), CliError> {
    let grid = config.load_grid()?;
    let model = config.build_model(&grid, config.gamma)?;
    let rule = config.rule.rule;

    match config.horizon {
        None => {
            let run = run_steady(&model, &rule, config.tol, config.max_iter)?;
            write_file(
                &config.out_dir,
                "value.json",
                &output::value_json_steady(&grid, &run.v),
            )?;
            write_file(
                &config.out_dir,
                "q.json",
                &output::q_json_steady(&grid, &run.q),
            )?;
            write_file(
                &config.out_dir,
                "policy.json",
                &output::policy_json(&grid, &run.policy, run.mean_entropy),
            )?;
            write_file(
                &config.out_dir,
                "arrows.txt",
                &output::arrows_text(&grid, &run.policy),
            )?;
            write_file(
                &config.out_dir,
                "convergence.csv",
                &output::convergence_csv(&run.increments),
            )?;
        }
        Some(horizon) => {
            let mut boundary = Boundary::uninformative(model.n_states, model.n_actions);
            if let Some(s) = config.start_state(&grid)? {
                boundary = boundary.with_start(s);
            }
            let sol = solve_horizon(&model, &rule, horizon, &boundary)
                .map_err(|e| engine_err("horizon", e))?;
            let policy =
                extract_policy(&rule, &sol.q[0], &sol.v[0]).map_err(|e| policy_err("policy", e))?;
            let mean_entropy = mean_row_entropy(&policy);
            write_file(
                &config.out_dir,
                "value.json",
                &output::value_json_horizon(&grid, &sol.v),
            )?;
            write_file(
                &config.out_dir,
                "q.json",
                &output::q_json_horizon(&grid, &sol.q),
            )?;
            write_file(
                &config.out_dir,
                "policy.json",
                &output::policy_json(&grid, &policy, mean_entropy),
            )?;
            write_file(
                &config.out_dir,
                "arrows.txt",
                &output::arrows_text(&grid, &policy),
            )?;
        }
    }
    Ok(())
}

/// `compare`: run several rules on one map; write comparison.csv,
/// increments.csv, timings.csv and optionally point_policy.json.
pub fn cmd_compare(
    config: &RunConfig,
    rules: &[RuleSpec],
    point: Option<(usize, usize)>,
) -> Result<(), CliError> {
    if rules.len() < 2 {
        return Err(CliError::Parse("compare needs at least 2 rules".into()));
    }
    let grid = config.load_grid()?;
    let model = config.build_model(&grid, config.gamma)?;
    let point_state = match point {
        Some((r, c)) if r >= grid.height || c >= grid.width => {
            return Err(CliError::Parse(format!(
                "point {r},{c} outside the {}x{} grid",
                grid.width, grid.height
            )))
        }
        Some((r, c)) => Some(grid.state_index(r, c)),
        None => None,
    };

    let mut rows = Vec::new();
    let mut increments = Vec::new();
    let mut point_rows = Vec::new();
    for spec in rules {
        let started = Instant::now();
        let run = run_steady(&model, &spec.rule, config.tol, config.max_iter)?;
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;
        rows.push(output::CompareRow {
            rule: spec.to_string(),
            iterations: run.iterations,
            final_increment: *run.increments.last().unwrap_or(&0.0),
            mean_entropy: run.mean_entropy,
            wall_ms,
        });
        increments.push((spec.to_string(), run.increments.clone()));
        if let Some(s) = point_state {
            point_rows.push((spec.to_string(), run.policy.row(s).to_vec()));
        }
    }

    write_file(
        &config.out_dir,
        "comparison.csv",
        &output::comparison_csv(&rows),
    )?;
    write_file(
        &config.out_dir,
        "increments.csv",
        &output::increments_csv(&increments),
    )?;
    write_file(&config.out_dir, "timings.csv", &output::timings_csv(&rows))?;
    if let Some((r, c)) = point {
        write_file(
            &config.out_dir,
            "point_policy.json",
            &output::point_policy_json(r, c, &point_rows),
        )?;
    }
    Ok(())
}

/// Which parameter `sweep` varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Alpha,
    Beta,
    Gamma,
}

impl FromStr for SweepParam {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "alpha" => Ok(SweepParam::Alpha),
            "beta" => Ok(SweepParam::Beta),
            "gamma" => Ok(SweepParam::Gamma),
            _ => Err(CliError::Parse(format!("unknown sweep parameter '{s}'"))),
        }
    }
}

/// `sweep`: rerun one rule while varying alpha, beta or gamma.
pub fn cmd_sweep(config: &RunConfig, param: SweepParam, values: &[f64]) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::Parse("sweep needs at least one value".into()));
    }
    let grid = config.load_grid()?;
    let mut rows = Vec::new();
    for &value in values {
        let (rule, gamma) = match (param, config.rule.rule) {
            (SweepParam::Alpha, BackupRule::SumMaxProduct { .. }) => {
                (BackupRule::SumMaxProduct { alpha: value }, config.gamma)
            }
            (SweepParam::Alpha, BackupRule::MaxRewEnt { .. }) => {
                (BackupRule::MaxRewEnt { alpha: value }, config.gamma)
            }
            (SweepParam::Beta, BackupRule::SoftDp { .. }) => {
                (BackupRule::SoftDp { beta: value }, config.gamma)
            }
            (SweepParam::Gamma, rule) => (rule, value),
            (SweepParam::Alpha, _) => {
                return Err(CliError::Parse(
                    "alpha sweep needs rule sum-max:<a> or max-rew-ent:<a>".into(),
                ))
            }
            (SweepParam::Beta, _) => {
                return Err(CliError::Parse("beta sweep needs rule softdp:<b>".into()))
            }
        };
        rule.validate()
            .map_err(|e| CliError::Parse(format!("sweep value {value}: {e}")))?;
        if gamma <= 0.0 || gamma > 1.0 {
            return Err(CliError::Parse(format!(
                "sweep value {value}: discount outside (0, 1]"
            )));
        }
        let model = config.build_model(&grid, gamma)?;
        let run = run_steady(&model, &rule, config.tol, config.max_iter)?;
        rows.push(output::SweepRow {
            param: match param {
                SweepParam::Alpha => "alpha".into(),
                SweepParam::Beta => "beta".into(),
                SweepParam::Gamma => "gamma".into(),
            },
            value,
            iterations: run.iterations,
            mean_entropy: run.mean_entropy,
        });
    }
    write_file(&config.out_dir, "sweep.csv", &output::sweep_csv(&rows))?;
    Ok(())
}

/// How `decode` produces its path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeKind {
    Progressive,
    Parallel,
    Rollout,
}

impl FromStr for DecodeKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "progressive" => Ok(DecodeKind::Progressive),
            "parallel" => Ok(DecodeKind::Parallel),
            "rollout" => Ok(DecodeKind::Rollout),
            _ => Err(CliError::Parse(format!("unknown decode mode '{s}'"))),
        }
    }
}

/// `decode`: finite-horizon progressive/parallel paths, or a rollout under
/// the steady-state policy. Writes `path.json`.
pub fn cmd_decode(
    config: &RunConfig,
    kind: DecodeKind,
    max_steps: Option<usize>,
) -> Result<(), CliError> {
    let grid = config.load_grid()?;
    let model = config.build_model(&grid, config.gamma)?;
    let rule = config.rule.rule;

    let contents = match kind {
        DecodeKind::Progressive | DecodeKind::Parallel => {
            let horizon = config.horizon.ok_or_else(|| {
                CliError::Parse("decode progressive/parallel needs --horizon".into())
            })?;
            let mut boundary = Boundary::uninformative(model.n_states, model.n_actions);
            if let Some(s) = config.start_state(&grid)? {
                boundary = boundary.with_start(s);
            }
            let sol = solve_horizon(&model, &rule, horizon, &boundary)
                .map_err(|e| engine_err("horizon", e))?;
            let path = if kind == DecodeKind::Progressive {
                progressive_decode(&model, &sol).map_err(|e| policy_err("decode", e))?
            } else {
                let posts = posteriors(&sol).map_err(|e| engine_err("posteriors", e))?;
                parallel_decode(&model, &posts)
            };
            let mode = if kind == DecodeKind::Progressive {
                "progressive"
            } else {
                "parallel"
            };
            output::path_json(
                &grid,
                mode,
                &path.states,
                &path.actions,
                path.connected,
                path.goal_reached,
                path.max_tie_multiplicity,
            )
        }
        DecodeKind::Rollout => {
            let start = config
                .start_state(&grid)?
                .ok_or_else(|| CliError::Parse("decode rollout needs --start r,c".into()))?;
            let run = run_steady(&model, &rule, config.tol, config.max_iter)?;
            let goal_mask = grid.goal_mask();
            let steps = max_steps.unwrap_or(grid.width * grid.height);
            let path = match config.seed {
                None => greedy_rollout(&model, &run.policy, start, &goal_mask, steps),
                Some(seed) => sampled_rollout(&model, &run.policy, start, &goal_mask, steps, seed),
            }
            .map_err(|e| policy_err("decode", e))?;
            output::path_json(
                &grid,
                "rollout",
                &path.states,
                &path.actions,
                path.connected,
                path.goal_reached,
                path.max_tie_multiplicity,
            )
        }
    };
    write_file(&config.out_dir, "path.json", &contents)?;
    Ok(())
}

/// Seeded random model for oracle spot-checks and tests: dense-ish rows with
/// occasional structural zeros, rewards in [-3, 0], a random action prior.
pub fn random_model(seed: u64, n_states: usize, n_actions: usize, gamma: f64) -> MdpModel64 {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut transition = vec![0.0f64; n_states * n_actions * n_states];
    for row in transition.chunks_mut(n_states) {
        loop {
            let mut sum = 0.0;
            for p in row.iter_mut() {
                *p = if rng.gen::<f64>() < 0.25 {
                    0.0
                } else {
                    rng.gen::<f64>()
                };
                sum += *p;
            }
            if sum > 0.0 {
                for p in row.iter_mut() {
                    *p /= sum;
                }
                break;
            }
        }
    }
    let reward: Vec<f64> = (0..n_states * n_actions)
        .map(|_| -3.0 * rng.gen::<f64>())
        .collect();
    let mut prior: Vec<f64> = (0..n_actions).map(|_| 0.1 + rng.gen::<f64>()).collect();
    let z: f64 = prior.iter().sum();
    for p in prior.iter_mut() {
        *p = (*p / z).ln();
    }
    MdpModel64::new(n_states, n_actions, transition, reward, prior, gamma)
}

/// Hidden `oracle` subcommand: cross-checks the engine against the
/// brute-force evaluators on one seeded random model, printing a JSON
/// summary to stdout.
pub fn cmd_oracle(
    seed: u64,
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    power: f64,
) -> Result<String, CliError> {
    let model = random_model(seed, n_states, n_actions, 1.0);
    let boundary = Boundary::uninformative(n_states, n_actions);
    let marginals = oracle::brute_marginals(&model, horizon, &boundary, power)
        .map_err(|e| CliError::Parse(format!("oracle: {e}")))?;
    let rule = if power == 1.0 {
        BackupRule::SumProduct
    } else {
        BackupRule::SumMaxProduct { alpha: power }
    };
    let sol =
        solve_horizon(&model, &rule, horizon, &boundary).map_err(|e| engine_err("horizon", e))?;
    let engine_posts = posteriors(&sol).map_err(|e| engine_err("posteriors", e))?;
    let map = oracle::brute_map(&model, horizon, &boundary)
        .map_err(|e| CliError::Parse(format!("oracle: {e}")))?;

    let mut max_abs_gap = 0.0f64;
    for (a, b) in marginals
        .iter()
        .flatten()
        .zip(engine_posts.iter().flatten())
    {
        max_abs_gap = max_abs_gap.max((a - b).abs());
    }
    let fmt_steps = |steps: &[Vec<f64>]| {
        steps
            .iter()
            .map(|row| {
                format!(
                    "[{}]",
                    row.iter()
                        .map(|&x| output::fmt_g12(x))
                        .collect::<Vec<_>>()
                        .join(",")
                )
            })
            .collect::<Vec<_>>()
            .join(",")
    };
    Ok(format!(
        "{{\"seed\":{seed},\"power\":{},\"oracle_marginals\":[{}],\"engine_posteriors\":[{}],\"max_abs_gap\":{},\"map_states\":{:?},\"map_actions\":{:?},\"map_log_weight\":{}}}\n",
        output::fmt_g12(power),
        fmt_steps(&marginals),
        fmt_steps(&engine_posts),
        output::fmt_g12(max_abs_gap),
        map.states,
        map.actions,
        output::fmt_g12(map.log_weight),
    ))
}
