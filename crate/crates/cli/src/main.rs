use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fgplan_cli::{
    cmd_compare, cmd_decode, cmd_oracle, cmd_plan, cmd_sweep, init_thread_pool, CliError,
    DecodeKind, RuleSpec, RunConfig, SweepParam,
};

/// Tabular planner: six interchangeable backup families on grid maps.
#[derive(Parser)]
#[command(name = "fgplan", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Map file (text or JSON format).
    #[arg(long)]
    map: PathBuf,
    /// Backup rule: sum-product | max-product | sum-max:<a> | dp |
    /// softdp:<b> | max-rew-ent:<a>.
    #[arg(long, default_value = "sum-product")]
    rule: String,
    /// Alpha for sum-max / max-rew-ent (alternative to rule:<a> syntax).
    #[arg(long)]
    alpha: Option<f64>,
    /// Beta for softdp (alternative to rule:<b> syntax).
    #[arg(long)]
    beta: Option<f64>,
    /// Discount factor in (0, 1].
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Probability of the intended move (rest spreads over the other eight).
    #[arg(long, default_value_t = 0.5)]
    intent_prob: f64,
    /// Steady-state stopping tolerance on value increments.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    /// Iteration cap for the steady-state solver.
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// Finite-horizon mode with this many steps (default: steady state).
    #[arg(long)]
    horizon: Option<usize>,
    /// Start cell as `row,col`.
    #[arg(long, value_parser = parse_cell)]
    start: Option<(usize, usize)>,
    /// Seed for sampling rollouts.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one map with one rule; write value/q/policy/arrows/convergence.
    Plan(CommonArgs),
    /// Run several rules on one map; write comparison/increments/timings.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated rule list, e.g. `sum-product,max-product,sum-max:3`.
        #[arg(long, value_delimiter = ',')]
        rules: Vec<String>,
        /// Also emit point_policy.json for this `row,col` cell.
        #[arg(long, value_parser = parse_cell)]
        point: Option<(usize, usize)>,
    },
    /// Rerun one rule over a parameter range; write sweep.csv.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Which parameter to vary.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Decode a path: progressive, parallel, or rollout; write path.json.
    Decode {
        #[command(flatten)]
        common: CommonArgs,
        /// progressive | parallel | rollout.
        #[arg(long, default_value = "progressive")]
        mode: String,
        /// Step cap for rollouts (default: width * height).
        #[arg(long)]
        max_steps: Option<usize>,
    },
    /// Cross-check the engine against the brute-force oracles (debug).
    #[command(hide = true)]
    Oracle {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        states: usize,
        #[arg(long, default_value_t = 2)]
        actions: usize,
        #[arg(long, default_value_t = 3)]
        horizon: usize,
        #[arg(long, default_value_t = 1.0)]
        power: f64,
    },
}

fn parse_cell(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(',')
        .ok_or_else(|| format!("expected row,col, got '{s}'"))?;
    let r = r
        .trim()
        .parse()
        .map_err(|e| format!("bad row '{r}': {e}"))?;
    let c = c
        .trim()
        .parse()
        .map_err(|e| format!("bad col '{c}': {e}"))?;
    Ok((r, c))
}

fn build_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    // --alpha / --beta attach the parameter to a bare family name.
    let rule_text = match (common.alpha, common.beta, common.rule.as_str()) {
        (Some(a), None, f @ ("sum-max" | "max-rew-ent")) => format!("{f}:{a}"),
        (None, Some(b), "softdp") => format!("softdp:{b}"),
        (None, None, f) => f.to_string(),
        (Some(_), Some(_), _) => {
            return Err(CliError::Parse(
                "give either --alpha or --beta, not both".into(),
            ))
        }
        (Some(_), None, f) => {
            return Err(CliError::Parse(format!(
                "--alpha does not apply to rule '{f}'"
            )))
        }
        (None, Some(_), f) => {
            return Err(CliError::Parse(format!(
                "--beta does not apply to rule '{f}'"
            )))
        }
    };
    let rule: RuleSpec = rule_text.parse()?;
    if common.gamma <= 0.0 || common.gamma > 1.0 {
        return Err(CliError::Parse(format!(
            "gamma {} outside (0, 1]",
            common.gamma
        )));
    }
    Ok(RunConfig {
        map_path: common.map.clone(),
        rule,
        gamma: common.gamma,
        intent_prob: common.intent_prob,
        tol: common.tol,
        max_iter: common.max_iter,
        horizon: common.horizon,
        start: common.start,
        seed: common.seed,
        out_dir: common.out.clone(),
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Plan(common) => cmd_plan(&build_config(&common)?),
        Command::Compare {
            common,
            rules,
            point,
        } => {
            let config = build_config(&common)?;
            let specs = rules
                .iter()
                .map(|s| s.parse::<RuleSpec>())
                .collect::<Result<Vec<_>, _>>()?;
            cmd_compare(&config, &specs, point)
        }
        Command::Sweep {
            common,
            param,
            values,
        } => {
            let config = build_config(&common)?;
            cmd_sweep(&config, param.parse::<SweepParam>()?, &values)
        }
        Command::Decode {
            common,
            mode,
            max_steps,
        } => {
            let config = build_config(&common)?;
            cmd_decode(&config, mode.parse::<DecodeKind>()?, max_steps)
        }
        Command::Oracle {
            seed,
            states,
            actions,
            horizon,
            power,
        } => {
            let report = cmd_oracle(seed, states, actions, horizon, power)?;
            print!("{report}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fgplan: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
