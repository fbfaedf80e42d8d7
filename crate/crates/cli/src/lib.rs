//! Command-line surface over the fgplan engine.
//!
//! The binary (`fgplan`) parses arguments into [`commands::RunConfig`] and
//! dispatches; everything testable lives here in the library.

pub mod commands;
pub mod output;

pub use commands::{
    cmd_compare, cmd_decode, cmd_oracle, cmd_plan, cmd_sweep, random_model, CliError, DecodeKind,
    RuleSpec, RunConfig, SweepParam,
};

/// Caps rayon's worker count from `FGPLAN_THREADS` (ignored when unset,
/// unparsable, or when a global pool already exists).
pub fn init_thread_pool() {
    if let Ok(value) = std::env::var("FGPLAN_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}
