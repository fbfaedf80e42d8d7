//! Tabular planning-as-inference engine.
//!
//! Plans on finite state-action models by propagating backward/forward
//! messages on the state-action chain. Six interchangeable backup families
//! (Sum-product, Max-product, Sum/Max-product, DP, SoftDP, Max-Rew/Ent)
//! share one engine, one policy expression `π(a|s) ∝ e^{Q(s,a) - V(s)}`, and
//! one set of decoders. Brute-force oracles certify each family against the
//! objective it optimizes on tiny instances.
//!
//! Everything is generic over the scalar type through [`scalar::Real`];
//! the `*64` aliases below fix `f64`, the type the CLI uses.

pub mod backups;
pub mod engine;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod scalar;
pub mod softmax;

pub use backups::{backup_q, backup_q_prob, backup_v, backup_v_prob, BackupRule, QTable, VTable};
pub use engine::{
    backward_sweep, forward_sweep, posteriors, solve_horizon, steady_state, Boundary,
    ConvergenceReport, HorizonSolution, Termination,
};
pub use model::{
    build_deterministic_grid_model, build_grid_model, load_map, validate_model, GridSpec, MdpModel,
};
pub use policy::{
    extract_policy, greedy_rollout, hard_argmax_policy, mean_row_entropy, parallel_decode,
    progressive_decode, sampled_rollout, DecodeMode, DecodedPath, PolicyTable,
};
pub use scalar::{Real, LOG_FLOOR};

pub type MdpModel64 = model::MdpModel<f64>;
pub type BackupRule64 = backups::BackupRule<f64>;
pub type QTable64 = backups::QTable<f64>;
pub type VTable64 = backups::VTable<f64>;
pub type Boundary64 = engine::Boundary<f64>;
pub type PolicyTable64 = policy::PolicyTable<f64>;
