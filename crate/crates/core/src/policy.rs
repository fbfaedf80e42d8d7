//! Policy extraction and sequence decoding.
//!
//! Every family shares the policy expression `π(a|s) ∝ e^{Q(s,a) - V(s)}`;
//! the per-state constant `V(s)` cancels in the row normalization, so the
//! differences between families live entirely in their Q tables. Decoders:
//!
//! * parallel — independent per-step argmax of the state posteriors, with a
//!   connectivity flag (the argmaxes may jump between basins),
//! * progressive — forward argmax walk alternating states and actions,
//!   driven by the backward messages,
//! * rollout — greedy (or seeded-sampling) walk under a fixed policy.

use rand::distributions::Distribution;
use rand::SeedableRng;
use thiserror::Error;

use crate::backups::{BackupRule, QTable, VTable};
use crate::engine::HorizonSolution;
use crate::model::MdpModel;
use crate::scalar::Real;

/// Absolute slack under which two scores count as tied.
const TIE_TOL: f64 = 1e-9;

/// Per-state action distribution, rows summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable<F> {
    pub n_states: usize,
    pub n_actions: usize,
    pub probabilities: Vec<F>,
}

impl<F: Real> PolicyTable<F> {
    #[inline]
    pub fn row(&self, s: usize) -> &[F] {
        &self.probabilities[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn at(&self, s: usize, a: usize) -> F {
        self.probabilities[s * self.n_actions + a]
    }

    /// Lowest-index argmax of a row.
    pub fn argmax(&self, s: usize) -> usize {
        argmax_with_ties(self.row(s).iter().copied()).0
    }

    /// Number of row entries within the tie tolerance of the row maximum.
    pub fn tie_multiplicity(&self, s: usize) -> usize {
        argmax_with_ties(self.row(s).iter().copied()).1
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("tables have mismatched shapes")]
    ShapeMismatch,
    #[error("state {0} has an all-floor Q row: no feasible action")]
    InfeasibleState(usize),
    #[error("no successor has support at step {step} from state {state}")]
    InfeasibleStep { step: usize, state: usize },
    #[error("start state {0} is out of range")]
    StartOutOfRange(usize),
}

/// How a [`DecodedPath`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Parallel,
    Progressive,
    Rollout,
}

/// A decoded state (and optionally action) sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedPath {
    pub states: Vec<usize>,
    /// Empty for state-only decodes.
    pub actions: Vec<usize>,
    pub mode: DecodeMode,
    /// Parallel decode only: consecutive states are reachable under some
    /// action with nonzero probability.
    pub connected: Option<bool>,
    /// Rollout only: the walk ended on a goal state.
    pub goal_reached: Option<bool>,
    /// Largest number of tied candidates seen across all argmax decisions.
    pub max_tie_multiplicity: usize,
}

/// `π(a|s) = e^{w (Q(s,a) - V(s))}`, normalized per state row, with the
/// rule's sharpness weight `w` ([`BackupRule::policy_weight`]): `α` for
/// Max-Rew/Ent, `β` for SoftDP, `1` for the message-ratio families.
///
/// The row is shifted by its own maximum before exponentiation; the shift,
/// like `V(s)`, is a per-state constant that the normalization removes.
pub fn extract_policy<F: Real>(
    rule: &BackupRule<F>,
    q: &QTable<F>,
    v: &VTable<F>,
) -> Result<PolicyTable<F>, PolicyError> {
    if v.len() != q.n_states {
        return Err(PolicyError::ShapeMismatch);
    }
    let weight = rule.policy_weight();
    let mut probabilities = vec![F::zero(); q.n_states * q.n_actions];
    for s in 0..q.n_states {
        let row = q.row(s);
        let m = row.iter().copied().fold(F::neg_infinity(), F::max);
        if m <= F::log_floor() * F::of(0.5) {
            return Err(PolicyError::InfeasibleState(s));
        }
        let out = &mut probabilities[s * q.n_actions..(s + 1) * q.n_actions];
        let mut z = F::zero();
        for (o, &qv) in out.iter_mut().zip(row) {
            *o = (weight * (qv - m)).exp();
            z = z + *o;
        }
        for o in out.iter_mut() {
            *o = *o / z;
        }
    }
    Ok(PolicyTable {
        n_states: q.n_states,
        n_actions: q.n_actions,
        probabilities,
    })
}

/// Hard-argmax variant for classical DP use: a delta on the lowest-index
/// maximizing action per state.
pub fn hard_argmax_policy<F: Real>(q: &QTable<F>) -> PolicyTable<F> {
    let mut probabilities = vec![F::zero(); q.n_states * q.n_actions];
    for s in 0..q.n_states {
        let (best, _) = argmax_with_ties(q.row(s).iter().copied());
        probabilities[s * q.n_actions + best] = F::one();
    }
    PolicyTable {
        n_states: q.n_states,
        n_actions: q.n_actions,
        probabilities,
    }
}

/// Mean over states of the row entropy `-Σ_a π log π` (nats).
pub fn mean_row_entropy<F: Real>(policy: &PolicyTable<F>) -> F {
    let mut total = F::zero();
    for s in 0..policy.n_states {
        for &p in policy.row(s) {
            if p > F::zero() {
                total = total - p * p.ln();
            }
        }
    }
    total / F::of(policy.n_states as f64)
}

/// Independent per-step argmax of the state posteriors.
pub fn parallel_decode<F: Real>(model: &MdpModel<F>, step_posteriors: &[Vec<F>]) -> DecodedPath {
    let mut states = Vec::with_capacity(step_posteriors.len());
    let mut max_ties = 0usize;
    for post in step_posteriors {
        let (s, ties) = argmax_with_ties(post.iter().copied());
        max_ties = max_ties.max(ties);
        states.push(s);
    }
    let connected = states
        .windows(2)
        .all(|w| (0..model.n_actions).any(|a| model.transition_row(w[0], a)[w[1]] > F::zero()));
    DecodedPath {
        states,
        actions: Vec::new(),
        mode: DecodeMode::Parallel,
        connected: Some(connected),
        goal_reached: None,
        max_tie_multiplicity: max_ties,
    }
}

/// Progressive max-posterior decode of the full state-action sequence.
///
/// `s*_1 = argmax (f_1 + V_1)`; then alternately `a*_t = argmax_a Q_t(s*_t, a)`
/// (the policy argmax — `π ∝ e^{Q - V}` is monotone in Q) and
/// `s*_{t+1} = argmax_s (log p(s|s*_t, a*_t) + V_{t+1}(s))`. Ties go to the
/// lowest index.
pub fn progressive_decode<F: Real>(
    model: &MdpModel<F>,
    sol: &HorizonSolution<F>,
) -> Result<DecodedPath, PolicyError> {
    let horizon = sol.v.len();
    let mut states = Vec::with_capacity(horizon);
    let mut actions = Vec::with_capacity(horizon);
    let mut max_ties = 0usize;

    let first_scores: Vec<F> = sol.forward[0]
        .values
        .iter()
        .zip(&sol.v[0].values)
        .map(|(&f, &v)| f + v)
        .collect();
    let (mut s, ties) = argmax_with_ties(first_scores.iter().copied());
    max_ties = max_ties.max(ties);
    states.push(s);

    for t in 0..horizon {
        let (a, ties) = argmax_with_ties(sol.q[t].row(s).iter().copied());
        max_ties = max_ties.max(ties);
        actions.push(a);
        if t + 1 == horizon {
            break;
        }
        let row = model.transition_row(s, a);
        let scores: Vec<F> = row
            .iter()
            .zip(&sol.v[t + 1].values)
            .map(|(&p, &v)| {
                if p > F::zero() {
                    p.ln() + v
                } else {
                    F::log_floor()
                }
            })
            .collect();
        let best = scores.iter().copied().fold(F::neg_infinity(), F::max);
        if best <= F::log_floor() * F::of(0.5) {
            return Err(PolicyError::InfeasibleStep {
                step: t + 2,
                state: s,
            });
        }
        let (next, ties) = argmax_with_ties(scores.iter().copied());
        max_ties = max_ties.max(ties);
        s = next;
        states.push(s);
    }

    Ok(DecodedPath {
        states,
        actions,
        mode: DecodeMode::Progressive,
        connected: None,
        goal_reached: None,
        max_tie_multiplicity: max_ties,
    })
}

/// Deterministic argmax walk under a fixed policy: take the policy argmax,
/// move to the most likely successor, stop on a goal or after `max_steps`.
pub fn greedy_rollout<F: Real>(
    model: &MdpModel<F>,
    policy: &PolicyTable<F>,
    start: usize,
    goal_mask: &[bool],
    max_steps: usize,
) -> Result<DecodedPath, PolicyError> {
    rollout_impl(model, policy, start, goal_mask, max_steps, None)
}

/// Seeded sampling variant of the rollout: actions drawn from the policy
/// rows, successors from the kernel.
pub fn sampled_rollout<F: Real>(
    model: &MdpModel<F>,
    policy: &PolicyTable<F>,
    start: usize,
    goal_mask: &[bool],
    max_steps: usize,
    seed: u64,
) -> Result<DecodedPath, PolicyError> {
    rollout_impl(model, policy, start, goal_mask, max_steps, Some(seed))
}

fn rollout_impl<F: Real>(
    model: &MdpModel<F>,
    policy: &PolicyTable<F>,
    start: usize,
    goal_mask: &[bool],
    max_steps: usize,
    seed: Option<u64>,
) -> Result<DecodedPath, PolicyError> {
    if start >= model.n_states {
        return Err(PolicyError::StartOutOfRange(start));
    }
    let mut rng = seed.map(rand_chacha::ChaCha8Rng::seed_from_u64);
    let mut states = vec![start];
    let mut actions = Vec::new();
    let mut max_ties = 0usize;
    let mut s = start;
    while !goal_mask[s] && actions.len() < max_steps {
        let a = match &mut rng {
            None => {
                let (a, ties) = argmax_with_ties(policy.row(s).iter().copied());
                max_ties = max_ties.max(ties);
                a
            }
            Some(rng) => sample_index(policy.row(s), rng),
        };
        actions.push(a);
        let row = model.transition_row(s, a);
        let next = match &mut rng {
            None => {
                let (next, ties) = argmax_with_ties(row.iter().copied());
                max_ties = max_ties.max(ties);
                next
            }
            Some(rng) => sample_index(row, rng),
        };
        s = next;
        states.push(s);
    }
    Ok(DecodedPath {
        states,
        actions,
        mode: DecodeMode::Rollout,
        connected: None,
        goal_reached: Some(goal_mask[s]),
        max_tie_multiplicity: max_ties,
    })
}

fn sample_index<F: Real>(weights: &[F], rng: &mut rand_chacha::ChaCha8Rng) -> usize {
    let u: f64 = rand::distributions::Uniform::new(0.0, 1.0).sample(rng);
    let total: f64 = weights.iter().map(|w| w.as_f64()).sum();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w.as_f64() / total;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Lowest-index argmax plus the number of entries within [`TIE_TOL`] of the
/// maximum.
fn argmax_with_ties<F: Real>(values: impl Iterator<Item = F> + Clone) -> (usize, usize) {
    let mut best = F::neg_infinity();
    let mut best_idx = 0usize;
    for (i, v) in values.clone().enumerate() {
        if v > best {
            best = v;
            best_idx = i;
        }
    }
    let tol = F::of(TIE_TOL);
    let ties = values.filter(|&v| best - v <= tol).count();
    (best_idx, ties.max(1))
}
