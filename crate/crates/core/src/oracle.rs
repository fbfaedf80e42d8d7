//! Brute-force ground-truth evaluators for tiny instances.
//!
//! Each backup family is certified against the objective it optimizes:
//!
//! * [`brute_marginals`] — exact per-step state marginals of the joint
//!   sequence distribution raised to a power `α` (α = 1 for the Sum-product,
//!   α > 1 for the Sum/Max-product), by full sequence enumeration, with an
//!   independent recursive-elimination twin ([`brute_marginals_elim`]),
//! * [`brute_map`] — the globally optimal state-action sequence (Max-product),
//! * [`brute_dp_value`] — optimal expected reward sum over all time-indexed
//!   deterministic policies (DP),
//! * [`brute_rew_ent`] — grid-search optimum of the reward-plus-scaled-entropy
//!   functional over per-(t, s) policy simplices (Max-Rew/Ent).
//!
//! All arithmetic runs in the log domain. Budgets are enforced before any
//! enumeration starts.

use thiserror::Error;

use crate::engine::Boundary;
use crate::model::MdpModel;
use crate::scalar::Real;
use crate::softmax::lse_iter;

/// Enumeration budget: leaf count any oracle may visit.
pub const ENUMERATION_BUDGET: u64 = 1_000_000;

/// Coarse simplex grid step for [`brute_rew_ent`].
const GRID_STEP: f64 = 1e-3;
/// Refinement step around the best coarse point.
const REFINE_STEP: f64 = 1e-6;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("instance needs {needed} enumeration leaves, budget is {budget}")]
    BudgetExceeded { needed: u64, budget: u64 },
    #[error("brute_rew_ent handles only |S| = |A| = 2 and T <= 2")]
    OutsideTinyDomain,
    #[error("horizon must be at least 1")]
    ZeroHorizon,
}

/// Pre-enumeration budget check for the brute-force ops.
#[derive(Debug, Clone, Copy)]
pub struct TinyInstanceGuard {
    pub budget: u64,
}

impl Default for TinyInstanceGuard {
    fn default() -> Self {
        TinyInstanceGuard {
            budget: ENUMERATION_BUDGET,
        }
    }
}

impl TinyInstanceGuard {
    /// Sequence enumeration cost `(|S| |A|)^T`.
    pub fn check_sequences(
        &self,
        n_states: usize,
        n_actions: usize,
        horizon: usize,
    ) -> Result<(), OracleError> {
        let per_step = (n_states as u64).saturating_mul(n_actions as u64);
        let needed = checked_pow(per_step, horizon as u32);
        if needed > self.budget {
            return Err(OracleError::BudgetExceeded {
                needed,
                budget: self.budget,
            });
        }
        Ok(())
    }

    /// Policy enumeration cost `|A|^(|S| T)`.
    pub fn check_policies(
        &self,
        n_states: usize,
        n_actions: usize,
        horizon: usize,
    ) -> Result<(), OracleError> {
        let needed = checked_pow(n_actions as u64, (n_states * horizon) as u32);
        if needed > self.budget {
            return Err(OracleError::BudgetExceeded {
                needed,
                budget: self.budget,
            });
        }
        Ok(())
    }
}

fn checked_pow(base: u64, exp: u32) -> u64 {
    base.checked_pow(exp).unwrap_or(u64::MAX)
}

/// Log-weight of one full sequence under the factorization
/// `f_1(s_1) Π_t p(a_t) c(s_t a_t) Π_{t<T} p(s_{t+1}|s_t a_t) · term(s_T a_T)`.
fn sequence_log_weight<F: Real>(
    model: &MdpModel<F>,
    boundary: &Boundary<F>,
    states: &[usize],
    actions: &[usize],
) -> Option<F> {
    let horizon = states.len();
    let mut log_w = boundary.initial_state_log[states[0]];
    for t in 0..horizon {
        log_w = log_w + model.reward_prime(states[t], actions[t]);
        if t + 1 < horizon {
            let p = model.transition_row(states[t], actions[t])[states[t + 1]];
            if p <= F::zero() {
                return None;
            }
            log_w = log_w + p.ln();
        }
    }
    log_w =
        log_w + boundary.terminal_log[states[horizon - 1] * model.n_actions + actions[horizon - 1]];
    Some(log_w)
}

fn for_each_sequence<F: Real>(
    model: &MdpModel<F>,
    boundary: &Boundary<F>,
    horizon: usize,
    visit: &mut impl FnMut(&[usize], &[usize], F),
) {
    let mut states = vec![0usize; horizon];
    let mut actions = vec![0usize; horizon];
    // Nested enumeration in lexicographic (s_1, a_1, s_2, a_2, ...) order.
    fn recurse<F: Real>(
        model: &MdpModel<F>,
        boundary: &Boundary<F>,
        horizon: usize,
        t: usize,
        states: &mut Vec<usize>,
        actions: &mut Vec<usize>,
        visit: &mut impl FnMut(&[usize], &[usize], F),
    ) {
        if t == horizon {
            if let Some(w) = sequence_log_weight(model, boundary, states, actions) {
                visit(states, actions, w);
            }
            return;
        }
        for s in 0..model.n_states {
            // Prune zero-probability transitions early.
            if t > 0 && model.transition_row(states[t - 1], actions[t - 1])[s] <= F::zero() {
                continue;
            }
            states[t] = s;
            for a in 0..model.n_actions {
                actions[t] = a;
                recurse(model, boundary, horizon, t + 1, states, actions, visit);
            }
        }
    }
    recurse(
        model,
        boundary,
        horizon,
        0,
        &mut states,
        &mut actions,
        visit,
    );
}

/// Exact per-step state marginals of `p(s_1 a_1 .. s_T a_T | K)^α` by full
/// sequence enumeration; each step normalized to sum one.
pub fn brute_marginals<F: Real>(
    model: &MdpModel<F>,
    horizon: usize,
    boundary: &Boundary<F>,
    power: F,
) -> Result<Vec<Vec<F>>, OracleError> {
    if horizon == 0 {
        return Err(OracleError::ZeroHorizon);
    }
    TinyInstanceGuard::default().check_sequences(model.n_states, model.n_actions, horizon)?;

    // Running log-sum accumulators per (t, state).
    let mut acc = vec![vec![F::neg_infinity(); model.n_states]; horizon];
    for_each_sequence(model, boundary, horizon, &mut |states, _, log_w| {
        let powered = power * log_w;
        for (t, &s) in states.iter().enumerate() {
            acc[t][s] = log_add(acc[t][s], powered);
        }
    });
    Ok(acc.into_iter().map(|row| normalize_log(&row)).collect())
}

/// Independent twin of [`brute_marginals`]: recursive variable elimination
/// (forward/backward chain sums over the `α`-powered factors).
pub fn brute_marginals_elim<F: Real>(
    model: &MdpModel<F>,
    horizon: usize,
    boundary: &Boundary<F>,
    power: F,
) -> Result<Vec<Vec<F>>, OracleError> {
    if horizon == 0 {
        return Err(OracleError::ZeroHorizon);
    }
    let n_s = model.n_states;
    let n_a = model.n_actions;

    // forward[t](s) = log Σ over prefixes ending in s_t = s of powered weight
    // (excluding the step-t action factor).
    let mut forward = vec![vec![F::neg_infinity(); n_s]; horizon];
    for s in 0..n_s {
        forward[0][s] = power * boundary.initial_state_log[s];
    }
    for t in 0..horizon - 1 {
        for s_next in 0..n_s {
            let terms = (0..n_s * n_a).map(|i| {
                let (s, a) = (i / n_a, i % n_a);
                let p = model.transition_row(s, a)[s_next];
                if p > F::zero() {
                    forward[t][s] + power * (model.reward_prime(s, a) + p.ln())
                } else {
                    F::neg_infinity()
                }
            });
            forward[t + 1][s_next] = lse_iter(terms);
        }
    }

    // backward[t](s) = log Σ over suffixes starting at s_t = s of powered
    // weight (including the step-t action factor and the terminal message).
    let mut backward = vec![vec![F::neg_infinity(); n_s]; horizon];
    for s in 0..n_s {
        let terms = (0..n_a)
            .map(|a| power * (model.reward_prime(s, a) + boundary.terminal_log[s * n_a + a]));
        backward[horizon - 1][s] = lse_iter(terms);
    }
    for t in (0..horizon - 1).rev() {
        for s in 0..n_s {
            let terms = (0..n_a).map(|a| {
                let row = model.transition_row(s, a);
                let inner = (0..n_s).map(|s_next| {
                    if row[s_next] > F::zero() {
                        power * row[s_next].ln() + backward[t + 1][s_next]
                    } else {
                        F::neg_infinity()
                    }
                });
                power * model.reward_prime(s, a) + lse_iter(inner)
            });
            backward[t][s] = lse_iter(terms);
        }
    }

    Ok((0..horizon)
        .map(|t| {
            let joint: Vec<F> = (0..n_s).map(|s| forward[t][s] + backward[t][s]).collect();
            normalize_log(&joint)
        })
        .collect())
}

/// Result of [`brute_map`].
#[derive(Debug, Clone, PartialEq)]
pub struct BruteMapResult<F> {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub log_weight: F,
}

/// Globally optimal sequence `argmax p(s_1 a_1 .. s_T a_T | K)` by exhaustive
/// search; exact ties resolve to the lexicographically smallest sequence.
pub fn brute_map<F: Real>(
    model: &MdpModel<F>,
    horizon: usize,
    boundary: &Boundary<F>,
) -> Result<BruteMapResult<F>, OracleError> {
    if horizon == 0 {
        return Err(OracleError::ZeroHorizon);
    }
    TinyInstanceGuard::default().check_sequences(model.n_states, model.n_actions, horizon)?;

    let mut best: Option<BruteMapResult<F>> = None;
    for_each_sequence(model, boundary, horizon, &mut |states, actions, log_w| {
        // Enumeration is lexicographic, so strict improvement keeps the
        // lexicographically smallest among exact ties.
        if best.as_ref().is_none_or(|b| log_w > b.log_weight) {
            best = Some(BruteMapResult {
                states: states.to_vec(),
                actions: actions.to_vec(),
                log_weight: log_w,
            });
        }
    });
    Ok(best.expect("every model has at least one positive-probability sequence"))
}

/// Optimal expected discounted sum of `R'` per start state, by enumerating
/// every time-indexed deterministic policy and evaluating it exactly.
pub fn brute_dp_value<F: Real>(model: &MdpModel<F>, horizon: usize) -> Result<Vec<F>, OracleError> {
    if horizon == 0 {
        return Err(OracleError::ZeroHorizon);
    }
    TinyInstanceGuard::default().check_policies(model.n_states, model.n_actions, horizon)?;

    let n_s = model.n_states;
    let n_a = model.n_actions;
    let n_entries = n_s * horizon;
    let n_policies = checked_pow(n_a as u64, n_entries as u32);

    let mut best = vec![F::neg_infinity(); n_s];
    let mut assignment = vec![0usize; n_entries];
    for idx in 0..n_policies {
        let mut rem = idx;
        for slot in assignment.iter_mut() {
            *slot = (rem % n_a as u64) as usize;
            rem /= n_a as u64;
        }
        // Backward policy evaluation: V_t(s) = R'(s, a_ts) + γ Σ p V_{t+1}.
        let mut v = vec![F::zero(); n_s];
        for t in (0..horizon).rev() {
            let mut v_new = vec![F::zero(); n_s];
            for s in 0..n_s {
                let a = assignment[t * n_s + s];
                let mut future = F::zero();
                if t + 1 < horizon {
                    for (s_next, &p) in model.transition_row(s, a).iter().enumerate() {
                        if p > F::zero() {
                            future = future + p * v[s_next];
                        }
                    }
                }
                v_new[s] = model.reward_prime(s, a) + model.discount * future;
            }
            v = v_new;
        }
        for s in 0..n_s {
            best[s] = best[s].max(v[s]);
        }
    }
    Ok(best)
}

/// Result of [`brute_rew_ent`]: the optimal functional value (uniform start
/// distribution) and the optimizing per-(t, s) action distributions, plus
/// the number of coarse grid points within `1e-6` of each per-(t, s)
/// optimum (plateau width; > 1 means the optimum is not isolated at grid
/// resolution).
#[derive(Debug, Clone, PartialEq)]
pub struct RewEntSolution<F> {
    pub value: F,
    /// `policies[t][s]` is the action distribution at `(t+1, s)`.
    pub policies: Vec<Vec<Vec<F>>>,
    pub plateau_counts: Vec<Vec<usize>>,
}

/// Grid-search maximization of the reward-plus-scaled-entropy functional
/// `E[Σ_t (R'(s_t, a_t) - (1/α) log q(a_t|s_t))]` over the per-(t, s)
/// action simplices, for 2-state/2-action instances with `T <= 2`.
///
/// The per-step objective `Σ_a q_a (R' + γ E V_{t+1}) + (1/α) H(q)` is
/// strictly concave, so a coarse 1e-3 grid plus a 1e-6 refinement around the
/// best coarse point brackets the optimum to well below 1e-9.
pub fn brute_rew_ent<F: Real>(
    model: &MdpModel<F>,
    horizon: usize,
    alpha: F,
) -> Result<RewEntSolution<F>, OracleError> {
    if model.n_states != 2 || model.n_actions != 2 || horizon == 0 || horizon > 2 {
        return Err(OracleError::OutsideTinyDomain);
    }

    let n_s = model.n_states;
    let mut v_next = vec![F::zero(); n_s];
    let mut policies = vec![vec![vec![F::zero(); 2]; n_s]; horizon];
    let mut plateau_counts = vec![vec![0usize; n_s]; horizon];

    for t in (0..horizon).rev() {
        let mut v_here = vec![F::zero(); n_s];
        for s in 0..n_s {
            // Per-action payoff: R'(s,a) + γ E[V_{t+1} | s, a].
            let payoff: Vec<F> = (0..2)
                .map(|a| {
                    let mut future = F::zero();
                    if t + 1 < horizon {
                        for (s_next, &p) in model.transition_row(s, a).iter().enumerate() {
                            if p > F::zero() {
                                future = future + p * v_next[s_next];
                            }
                        }
                    }
                    model.reward_prime(s, a) + model.discount * future
                })
                .collect();

            let objective = |x: F| -> F {
                // q = (x, 1 - x); entropy with 0 log 0 = 0.
                let q0 = x;
                let q1 = F::one() - x;
                let mut h = F::zero();
                if q0 > F::zero() {
                    h = h - q0 * q0.ln();
                }
                if q1 > F::zero() {
                    h = h - q1 * q1.ln();
                }
                q0 * payoff[0] + q1 * payoff[1] + h / alpha
            };

            let coarse_pts = (1.0 / GRID_STEP) as usize;
            let mut best_x = F::zero();
            let mut best_val = F::neg_infinity();
            for i in 0..=coarse_pts {
                let x = F::of(i as f64 * GRID_STEP);
                let val = objective(x);
                if val > best_val {
                    best_val = val;
                    best_x = x;
                }
            }
            let plateau = (0..=coarse_pts)
                .filter(|&i| best_val - objective(F::of(i as f64 * GRID_STEP)) <= F::of(1e-6))
                .count();

            // Local refinement: fine grid on [best - step, best + step].
            let lo = (best_x - F::of(GRID_STEP)).max(F::zero());
            let hi = (best_x + F::of(GRID_STEP)).min(F::one());
            let fine_pts = ((hi - lo).as_f64() / REFINE_STEP).round() as usize;
            for i in 0..=fine_pts {
                let x = (lo + F::of(i as f64 * REFINE_STEP)).min(hi);
                let val = objective(x);
                if val > best_val {
                    best_val = val;
                    best_x = x;
                }
            }

            v_here[s] = best_val;
            policies[t][s] = vec![best_x, F::one() - best_x];
            plateau_counts[t][s] = plateau;
        }
        v_next = v_here;
    }

    let value = v_next.iter().copied().sum::<F>() / F::of(n_s as f64);
    Ok(RewEntSolution {
        value,
        policies,
        plateau_counts,
    })
}

fn log_add<F: Real>(a: F, b: F) -> F {
    if a == F::neg_infinity() {
        return b;
    }
    if b == F::neg_infinity() {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Normalizes a log-weight vector into a probability vector summing to one.
fn normalize_log<F: Real>(log_w: &[F]) -> Vec<F> {
    let m = log_w.iter().copied().fold(F::neg_infinity(), F::max);
    if m == F::neg_infinity() {
        // No support anywhere: fall back to uniform (callers treat this as
        // a degenerate instance).
        return vec![F::one() / F::of(log_w.len() as f64); log_w.len()];
    }
    let z: F = log_w.iter().map(|&x| (x - m).exp()).sum();
    log_w.iter().map(|&x| (x - m).exp() / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backups::BackupRule;
    use crate::engine::{solve_horizon, Boundary};
    use crate::model::MdpModel;
    use approx::assert_abs_diff_eq;

    fn uniform_tiny() -> MdpModel<f64> {
        let transition = vec![0.5; 2 * 2 * 2];
        let reward = vec![-1.0; 4];
        MdpModel::new(
            2,
            2,
            transition,
            reward,
            MdpModel::uniform_action_log_prior(2),
            1.0,
        )
    }

    /// Fixed 3-state/2-action model with an interesting shape and a sparse row.
    fn little_model() -> MdpModel<f64> {
        #[rustfmt::skip]
        let transition = vec![
            // s0
            0.6, 0.4, 0.0,
            0.0, 0.3, 0.7,
            // s1
            1.0, 0.0, 0.0,
            0.2, 0.5, 0.3,
            // s2
            0.0, 0.0, 1.0,
            0.4, 0.4, 0.2,
        ];
        let reward = vec![-0.3, -1.2, -0.8, -0.1, 0.0, -2.0];
        MdpModel::new(
            3,
            2,
            transition,
            reward,
            vec![0.6f64.ln(), 0.4f64.ln()],
            1.0,
        )
    }

    #[test]
    fn guard_rejects_oversized_instances() {
        let guard = TinyInstanceGuard::default();
        assert!(guard.check_sequences(4, 3, 3).is_ok());
        assert!(guard.check_sequences(10, 10, 4).is_err());
        assert!(guard.check_policies(2, 2, 2).is_ok());
        assert!(guard.check_policies(4, 4, 4).is_err());
    }

    #[test]
    fn uniform_model_has_uniform_marginals() {
        let m = uniform_tiny();
        let boundary = Boundary::uninformative(2, 2);
        let marg = brute_marginals(&m, 1, &boundary, 1.0).unwrap();
        assert_abs_diff_eq!(marg[0][0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(marg[0][1], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn enumeration_and_elimination_agree() {
        let m = little_model();
        let boundary = Boundary::uninformative(3, 2);
        for &power in &[1.0, 2.0, 3.0] {
            let a = brute_marginals(&m, 3, &boundary, power).unwrap();
            let b = brute_marginals_elim(&m, 3, &boundary, power).unwrap();
            for t in 0..3 {
                for s in 0..3 {
                    assert_abs_diff_eq!(a[t][s], b[t][s], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn map_on_deterministic_chain_is_the_rollout() {
        // Deterministic single-action cycle: only one positive-probability
        // sequence from the pinned start.
        #[rustfmt::skip]
        let transition = vec![
            0.0, 1.0, 0.0,
            0.0, 0.0, 1.0,
            1.0, 0.0, 0.0,
        ];
        let reward = vec![-1.0, -2.0, -3.0];
        let m = MdpModel::new(3, 1, transition, reward, vec![0.0], 1.0);
        let boundary = Boundary::uninformative(3, 1).with_start(1);
        let best = brute_map(&m, 3, &boundary).unwrap();
        assert_eq!(best.states, vec![1, 2, 0]);
        assert_eq!(best.actions, vec![0, 0, 0]);
        assert_abs_diff_eq!(best.log_weight, -2.0 - 3.0 - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn map_ties_resolve_lexicographically() {
        // Perfectly symmetric two-state model: sequences starting at 0 and 1
        // tie exactly; the lexicographic minimum starts at state 0.
        let m = uniform_tiny();
        let boundary = Boundary::uninformative(2, 2);
        let best = brute_map(&m, 2, &boundary).unwrap();
        assert_eq!(best.states, vec![0, 0]);
        assert_eq!(best.actions, vec![0, 0]);
    }

    #[test]
    fn dp_value_single_action_is_plain_expectation() {
        #[rustfmt::skip]
        let transition = vec![
            0.3, 0.7,
            1.0, 0.0,
        ];
        let reward = vec![-1.0, -2.0];
        let m = MdpModel::new(2, 1, transition, reward, vec![0.0], 1.0);
        let v = brute_dp_value(&m, 2).unwrap();
        // V(0) = -1 + (0.3 * -1 + 0.7 * -2); V(1) = -2 + (-1).
        assert_abs_diff_eq!(v[0], -1.0 + (0.3 * (-1.0) + 0.7 * (-2.0)), epsilon = 1e-14);
        assert_abs_diff_eq!(v[1], -3.0, epsilon = 1e-14);
    }

    #[test]
    fn rew_ent_constant_rewards_give_uniform_policy_and_closed_form_value() {
        let m = uniform_tiny();
        for &alpha in &[0.5, 1.0, 2.0] {
            let sol = brute_rew_ent(&m, 2, alpha).unwrap();
            let r_prime = -1.0 + 0.5f64.ln();
            let expected = 2.0 * (r_prime + 2.0f64.ln() / alpha);
            assert_abs_diff_eq!(sol.value, expected, epsilon = 1e-9);
            for t in 0..2 {
                for s in 0..2 {
                    assert_abs_diff_eq!(sol.policies[t][s][0], 0.5, epsilon = 1e-3);
                }
            }
        }
    }

    #[test]
    fn rew_ent_rejects_larger_instances() {
        let m = little_model();
        assert_eq!(
            brute_rew_ent(&m, 1, 1.0),
            Err(OracleError::OutsideTinyDomain)
        );
        let m2 = uniform_tiny();
        assert_eq!(
            brute_rew_ent(&m2, 3, 1.0),
            Err(OracleError::OutsideTinyDomain)
        );
    }

    #[test]
    fn sum_product_posteriors_match_enumeration() {
        let m = little_model();
        let boundary = Boundary::uninformative(3, 2);
        let sol = solve_horizon(&m, &BackupRule::SumProduct, 3, &boundary).unwrap();
        let engine_posts = crate::engine::posteriors(&sol).unwrap();
        let oracle_posts = brute_marginals(&m, 3, &boundary, 1.0).unwrap();
        for t in 0..3 {
            for s in 0..3 {
                assert_abs_diff_eq!(engine_posts[t][s], oracle_posts[t][s], epsilon = 1e-10);
            }
        }
    }
}
