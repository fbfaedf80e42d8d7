//! Finite-horizon sweeps and infinite-horizon steady-state iteration.
//!
//! The backward sweep runs the selected rule's Q/V backups from the terminal
//! boundary message down to step 1; the forward sweep composes forward state
//! messages from the initial boundary message, the action prior and the
//! reward prior. State posteriors are the (normalized) product of forward
//! and backward messages; for the Sum/Max-product the product is raised to
//! the power `α` first, matching the `p(·)^α` semantics of that family.
//!
//! Steady state repeats the backup from `V = 0` until the sup-norm change of
//! the max-shifted value table drops below tolerance. The shift makes the
//! criterion meaningful for every family at `γ = 1`: the unnormalized tables
//! of the expectation families drift by a constant per sweep (each step pays
//! at least `log |A|`), so only the shifted table reaches a fixed point.

use thiserror::Error;

use crate::backups::{backup_q, backup_v, BackupError, BackupRule, QTable, VTable};
use crate::model::MdpModel;
use crate::scalar::{clamp_log, Real};
use crate::softmax::{g_alpha_iter, lse_iter, max_iter};

/// Log-domain boundary messages: an initial message over states and a
/// terminal message over `(s, a)` pairs. Zeros mean "uninformative".
#[derive(Debug, Clone, PartialEq)]
pub struct Boundary<F> {
    pub initial_state_log: Vec<F>,
    pub terminal_log: Vec<F>,
}

impl<F: Real> Boundary<F> {
    /// Uniform initial message, uninformative terminal message.
    pub fn uninformative(n_states: usize, n_actions: usize) -> Self {
        Boundary {
            initial_state_log: vec![F::zero(); n_states],
            terminal_log: vec![F::zero(); n_states * n_actions],
        }
    }

    /// Pins the starting state: a delta forward message.
    pub fn with_start(mut self, state: usize) -> Self {
        for (s, v) in self.initial_state_log.iter_mut().enumerate() {
            *v = if s == state {
                F::zero()
            } else {
                F::log_floor()
            };
        }
        self
    }

    /// Pins the final state (uniform over the final action).
    pub fn with_terminal_state(mut self, state: usize, n_actions: usize) -> Self {
        let n_states = self.initial_state_log.len();
        for s in 0..n_states {
            for a in 0..n_actions {
                self.terminal_log[s * n_actions + a] = if s == state {
                    F::zero()
                } else {
                    F::log_floor()
                };
            }
        }
        self
    }

    fn validate(&self, model: &MdpModel<F>) -> Result<(), EngineError> {
        if self.initial_state_log.len() != model.n_states
            || self.terminal_log.len() != model.n_states * model.n_actions
        {
            return Err(EngineError::Backup(BackupError::ShapeMismatch));
        }
        let all_floor = |xs: &[F]| xs.iter().all(|&x| x <= F::log_floor() / F::of(2.0));
        if all_floor(&self.initial_state_log) || all_floor(&self.terminal_log) {
            return Err(EngineError::DegenerateBoundary);
        }
        Ok(())
    }
}

/// Why a steady-state run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Tolerance,
    MaxIter,
}

/// Per-iteration sup-norm increments of the (shifted) value table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport<F> {
    pub increments: Vec<F>,
    pub iterations: usize,
    pub terminated_by: Termination,
}

/// All per-step tables of one finite-horizon run.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSolution<F> {
    pub rule: BackupRule<F>,
    /// `Q_1..Q_T`.
    pub q: Vec<QTable<F>>,
    /// `V_1..V_T`.
    pub v: Vec<VTable<F>>,
    /// Forward state messages `f_1..f_T` (log domain).
    pub forward: Vec<VTable<F>>,
}

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Backup(#[from] BackupError),
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("tolerance must be positive and max_iter at least 1")]
    BadStopRule,
    #[error("boundary message is all-floor or mis-shaped")]
    DegenerateBoundary,
    #[error("posterior at step {step} has no support: constraints are contradictory")]
    Infeasible { step: usize },
    #[error("increments grew more than tenfold over 50 iterations (at iteration {iteration})")]
    Diverged { iteration: usize },
}

/// Backward part of a finite-horizon run: `Q_t`, `V_t` for `t = T..1`.
///
/// `Q_T = R' + terminal message`; below that, `Q_t` backs up `V_{t+1}`
/// through the rule. Tables are raw (no per-step normalization), so
/// log-domain scores keep their absolute meaning.
pub fn backward_sweep<F: Real>(
    model: &MdpModel<F>,
    rule: &BackupRule<F>,
    horizon: usize,
    boundary: &Boundary<F>,
) -> Result<(Vec<QTable<F>>, Vec<VTable<F>>), EngineError> {
    rule.validate()?;
    if horizon == 0 {
        return Err(EngineError::ZeroHorizon);
    }
    boundary.validate(model)?;

    let mut q_tables = vec![QTable::zeros(0, 0); horizon];
    let mut v_tables = vec![VTable::zeros(0); horizon];

    let mut q_last = QTable::zeros(model.n_states, model.n_actions);
    for s in 0..model.n_states {
        for a in 0..model.n_actions {
            q_last.values[s * model.n_actions + a] = clamp_log(
                model.reward_prime(s, a) + boundary.terminal_log[s * model.n_actions + a],
            );
        }
    }
    let v_last = backup_v(rule, &q_last)?;
    q_tables[horizon - 1] = q_last;
    v_tables[horizon - 1] = v_last;

    for t in (0..horizon - 1).rev() {
        let q = backup_q(rule, model, &v_tables[t + 1])?;
        let v = backup_v(rule, &q)?;
        q_tables[t] = q;
        v_tables[t] = v;
    }
    Ok((q_tables, v_tables))
}

/// Forward state messages `f_1..f_T`.
///
/// `f_1` is the initial boundary message; each step composes the joint
/// message `f(s,a) = f_t(s) + log p(a) + R(s,a)` and pushes it through the
/// dynamics with the rule's forward reduction (the expectation families all
/// share the DP forward row).
pub fn forward_sweep<F: Real>(
    model: &MdpModel<F>,
    rule: &BackupRule<F>,
    horizon: usize,
    boundary: &Boundary<F>,
) -> Result<Vec<VTable<F>>, EngineError> {
    rule.validate()?;
    if horizon == 0 {
        return Err(EngineError::ZeroHorizon);
    }
    boundary.validate(model)?;

    let n_s = model.n_states;
    let n_a = model.n_actions;
    let mut forward = Vec::with_capacity(horizon);
    forward.push(VTable {
        values: boundary
            .initial_state_log
            .iter()
            .map(|&x| clamp_log(x))
            .collect(),
    });

    for t in 0..horizon - 1 {
        let f_t = &forward[t];
        // Joint forward message over (s, a) entering the dynamics block.
        let joint: Vec<F> = (0..n_s * n_a)
            .map(|i| {
                let (s, a) = (i / n_a, i % n_a);
                clamp_log(f_t.at(s) + model.reward_prime(s, a))
            })
            .collect();
        let mut next = vec![F::zero(); n_s];
        for (s_next, out) in next.iter_mut().enumerate() {
            let terms = (0..n_s * n_a).map(|i| {
                let (s, a) = (i / n_a, i % n_a);
                let p = model.transition_row(s, a)[s_next];
                if p > F::zero() {
                    p.ln() + joint[i]
                } else {
                    F::log_floor()
                }
            });
            let reduced = match *rule {
                BackupRule::SumProduct => lse_iter(terms),
                BackupRule::MaxProduct => max_iter(terms),
                BackupRule::SumMaxProduct { alpha } => g_alpha_iter(terms, alpha),
                BackupRule::Dp | BackupRule::SoftDp { .. } | BackupRule::MaxRewEnt { .. } => (0
                    ..n_s * n_a)
                    .map(|i| {
                        let (s, a) = (i / n_a, i % n_a);
                        let p = model.transition_row(s, a)[s_next];
                        if p > F::zero() {
                            p * joint[i]
                        } else {
                            F::zero()
                        }
                    })
                    .sum(),
            };
            *out = clamp_log(reduced);
        }
        forward.push(VTable { values: next });
    }
    Ok(forward)
}

/// Runs both sweeps and bundles the per-step tables.
pub fn solve_horizon<F: Real>(
    model: &MdpModel<F>,
    rule: &BackupRule<F>,
    horizon: usize,
    boundary: &Boundary<F>,
) -> Result<HorizonSolution<F>, EngineError> {
    let (q, v) = backward_sweep(model, rule, horizon, boundary)?;
    let forward = forward_sweep(model, rule, horizon, boundary)?;
    Ok(HorizonSolution {
        rule: *rule,
        q,
        v,
        forward,
    })
}

/// Per-step state posteriors in the probability domain, each summing to one.
///
/// `log posterior ∝ f_t + V_t`, raised to `α` for the Sum/Max-product (that
/// family marginalizes the `α`-powered joint distribution).
pub fn posteriors<F: Real>(sol: &HorizonSolution<F>) -> Result<Vec<Vec<F>>, EngineError> {
    let power = match sol.rule {
        BackupRule::SumMaxProduct { alpha } => alpha,
        _ => F::one(),
    };
    let mut out = Vec::with_capacity(sol.v.len());
    for (t, (f, v)) in sol.forward.iter().zip(&sol.v).enumerate() {
        let log_post: Vec<F> = f
            .values
            .iter()
            .zip(&v.values)
            .map(|(&fv, &bv)| power * clamp_log(fv + bv))
            .collect();
        let m = max_iter(log_post.iter().copied());
        if m <= F::log_floor() * F::of(0.25) {
            return Err(EngineError::Infeasible { step: t + 1 });
        }
        let z: F = log_post.iter().map(|&x| (x - m).exp()).sum();
        out.push(log_post.iter().map(|&x| (x - m).exp() / z).collect());
    }
    Ok(out)
}

/// Iterates the backup to a steady state.
///
/// Starts from `V = 0` (uninformative terminal block), applies one Q backup
/// and one V backup per iteration, and measures the sup-norm change of the
/// max-shifted V. The probability-family tables are returned shifted to a
/// zero max; the expectation families keep their raw values.
pub fn steady_state<F: Real>(
    model: &MdpModel<F>,
    rule: &BackupRule<F>,
    tol: F,
    max_iter_count: usize,
) -> Result<(QTable<F>, VTable<F>, ConvergenceReport<F>), EngineError> {
    rule.validate()?;
    if tol <= F::zero() || max_iter_count == 0 {
        return Err(EngineError::BadStopRule);
    }

    let mut v = VTable::zeros(model.n_states);
    let mut v_shifted = v.clone();
    let mut q = QTable::zeros(model.n_states, model.n_actions);
    let mut increments: Vec<F> = Vec::new();
    let mut terminated_by = Termination::MaxIter;
    let mut iterations = max_iter_count;

    for k in 0..max_iter_count {
        q = backup_q(rule, model, &v)?;
        v = backup_v(rule, &q)?;
        let new_shifted = v.shifted(v.max_entry());
        let inc = new_shifted.sup_distance(&v_shifted);
        increments.push(inc);
        v_shifted = new_shifted;
        if rule.is_probability_family() {
            // Keep the iterate itself normalized: max entry zero.
            let shift = v.max_entry();
            q = q.shifted(shift);
            v = v.shifted(shift);
        }
        if inc < tol {
            terminated_by = Termination::Tolerance;
            iterations = k + 1;
            break;
        }
        if k >= 50 && increments[k] > F::of(10.0) * increments[k - 50] {
            return Err(EngineError::Diverged { iteration: k + 1 });
        }
    }
    increments.truncate(iterations);
    Ok((
        q,
        v,
        ConvergenceReport {
            increments,
            iterations,
            terminated_by,
        },
    ))
}
