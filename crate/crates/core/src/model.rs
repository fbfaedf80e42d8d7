//! Finite MDP data model and grid-world construction.
//!
//! A grid cell is a state; the nine one-cell moves (including `still`) are
//! the actions. The stochastic kernel sends `intent_prob` mass to the
//! intended landing cell and spreads the rest equally over the other eight
//! landings; mass that would leave the grid is redistributed equally over
//! the surviving in-grid landings of the same 3x3 neighborhood.

use std::collections::BTreeMap;

use serde::Deserialize;
use thiserror::Error;

use crate::scalar::Real;

/// The nine moves as (row, col) offsets, in row-major 3x3 scan order.
pub const GRID_ACTIONS: [(i32, i32); 9] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 0),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

pub const ACTION_NAMES: [&str; 9] = [
    "up-left",
    "up",
    "up-right",
    "left",
    "still",
    "right",
    "down-left",
    "down",
    "down-right",
];

/// Index of the `still` move in [`GRID_ACTIONS`].
pub const STILL_ACTION: usize = 4;

/// Finite state-action model: dynamics `p(s'|s,a)`, per-pair rewards
/// `R(s,a)` (log-prior units, `<= 0`), action log-priors and a discount.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpModel<F> {
    pub n_states: usize,
    pub n_actions: usize,
    /// Transition tensor, row-major over `(s, a, s')`.
    pub transition: Vec<F>,
    /// Reward table, row-major over `(s, a)`.
    pub reward: Vec<F>,
    /// `log p(a)` per action; `exp` of it sums to one.
    pub action_log_prior: Vec<F>,
    /// Discount factor in `(0, 1]`.
    pub discount: F,
    /// Stand-in for `log 0` on forbidden pairs; tables never go below it.
    pub log_floor: F,
}

impl<F: Real> MdpModel<F> {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<F>,
        reward: Vec<F>,
        action_log_prior: Vec<F>,
        discount: F,
    ) -> Self {
        assert_eq!(transition.len(), n_states * n_actions * n_states);
        assert_eq!(reward.len(), n_states * n_actions);
        assert_eq!(action_log_prior.len(), n_actions);
        MdpModel {
            n_states,
            n_actions,
            transition,
            reward,
            action_log_prior,
            discount,
            log_floor: F::log_floor(),
        }
    }

    /// `log p(a)` for a uniform action prior.
    pub fn uniform_action_log_prior(n_actions: usize) -> Vec<F> {
        vec![-F::of(n_actions as f64).ln(); n_actions]
    }

    #[inline]
    pub fn transition_row(&self, s: usize, a: usize) -> &[F] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.transition[base..base + self.n_states]
    }

    #[inline]
    pub fn reward_at(&self, s: usize, a: usize) -> F {
        self.reward[s * self.n_actions + a]
    }

    /// `R'(s,a) = log p(a) + R(s,a)`, the reward term entering every backup.
    #[inline]
    pub fn reward_prime(&self, s: usize, a: usize) -> F {
        self.action_log_prior[a] + self.reward_at(s, a)
    }
}

/// One invariant violation found by [`validate_model`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation<F: Real> {
    #[error("transition row (s={state}, a={action}) sums to {sum}, not 1")]
    RowSum { state: usize, action: usize, sum: F },
    #[error("transition (s={state}, a={action}, s'={next}) is negative: {value}")]
    NegativeTransition {
        state: usize,
        action: usize,
        next: usize,
        value: F,
    },
    #[error("reward (s={state}, a={action}) = {value} breaks the <= 0 convention")]
    PositiveReward {
        state: usize,
        action: usize,
        value: F,
    },
    #[error("reward (s={state}, a={action}) = {value} is below the floor {floor}")]
    RewardBelowFloor {
        state: usize,
        action: usize,
        value: F,
        floor: F,
    },
    #[error("reward (s={state}, a={action}) is not finite")]
    NonFiniteReward { state: usize, action: usize },
    #[error("exp(action_log_prior) sums to {sum}, not 1")]
    ActionPrior { sum: F },
    #[error("discount {value} is outside (0, 1]")]
    Discount { value: F },
}

/// Diagnostic check of every [`MdpModel`] invariant; empty result means valid.
pub fn validate_model<F: Real>(model: &MdpModel<F>) -> Vec<Violation<F>> {
    let mut out = Vec::new();
    let tol = F::one_sum_tol();
    for s in 0..model.n_states {
        for a in 0..model.n_actions {
            let row = model.transition_row(s, a);
            let mut sum = F::zero();
            for (next, &p) in row.iter().enumerate() {
                if p < F::zero() {
                    out.push(Violation::NegativeTransition {
                        state: s,
                        action: a,
                        next,
                        value: p,
                    });
                }
                sum = sum + p;
            }
            if (sum - F::one()).abs() > tol {
                out.push(Violation::RowSum {
                    state: s,
                    action: a,
                    sum,
                });
            }
            let r = model.reward_at(s, a);
            if !r.is_finite() {
                out.push(Violation::NonFiniteReward {
                    state: s,
                    action: a,
                });
            } else if r > F::zero() {
                out.push(Violation::PositiveReward {
                    state: s,
                    action: a,
                    value: r,
                });
            } else if r < model.log_floor {
                out.push(Violation::RewardBelowFloor {
                    state: s,
                    action: a,
                    value: r,
                    floor: model.log_floor,
                });
            }
        }
    }
    let prior_sum: F = model.action_log_prior.iter().map(|&lp| lp.exp()).sum();
    if (prior_sum - F::one()).abs() > tol {
        out.push(Violation::ActionPrior { sum: prior_sum });
    }
    if model.discount <= F::zero() || model.discount > F::one() {
        out.push(Violation::Discount {
            value: model.discount,
        });
    }
    out
}

/// 2-D semantic map: class label per cell, class rewards, one goal class.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    /// Row-major class labels.
    pub cells: Vec<char>,
    pub class_rewards: BTreeMap<char, f64>,
    pub goal_class: char,
}

impl GridSpec {
    #[inline]
    pub fn state_index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn class_at(&self, row: usize, col: usize) -> char {
        self.cells[self.state_index(row, col)]
    }

    pub fn reward_at(&self, row: usize, col: usize) -> f64 {
        self.class_rewards[&self.class_at(row, col)]
    }

    /// Cells whose class is the goal class, in row-major order.
    pub fn goals(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..self.height {
            for c in 0..self.width {
                if self.class_at(r, c) == self.goal_class {
                    out.push((r, c));
                }
            }
        }
        out
    }

    /// Row-major goal mask over states.
    pub fn goal_mask(&self) -> Vec<bool> {
        self.cells.iter().map(|&ch| ch == self.goal_class).collect()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("grid has zero width or height")]
    EmptyGrid,
    #[error("intent probability {0} is outside (0, 1]")]
    IntentProbability(f64),
    #[error("discount {0} is outside (0, 1]")]
    Discount(f64),
    #[error("cell class '{class}' at row {row}, column {col} has no reward entry")]
    MissingClassReward { class: char, row: usize, col: usize },
}

/// Builds the grid-world MDP with the stochastic one-cell move kernel.
///
/// Rewards are per-cell (`R(s,a) = class reward of s` for every `a`), the
/// action prior is uniform (`log p(a) = -log 9`), and rows of the kernel sum
/// to one: off-grid landings get zero probability and the removed mass is
/// spread equally over the in-grid landings of the same neighborhood.
pub fn build_grid_model<F: Real>(
    grid: &GridSpec,
    intent_prob: F,
    discount: F,
) -> Result<MdpModel<F>, ModelError> {
    if grid.width == 0 || grid.height == 0 {
        return Err(ModelError::EmptyGrid);
    }
    if intent_prob <= F::zero() || intent_prob > F::one() {
        return Err(ModelError::IntentProbability(intent_prob.as_f64()));
    }
    if discount <= F::zero() || discount > F::one() {
        return Err(ModelError::Discount(discount.as_f64()));
    }

    let n_states = grid.width * grid.height;
    let n_actions = GRID_ACTIONS.len();
    let mut transition = vec![F::zero(); n_states * n_actions * n_states];
    let mut reward = vec![F::zero(); n_states * n_actions];
    let spread = (F::one() - intent_prob) / F::of(8.0);

    for r in 0..grid.height {
        for c in 0..grid.width {
            let s = grid.state_index(r, c);
            let class = grid.class_at(r, c);
            let cell_reward =
                *grid
                    .class_rewards
                    .get(&class)
                    .ok_or(ModelError::MissingClassReward {
                        class,
                        row: r,
                        col: c,
                    })?;

            // Landing cell per move, None when off-grid.
            let landings: Vec<Option<usize>> = GRID_ACTIONS
                .iter()
                .map(|&(dr, dc)| {
                    let nr = r as i32 + dr;
                    let nc = c as i32 + dc;
                    if nr >= 0 && nr < grid.height as i32 && nc >= 0 && nc < grid.width as i32 {
                        Some(grid.state_index(nr as usize, nc as usize))
                    } else {
                        None
                    }
                })
                .collect();
            let n_in = landings.iter().filter(|l| l.is_some()).count();
            // `still` never leaves the grid, so every row keeps support.
            debug_assert!(n_in >= 1);

            for a in 0..n_actions {
                reward[s * n_actions + a] = F::of(cell_reward);

                let mut removed = F::zero();
                for (m, landing) in landings.iter().enumerate() {
                    let base = if m == a { intent_prob } else { spread };
                    if landing.is_none() {
                        removed = removed + base;
                    }
                }
                let bonus = removed / F::of(n_in as f64);
                let row = &mut transition
                    [(s * n_actions + a) * n_states..(s * n_actions + a + 1) * n_states];
                for (m, landing) in landings.iter().enumerate() {
                    if let Some(next) = landing {
                        let base = if m == a { intent_prob } else { spread };
                        row[*next] = row[*next] + base + bonus;
                    }
                }
            }
        }
    }

    Ok(MdpModel::new(
        n_states,
        n_actions,
        transition,
        reward,
        MdpModel::<F>::uniform_action_log_prior(n_actions),
        discount,
    ))
}

/// Grid model with a fully deterministic clamped-move kernel: every row is a
/// point mass on the intended landing cell, with off-grid coordinates clamped
/// to the border. This is the deterministic-system setting (`p(s'|s,a)` a
/// delta for every pair), which the stochastic kernel does not reach even at
/// `intent_prob = 1` because boundary rows keep their redistributed spread.
pub fn build_deterministic_grid_model<F: Real>(
    grid: &GridSpec,
    discount: F,
) -> Result<MdpModel<F>, ModelError> {
    if grid.width == 0 || grid.height == 0 {
        return Err(ModelError::EmptyGrid);
    }
    if discount <= F::zero() || discount > F::one() {
        return Err(ModelError::Discount(discount.as_f64()));
    }
    let n_states = grid.width * grid.height;
    let n_actions = GRID_ACTIONS.len();
    let mut transition = vec![F::zero(); n_states * n_actions * n_states];
    let mut reward = vec![F::zero(); n_states * n_actions];
    for r in 0..grid.height {
        for c in 0..grid.width {
            let s = grid.state_index(r, c);
            let class = grid.class_at(r, c);
            let cell_reward =
                *grid
                    .class_rewards
                    .get(&class)
                    .ok_or(ModelError::MissingClassReward {
                        class,
                        row: r,
                        col: c,
                    })?;
            for (a, &(dr, dc)) in GRID_ACTIONS.iter().enumerate() {
                let nr = (r as i32 + dr).clamp(0, grid.height as i32 - 1) as usize;
                let nc = (c as i32 + dc).clamp(0, grid.width as i32 - 1) as usize;
                transition[(s * n_actions + a) * n_states + grid.state_index(nr, nc)] = F::one();
                reward[s * n_actions + a] = F::of(cell_reward);
            }
        }
    }
    Ok(MdpModel::new(
        n_states,
        n_actions,
        transition,
        reward,
        MdpModel::<F>::uniform_action_log_prior(n_actions),
        discount,
    ))
}

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("map document is empty")]
    EmptyDocument,
    #[error("line {line}: expected header 'grid <width> <height>', got '{got}'")]
    BadHeader { line: usize, got: String },
    #[error("grid dimensions must be positive")]
    EmptyGrid,
    #[error("line {line}: malformed class declaration '{got}'")]
    BadClassLine { line: usize, got: String },
    #[error("line {line}: class '{class}' declared twice")]
    DuplicateClass { line: usize, class: char },
    #[error("line {line}: class reward {reward} must be <= 0")]
    PositiveClassReward { line: usize, reward: f64 },
    #[error("no class declarations before the goal-class line")]
    NoClasses,
    #[error("line {line}: expected 'goal-class <char>', got '{got}'")]
    BadGoalLine { line: usize, got: String },
    #[error("goal class '{class}' has no reward entry")]
    GoalClassWithoutReward { class: char },
    #[error("row {row} has {got} cells, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("unknown class character '{class}' at row {row}, column {col}")]
    UnknownClass { row: usize, col: usize, class: char },
    #[error("expected {expected} rows, found {got}")]
    MissingRows { expected: usize, got: usize },
    #[error("line {line}: unexpected trailing content '{got}'")]
    TrailingContent { line: usize, got: String },
    #[error("invalid JSON map: {0}")]
    Json(String),
}

#[derive(Deserialize)]
struct JsonMapDoc {
    width: usize,
    height: usize,
    classes: BTreeMap<String, f64>,
    goal_class: String,
    rows: Vec<String>,
}

/// Parses a map document, accepting the text format and its JSON equivalent
/// interchangeably (a document starting with `{` is treated as JSON).
pub fn load_map(text: &str) -> Result<GridSpec, MapError> {
    if text.trim_start().starts_with('{') {
        load_map_json(text)
    } else {
        load_map_text(text)
    }
}

fn load_map_text(text: &str) -> Result<GridSpec, MapError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end()))
        .filter(|(_, l)| !l.trim().is_empty());

    let (header_no, header) = lines.next().ok_or(MapError::EmptyDocument)?;
    let mut parts = header.split_whitespace();
    let (width, height) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
        (Some("grid"), Some(w), Some(h), None) => {
            let w: usize = w.parse().map_err(|_| MapError::BadHeader {
                line: header_no,
                got: header.to_string(),
            })?;
            let h: usize = h.parse().map_err(|_| MapError::BadHeader {
                line: header_no,
                got: header.to_string(),
            })?;
            (w, h)
        }
        _ => {
            return Err(MapError::BadHeader {
                line: header_no,
                got: header.to_string(),
            })
        }
    };
    if width == 0 || height == 0 {
        return Err(MapError::EmptyGrid);
    }

    let mut class_rewards = BTreeMap::new();
    let mut goal_class = None;
    for (line_no, line) in lines.by_ref() {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("class") => {
                let (ch, reward) = match (parts.next(), parts.next(), parts.next()) {
                    (Some(c), Some(r), None) if c.chars().count() == 1 => {
                        let reward: f64 = r.parse().map_err(|_| MapError::BadClassLine {
                            line: line_no,
                            got: line.to_string(),
                        })?;
                        (c.chars().next().unwrap(), reward)
                    }
                    _ => {
                        return Err(MapError::BadClassLine {
                            line: line_no,
                            got: line.to_string(),
                        })
                    }
                };
                if reward > 0.0 {
                    return Err(MapError::PositiveClassReward {
                        line: line_no,
                        reward,
                    });
                }
                if class_rewards.insert(ch, reward).is_some() {
                    return Err(MapError::DuplicateClass {
                        line: line_no,
                        class: ch,
                    });
                }
            }
            Some("goal-class") => {
                let ch = match (parts.next(), parts.next()) {
                    (Some(c), None) if c.chars().count() == 1 => c.chars().next().unwrap(),
                    _ => {
                        return Err(MapError::BadGoalLine {
                            line: line_no,
                            got: line.to_string(),
                        })
                    }
                };
                goal_class = Some(ch);
                break;
            }
            _ => {
                return Err(MapError::BadClassLine {
                    line: line_no,
                    got: line.to_string(),
                })
            }
        }
    }
    if class_rewards.is_empty() {
        return Err(MapError::NoClasses);
    }
    let goal_class = goal_class.ok_or(MapError::NoClasses)?;
    if !class_rewards.contains_key(&goal_class) {
        return Err(MapError::GoalClassWithoutReward { class: goal_class });
    }

    let mut cells = Vec::with_capacity(width * height);
    let mut rows_read = 0usize;
    for (line_no, line) in lines {
        if rows_read == height {
            return Err(MapError::TrailingContent {
                line: line_no,
                got: line.to_string(),
            });
        }
        let row: Vec<char> = line.trim().chars().collect();
        if row.len() != width {
            return Err(MapError::RaggedRow {
                row: rows_read,
                expected: width,
                got: row.len(),
            });
        }
        for (col, &ch) in row.iter().enumerate() {
            if !class_rewards.contains_key(&ch) {
                return Err(MapError::UnknownClass {
                    row: rows_read,
                    col,
                    class: ch,
                });
            }
            cells.push(ch);
        }
        rows_read += 1;
    }
    if rows_read != height {
        return Err(MapError::MissingRows {
            expected: height,
            got: rows_read,
        });
    }

    Ok(GridSpec {
        width,
        height,
        cells,
        class_rewards,
        goal_class,
    })
}

fn load_map_json(text: &str) -> Result<GridSpec, MapError> {
    let doc: JsonMapDoc = serde_json::from_str(text).map_err(|e| MapError::Json(e.to_string()))?;
    if doc.width == 0 || doc.height == 0 {
        return Err(MapError::EmptyGrid);
    }
    let mut class_rewards = BTreeMap::new();
    for (key, reward) in &doc.classes {
        let mut chars = key.chars();
        let ch = match (chars.next(), chars.next()) {
            (Some(c), None) => c,
            _ => {
                return Err(MapError::Json(format!(
                    "class key '{key}' is not a single character"
                )))
            }
        };
        if *reward > 0.0 {
            return Err(MapError::PositiveClassReward {
                line: 0,
                reward: *reward,
            });
        }
        class_rewards.insert(ch, *reward);
    }
    if class_rewards.is_empty() {
        return Err(MapError::NoClasses);
    }
    let goal_class = {
        let mut chars = doc.goal_class.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => c,
            _ => {
                return Err(MapError::Json(
                    "goal_class is not a single character".into(),
                ))
            }
        }
    };
    if !class_rewards.contains_key(&goal_class) {
        return Err(MapError::GoalClassWithoutReward { class: goal_class });
    }
    if doc.rows.len() != doc.height {
        return Err(MapError::MissingRows {
            expected: doc.height,
            got: doc.rows.len(),
        });
    }
    let mut cells = Vec::with_capacity(doc.width * doc.height);
    for (row_idx, row) in doc.rows.iter().enumerate() {
        let row: Vec<char> = row.chars().collect();
        if row.len() != doc.width {
            return Err(MapError::RaggedRow {
                row: row_idx,
                expected: doc.width,
                got: row.len(),
            });
        }
        for (col, &ch) in row.iter().enumerate() {
            if !class_rewards.contains_key(&ch) {
                return Err(MapError::UnknownClass {
                    row: row_idx,
                    col,
                    class: ch,
                });
            }
            cells.push(ch);
        }
    }
    Ok(GridSpec {
        width: doc.width,
        height: doc.height,
        cells,
        class_rewards,
        goal_class,
    })
}
