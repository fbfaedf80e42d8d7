//! Deterministic report writers.
//!
//! All numbers go through [`fmt_g12`] (12 significant digits, trailing zeros
//! trimmed), grids are serialized row-major with explicit width/height
//! headers, and every writer emits keys in a fixed order, so identical runs
//! produce byte-identical files.

use fgplan_core::model::{GridSpec, ACTION_NAMES};
use fgplan_core::{PolicyTable64, QTable64, VTable64};

/// Arrow glyph per action (row-major 3x3 scan, `o` for still).
pub const ARROW_GLYPHS: [char; 9] = ['↖', '↑', '↗', '←', 'o', '→', '↙', '↓', '↘'];
/// Obstacle class character rendered as-is in arrow grids.
pub const OBSTACLE_CLASS: char = '#';

/// Formats with 12 significant digits, like `printf %.12g`.
pub fn fmt_g12(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        // Tables are floor-clamped, so this only trips on caller bugs.
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci
        .split_once('e')
        .expect("float format always has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> &str {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.')
}

fn join_g12(values: impl Iterator<Item = f64>) -> String {
    values.map(fmt_g12).collect::<Vec<_>>().join(",")
}

pub fn value_json_steady(grid: &GridSpec, v: &VTable64) -> String {
    format!(
        "{{\"width\":{},\"height\":{},\"mode\":\"steady-state\",\"v\":[{}]}}\n",
        grid.width,
        grid.height,
        join_g12(v.values.iter().copied())
    )
}

pub fn value_json_horizon(grid: &GridSpec, v_per_step: &[VTable64]) -> String {
    let steps: Vec<String> = v_per_step
        .iter()
        .map(|v| format!("[{}]", join_g12(v.values.iter().copied())))
        .collect();
    format!(
        "{{\"width\":{},\"height\":{},\"mode\":\"horizon\",\"horizon\":{},\"v_per_step\":[{}]}}\n",
        grid.width,
        grid.height,
        v_per_step.len(),
        steps.join(",")
    )
}

fn q_rows(q: &QTable64) -> String {
    (0..q.n_states)
        .map(|s| format!("[{}]", join_g12(q.row(s).iter().copied())))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn q_json_steady(grid: &GridSpec, q: &QTable64) -> String {
    format!(
        "{{\"width\":{},\"height\":{},\"actions\":{},\"q\":[{}]}}\n",
        grid.width,
        grid.height,
        action_names_json(),
        q_rows(q)
    )
}

pub fn q_json_horizon(grid: &GridSpec, q_per_step: &[QTable64]) -> String {
    let steps: Vec<String> = q_per_step
        .iter()
        .map(|q| format!("[{}]", q_rows(q)))
        .collect();
    format!(
        "{{\"width\":{},\"height\":{},\"actions\":{},\"horizon\":{},\"q_per_step\":[{}]}}\n",
        grid.width,
        grid.height,
        action_names_json(),
        q_per_step.len(),
        steps.join(",")
    )
}

fn action_names_json() -> String {
    let names: Vec<String> = ACTION_NAMES.iter().map(|n| format!("\"{n}\"")).collect();
    format!("[{}]", names.join(","))
}

pub fn policy_json(grid: &GridSpec, policy: &PolicyTable64, mean_entropy: f64) -> String {
    let rows: Vec<String> = (0..policy.n_states)
        .map(|s| format!("[{}]", join_g12(policy.row(s).iter().copied())))
        .collect();
    let argmax: Vec<String> = (0..policy.n_states)
        .map(|s| policy.argmax(s).to_string())
        .collect();
    let ties: Vec<String> = (0..policy.n_states)
        .map(|s| policy.tie_multiplicity(s).to_string())
        .collect();
    format!(
        "{{\"width\":{},\"height\":{},\"actions\":{},\"mean_entropy\":{},\"pi\":[{}],\"argmax\":[{}],\"tie_multiplicity\":[{}]}}\n",
        grid.width,
        grid.height,
        action_names_json(),
        fmt_g12(mean_entropy),
        rows.join(","),
        argmax.join(","),
        ties.join(",")
    )
}

/// ASCII policy grid: direction glyphs for the per-cell argmax, `*` goal,
/// `#` obstacle, `+` where the row maximum is tied.
pub fn arrows_text(grid: &GridSpec, policy: &PolicyTable64) -> String {
    let mut out = String::with_capacity((grid.width + 1) * grid.height);
    for r in 0..grid.height {
        for c in 0..grid.width {
            let s = grid.state_index(r, c);
            let class = grid.class_at(r, c);
            let glyph = if class == grid.goal_class {
                '*'
            } else if class == OBSTACLE_CLASS {
                OBSTACLE_CLASS
            } else if policy.tie_multiplicity(s) > 1 {
                '+'
            } else {
                ARROW_GLYPHS[policy.argmax(s)]
            };
            out.push(glyph);
        }
        out.push('\n');
    }
    out
}

pub fn convergence_csv(increments: &[f64]) -> String {
    let mut out = String::from("iteration,increment\n");
    for (i, inc) in increments.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, fmt_g12(*inc)));
    }
    out
}

pub struct CompareRow {
    pub rule: String,
    pub iterations: usize,
    pub final_increment: f64,
    pub mean_entropy: f64,
    pub wall_ms: f64,
}

pub fn comparison_csv(rows: &[CompareRow]) -> String {
    let mut out = String::from("rule,iterations,final_increment,mean_policy_entropy\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.rule,
            row.iterations,
            fmt_g12(row.final_increment),
            fmt_g12(row.mean_entropy)
        ));
    }
    out
}

/// Wall times live in their own file: they are not covered by the
/// byte-determinism contract the other reports obey.
pub fn timings_csv(rows: &[CompareRow]) -> String {
    let mut out = String::from("rule,wall_ms\n");
    for row in rows {
        out.push_str(&format!("{},{:.3}\n", row.rule, row.wall_ms));
    }
    out
}

pub fn increments_csv(per_rule: &[(String, Vec<f64>)]) -> String {
    let mut out = String::from("rule,iteration,increment\n");
    for (rule, increments) in per_rule {
        for (i, inc) in increments.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", rule, i + 1, fmt_g12(*inc)));
        }
    }
    out
}

pub fn point_policy_json(row: usize, col: usize, per_rule: &[(String, Vec<f64>)]) -> String {
    let entries: Vec<String> = per_rule
        .iter()
        .map(|(rule, pi)| {
            format!(
                "{{\"rule\":\"{rule}\",\"pi\":[{}]}}",
                join_g12(pi.iter().copied())
            )
        })
        .collect();
    format!(
        "{{\"row\":{row},\"col\":{col},\"rules\":[{}]}}\n",
        entries.join(",")
    )
}

pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub iterations: usize,
    pub mean_entropy: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("param,value,iterations,mean_policy_entropy\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.param,
            fmt_g12(row.value),
            row.iterations,
            fmt_g12(row.mean_entropy)
        ));
    }
    out
}

pub fn path_json(
    grid: &GridSpec,
    mode: &str,
    states: &[usize],
    actions: &[usize],
    connected: Option<bool>,
    goal_reached: Option<bool>,
    tie_multiplicity: usize,
) -> String {
    let cells: Vec<String> = states
        .iter()
        .map(|&s| format!("[{},{}]", s / grid.width, s % grid.width))
        .collect();
    let action_names: Vec<String> = actions
        .iter()
        .map(|&a| format!("\"{}\"", ACTION_NAMES[a]))
        .collect();
    let mut extras = String::new();
    if let Some(c) = connected {
        extras.push_str(&format!(",\"connected\":{c}"));
    }
    if let Some(g) = goal_reached {
        extras.push_str(&format!(",\"goal_reached\":{g}"));
    }
    format!(
        "{{\"mode\":\"{mode}\",\"states\":[{}],\"actions\":[{}],\"max_tie_multiplicity\":{tie_multiplicity}{extras}}}\n",
        cells.join(","),
        action_names.join(",")
    )
}
