//! Soft-max reductions used by the backup rules.
//!
//! Four scalar reductions over a vector `x_1..x_N`:
//!
//! * [`lse`]      — `log Σ e^{x_j}`, the plain log-sum-exp,
//! * [`g_alpha`]  — `(1/α) log Σ e^{α x_j}`, interpolates mean-like → max,
//! * [`h_alpha`]  — `(Σ x_j^α)^{1/α}` for nonnegative inputs (probability-space twin of `g`),
//! * [`r_beta`]   — `Σ x_i e^{β x_i} / Σ e^{β x_j}`, the exponentially weighted mean.
//!
//! All evaluations shift by the maximum so that inputs as deep as the log
//! floor neither overflow nor turn into `-inf`/NaN.

use thiserror::Error;

use crate::scalar::{clamp_log, Real};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SoftmaxError {
    #[error("input vector must be non-empty")]
    EmptyInput,
    #[error("alpha must be > 0")]
    NonPositiveAlpha,
    #[error("beta must be >= 0")]
    NegativeBeta,
    #[error("h_alpha inputs must be nonnegative")]
    NegativeEntry,
}

/// `log Σ_j e^{x_j}`, shift-by-max. Result is always `>= max(x)`.
pub fn lse<F: Real>(x: &[F]) -> Result<F, SoftmaxError> {
    if x.is_empty() {
        return Err(SoftmaxError::EmptyInput);
    }
    Ok(lse_iter(x.iter().copied()))
}

/// `(1/α) log Σ_j e^{α x_j}` with `α > 0`.
///
/// Satisfies `max(x) <= g <= max(x) + (log N)/α`.
pub fn g_alpha<F: Real>(x: &[F], alpha: F) -> Result<F, SoftmaxError> {
    if x.is_empty() {
        return Err(SoftmaxError::EmptyInput);
    }
    if alpha <= F::zero() {
        return Err(SoftmaxError::NonPositiveAlpha);
    }
    Ok(g_alpha_iter(x.iter().copied(), alpha))
}

/// `(Σ_j x_j^α)^{1/α}` for `x_j >= 0`, `α > 0`.
///
/// Evaluated through the log domain as `exp(g_alpha(log x, α))`; zeros are
/// mapped to the log floor first, so they contribute nothing unless every
/// entry is zero. The backup rules only use `α >= 1`; values in `(0, 1)`
/// are accepted for study but sit outside those contracts.
pub fn h_alpha<F: Real>(x: &[F], alpha: F) -> Result<F, SoftmaxError> {
    if x.is_empty() {
        return Err(SoftmaxError::EmptyInput);
    }
    if alpha <= F::zero() {
        return Err(SoftmaxError::NonPositiveAlpha);
    }
    if x.iter().any(|&v| v < F::zero()) {
        return Err(SoftmaxError::NegativeEntry);
    }
    let g = g_alpha_iter(x.iter().map(|&v| clamp_log(v.ln())), alpha);
    Ok(g.exp())
}

/// `Σ_i x_i e^{β x_i} / Σ_j e^{β x_j}` with `β >= 0`.
///
/// `β = 0` is the arithmetic mean; large `β` tends to `max(x)`. The result
/// is always bracketed by `min(x)` and `max(x)`.
pub fn r_beta<F: Real>(x: &[F], beta: F) -> Result<F, SoftmaxError> {
    if x.is_empty() {
        return Err(SoftmaxError::EmptyInput);
    }
    if beta < F::zero() {
        return Err(SoftmaxError::NegativeBeta);
    }
    Ok(r_beta_iter(x.iter().copied(), beta))
}

/// Infallible lse over a non-empty iterator; all-`-inf` inputs floor out.
pub(crate) fn lse_iter<F: Real>(terms: impl Iterator<Item = F> + Clone) -> F {
    let m = max_iter(terms.clone());
    if !m.is_finite() {
        return F::log_floor();
    }
    let sum: F = terms.map(|t| (t - m).exp()).sum();
    clamp_log(m + sum.ln())
}

/// Infallible `g_alpha` over a non-empty iterator.
pub(crate) fn g_alpha_iter<F: Real>(terms: impl Iterator<Item = F> + Clone, alpha: F) -> F {
    clamp_log(lse_iter(terms.map(move |t| alpha * t)) / alpha)
}

/// Infallible `r_beta` over a non-empty iterator.
pub(crate) fn r_beta_iter<F: Real>(terms: impl Iterator<Item = F> + Clone, beta: F) -> F {
    if beta == F::zero() {
        let mut n = 0usize;
        let mut acc = F::zero();
        for t in terms {
            acc = acc + t;
            n += 1;
        }
        return acc / F::of(n as f64);
    }
    let m = max_iter(terms.clone());
    let mut num = F::zero();
    let mut den = F::zero();
    for t in terms {
        let w = (beta * (t - m)).exp();
        num = num + t * w;
        den = den + w;
    }
    num / den
}

pub(crate) fn max_iter<F: Real>(terms: impl Iterator<Item = F>) -> F {
    terms.fold(F::neg_infinity(), |acc, t| acc.max(t))
}
