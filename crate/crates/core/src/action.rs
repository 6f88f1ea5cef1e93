//! Action functional of the x component on discretized scalar paths, and the
//! closed-form extremals of the constant-diffusion case.
//!
//! For a path `w : [0, T] → ℝ` the action is
//!
//! ```text
//! S(w) = 1/(ε cos θ)² ∫₀ᵀ L(w, ẇ) dt,   L(w, v) = ½ ((v - λ1 w (1 - w²)) / (σ0 + σ1 w))²
//! ```
//!
//! The integral `∫ L` alone is the *normalized* action; it does not depend on
//! `ε` and is what passage costs are compared with.

use alloc::vec::Vec;

use thiserror::Error;

use crate::model::{diffusion_coeff, x_drift, Params};
use crate::numerics::pairwise_sum;

/// Relative threshold below which `σ0 + σ1 w` counts as vanishing.
pub const DIFFUSION_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActionError {
    #[error("invalid path: {0}")]
    InvalidPath(&'static str),
    #[error("diffusion coefficient vanishes at w = {w}")]
    DegenerateDiffusion { w: f64 },
    #[error("node {node}: {source}")]
    AtNode {
        node: usize,
        #[source]
        source: alloc::boxed::Box<ActionError>,
    },
    #[error("closed form requires sigma1 = 0 (got {sigma1})")]
    RequiresConstantDiffusion { sigma1: f64 },
    #[error("out of domain: {0}")]
    Domain(&'static str),
}

/// Values of a scalar path on a uniform grid of `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarPath {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl ScalarPath {
    /// Builds a path from explicit nodes; the grid must start at 0, have at
    /// least three nodes and be uniform to a relative 1e-9.
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self, ActionError> {
        if times.len() != values.len() {
            return Err(ActionError::InvalidPath(
                "times and values differ in length",
            ));
        }
        if times.len() < 3 {
            return Err(ActionError::InvalidPath("at least 3 nodes required"));
        }
        if times[0] != 0.0 {
            return Err(ActionError::InvalidPath("first time must be 0"));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(ActionError::InvalidPath("non-finite node"));
        }
        let n = times.len();
        let t_final = times[n - 1];
        if t_final <= 0.0 {
            return Err(ActionError::InvalidPath("horizon must be positive"));
        }
        let h = t_final / (n - 1) as f64;
        if times
            .iter()
            .enumerate()
            .any(|(k, t)| (t - k as f64 * h).abs() > 1e-9 * t_final)
        {
            return Err(ActionError::InvalidPath("grid is not uniform"));
        }
        Ok(Self { times, values })
    }

    /// Samples `f` on `n` uniform nodes of `[0, horizon]`.
    pub fn from_fn(horizon: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self, ActionError> {
        if n < 3 {
            return Err(ActionError::InvalidPath("at least 3 nodes required"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ActionError::InvalidPath("horizon must be positive"));
        }
        let h = horizon / (n - 1) as f64;
        let times: Vec<f64> = (0..n)
            .map(|k| if k == n - 1 { horizon } else { k as f64 * h })
            .collect();
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn step(&self) -> f64 {
        self.horizon() / (self.len() - 1) as f64
    }

    /// Finite-difference velocity: centered inside, second-order one-sided at the ends.
    pub fn velocities(&self) -> Vec<f64> {
        let w = &self.values;
        let n = w.len();
        let h = self.step();
        let mut v = Vec::with_capacity(n);
        v.push((-3.0 * w[0] + 4.0 * w[1] - w[2]) / (2.0 * h));
        for k in 1..n - 1 {
            v.push((w[k + 1] - w[k - 1]) / (2.0 * h));
        }
        v.push((3.0 * w[n - 1] - 4.0 * w[n - 2] + w[n - 3]) / (2.0 * h));
        v
    }
}

/// Action with and without the `1/(ε cos θ)²` prefactor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionValue {
    pub raw: f64,
    pub normalized: f64,
}

impl ActionValue {
    pub fn from_normalized(p: &Params, normalized: f64) -> Self {
        let scale = p.x_noise_scale();
        Self {
            raw: normalized / (scale * scale),
            normalized,
        }
    }
}

fn checked_diffusion(p: &Params, w: f64) -> Result<f64, ActionError> {
    let sigma = diffusion_coeff(p, w);
    if sigma.abs() < DIFFUSION_FLOOR * p.sigma0 {
        Err(ActionError::DegenerateDiffusion { w })
    } else {
        Ok(sigma)
    }
}

/// `½ ((ẇ - λ1 w (1 - w²)) / (σ0 + σ1 w))²`.
pub fn lagrangian(p: &Params, w: f64, wdot: f64) -> Result<f64, ActionError> {
    let sigma = checked_diffusion(p, w)?;
    let r = (wdot - x_drift(p.lambda1, w)) / sigma;
    Ok(0.5 * r * r)
}

/// Trapezoidal `∫ L(w, ẇ) dt` with finite-difference velocities.
pub fn normalized_action(p: &Params, path: &ScalarPath) -> Result<f64, ActionError> {
    let v = path.velocities();
    let h = path.step();
    let n = path.len();
    let mut terms = Vec::with_capacity(n);
    for (k, (&w, &wdot)) in path.values().iter().zip(&v).enumerate() {
        let l = lagrangian(p, w, wdot).map_err(|e| ActionError::AtNode {
            node: k,
            source: alloc::boxed::Box::new(e),
        })?;
        let weight = if k == 0 || k == n - 1 { 0.5 * h } else { h };
        terms.push(weight * l);
    }
    Ok(pairwise_sum(&terms))
}

pub fn action(p: &Params, path: &ScalarPath) -> Result<ActionValue, ActionError> {
    normalized_action(p, path).map(|s| ActionValue::from_normalized(p, s))
}

/// Sign of the time direction of an extremal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `ẇ = +λ1 w (1 - w²)`: the noiseless flow, zero action.
    Forward,
    /// `ẇ = -λ1 w (1 - w²)`: against the flow, toward the saddle.
    Reverse,
}

fn check_start(w0: f64) -> Result<(), ActionError> {
    if w0.is_nan() || w0.abs() >= 1.0 || w0 == 0.0 {
        return Err(ActionError::Domain(
            "w0 must lie in (-1, 1) and differ from 0",
        ));
    }
    Ok(())
}

/// Closed-form solution of `ẇ = ±λ1 w (1 - w²)` from `w0` at time `t`.
pub fn extremal_value(lambda1: f64, w0: f64, t: f64, direction: Direction) -> f64 {
    let rate = match direction {
        Direction::Forward => lambda1,
        Direction::Reverse => -lambda1,
    };
    let e = libm::exp(rate * t);
    let w02 = w0 * w0;
    w0 * e / libm::sqrt(1.0 - w02 + w02 * e * e)
}

/// Samples the extremal from `w0` on `n` nodes of `[0, horizon]`.
pub fn extremal_path(
    p: &Params,
    w0: f64,
    horizon: f64,
    n: usize,
    direction: Direction,
) -> Result<ScalarPath, ActionError> {
    check_start(w0)?;
    let lambda1 = p.lambda1;
    ScalarPath::from_fn(horizon, n, |t| extremal_value(lambda1, w0, t, direction))
}

fn require_constant_diffusion(p: &Params) -> Result<(), ActionError> {
    if p.sigma1 != 0.0 {
        Err(ActionError::RequiresConstantDiffusion { sigma1: p.sigma1 })
    } else {
        Ok(())
    }
}

/// Control that makes the x component of the control system follow the reverse extremal from `w0`.
pub fn extremal_control(p: &Params, w0: f64, t: f64) -> Result<f64, ActionError> {
    require_constant_diffusion(p)?;
    let l1 = p.lambda1;
    let w02 = w0 * w0;
    let decay = libm::exp(-l1 * t);
    let base = 1.0 - w02 + w02 * decay * decay;
    let denom = p.x_noise_scale() * p.sigma0 * base * libm::sqrt(base);
    Ok(-2.0 * l1 * w0 * (1.0 - w02) * decay / denom)
}

/// Normalized action of the reverse extremal from `w0` to `w_t`:
/// `λ1/(2σ0²) ((w_t² - 1)² - (w0² - 1)²)`.
pub fn closed_form_action(p: &Params, w0: f64, w_t: f64) -> Result<f64, ActionError> {
    require_constant_diffusion(p)?;
    if w0.is_nan() || w0.abs() > 1.0 || !w_t.is_finite() {
        return Err(ActionError::Domain("w0 must lie in [-1, 1]"));
    }
    if w_t.abs() > w0.abs() || w0 * w_t < 0.0 {
        return Err(ActionError::Domain(
            "endpoints are not joined by one monotone reverse-flow segment",
        ));
    }
    let a = w_t * w_t - 1.0;
    let b = w0 * w0 - 1.0;
    Ok(p.lambda1 / (2.0 * p.sigma0 * p.sigma0) * (a * a - b * b))
}
