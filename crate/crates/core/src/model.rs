//! Model constants, drift and diffusion fields, equilibria and generator of the
//! degenerate bistable system
//!
//! ```text
//! dX = λ1 X (1 - X²) dt                + ε cos θ (σ0 + σ1 X) dB
//! dY = (-λ2 Y + λ3 X (1 - X²)) dt       + ε sin θ (σ0 + σ1 X) dB
//! ```
//!
//! driven by a single scalar Brownian motion `B`.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};
use core::fmt;
use core::ops::Deref;

/// Absolute tolerance used when comparing `theta` against forbidden angles.
pub const THETA_TOLERANCE: f64 = 1e-12;

/// Unchecked parameter record, as read from a configuration document.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    pub theta: f64,
    pub epsilon: f64,
    pub epsilon0: f64,
}

impl Default for RawParams {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            sigma0: 1.0,
            sigma1: 0.0,
            theta: core::f64::consts::FRAC_PI_4,
            epsilon: 0.1,
            epsilon0: 0.5,
        }
    }
}

impl RawParams {
    pub fn validate(self) -> Result<Params, ValidationError> {
        validate_params(self)
    }
}

/// One violated admissibility clause.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamViolation {
    NotFinite { name: &'static str, value: f64 },
    NonPositiveRate { name: &'static str, value: f64 },
    NonPositiveSigma0 { value: f64 },
    Sigma1OutOfRange { sigma0: f64, sigma1: f64 },
    ThetaOutOfRange { theta: f64 },
    ThetaForbidden { theta: f64, forbidden: f64 },
    EpsilonOutOfRange { epsilon: f64, epsilon0: f64 },
    NonPositiveEpsilon0 { value: f64 },
}

impl fmt::Display for ParamViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::NotFinite { name, value } => write!(f, "{name} is not finite ({value})"),
            Self::NonPositiveRate { name, value } => write!(f, "{name} must be > 0 (got {value})"),
            Self::NonPositiveSigma0 { value } => write!(f, "sigma0 must be > 0 (got {value})"),
            Self::Sigma1OutOfRange { sigma0, sigma1 } => {
                write!(
                    f,
                    "sigma1 not in ]-sigma0, sigma0[ (sigma1 = {sigma1}, sigma0 = {sigma0})"
                )
            }
            Self::ThetaOutOfRange { theta } => write!(f, "theta not in ]-pi, pi[ (got {theta})"),
            Self::ThetaForbidden { theta, forbidden } => {
                write!(
                    f,
                    "theta forbidden: {theta} is within tolerance of {forbidden}"
                )
            }
            Self::EpsilonOutOfRange { epsilon, epsilon0 } => {
                write!(
                    f,
                    "epsilon not in ]0, epsilon0[ (epsilon = {epsilon}, epsilon0 = {epsilon0})"
                )
            }
            Self::NonPositiveEpsilon0 { value } => write!(f, "epsilon0 must be > 0 (got {value})"),
        }
    }
}

/// Every clause a [`RawParams`] record violates.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationError {
    pub violations: Vec<ParamViolation>,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid parameters: ")?;
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl core::error::Error for ValidationError {}

/// Validated model constants. Dereferences to the underlying [`RawParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params(RawParams);

impl Deref for Params {
    type Target = RawParams;

    fn deref(&self) -> &RawParams {
        &self.0
    }
}

impl Params {
    pub fn raw(&self) -> RawParams {
        self.0
    }

    /// Re-validates after changing fields of a copy.
    pub fn with(&self, edit: impl FnOnce(&mut RawParams)) -> Result<Params, ValidationError> {
        let mut raw = self.0;
        edit(&mut raw);
        validate_params(raw)
    }

    /// The same constants with `ε = 0`: the noiseless limit used to compare
    /// stochastic paths with the flow. Outside the validated range by design.
    pub fn noiseless(&self) -> Params {
        Params(RawParams {
            epsilon: 0.0,
            ..self.0
        })
    }

    /// Noise scale applied to the x component, `ε cos θ`.
    pub fn x_noise_scale(&self) -> f64 {
        self.epsilon * libm::cos(self.theta)
    }
}

/// Angles where the bracket determinant at the stable equilibria vanishes,
/// besides `±π/2`: both solutions in `]-π, π[` of `tan θ = 2λ3/(2λ1-λ2)`.
/// Empty when `2λ1 = λ2`.
pub fn forbidden_bracket_angles(lambda1: f64, lambda2: f64, lambda3: f64) -> Vec<f64> {
    let denom = 2.0 * lambda1 - lambda2;
    if denom == 0.0 {
        return Vec::new();
    }
    let principal = libm::atan(2.0 * lambda3 / denom);
    let mirrored = if principal > 0.0 {
        principal - PI
    } else {
        principal + PI
    };
    alloc::vec![principal, mirrored]
}

pub fn validate_params(raw: RawParams) -> Result<Params, ValidationError> {
    let mut violations = Vec::new();
    let named = [
        ("lambda1", raw.lambda1),
        ("lambda2", raw.lambda2),
        ("lambda3", raw.lambda3),
        ("sigma0", raw.sigma0),
        ("sigma1", raw.sigma1),
        ("theta", raw.theta),
        ("epsilon", raw.epsilon),
        ("epsilon0", raw.epsilon0),
    ];
    for (name, value) in named {
        if !value.is_finite() {
            violations.push(ParamViolation::NotFinite { name, value });
        }
    }
    if !violations.is_empty() {
        return Err(ValidationError { violations });
    }

    for (name, value) in [
        ("lambda1", raw.lambda1),
        ("lambda2", raw.lambda2),
        ("lambda3", raw.lambda3),
    ] {
        if value <= 0.0 {
            violations.push(ParamViolation::NonPositiveRate { name, value });
        }
    }
    if raw.sigma0 <= 0.0 {
        violations.push(ParamViolation::NonPositiveSigma0 { value: raw.sigma0 });
    } else if raw.sigma1.abs() >= raw.sigma0 {
        violations.push(ParamViolation::Sigma1OutOfRange {
            sigma0: raw.sigma0,
            sigma1: raw.sigma1,
        });
    }

    if raw.theta <= -PI || raw.theta >= PI {
        violations.push(ParamViolation::ThetaOutOfRange { theta: raw.theta });
    } else {
        let mut forbidden = alloc::vec![FRAC_PI_2, -FRAC_PI_2];
        if raw.lambda1 > 0.0 && raw.lambda2 > 0.0 && raw.lambda3 > 0.0 {
            forbidden.extend(forbidden_bracket_angles(
                raw.lambda1,
                raw.lambda2,
                raw.lambda3,
            ));
        }
        if let Some(&angle) = forbidden
            .iter()
            .find(|a| (raw.theta - **a).abs() <= THETA_TOLERANCE)
        {
            violations.push(ParamViolation::ThetaForbidden {
                theta: raw.theta,
                forbidden: angle,
            });
        }
    }

    if raw.epsilon0 <= 0.0 {
        violations.push(ParamViolation::NonPositiveEpsilon0 {
            value: raw.epsilon0,
        });
    }
    if raw.epsilon <= 0.0 || raw.epsilon >= raw.epsilon0 {
        violations.push(ParamViolation::EpsilonOutOfRange {
            epsilon: raw.epsilon,
            epsilon0: raw.epsilon0,
        });
    }

    if violations.is_empty() {
        Ok(Params(raw))
    } else {
        Err(ValidationError { violations })
    }
}

/// A point of the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State {
    pub x: f64,
    pub y: f64,
}

impl State {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn norm(&self) -> f64 {
        libm::hypot(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquilibriumKind {
    Stable,
    Saddle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equilibrium {
    pub point: State,
    pub kind: EquilibriumKind,
    /// 1, 2 or 3, left to right.
    pub index: u8,
}

/// The three equilibria of the noiseless flow, `(-1,0)`, `(0,0)`, `(1,0)`.
pub const EQUILIBRIA: [Equilibrium; 3] = [
    Equilibrium {
        point: State::new(-1.0, 0.0),
        kind: EquilibriumKind::Stable,
        index: 1,
    },
    Equilibrium {
        point: State::new(0.0, 0.0),
        kind: EquilibriumKind::Saddle,
        index: 2,
    },
    Equilibrium {
        point: State::new(1.0, 0.0),
        kind: EquilibriumKind::Stable,
        index: 3,
    },
];

/// The x-drift `λ1 x (1 - x²)`.
#[inline]
pub fn x_drift(lambda1: f64, x: f64) -> f64 {
    lambda1 * x * (1.0 - x * x)
}

#[inline]
pub fn drift(p: &Params, s: State) -> [f64; 2] {
    let b1 = x_drift(p.lambda1, s.x);
    [b1, -p.lambda2 * s.y + p.lambda3 * s.x * (1.0 - s.x * s.x)]
}

/// `σ0 + σ1 x`.
#[inline]
pub fn diffusion_coeff(p: &Params, x: f64) -> f64 {
    p.sigma0 + p.sigma1 * x
}

/// Value, gradient and Hessian of a scalar field at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub value: f64,
    pub gradient: [f64; 2],
    pub hessian: [[f64; 2]; 2],
}

/// Applies the generator of the diffusion to a C² field described pointwise by `f`.
pub fn generator_apply(p: &Params, f: impl Fn(State) -> Jet, s: State) -> f64 {
    let jet = f(s);
    let [b1, b2] = drift(p, s);
    let (sin, cos) = libm::sincos(p.theta);
    let amp = p.epsilon * diffusion_coeff(p, s.x);
    let amp2 = amp * amp;
    let h = jet.hessian;
    b1 * jet.gradient[0]
        + b2 * jet.gradient[1]
        + 0.5 * amp2 * (cos * cos * h[0][0] + sin * sin * h[1][1])
        + amp2 * sin * cos * h[0][1]
}

/// Determinant of the matrix whose columns are the bracket `[F0, F1]` and the
/// noise field `F1` at `(-1, 0)`, both with the common factor `ε(σ0 - σ1)` removed.
pub fn bracket_determinant(p: &Params) -> f64 {
    bracket_determinant_raw(&p.0)
}

/// [`bracket_determinant`] on unchecked constants, so excluded angles can be probed.
pub fn bracket_determinant_raw(p: &RawParams) -> f64 {
    let (sin, cos) = libm::sincos(p.theta);
    let bracket = [
        2.0 * p.lambda1 * cos,
        2.0 * p.lambda3 * cos + p.lambda2 * sin,
    ];
    let noise = [cos, sin];
    bracket[0] * noise[1] - noise[0] * bracket[1]
}
