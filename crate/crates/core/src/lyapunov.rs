//! Drift-condition certificates `L W ≤ α1 - α2 W` for `W(x, y) = 1 + x⁴ + α y²`.
//!
//! The inequality is checked at every node of a rectangular grid. Outside the
//! rectangle it follows from an explicit polynomial bound: Young's inequality
//! splits the cross terms `2αλ3 x y (1 - x²)` against the negative `-4λ1 x⁶`
//! and `-2αλ2 y²`, leaving
//!
//! ```text
//! L W + α2 W ≤ P(|x|) - κ y²
//! ```
//!
//! with `P` a degree-6 polynomial with negative leading coefficient and `κ > 0`.
//! The supremum of that bound over the exterior is computed on a 1-D grid with
//! a Lipschitz correction, so the whole certificate is a finite computation.

use alloc::vec::Vec;

use thiserror::Error;

use crate::model::{diffusion_coeff, drift, Params, State};

/// Default grid: 601 × 601 nodes on `[-3, 3]²`.
pub const DEFAULT_RESOLUTION: usize = 601;
pub const DEFAULT_HALF_WIDTH: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub const fn square(half_width: f64) -> Self {
        Self {
            x_min: -half_width,
            x_max: half_width,
            y_min: -half_width,
            y_max: half_width,
        }
    }

    fn contains_rect(&self, other: &Rect) -> bool {
        self.x_min <= other.x_min
            && self.x_max >= other.x_max
            && self.y_min <= other.y_min
            && self.y_max >= other.y_max
    }
}

/// Rectangle and node counts of a verification grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub rect: Rect,
    pub nx: usize,
    pub ny: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            rect: Rect::square(DEFAULT_HALF_WIDTH),
            nx: DEFAULT_RESOLUTION,
            ny: DEFAULT_RESOLUTION,
        }
    }
}

impl Grid {
    fn node(&self, i: usize, j: usize) -> State {
        let r = &self.rect;
        let x = r.x_min + (r.x_max - r.x_min) * i as f64 / (self.nx - 1) as f64;
        let y = r.y_min + (r.y_max - r.y_min) * j as f64 / (self.ny - 1) as f64;
        State::new(x, y)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertificateError {
    #[error("alpha = {alpha} outside (0, {bound})")]
    InvalidAlpha { alpha: f64, bound: f64 },
    #[error("alpha1 and alpha2 must be positive (got {alpha1}, {alpha2})")]
    NonPositiveConstants { alpha1: f64, alpha2: f64 },
    #[error("verification domain must contain [-3, 3]² and have at least 2 nodes per axis")]
    InvalidDomain,
    #[error("epsilon must be finite and nonnegative (got {0})")]
    InvalidEpsilon(f64),
    #[error("inequality fails at ({}, {}) with slack {slack}", node.x, node.y)]
    Violated { node: State, slack: f64 },
    #[error("non-finite generator value at ({}, {})", node.x, node.y)]
    NotFinite { node: State },
}

/// `8 λ1 λ2 / λ3²`, the supremum of admissible weights `α`.
pub fn alpha_bound(p: &Params) -> f64 {
    8.0 * p.lambda1 * p.lambda2 / (p.lambda3 * p.lambda3)
}

/// Midpoint of the admissible interval, `4 λ1 λ2 / λ3²`.
pub fn default_alpha(p: &Params) -> f64 {
    0.5 * alpha_bound(p)
}

/// Minimum over real `t` of `2λ1 + αλ2 t² + αλ3 t`, attained at `t = -λ3/(2λ2)`.
pub fn dominant_quadratic_minimum(p: &Params, alpha: f64) -> f64 {
    let t = -p.lambda3 / (2.0 * p.lambda2);
    2.0 * p.lambda1 + alpha * p.lambda2 * t * t + alpha * p.lambda3 * t
}

/// `1 + x⁴ + α y²`.
pub fn lyapunov_w(alpha: f64, s: State) -> f64 {
    let x2 = s.x * s.x;
    1.0 + x2 * x2 + alpha * s.y * s.y
}

/// Closed form of the generator applied to `W`, at noise level `epsilon`.
pub fn generator_on_w_at(p: &Params, alpha: f64, epsilon: f64, s: State) -> f64 {
    let (x, y) = (s.x, s.y);
    let x2 = x * x;
    let cubic = x * (1.0 - x2);
    let (sin, cos) = libm::sincos(p.theta);
    let sigma = diffusion_coeff(p, x);
    4.0 * p.lambda1 * x2 * x2 * (1.0 - x2) - 2.0 * alpha * y * (p.lambda2 * y - p.lambda3 * cubic)
        + epsilon * epsilon * sigma * sigma * (6.0 * x2 * cos * cos + alpha * sin * sin)
}

/// Closed form of the generator applied to `W` at the parameters' own `ε`.
pub fn generator_on_w(p: &Params, alpha: f64, s: State) -> f64 {
    generator_on_w_at(p, alpha, p.epsilon, s)
}

/// Gradient-and-Hessian description of `W`, for use with the generic generator.
pub fn lyapunov_jet(alpha: f64, s: State) -> crate::model::Jet {
    let x2 = s.x * s.x;
    crate::model::Jet {
        value: lyapunov_w(alpha, s),
        gradient: [4.0 * x2 * s.x, 2.0 * alpha * s.y],
        hessian: [[12.0 * x2, 0.0], [0.0, 2.0 * alpha]],
    }
}

/// Validated drift-condition certificate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovCertificate {
    pub alpha: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub grid: Grid,
    /// Largest `ε` the certificate was checked for; it holds for all smaller `ε`.
    pub epsilon_max: f64,
    /// `min over grid nodes of α1 - α2 W - L W`.
    pub min_slack: f64,
}

impl LyapunovCertificate {
    pub fn new(
        p: &Params,
        alpha: f64,
        alpha1: f64,
        alpha2: f64,
        grid: Grid,
        epsilon_max: f64,
        min_slack: f64,
    ) -> Result<Self, CertificateError> {
        check_alpha(p, alpha)?;
        if !(alpha1 > 0.0 && alpha2 > 0.0 && alpha1.is_finite() && alpha2.is_finite()) {
            return Err(CertificateError::NonPositiveConstants { alpha1, alpha2 });
        }
        Ok(Self {
            alpha,
            alpha1,
            alpha2,
            grid,
            epsilon_max,
            min_slack,
        })
    }

    /// Upper bound `α1 / α2` on long-run time averages of `W`.
    pub fn moment_bound(&self) -> f64 {
        self.alpha1 / self.alpha2
    }
}

fn check_alpha(p: &Params, alpha: f64) -> Result<(), CertificateError> {
    let bound = alpha_bound(p);
    if alpha > 0.0 && alpha < bound {
        Ok(())
    } else {
        Err(CertificateError::InvalidAlpha { alpha, bound })
    }
}

/// Coefficients of the exterior bound `L W + α2 W ≤ P(|x|) - κ y²`.
#[derive(Debug, Clone, PartialEq)]
pub struct TailBound {
    /// `P(r) = Σ coeffs[k] r^k`, k = 0..=6.
    pub coeffs: [f64; 7],
    pub kappa: f64,
}

/// Largest `α2` for which the exterior bound keeps a negative `y²` coefficient, halved.
fn alpha2_ceiling(p: &Params, alpha: f64) -> f64 {
    let (_, kappa0) = young_split(p, alpha);
    kappa0 / (4.0 * alpha)
}

/// Weight used to absorb `2αλ3 |x|³|y|`, and the `y²` coefficient left over.
fn young_split(p: &Params, alpha: f64) -> (f64, f64) {
    let l3sq = p.lambda3 * p.lambda3;
    let a6 = 0.5 * (alpha * l3sq / (2.0 * p.lambda2) + 4.0 * p.lambda1);
    let kappa0 = 2.0 * alpha * p.lambda2 - alpha * alpha * l3sq / a6;
    (a6, kappa0)
}

pub fn tail_bound(p: &Params, alpha: f64, alpha2: f64, epsilon: f64) -> TailBound {
    let (a6, kappa0) = young_split(p, alpha);
    let c6 = 4.0 * p.lambda1 - a6;
    let (sin, cos) = libm::sincos(p.theta);
    let e2 = epsilon * epsilon;
    let (s0, s1) = (p.sigma0, p.sigma1.abs());
    // ε²(s0 + s1 r)²(6c² r² + α s²)
    let q2 = 6.0 * cos * cos;
    let q0 = alpha * sin * sin;
    let mut coeffs = [0.0; 7];
    coeffs[0] = alpha2 + e2 * s0 * s0 * q0;
    coeffs[1] = e2 * 2.0 * s0 * s1 * q0;
    coeffs[2] =
        2.0 * alpha * alpha * p.lambda3 * p.lambda3 / kappa0 + e2 * (s1 * s1 * q0 + s0 * s0 * q2);
    coeffs[3] = e2 * 2.0 * s0 * s1 * q2;
    coeffs[4] = 4.0 * p.lambda1 + alpha2 + e2 * s1 * s1 * q2;
    coeffs[6] = -c6;
    TailBound {
        coeffs,
        kappa: 0.5 * kappa0 - alpha2 * alpha,
    }
}

impl TailBound {
    pub fn eval(&self, r: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * r + c)
    }

    /// Radius beyond which `P(r) ≤ 0`.
    fn domination_radius(&self, from: f64) -> f64 {
        let lead = -self.coeffs[6];
        let mut r = from.max(1.0);
        loop {
            let tail: f64 = (0..6)
                .map(|k| self.coeffs[k].max(0.0) * libm::pow(r, k as f64 - 6.0))
                .sum();
            if tail <= lead {
                return r;
            }
            r *= 2.0;
        }
    }

    /// Upper bound on `sup P` over `[lo, hi]` from 4097 samples and a Lipschitz correction.
    fn sup_on(&self, lo: f64, hi: f64) -> f64 {
        const SAMPLES: usize = 4096;
        let lip: f64 = (1..7)
            .map(|k| self.coeffs[k].abs() * k as f64 * libm::pow(hi.max(1.0), k as f64 - 1.0))
            .sum();
        let h = (hi - lo) / SAMPLES as f64;
        let best = (0..=SAMPLES)
            .map(|i| self.eval(lo + h * i as f64))
            .fold(f64::NEG_INFINITY, f64::max);
        best + 0.5 * lip * h
    }

    /// Upper bound on `sup P(r)` for `r ≥ lo`.
    pub fn sup_beyond(&self, lo: f64) -> f64 {
        let r = self.domination_radius(lo);
        if r <= lo {
            0.0
        } else {
            self.sup_on(lo, r).max(0.0)
        }
    }

    /// Upper bound on `L W + α2 W` outside `rect`.
    pub fn exterior_sup(&self, rect: &Rect) -> f64 {
        let a = rect.x_min.abs().min(rect.x_max.abs());
        let b = rect.y_min.abs().min(rect.y_max.abs());
        let beyond_x = self.sup_beyond(a);
        let beyond_y = self.sup_on(0.0, a) - self.kappa * b * b;
        beyond_x.max(beyond_y)
    }
}

/// Result of scanning a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridScan {
    pub min_slack: f64,
    pub worst: State,
}

fn max_on_grid(
    grid: &Grid,
    value: impl Fn(State) -> f64,
) -> Result<(f64, State), CertificateError> {
    let mut best = f64::NEG_INFINITY;
    let mut arg = State::default();
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            let s = grid.node(i, j);
            let v = value(s);
            if !v.is_finite() {
                return Err(CertificateError::NotFinite { node: s });
            }
            if v > best {
                best = v;
                arg = s;
            }
        }
    }
    Ok((best, arg))
}

/// Parameters of a certificate search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateSearch {
    pub alpha: f64,
    pub epsilon: f64,
    pub grid: Grid,
}

/// Searches `(α1, α2)` for the default `α` at `ε = ε0` on `grid`.
pub fn find_certificate(p: &Params, grid: Grid) -> Result<LyapunovCertificate, CertificateError> {
    find_certificate_with(
        p,
        &CertificateSearch {
            alpha: default_alpha(p),
            epsilon: p.epsilon0,
            grid,
        },
    )
}

/// Tries a geometric ladder of `α2` values below the exterior-bound ceiling and
/// keeps the one with the smallest moment bound `α1 / α2`.
pub fn find_certificate_with(
    p: &Params,
    search: &CertificateSearch,
) -> Result<LyapunovCertificate, CertificateError> {
    let CertificateSearch {
        alpha,
        epsilon,
        grid,
    } = *search;
    check_alpha(p, alpha)?;
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(CertificateError::InvalidEpsilon(epsilon));
    }
    if grid.nx < 2 || grid.ny < 2 || !grid.rect.contains_rect(&Rect::square(3.0)) {
        return Err(CertificateError::InvalidDomain);
    }

    let ceiling = alpha2_ceiling(p, alpha);
    let mut best: Option<LyapunovCertificate> = None;
    for k in 0..8 {
        let alpha2 = ceiling * libm::pow(0.5, k as f64);
        let (grid_max, _) = max_on_grid(&grid, |s| {
            generator_on_w_at(p, alpha, epsilon, s) + alpha2 * lyapunov_w(alpha, s)
        })?;
        let exterior = tail_bound(p, alpha, alpha2, epsilon).exterior_sup(&grid.rect);
        let needed = grid_max.max(exterior);
        let alpha1 = needed + 1e-9 * needed.abs().max(1.0);
        let cert =
            LyapunovCertificate::new(p, alpha, alpha1, alpha2, grid, epsilon, alpha1 - grid_max)?;
        if best
            .as_ref()
            .is_none_or(|b| cert.moment_bound() < b.moment_bound())
        {
            best = Some(cert);
        }
    }
    let cert = best.expect("ladder is non-empty");
    let scan = verify_certificate(p, &cert, epsilon)?;
    Ok(LyapunovCertificate {
        min_slack: scan.min_slack,
        ..cert
    })
}

/// Re-checks a certificate at noise level `epsilon` on its grid and on the exterior bound.
pub fn verify_certificate(
    p: &Params,
    cert: &LyapunovCertificate,
    epsilon: f64,
) -> Result<GridScan, CertificateError> {
    let (alpha, alpha1, alpha2) = (cert.alpha, cert.alpha1, cert.alpha2);
    let (worst_value, worst) = max_on_grid(&cert.grid, |s| {
        generator_on_w_at(p, alpha, epsilon, s) + alpha2 * lyapunov_w(alpha, s)
    })?;
    let slack = alpha1 - worst_value;
    if slack <= 0.0 {
        return Err(CertificateError::Violated { node: worst, slack });
    }
    let exterior = tail_bound(p, alpha, alpha2, epsilon).exterior_sup(&cert.grid.rect);
    if exterior > alpha1 {
        return Err(CertificateError::Violated {
            node: State::new(cert.grid.rect.x_max, cert.grid.rect.y_max),
            slack: alpha1 - exterior,
        });
    }
    Ok(GridScan {
        min_slack: slack,
        worst,
    })
}

/// Slack `α1 - α2 W - L W` at every node of a grid, row-major in `x`.
pub fn slack_field(p: &Params, cert: &LyapunovCertificate, epsilon: f64) -> Vec<f64> {
    let g = cert.grid;
    let mut out = Vec::with_capacity(g.nx * g.ny);
    for i in 0..g.nx {
        for j in 0..g.ny {
            let s = g.node(i, j);
            out.push(
                cert.alpha1
                    - cert.alpha2 * lyapunov_w(cert.alpha, s)
                    - generator_on_w_at(p, cert.alpha, epsilon, s),
            );
        }
    }
    out
}

/// Drift part of the generator on `W` (the `ε = 0` operator), via the drift field.
pub fn drift_on_w(p: &Params, alpha: f64, s: State) -> f64 {
    let [b1, b2] = drift(p, s);
    let jet = lyapunov_jet(alpha, s);
    b1 * jet.gradient[0] + b2 * jet.gradient[1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generator_apply, RawParams};

    fn params(edit: impl FnOnce(&mut RawParams)) -> Params {
        let mut raw = RawParams::default();
        edit(&mut raw);
        raw.validate().unwrap()
    }

    fn coarse() -> Grid {
        Grid {
            nx: 121,
            ny: 121,
            ..Grid::default()
        }
    }

    #[test]
    fn w_examples() {
        assert_eq!(lyapunov_w(2.0, State::new(0.0, 0.0)), 1.0);
        assert_eq!(lyapunov_w(1.0, State::new(1.0, 1.0)), 3.0);
        assert_eq!(lyapunov_w(0.5, State::new(-1.0, 2.0)), 4.0);
    }

    #[test]
    fn generator_at_origin_is_the_noise_term() {
        let p = params(|r| r.theta = 0.0);
        assert_eq!(generator_on_w(&p, 4.0, State::default()), 0.0);
        let p = params(|r| r.theta = 0.7);
        let s = libm::sin(0.7);
        let expected = p.epsilon * p.epsilon * 3.0 * s * s;
        assert!((generator_on_w(&p, 3.0, State::default()) - expected).abs() < 1e-16);
    }

    #[test]
    fn noiseless_generator_on_axis() {
        let p = params(|r| r.lambda2 = 1.5);
        let y = 0.8;
        let v = generator_on_w_at(&p, 2.0, 0.0, State::new(0.0, y));
        assert!((v + 2.0 * 2.0 * 1.5 * y * y).abs() < 1e-15);
        assert!(
            (drift_on_w(&p, 2.0, State::new(0.3, y))
                - generator_on_w_at(&p, 2.0, 0.0, State::new(0.3, y)))
            .abs()
                < 1e-14
        );
    }

    #[test]
    fn closed_form_matches_generic_generator() {
        let p = params(|r| {
            r.sigma1 = -0.4;
            r.theta = 1.1;
            r.epsilon = 0.3;
        });
        for i in 0..20 {
            let s = State::new(-2.5 + 0.27 * i as f64, 1.9 - 0.19 * i as f64);
            let a = generator_on_w(&p, 2.5, s);
            let b = generator_apply(&p, |q| lyapunov_jet(2.5, q), s);
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn discriminant_condition() {
        let p = params(|r| {
            r.lambda1 = 0.7;
            r.lambda2 = 1.3;
            r.lambda3 = 2.0;
        });
        let bound = alpha_bound(&p);
        assert!(dominant_quadratic_minimum(&p, 0.999 * bound) > 0.0);
        assert!(dominant_quadratic_minimum(&p, bound).abs() < 1e-12);
        assert!(dominant_quadratic_minimum(&p, 1.1 * bound) < 0.0);
    }

    #[test]
    fn rejects_alpha_above_bound() {
        let p = params(|_| {});
        let err = LyapunovCertificate::new(&p, 8.5, 1.0, 1.0, Grid::default(), 0.5, 1.0);
        assert!(matches!(err, Err(CertificateError::InvalidAlpha { .. })));
        let search = CertificateSearch {
            alpha: 9.0,
            epsilon: 0.5,
            grid: coarse(),
        };
        assert!(find_certificate_with(&p, &search).is_err());
    }

    #[test]
    fn rejects_small_domain() {
        let p = params(|_| {});
        let grid = Grid {
            rect: Rect::square(2.0),
            ..coarse()
        };
        assert_eq!(
            find_certificate(&p, grid),
            Err(CertificateError::InvalidDomain)
        );
    }

    #[test]
    fn tail_bound_dominates_generator_outside() {
        let p = params(|r| {
            r.sigma1 = 0.6;
            r.theta = -0.4;
        });
        let alpha = default_alpha(&p);
        let alpha2 = alpha2_ceiling(&p, alpha);
        let tb = tail_bound(&p, alpha, alpha2, 0.5);
        assert!(tb.kappa > 0.0 && tb.coeffs[6] < 0.0);
        for i in 0..40 {
            for j in 0..40 {
                let s = State::new(-12.0 + 0.6 * i as f64, -12.0 + 0.6 * j as f64);
                let lhs = generator_on_w_at(&p, alpha, 0.5, s) + alpha2 * lyapunov_w(alpha, s);
                let rhs = tb.eval(s.x.abs()) - tb.kappa * s.y * s.y;
                assert!(
                    lhs <= rhs + 1e-9 * rhs.abs().max(1.0),
                    "{s:?}: {lhs} > {rhs}"
                );
            }
        }
    }

    #[test]
    fn certificate_exists_for_reference_parameters() {
        let p = params(|_| {});
        let cert = find_certificate(&p, coarse()).unwrap();
        assert_eq!(cert.alpha, 4.0);
        assert!(cert.min_slack > 0.0);
        assert_eq!(cert.epsilon_max, 0.5);
    }

    #[test]
    fn certificate_holds_for_smaller_noise() {
        let p = params(|r| r.sigma1 = 0.3);
        let cert = find_certificate(&p, coarse()).unwrap();
        for eps in [0.0, 0.1, 0.25, 0.5] {
            let scan = verify_certificate(&p, &cert, eps).unwrap();
            assert!(scan.min_slack >= cert.min_slack);
        }
        assert!(verify_certificate(&p, &cert, 5.0).is_err());
    }

    #[test]
    fn noiseless_certificate_needs_smaller_alpha1() {
        let p = params(|_| {});
        let alpha = default_alpha(&p);
        let noisy = find_certificate(&p, coarse()).unwrap();
        let quiet = find_certificate_with(
            &p,
            &CertificateSearch {
                alpha,
                epsilon: 0.0,
                grid: coarse(),
            },
        )
        .unwrap();
        assert_eq!(quiet.alpha2, noisy.alpha2);
        assert!(quiet.alpha1 < noisy.alpha1);
    }
}
