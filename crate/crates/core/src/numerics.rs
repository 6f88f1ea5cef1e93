//! Small numerical kernels shared by the other modules.

use thiserror::Error;

/// Pairwise (cascade) summation. The split points depend only on the length,
/// so the rounding is reproducible.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum QuadratureError {
    #[error("integrand is not finite at {at}")]
    NotFinite { at: f64 },
    #[error("adaptive Simpson did not reach tolerance on [{a}, {b}] within depth limit")]
    DepthExceeded { a: f64, b: f64 },
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, QuadratureError> {
    const MAX_DEPTH: u32 = 48;
    if a == b {
        return Ok(0.0);
    }
    let eval = |x: f64| {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(QuadratureError::NotFinite { at: x })
        }
    };
    let fa = eval(a)?;
    let fb = eval(b)?;
    let m = 0.5 * (a + b);
    let fm = eval(m)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&eval, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    eval: &impl Fn(f64) -> Result<f64, QuadratureError>,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, QuadratureError> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = eval(lm)?;
    let frm = eval(rm)?;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(QuadratureError::DepthExceeded { a, b });
    }
    let l = simpson_step(eval, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = simpson_step(eval, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

/// Solves a symmetric tridiagonal system `A x = rhs` by LDLᵀ elimination,
/// overwriting `rhs` with the solution. `diag` has length n, `off` length n-1.
/// Returns `false` (and leaves `rhs` unspecified) if a pivot is not positive.
pub fn solve_spd_tridiagonal(diag: &[f64], off: &[f64], rhs: &mut [f64]) -> bool {
    let n = diag.len();
    debug_assert_eq!(off.len() + 1, n.max(1));
    debug_assert_eq!(rhs.len(), n);
    if n == 0 {
        return true;
    }
    let mut d = alloc::vec![0.0; n];
    let mut l = alloc::vec![0.0; n];
    d[0] = diag[0];
    if d[0] <= 0.0 || !d[0].is_finite() {
        return false;
    }
    for i in 1..n {
        l[i] = off[i - 1] / d[i - 1];
        d[i] = diag[i] - l[i] * off[i - 1];
        if d[i] <= 0.0 || !d[i].is_finite() {
            return false;
        }
    }
    for i in 1..n {
        rhs[i] -= l[i] * rhs[i - 1];
    }
    for i in 0..n {
        rhs[i] /= d[i];
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= l[i + 1] * rhs[i + 1];
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn pairwise_matches_naive_on_integers() {
        let v: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&v), 500_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn simpson_is_exact_on_cubics() {
        let f = |u: f64| u * (1.0 - u * u);
        let v = adaptive_simpson(&f, 0.0, 1.0, 1e-12).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
    }

    #[test]
    fn simpson_handles_rational_integrands() {
        let f = |u: f64| 1.0 / (1.0 + u * u);
        let v = adaptive_simpson(&f, 0.0, 1.0, 1e-12).unwrap();
        assert!((v - core::f64::consts::FRAC_PI_4).abs() < 1e-11);
        let back = adaptive_simpson(&f, 1.0, 0.0, 1e-12).unwrap();
        assert!((v + back).abs() < 1e-15);
    }

    #[test]
    fn simpson_reports_singularities() {
        let f = |u: f64| 1.0 / u;
        assert!(matches!(
            adaptive_simpson(&f, 0.0, 1.0, 1e-10),
            Err(QuadratureError::NotFinite { .. })
        ));
    }

    #[test]
    fn tridiagonal_solver_recovers_known_solution() {
        // A = tridiag(-1, 2, -1), x = (1..=n)
        let n = 50;
        let diag = alloc::vec![2.0; n];
        let off = alloc::vec![-1.0; n - 1];
        let x: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        let mut rhs: Vec<f64> = (0..n)
            .map(|i| {
                let mut v = 2.0 * x[i];
                if i > 0 {
                    v -= x[i - 1];
                }
                if i + 1 < n {
                    v -= x[i + 1];
                }
                v
            })
            .collect();
        assert!(solve_spd_tridiagonal(&diag, &off, &mut rhs));
        for (a, b) in rhs.iter().zip(&x) {
            assert!((a - b).abs() < 1e-9);
        }
        let mut rhs = alloc::vec![1.0; 2];
        assert!(!solve_spd_tridiagonal(&[1.0, 1.0], &[2.0], &mut rhs));
    }
}
