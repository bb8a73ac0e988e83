//! Adaptive Simpson quadrature for smooth deterministic integrands.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("adaptive quadrature failed to reach tolerance {tolerance:.3e} on [{lo}, {hi}]")]
    DepthExceeded { lo: f64, hi: f64, tolerance: f64 },
}

const MAX_DEPTH: u32 = 48;

/// Integrate `f` over `[a, b]` to the requested absolute tolerance.
///
/// Reversed bounds flip the sign, so signed intervals like `[0, b]` with
/// `b < 0` behave as expected.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64, QuadError> {
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return integrate(f, b, a, tol).map(|v| -v);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    adaptive(&f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64, QuadError> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        // Richardson correction of the composite estimate
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(QuadError::DepthExceeded { lo: a, hi: b, tolerance: tol });
    }
    let half_tol = 0.5 * tol;
    let l = adaptive(f, a, m, fa, flm, fm, left, half_tol, depth - 1)?;
    let r = adaptive(f, m, b, fm, frm, fb, right, half_tol, depth - 1)?;
    Ok(l + r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| 3.0 * x * x, 0.0, 2.0, 1e-12).unwrap();
        assert_relative_eq!(v, 8.0, max_relative = 1e-12);
    }

    #[test]
    fn cosine_over_signed_interval() {
        let v = integrate(f64::cos, 0.0, -1.5, 1e-12).unwrap();
        assert_relative_eq!(v, -(1.5f64.sin()), max_relative = 1e-11);
    }

    #[test]
    fn empty_interval_is_zero() {
        assert_eq!(integrate(f64::exp, 0.7, 0.7, 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn refinement_agrees_with_half_tolerance() {
        let coarse = integrate(|x| (3.0 * x).sin().exp(), -1.0, 2.0, 1e-8).unwrap();
        let fine = integrate(|x| (3.0 * x).sin().exp(), -1.0, 2.0, 1e-12).unwrap();
        assert_relative_eq!(coarse, fine, max_relative = 1e-7);
    }
}
