//! High-accuracy evaluation of the coefficient flow.
//!
//! The flow `phi(x, y)` solves the autonomous ODE `d phi / dy = sigma(phi)`
//! with `phi(x, 0) = x`. Composed with a driving path it yields the exact
//! solution `X_t = phi(x, B_t)`, which every scheme in this crate is
//! measured against, so the solver tolerances sit far below any scheme
//! error of interest. Integration uses the embedded Dormand-Prince 5(4)
//! pair with standard step control; negative displacements integrate the
//! reversed field.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{factorial, Coefficient, ExprError};
use crate::fbm::FbmPath;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("step size underflow at progress {progress:.6e} of span {span:.6e}, state {state:.6e}")]
    StepSizeUnderflow { progress: f64, span: f64, state: f64 },
    #[error("state became non-finite while integrating from {from:.6e}")]
    NonFiniteState { from: f64 },
}

/// Solver tolerances; both default to 1e-12.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub absolute: f64,
    pub relative: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { absolute: 1e-12, relative: 1e-12 }
    }
}

/// Flow evaluator bound to an elliptic coefficient.
#[derive(Debug, Clone)]
pub struct FlowSolver {
    coefficient: Coefficient,
    tolerances: Tolerances,
}

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 5179.0 / 57600.0;
const E3: f64 = 7571.0 / 16695.0;
const E4: f64 = 393.0 / 640.0;
const E5: f64 = -92097.0 / 339200.0;
const E6: f64 = 187.0 / 2100.0;
const E7: f64 = 1.0 / 40.0;

impl FlowSolver {
    /// Build a solver; the coefficient must pass the ellipticity check.
    pub fn new(coefficient: &Coefficient) -> Result<FlowSolver, FlowError> {
        FlowSolver::with_tolerances(coefficient, Tolerances::default())
    }

    pub fn with_tolerances(
        coefficient: &Coefficient,
        tolerances: Tolerances,
    ) -> Result<FlowSolver, FlowError> {
        coefficient.require_elliptic()?;
        assert!(tolerances.absolute > 0.0 && tolerances.relative > 0.0);
        Ok(FlowSolver { coefficient: coefficient.clone(), tolerances })
    }

    pub fn coefficient(&self) -> &Coefficient {
        &self.coefficient
    }

    /// Evaluate `phi(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64, FlowError> {
        if y == 0.0 {
            return Ok(x);
        }
        self.integrate(x, y.abs(), y.signum())
    }

    /// Exact-solution trajectory `X_{l/n} = phi(x0, B_{l/n})` along a path,
    /// computed incrementally through the flow's group property
    /// `phi(x, y + z) = phi(phi(x, y), z)`.
    pub fn path(&self, x0: f64, path: &FbmPath) -> Result<Vec<f64>, FlowError> {
        let mut out = Vec::with_capacity(path.steps() + 1);
        let mut state = x0;
        out.push(state);
        for l in 0..path.steps() {
            state = self.eval(state, path.increment(l))?;
            out.push(state);
        }
        Ok(out)
    }

    /// Truncated flow expansion
    /// `x + sum_{j=0}^{m+2} L^j sigma(x) y^{j+1} / (j+1)!`
    /// where `L` is the Lie derivative along the coefficient field. The
    /// remainder is `O(y^{m+4})` uniformly on compacts.
    pub fn taylor(&self, x: f64, y: f64, m: usize) -> f64 {
        let sigma = self.coefficient.sigma().clone();
        let mut acc = 0.0;
        for j in (0..=m + 2).rev() {
            let coeff = self.coefficient.lie_derivative(&sigma, j).eval(x)
                / factorial((j + 1) as u32) as f64;
            acc = coeff + acc * y;
        }
        x + acc * y
    }

    /// Integrate `du/dt = dir * sigma(u)` over `t in [0, span]`.
    fn integrate(&self, x: f64, span: f64, dir: f64) -> Result<f64, FlowError> {
        let field = |u: f64| dir * self.coefficient.eval_sigma(u);
        let Tolerances { absolute: atol, relative: rtol } = self.tolerances;

        let mut u = x;
        let mut t = 0.0;
        let mut h = span;
        let mut k1 = field(u);
        let min_step = span * 1e-14;

        while t < span {
            h = h.min(span - t);
            loop {
                let k2 = field(u + h * (A21 * k1));
                let k3 = field(u + h * (A31 * k1 + A32 * k2));
                let k4 = field(u + h * (A41 * k1 + A42 * k2 + A43 * k3));
                let k5 = field(u + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4));
                let k6 = field(u + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5));
                let u5 = u + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6);
                let k7 = field(u5);
                let u4 = u + h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7);

                if !u5.is_finite() {
                    return Err(FlowError::NonFiniteState { from: x });
                }
                let scale = atol + rtol * u.abs().max(u5.abs());
                let err = ((u5 - u4) / scale).abs();
                if err <= 1.0 {
                    t += h;
                    u = u5;
                    k1 = k7;
                    let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    h *= factor;
                    break;
                }
                h *= (0.9 * err.powf(-0.2)).clamp(0.2, 0.9);
                if h < min_step {
                    return Err(FlowError::StepSizeUnderflow { progress: t, span, state: u });
                }
            }
        }
        Ok(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::fbm::{sample_path, SamplerMethod};
    use approx::assert_relative_eq;

    fn reference() -> Coefficient {
        Coefficient::parse("2 + sin(x)").unwrap()
    }

    /// Fixed-step classical RK4 with Richardson extrapolation, the
    /// independent oracle for the adaptive solver.
    fn rk4_richardson(c: &Coefficient, x: f64, y: f64, steps: usize) -> f64 {
        let coarse = rk4(c, x, y, steps);
        let fine = rk4(c, x, y, 2 * steps);
        fine + (fine - coarse) / 15.0
    }

    fn rk4(c: &Coefficient, x: f64, y: f64, steps: usize) -> f64 {
        let h = y / steps as f64;
        let mut u = x;
        for _ in 0..steps {
            let k1 = c.eval_sigma(u);
            let k2 = c.eval_sigma(u + 0.5 * h * k1);
            let k3 = c.eval_sigma(u + 0.5 * h * k2);
            let k4 = c.eval_sigma(u + h * k3);
            u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        u
    }

    #[test]
    fn constant_coefficient_is_linear() {
        let c = Coefficient::new(Expr::constant(1.5));
        let fs = FlowSolver::new(&c).unwrap();
        for &(x, y) in &[(0.0, 1.0), (2.0, -3.0), (-1.0, 0.25)] {
            assert_relative_eq!(fs.eval(x, y).unwrap(), x + 1.5 * y, max_relative = 1e-13);
        }
    }

    #[test]
    fn zero_displacement_is_identity() {
        let fs = FlowSolver::new(&reference()).unwrap();
        assert_eq!(fs.eval(0.37, 0.0).unwrap(), 0.37);
        assert_eq!(fs.taylor(0.37, 0.0, 2), 0.37);
    }

    #[test]
    fn matches_richardson_oracle() {
        let c = reference();
        let fs = FlowSolver::new(&c).unwrap();
        let got = fs.eval(0.0, 1.0).unwrap();
        let oracle = rk4_richardson(&c, 0.0, 1.0, 4096);
        assert_relative_eq!(got, oracle, epsilon = 1e-10);
    }

    #[test]
    fn negative_displacement_inverts() {
        let fs = FlowSolver::new(&reference()).unwrap();
        let forward = fs.eval(0.3, 1.2).unwrap();
        let back = fs.eval(forward, -1.2).unwrap();
        assert_relative_eq!(back, 0.3, epsilon = 1e-10);
    }

    #[test]
    fn group_property_on_random_triples() {
        let fs = FlowSolver::new(&reference()).unwrap();
        let normals = crate::fbm::standard_normals(2024, 300);
        let mut max_violation = 0.0f64;
        for triple in normals.chunks_exact(3) {
            let (x, y, z) = (triple[0], triple[1], triple[2]);
            let composed = fs.eval(fs.eval(x, y).unwrap(), z).unwrap();
            let direct = fs.eval(x, y + z).unwrap();
            max_violation = max_violation.max((composed - direct).abs());
        }
        assert!(max_violation <= 1e-9, "group property violated by {max_violation}");
    }

    #[test]
    fn incremental_path_matches_direct_evaluation() {
        let c = reference();
        let fs = FlowSolver::new(&c).unwrap();
        let p = sample_path(0.5, 64, 5, SamplerMethod::Circulant).unwrap();
        let xs = fs.path(0.0, &p).unwrap();
        assert_eq!(xs[0], 0.0);
        for l in (0..=64).step_by(8) {
            let direct = fs.eval(0.0, p.value(l)).unwrap();
            assert_relative_eq!(xs[l], direct, epsilon = 1e-9);
        }
    }

    #[test]
    fn constant_coefficient_path_is_affine_in_driving_path() {
        let c = Coefficient::new(Expr::constant(2.0));
        let fs = FlowSolver::new(&c).unwrap();
        let p = sample_path(0.7, 32, 9, SamplerMethod::Circulant).unwrap();
        let xs = fs.path(1.0, &p).unwrap();
        for l in 0..=32 {
            assert_relative_eq!(xs[l], 1.0 + 2.0 * p.value(l), epsilon = 1e-12);
        }
    }

    #[test]
    fn taylor_constant_sigma_truncates_to_linear() {
        let c = Coefficient::new(Expr::constant(3.0));
        let fs = FlowSolver::new(&c).unwrap();
        for m in 0..4 {
            assert_relative_eq!(fs.taylor(0.5, 0.2, m), 0.5 + 3.0 * 0.2, max_relative = 1e-15);
        }
    }

    #[test]
    fn taylor_remainder_has_expected_order() {
        // |phi - taylor(m)| ~ C y^{m+4}: slope of the log-log fit near m+4
        let c = reference();
        let fs = FlowSolver::new(&c).unwrap();
        for m in 0..=2 {
            let mut points = Vec::new();
            for k in 4..=10 {
                let y = 2.0f64.powi(-k);
                let diff = (fs.eval(0.0, y).unwrap() - fs.taylor(0.0, y, m)).abs();
                if diff > 1e-13 {
                    points.push((y.ln(), diff.ln()));
                }
            }
            assert!(points.len() >= 2, "m={m}: too few usable points");
            let n = points.len() as f64;
            let sx: f64 = points.iter().map(|p| p.0).sum();
            let sy: f64 = points.iter().map(|p| p.1).sum();
            let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
            let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
            let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
            let expected = (m + 4) as f64;
            assert!(
                (slope - expected).abs() <= 0.3,
                "m={m}: remainder slope {slope}, expected {expected}"
            );
        }
    }

    #[test]
    fn derivative_along_displacement_is_sigma_of_flow() {
        let c = reference();
        let fs = FlowSolver::new(&c).unwrap();
        let h = 1e-5;
        for &(x, y) in &[(0.0, 0.4), (-1.0, 1.3), (0.5, -0.8)] {
            let fd = (fs.eval(x, y + h).unwrap() - fs.eval(x, y - h).unwrap()) / (2.0 * h);
            let expected = c.eval_sigma(fs.eval(x, y).unwrap());
            assert_relative_eq!(fd, expected, max_relative = 1e-6);
        }
    }

    #[test]
    fn rejects_non_elliptic_coefficient() {
        let c = Coefficient::new(Expr::constant(0.0));
        assert!(FlowSolver::new(&c).is_err());
    }
}
