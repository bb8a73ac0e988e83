//! Discrete-time approximation schemes and their error metrics.
//!
//! The size-`m` scheme advances each step by the truncated flow expansion
//!
//! ```text
//! x' = x + sum_{j=0}^{m} L^j sigma(x) (dB)^{j+1} / (j+1)!
//! ```
//!
//! where `L` is the Lie derivative along the coefficient field; `m = 0` is
//! the Euler scheme and `m = 1` the classical Milstein scheme. The implicit
//! Crank-Nicholson scheme averages the coefficient across the step and is
//! resolved by fixed-point iteration from the Euler predictor. Exact values
//! come from the flow evaluated on the same driving path, so every run
//! carries its own error metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{factorial, Coefficient, Expr, ExprError, MAX_SCHEME_SIZE};
use crate::fbm::FbmPath;
use crate::flow::{FlowError, FlowSolver};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemeError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("state became non-finite at step {step}")]
    NonFiniteState { step: usize },
    #[error("fixed-point iteration is not a contraction: |sigma'|_inf * max|dB| / 2 = {factor:.3e} >= 1")]
    NotContracting { factor: f64 },
    #[error("fixed-point iteration exceeded {max_iterations} iterations at step {step}")]
    FixedPointDiverged { step: usize, max_iterations: usize },
}

/// Which scheme to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    MilsteinType,
    CrankNicholson,
}

/// Scheme selection plus its numerical knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    /// Number of correction terms beyond Euler (Milstein-type only).
    pub size: usize,
    /// Successive-iterate tolerance of the implicit solve (Crank-Nicholson).
    pub fixed_point_tol: f64,
    pub fixed_point_max_iter: usize,
}

impl SchemeSpec {
    pub fn milstein(size: usize) -> Result<SchemeSpec, SchemeError> {
        if size > MAX_SCHEME_SIZE {
            return Err(ExprError::SizeTooLarge { size, max: MAX_SCHEME_SIZE }.into());
        }
        Ok(SchemeSpec {
            kind: SchemeKind::MilsteinType,
            size,
            fixed_point_tol: 1e-13,
            fixed_point_max_iter: 200,
        })
    }

    pub fn crank_nicholson() -> SchemeSpec {
        SchemeSpec {
            kind: SchemeKind::CrankNicholson,
            size: 0,
            fixed_point_tol: 1e-13,
            fixed_point_max_iter: 200,
        }
    }
}

/// One scheme trajectory with its exact counterpart and error metrics.
#[derive(Debug, Clone)]
pub struct SchemeRun {
    pub spec: SchemeSpec,
    pub x0: f64,
    pub hurst: f64,
    pub seed: u64,
    /// Approximate values at the grid nodes (length n + 1).
    pub approx: Vec<f64>,
    /// Exact flow values on the same driving path (length n + 1).
    pub exact: Vec<f64>,
    /// Signed terminal error `approx[n] - exact[n]`.
    pub endpoint_error: f64,
    /// `max_l |approx[l] - exact[l]|` over the grid.
    pub sup_error: f64,
}

impl SchemeRun {
    pub fn steps(&self) -> usize {
        self.approx.len() - 1
    }

    /// Terminal error scaled by `n^exponent`.
    pub fn scaled_endpoint_error(&self, exponent: f64) -> f64 {
        (self.steps() as f64).powf(exponent) * self.endpoint_error
    }

    /// Dump the trajectory as CSV (`t,approx,exact,abs_error`).
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,approx,exact,abs_error")?;
        let n = self.steps();
        for l in 0..=n {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e}",
                l as f64 / n as f64,
                self.approx[l],
                self.exact[l],
                (self.approx[l] - self.exact[l]).abs()
            )?;
        }
        Ok(())
    }

    fn from_trajectories(
        spec: SchemeSpec,
        x0: f64,
        path: &FbmPath,
        approx: Vec<f64>,
        exact: Vec<f64>,
    ) -> SchemeRun {
        debug_assert_eq!(approx.len(), exact.len());
        let endpoint_error = approx[approx.len() - 1] - exact[exact.len() - 1];
        let sup_error = approx
            .iter()
            .zip(&exact)
            .fold(0.0f64, |acc, (a, e)| acc.max((a - e).abs()));
        SchemeRun {
            spec,
            x0,
            hurst: path.hurst(),
            seed: path.seed(),
            approx,
            exact,
            endpoint_error,
            sup_error,
        }
    }
}

/// Run the size-`m` Milstein-type scheme along a path and attach the exact
/// flow trajectory and error metrics.
pub fn run_milstein(
    coefficient: &Coefficient,
    spec: &SchemeSpec,
    x0: f64,
    path: &FbmPath,
) -> Result<SchemeRun, SchemeError> {
    debug_assert_eq!(spec.kind, SchemeKind::MilsteinType);
    coefficient.require_elliptic()?;
    let flow = FlowSolver::new(coefficient)?;
    let m = spec.size;
    if m > MAX_SCHEME_SIZE {
        return Err(ExprError::SizeTooLarge { size: m, max: MAX_SCHEME_SIZE }.into());
    }

    // L^j sigma evaluated once per step; coefficients divided by (j+1)!
    let corrections: Vec<Expr> = (0..=m)
        .map(|j| coefficient.lie_derivative(coefficient.sigma(), j))
        .collect();
    let inv_factorials: Vec<f64> =
        (0..=m).map(|j| 1.0 / factorial((j + 1) as u32) as f64).collect();

    let n = path.steps();
    let mut approx = Vec::with_capacity(n + 1);
    let mut state = x0;
    approx.push(state);
    for l in 0..n {
        let db = path.increment(l);
        // Horner evaluation of sum_j c_j (dB)^{j+1} with c_j = L^j sigma / (j+1)!
        let mut acc = corrections[m].eval(state) * inv_factorials[m];
        for j in (0..m).rev() {
            acc = acc * db + corrections[j].eval(state) * inv_factorials[j];
        }
        state += acc * db;
        if !state.is_finite() {
            return Err(SchemeError::NonFiniteState { step: l });
        }
        approx.push(state);
    }

    let exact = flow.path(x0, path)?;
    Ok(SchemeRun::from_trajectories(*spec, x0, path, approx, exact))
}

/// Run the implicit Crank-Nicholson scheme. Each step solves
/// `y = x + (sigma(x) + sigma(y)) dB / 2` by fixed-point iteration from the
/// Euler predictor; the contraction factor `|sigma'|_inf * max|dB| / 2` must
/// be below 1.
pub fn run_crank_nicholson(
    coefficient: &Coefficient,
    spec: &SchemeSpec,
    x0: f64,
    path: &FbmPath,
) -> Result<SchemeRun, SchemeError> {
    debug_assert_eq!(spec.kind, SchemeKind::CrankNicholson);
    coefficient.require_elliptic()?;
    let flow = FlowSolver::new(coefficient)?;

    let factor = 0.5 * coefficient.sup_abs_derivative() * path.max_increment();
    if !(factor < 1.0) {
        return Err(SchemeError::NotContracting { factor });
    }

    let n = path.steps();
    let mut approx = Vec::with_capacity(n + 1);
    let mut state = x0;
    approx.push(state);
    for l in 0..n {
        let db = path.increment(l);
        let half_db = 0.5 * db;
        let s_here = coefficient.eval_sigma(state);
        let mut y = state + s_here * db;
        let mut converged = false;
        for _ in 0..spec.fixed_point_max_iter {
            let next = state + half_db * (s_here + coefficient.eval_sigma(y));
            let delta = (next - y).abs();
            y = next;
            if delta < spec.fixed_point_tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(SchemeError::FixedPointDiverged {
                step: l,
                max_iterations: spec.fixed_point_max_iter,
            });
        }
        state = y;
        if !state.is_finite() {
            return Err(SchemeError::NonFiniteState { step: l });
        }
        approx.push(state);
    }

    let exact = flow.path(x0, path)?;
    Ok(SchemeRun::from_trajectories(*spec, x0, path, approx, exact))
}

/// Dispatch on the scheme kind.
pub fn run_scheme(
    coefficient: &Coefficient,
    spec: &SchemeSpec,
    x0: f64,
    path: &FbmPath,
) -> Result<SchemeRun, SchemeError> {
    match spec.kind {
        SchemeKind::MilsteinType => run_milstein(coefficient, spec, x0, path),
        SchemeKind::CrankNicholson => run_crank_nicholson(coefficient, spec, x0, path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{derive_seed, sample_path, SamplerMethod};
    use approx::assert_relative_eq;

    fn reference() -> Coefficient {
        Coefficient::parse("2 + sin(x)").unwrap()
    }

    #[test]
    fn constant_sigma_is_exact_for_every_size() {
        let c = Coefficient::parse("1.5").unwrap();
        let p = sample_path(0.45, 256, 3, SamplerMethod::Circulant).unwrap();
        for m in 0..=3 {
            let spec = SchemeSpec::milstein(m).unwrap();
            let run = run_milstein(&c, &spec, 0.5, &p).unwrap();
            assert!(
                run.endpoint_error.abs() <= 1e-10,
                "m={m}: endpoint error {}",
                run.endpoint_error
            );
            assert_relative_eq!(run.approx[256], 0.5 + 1.5 * p.value(256), epsilon = 1e-12);
        }
    }

    #[test]
    fn size_zero_is_euler() {
        let c = reference();
        let p = sample_path(0.5, 8, 11, SamplerMethod::Circulant).unwrap();
        let spec = SchemeSpec::milstein(0).unwrap();
        let run = run_milstein(&c, &spec, 0.0, &p).unwrap();
        let mut state = 0.0;
        for l in 0..8 {
            state += c.eval_sigma(state) * p.increment(l);
            assert_relative_eq!(run.approx[l + 1], state, epsilon = 1e-15);
        }
    }

    #[test]
    fn nested_sizes_differ_by_single_term() {
        // one step of size m+1 minus size m equals the added correction term
        let c = reference();
        let p = FbmPath::from_values(0.45, vec![0.0, 0.3], 0).unwrap();
        let x0 = 0.7;
        for m in 0..=3usize {
            let lo = run_milstein(&c, &SchemeSpec::milstein(m).unwrap(), x0, &p).unwrap();
            let hi = run_milstein(&c, &SchemeSpec::milstein(m + 1).unwrap(), x0, &p).unwrap();
            let term = c.lie_derivative(c.sigma(), m + 1).eval(x0) * 0.3f64.powi(m as i32 + 2)
                / factorial((m + 2) as u32) as f64;
            assert_relative_eq!(hi.approx[1] - lo.approx[1], term, epsilon = 1e-14);
        }
    }

    #[test]
    fn sup_error_decreases_with_n() {
        let c = reference();
        let spec = SchemeSpec::milstein(1).unwrap();
        let mut previous = f64::INFINITY;
        for (k, &n) in [1usize << 8, 1 << 9, 1 << 10].iter().enumerate() {
            let p = sample_path(0.45, n, derive_seed(77, k as u64, 0), SamplerMethod::Circulant)
                .unwrap();
            let run = run_milstein(&c, &spec, 0.0, &p).unwrap();
            assert!(run.sup_error < previous, "n={n}: sup {}", run.sup_error);
            previous = run.sup_error;
        }
    }

    #[test]
    fn determinism_bitwise() {
        let c = reference();
        let p = sample_path(0.45, 128, 5, SamplerMethod::Circulant).unwrap();
        let spec = SchemeSpec::milstein(2).unwrap();
        let a = run_milstein(&c, &spec, 0.1, &p).unwrap();
        let b = run_milstein(&c, &spec, 0.1, &p).unwrap();
        assert_eq!(a.approx, b.approx);
        assert_eq!(a.exact, b.exact);
        assert_eq!(a.endpoint_error.to_bits(), b.endpoint_error.to_bits());
    }

    #[test]
    fn crank_nicholson_constant_sigma_is_euler_exact() {
        let c = Coefficient::parse("2").unwrap();
        let p = sample_path(0.5, 64, 9, SamplerMethod::Circulant).unwrap();
        let run = run_crank_nicholson(&c, &SchemeSpec::crank_nicholson(), 0.0, &p).unwrap();
        for l in 0..=64 {
            assert_relative_eq!(run.approx[l], 2.0 * p.value(l), epsilon = 1e-12);
        }
    }

    #[test]
    fn crank_nicholson_implicit_residual_is_small() {
        let c = reference();
        let spec = SchemeSpec::crank_nicholson();
        let p = FbmPath::from_values(0.5, vec![0.0, 0.1], 0).unwrap();
        let run = run_crank_nicholson(&c, &spec, 0.0, &p).unwrap();
        let y = run.approx[1];
        let residual = y - (0.0 + 0.05 * (c.eval_sigma(0.0) + c.eval_sigma(y)));
        assert!(residual.abs() < 1e-12, "residual {residual}");
    }

    #[test]
    fn crank_nicholson_residuals_along_sampled_path() {
        let c = reference();
        let spec = SchemeSpec::crank_nicholson();
        let p = sample_path(0.45, 256, 13, SamplerMethod::Circulant).unwrap();
        let run = run_crank_nicholson(&c, &spec, 0.0, &p).unwrap();
        for l in 0..256 {
            let x = run.approx[l];
            let y = run.approx[l + 1];
            let db = p.increment(l);
            let residual = y - x - 0.5 * (c.eval_sigma(x) + c.eval_sigma(y)) * db;
            assert!(residual.abs() < 1e-12, "step {l}: residual {residual}");
        }
    }

    #[test]
    fn crank_nicholson_zero_increment_keeps_state() {
        let c = reference();
        let p = FbmPath::from_values(0.5, vec![0.0, 0.0, 0.2], 0).unwrap();
        let run = run_crank_nicholson(&c, &SchemeSpec::crank_nicholson(), 0.4, &p).unwrap();
        assert_eq!(run.approx[1], 0.4);
    }

    #[test]
    fn crank_nicholson_rejects_non_contracting_path() {
        // |sigma'|_inf = 1, so an increment of 2.5 breaks the contraction
        let c = reference();
        let p = FbmPath::from_values(0.5, vec![0.0, 2.5], 0).unwrap();
        let err = run_crank_nicholson(&c, &SchemeSpec::crank_nicholson(), 0.0, &p).unwrap_err();
        assert!(matches!(err, SchemeError::NotContracting { .. }));
    }

    #[test]
    fn scaled_endpoint_error_identities() {
        let c = reference();
        let p = sample_path(0.45, 1 << 10, 21, SamplerMethod::Circulant).unwrap();
        let run = run_milstein(&c, &SchemeSpec::milstein(1).unwrap(), 0.0, &p).unwrap();
        assert_eq!(run.scaled_endpoint_error(0.0), run.endpoint_error);
        assert_relative_eq!(
            run.scaled_endpoint_error(0.4),
            run.endpoint_error * 2.0f64.powi(4),
            max_relative = 1e-13
        );
    }

    #[test]
    fn size_cap_rejected() {
        assert!(SchemeSpec::milstein(MAX_SCHEME_SIZE + 1).is_err());
    }

    #[test]
    fn trajectory_csv_shape() {
        let c = reference();
        let p = sample_path(0.5, 4, 2, SamplerMethod::Circulant).unwrap();
        let run = run_milstein(&c, &SchemeSpec::milstein(0).unwrap(), 0.0, &p).unwrap();
        let mut buf = Vec::new();
        run.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("t,approx,exact,abs_error"));
    }
}
