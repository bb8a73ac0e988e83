//! Limit functionals of the scaled endpoint error.
//!
//! For an elliptic coefficient the scaled endpoint error
//! `n^r (X_hat_1 - X_1)` of the size-`m` scheme converges to an explicit
//! functional of the exact trajectory. The regime and exponent `r` depend on
//! the parity of `m` and the Hurst index:
//!
//! | regime          | condition                  | exponent `r`  | limit type    |
//! |-----------------|----------------------------|---------------|---------------|
//! | even            | m even, H in (1/(m+2), 1)  | (m+2)H - 1    | pathwise      |
//! | odd small Hurst | m odd, H in (1/(m+2), 1/2) | (m+3)H - 1    | pathwise      |
//! | odd half        | m odd, H = 1/2             | (m+1)/2       | in law        |
//! | odd large Hurst | m odd, H in (1/2, 1)       | (m+1)H        | pathwise      |
//!
//! Time integrals are evaluated as left Riemann sums on the path's own grid
//! so that statistic and limit share discretization error; the space
//! integral of the large-Hurst regime uses adaptive quadrature. The in-law
//! regime is sampled, one draw per `(path, wseed)` pair.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Coefficient, ExprError};
use crate::fbm::{standard_normals, FbmPath};
use crate::flow::{FlowError, FlowSolver};
use crate::powervar::gaussian_moment_f64;
use crate::quad::{self, QuadError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LimitError {
    #[error("regime mismatch: requires {requirement}, got m = {m}, H = {hurst}")]
    RegimeMismatch { requirement: &'static str, m: usize, hurst: f64 },
    #[error("Hurst index {hurst} is outside the admissible range (1/(m+2), 1) = ({lo:.6}, 1) for size m = {m}")]
    Inadmissible { m: usize, hurst: f64, lo: f64 },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

/// Regime of the scaled-error limit, classified from `(m, H)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitRegime {
    Even,
    OddSmallHurst,
    OddHalf,
    OddLargeHurst,
}

impl LimitRegime {
    /// Classify `(m, H)`; fails when `H <= 1/(m+2)` (no convergence regime).
    pub fn classify(m: usize, hurst: f64) -> Result<LimitRegime, LimitError> {
        let lo = 1.0 / (m as f64 + 2.0);
        if !(hurst > lo && hurst < 1.0) {
            return Err(LimitError::Inadmissible { m, hurst, lo });
        }
        Ok(if m % 2 == 0 {
            LimitRegime::Even
        } else if hurst < 0.5 {
            LimitRegime::OddSmallHurst
        } else if hurst == 0.5 {
            LimitRegime::OddHalf
        } else {
            LimitRegime::OddLargeHurst
        })
    }

    /// Exponent `r` of the convergent scaling `n^r (X_hat_1 - X_1)`.
    pub fn rate_exponent(&self, m: usize, hurst: f64) -> f64 {
        let m = m as f64;
        match self {
            LimitRegime::Even => (m + 2.0) * hurst - 1.0,
            LimitRegime::OddSmallHurst => (m + 3.0) * hurst - 1.0,
            LimitRegime::OddHalf => (m + 1.0) / 2.0,
            LimitRegime::OddLargeHurst => (m + 1.0) * hurst,
        }
    }

    /// True when the limit is distributional rather than pathwise.
    pub fn is_in_law(&self) -> bool {
        matches!(self, LimitRegime::OddHalf)
    }
}

/// Value of a limit functional on one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitEvaluation {
    pub regime: LimitRegime,
    pub value: f64,
    /// Seed of the path the functional was evaluated on.
    pub path_seed: u64,
}

fn check(
    ok: bool,
    requirement: &'static str,
    m: usize,
    hurst: f64,
) -> Result<(), LimitError> {
    if ok {
        Ok(())
    } else {
        Err(LimitError::RegimeMismatch { requirement, m, hurst })
    }
}

/// Left Riemann sum of `f` over the grid values `points[0..n]`.
fn riemann<F: Fn(f64) -> f64>(points: &[f64], f: F) -> f64 {
    let n = points.len() - 1;
    points[..n].iter().map(|&x| f(x)).sum::<f64>() / n as f64
}

/// Even-size limit: `mu_{m+2} sigma(X_1) int_0^1 h_m(X_s) ds`.
pub fn limit_even(
    c: &Coefficient,
    m: usize,
    x0: f64,
    path: &FbmPath,
) -> Result<LimitEvaluation, LimitError> {
    let hurst = path.hurst();
    check(m % 2 == 0, "m even and H in (1/(m+2), 1)", m, hurst)?;
    let regime = LimitRegime::classify(m, hurst)?;
    check(regime == LimitRegime::Even, "m even and H in (1/(m+2), 1)", m, hurst)?;

    let flow = FlowSolver::new(c)?;
    let xs = flow.path(x0, path)?;
    let h = c.error_weight_h(m)?;
    let mu = gaussian_moment_f64((m + 2) as u32);
    let value = mu * c.eval_sigma(xs[xs.len() - 1]) * riemann(&xs, |x| h.eval(x));
    Ok(LimitEvaluation { regime, value, path_seed: path.seed() })
}

/// Odd-size, small-Hurst limit:
/// `mu_{m+3} sigma(X_1) int_0^1 (g_m - sigma h_m' / 2)(X_s) ds`.
pub fn limit_odd_small(
    c: &Coefficient,
    m: usize,
    x0: f64,
    path: &FbmPath,
) -> Result<LimitEvaluation, LimitError> {
    let hurst = path.hurst();
    check(m % 2 == 1, "m odd and H in (1/(m+2), 1/2)", m, hurst)?;
    let regime = LimitRegime::classify(m, hurst)?;
    check(
        regime == LimitRegime::OddSmallHurst,
        "m odd and H in (1/(m+2), 1/2)",
        m,
        hurst,
    )?;

    let flow = FlowSolver::new(c)?;
    let xs = flow.path(x0, path)?;
    let g = c.error_weight_g(m)?;
    let dh = c.error_weight_h(m)?.derivative(1);
    let sigma = c.sigma().clone();
    let mu = gaussian_moment_f64((m + 3) as u32);
    let integrand = |x: f64| g.eval(x) - 0.5 * sigma.eval(x) * dh.eval(x);
    let value = mu * c.eval_sigma(xs[xs.len() - 1]) * riemann(&xs, integrand);
    Ok(LimitEvaluation { regime, value, path_seed: path.seed() })
}

/// Odd-size, large-Hurst limit:
/// `mu_{m+3} sigma(X_1) int_0^{B_1} h_m(phi(x0, y)) dy` (signed interval,
/// adaptive quadrature at tolerance 1e-10).
pub fn limit_odd_large(
    c: &Coefficient,
    m: usize,
    x0: f64,
    path: &FbmPath,
) -> Result<LimitEvaluation, LimitError> {
    let hurst = path.hurst();
    check(m % 2 == 1, "m odd and H in (1/2, 1)", m, hurst)?;
    let regime = LimitRegime::classify(m, hurst)?;
    check(regime == LimitRegime::OddLargeHurst, "m odd and H in (1/2, 1)", m, hurst)?;

    let flow = FlowSolver::new(c)?;
    let h = c.error_weight_h(m)?;
    let b1 = path.terminal();
    let integral = quad::integrate(
        |y| h.eval(flow.eval(x0, y).unwrap_or(f64::NAN)),
        0.0,
        b1,
        1e-10,
    )?;
    let x1 = flow.eval(x0, b1)?;
    let mu = gaussian_moment_f64((m + 3) as u32);
    let value = mu * c.eval_sigma(x1) * integral;
    Ok(LimitEvaluation { regime, value, path_seed: path.seed() })
}

/// Draw from the in-law limit at H = 1/2:
/// `sigma(X_1) ( sum_l h_m(X_l) [c dW_l + mu_{m+3} dB_l]
///             + mu_{m+3} int_0^1 g_m(X_s) ds )`
/// with `c = sqrt(mu_{2m+4} - mu_{m+3}^2)` and `W` a fresh Brownian motion
/// built from `wseed`. Exact in law in the grid limit.
pub fn limit_half_sample(
    c: &Coefficient,
    m: usize,
    x0: f64,
    path: &FbmPath,
    wseed: u64,
) -> Result<LimitEvaluation, LimitError> {
    let hurst = path.hurst();
    check(m % 2 == 1 && hurst == 0.5, "m odd and H = 1/2", m, hurst)?;
    let regime = LimitRegime::OddHalf;

    let flow = FlowSolver::new(c)?;
    let xs = flow.path(x0, path)?;
    let h = c.error_weight_h(m)?;
    let g = c.error_weight_g(m)?;
    let mu = gaussian_moment_f64((m + 3) as u32);
    let mu_high = gaussian_moment_f64((2 * m + 4) as u32);
    let noise = (mu_high - mu * mu).sqrt();

    let n = path.steps();
    let sqrt_spacing = (n as f64).sqrt().recip();
    let w = standard_normals(wseed, n);
    let mut stochastic = 0.0;
    for l in 0..n {
        stochastic +=
            h.eval(xs[l]) * (noise * sqrt_spacing * w[l] + mu * path.increment(l));
    }
    let drift = mu * riemann(&xs, |x| g.eval(x));
    let value = c.eval_sigma(xs[n]) * (stochastic + drift);
    Ok(LimitEvaluation { regime, value, path_seed: path.seed() })
}

/// Evaluate the limit functional for the regime classified from `(m, H)`.
/// `wseed` feeds the in-law draw at H = 1/2 and is ignored elsewhere.
pub fn evaluate(
    c: &Coefficient,
    m: usize,
    x0: f64,
    path: &FbmPath,
    wseed: u64,
) -> Result<LimitEvaluation, LimitError> {
    match LimitRegime::classify(m, path.hurst())? {
        LimitRegime::Even => limit_even(c, m, x0, path),
        LimitRegime::OddSmallHurst => limit_odd_small(c, m, x0, path),
        LimitRegime::OddHalf => limit_half_sample(c, m, x0, path, wseed),
        LimitRegime::OddLargeHurst => limit_odd_large(c, m, x0, path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::fbm::{sample_path, FbmPath, SamplerMethod};
    use approx::assert_relative_eq;

    fn reference() -> Coefficient {
        Coefficient::parse("2 + sin(x)").unwrap()
    }

    #[test]
    fn classify_and_exponents() {
        assert_eq!(LimitRegime::classify(0, 0.7).unwrap(), LimitRegime::Even);
        assert_eq!(LimitRegime::classify(1, 0.45).unwrap(), LimitRegime::OddSmallHurst);
        assert_eq!(LimitRegime::classify(1, 0.5).unwrap(), LimitRegime::OddHalf);
        assert_eq!(LimitRegime::classify(1, 0.7).unwrap(), LimitRegime::OddLargeHurst);
        assert!(LimitRegime::classify(0, 0.4).is_err());
        assert!(LimitRegime::classify(1, 1.0).is_err());

        assert_relative_eq!(LimitRegime::Even.rate_exponent(0, 0.7), 0.4, max_relative = 1e-14);
        assert_relative_eq!(
            LimitRegime::OddSmallHurst.rate_exponent(1, 0.45),
            0.8,
            max_relative = 1e-14
        );
        assert_relative_eq!(LimitRegime::OddHalf.rate_exponent(1, 0.5), 1.0);
        assert_relative_eq!(
            LimitRegime::OddLargeHurst.rate_exponent(1, 0.7),
            1.4,
            max_relative = 1e-14
        );
    }

    #[test]
    fn all_functionals_vanish_for_constant_sigma() {
        let c = Coefficient::new(Expr::constant(2.0));
        let p_even = sample_path(0.7, 64, 1, SamplerMethod::Circulant).unwrap();
        assert_relative_eq!(limit_even(&c, 0, 0.0, &p_even).unwrap().value, 0.0);
        let p_small = sample_path(0.45, 64, 2, SamplerMethod::Circulant).unwrap();
        assert_relative_eq!(limit_odd_small(&c, 1, 0.0, &p_small).unwrap().value, 0.0);
        assert_relative_eq!(limit_odd_large(&c, 1, 0.0, &p_even).unwrap().value, 0.0);
        let p_half = sample_path(0.5, 64, 3, SamplerMethod::Circulant).unwrap();
        assert_relative_eq!(limit_half_sample(&c, 1, 0.0, &p_half, 9).unwrap().value, 0.0);
    }

    #[test]
    fn regime_gating_names_the_requirement() {
        let c = reference();
        let p = sample_path(0.7, 16, 1, SamplerMethod::Circulant).unwrap();
        let err = limit_odd_small(&c, 1, 0.0, &p).unwrap_err();
        match err {
            LimitError::RegimeMismatch { requirement, .. } => {
                assert!(requirement.contains("1/2"));
            }
            other => panic!("unexpected error {other:?}"),
        }
        // odd m into the even functional
        assert!(limit_even(&c, 1, 0.0, &p).is_err());
        // inadmissible H carries the bound
        let bad = sample_path(0.3, 16, 1, SamplerMethod::Circulant).unwrap();
        assert!(matches!(
            limit_even(&c, 0, 0.0, &bad),
            Err(LimitError::Inadmissible { .. })
        ));
    }

    #[test]
    fn even_limit_m0_equals_negative_half_integral() {
        // h_0 = -sigma'/2, so the limit is -sigma(X_1)/2 * int sigma'(X_s) ds
        let c = reference();
        let p = sample_path(0.7, 256, 5, SamplerMethod::Circulant).unwrap();
        let got = limit_even(&c, 0, 0.3, &p).unwrap().value;

        let flow = FlowSolver::new(&c).unwrap();
        let xs = flow.path(0.3, &p).unwrap();
        let ds = 1.0 / 256.0;
        let integral: f64 = xs[..256].iter().map(|&x| x.cos()).sum::<f64>() * ds;
        let expected = -0.5 * c.eval_sigma(xs[256]) * integral;
        assert_relative_eq!(got, expected, max_relative = 1e-12);
    }

    #[test]
    fn odd_small_integrand_matches_certificate_up_to_constant() {
        // (g_1 - sigma h_1'/2) must be a constant multiple of the
        // nondegeneracy certificate; the observed ratio is 1/24
        let c = reference();
        let g = c.error_weight_g(1).unwrap();
        let dh = c.error_weight_h(1).unwrap().derivative(1);
        let cert = c.nondegeneracy_certificate();
        let mut ratios = Vec::new();
        for i in 0..20 {
            let x = -2.9 + 0.3 * i as f64;
            let integrand = g.eval(x) - 0.5 * c.eval_sigma(x) * dh.eval(x);
            let cert_val = cert.eval(x);
            if cert_val.abs() > 1e-3 {
                ratios.push(integrand / cert_val);
            }
        }
        assert!(ratios.len() > 10);
        for r in &ratios {
            assert_relative_eq!(*r, 1.0 / 24.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn large_hurst_limit_zero_terminal_is_zero() {
        let c = reference();
        let p = FbmPath::from_values(0.7, vec![0.0, 0.4, 0.0], 0).unwrap();
        assert_relative_eq!(limit_odd_large(&c, 1, 0.0, &p).unwrap().value, 0.0);
    }

    #[test]
    fn large_hurst_quadrature_agrees_with_refined_riemann() {
        let c = reference();
        let p = sample_path(0.7, 64, 11, SamplerMethod::Circulant).unwrap();
        let got = limit_odd_large(&c, 1, 0.0, &p).unwrap().value;

        // brute-force oracle: fine midpoint rule on the same integrand
        let flow = FlowSolver::new(&c).unwrap();
        let h = c.error_weight_h(1).unwrap();
        let b1 = p.terminal();
        let steps = 20_000;
        let dy = b1 / steps as f64;
        let mut integral = 0.0;
        for k in 0..steps {
            let y = (k as f64 + 0.5) * dy;
            integral += h.eval(flow.eval(0.0, y).unwrap());
        }
        integral *= dy;
        let expected = 3.0 * c.eval_sigma(flow.eval(0.0, b1).unwrap()) * integral;
        assert_relative_eq!(got, expected, max_relative = 1e-6);
    }

    #[test]
    fn half_sample_conditional_mean_drops_the_w_term() {
        // averaging over many independent W draws leaves the dB and drift
        // parts: E_W[draw] = sigma(X_1)(mu_4 sum h_1(X) dB + mu_4 int g_1)
        let c = reference();
        let p = sample_path(0.5, 128, 7, SamplerMethod::Circulant).unwrap();
        let draws = 1000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for w in 0..draws {
            let v = limit_half_sample(&c, 1, 0.0, &p, 1000 + w).unwrap().value;
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / draws as f64;
        let var = sum_sq / draws as f64 - mean * mean;
        let se = (var / draws as f64).sqrt();

        let flow = FlowSolver::new(&c).unwrap();
        let xs = flow.path(0.0, &p).unwrap();
        let h = c.error_weight_h(1).unwrap();
        let g = c.error_weight_g(1).unwrap();
        let ito: f64 = (0..128).map(|l| h.eval(xs[l]) * p.increment(l)).sum();
        let drift: f64 = (0..128).map(|l| g.eval(xs[l])).sum::<f64>() / 128.0;
        let expected = c.eval_sigma(xs[128]) * (3.0 * ito + 3.0 * drift);
        assert!(
            (mean - expected).abs() < 4.0 * se,
            "mean {mean}, expected {expected}, se {se}"
        );
    }

    #[test]
    fn riemann_sum_is_refinement_consistent() {
        // the left Riemann sums of the pathwise functionals depend only on
        // the supplied grid values; doubling the grid of a smooth synthetic
        // path changes the sum by O(1/n)
        let c = reference();
        let coarse: Vec<f64> = (0..=64).map(|l| (l as f64 / 64.0).sin() * 0.5).collect();
        let fine: Vec<f64> = (0..=128).map(|l| (l as f64 / 128.0).sin() * 0.5).collect();
        let pc = FbmPath::from_values(0.7, coarse, 0).unwrap();
        let pf = FbmPath::from_values(0.7, fine, 0).unwrap();
        let a = limit_even(&c, 0, 0.0, &pc).unwrap().value;
        let b = limit_even(&c, 0, 0.0, &pf).unwrap().value;
        assert!((a - b).abs() < 1e-2);
    }

    #[test]
    fn dispatch_matches_specialized_functions() {
        let c = reference();
        let p = sample_path(0.7, 64, 3, SamplerMethod::Circulant).unwrap();
        let via_dispatch = evaluate(&c, 0, 0.0, &p, 0).unwrap();
        let direct = limit_even(&c, 0, 0.0, &p).unwrap();
        assert_eq!(via_dispatch.value.to_bits(), direct.value.to_bits());
        assert_eq!(via_dispatch.regime, LimitRegime::Even);
    }
}
