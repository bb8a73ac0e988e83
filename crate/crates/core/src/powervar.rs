//! Hermite polynomials, Gaussian moments and weighted power-variation
//! statistics of the driving path.
//!
//! The scaled variations `n^r sum h(B_{l/n}) (dB_{l/n})^kappa` converge to
//! different limits depending on the parity of `kappa` and the Hurst index;
//! [`VariationRegime`] classifies the four cases and
//! [`variation_limit`] / [`variation_half_sample`] evaluate the limits on a
//! given path. Hermite polynomials follow the probabilists' convention
//! (`H_2 = x^2 - 1`, `H_3 = x^3 - 3x`), which is the normalization under
//! which odd monomials expand with integer coefficients.

use thiserror::Error;

use crate::expr::Expr;
use crate::fbm::{standard_normals, FbmPath};
use crate::flow::{FlowError, FlowSolver};
use crate::quad::{self, QuadError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PowerVarError {
    #[error("power must be >= 1, got {kappa}")]
    PowerTooSmall { kappa: u32 },
    #[error("expected an odd power >= 3, got {kappa}")]
    NotOddPower { kappa: u32 },
    #[error("Hermite degree {degree} exceeds the table maximum {max}")]
    DegreeTooLarge { degree: u32, max: u32 },
    #[error("statistic order must be >= 2, got {q}")]
    OrderTooSmall { q: u32 },
    #[error("prefix length {k} must lie in 1..={n}")]
    PrefixOutOfRange { k: usize, n: usize },
    #[error("the half-Hurst regime requires H = 1/2 exactly, got {hurst}")]
    NotHalfHurst { hurst: f64 },
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

/// Degrees beyond this overflow the exact integer coefficient table.
pub const MAX_HERMITE_DEGREE: u32 = 32;

/// Integer coefficient table of the probabilists' Hermite polynomials,
/// built from the recurrence `H_{q+1} = x H_q - q H_{q-1}` in exact
/// arithmetic.
#[derive(Debug, Clone)]
pub struct HermiteBasis {
    coeffs: Vec<Vec<i128>>,
}

impl HermiteBasis {
    pub fn new(max_degree: u32) -> Result<HermiteBasis, PowerVarError> {
        if max_degree > MAX_HERMITE_DEGREE {
            return Err(PowerVarError::DegreeTooLarge {
                degree: max_degree,
                max: MAX_HERMITE_DEGREE,
            });
        }
        let mut coeffs: Vec<Vec<i128>> = Vec::with_capacity(max_degree as usize + 1);
        coeffs.push(vec![1]);
        if max_degree >= 1 {
            coeffs.push(vec![0, 1]);
        }
        for q in 1..max_degree as usize {
            let mut next = vec![0i128; q + 2];
            // x * H_q
            for (k, &c) in coeffs[q].iter().enumerate() {
                next[k + 1] += c;
            }
            // - q * H_{q-1}
            for (k, &c) in coeffs[q - 1].iter().enumerate() {
                next[k] -= q as i128 * c;
            }
            coeffs.push(next);
        }
        Ok(HermiteBasis { coeffs })
    }

    pub fn max_degree(&self) -> u32 {
        (self.coeffs.len() - 1) as u32
    }

    /// Monomial coefficients of `H_q`, lowest degree first.
    pub fn coefficients(&self, q: u32) -> &[i128] {
        &self.coeffs[q as usize]
    }
}

/// Evaluate `H_q(x)` by the three-term recurrence.
pub fn hermite_eval(q: u32, x: f64) -> f64 {
    let mut prev = 1.0;
    if q == 0 {
        return prev;
    }
    let mut cur = x;
    for k in 1..q {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Exact Gaussian moment `E[G^k]` for `G ~ N(0, 1)`: zero for odd `k`,
/// the double factorial `(k-1)!!` for even `k`.
pub fn gaussian_moment(k: u32) -> u128 {
    if k % 2 == 1 {
        0
    } else {
        let mut acc: u128 = 1;
        let mut j = 1u128;
        while j < u128::from(k) {
            acc *= j;
            j += 2;
        }
        acc
    }
}

pub fn gaussian_moment_f64(k: u32) -> f64 {
    gaussian_moment(k) as f64
}

/// Table of Gaussian moments up to a cap, kept in exact integers.
#[derive(Debug, Clone)]
pub struct MomentTable {
    moments: Vec<u128>,
}

impl MomentTable {
    pub fn new(max_degree: u32) -> MomentTable {
        MomentTable { moments: (0..=max_degree).map(gaussian_moment).collect() }
    }

    pub fn get(&self, k: u32) -> u128 {
        self.moments[k as usize]
    }
}

/// Where the weight function is evaluated: on the driving path itself or on
/// its flow image `X = phi(x0, B)`.
#[derive(Clone, Copy)]
pub enum WeightPoints<'a> {
    Driving,
    FlowImage { solver: &'a FlowSolver, x0: f64 },
}

impl WeightPoints<'_> {
    /// Sample points `h` is evaluated at, one per grid node `0..=n`.
    fn sample(&self, path: &FbmPath) -> Result<Vec<f64>, PowerVarError> {
        match self {
            WeightPoints::Driving => Ok(path.values().to_vec()),
            WeightPoints::FlowImage { solver, x0 } => Ok(solver.path(*x0, path)?),
        }
    }
}

/// Raw weighted power variation `sum_{l<n} h(p_l) (dB_l)^kappa`, where `p_l`
/// is the driving value or its flow image depending on `at`.
pub fn weighted_power_variation(
    h: &Expr,
    at: WeightPoints<'_>,
    path: &FbmPath,
    kappa: u32,
) -> Result<f64, PowerVarError> {
    if kappa < 1 {
        return Err(PowerVarError::PowerTooSmall { kappa });
    }
    let points = at.sample(path)?;
    let mut acc = 0.0;
    for l in 0..path.steps() {
        acc += h.eval(points[l]) * path.increment(l).powi(kappa as i32);
    }
    Ok(acc)
}

/// The four asymptotic regimes of a scaled power variation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariationRegime {
    /// Even power, any Hurst index.
    EvenPower,
    /// Odd power, H < 1/2.
    OddSmallHurst,
    /// Odd power, H = 1/2 exactly (limit holds in law, not pathwise).
    OddHalf,
    /// Odd power, H > 1/2.
    OddLargeHurst,
}

impl VariationRegime {
    pub fn classify(kappa: u32, hurst: f64) -> VariationRegime {
        if kappa % 2 == 0 {
            VariationRegime::EvenPower
        } else if hurst < 0.5 {
            VariationRegime::OddSmallHurst
        } else if hurst == 0.5 {
            VariationRegime::OddHalf
        } else {
            VariationRegime::OddLargeHurst
        }
    }

    /// Exponent `r` such that `n^r * (raw variation)` converges.
    pub fn scaling_exponent(&self, kappa: u32, hurst: f64) -> f64 {
        let k = f64::from(kappa);
        match self {
            VariationRegime::EvenPower => k * hurst - 1.0,
            VariationRegime::OddSmallHurst => (k + 1.0) * hurst - 1.0,
            VariationRegime::OddHalf => (k - 1.0) / 2.0,
            VariationRegime::OddLargeHurst => (k - 1.0) * hurst,
        }
    }
}

/// Scaled weighted power variation: the raw sum times `n^r` with `r` chosen
/// by the regime of `(kappa, hurst)`.
pub fn scaled_variation(
    h: &Expr,
    at: WeightPoints<'_>,
    path: &FbmPath,
    kappa: u32,
) -> Result<f64, PowerVarError> {
    let raw = weighted_power_variation(h, at, path, kappa)?;
    let regime = VariationRegime::classify(kappa, path.hurst());
    let r = regime.scaling_exponent(kappa, path.hurst());
    Ok((path.steps() as f64).powf(r) * raw)
}

/// Pathwise limit of the scaled variation for the three regimes where one
/// exists; `None` at H = 1/2 with odd power, where the limit is in law only
/// (see [`variation_half_sample`]).
///
/// Time integrals use the left Riemann sum on the path's own grid; the
/// space integral of the large-Hurst regime uses adaptive quadrature.
pub fn variation_limit(
    h: &Expr,
    path: &FbmPath,
    kappa: u32,
) -> Result<Option<f64>, PowerVarError> {
    if kappa < 1 {
        return Err(PowerVarError::PowerTooSmall { kappa });
    }
    let n = path.steps();
    let spacing = 1.0 / n as f64;
    match VariationRegime::classify(kappa, path.hurst()) {
        VariationRegime::EvenPower => {
            let mu = gaussian_moment_f64(kappa);
            let riemann: f64 = (0..n).map(|l| h.eval(path.value(l))).sum::<f64>() * spacing;
            Ok(Some(mu * riemann))
        }
        VariationRegime::OddSmallHurst => {
            let mu = gaussian_moment_f64(kappa + 1);
            let dh = h.derivative(1);
            let riemann: f64 = (0..n).map(|l| dh.eval(path.value(l))).sum::<f64>() * spacing;
            Ok(Some(-0.5 * mu * riemann))
        }
        VariationRegime::OddHalf => Ok(None),
        VariationRegime::OddLargeHurst => {
            let mu = gaussian_moment_f64(kappa + 1);
            let integral = quad::integrate(|x| h.eval(x), 0.0, path.terminal(), 1e-10)?;
            Ok(Some(mu * integral))
        }
    }
}

/// Conditional standard deviation of the extra Gaussian noise in the odd
/// half-Hurst limit: `sqrt(mu_{2 kappa} - mu_{kappa+1}^2)`.
///
/// Expanding the odd monomial in Hermite polynomials splits the variation
/// into a martingale part along the path (coefficient `mu_{kappa+1}`) and
/// orthogonal Hermite terms whose total variance is
/// `E[G^{2 kappa}] - mu_{kappa+1}^2`; the orthogonal part is what the
/// independent Brownian motion carries.
pub fn odd_half_noise_coefficient(kappa: u32) -> f64 {
    let total = gaussian_moment_f64(2 * kappa);
    let mart = gaussian_moment_f64(kappa + 1);
    (total - mart * mart).sqrt()
}

/// Draw one realization of the in-law limit of the odd half-Hurst regime on
/// a given Brownian path: forward sums of
/// `g(B) [c dW + mu_{kappa+1} dB]` with `c` from
/// [`odd_half_noise_coefficient`] and `W` a fresh Brownian motion generated
/// from `wseed`.
pub fn variation_half_sample(
    g: &Expr,
    path: &FbmPath,
    kappa: u32,
    wseed: u64,
) -> Result<f64, PowerVarError> {
    if kappa % 2 == 0 || kappa < 3 {
        return Err(PowerVarError::NotOddPower { kappa });
    }
    if path.hurst() != 0.5 {
        return Err(PowerVarError::NotHalfHurst { hurst: path.hurst() });
    }
    let n = path.steps();
    let sqrt_spacing = (n as f64).sqrt().recip();
    let w_incs = standard_normals(wseed, n);
    let noise = odd_half_noise_coefficient(kappa);
    let mart = gaussian_moment_f64(kappa + 1);
    let mut acc = 0.0;
    for l in 0..n {
        let weight = g.eval(path.value(l));
        acc += weight * (noise * sqrt_spacing * w_incs[l] + mart * path.increment(l));
    }
    Ok(acc)
}

/// Expand the odd monomial `x^kappa` over odd Hermite polynomials:
/// `x^kappa - mu_{kappa+1} x = sum_{q=1}^{(kappa-1)/2} a_{2q+1} H_{2q+1}(x)`.
///
/// Returns the pairs `(2q+1, a_{2q+1})` in increasing degree, computed by
/// exact back-substitution in the integer coefficient table. The degree-1
/// coefficient of the expansion equals `mu_{kappa+1}` identically and is
/// checked, not returned.
pub fn hermite_expand_odd_monomial(kappa: u32) -> Result<Vec<(u32, i128)>, PowerVarError> {
    if kappa % 2 == 0 || kappa < 3 {
        return Err(PowerVarError::NotOddPower { kappa });
    }
    let basis = HermiteBasis::new(kappa)?;
    // residual starts as x^kappa and loses its top term each round
    let mut residual = vec![0i128; kappa as usize + 1];
    residual[kappa as usize] = 1;
    let mut expansion = Vec::new();
    let mut degree = kappa;
    while degree >= 3 {
        let a = residual[degree as usize];
        if a != 0 {
            for (k, &c) in basis.coefficients(degree).iter().enumerate() {
                residual[k] -= a * c;
            }
            expansion.push((degree, a));
        }
        degree -= 2;
    }
    // what is left must be exactly mu_{kappa+1} * x
    let mu = gaussian_moment(kappa + 1) as i128;
    debug_assert!(residual
        .iter()
        .enumerate()
        .all(|(k, &c)| if k == 1 { c == mu } else { c == 0 }));
    expansion.reverse();
    Ok(expansion)
}

/// Prefix Hermite-variation statistic
/// `S_k = sum_{j<k} f(p_j) H_q(n^H dB_j)` with `p_j` the driving value or
/// its flow image.
pub fn s_statistic(
    f: &Expr,
    at: WeightPoints<'_>,
    path: &FbmPath,
    q: u32,
    k: usize,
) -> Result<f64, PowerVarError> {
    if q < 2 {
        return Err(PowerVarError::OrderTooSmall { q });
    }
    let n = path.steps();
    if k == 0 || k > n {
        return Err(PowerVarError::PrefixOutOfRange { k, n });
    }
    let points = at.sample(path)?;
    let scale = (n as f64).powf(path.hurst());
    let mut acc = 0.0;
    for j in 0..k {
        acc += f.eval(points[j]) * hermite_eval(q, scale * path.increment(j));
    }
    Ok(acc)
}
