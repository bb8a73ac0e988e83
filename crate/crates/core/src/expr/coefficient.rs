//! Diffusion coefficient wrapper: derivative cache, ellipticity certificate
//! and the derived symbolic objects used by the schemes and limit
//! functionals.

use super::{factorial, scan_max_abs, scan_min_abs, Expr, ExprError};

/// Largest supported scheme size; keeps every factorial `(m + 3)!` exact in
/// integer arithmetic and bounds the derivative orders we ever request.
pub const MAX_SCHEME_SIZE: usize = 12;

/// Interval scanned to certify ellipticity and bound derivatives
/// numerically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeInterval {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for ProbeInterval {
    fn default() -> Self {
        ProbeInterval { lo: -20.0, hi: 20.0, points: 100_000 }
    }
}

/// A diffusion coefficient `sigma` together with its symbolic derivative
/// cache and a numerical ellipticity certificate.
///
/// Global ellipticity of an arbitrary expression is undecidable in this
/// language, so the certificate is the infimum of `|sigma|` over a dense
/// probe grid plus a user-asserted boundedness hint. Unbounded coefficients
/// are accepted (the hint is informational), but a vanishing infimum blocks
/// every scheme and flow operation.
#[derive(Debug, Clone)]
pub struct Coefficient {
    sigma: Expr,
    derivatives: Vec<Expr>,
    ellipticity: f64,
    bounded_hint: bool,
    probe: ProbeInterval,
}

/// Derivative orders cached eagerly at construction; higher orders are
/// computed on demand.
const CACHED_ORDERS: usize = 3;

impl Coefficient {
    pub fn new(sigma: Expr) -> Coefficient {
        Coefficient::with_probe(sigma, ProbeInterval::default(), true)
    }

    pub fn with_probe(sigma: Expr, probe: ProbeInterval, bounded_hint: bool) -> Coefficient {
        let sigma = sigma.simplify();
        let mut derivatives = Vec::with_capacity(CACHED_ORDERS + 1);
        derivatives.push(sigma.clone());
        for j in 0..CACHED_ORDERS {
            let next = derivatives[j].derivative(1);
            derivatives.push(next);
        }
        let ellipticity = scan_min_abs(&sigma, probe.lo, probe.hi, probe.points);
        Coefficient { sigma, derivatives, ellipticity, bounded_hint, probe }
    }

    /// Parse an expression string and wrap it with the default probe.
    pub fn parse(text: &str) -> Result<Coefficient, ExprError> {
        Ok(Coefficient::new(super::parse(text)?))
    }

    pub fn sigma(&self) -> &Expr {
        &self.sigma
    }

    pub fn eval_sigma(&self, x: f64) -> f64 {
        self.sigma.eval(x)
    }

    /// Numerical infimum of `|sigma|` over the probe interval.
    pub fn ellipticity(&self) -> f64 {
        self.ellipticity
    }

    pub fn bounded_hint(&self) -> bool {
        self.bounded_hint
    }

    pub fn probe(&self) -> ProbeInterval {
        self.probe
    }

    /// Fails unless the ellipticity certificate is strictly positive.
    pub fn require_elliptic(&self) -> Result<(), ExprError> {
        if self.ellipticity > 0.0 {
            Ok(())
        } else {
            Err(ExprError::Ellipticity { infimum: self.ellipticity })
        }
    }

    /// `j`-th symbolic derivative of `sigma`; low orders come from the cache.
    pub fn derivative(&self, order: usize) -> Expr {
        if order < self.derivatives.len() {
            self.derivatives[order].clone()
        } else {
            let last = self.derivatives.last().expect("cache is never empty");
            last.derivative(order - (self.derivatives.len() - 1))
        }
    }

    /// Cached derivatives `[sigma, sigma', ...]` in order.
    pub fn derivative_cache(&self) -> &[Expr] {
        &self.derivatives
    }

    /// Numerical supremum of `|sigma'|` over the probe interval, used for
    /// contraction estimates.
    pub fn sup_abs_derivative(&self) -> f64 {
        scan_max_abs(&self.derivatives[1], self.probe.lo, self.probe.hi, self.probe.points)
    }

    /// Iterated Lie derivative of `f` along the coefficient field: order 0
    /// returns `f`, order 1 returns `f' sigma`, and higher orders iterate
    /// the order-1 map. These are the Taylor coefficients of the flow in the
    /// driving variable.
    pub fn lie_derivative(&self, f: &Expr, order: usize) -> Expr {
        let mut e = f.clone();
        for _ in 0..order {
            e = Expr::mul(e.derivative(1), self.sigma.clone()).simplify();
        }
        e
    }

    /// Leading error weight of the size-`m` scheme:
    /// `-(L^{m+1} sigma / sigma) / (m + 2)!` where `L` is the Lie derivative.
    pub fn error_weight_h(&self, m: usize) -> Result<Expr, ExprError> {
        self.require_elliptic()?;
        if m > MAX_SCHEME_SIZE {
            return Err(ExprError::SizeTooLarge { size: m, max: MAX_SCHEME_SIZE });
        }
        let numer = self.lie_derivative(&self.sigma, m + 1);
        let fact = factorial((m + 2) as u32) as f64;
        Ok(Expr::div(Expr::neg(numer), Expr::mul(Expr::constant(fact), self.sigma.clone()))
            .simplify())
    }

    /// Second-order error weight: `-sigma' h_m + h_{m+1}`.
    pub fn error_weight_g(&self, m: usize) -> Result<Expr, ExprError> {
        let h_m = self.error_weight_h(m)?;
        let h_next = self.error_weight_h(m + 1)?;
        Ok(Expr::add(Expr::neg(Expr::mul(self.derivatives[1].clone(), h_m)), h_next).simplify())
    }

    /// The function `3 sigma'^3 + 6 sigma sigma' sigma'' + sigma^2 sigma'''`
    /// whose non-vanishing certifies a nondegenerate size-1 rate limit.
    pub fn nondegeneracy_certificate(&self) -> Expr {
        let s = &self.derivatives;
        let term1 = Expr::mul(Expr::constant(3.0), Expr::pow(s[1].clone(), 3));
        let term2 = Expr::mul(
            Expr::constant(6.0),
            Expr::mul(s[0].clone(), Expr::mul(s[1].clone(), s[2].clone())),
        );
        let term3 = Expr::mul(Expr::pow(s[0].clone(), 2), s[3].clone());
        Expr::add(Expr::add(term1, term2), term3).simplify()
    }

    /// Maximum of the certificate over `[lo, hi]`; a strictly positive value
    /// certifies that the function is not identically zero there.
    pub fn certificate_max_abs(&self, lo: f64, hi: f64, points: usize) -> f64 {
        scan_max_abs(&self.nondegeneracy_certificate(), lo, hi, points)
    }
}
