//! Numerical laboratory for strong approximation schemes of the scalar SDE
//! `dX = sigma(X) dB` driven by a fractional Brownian motion `B` on `[0, 1]`.
//!
//! The crate bundles everything needed to measure exact convergence rates of
//! Milstein-type schemes at desk scale:
//!
//! - [`expr`]: a small closed expression language for the diffusion
//!   coefficient `sigma`, with exact symbolic differentiation and the
//!   iterated Lie-derivative calculus that generates the scheme corrections;
//! - [`fbm`]: exact fractional Brownian path samplers (circulant embedding
//!   and Cholesky) with reproducible per-path seeding;
//! - [`flow`]: a high-accuracy solver for the flow ODE `dphi/dy = sigma(phi)`,
//!   which yields the exact solution `X_t = phi(x, B_t)`;
//! - [`schemes`]: the Milstein-type scheme of arbitrary size and the
//!   Crank-Nicholson scheme, with error metrics against the exact flow;
//! - [`powervar`]: Hermite polynomials, Gaussian moments and weighted
//!   power-variation statistics;
//! - [`limits`]: the pathwise / in-law limit functionals of the scaled
//!   endpoint error, per (size parity, Hurst) regime;
//! - [`newton_cotes`]: exact rational Newton-Cotes quadrature measures and
//!   the associated discrete stochastic integral;
//! - [`mc`]: the Monte Carlo experiment harness (rate regression, pathwise
//!   limit checks, two-sample Kolmogorov-Smirnov tests, reports).
//!
//! Heavy per-path loops run on a rayon pool when the default `parallel`
//! feature is enabled and fall back to plain sequential iteration otherwise;
//! results are bit-identical either way.

pub mod expr;
pub mod fbm;
pub mod flow;
pub mod limits;
pub mod mc;
pub mod newton_cotes;
pub mod parallel;
pub mod powervar;
pub mod quad;
pub mod schemes;
