//! Exact fractional Brownian motion sampling on the uniform grid of `[0, 1]`.
//!
//! Two exact samplers are provided: circulant embedding of the fractional
//! Gaussian noise covariance (FFT-based, the default) and a dense Cholesky
//! factorization kept as an independent cross-check. Gaussian variates are
//! produced by Box-Muller from a ChaCha12 stream, so every path is a pure
//! function of `(hurst, n, seed, method)` and bit-reproducible across runs,
//! platforms with IEEE-754 f64, and any worker scheduling.

use std::io::{self, Write};

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest grid accepted by the Cholesky sampler unless explicitly forced;
/// the factorization is O(n^3) and dense.
pub const CHOLESKY_MAX_N: usize = 1 << 12;

/// Relative tolerance on the most negative circulant eigenvalue. The fGn
/// embedding is nonnegative definite in theory; tiny negative values are
/// rounding noise and get clamped.
const EIGENVALUE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FbmError {
    #[error("Hurst index must lie in (0, 1), got {hurst}")]
    HurstOutOfRange { hurst: f64 },
    #[error("grid must have at least one step")]
    EmptyGrid,
    #[error(
        "circulant embedding is not nonnegative definite (min eigenvalue {min_eigenvalue:.3e})"
    )]
    EmbeddingNotPsd { min_eigenvalue: f64 },
    #[error("Cholesky sampling capped at n = {max} (requested {n}); pass the explicit override to proceed")]
    CholeskyTooLarge { n: usize, max: usize },
    #[error("covariance matrix is not positive definite at pivot {pivot}")]
    NotPositiveDefinite { pivot: usize },
    #[error("synthetic path must start at 0 and contain at least two values")]
    InvalidSyntheticPath,
}

/// Path sampling method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SamplerMethod {
    #[default]
    Circulant,
    Cholesky,
    Auto,
}

/// Uniform grid `{l/n : l = 0..n}` on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Grid, FbmError> {
        if n == 0 {
            return Err(FbmError::EmptyGrid);
        }
        Ok(Grid { n })
    }

    pub fn steps(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn time(&self, l: usize) -> f64 {
        l as f64 / self.n as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n).map(move |l| self.time(l))
    }
}

/// One sampled fractional Brownian path on the uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmPath {
    hurst: f64,
    values: Vec<f64>,
    seed: u64,
}

impl FbmPath {
    /// Wrap explicit values as a path (for synthetic tests). The first value
    /// must be exactly 0.
    pub fn from_values(hurst: f64, values: Vec<f64>, seed: u64) -> Result<FbmPath, FbmError> {
        check_hurst(hurst)?;
        if values.len() < 2 || values[0] != 0.0 {
            return Err(FbmError::InvalidSyntheticPath);
        }
        Ok(FbmPath { hurst, values, seed })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    /// Number of grid steps `n`; the path holds `n + 1` values.
    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn grid(&self) -> Grid {
        Grid { n: self.steps() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at the grid node `l/n`.
    pub fn value(&self, l: usize) -> f64 {
        self.values[l]
    }

    /// Terminal value `B_1`.
    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("path is nonempty")
    }

    /// Increment over `[l/n, (l+1)/n]`.
    pub fn increment(&self, l: usize) -> f64 {
        self.values[l + 1] - self.values[l]
    }

    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.windows(2).map(|w| w[1] - w[0])
    }

    /// Largest absolute increment over the grid.
    pub fn max_increment(&self) -> f64 {
        self.increments().fold(0.0, |acc, d| acc.max(d.abs()))
    }

    /// Dump the path as CSV (`t,B`) at 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,B")?;
        let grid = self.grid();
        for (l, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{:.16e}", grid.time(l), v)?;
        }
        Ok(())
    }
}

/// Covariance of fractional Brownian motion:
/// `(s^{2H} + t^{2H} - |t - s|^{2H}) / 2`.
pub fn covariance(hurst: f64, s: f64, t: f64) -> Result<f64, FbmError> {
    check_hurst(hurst)?;
    let two_h = 2.0 * hurst;
    Ok(0.5 * (s.powf(two_h) + t.powf(two_h) - (t - s).abs().powf(two_h)))
}

fn check_hurst(hurst: f64) -> Result<(), FbmError> {
    if hurst.is_finite() && hurst > 0.0 && hurst < 1.0 {
        Ok(())
    } else {
        Err(FbmError::HurstOutOfRange { hurst })
    }
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
fn fgn_autocovariance(hurst: f64, k: usize) -> f64 {
    let two_h = 2.0 * hurst;
    let k = k as f64;
    0.5 * (((k - 1.0).abs()).powf(two_h) - 2.0 * k.powf(two_h) + (k + 1.0).powf(two_h))
}

/// Derive an independent stream seed from a base seed, a stream tag and an
/// index. SplitMix64 finalizers make every (tag, index) pair statistically
/// independent, so workers can sample disjoint paths in any order.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base;
    z = splitmix64(z ^ splitmix64(stream));
    z = splitmix64(z ^ splitmix64(index.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    z
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform in (0, 1]: 53 mantissa bits shifted away from zero.
fn uniform_open01(rng: &mut ChaCha12Rng) -> f64 {
    (((rng.next_u64() >> 11) + 1) as f64) * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normal variates via Box-Muller (the fixed, documented choice;
/// no ziggurat, so the stream is identical on every platform).
pub(crate) fn standard_normals(seed: u64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count + 1);
    while out.len() < count {
        let u1 = uniform_open01(&mut rng);
        let u2 = uniform_open01(&mut rng);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        out.push(r * theta.cos());
        out.push(r * theta.sin());
    }
    out.truncate(count);
    out
}

/// Sample an exact fractional Brownian path. Deterministic in
/// `(hurst, n, seed, method)`.
pub fn sample_path(
    hurst: f64,
    n: usize,
    seed: u64,
    method: SamplerMethod,
) -> Result<FbmPath, FbmError> {
    sample_path_with(hurst, n, seed, method, false)
}

/// As [`sample_path`], with an explicit override for the Cholesky size cap.
pub fn sample_path_with(
    hurst: f64,
    n: usize,
    seed: u64,
    method: SamplerMethod,
    allow_large_cholesky: bool,
) -> Result<FbmPath, FbmError> {
    check_hurst(hurst)?;
    if n == 0 {
        return Err(FbmError::EmptyGrid);
    }
    let fgn = match method {
        SamplerMethod::Circulant => fgn_circulant(hurst, n, seed)?,
        SamplerMethod::Cholesky => {
            if n > CHOLESKY_MAX_N && !allow_large_cholesky {
                return Err(FbmError::CholeskyTooLarge { n, max: CHOLESKY_MAX_N });
            }
            fgn_cholesky(hurst, n, seed)?
        }
        SamplerMethod::Auto => match fgn_circulant(hurst, n, seed) {
            Ok(v) => v,
            Err(FbmError::EmbeddingNotPsd { .. }) => fgn_cholesky(hurst, n, seed)?,
            Err(e) => return Err(e),
        },
    };
    // scale unit-step noise to grid spacing 1/n and accumulate
    let scale = (n as f64).powf(-hurst);
    let mut values = Vec::with_capacity(n + 1);
    values.push(0.0);
    let mut acc = 0.0;
    for g in fgn {
        acc += scale * g;
        values.push(acc);
    }
    Ok(FbmPath { hurst, values, seed })
}

/// Davies-Harte circulant embedding: exact unit-step fGn of length `n`.
fn fgn_circulant(hurst: f64, n: usize, seed: u64) -> Result<Vec<f64>, FbmError> {
    let m = 2 * n;
    let mut row: Vec<Complex<f64>> = Vec::with_capacity(m);
    for k in 0..=n {
        row.push(Complex::new(fgn_autocovariance(hurst, k), 0.0));
    }
    for k in (1..n).rev() {
        row.push(Complex::new(fgn_autocovariance(hurst, k), 0.0));
    }
    debug_assert_eq!(row.len(), m);

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut row);

    let mut max_eig = 0.0f64;
    let mut min_eig = f64::INFINITY;
    for c in &row {
        max_eig = max_eig.max(c.re);
        min_eig = min_eig.min(c.re);
    }
    if min_eig < -EIGENVALUE_TOL * max_eig.max(1.0) {
        return Err(FbmError::EmbeddingNotPsd { min_eigenvalue: min_eig });
    }

    let z = standard_normals(seed, m);
    let mut w = vec![Complex::new(0.0, 0.0); m];
    let lambda = |k: usize| row[k].re.max(0.0);
    let mf = m as f64;
    w[0] = Complex::new((lambda(0) / mf).sqrt() * z[0], 0.0);
    w[n] = Complex::new((lambda(n) / mf).sqrt() * z[m - 1], 0.0);
    for k in 1..n {
        let a = (lambda(k) / (2.0 * mf)).sqrt();
        w[k] = Complex::new(a * z[2 * k - 1], a * z[2 * k]);
        w[m - k] = w[k].conj();
    }
    fft.process(&mut w);
    Ok(w[..n].iter().map(|c| c.re).collect())
}

/// Dense Cholesky factorization of the fGn covariance; exact but O(n^3).
fn fgn_cholesky(hurst: f64, n: usize, seed: u64) -> Result<Vec<f64>, FbmError> {
    // lower-triangular factor, row-major packed
    let mut l = vec![0.0f64; n * (n + 1) / 2];
    let idx = |i: usize, j: usize| i * (i + 1) / 2 + j;
    for i in 0..n {
        for j in 0..=i {
            let mut sum = fgn_autocovariance(hurst, i - j);
            for k in 0..j {
                sum -= l[idx(i, k)] * l[idx(j, k)];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(FbmError::NotPositiveDefinite { pivot: i });
                }
                l[idx(i, j)] = sum.sqrt();
            } else {
                l[idx(i, j)] = sum / l[idx(j, j)];
            }
        }
    }
    let z = standard_normals(seed, n);
    let mut fgn = vec![0.0f64; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..=i {
            acc += l[idx(i, j)] * z[j];
        }
        fgn[i] = acc;
    }
    Ok(fgn)
}
