//! Signed Newton-Cotes measures and the discrete stochastic integral they
//! define.
//!
//! The order-`N` measure is the unique discrete signed probability carried
//! by the nodes `j/(2N-2)` (`j = 0..2N-2`) that agrees with Lebesgue measure
//! on polynomials of degree below `2N-1`; orders 0 and 1 are the Dirac mass
//! at 0 and the symmetric two-point average. Weights are computed in exact
//! rational arithmetic as integrals of the Lagrange basis and converted to
//! floating point only at evaluation time.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use num::{BigInt, BigRational, One, ToPrimitive, Zero};

use crate::expr::Expr;
use crate::fbm::FbmPath;

/// Nodes and weights of the order-`N` measure, in exact rationals.
#[derive(Debug, Clone, PartialEq)]
pub struct NcWeights {
    order: usize,
    nodes: Vec<BigRational>,
    weights: Vec<BigRational>,
}

impl NcWeights {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &[BigRational] {
        &self.nodes
    }

    pub fn weights(&self) -> &[BigRational] {
        &self.weights
    }

    pub fn nodes_f64(&self) -> Vec<f64> {
        self.nodes.iter().map(|r| r.to_f64().expect("node fits f64")).collect()
    }

    pub fn weights_f64(&self) -> Vec<f64> {
        self.weights.iter().map(|r| r.to_f64().expect("weight fits f64")).collect()
    }

    /// Exact sum of the weights (1 for a probability measure).
    pub fn weight_sum(&self) -> BigRational {
        self.weights.iter().sum()
    }

    /// Exact integral of `u^p` against the measure.
    pub fn integrate_monomial(&self, p: u32) -> BigRational {
        let mut acc = BigRational::zero();
        for (node, weight) in self.nodes.iter().zip(&self.weights) {
            let mut term = BigRational::one();
            for _ in 0..p {
                term *= node;
            }
            acc += weight * term;
        }
        acc
    }
}

impl fmt::Display for NcWeights {
    /// `node: weight` pairs separated by commas, e.g. `0: 1/2, 1: 1/2`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (node, weight) in self.nodes.iter().zip(&self.weights) {
            if !first {
                write!(f, ", ")?;
            }
            write!(f, "{node}: {weight}")?;
            first = false;
        }
        Ok(())
    }
}

fn big(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Polynomial with exact rational coefficients, lowest degree first.
fn poly_mul(a: &[BigRational], b: &[BigRational]) -> Vec<BigRational> {
    let mut out = vec![BigRational::zero(); a.len() + b.len() - 1];
    for (i, ca) in a.iter().enumerate() {
        for (j, cb) in b.iter().enumerate() {
            out[i + j] += ca * cb;
        }
    }
    out
}

fn poly_integral_01(coeffs: &[BigRational]) -> BigRational {
    let mut acc = BigRational::zero();
    for (i, c) in coeffs.iter().enumerate() {
        acc += c / big((i + 1) as i64);
    }
    acc
}

fn compute_weights(order: usize) -> NcWeights {
    match order {
        0 => NcWeights { order, nodes: vec![big(0)], weights: vec![big(1)] },
        1 => NcWeights {
            order,
            nodes: vec![big(0), big(1)],
            weights: vec![big(1) / big(2), big(1) / big(2)],
        },
        n => {
            let node_count = 2 * n - 1;
            let denominator = 2 * n as i64 - 2;
            let nodes: Vec<BigRational> =
                (0..node_count).map(|j| big(j as i64) / big(denominator)).collect();
            let mut weights = Vec::with_capacity(node_count);
            for j in 0..node_count {
                // Lagrange basis at node j: prod_{k != j} (denominator*u - k)/(j - k)
                let mut numer = vec![BigRational::one()];
                let mut denom = BigRational::one();
                for k in 0..node_count {
                    if k == j {
                        continue;
                    }
                    numer = poly_mul(&numer, &[big(-(k as i64)), big(denominator)]);
                    denom *= big(j as i64 - k as i64);
                }
                weights.push(poly_integral_01(&numer) / denom);
            }
            NcWeights { order, nodes, weights }
        }
    }
}

/// Order-`N` Newton-Cotes weights, computed once per order and cached.
pub fn weights(order: usize) -> Arc<NcWeights> {
    static CACHE: OnceLock<Mutex<BTreeMap<usize, Arc<NcWeights>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(BTreeMap::new()));
    let mut map = cache.lock().expect("weight cache poisoned");
    map.entry(order).or_insert_with(|| Arc::new(compute_weights(order))).clone()
}

/// Smallest order whose integral exists for the given Hurst index:
/// `inf { N >= 1 : H > 1/(4N+2) }`.
pub fn minimal_order(hurst: f64) -> usize {
    let mut n = 1usize;
    while hurst <= 1.0 / (4.0 * n as f64 + 2.0) {
        n += 1;
    }
    n
}

/// Grid discretization of the order-`N` stochastic integral of `f` along a
/// path: `sum_l dB_l sum_a w_a f(B_l + a dB_l)` with the mesh playing the
/// role of the vanishing regularization scale.
pub fn functional_sum(f: &Expr, path: &FbmPath, order: usize) -> f64 {
    let table = weights(order);
    let nodes = table.nodes_f64();
    let ws = table.weights_f64();
    let mut acc = 0.0;
    for l in 0..path.steps() {
        let b = path.value(l);
        let db = path.increment(l);
        let mut inner = 0.0;
        for (a, w) in nodes.iter().zip(&ws) {
            inner += w * f.eval(b + a * db);
        }
        acc += db * inner;
    }
    acc
}

/// True when the measure integrates `u^p` to exactly `1/(p+1)`.
pub fn is_exact_on_monomial(table: &NcWeights, p: u32) -> bool {
    (table.integrate_monomial(p) - big(1) / big(p as i64 + 1)).is_zero()
}
