//! Gauss–Laguerre rules for `∫₀^∞ f(x) e^{-x} dx`.
//!
//! Nodes start from the Golub–Welsch eigenvalues of the Jacobi matrix and are
//! polished by Newton iteration on the Laguerre recurrence; weights use the
//! closed form `x / ((n+1)² L_{n+1}(x)²)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

/// Generalized Laguerre polynomial `L_n^alpha(x)` by three-term recurrence.
pub fn laguerre(n: u32, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for k in 1..n {
        let k = k as f64;
        let next = ((2.0 * k + 1.0 + alpha - x) * cur - (k + alpha) * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Returns `(L_n(x), L_n'(x))` for `alpha = 0`.
fn laguerre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 1.0;
    let mut cur = 1.0 - x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let k = k as f64;
        let next = ((2.0 * k + 1.0 - x) * cur - k * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    // x L_n' = n (L_n - L_{n-1})
    let deriv = n as f64 * (cur - prev) / x;
    (cur, deriv)
}

#[derive(Debug, Clone)]
pub struct GaussLaguerre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLaguerre {
    /// `order`-point rule, exact for polynomials of degree `2*order - 1`.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        let mut jacobi = DMatrix::<f64>::zeros(order, order);
        for i in 0..order {
            jacobi[(i, i)] = (2 * i + 1) as f64;
            if i + 1 < order {
                let b = (i + 1) as f64;
                jacobi[(i, i + 1)] = b;
                jacobi[(i + 1, i)] = b;
            }
        }
        let mut nodes: Vec<f64> = jacobi.symmetric_eigen().eigenvalues.iter().copied().collect();
        nodes.sort_by(|a, b| a.total_cmp(b));

        for x in nodes.iter_mut() {
            for _ in 0..8 {
                let (p, dp) = laguerre_with_derivative(order, *x);
                let step = p / dp;
                *x -= step;
                if step.abs() <= 1e-15 * x.abs() {
                    break;
                }
            }
        }
        let weights = nodes
            .iter()
            .map(|&x| {
                let next = laguerre(order as u32 + 1, 0.0, x);
                let np1 = (order + 1) as f64;
                x / (np1 * np1 * next * next)
            })
            .collect();
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Process-wide memo of rules by order.
pub fn rule(order: usize) -> Arc<GaussLaguerre> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLaguerre>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard
        .entry(order)
        .or_insert_with(|| Arc::new(GaussLaguerre::new(order)))
        .clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(k: u32) -> f64 {
        (1..=k).map(|i| i as f64).product()
    }

    #[test]
    fn integrates_monomials_exactly() {
        for order in [1usize, 3, 8, 20, 40] {
            let gl = GaussLaguerre::new(order);
            for k in 0..(2 * order as u32) {
                let got = gl.integrate(|x| x.powi(k as i32));
                let want = factorial(k);
                assert!(
                    ((got - want) / want).abs() < 1e-12,
                    "order {order}, x^{k}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn weights_sum_to_one() {
        let gl = GaussLaguerre::new(30);
        let s: f64 = gl.weights.iter().sum();
        assert!((s - 1.0).abs() < 1e-13);
    }

    #[test]
    fn laguerre_closed_forms() {
        let x = 0.7;
        assert!((laguerre(1, 2.0, x) - (3.0 - x)).abs() < 1e-15);
        let l2 = 0.5 * (x * x - 4.0 * x + 2.0);
        assert!((laguerre(2, 0.0, x) - l2).abs() < 1e-15);
    }
}
