//! Gauss-Legendre angular quadrature on (-1, 1).

use ndarray::{Array1, ArrayView2, Axis};

use crate::error::{Error, Result};

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

/// Discrete ordinates: direction cosines and their weights.
///
/// Nodes are sorted ascending, symmetric about zero, and never zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularQuadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Evaluates `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 2..=n {
        let kf = k as f64;
        let p_next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = p_next;
    }
    let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

/// Builds the `n_q`-point Gauss-Legendre rule.
///
/// Roots of `P_n` are found by Newton iteration from the Chebyshev-angle
/// guess `cos(pi (k - 1/4) / (n + 1/2))`; the positive half is computed and
/// mirrored so the rule is exactly symmetric.
pub fn build_gauss_legendre(n_q: usize) -> Result<AngularQuadrature> {
    if n_q == 0 || n_q % 2 != 0 {
        return Err(Error::invalid(format!(
            "quadrature order must be even and positive, got {n_q}"
        )));
    }
    let n = n_q;
    let half = n / 2;
    let mut positive = Vec::with_capacity(half);
    for k in 1..=half {
        let mut x = (std::f64::consts::PI * (k as f64 - 0.25) / (n as f64 + 0.5)).cos();
        let mut converged = false;
        for _ in 0..NEWTON_MAX_ITER {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= NEWTON_TOL * x.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Numeric(format!(
                "Newton iteration for Legendre root {k} of P_{n} did not converge"
            )));
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        positive.push((x, w));
    }
    // positive is ordered from the largest root down to the smallest
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for &(x, w) in &positive {
        nodes.push(-x);
        weights.push(w);
    }
    for &(x, w) in positive.iter().rev() {
        nodes.push(x);
        weights.push(w);
    }
    Ok(AngularQuadrature { nodes, weights })
}

impl AngularQuadrature {
    /// Builds a quadrature from explicit nodes and weights, checking the
    /// ordering, symmetry and normalisation invariants.
    pub fn from_parts(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let n = nodes.len();
        if n == 0 || n % 2 != 0 || weights.len() != n {
            return Err(Error::invalid(
                "quadrature needs an even, nonzero number of nodes with matching weights",
            ));
        }
        if nodes.iter().any(|&m| !(m > -1.0 && m < 1.0) || m == 0.0) {
            return Err(Error::invalid("quadrature nodes must lie in (-1,1) excluding 0"));
        }
        if nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("quadrature nodes must be strictly increasing"));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::invalid("quadrature weights must be positive"));
        }
        for j in 0..n / 2 {
            let k = n - 1 - j;
            if (nodes[j] + nodes[k]).abs() > 1e-14 || (weights[j] - weights[k]).abs() > 1e-14 {
                return Err(Error::invalid("quadrature must be symmetric about 0"));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 2.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("quadrature weights sum to {total}, not 2")));
        }
        Ok(Self { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(mu_j, w_j)` pairs in ascending order of `mu_j`.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    /// Half-range moment `1/2 sum_j w_j f(mu_j)`.
    pub fn half_sum(&self, f: impl Fn(f64) -> f64) -> f64 {
        0.5 * self.iter().map(|(mu, w)| w * f(mu)).sum::<f64>()
    }
}

/// Scalar flux `Psi_i = 1/2 sum_j I_ij w_j` at every node.
///
/// `intensity` is indexed `[node, direction]`.
pub fn scalar_flux_at_nodes(
    intensity: ArrayView2<'_, f64>,
    quadrature: &AngularQuadrature,
) -> Result<Array1<f64>> {
    if intensity.ncols() != quadrature.len() {
        return Err(Error::invalid(format!(
            "intensity has {} directions but the quadrature has {}",
            intensity.ncols(),
            quadrature.len()
        )));
    }
    Ok(intensity
        .axis_iter(Axis(0))
        .map(|row| 0.5 * row.iter().zip(quadrature.weights()).map(|(i, w)| i * w).sum::<f64>())
        .collect())
}
