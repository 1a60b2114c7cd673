//! Quadrature on the reference triangle `{x, y >= 0, x + y <= 1}` and on
//! segments.
//!
//! Low degrees use the classical symmetric rules with closed-form points and
//! weights; higher degrees fall back to a collapsed tensor-product Gauss rule
//! (positive weights, interior points, exact to the requested total degree).

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    /// Reference-coordinate pairs.
    pub points: Vec<[f64; 2]>,
    /// Weights summing to the reference-triangle area 1/2.
    pub weights: Vec<f64>,
    /// Total polynomial degree integrated exactly.
    pub exactness_degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn([f64; 2]) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&p, &w)| w * f(p))
            .sum()
    }
}

/// Rule on the reference triangle exact for total degree at least `degree`,
/// with `1 <= degree <= 12`.
pub fn simplex_rule(degree: usize) -> Result<QuadratureRule> {
    match degree {
        0 | 13.. => Err(Error::InvalidArgument(format!(
            "unsupported quadrature degree {degree} (need 1..=12)"
        ))),
        1 => Ok(QuadratureRule {
            points: vec![[1.0 / 3.0, 1.0 / 3.0]],
            weights: vec![0.5],
            exactness_degree: 1,
        }),
        2 => Ok(QuadratureRule {
            points: vec![
                [2.0 / 3.0, 1.0 / 6.0],
                [1.0 / 6.0, 2.0 / 3.0],
                [1.0 / 6.0, 1.0 / 6.0],
            ],
            weights: vec![1.0 / 6.0; 3],
            exactness_degree: 2,
        }),
        3..=5 => Ok(seven_point_degree5()),
        d => Ok(collapsed_gauss(d)),
    }
}

/// The 7-point degree-5 rule; points and weights have exact radical forms.
fn seven_point_degree5() -> QuadratureRule {
    let s15 = 15.0f64.sqrt();
    let a = (6.0 + s15) / 21.0;
    let b = (6.0 - s15) / 21.0;
    let wa = (155.0 + s15) / 2400.0;
    let wb = (155.0 - s15) / 2400.0;
    let mut points = vec![[1.0 / 3.0, 1.0 / 3.0]];
    let mut weights = vec![9.0 / 80.0];
    for (c, w) in [(a, wa), (b, wb)] {
        points.extend_from_slice(&[[c, c], [1.0 - 2.0 * c, c], [c, 1.0 - 2.0 * c]]);
        weights.extend_from_slice(&[w, w, w]);
    }
    QuadratureRule {
        points,
        weights,
        exactness_degree: 5,
    }
}

/// Duffy-collapsed tensor Gauss rule: `x = s(1-t), y = t` over the unit
/// square, with the Jacobian factor `1 - t` folded into the weights.  With
/// `m` Gauss points per direction the rule is exact for total degree
/// `2m - 2`.
fn collapsed_gauss(degree: usize) -> QuadratureRule {
    let m = (degree + 3) / 2;
    let (gp, gw) = gauss_legendre_01(m);
    let mut points = Vec::with_capacity(m * m);
    let mut weights = Vec::with_capacity(m * m);
    for (i, &s) in gp.iter().enumerate() {
        for (j, &t) in gp.iter().enumerate() {
            points.push([s * (1.0 - t), t]);
            weights.push(gw[i] * gw[j] * (1.0 - t));
        }
    }
    QuadratureRule {
        points,
        weights,
        exactness_degree: 2 * m - 2,
    }
}

/// Gauss-Legendre points and weights on `[0, 1]`, exact for polynomials of
/// degree `2n - 1`.  Nodes are found by Newton iteration on the Legendre
/// recurrence.
pub fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        // Map from [-1, 1] to [0, 1]; order points ascending.
        points[n - 1 - i] = 0.5 * (x + 1.0);
        weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (points, weights)
}

/// Legendre polynomial `P_n` and derivative at `x` via the three-term
/// recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let p2 = ((2 * k + 1) as f64 * x * p1 - k as f64 * p0) / (k + 1) as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}
