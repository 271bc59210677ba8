//! Reference-triangle Lagrange bases and quadrature rules.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};
use crate::mesh::ElementGeometry;

/// Nodal Lagrange basis of degree `k` on the reference triangle.
///
/// Nodes are the lattice points `(a/k, b/k)` with `a + b <= k`, ordered
/// row by row (`b` outer, `a` inner), so index 0 is the vertex `(0, 0)`.
#[derive(Debug, Clone)]
pub struct LagrangeBasis {
    degree: usize,
    lattice: Vec<[usize; 2]>,
}

impl LagrangeBasis {
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::UnsupportedDegree(k));
        }
        let lattice = (0..=k).flat_map(|b| (0..=k - b).map(move |a| [a, b])).collect();
        Ok(Self { degree: k, lattice })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    /// Integer lattice coordinates `(a, b)` of each node.
    pub fn lattice(&self) -> &[[usize; 2]] {
        &self.lattice
    }

    pub fn nodes(&self) -> Vec<[f64; 2]> {
        let k = self.degree as f64;
        self.lattice.iter().map(|&[a, b]| [a as f64 / k, b as f64 / k]).collect()
    }

    /// Values and reference gradients of every basis function at `xi`.
    pub fn eval(&self, xi: [f64; 2], values: &mut [f64], grads: &mut [[f64; 2]]) {
        let k = self.degree;
        let kf = k as f64;
        let lambda = [1.0 - xi[0] - xi[1], xi[0], xi[1]];
        const DLAMBDA: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

        // p[m][i] = prod_{l<i} (k λ_m - l) / (l + 1), and its λ-derivative
        let mut p = vec![[0.0f64; 3]; k + 1];
        let mut dp = vec![[0.0f64; 3]; k + 1];
        for m in 0..3 {
            p[0][m] = 1.0;
            dp[0][m] = 0.0;
            for i in 1..=k {
                let factor = (kf * lambda[m] - (i - 1) as f64) / i as f64;
                p[i][m] = p[i - 1][m] * factor;
                dp[i][m] = dp[i - 1][m] * factor + p[i - 1][m] * kf / i as f64;
            }
        }

        for (n, &[a, b]) in self.lattice.iter().enumerate() {
            let idx = [k - a - b, a, b];
            let f = [p[idx[0]][0], p[idx[1]][1], p[idx[2]][2]];
            let d = [dp[idx[0]][0], dp[idx[1]][1], dp[idx[2]][2]];
            values[n] = f[0] * f[1] * f[2];
            let dl = [d[0] * f[1] * f[2], f[0] * d[1] * f[2], f[0] * f[1] * d[2]];
            grads[n] = [
                dl.iter().zip(DLAMBDA.iter()).map(|(s, g)| s * g[0]).sum(),
                dl.iter().zip(DLAMBDA.iter()).map(|(s, g)| s * g[1]).sum(),
            ];
        }
    }

    pub fn values(&self, xi: [f64; 2]) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        let mut g = vec![[0.0; 2]; self.len()];
        self.eval(xi, &mut v, &mut g);
        v
    }

    pub fn gradients(&self, xi: [f64; 2]) -> Vec<[f64; 2]> {
        let mut v = vec![0.0; self.len()];
        let mut g = vec![[0.0; 2]; self.len()];
        self.eval(xi, &mut v, &mut g);
        g
    }
}

pub fn lagrange_basis(k: usize) -> Result<LagrangeBasis> {
    LagrangeBasis::new(k)
}

/// Positive-weight rule on the reference triangle (area 1/2).
#[derive(Debug, Clone)]
pub struct QuadRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

pub const MAX_QUAD_DEGREE: usize = 10;

impl QuadRule {
    /// Collapsed Gauss product rule exact for total degree `d`.
    ///
    /// `(s, t) -> (s (1 - t), t)` maps the unit square onto the triangle; the
    /// factor `(1 - t)` raises the degree in `t` by one.
    pub fn new(d: usize) -> Result<Self> {
        if !(1..=MAX_QUAD_DEGREE).contains(&d) {
            return Err(Error::UnsupportedQuadrature(d));
        }
        let ns = (d + 1).div_ceil(2);
        let nt = (d + 2).div_ceil(2);
        let s_rule = gauss_legendre_unit(ns);
        let t_rule = gauss_legendre_unit(nt);
        let mut points = Vec::with_capacity(ns * nt);
        let mut weights = Vec::with_capacity(ns * nt);
        for &(t, wt) in &t_rule {
            for &(s, ws) in &s_rule {
                points.push([s * (1.0 - t), t]);
                weights.push(ws * wt * (1.0 - t));
            }
        }
        Ok(Self { points, weights, degree: d })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn([f64; 2]) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(*p)).sum()
    }
}

pub fn quad_rule(d: usize) -> Result<QuadRule> {
    QuadRule::new(d)
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    let n = NonZeroUsize::new(n).expect("at least one Gauss point");
    let mut pairs: Vec<(f64, f64)> = GaussLegendre::new(n)
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// Physical gradients of every basis function at a reference point.
pub fn physical_gradients(geom: &ElementGeometry, basis: &LagrangeBasis, p: [f64; 2]) -> Vec<[f64; 2]> {
    basis.gradients(p).into_iter().map(|g| geom.push_gradient(g)).collect()
}
