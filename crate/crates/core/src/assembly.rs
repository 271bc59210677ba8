//! Bilinear, linear and nonlinear forms of the mixed method, pointwise
//! 2×2 determinant/cofactor algebra, and error norms.
//!
//! Tensor test functions are `μ = φ_i E_c` with `E_xx = [[1,0],[0,0]]`,
//! `E_xy = [[0,1],[1,0]]`, `E_yy = [[0,0],[0,1]]`, so the Frobenius
//! product carries a factor 2 on the `xy` component.

use std::ops::{Add, Mul, Sub};

use rayon::prelude::*;

use crate::element::{gauss_legendre_unit, QuadRule, MAX_QUAD_DEGREE};
use crate::error::{Error, Result};
use crate::linalg::Triplets;
use crate::mesh::ElementGeometry;
use crate::space::{DofMap, Field, XX, XY, YY};

/// Symmetric 2×2 matrix `[[a, b], [b, c]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sym2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 { a: 1.0, b: 0.0, c: 1.0 };

    pub const fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    pub fn det(self) -> f64 {
        self.a * self.c - self.b * self.b
    }

    pub fn cof(self) -> Sym2 {
        Sym2::new(self.c, -self.b, self.a)
    }

    /// Frobenius inner product `s : t`.
    pub fn frob(self, t: Sym2) -> f64 {
        self.a * t.a + 2.0 * self.b * t.b + self.c * t.c
    }

    pub fn trace(self) -> f64 {
        self.a + self.c
    }

    pub fn min_eigenvalue(self) -> f64 {
        let m = 0.5 * (self.a + self.c);
        let r = (0.25 * (self.a - self.c).powi(2) + self.b * self.b).sqrt();
        m - r
    }

    pub fn apply(self, v: [f64; 2]) -> [f64; 2] {
        [self.a * v[0] + self.b * v[1], self.b * v[0] + self.c * v[1]]
    }

    pub fn component(self, c: usize) -> f64 {
        [self.a, self.b, self.c][c]
    }
}

impl Add for Sym2 {
    type Output = Sym2;
    fn add(self, o: Sym2) -> Sym2 {
        Sym2::new(self.a + o.a, self.b + o.b, self.c + o.c)
    }
}

impl Sub for Sym2 {
    type Output = Sym2;
    fn sub(self, o: Sym2) -> Sym2 {
        Sym2::new(self.a - o.a, self.b - o.b, self.c - o.c)
    }
}

impl Mul<Sym2> for f64 {
    type Output = Sym2;
    fn mul(self, s: Sym2) -> Sym2 {
        Sym2::new(self * s.a, self * s.b, self * s.c)
    }
}

pub fn det2(s: Sym2) -> f64 {
    s.det()
}

pub fn cof2(s: Sym2) -> Sym2 {
    s.cof()
}

/// Frobenius weight of each stored tensor component.
pub const COMPONENT_WEIGHT: [f64; 3] = [1.0, 2.0, 1.0];

/// Quadrature degree for the nonlinear forms, `3k` capped at the largest rule.
pub fn default_quad_degree(k: usize) -> usize {
    (3 * k).min(MAX_QUAD_DEGREE)
}

/// Quadrature degree for error norms, `2k + 4` capped at the largest rule.
pub fn error_quad_degree(k: usize) -> usize {
    (2 * k + 4).min(MAX_QUAD_DEGREE)
}

/// Basis values and reference gradients tabulated at quadrature points.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub rule: QuadRule,
    pub nloc: usize,
    values: Vec<f64>,
    ref_grads: Vec<[f64; 2]>,
}

impl Tabulation {
    pub fn new(space: &DofMap, degree: usize) -> Result<Self> {
        let rule = QuadRule::new(degree)?;
        let basis = space.basis();
        let nloc = basis.len();
        let mut values = vec![0.0; rule.len() * nloc];
        let mut ref_grads = vec![[0.0; 2]; rule.len() * nloc];
        for (q, &p) in rule.points.iter().enumerate() {
            basis.eval(p, &mut values[q * nloc..(q + 1) * nloc], &mut ref_grads[q * nloc..(q + 1) * nloc]);
        }
        Ok(Self {
            rule,
            nloc,
            values,
            ref_grads,
        })
    }

    pub fn num_points(&self) -> usize {
        self.rule.len()
    }

    pub fn phi(&self, q: usize) -> &[f64] {
        &self.values[q * self.nloc..(q + 1) * self.nloc]
    }

    /// Physical gradients at point `q`.
    pub fn grads(&self, geom: &ElementGeometry, q: usize, out: &mut [[f64; 2]]) {
        for (o, g) in out.iter_mut().zip(&self.ref_grads[q * self.nloc..(q + 1) * self.nloc]) {
            *o = geom.push_gradient(*g);
        }
    }
}

fn check_pair(w: &DofMap, v: &DofMap) -> Result<()> {
    if w.components() != 3 || v.components() != 1 {
        return Err(Error::InvalidInput("expected a tensor space and a scalar space".into()));
    }
    if !std::sync::Arc::ptr_eq(w.mesh(), v.mesh()) || w.degree() != v.degree() {
        return Err(Error::InvalidInput("tensor and scalar spaces must share mesh and degree".into()));
    }
    Ok(())
}

fn check_field(f: &Field, components: usize) -> Result<()> {
    if f.components() != components {
        return Err(Error::InvalidInput(format!(
            "expected a field with {components} components, got {}",
            f.components()
        )));
    }
    Ok(())
}

fn geometries(space: &DofMap) -> Result<Vec<ElementGeometry>> {
    let m = space.mesh();
    (0..m.num_elements()).map(|e| m.element_geometry(e)).collect()
}

/// Element-parallel triplet assembly; per-element lists are concatenated in
/// element order.
fn assemble_triplets<F>(space: &DofMap, nrows: usize, ncols: usize, local: F) -> Result<Triplets>
where
    F: Fn(usize, &ElementGeometry, &mut Vec<(usize, usize, f64)>) + Sync,
{
    let geoms = geometries(space)?;
    let entries: Vec<(usize, usize, f64)> = geoms
        .par_iter()
        .enumerate()
        .flat_map_iter(|(e, g)| {
            let mut out = Vec::new();
            local(e, g, &mut out);
            out
        })
        .collect();
    Ok(Triplets::with_entries(nrows, ncols, entries))
}

/// Element-parallel vector assembly over the scalar nodes of `space`.
fn assemble_vector<F>(space: &DofMap, len: usize, local: F) -> Result<Vec<f64>>
where
    F: Fn(usize, &ElementGeometry, &mut Vec<(usize, f64)>) + Sync,
{
    let geoms = geometries(space)?;
    let locals: Vec<Vec<(usize, f64)>> = geoms
        .par_iter()
        .enumerate()
        .map(|(e, g)| {
            let mut out = Vec::new();
            local(e, g, &mut out);
            out
        })
        .collect();
    let mut v = vec![0.0; len];
    for (i, x) in locals.into_iter().flatten() {
        v[i] += x;
    }
    Ok(v)
}

/// Values of a tensor field at the quadrature points of element `e`.
pub fn tensor_at_points(f: &Field, tab: &Tabulation, e: usize) -> Vec<Sym2> {
    let n = tab.nloc;
    let mut loc = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for (c, l) in loc.iter_mut().enumerate() {
        f.local(c, e, l);
    }
    (0..tab.num_points())
        .map(|q| {
            let phi = tab.phi(q);
            let dot = |l: &[f64]| l.iter().zip(phi).map(|(a, b)| a * b).sum::<f64>();
            Sym2::new(dot(&loc[0]), dot(&loc[1]), dot(&loc[2]))
        })
        .collect()
}

/// `(σ, μ)` with the Frobenius product.
pub fn assemble_mass(w: &DofMap, quad: usize) -> Result<Triplets> {
    if w.components() != 3 {
        return Err(Error::InvalidInput("mass matrix needs a tensor space".into()));
    }
    let tab = Tabulation::new(w, quad)?;
    let n = w.num_dofs();
    assemble_triplets(w, n, n, |e, g, out| {
        let nodes = w.element_nodes(e);
        let nl = tab.nloc;
        let mut m = vec![0.0; nl * nl];
        for q in 0..tab.num_points() {
            let wq = tab.rule.weights[q] * g.det;
            let phi = tab.phi(q);
            for i in 0..nl {
                for j in 0..nl {
                    m[i * nl + j] += wq * phi[i] * phi[j];
                }
            }
        }
        for c in 0..3 {
            for i in 0..nl {
                for j in 0..nl {
                    out.push((w.dof(c, nodes[i]), w.dof(c, nodes[j]), COMPONENT_WEIGHT[c] * m[i * nl + j]));
                }
            }
        }
    })
}

/// `B[(c,i), j] = ∫ div(φ_i E_c) · Dψ_j`.
pub fn assemble_div_coupling(w: &DofMap, v: &DofMap, quad: usize) -> Result<Triplets> {
    check_pair(w, v)?;
    let tab = Tabulation::new(v, quad)?;
    assemble_triplets(v, w.num_dofs(), v.num_dofs(), |e, g, out| {
        let nodes = v.element_nodes(e);
        let nl = tab.nloc;
        let mut grads = vec![[0.0; 2]; nl];
        let mut b = vec![[0.0; 3]; nl * nl];
        for q in 0..tab.num_points() {
            let wq = tab.rule.weights[q] * g.det;
            tab.grads(g, q, &mut grads);
            for i in 0..nl {
                let gi = grads[i];
                for j in 0..nl {
                    let gj = grads[j];
                    let e = &mut b[i * nl + j];
                    e[XX] += wq * gi[0] * gj[0];
                    e[XY] += wq * (gi[1] * gj[0] + gi[0] * gj[1]);
                    e[YY] += wq * gi[1] * gj[1];
                }
            }
        }
        for c in 0..3 {
            for i in 0..nl {
                for j in 0..nl {
                    out.push((w.dof(c, nodes[i]), nodes[j], b[i * nl + j][c]));
                }
            }
        }
    })
}

/// Boundary functional `Σ_edges ∫ (∂g/∂τ)(μ ν·τ) ds` over tensor dofs.
///
/// `dg_dtau(p, τ)` returns the tangential derivative of `g` at `p`.
pub fn assemble_boundary_g(w: &DofMap, dg_dtau: impl Fn([f64; 2], [f64; 2]) -> f64) -> Result<Vec<f64>> {
    assemble_boundary_g_oriented(w, dg_dtau, 1.0)
}

/// As [`assemble_boundary_g`] with every tangent multiplied by `orientation` (±1).
pub fn assemble_boundary_g_oriented(
    w: &DofMap,
    dg_dtau: impl Fn([f64; 2], [f64; 2]) -> f64,
    orientation: f64,
) -> Result<Vec<f64>> {
    if w.components() != 3 {
        return Err(Error::InvalidInput("boundary functional needs a tensor space".into()));
    }
    let k = w.degree();
    let gauss = gauss_legendre_unit((3 * k + 1).div_ceil(2));
    let mesh = w.mesh();
    let basis = w.basis();
    let nl = basis.len();
    let mut out = vec![0.0; w.num_dofs()];
    let mut phi = vec![0.0; nl];
    let mut dphi = vec![[0.0; 2]; nl];
    for edge in &mesh.boundary_edges {
        let geom = mesh.element_geometry(edge.element)?;
        let nodes = w.element_nodes(edge.element);
        let (a, b) = (mesh.nodes[edge.endpoints[0]], mesh.nodes[edge.endpoints[1]]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let n = edge.normal;
        let t = [orientation * edge.tangent[0], orientation * edge.tangent[1]];
        let factor = [n[0] * t[0], n[0] * t[1] + n[1] * t[0], n[1] * t[1]];
        for &(s, ws) in &gauss {
            let p = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            basis.eval(geom.inverse_map(p), &mut phi, &mut dphi);
            let d = dg_dtau(p, t) * ws * len;
            for c in 0..3 {
                if factor[c] == 0.0 {
                    continue;
                }
                for i in 0..nl {
                    out[w.dof(c, nodes[i])] += d * factor[c] * phi[i];
                }
            }
        }
    }
    Ok(out)
}

/// `∫ det(σ_h) ψ_j`.
pub fn assemble_det_residual(sigma: &Field, v: &DofMap, quad: usize) -> Result<Vec<f64>> {
    check_field(sigma, 3)?;
    check_pair(&sigma.space, v)?;
    let tab = Tabulation::new(v, quad)?;
    assemble_vector(v, v.num_dofs(), |e, g, out| {
        let s = tensor_at_points(sigma, &tab, e);
        let nodes = v.element_nodes(e);
        let mut loc = vec![0.0; tab.nloc];
        for (q, sq) in s.iter().enumerate() {
            let wq = tab.rule.weights[q] * g.det * sq.det();
            for (l, p) in loc.iter_mut().zip(tab.phi(q)) {
                *l += wq * p;
            }
        }
        out.extend(nodes.iter().copied().zip(loc));
    })
}

/// `C[j, (c,i)] = ∫ (cof(σ_h) : φ_i E_c) ψ_j`, the σ-derivative of the det form.
pub fn assemble_cof_jacobian(sigma: &Field, w: &DofMap, v: &DofMap, quad: usize) -> Result<Triplets> {
    check_field(sigma, 3)?;
    check_pair(w, v)?;
    let tab = Tabulation::new(v, quad)?;
    assemble_triplets(v, v.num_dofs(), w.num_dofs(), |e, g, out| {
        let s = tensor_at_points(sigma, &tab, e);
        let nodes = v.element_nodes(e);
        let nl = tab.nloc;
        let mut c = vec![[0.0; 3]; nl * nl];
        for (q, sq) in s.iter().enumerate() {
            let wq = tab.rule.weights[q] * g.det;
            let cof = sq.cof();
            let coef = [cof.a, 2.0 * cof.b, cof.c];
            let phi = tab.phi(q);
            for j in 0..nl {
                for i in 0..nl {
                    let base = wq * phi[i] * phi[j];
                    let entry = &mut c[j * nl + i];
                    for comp in 0..3 {
                        entry[comp] += base * coef[comp];
                    }
                }
            }
        }
        for j in 0..nl {
            for comp in 0..3 {
                for i in 0..nl {
                    out.push((nodes[j], w.dof(comp, nodes[i]), c[j * nl + i][comp]));
                }
            }
        }
    })
}

/// `∫ (Φ Dw) · Dv`.
pub fn assemble_phi_grad(phi: &Field, v: &DofMap, quad: usize) -> Result<Triplets> {
    check_field(phi, 3)?;
    check_pair(&phi.space, v)?;
    let tab = Tabulation::new(v, quad)?;
    let n = v.num_dofs();
    assemble_triplets(v, n, n, |e, g, out| {
        let s = tensor_at_points(phi, &tab, e);
        stiffness_local(&tab, g, v.element_nodes(e), |q| s[q], out);
    })
}

fn stiffness_local(
    tab: &Tabulation,
    g: &ElementGeometry,
    nodes: &[usize],
    coef: impl Fn(usize) -> Sym2,
    out: &mut Vec<(usize, usize, f64)>,
) {
    let nl = tab.nloc;
    let mut grads = vec![[0.0; 2]; nl];
    let mut k = vec![0.0; nl * nl];
    for q in 0..tab.num_points() {
        let wq = tab.rule.weights[q] * g.det;
        tab.grads(g, q, &mut grads);
        let m = coef(q);
        for j in 0..nl {
            let pg = m.apply(grads[j]);
            for i in 0..nl {
                k[i * nl + j] += wq * (pg[0] * grads[i][0] + pg[1] * grads[i][1]);
            }
        }
    }
    for i in 0..nl {
        for j in 0..nl {
            out.push((nodes[i], nodes[j], k[i * nl + j]));
        }
    }
}

/// `∫ f ψ_j`.
pub fn assemble_load(v: &DofMap, f: impl Fn([f64; 2]) -> f64 + Sync, quad: usize) -> Result<Vec<f64>> {
    if v.components() != 1 {
        return Err(Error::InvalidInput("load vector needs a scalar space".into()));
    }
    let tab = Tabulation::new(v, quad)?;
    assemble_vector(v, v.num_dofs(), |e, g, out| {
        let nodes = v.element_nodes(e);
        let mut loc = vec![0.0; tab.nloc];
        for q in 0..tab.num_points() {
            let wq = tab.rule.weights[q] * g.det * f(g.map(tab.rule.points[q]));
            for (l, p) in loc.iter_mut().zip(tab.phi(q)) {
                *l += wq * p;
            }
        }
        out.extend(nodes.iter().copied().zip(loc));
    })
}

/// `∫ Du · Dv`.
pub fn assemble_scalar_laplacian(v: &DofMap, quad: usize) -> Result<Triplets> {
    if v.components() != 1 {
        return Err(Error::InvalidInput("Laplacian needs a scalar space".into()));
    }
    let tab = Tabulation::new(v, quad)?;
    let n = v.num_dofs();
    assemble_triplets(v, n, n, |e, g, out| {
        stiffness_local(&tab, g, v.element_nodes(e), |_| Sym2::IDENTITY, out);
    })
}

/// Minimum over quadrature points of the smaller eigenvalue of a tensor field.
pub fn min_eigenvalue(sigma: &Field, quad: usize) -> Result<f64> {
    check_field(sigma, 3)?;
    let tab = Tabulation::new(&sigma.space, quad)?;
    let ne = sigma.space.mesh().num_elements();
    Ok((0..ne)
        .into_par_iter()
        .map(|e| tensor_at_points(sigma, &tab, e).into_iter().map(Sym2::min_eigenvalue).fold(f64::INFINITY, f64::min))
        .reduce(|| f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L2,
    H1Semi,
    H1,
}

/// Error norm of a scalar field against `exact` (and its gradient for H¹).
pub fn error_norm(
    fld: &Field,
    exact: impl Fn([f64; 2]) -> f64 + Sync,
    grad: Option<&(dyn Fn([f64; 2]) -> [f64; 2] + Sync)>,
    norm: Norm,
) -> Result<f64> {
    check_field(fld, 1)?;
    if norm != Norm::L2 && grad.is_none() {
        return Err(Error::InvalidInput("H1 norms need the exact gradient".into()));
    }
    let space = &fld.space;
    let tab = Tabulation::new(space, error_quad_degree(space.degree()))?;
    let geoms = geometries(space)?;
    let (l2, semi) = geoms
        .par_iter()
        .enumerate()
        .map(|(e, g)| {
            let nl = tab.nloc;
            let mut loc = vec![0.0; nl];
            fld.local(0, e, &mut loc);
            let mut grads = vec![[0.0; 2]; nl];
            let (mut l2, mut semi) = (0.0, 0.0);
            for q in 0..tab.num_points() {
                let wq = tab.rule.weights[q] * g.det;
                let x = g.map(tab.rule.points[q]);
                let uh: f64 = loc.iter().zip(tab.phi(q)).map(|(a, b)| a * b).sum();
                l2 += wq * (uh - exact(x)).powi(2);
                if let Some(grad) = grad {
                    tab.grads(g, q, &mut grads);
                    let gh = loc.iter().zip(&grads).fold([0.0, 0.0], |s, (c, d)| [s[0] + c * d[0], s[1] + c * d[1]]);
                    let ge = grad(x);
                    semi += wq * ((gh[0] - ge[0]).powi(2) + (gh[1] - ge[1]).powi(2));
                }
            }
            (l2, semi)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(match norm {
        Norm::L2 => l2.sqrt(),
        Norm::H1Semi => semi.sqrt(),
        Norm::H1 => (l2 + semi).sqrt(),
    })
}

/// Error norm of a tensor field with the Frobenius weight. For H¹, `grad`
/// returns the x- and y-derivatives of the exact tensor.
pub fn tensor_error_norm(
    fld: &Field,
    exact: impl Fn([f64; 2]) -> Sym2 + Sync,
    grad: Option<&(dyn Fn([f64; 2]) -> [Sym2; 2] + Sync)>,
    norm: Norm,
) -> Result<f64> {
    check_field(fld, 3)?;
    if norm != Norm::L2 && grad.is_none() {
        return Err(Error::InvalidInput("H1 norms need the exact gradient".into()));
    }
    let space = &fld.space;
    let tab = Tabulation::new(space, error_quad_degree(space.degree()))?;
    let geoms = geometries(space)?;
    let (l2, semi) = geoms
        .par_iter()
        .enumerate()
        .map(|(e, g)| {
            let nl = tab.nloc;
            let mut loc = [vec![0.0; nl], vec![0.0; nl], vec![0.0; nl]];
            for (c, l) in loc.iter_mut().enumerate() {
                fld.local(c, e, l);
            }
            let mut grads = vec![[0.0; 2]; nl];
            let (mut l2, mut semi) = (0.0, 0.0);
            for q in 0..tab.num_points() {
                let wq = tab.rule.weights[q] * g.det;
                let x = g.map(tab.rule.points[q]);
                let phi = tab.phi(q);
                let val = |l: &[f64]| l.iter().zip(phi).map(|(a, b)| a * b).sum::<f64>();
                let sh = Sym2::new(val(&loc[0]), val(&loc[1]), val(&loc[2]));
                let d = sh - exact(x);
                l2 += wq * d.frob(d);
                if let Some(grad) = grad {
                    tab.grads(g, q, &mut grads);
                    let dval = |l: &[f64], axis: usize| l.iter().zip(&grads).map(|(a, b)| a * b[axis]).sum::<f64>();
                    let ge = grad(x);
                    for (axis, ge_axis) in ge.iter().enumerate() {
                        let gh = Sym2::new(dval(&loc[0], axis), dval(&loc[1], axis), dval(&loc[2], axis));
                        let dd = gh - *ge_axis;
                        semi += wq * dd.frob(dd);
                    }
                }
            }
            (l2, semi)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(match norm {
        Norm::L2 => l2.sqrt(),
        Norm::H1Semi => semi.sqrt(),
        Norm::H1 => (l2 + semi).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::linalg::to_csr;
    use crate::mesh::{build_rect_mesh, DiagonalPattern, Rect};
    use crate::space::{interpolate_scalar, interpolate_tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spaces(n: usize) -> (Arc<DofMap>, Arc<DofMap>) {
        let m = Arc::new(build_rect_mesh(Rect::unit_square(), n, n, DiagonalPattern::Slash).unwrap());
        (Arc::new(DofMap::new(m.clone(), 2, 3).unwrap()), Arc::new(DofMap::new(m, 2, 1).unwrap()))
    }

    fn quad_form(t: &Triplets, x: &[f64], y: &[f64]) -> f64 {
        t.entries.iter().map(|&(r, c, v)| x[r] * v * y[c]).sum()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn sym2_algebra() {
        assert_eq!(det2(Sym2::new(2.0, 0.0, 3.0)), 6.0);
        assert_eq!(det2(Sym2::IDENTITY), 1.0);
        assert_eq!(det2(Sym2::new(1.0, 2.0, 1.0)), -3.0);
        assert_eq!(cof2(Sym2::IDENTITY), Sym2::IDENTITY);
        assert_eq!(cof2(Sym2::new(2.0, 1.0, 3.0)), Sym2::new(3.0, -1.0, 2.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let s = Sym2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            assert!((s.cof().frob(s) - 2.0 * s.det()).abs() < 1e-13);
            let d = Sym2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let lhs = det2(s + d) - det2(s) - s.cof().frob(d);
            assert!((lhs - det2(d)).abs() < 1e-12);
        }
        assert!((Sym2::new(2.0, 0.0, 5.0).min_eigenvalue() - 2.0).abs() < 1e-15);
        assert!((Sym2::new(1.0, 2.0, 1.0).min_eigenvalue() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn mass_matrix_examples() {
        let (w, _) = spaces(3);
        let m = assemble_mass(&w, 6).unwrap();
        let f1 = interpolate_tensor(&w, |_| Sym2::new(1.0, 0.0, 0.0));
        assert!((quad_form(&m, &f1.coeffs, &f1.coeffs) - 1.0).abs() < 1e-13);
        let f2 = interpolate_tensor(&w, |_| Sym2::new(0.0, 1.0, 0.0));
        assert!((quad_form(&m, &f2.coeffs, &f2.coeffs) - 2.0).abs() < 1e-13);
        // quadratic field: exact ∫ |σ|_F^2 from a separate fine rule
        let s = |p: [f64; 2]| Sym2::new(p[0] * p[1], 1.0 - p[0] * p[0], p[1] + 0.5 * p[0]);
        let f3 = interpolate_tensor(&w, s);
        let fine = QuadRule::new(10).unwrap();
        let mesh = w.mesh();
        let oracle: f64 = (0..mesh.num_elements())
            .map(|e| {
                let g = mesh.element_geometry(e).unwrap();
                g.det * fine.integrate(|p| {
                    let v = s(g.map(p));
                    v.frob(v)
                })
            })
            .sum();
        assert!((quad_form(&m, &f3.coeffs, &f3.coeffs) - oracle).abs() < 1e-12);
        assert!(to_csr(&m).unwrap().is_symmetric(1e-15));
    }

    #[test]
    fn div_coupling_examples() {
        let (w, v) = spaces(4);
        let b = assemble_div_coupling(&w, &v, 6).unwrap();
        let vh = interpolate_scalar(&v, |p| (p[0] * 3.0).sin() * p[1]);
        let mu = interpolate_tensor(&w, |_| Sym2::new(1.0, 2.0, -1.0));
        assert!(quad_form(&b, &mu.coeffs, &vh.coeffs).abs() < 1e-13);

        let u = interpolate_scalar(&v, |p| p[0] * p[0] + p[1] * p[1]);
        let mu = interpolate_tensor(&w, |p| Sym2::new(p[0], 0.0, 0.0));
        assert!((quad_form(&b, &mu.coeffs, &u.coeffs) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn boundary_functional_examples() {
        let (w, _) = spaces(3);
        let zero = assemble_boundary_g(&w, |_, _| 0.0).unwrap();
        assert!(zero.iter().all(|&x| x == 0.0));

        // g = x: ∂g/∂τ = τ_x, nonzero on bottom/top only
        let gx = |_: [f64; 2], t: [f64; 2]| t[0];
        let vec = assemble_boundary_g(&w, gx).unwrap();
        // bottom: τ = (1, 0), μν·τ = -μ_xy; top: τ = (-1, 0), μν·τ = -μ_xy
        let mu = interpolate_tensor(&w, |_| Sym2::new(0.0, 1.0, 0.0));
        assert!(dot(&vec, &mu.coeffs).abs() < 1e-13);
        let mu = interpolate_tensor(&w, |p| Sym2::new(3.0, p[1], -1.0));
        assert!((dot(&vec, &mu.coeffs) - 1.0).abs() < 1e-13);
        let mu = interpolate_tensor(&w, |p| Sym2::new(0.0, p[0] * p[0] * (1.0 + p[1]), 0.0));
        assert!((dot(&vec, &mu.coeffs) - 1.0 / 3.0).abs() < 1e-13);

        let g = |p: [f64; 2], t: [f64; 2]| (4.0 * p[0].powi(3)) * t[0] + 2.0 * p[1] * t[1];
        let fwd = assemble_boundary_g_oriented(&w, g, 1.0).unwrap();
        let rev = assemble_boundary_g_oriented(&w, g, -1.0).unwrap();
        assert!(fwd.iter().zip(&rev).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn det_residual_examples() {
        let (w, v) = spaces(3);
        let id = interpolate_tensor(&w, |_| Sym2::IDENTITY);
        let r = assemble_det_residual(&id, &v, 6).unwrap();
        let ones = assemble_load(&v, |_| 1.0, 6).unwrap();
        assert!(r.iter().zip(&ones).all(|(a, b)| (a - b).abs() < 1e-15));

        let s = interpolate_tensor(&w, |p| Sym2::new(12.0 * p[0] * p[0], 0.0, 2.0));
        let r = assemble_det_residual(&s, &v, 6).unwrap();
        let f = assemble_load(&v, |p| 24.0 * p[0] * p[0], 6).unwrap();
        assert!(r.iter().zip(&f).all(|(a, b)| (a - b).abs() < 1e-14));

        let mut s2 = s.clone();
        s2.coeffs.iter_mut().for_each(|c| *c *= 2.0);
        let r2 = assemble_det_residual(&s2, &v, 6).unwrap();
        assert!(r2.iter().zip(&r).all(|(a, b)| (a - 4.0 * b).abs() < 1e-13));
    }

    #[test]
    fn cof_jacobian_matches_central_differences() {
        let (w, v) = spaces(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut sigma = Field::zeros(w.clone());
        sigma.coeffs.iter_mut().for_each(|c| *c = rng.gen_range(-2.0..2.0));
        let mut delta = Field::zeros(w.clone());
        delta.coeffs.iter_mut().for_each(|c| *c = rng.gen_range(-1.0..1.0));
        let c = to_csr(&assemble_cof_jacobian(&sigma, &w, &v, 6).unwrap()).unwrap();
        let cd = c.spmv(&delta.coeffs).unwrap();
        let t = 1e-3;
        let shifted = |s: f64| {
            let mut f = sigma.clone();
            f.coeffs.iter_mut().zip(&delta.coeffs).for_each(|(a, d)| *a += s * d);
            assemble_det_residual(&f, &v, 6).unwrap()
        };
        let (p, m) = (shifted(t), shifted(-t));
        let scale = cd.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        for (i, &x) in cd.iter().enumerate() {
            let fd = (p[i] - m[i]) / (2.0 * t);
            assert!((fd - x).abs() <= 1e-9 * scale);
        }

        let id = interpolate_tensor(&w, |_| Sym2::IDENTITY);
        let c1 = to_csr(&assemble_cof_jacobian(&id, &w, &v, 6).unwrap()).unwrap();
        let id2 = interpolate_tensor(&w, |_| 2.0 * Sym2::IDENTITY);
        let c2 = to_csr(&assemble_cof_jacobian(&id2, &w, &v, 6).unwrap()).unwrap();
        assert!(c1.data.iter().zip(&c2.data).all(|(a, b)| (2.0 * a - b).abs() < 1e-15));
        // cof(I) = I: C δ = ∫ tr(δ) v
        let tr = interpolate_tensor(&w, |p| Sym2::new(p[0], 7.0, p[1] * p[1]));
        let lhs = c1.spmv(&tr.coeffs).unwrap();
        let rhs = assemble_load(&v, |p| p[0] + p[1] * p[1], 6).unwrap();
        assert!(lhs.iter().zip(&rhs).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn phi_grad_and_laplacian() {
        let (w, v) = spaces(3);
        let k = to_csr(&assemble_scalar_laplacian(&v, 6).unwrap()).unwrap();
        let id = interpolate_tensor(&w, |_| Sym2::IDENTITY);
        let s = to_csr(&assemble_phi_grad(&id, &v, 6).unwrap()).unwrap();
        assert_eq!(k.indices, s.indices);
        assert!(k.data.iter().zip(&s.data).all(|(a, b)| (a - b).abs() < 1e-13));
        let s2 = to_csr(&assemble_phi_grad(&interpolate_tensor(&w, |_| 2.0 * Sym2::IDENTITY), &v, 6).unwrap()).unwrap();
        assert!(k.data.iter().zip(&s2.data).all(|(a, b)| (2.0 * a - b).abs() < 1e-14));
        // cof of the Hessian of (x^2 + y^2)/2 is the identity
        let phi = interpolate_tensor(&w, |_| Sym2::new(1.0, 0.0, 1.0).cof());
        let s3 = to_csr(&assemble_phi_grad(&phi, &v, 6).unwrap()).unwrap();
        assert!(k.data.iter().zip(&s3.data).all(|(a, b)| (a - b).abs() < 1e-13));

        let ones = vec![1.0; v.num_dofs()];
        assert!(k.spmv(&ones).unwrap().iter().all(|r| r.abs() < 1e-12));
        let x = interpolate_scalar(&v, |p| p[0]);
        assert!((dot(&x.coeffs, &k.spmv(&x.coeffs).unwrap()) - 1.0).abs() < 1e-13);
        assert!(k.is_symmetric(1e-14));
    }

    #[test]
    fn load_examples() {
        let (_, v) = spaces(4);
        assert!(assemble_load(&v, |_| 0.0, 6).unwrap().iter().all(|&x| x == 0.0));
        let s: f64 = assemble_load(&v, |_| 1.0, 6).unwrap().iter().sum();
        assert!((s - 1.0).abs() < 1e-14);
        let s: f64 = assemble_load(&v, |p| 24.0 * p[0] * p[0], 6).unwrap().iter().sum();
        assert!((s - 8.0).abs() < 1e-13);
    }

    #[test]
    fn error_norm_examples() {
        let (w, v) = spaces(4);
        let p = |x: [f64; 2]| x[0] * x[0] - 2.0 * x[0] * x[1] + 3.0;
        let g = |x: [f64; 2]| [2.0 * x[0] - 2.0 * x[1], -2.0 * x[0]];
        let f = interpolate_scalar(&v, p);
        assert!(error_norm(&f, p, Some(&g), Norm::H1).unwrap() < 1e-12);
        let z = Field::zeros(v.clone());
        assert!((error_norm(&z, |_| 1.0, None, Norm::L2).unwrap() - 1.0).abs() < 1e-14);
        assert!(error_norm(&z, |_| 1.0, None, Norm::H1).is_err());

        let s = |x: [f64; 2]| Sym2::new(x[0], x[1] * x[0], 1.0);
        let sg = |_: [f64; 2]| [Sym2::new(1.0, 0.0, 0.0), Sym2::new(0.0, 0.0, 0.0)];
        let fs = interpolate_tensor(&w, s);
        let grad_wrong = |x: [f64; 2]| [Sym2::new(1.0, x[1], 0.0), Sym2::new(0.0, x[0], 0.0)];
        assert!(tensor_error_norm(&fs, s, Some(&grad_wrong), Norm::H1).unwrap() < 1e-12);
        assert!(tensor_error_norm(&fs, s, Some(&sg), Norm::H1Semi).unwrap() > 0.1);
    }
}
