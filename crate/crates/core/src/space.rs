//! Global Lagrange spaces, nodal interpolation and boundary constraints.
//!
//! Degree-`k` Lagrange nodes of a structured mesh are exactly the points of
//! the `k`-times refined grid, so global node `J * (k nx + 1) + I` sits at
//! grid position `(I, J)`. Tensor fields store three blocks of nodal values,
//! `xx`, `xy`, `yy`, in that order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::assembly::Sym2;
use crate::element::LagrangeBasis;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Side};

pub const XX: usize = 0;
pub const XY: usize = 1;
pub const YY: usize = 2;

const BOTTOM: u8 = 1;
const RIGHT: u8 = 2;
const TOP: u8 = 4;
const LEFT: u8 = 8;

#[derive(Debug)]
pub struct DofMap {
    mesh: Arc<Mesh>,
    basis: LagrangeBasis,
    components: usize,
    grid_width: usize,
    node_coords: Vec<[f64; 2]>,
    node_sides: Vec<u8>,
    /// `elem_nodes[e * nloc + l]` is the global node of local basis function `l`.
    elem_nodes: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: Arc<Mesh>, k: usize, components: usize) -> Result<Self> {
        if components != 1 && components != 3 {
            return Err(Error::InvalidInput(format!("components must be 1 or 3, got {components}")));
        }
        let basis = LagrangeBasis::new(k)?;
        let (gx, gy) = (k * mesh.nx, k * mesh.ny);
        let grid_width = gx + 1;
        let rect = mesh.rect;
        let mut node_coords = Vec::with_capacity((gx + 1) * (gy + 1));
        let mut node_sides = Vec::with_capacity((gx + 1) * (gy + 1));
        for j in 0..=gy {
            for i in 0..=gx {
                let x = if i == gx { rect.bx } else { rect.ax + (rect.bx - rect.ax) * i as f64 / gx as f64 };
                let y = if j == gy { rect.by } else { rect.ay + (rect.by - rect.ay) * j as f64 / gy as f64 };
                node_coords.push([x, y]);
                let mut s = 0;
                if j == 0 {
                    s |= BOTTOM;
                }
                if i == gx {
                    s |= RIGHT;
                }
                if j == gy {
                    s |= TOP;
                }
                if i == 0 {
                    s |= LEFT;
                }
                node_sides.push(s);
            }
        }

        let nloc = basis.len();
        let mut elem_nodes = Vec::with_capacity(mesh.num_elements() * nloc);
        for tri in &mesh.elements {
            let v: Vec<[i64; 2]> = tri
                .iter()
                .map(|&n| {
                    let (i, j) = mesh.grid_index(n);
                    [i as i64, j as i64]
                })
                .collect();
            for &[a, b] in basis.lattice() {
                let (a, b) = (a as i64, b as i64);
                let gi = k as i64 * v[0][0] + a * (v[1][0] - v[0][0]) + b * (v[2][0] - v[0][0]);
                let gj = k as i64 * v[0][1] + a * (v[1][1] - v[0][1]) + b * (v[2][1] - v[0][1]);
                elem_nodes.push(gj as usize * grid_width + gi as usize);
            }
        }

        Ok(Self {
            mesh,
            basis,
            components,
            grid_width,
            node_coords,
            node_sides,
            elem_nodes,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn basis(&self) -> &LagrangeBasis {
        &self.basis
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn num_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn num_dofs(&self) -> usize {
        self.components * self.num_nodes()
    }

    pub fn local_size(&self) -> usize {
        self.basis.len()
    }

    pub fn node_coords(&self) -> &[[f64; 2]] {
        &self.node_coords
    }

    pub fn grid_width(&self) -> usize {
        self.grid_width
    }

    /// Global node indices of element `e`, in local basis order.
    pub fn element_nodes(&self, e: usize) -> &[usize] {
        let n = self.local_size();
        &self.elem_nodes[e * n..(e + 1) * n]
    }

    pub fn dof(&self, component: usize, node: usize) -> usize {
        component * self.num_nodes() + node
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        self.node_sides[node] != 0
    }

    /// Rectangle sides a node lies on (two at corners).
    pub fn node_sides(&self, node: usize) -> Vec<Side> {
        let s = self.node_sides[node];
        [(BOTTOM, Side::Bottom), (RIGHT, Side::Right), (TOP, Side::Top), (LEFT, Side::Left)]
            .into_iter()
            .filter(|(bit, _)| s & bit != 0)
            .map(|(_, side)| side)
            .collect()
    }

    pub fn boundary_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_nodes()).filter(|&n| self.is_boundary_node(n))
    }
}

pub fn build_space(m: Arc<Mesh>, k: usize, components: usize) -> Result<DofMap> {
    DofMap::new(m, k, components)
}

/// Coefficient vector over a [`DofMap`].
#[derive(Debug, Clone)]
pub struct Field {
    pub space: Arc<DofMap>,
    pub coeffs: Vec<f64>,
}

impl Field {
    pub fn zeros(space: Arc<DofMap>) -> Self {
        let n = space.num_dofs();
        Self { space, coeffs: vec![0.0; n] }
    }

    pub fn from_coeffs(space: Arc<DofMap>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.num_dofs() {
            return Err(Error::DimensionMismatch {
                expected: space.num_dofs(),
                got: coeffs.len(),
            });
        }
        Ok(Self { space, coeffs })
    }

    pub fn components(&self) -> usize {
        self.space.components()
    }

    /// Value of component `c` at node `n`.
    pub fn nodal(&self, c: usize, n: usize) -> f64 {
        self.coeffs[self.space.dof(c, n)]
    }

    /// Local coefficients of component `c` on element `e`.
    pub fn local(&self, c: usize, e: usize, out: &mut [f64]) {
        for (o, &n) in out.iter_mut().zip(self.space.element_nodes(e)) {
            *o = self.coeffs[self.space.dof(c, n)];
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Plain-text dump: header line, then one coefficient per line.
    pub fn dump(&self) -> String {
        let mut s = String::with_capacity(self.coeffs.len() * 26 + 64);
        let _ = writeln!(
            s,
            "# field dofs={} degree={} components={}",
            self.coeffs.len(),
            self.space.degree(),
            self.components()
        );
        for v in &self.coeffs {
            let _ = writeln!(s, "{v:.17e}");
        }
        s
    }

    /// Parses one or more concatenated [`Field::dump`] blocks.
    pub fn parse_blocks(text: &str) -> Result<Vec<FieldBlock>> {
        let mut blocks: Vec<FieldBlock> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# field") {
                let mut header = BTreeMap::new();
                for kv in rest.split_whitespace() {
                    let (key, value) = kv
                        .split_once('=')
                        .ok_or_else(|| Error::Parse(format!("line {}: bad header token `{kv}`", lineno + 1)))?;
                    let value: usize = value
                        .parse()
                        .map_err(|_| Error::Parse(format!("line {}: bad header value `{kv}`", lineno + 1)))?;
                    header.insert(key.to_string(), value);
                }
                let get = |k: &str| {
                    header
                        .get(k)
                        .copied()
                        .ok_or_else(|| Error::Parse(format!("line {}: header missing `{k}`", lineno + 1)))
                };
                blocks.push(FieldBlock {
                    degree: get("degree")?,
                    components: get("components")?,
                    dofs: get("dofs")?,
                    coeffs: Vec::new(),
                });
                continue;
            }
            let block = blocks
                .last_mut()
                .ok_or_else(|| Error::Parse(format!("line {}: value before header", lineno + 1)))?;
            let v: f64 = line
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: not a number: `{line}`", lineno + 1)))?;
            block.coeffs.push(v);
        }
        for b in &blocks {
            if b.coeffs.len() != b.dofs {
                return Err(Error::Parse(format!("block declares {} dofs but has {}", b.dofs, b.coeffs.len())));
            }
        }
        Ok(blocks)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.dump())?;
        Ok(())
    }

    /// Reads a single field block, checking it matches `space`.
    pub fn load(space: Arc<DofMap>, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut blocks = Self::parse_blocks(&text)?;
        if blocks.len() != 1 {
            return Err(Error::Parse(format!("expected one field block, found {}", blocks.len())));
        }
        blocks.remove(0).into_field(space)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldBlock {
    pub degree: usize,
    pub components: usize,
    pub dofs: usize,
    pub coeffs: Vec<f64>,
}

impl FieldBlock {
    pub fn into_field(self, space: Arc<DofMap>) -> Result<Field> {
        if self.degree != space.degree() || self.components != space.components() {
            return Err(Error::Parse(format!(
                "field has degree {} / {} components, space has degree {} / {} components",
                self.degree,
                self.components,
                space.degree(),
                space.components()
            )));
        }
        Field::from_coeffs(space, self.coeffs)
    }
}

/// Evaluates `f` at every node; `f` writes one value per component.
pub fn interpolate(space: &Arc<DofMap>, f: impl Fn([f64; 2], &mut [f64])) -> Field {
    let mut field = Field::zeros(space.clone());
    let nc = space.components();
    let mut buf = vec![0.0; nc];
    for (n, &p) in space.node_coords().iter().enumerate() {
        f(p, &mut buf);
        for (c, v) in buf.iter().enumerate() {
            field.coeffs[space.dof(c, n)] = *v;
        }
    }
    field
}

pub fn interpolate_scalar(space: &Arc<DofMap>, f: impl Fn([f64; 2]) -> f64) -> Field {
    interpolate(space, |p, out| out[0] = f(p))
}

pub fn interpolate_tensor(space: &Arc<DofMap>, f: impl Fn([f64; 2]) -> Sym2) -> Field {
    interpolate(space, |p, out| {
        let s = f(p);
        out.copy_from_slice(&[s.a, s.b, s.c]);
    })
}

/// Prescribed `(dof, value)` pairs, sorted by dof.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintSet {
    entries: Vec<(usize, f64)>,
}

impl ConstraintSet {
    pub fn new(mut entries: Vec<(usize, f64)>) -> Result<Self> {
        entries.sort_by_key(|e| e.0);
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidInput(format!("duplicate constraint on dof {}", w[0].0)));
        }
        if let Some(e) = entries.iter().find(|e| !e.1.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite constraint value on dof {}", e.0)));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Same dofs, all values zero.
    pub fn homogeneous(&self) -> Self {
        Self {
            entries: self.entries.iter().map(|&(d, _)| (d, 0.0)).collect(),
        }
    }

    pub fn apply(&self, coeffs: &mut [f64]) {
        for &(d, v) in &self.entries {
            coeffs[d] = v;
        }
    }

    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &(d, _) in &self.entries {
            m[d] = true;
        }
        m
    }

    pub fn is_satisfied(&self, coeffs: &[f64], tol: f64) -> bool {
        self.entries.iter().all(|&(d, v)| (coeffs[d] - v).abs() <= tol)
    }
}

/// `u = g` at every boundary node.
pub fn constraints_u(space: &DofMap, g: impl Fn([f64; 2]) -> f64) -> Result<ConstraintSet> {
    if space.components() != 1 {
        return Err(Error::InvalidInput("constraints_u needs a scalar space".into()));
    }
    ConstraintSet::new(space.boundary_nodes().map(|n| (n, g(space.node_coords()[n]))).collect())
}

/// `σ ν·ν = h_nn` at every boundary node: `xx` on vertical sides, `yy` on
/// horizontal sides, both at corners. `xy` is never constrained.
pub fn constraints_sigma(space: &DofMap, h_nn: impl Fn([f64; 2], Side) -> f64) -> Result<ConstraintSet> {
    if space.components() != 3 {
        return Err(Error::InvalidInput("constraints_sigma needs a tensor space".into()));
    }
    let mut entries = Vec::new();
    for n in space.boundary_nodes() {
        let p = space.node_coords()[n];
        let sides = space.node_sides(n);
        // a corner touches one vertical and one horizontal side
        if let Some(&s) = sides.iter().find(|s| s.is_vertical()) {
            entries.push((space.dof(XX, n), h_nn(p, s)));
        }
        if let Some(&s) = sides.iter().find(|s| !s.is_vertical()) {
            entries.push((space.dof(YY, n), h_nn(p, s)));
        }
    }
    ConstraintSet::new(entries)
}
