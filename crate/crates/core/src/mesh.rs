//! Structured triangulations of axis-aligned rectangles.
//!
//! Every grid cell is split into two right triangles along one of its
//! diagonals. Nodes are numbered lexicographically, `j * (nx + 1) + i`.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub ax: f64,
    pub bx: f64,
    pub ay: f64,
    pub by: f64,
}

impl Rect {
    pub fn new(ax: f64, bx: f64, ay: f64, by: f64) -> Self {
        Self { ax, bx, ay, by }
    }

    pub fn unit_square() -> Self {
        Self::new(0.0, 1.0, 0.0, 1.0)
    }

    pub fn area(&self) -> f64 {
        (self.bx - self.ax) * (self.by - self.ay)
    }

    fn validate(&self) -> Result<()> {
        let finite = [self.ax, self.bx, self.ay, self.by].iter().all(|v| v.is_finite());
        if !finite || self.bx <= self.ax || self.by <= self.ay {
            return Err(Error::InvalidInput(format!(
                "rectangle [{}, {}] x [{}, {}] has non-positive extent",
                self.ax, self.bx, self.ay, self.by
            )));
        }
        Ok(())
    }
}

/// Which diagonal splits each grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiagonalPattern {
    /// Lower-left to upper-right.
    #[default]
    Slash,
    /// Lower-right to upper-left.
    Backslash,
    /// Checkerboard of `/` and `\` cells.
    Alternating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

    /// Outward unit normal of the side.
    pub fn normal(self) -> [f64; 2] {
        match self {
            Side::Bottom => [0.0, -1.0],
            Side::Right => [1.0, 0.0],
            Side::Top => [0.0, 1.0],
            Side::Left => [-1.0, 0.0],
        }
    }

    /// Unit tangent `(-ν_y, ν_x)`; traverses the boundary counterclockwise.
    pub fn tangent(self) -> [f64; 2] {
        let n = self.normal();
        [-n[1], n[0]]
    }

    /// Left and right sides carry a horizontal normal.
    pub fn is_vertical(self) -> bool {
        matches!(self, Side::Left | Side::Right)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    pub endpoints: [usize; 2],
    pub element: usize,
    pub normal: [f64; 2],
    pub tangent: [f64; 2],
    pub side: Side,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub rect: Rect,
    pub nx: usize,
    pub ny: usize,
    pub pattern: DiagonalPattern,
    pub nodes: Vec<[f64; 2]>,
    /// Counterclockwise vertex triples.
    pub elements: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
}

/// Affine map from the reference triangle `{(0,0), (1,0), (0,1)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub origin: [f64; 2],
    /// Columns are `v1 - v0` and `v2 - v0`; stored row-major.
    pub jacobian: [[f64; 2]; 2],
    pub det: f64,
    pub inv_transpose: [[f64; 2]; 2],
}

impl ElementGeometry {
    pub fn from_vertices(v: [[f64; 2]; 3]) -> Result<Self> {
        let jacobian = [
            [v[1][0] - v[0][0], v[2][0] - v[0][0]],
            [v[1][1] - v[0][1], v[2][1] - v[0][1]],
        ];
        let det = jacobian[0][0] * jacobian[1][1] - jacobian[0][1] * jacobian[1][0];
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::DegenerateElement(det));
        }
        // inverse of J is [[d, -b], [-c, a]] / det; transpose it
        let inv_transpose = [
            [jacobian[1][1] / det, -jacobian[1][0] / det],
            [-jacobian[0][1] / det, jacobian[0][0] / det],
        ];
        Ok(Self {
            origin: v[0],
            jacobian,
            det,
            inv_transpose,
        })
    }

    pub fn map(&self, xi: [f64; 2]) -> [f64; 2] {
        let j = &self.jacobian;
        [
            self.origin[0] + j[0][0] * xi[0] + j[0][1] * xi[1],
            self.origin[1] + j[1][0] * xi[0] + j[1][1] * xi[1],
        ]
    }

    /// Reference coordinates of a physical point.
    pub fn inverse_map(&self, p: [f64; 2]) -> [f64; 2] {
        let d = [p[0] - self.origin[0], p[1] - self.origin[1]];
        // J^{-1} = (J^{-T})^T
        let it = &self.inv_transpose;
        [it[0][0] * d[0] + it[1][0] * d[1], it[0][1] * d[0] + it[1][1] * d[1]]
    }

    /// Maps a reference gradient to a physical one.
    pub fn push_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        let it = &self.inv_transpose;
        [it[0][0] * g[0] + it[0][1] * g[1], it[1][0] * g[0] + it[1][1] * g[1]]
    }

    pub fn area(&self) -> f64 {
        0.5 * self.det
    }
}

pub fn build_rect_mesh(rect: Rect, nx: usize, ny: usize, pattern: DiagonalPattern) -> Result<Mesh> {
    rect.validate()?;
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidInput(format!("subdivisions must be positive, got nx={nx}, ny={ny}")));
    }

    let hx = (rect.bx - rect.ax) / nx as f64;
    let hy = (rect.by - rect.ay) / ny as f64;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            // pin the far sides exactly to the rectangle
            let x = if i == nx { rect.bx } else { rect.ax + i as f64 * hx };
            let y = if j == ny { rect.by } else { rect.ay + j as f64 * hy };
            nodes.push([x, y]);
        }
    }

    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut elements = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (p00, p10, p01, p11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            let slash = match pattern {
                DiagonalPattern::Slash => true,
                DiagonalPattern::Backslash => false,
                DiagonalPattern::Alternating => (i + j) % 2 == 0,
            };
            if slash {
                elements.push([p00, p10, p11]);
                elements.push([p00, p11, p01]);
            } else {
                elements.push([p00, p10, p01]);
                elements.push([p10, p11, p01]);
            }
        }
    }

    let boundary_edges = find_boundary_edges(&nodes, &elements, &rect, nx, ny);
    Ok(Mesh {
        rect,
        nx,
        ny,
        pattern,
        nodes,
        elements,
        boundary_edges,
    })
}

fn find_boundary_edges(nodes: &[[f64; 2]], elements: &[[usize; 3]], rect: &Rect, nx: usize, ny: usize) -> Vec<BoundaryEdge> {
    let mut owners: HashMap<(usize, usize), Vec<(usize, [usize; 2])>> = HashMap::new();
    for (e, tri) in elements.iter().enumerate() {
        for l in 0..3 {
            let (a, b) = (tri[l], tri[(l + 1) % 3]);
            owners.entry((a.min(b), a.max(b))).or_default().push((e, [a, b]));
        }
    }

    let side_of = |a: usize, b: usize| -> Option<Side> {
        let (pa, pb) = (nodes[a], nodes[b]);
        if pa[1] == rect.ay && pb[1] == rect.ay {
            Some(Side::Bottom)
        } else if pa[0] == rect.bx && pb[0] == rect.bx {
            Some(Side::Right)
        } else if pa[1] == rect.by && pb[1] == rect.by {
            Some(Side::Top)
        } else if pa[0] == rect.ax && pb[0] == rect.ax {
            Some(Side::Left)
        } else {
            None
        }
    };

    let mut edges: Vec<BoundaryEdge> = owners
        .into_iter()
        .filter(|(_, v)| v.len() == 1)
        .map(|(_, v)| {
            let (element, endpoints) = v[0];
            let side = side_of(endpoints[0], endpoints[1]).expect("boundary edge off the rectangle sides");
            BoundaryEdge {
                endpoints,
                element,
                normal: side.normal(),
                tangent: side.tangent(),
                side,
            }
        })
        .collect();

    // order along the boundary: side, then position along the side
    edges.sort_by(|a, b| {
        let key = |e: &BoundaryEdge| {
            let m = e.endpoints[0].min(e.endpoints[1]);
            (e.side, m)
        };
        key(a).cmp(&key(b))
    });
    debug_assert_eq!(edges.len(), 2 * (nx + ny));
    edges
}

impl Mesh {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn vertices(&self, e: usize) -> [[f64; 2]; 3] {
        let t = self.elements[e];
        [self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]]]
    }

    /// Grid indices `(i, j)` of a mesh node.
    pub fn grid_index(&self, node: usize) -> (usize, usize) {
        (node % (self.nx + 1), node / (self.nx + 1))
    }

    pub fn element_geometry(&self, e: usize) -> Result<ElementGeometry> {
        if e >= self.elements.len() {
            return Err(Error::InvalidInput(format!("element index {e} out of range")));
        }
        ElementGeometry::from_vertices(self.vertices(e))
    }

    pub fn centroid(&self, e: usize) -> [f64; 2] {
        let v = self.vertices(e);
        [(v[0][0] + v[1][0] + v[2][0]) / 3.0, (v[0][1] + v[1][1] + v[2][1]) / 3.0]
    }

    /// Maximum element diameter.
    pub fn mesh_size(&self) -> f64 {
        (0..self.num_elements())
            .map(|e| {
                let v = self.vertices(e);
                (0..3)
                    .map(|l| {
                        let (a, b) = (v[l], v[(l + 1) % 3]);
                        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
                    })
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Grid spacing along x, `(bx - ax) / nx`.
    pub fn grid_spacing(&self) -> f64 {
        (self.rect.bx - self.rect.ax) / self.nx as f64
    }

    /// Plain-text listing: a header line, one node per line, then one element per line.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# nodes {} elements {}", self.num_nodes(), self.num_elements());
        for (i, p) in self.nodes.iter().enumerate() {
            let _ = writeln!(s, "node {i} {:.17e} {:.17e}", p[0], p[1]);
        }
        for (e, t) in self.elements.iter().enumerate() {
            let _ = writeln!(s, "element {e} {} {} {}", t[0], t[1], t[2]);
        }
        s
    }
}

pub fn mesh_size(m: &Mesh) -> f64 {
    m.mesh_size()
}

pub fn element_geometry(m: &Mesh, e: usize) -> Result<ElementGeometry> {
    m.element_geometry(e)
}
