//! Sparse matrices and a direct LU solver for the Newton systems.

use std::fmt::Write as _;

use faer::prelude::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};

/// Residual gate for every solve: `‖Ax - b‖∞ / (1 + ‖b‖∞)`.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-8;

/// Coordinate-format entries; duplicates are summed on conversion.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_entries(nrows: usize, ncols: usize, entries: Vec<(usize, usize, f64)>) -> Self {
        Self { nrows, ncols, entries }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        self.entries.push((row, col, value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends `scale * other` shifted by `(row_offset, col_offset)`, keeping
    /// only entries whose shifted row passes `keep_row`.
    pub fn add_block(
        &mut self,
        other: &Triplets,
        row_offset: usize,
        col_offset: usize,
        scale: f64,
        keep_row: impl Fn(usize) -> bool,
    ) {
        self.entries.extend(
            other
                .entries
                .iter()
                .map(|&(r, c, v)| (r + row_offset, c + col_offset, scale * v))
                .filter(|&(r, _, _)| keep_row(r)),
        );
    }

    pub fn transpose(&self) -> Triplets {
        Triplets {
            nrows: self.ncols,
            ncols: self.nrows,
            entries: self.entries.iter().map(|&(r, c, v)| (c, r, v)).collect(),
        }
    }

    pub fn to_csr(&self) -> Result<CsrMatrix> {
        to_csr(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

/// Sums duplicates in a canonical order so the result does not depend on
/// the order of `t.entries`.
pub fn to_csr(t: &Triplets) -> Result<CsrMatrix> {
    if let Some(&(row, col, _)) = t.entries.iter().find(|&&(r, c, _)| r >= t.nrows || c >= t.ncols) {
        return Err(Error::IndexOutOfRange {
            row,
            col,
            nrows: t.nrows,
            ncols: t.ncols,
        });
    }
    let mut sorted = t.entries.clone();
    sorted.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.total_cmp(&b.2)));

    let mut indptr = vec![0usize; t.nrows + 1];
    let mut indices = Vec::with_capacity(sorted.len());
    let mut data: Vec<f64> = Vec::with_capacity(sorted.len());
    let mut last: Option<(usize, usize)> = None;
    for (r, c, v) in sorted {
        if last == Some((r, c)) {
            *data.last_mut().unwrap() += v;
        } else {
            indices.push(c);
            data.push(v);
            indptr[r + 1] += 1;
            last = Some((r, c));
        }
    }
    for r in 0..t.nrows {
        indptr[r + 1] += indptr[r];
    }
    Ok(CsrMatrix {
        nrows: t.nrows,
        ncols: t.ncols,
        indptr,
        indices,
        data,
    })
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: vec![1.0; n],
        }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[r]..self.indptr[r + 1];
        self.indices[range.clone()].iter().copied().zip(self.data[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.indptr[r]..self.indptr[r + 1];
        match self.indices[range.clone()].binary_search(&c) {
            Ok(i) => self.data[range.start + i],
            Err(_) => 0.0,
        }
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ncols {
            return Err(Error::DimensionMismatch {
                expected: self.ncols,
                got: x.len(),
            });
        }
        Ok((0..self.nrows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()).collect())
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] += v;
            }
        }
        d
    }

    /// `row col value` per line.
    pub fn dump_coo(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {} {} {}", self.nrows, self.ncols, self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                let _ = writeln!(s, "{r} {c} {v:.17e}");
            }
        }
        s
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.nrows == self.ncols && (0..self.nrows).all(|r| self.row(r).all(|(c, v)| (v - self.get(c, r)).abs() <= tol))
    }
}

pub fn spmv(a: &CsrMatrix, x: &[f64]) -> Result<Vec<f64>> {
    a.spmv(x)
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Sparse LU factors of a square matrix, reusable across right-hand sides.
pub struct Factorization {
    matrix: CsrMatrix,
    lu: Lu<usize, f64>,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Factorization").field("n", &self.matrix.nrows).field("nnz", &self.matrix.nnz()).finish()
    }
}

impl Factorization {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::DimensionMismatch {
                expected: a.nrows,
                got: a.ncols,
            });
        }
        if let Some(v) = a.data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("matrix contains non-finite entry {v}")));
        }
        // sequential kernels keep results bitwise reproducible
        faer::set_global_parallelism(faer::Par::Seq);
        let mut entries = Vec::with_capacity(a.nnz());
        for r in 0..a.nrows {
            entries.extend(a.row(r).map(|(c, v)| Triplet::new(r, c, v)));
        }
        let sp = SparseColMat::<usize, f64>::try_new_from_triplets(a.nrows, a.ncols, &entries)
            .map_err(|e| Error::InvalidInput(format!("sparse matrix build failed: {e:?}")))?;
        // faer panics on an exactly zero pivot instead of returning an error
        let lu = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| sp.sp_lu()))
            .map_err(|_| Error::Singular("zero pivot".into()))?
            .map_err(|e| Error::Singular(format!("{e:?}")))?;
        Ok(Self { matrix: a.clone(), lu })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows
    }

    fn raw_solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        (0..b.len()).map(|i| x[(i, 0)]).collect()
    }

    /// Solves `A x = b`; applies one step of iterative refinement when the
    /// first residual misses the gate, then reports singularity if it still does.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: b.len() });
        }
        let scale = 1.0 + inf_norm(b);
        let residual = |x: &[f64]| -> Result<Vec<f64>> {
            let ax = self.matrix.spmv(x)?;
            Ok(b.iter().zip(ax).map(|(bi, ai)| bi - ai).collect())
        };
        let mut x = self.raw_solve(b);
        if x.iter().all(|v| v.is_finite()) {
            let r = residual(&x)?;
            if inf_norm(&r) / scale <= SOLVE_RESIDUAL_TOL {
                return Ok(x);
            }
            let dx = self.raw_solve(&r);
            x.iter_mut().zip(dx).for_each(|(xi, d)| *xi += d);
            if x.iter().all(|v| v.is_finite()) {
                let rel = inf_norm(&residual(&x)?) / scale;
                if rel <= SOLVE_RESIDUAL_TOL {
                    return Ok(x);
                }
                return Err(Error::Singular(format!("relative residual {rel:.3e} after refinement")));
            }
        }
        Err(Error::Singular("non-finite solution".into()))
    }
}

pub fn lu_solve(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    Factorization::new(a)?.solve(b)
}
