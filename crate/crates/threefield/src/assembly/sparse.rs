//! Triplet-accumulated sparse matrix with a compressed (CSR) form.

use std::io::Write;
use std::path::Path;

use crate::error::Result;

#[derive(Debug, Clone, Default)]
struct Csr {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    triplets: Vec<(usize, usize, f64)>,
    compressed: Option<Csr>,
}

impl SparseMatrix {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        SparseMatrix {
            nrows,
            ncols,
            triplets: Vec::new(),
            compressed: None,
        }
    }

    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: Vec<(usize, usize, f64)>,
    ) -> Self {
        let mut m = SparseMatrix {
            nrows,
            ncols,
            triplets,
            compressed: None,
        };
        m.compress();
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.triplets.push((row, col, val));
        self.compressed = None;
    }

    /// Sorts the accumulator, sums duplicate entries and builds the CSR form.
    pub fn compress(&mut self) {
        let mut t = self.triplets.clone();
        t.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut dedup: Vec<(usize, usize, f64)> = Vec::with_capacity(t.len());
        for (r, c, v) in t {
            match dedup.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => dedup.push((r, c, v)),
            }
        }
        let mut row_ptr = vec![0usize; self.nrows + 1];
        for &(r, _, _) in &dedup {
            row_ptr[r + 1] += 1;
        }
        for r in 0..self.nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        self.compressed = Some(Csr {
            row_ptr,
            col_idx: dedup.iter().map(|&(_, c, _)| c).collect(),
            vals: dedup.iter().map(|&(_, _, v)| v).collect(),
        });
    }

    fn csr(&self) -> &Csr {
        self.compressed
            .as_ref()
            .expect("matrix must be compressed first")
    }

    pub fn is_compressed(&self) -> bool {
        self.compressed.is_some()
    }

    pub fn nnz(&self) -> usize {
        match &self.compressed {
            Some(c) => c.vals.len(),
            None => self.triplets.len(),
        }
    }

    /// Matrix-vector product; uses the compressed form when available.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        match &self.compressed {
            Some(_) => self.matvec_compressed(x),
            None => self.matvec_triplets(x),
        }
    }

    pub fn matvec_triplets(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for &(r, c, v) in &self.triplets {
            y[r] += v * x[c];
        }
        y
    }

    pub fn matvec_compressed(&self, x: &[f64]) -> Vec<f64> {
        let csr = self.csr();
        let mut y = vec![0.0; self.nrows];
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in csr.row_ptr[r]..csr.row_ptr[r + 1] {
                acc += csr.vals[k] * x[csr.col_idx[k]];
            }
            y[r] = acc;
        }
        y
    }

    pub fn transpose_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        match &self.compressed {
            Some(csr) => {
                for r in 0..self.nrows {
                    for k in csr.row_ptr[r]..csr.row_ptr[r + 1] {
                        y[csr.col_idx[k]] += csr.vals[k] * x[r];
                    }
                }
            }
            None => {
                for &(r, c, v) in &self.triplets {
                    y[c] += v * x[r];
                }
            }
        }
        y
    }

    /// Iterates compressed entries as `(row, col, value)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let csr = self.csr();
        (0..self.nrows).flat_map(move |r| {
            (csr.row_ptr[r]..csr.row_ptr[r + 1]).map(move |k| (r, csr.col_idx[k], csr.vals[k]))
        })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let csr = self.csr();
        for k in csr.row_ptr[row]..csr.row_ptr[row + 1] {
            if csr.col_idx[k] == col {
                return csr.vals[k];
            }
        }
        0.0
    }

    pub fn max_abs(&self) -> f64 {
        match &self.compressed {
            Some(c) => c.vals.iter().fold(0.0f64, |a, &v| a.max(v.abs())),
            None => self.triplets.iter().fold(0.0f64, |a, &(_, _, v)| a.max(v.abs())),
        }
    }

    /// Maximum absolute asymmetry `max |a_ij - a_ji|` (square matrices).
    pub fn symmetry_error(&self) -> f64 {
        assert_eq!(self.nrows, self.ncols);
        let mut err: f64 = 0.0;
        for (r, c, v) in self.entries() {
            err = err.max((v - self.get(c, r)).abs());
        }
        err
    }

    /// Writes the coordinate text format: a header line, then one
    /// `row col value` triple per line, 0-based.
    pub fn write_coordinate_text(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            out,
            "%%MatrixMarket-like: {} {} {}",
            self.nrows,
            self.ncols,
            self.nnz()
        )?;
        for (r, c, v) in self.entries() {
            writeln!(out, "{} {} {:.17e}", r, c, v)?;
        }
        Ok(())
    }
}
