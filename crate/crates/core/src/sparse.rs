//! Compressed-sparse-row operators with real matrix elements.
//!
//! Every operator this crate builds is real in the bit basis (spin flips
//! enter through `S+S- + S-S+`), so values are stored as `f64` and applied to
//! complex states. Row reductions are serial and in column order, which keeps
//! `apply` bitwise reproducible for any number of worker threads.

use std::collections::BTreeMap;

use faer::Mat;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::state::{check_dim, StateVector, C64};

const PAR_MIN_DIM: usize = 1 << 14;
const PAR_CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    hermitian: bool,
}

/// Accumulates matrix elements row by row; duplicates are summed.
#[derive(Debug, Clone)]
pub struct SparseBuilder {
    dim: usize,
    rows: Vec<Vec<(u32, f64)>>,
}

impl SparseBuilder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: vec![Vec::new(); dim],
        }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        self.rows[row].push((col as u32, value));
    }

    pub fn build(self, hermitian: bool) -> Result<SparseOperator> {
        let mut row_ptr = Vec::with_capacity(self.dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in self.rows {
            row.sort_by_key(|&(c, _)| c);
            let mut iter = row.into_iter().peekable();
            while let Some((c, mut v)) = iter.next() {
                if c as usize >= self.dim {
                    return Err(Error::Structural(format!(
                        "column index {c} out of range for dimension {}",
                        self.dim
                    )));
                }
                while let Some(&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                if v != 0.0 {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        let op = SparseOperator {
            dim: self.dim,
            row_ptr,
            cols,
            vals,
            hermitian,
        };
        if hermitian {
            let asym = op.max_asymmetry();
            if asym > 1e-12 {
                return Err(Error::Structural(format!(
                    "operator flagged hermitian but max |A - A^T| = {asym:.3e}"
                )));
            }
        }
        Ok(op)
    }
}

impl SparseOperator {
    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let dim = values.len();
        Self {
            dim,
            row_ptr: (0..=dim).collect(),
            cols: (0..dim as u32).collect(),
            vals: values.to_vec(),
            hermitian: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .zip(&self.vals[r])
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&(j as u32)) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal_values(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// Row offsets are nondecreasing and every column index is in range.
    pub fn is_well_formed(&self) -> bool {
        self.row_ptr.len() == self.dim + 1
            && self.row_ptr.windows(2).all(|w| w[0] <= w[1])
            && self.cols.iter().all(|&c| (c as usize) < self.dim)
    }

    /// `max |A_ij - A_ji|`; the elementwise Hermiticity residual for real storage.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Gershgorin bound on the spectral radius.
    pub fn spectral_bound(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Approximate `[E_min, E_max]` from a short Lanczos run, padded by 5% of
    /// the width and clipped to the Gershgorin bound.
    pub fn spectral_range_estimate(&self, iters: usize) -> (f64, f64) {
        let n = self.dim;
        let iters = iters.min(n).max(1);
        let mut rng = crate::rng::job_rng(0x5eed, 0);
        let mut v = StateVector::random(n, &mut rng).into_amplitudes();
        let mut v_prev = vec![C64::new(0.0, 0.0); n];
        let mut w = vec![C64::new(0.0, 0.0); n];
        let mut alphas = Vec::with_capacity(iters);
        let mut betas: Vec<f64> = Vec::with_capacity(iters);
        let mut beta = 0.0;
        for _ in 0..iters {
            self.apply_into(&v, &mut w);
            let a: f64 = v.iter().zip(&w).map(|(x, y)| (x.conj() * y).re).sum();
            for i in 0..n {
                w[i] -= v[i] * a + v_prev[i] * beta;
            }
            alphas.push(a);
            beta = w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
            betas.push(beta);
            if beta < 1e-12 {
                break;
            }
            for i in 0..n {
                v_prev[i] = v[i];
                v[i] = w[i] / beta;
            }
        }
        let k = alphas.len();
        let mut t = Mat::<f64>::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alphas[i];
            if i + 1 < k {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let ev = t
            .self_adjoint_eigenvalues(faer::Side::Lower)
            .unwrap_or_else(|_| vec![-self.spectral_bound(), self.spectral_bound()]);
        let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pad = 0.05 * (hi - lo) + 1e-3;
        let bound = self.spectral_bound();
        ((lo - pad).max(-bound), (hi + pad).min(bound))
    }

    /// `y = A x`
    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        self.apply_combined(None, 0.0, x, y);
    }

    /// `y = A x + s B x - shift x`, fused into one pass over the rows.
    pub fn apply_combined(&self, extra: Option<(&SparseOperator, f64)>, shift: f64, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        let kernel = |offset: usize, out: &mut [C64]| {
            for (k, yi) in out.iter_mut().enumerate() {
                let i = offset + k;
                let mut acc = C64::new(0.0, 0.0);
                for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                    acc += x[self.cols[p] as usize] * self.vals[p];
                }
                if let Some((b, s)) = extra {
                    let mut accb = C64::new(0.0, 0.0);
                    for p in b.row_ptr[i]..b.row_ptr[i + 1] {
                        accb += x[b.cols[p] as usize] * b.vals[p];
                    }
                    acc += accb * s;
                }
                if shift != 0.0 {
                    acc -= x[i] * shift;
                }
                *yi = acc;
            }
        };
        if self.dim >= PAR_MIN_DIM && rayon::current_num_threads() > 1 {
            y.par_chunks_mut(PAR_CHUNK)
                .enumerate()
                .for_each(|(c, out)| kernel(c * PAR_CHUNK, out));
        } else {
            kernel(0, y);
        }
    }

    /// `A |x>` as a new state.
    pub fn apply(&self, x: &StateVector) -> Result<StateVector> {
        check_dim(self.dim, x.dim())?;
        let mut y = StateVector::zeros(self.dim);
        self.apply_into(x.amplitudes(), y.amplitudes_mut());
        Ok(y)
    }

    /// `<x|A|x>`
    pub fn expectation(&self, x: &StateVector) -> Result<C64> {
        let ax = self.apply(x)?;
        x.inner(&ax)
    }

    /// Mean and standard deviation of the operator in state `x`.
    pub fn mean_and_std(&self, x: &StateVector) -> Result<(f64, f64)> {
        let ax = self.apply(x)?;
        let norm = x.norm_sqr();
        let mean = x.inner(&ax)?.re / norm;
        let second = ax.norm_sqr() / norm;
        Ok((mean, (second - mean * mean).max(0.0).sqrt()))
    }

    /// Sparse product `A B` as sorted rows.
    fn product_rows(&self, other: &SparseOperator) -> Vec<BTreeMap<usize, f64>> {
        (0..self.dim)
            .map(|i| {
                let mut row = BTreeMap::new();
                for (k, a) in self.row(i) {
                    for (j, b) in other.row(k) {
                        *row.entry(j).or_insert(0.0) += a * b;
                    }
                }
                row
            })
            .collect()
    }

    /// `max |(AB - BA)_ij|`
    pub fn commutator_residual(&self, other: &SparseOperator) -> Result<f64> {
        check_dim(self.dim, other.dim)?;
        let ab = self.product_rows(other);
        let ba = other.product_rows(self);
        let mut worst = 0.0f64;
        for (ra, rb) in ab.iter().zip(&ba) {
            for (j, v) in ra {
                worst = worst.max((v - rb.get(j).copied().unwrap_or(0.0)).abs());
            }
            for (j, v) in rb {
                if !ra.contains_key(j) {
                    worst = worst.max(v.abs());
                }
            }
        }
        Ok(worst)
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::<f64>::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Restriction to the rows and columns listed in `indices`.
    pub fn dense_block(&self, indices: &[usize], lookup: &dyn Fn(usize) -> Option<usize>) -> Mat<f64> {
        let k = indices.len();
        let mut m = Mat::<f64>::zeros(k, k);
        for (a, &i) in indices.iter().enumerate() {
            for (j, v) in self.row(i) {
                if let Some(b) = lookup(j) {
                    m[(a, b)] = v;
                }
            }
        }
        m
    }

    pub fn scaled(&self, factor: f64) -> SparseOperator {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= factor);
        out
    }
}
