//! Exact diagonalization, blocked by magnetization sector and site parity.

use faer::{Mat, Side};

use crate::basis::{BasisIndex, Magnetization, SitePermutation};
use crate::error::{Error, Result};
use crate::model::{build_static_hamiltonian_on, ModelSpec};
use crate::sparse::SparseOperator;
use crate::state::{check_dim, StateVector, C64};

/// Largest Hilbert-space dimension handled by dense diagonalization.
pub const EXACT_DIM_LIMIT: usize = 32768;

/// Which eigenvectors to keep after diagonalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VectorPolicy {
    None,
    All,
    /// Eigenvectors with `lo <= E <= hi`.
    Range {
        lo: f64,
        hi: f64,
    },
}

impl VectorPolicy {
    fn keeps(&self, e: f64) -> bool {
        match *self {
            VectorPolicy::None => false,
            VectorPolicy::All => true,
            VectorPolicy::Range { lo, hi } => e >= lo && e <= hi,
        }
    }
}

/// One magnetization sector of the host basis.
#[derive(Debug, Clone)]
pub struct SectorBlock {
    pub basis: BasisIndex,
    /// Host-basis index of each sector basis state.
    pub host_index: Vec<usize>,
    pub values: Vec<f64>,
    /// Parity (+1 / -1) of each eigenvalue, 0 without a symmetry.
    pub parity: Vec<i8>,
    /// Local eigenvalue index of each kept eigenvector column.
    pub kept: Vec<usize>,
    /// Eigenvectors in the sector basis, one column per entry of `kept`.
    pub vectors: Mat<f64>,
    column_of: Vec<Option<usize>>,
}

impl SectorBlock {
    pub fn dim(&self) -> usize {
        self.host_index.len()
    }

    pub fn sector(&self) -> Magnetization {
        self.basis.sector_label().expect("sector blocks carry a label")
    }

    /// Column of `vectors` holding local eigenvalue `local`, if kept.
    pub fn column(&self, local: usize) -> Option<usize> {
        self.column_of[local]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Level {
    pub energy: f64,
    pub block: usize,
    pub local: usize,
}

#[derive(Debug, Clone)]
pub struct Eigensystem {
    host_dim: usize,
    blocks: Vec<SectorBlock>,
    levels: Vec<Level>,
}

impl Eigensystem {
    /// Diagonalizes `H0` of `spec` on its basis (full space or the requested sector).
    pub fn compute(spec: &ModelSpec, policy: VectorPolicy) -> Result<Self> {
        let host = spec.basis()?;
        Self::compute_sectors(spec, &host, policy, None)
    }

    /// Like [`compute`](Self::compute) but only for the listed sectors of the full space.
    pub fn compute_sectors(
        spec: &ModelSpec,
        host: &BasisIndex,
        policy: VectorPolicy,
        only: Option<&[Magnetization]>,
    ) -> Result<Self> {
        let build = |b: &BasisIndex| build_static_hamiltonian_on(spec, b);
        Self::compute_with(host, only, spec.symmetry().as_ref(), &build, policy)
    }

    /// Diagonalizes the operator produced by `build` for each magnetization
    /// sector of `host` (or only the listed ones). `symmetry` must commute
    /// with the operator.
    pub fn compute_with(
        host: &BasisIndex,
        only: Option<&[Magnetization]>,
        symmetry: Option<&SitePermutation>,
        build: &dyn Fn(&BasisIndex) -> Result<SparseOperator>,
        policy: VectorPolicy,
    ) -> Result<Self> {
        if host.dim() > EXACT_DIM_LIMIT {
            return Err(Error::DimensionGuard {
                dim: host.dim(),
                limit: EXACT_DIM_LIMIT,
                hint: "use the typicality path (Gaussian filter states, Fourier spectra)",
            });
        }
        let n = host.n_spins();
        let sectors: Vec<Magnetization> = match (host.sector_label(), only) {
            (Some(m), _) => vec![m],
            (None, Some(list)) => list.to_vec(),
            (None, None) => (0..=n).map(|up| Magnetization::with_n_up(n, up)).collect(),
        };
        let mut blocks = Vec::with_capacity(sectors.len());
        for m in sectors {
            let basis = BasisIndex::sector(n, m)?;
            let host_index = (0..basis.dim())
                .map(|k| {
                    host.index_of(basis.config(k))
                        .ok_or_else(|| Error::Structural("sector state missing from host basis".into()))
                })
                .collect::<Result<Vec<_>>>()?;
            let h = build(&basis)?;
            blocks.push(diagonalize_sector(&h, basis, host_index, symmetry, policy)?);
        }
        let mut levels: Vec<Level> = blocks
            .iter()
            .enumerate()
            .flat_map(|(b, blk)| {
                blk.values.iter().enumerate().map(move |(local, &energy)| Level {
                    energy,
                    block: b,
                    local,
                })
            })
            .collect();
        levels.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.block.cmp(&b.block)));
        Ok(Self {
            host_dim: host.dim(),
            blocks,
            levels,
        })
    }

    pub fn host_dim(&self) -> usize {
        self.host_dim
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn blocks(&self) -> &[SectorBlock] {
        &self.blocks
    }

    pub fn energy(&self, n: usize) -> f64 {
        self.levels[n].energy
    }

    pub fn values(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.energy).collect()
    }

    /// Global level indices with `lo <= E < hi`.
    pub fn indices_in(&self, lo: f64, hi: f64) -> Vec<usize> {
        let start = self.levels.partition_point(|l| l.energy < lo);
        let end = self.levels.partition_point(|l| l.energy < hi);
        (start..end.max(start)).collect()
    }

    pub fn nearest(&self, e: f64) -> f64 {
        self.levels
            .iter()
            .map(|l| l.energy)
            .min_by(|a, b| (a - e).abs().total_cmp(&(b - e).abs()))
            .unwrap_or(f64::NAN)
    }

    pub fn has_vector(&self, n: usize) -> bool {
        let l = self.levels[n];
        self.blocks[l.block].column(l.local).is_some()
    }

    /// Eigenvector of level `n` embedded in the host basis.
    pub fn vector(&self, n: usize) -> Result<StateVector> {
        let l = self.levels[n];
        let blk = &self.blocks[l.block];
        let col = blk
            .column(l.local)
            .ok_or_else(|| Error::param("level", format!("eigenvector {n} (E = {}) was not kept", l.energy)))?;
        let mut out = StateVector::zeros(self.host_dim);
        let amps = out.amplitudes_mut();
        for (k, &h) in blk.host_index.iter().enumerate() {
            amps[h] = C64::new(blk.vectors[(k, col)], 0.0);
        }
        Ok(out)
    }

    /// `sum_n c_n |E_n>` over levels with kept eigenvectors, in the host basis.
    pub fn combination(&self, coeffs: &[(usize, C64)]) -> Result<StateVector> {
        let mut out = StateVector::zeros(self.host_dim);
        let amps = out.amplitudes_mut();
        for &(n, c) in coeffs {
            let l = self.levels[n];
            let blk = &self.blocks[l.block];
            let col = blk
                .column(l.local)
                .ok_or_else(|| Error::param("level", format!("eigenvector {n} (E = {}) was not kept", l.energy)))?;
            for (k, &h) in blk.host_index.iter().enumerate() {
                amps[h] += c * blk.vectors[(k, col)];
            }
        }
        Ok(out)
    }

    /// `|<E_n|psi>|^2` for every level with a kept eigenvector; `None` elsewhere.
    pub fn populations(&self, psi: &StateVector) -> Result<Vec<Option<f64>>> {
        check_dim(self.host_dim, psi.dim())?;
        let mut per_block: Vec<Vec<f64>> = Vec::with_capacity(self.blocks.len());
        for blk in &self.blocks {
            let d = blk.dim();
            let mut re = Mat::<f64>::zeros(d, 2);
            for (k, &h) in blk.host_index.iter().enumerate() {
                let a = psi.amplitudes()[h];
                re[(k, 0)] = a.re;
                re[(k, 1)] = a.im;
            }
            let proj = blk.vectors.transpose() * &re;
            per_block.push(
                (0..blk.kept.len())
                    .map(|c| proj[(c, 0)].powi(2) + proj[(c, 1)].powi(2))
                    .collect(),
            );
        }
        Ok(self
            .levels
            .iter()
            .map(|l| self.blocks[l.block].column(l.local).map(|c| per_block[l.block][c]))
            .collect())
    }

    /// `<E_n|O|E_n>` for a diagonal host-basis operator, per level with a kept vector.
    pub fn diagonal_expectations(&self, diag: &[f64]) -> Result<Vec<Option<f64>>> {
        check_dim(self.host_dim, diag.len())?;
        Ok(self
            .levels
            .iter()
            .map(|l| {
                let blk = &self.blocks[l.block];
                blk.column(l.local).map(|c| {
                    blk.host_index
                        .iter()
                        .enumerate()
                        .map(|(k, &h)| blk.vectors[(k, c)].powi(2) * diag[h])
                        .sum()
                })
            })
            .collect())
    }
}

/// Eigen-decomposition of a dense real symmetric matrix, ascending eigenvalues.
pub fn dense_symmetric_eigen(m: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let eig = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = eig.S().column_vector();
    let values = (0..m.nrows()).map(|i| s[i]).collect();
    Ok((values, eig.U().to_owned()))
}

pub fn dense_symmetric_eigenvalues(m: &Mat<f64>) -> Result<Vec<f64>> {
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))
}

/// Symmetric (`+`) and antisymmetric (`-`) combinations of a sector's basis states.
struct ParityBasis {
    // per parity: list of (sector index, coefficient) pairs per symmetrized vector
    plus: Vec<[(usize, f64); 2]>,
    minus: Vec<[(usize, f64); 2]>,
    // sector index -> (slot in plus, coeff) and optionally (slot in minus, coeff)
    plus_of: Vec<(usize, f64)>,
    minus_of: Vec<Option<(usize, f64)>>,
}

fn parity_basis(basis: &BasisIndex, p: &SitePermutation) -> Result<ParityBasis> {
    let d = basis.dim();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut pb = ParityBasis {
        plus: Vec::new(),
        minus: Vec::new(),
        plus_of: vec![(usize::MAX, 0.0); d],
        minus_of: vec![None; d],
    };
    for k in 0..d {
        let c = basis.config(k);
        let pk = basis
            .index_of(p.apply(c))
            .ok_or_else(|| Error::Structural("symmetry leaves the sector".into()))?;
        if pk == k {
            pb.plus_of[k] = (pb.plus.len(), 1.0);
            pb.plus.push([(k, 1.0), (k, 0.0)]);
        } else if k < pk {
            pb.plus_of[k] = (pb.plus.len(), r);
            pb.plus_of[pk] = (pb.plus.len(), r);
            pb.plus.push([(k, r), (pk, r)]);
            pb.minus_of[k] = Some((pb.minus.len(), r));
            pb.minus_of[pk] = Some((pb.minus.len(), -r));
            pb.minus.push([(k, r), (pk, -r)]);
        }
    }
    Ok(pb)
}

fn diagonalize_sector(
    h: &SparseOperator,
    basis: BasisIndex,
    host_index: Vec<usize>,
    symmetry: Option<&SitePermutation>,
    policy: VectorPolicy,
) -> Result<SectorBlock> {
    let d = basis.dim();
    // (eigenvalue, parity, vector in sector basis or None)
    let mut eig: Vec<(f64, i8, Option<Vec<f64>>)> = Vec::with_capacity(d);

    match symmetry {
        Some(p) => {
            let pb = parity_basis(&basis, p)?;
            for (sign, vecs) in [(1i8, &pb.plus), (-1i8, &pb.minus)] {
                let m = vecs.len();
                if m == 0 {
                    continue;
                }
                let mut block = Mat::<f64>::zeros(m, m);
                for (b, sv) in vecs.iter().enumerate() {
                    for &(j, cj) in sv.iter().filter(|e| e.1 != 0.0) {
                        for (k, hkj) in h.row(j) {
                            let slot = if sign > 0 { Some(pb.plus_of[k]) } else { pb.minus_of[k] };
                            if let Some((a, ck)) = slot {
                                block[(a, b)] += ck * hkj * cj;
                            }
                        }
                    }
                }
                let want_vectors = policy != VectorPolicy::None;
                if want_vectors {
                    let (vals, q) = dense_symmetric_eigen(&block)?;
                    for (n, &e) in vals.iter().enumerate() {
                        let v = policy.keeps(e).then(|| {
                            let mut full = vec![0.0; d];
                            for (a, sv) in vecs.iter().enumerate() {
                                for &(k, c) in sv.iter().filter(|e| e.1 != 0.0) {
                                    full[k] += c * q[(a, n)];
                                }
                            }
                            full
                        });
                        eig.push((e, sign, v));
                    }
                } else {
                    for e in dense_symmetric_eigenvalues(&block)? {
                        eig.push((e, sign, None));
                    }
                }
            }
        }
        None => {
            let dense = h.to_dense();
            if policy == VectorPolicy::None {
                for e in dense_symmetric_eigenvalues(&dense)? {
                    eig.push((e, 0, None));
                }
            } else {
                let (vals, q) = dense_symmetric_eigen(&dense)?;
                for (n, &e) in vals.iter().enumerate() {
                    let v = policy.keeps(e).then(|| (0..d).map(|k| q[(k, n)]).collect());
                    eig.push((e, 0, v));
                }
            }
        }
    }

    eig.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    let kept: Vec<usize> = eig
        .iter()
        .enumerate()
        .filter(|(_, e)| e.2.is_some())
        .map(|(i, _)| i)
        .collect();
    let mut column_of = vec![None; eig.len()];
    let mut vectors = Mat::<f64>::zeros(d, kept.len());
    for (c, &i) in kept.iter().enumerate() {
        column_of[i] = Some(c);
        let v = eig[i].2.as_ref().expect("kept vectors exist");
        for k in 0..d {
            vectors[(k, c)] = v[k];
        }
    }
    Ok(SectorBlock {
        basis,
        host_index,
        values: eig.iter().map(|e| e.0).collect(),
        parity: eig.iter().map(|e| e.1).collect(),
        kept,
        vectors,
        column_of,
    })
}
