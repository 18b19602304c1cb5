//! Spin ladder and spin chain Hamiltonians in the bit basis.
//!
//! Ladder site `(i, r)` (1-based rung `i`, leg `r`) is bit `2(i-1) + (r-1)`;
//! the system spin is the highest bit. For the chain, bath site `i` is bit
//! `i-1` and the system spin sits at bit `L`, extending the chain by one site.
//! Boundaries are open.

use crate::basis::{BasisIndex, Magnetization, SitePermutation};
use crate::error::{Error, Result};
use crate::sparse::{SparseBuilder, SparseOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Topology {
    Ladder,
    Chain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    SzSys,
    MTotal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub topology: Topology,
    /// Spins per leg (ladder) or bath chain length.
    pub l: u32,
    pub j: f64,
    /// System-bath coupling. The chain uses 1.
    pub kappa: f64,
    /// Static field on the system spin.
    pub b: f64,
    pub sector: Option<Magnetization>,
}

/// Isotropic Heisenberg coupling `c S_a . S_b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bond {
    pub a: u32,
    pub b: u32,
    pub c: f64,
}

impl ModelSpec {
    pub const DEFAULT_FIELD: f64 = 0.5;

    /// Ladder with `l` rungs plus the system spin, `J = 1`, `B = 0.5`.
    /// `l = 0` leaves the isolated system spin in its field.
    pub fn ladder(l: u32, kappa: f64) -> Self {
        Self {
            topology: Topology::Ladder,
            l,
            j: 1.0,
            kappa,
            b: Self::DEFAULT_FIELD,
            sector: None,
        }
    }

    /// Uniform open chain of `l` bath sites plus the system spin, no field.
    pub fn chain(l: u32) -> Self {
        Self {
            topology: Topology::Chain,
            l,
            j: 1.0,
            kappa: 1.0,
            b: 0.0,
            sector: None,
        }
    }

    pub fn with_field(mut self, b: f64) -> Self {
        self.b = b;
        self
    }

    pub fn with_sector(mut self, sector: Option<Magnetization>) -> Self {
        self.sector = sector;
        self
    }

    pub fn n_spins(&self) -> u32 {
        match self.topology {
            Topology::Ladder => 2 * self.l + 1,
            Topology::Chain => self.l + 1,
        }
    }

    pub fn sys_bit(&self) -> u32 {
        self.n_spins() - 1
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("J", self.j), ("kappa", self.kappa), ("B", self.b)] {
            if !v.is_finite() {
                return Err(Error::param(name, format!("must be finite, got {v}")));
            }
        }
        if self.topology == Topology::Chain && self.l == 0 {
            return Err(Error::param("L", "chain needs at least one bath site"));
        }
        if self.n_spins() > crate::basis::MAX_SPINS {
            return Err(Error::param(
                "L",
                format!("{} spins exceed the supported maximum", self.n_spins()),
            ));
        }
        if let Some(m) = self.sector {
            if m.n_up(self.n_spins()).is_none() {
                return Err(Error::param(
                    "sector",
                    format!(
                        "M_tot = {} is not attainable with N = {} spins",
                        m.value(),
                        self.n_spins()
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn basis(&self) -> Result<BasisIndex> {
        self.validate()?;
        BasisIndex::new(self.n_spins(), self.sector)
    }

    /// Bath bonds only (`H'`), with sites numbered as in the full model.
    pub fn bath_bonds(&self) -> Vec<Bond> {
        let j = self.j;
        let mut bonds = Vec::new();
        match self.topology {
            Topology::Ladder => {
                let site = |i: u32, r: u32| 2 * (i - 1) + (r - 1);
                for r in 1..=2 {
                    for i in 1..self.l {
                        bonds.push(Bond {
                            a: site(i, r),
                            b: site(i + 1, r),
                            c: j,
                        });
                    }
                }
                for i in 1..=self.l {
                    bonds.push(Bond {
                        a: site(i, 1),
                        b: site(i, 2),
                        c: j,
                    });
                }
            }
            Topology::Chain => {
                for i in 0..self.l.saturating_sub(1) {
                    bonds.push(Bond { a: i, b: i + 1, c: j });
                }
            }
        }
        bonds
    }

    /// System-bath bonds (`kappa H''`).
    pub fn coupling_bonds(&self) -> Vec<Bond> {
        let sys = self.sys_bit();
        let c = self.kappa * self.j;
        match self.topology {
            Topology::Ladder if self.l > 0 => {
                let last = 2 * (self.l - 1);
                vec![Bond { a: last, b: sys, c }, Bond { a: last + 1, b: sys, c }]
            }
            Topology::Ladder => Vec::new(),
            Topology::Chain => vec![Bond {
                a: self.l - 1,
                b: sys,
                c,
            }],
        }
    }

    /// A site permutation commuting with `H0` and the total magnetization,
    /// if the model has one: the leg exchange of the ladder, the reflection
    /// of a uniform field-free chain.
    pub fn symmetry(&self) -> Option<SitePermutation> {
        let n = self.n_spins();
        match self.topology {
            Topology::Ladder if self.l > 0 => {
                let mut image: Vec<u32> = (0..n).collect();
                for i in 0..self.l {
                    image.swap(2 * i as usize, 2 * i as usize + 1);
                }
                SitePermutation::new(image).ok()
            }
            Topology::Chain if self.kappa == 1.0 && self.b == 0.0 && n > 1 => {
                SitePermutation::new((0..n).rev().collect()).ok()
            }
            _ => None,
        }
    }

    /// Symmetry of the isolated bath `H'` on its `N - 1` spins.
    pub fn bath_symmetry(&self) -> Option<SitePermutation> {
        let n = self.n_spins() - 1;
        if n < 2 {
            return None;
        }
        match self.topology {
            Topology::Ladder => {
                let mut image: Vec<u32> = (0..n).collect();
                for i in 0..self.l {
                    image.swap(2 * i as usize, 2 * i as usize + 1);
                }
                SitePermutation::new(image).ok()
            }
            Topology::Chain => SitePermutation::new((0..n).rev().collect()).ok(),
        }
    }
}

/// `H'` on a basis of the `N - 1` bath spins.
pub fn build_bath_hamiltonian_on(spec: &ModelSpec, basis: &BasisIndex) -> Result<SparseOperator> {
    if basis.n_spins() + 1 != spec.n_spins() {
        return Err(Error::DimensionMismatch {
            expected: spec.n_spins() as usize - 1,
            got: basis.n_spins() as usize,
        });
    }
    heisenberg_operator(basis, &spec.bath_bonds(), &[])
}

/// `sum c S_a . S_b + sum h_k S^z_k` on `basis`.
pub fn heisenberg_operator(basis: &BasisIndex, bonds: &[Bond], fields: &[(u32, f64)]) -> Result<SparseOperator> {
    let dim = basis.dim();
    let mut builder = SparseBuilder::new(dim);
    for row in 0..dim {
        let cfg = basis.config(row);
        let mut diag = 0.0;
        for bond in bonds {
            let ua = (cfg >> bond.a) & 1;
            let ub = (cfg >> bond.b) & 1;
            if ua == ub {
                diag += 0.25 * bond.c;
            } else {
                diag -= 0.25 * bond.c;
                let flipped = cfg ^ (1u64 << bond.a) ^ (1u64 << bond.b);
                let col = basis.index_of(flipped).ok_or_else(|| {
                    Error::Structural(format!("exchange on bond ({}, {}) leaves the sector", bond.a, bond.b))
                })?;
                builder.add(row, col, 0.5 * bond.c);
            }
        }
        for &(site, h) in fields {
            diag += if (cfg >> site) & 1 == 1 { 0.5 * h } else { -0.5 * h };
        }
        builder.add(row, row, diag);
    }
    builder.build(true)
}

/// `H0 = H' + kappa H'' + B S^z_sys` on the model's (possibly sector-restricted) basis.
pub fn build_static_hamiltonian(spec: &ModelSpec) -> Result<SparseOperator> {
    let basis = spec.basis()?;
    build_static_hamiltonian_on(spec, &basis)
}

pub fn build_static_hamiltonian_on(spec: &ModelSpec, basis: &BasisIndex) -> Result<SparseOperator> {
    spec.validate()?;
    let mut bonds = spec.bath_bonds();
    bonds.extend(spec.coupling_bonds());
    let fields = if spec.b != 0.0 {
        vec![(spec.sys_bit(), spec.b)]
    } else {
        Vec::new()
    };
    heisenberg_operator(basis, &bonds, &fields)
}

/// Isolated bath Hamiltonian `H'` on the `N - 1` bath spins.
pub fn build_bath_hamiltonian(spec: &ModelSpec) -> Result<SparseOperator> {
    spec.validate()?;
    let n_bath = spec.n_spins() - 1;
    if n_bath == 0 {
        return Ok(SparseOperator::diagonal(&[0.0]));
    }
    let basis = BasisIndex::full(n_bath)?;
    heisenberg_operator(&basis, &spec.bath_bonds(), &[])
}

/// `S^x_sys` on the full basis: one element `1/2` per row.
pub fn build_drive_operator(spec: &ModelSpec) -> Result<SparseOperator> {
    if spec.sector.is_some() {
        return Err(Error::SectorNotAllowed(
            "S^x of the system spin changes M_tot by one; build the drive on the full basis".into(),
        ));
    }
    let basis = spec.basis()?;
    let mask = 1u64 << spec.sys_bit();
    let mut builder = SparseBuilder::new(basis.dim());
    for row in 0..basis.dim() {
        builder.add(row, (basis.config(row) ^ mask) as usize, 0.5);
    }
    builder.build(true)
}

pub fn build_observable(spec: &ModelSpec, which: Observable) -> Result<SparseOperator> {
    let basis = spec.basis()?;
    Ok(SparseOperator::diagonal(&observable_diagonal(spec, &basis, which)))
}

pub fn observable_diagonal(spec: &ModelSpec, basis: &BasisIndex, which: Observable) -> Vec<f64> {
    let sys = spec.sys_bit();
    (0..basis.dim())
        .map(|i| {
            let cfg = basis.config(i);
            match which {
                Observable::SzSys => {
                    if (cfg >> sys) & 1 == 1 {
                        0.5
                    } else {
                        -0.5
                    }
                }
                Observable::MTotal => basis.twice_m_of(cfg) as f64 / 2.0,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::StateVector;
    use faer::Side;

    fn dense_spectrum(op: &SparseOperator) -> Vec<f64> {
        let m = op.to_dense();
        let mut ev: Vec<f64> = m.self_adjoint_eigenvalues(Side::Lower).unwrap();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    #[test]
    fn two_site_heisenberg_splits_singlet_and_triplet() {
        let h = build_static_hamiltonian(&ModelSpec::chain(1)).unwrap();
        let ev = dense_spectrum(&h);
        let want = [-0.75, 0.25, 0.25, 0.25];
        for (a, b) in ev.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_spin_in_field() {
        let h = build_static_hamiltonian(&ModelSpec::ladder(0, 0.2)).unwrap();
        assert_eq!(dense_spectrum(&h), vec![-0.25, 0.25]);
        let v = build_drive_operator(&ModelSpec::ladder(0, 0.2)).unwrap();
        assert_eq!(v.get(0, 1), 0.5);
        assert_eq!(v.get(1, 0), 0.5);
        assert_eq!(v.get(0, 0), 0.0);
    }

    #[test]
    fn full_ladder_dimension() {
        let spec = ModelSpec::ladder(7, 0.2);
        assert_eq!(spec.basis().unwrap().dim(), 32768);
    }

    #[test]
    fn drive_squares_to_a_quarter() {
        let spec = ModelSpec::ladder(2, 0.2);
        let v = build_drive_operator(&spec).unwrap();
        for idx in [0usize, 7, 31] {
            let x = StateVector::basis_state(32, idx);
            let y = v.apply(&v.apply(&x).unwrap()).unwrap();
            assert!((y.amplitudes()[idx].re - 0.25).abs() < 1e-15);
            assert!((y.norm_sqr() - 0.0625).abs() < 1e-15);
        }
        let all_up = 31usize;
        assert_eq!(v.get(all_up, all_up ^ 16), 0.5);
        assert!(build_drive_operator(&spec.with_sector(Some(Magnetization::from_twice(1)))).is_err());
    }

    #[test]
    fn observables_are_diagonal_and_traceless_where_expected() {
        for spec in [ModelSpec::ladder(3, 0.2), ModelSpec::chain(5)] {
            let sz = build_observable(&spec, Observable::SzSys).unwrap();
            let d = sz.diagonal_values();
            assert_eq!(d.iter().sum::<f64>(), 0.0);
            assert_eq!(sz.nnz(), d.len());
            let m = build_observable(&spec, Observable::MTotal).unwrap();
            let top = m.dim() - 1;
            assert_eq!(m.get(top, top), spec.n_spins() as f64 / 2.0);
        }
    }

    #[test]
    fn hamiltonians_commute_with_magnetization_and_symmetry() {
        for spec in [
            ModelSpec::ladder(4, 0.2),
            ModelSpec::ladder(5, 0.6),
            ModelSpec::chain(11),
        ] {
            let h = build_static_hamiltonian(&spec).unwrap();
            let m = build_observable(&spec, Observable::MTotal).unwrap();
            assert!(h.commutator_residual(&m).unwrap() < 1e-12);
            assert_eq!(h.max_asymmetry(), 0.0);
            let p = spec.symmetry().unwrap();
            assert!(p.is_involution());
            for i in 0..h.dim() {
                for (j, v) in h.row(i) {
                    let (pi, pj) = (p.apply(i as u64) as usize, p.apply(j as u64) as usize);
                    assert_eq!(h.get(pi, pj), v);
                }
            }
        }
    }

    #[test]
    fn sector_hamiltonian_matches_full_block() {
        let spec = ModelSpec::ladder(3, 0.2);
        let full = build_static_hamiltonian(&spec).unwrap();
        let m = Magnetization::from_twice(1);
        let sector = spec.clone().with_sector(Some(m));
        let basis = sector.basis().unwrap();
        let h = build_static_hamiltonian(&sector).unwrap();
        for a in 0..basis.dim() {
            for b in 0..basis.dim() {
                let (ca, cb) = (basis.config(a) as usize, basis.config(b) as usize);
                assert_eq!(h.get(a, b), full.get(ca, cb));
            }
        }
    }

    #[test]
    fn bath_hamiltonian_matches_decoupled_ladder() {
        let spec = ModelSpec::ladder(3, 0.0).with_field(0.0);
        let bath = build_bath_hamiltonian(&spec).unwrap();
        let full = build_static_hamiltonian(&spec).unwrap();
        let mut eb = dense_spectrum(&bath);
        eb.extend(eb.clone());
        eb.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in eb.iter().zip(dense_spectrum(&full)) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(ModelSpec::chain(0).validate().is_err());
        assert!(ModelSpec::ladder(3, f64::NAN).validate().is_err());
        let bad = ModelSpec::ladder(6, 0.2).with_sector(Some(Magnetization::from_twice(12)));
        assert!(bad.validate().is_err());
    }
}
