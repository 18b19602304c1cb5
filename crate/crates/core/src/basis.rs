//! Bit-basis Hilbert spaces of spin-1/2 systems.
//!
//! A configuration is a `u64` whose bit `k` is set when spin `k` points up.
//! The basis is either the full `2^N` space (index = configuration) or a
//! fixed total-magnetization sector, stored as the sorted list of
//! configurations with the matching number of up spins.

use crate::error::{Error, Result};

/// Largest spin count the bit representation supports.
pub const MAX_SPINS: u32 = 40;

/// Total magnetization `M_tot`, stored as `2 M_tot` so half-integers are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Magnetization {
    twice: i32,
}

impl Magnetization {
    pub fn from_twice(twice: i32) -> Self {
        Self { twice }
    }

    /// Converts a half-integer value such as `0.5` or `-1.5`.
    pub fn from_f64(m: f64) -> Result<Self> {
        let twice = 2.0 * m;
        if (twice - twice.round()).abs() > 1e-9 {
            return Err(Error::param("sector", format!("M_tot = {m} is not a half-integer")));
        }
        Ok(Self {
            twice: twice.round() as i32,
        })
    }

    pub fn twice(self) -> i32 {
        self.twice
    }

    pub fn value(self) -> f64 {
        self.twice as f64 / 2.0
    }

    /// Number of up spins for `n_spins` spins, if attainable.
    pub fn n_up(self, n_spins: u32) -> Option<u32> {
        let n = n_spins as i32 + self.twice;
        if n < 0 || n % 2 != 0 || n / 2 > n_spins as i32 {
            None
        } else {
            Some((n / 2) as u32)
        }
    }

    /// Sector with `n_up` up spins out of `n_spins`.
    pub fn with_n_up(n_spins: u32, n_up: u32) -> Self {
        Self {
            twice: 2 * n_up as i32 - n_spins as i32,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BasisIndex {
    n_spins: u32,
    sector: Option<Magnetization>,
    // `None` for the full space, where the index equals the configuration.
    states: Option<Vec<u64>>,
}

impl BasisIndex {
    pub fn full(n_spins: u32) -> Result<Self> {
        check_spins(n_spins)?;
        Ok(Self {
            n_spins,
            sector: None,
            states: None,
        })
    }

    pub fn sector(n_spins: u32, m: Magnetization) -> Result<Self> {
        check_spins(n_spins)?;
        let n_up = m.n_up(n_spins).ok_or_else(|| {
            Error::param(
                "sector",
                format!(
                    "M_tot = {} is not attainable with {} spins (needs N/2 + M_tot integer in [0, N])",
                    m.value(),
                    n_spins
                ),
            )
        })?;
        let states = configurations_with_popcount(n_spins, n_up);
        Ok(Self {
            n_spins,
            sector: Some(m),
            states: Some(states),
        })
    }

    pub fn new(n_spins: u32, sector: Option<Magnetization>) -> Result<Self> {
        match sector {
            Some(m) => Self::sector(n_spins, m),
            None => Self::full(n_spins),
        }
    }

    pub fn n_spins(&self) -> u32 {
        self.n_spins
    }

    pub fn sector_label(&self) -> Option<Magnetization> {
        self.sector
    }

    pub fn dim(&self) -> usize {
        match &self.states {
            Some(s) => s.len(),
            None => 1usize << self.n_spins,
        }
    }

    #[inline]
    pub fn config(&self, index: usize) -> u64 {
        match &self.states {
            Some(s) => s[index],
            None => index as u64,
        }
    }

    #[inline]
    pub fn index_of(&self, config: u64) -> Option<usize> {
        match &self.states {
            Some(s) => s.binary_search(&config).ok(),
            None => {
                if config >> self.n_spins == 0 {
                    Some(config as usize)
                } else {
                    None
                }
            }
        }
    }

    /// Twice the total magnetization of a configuration.
    #[inline]
    pub fn twice_m_of(&self, config: u64) -> i32 {
        2 * config.count_ones() as i32 - self.n_spins as i32
    }
}

fn check_spins(n_spins: u32) -> Result<()> {
    if n_spins == 0 || n_spins > MAX_SPINS {
        return Err(Error::param(
            "n_spins",
            format!("spin count must be in 1..={MAX_SPINS}, got {n_spins}"),
        ));
    }
    Ok(())
}

/// All `n`-bit configurations with `k` set bits, ascending.
pub fn configurations_with_popcount(n: u32, k: u32) -> Vec<u64> {
    let mut out = Vec::with_capacity(binomial(n, k) as usize);
    if k == 0 {
        out.push(0);
        return out;
    }
    if k > n {
        return out;
    }
    // Gosper's hack enumerates in increasing order.
    let limit = 1u64 << n;
    let mut x: u64 = (1u64 << k) - 1;
    while x < limit {
        out.push(x);
        let c = x & x.wrapping_neg();
        let r = x + c;
        x = (((r ^ x) >> 2) / c) | r;
    }
    out
}

pub fn binomial(n: u32, k: u32) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k) as u64;
    let n = n as u64;
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// A permutation of spin sites acting on configurations.
///
/// Used for lattice symmetries (leg exchange, reflection) that commute with
/// the Hamiltonian and preserve the magnetization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SitePermutation {
    image: Vec<u32>,
}

impl SitePermutation {
    pub fn new(image: Vec<u32>) -> Result<Self> {
        let n = image.len();
        let mut seen = vec![false; n];
        for &i in &image {
            let i = i as usize;
            if i >= n || seen[i] {
                return Err(Error::param("permutation", "not a bijection of sites"));
            }
            seen[i] = true;
        }
        Ok(Self { image })
    }

    pub fn is_involution(&self) -> bool {
        self.image
            .iter()
            .enumerate()
            .all(|(i, &j)| self.image[j as usize] as usize == i)
    }

    #[inline]
    pub fn apply(&self, config: u64) -> u64 {
        let mut out = 0u64;
        let mut rest = config;
        while rest != 0 {
            let site = rest.trailing_zeros();
            out |= 1u64 << self.image[site as usize];
            rest &= rest - 1;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_space_dimension() {
        let b = BasisIndex::full(15).unwrap();
        assert_eq!(b.dim(), 32768);
        assert_eq!(b.index_of(1 << 15), None);
    }

    #[test]
    fn sector_dimension_is_binomial() {
        for n in 1..=12u32 {
            for up in 0..=n {
                let m = Magnetization::with_n_up(n, up);
                let b = BasisIndex::sector(n, m).unwrap();
                assert_eq!(b.dim() as u64, binomial(n, up));
                assert_eq!(m.n_up(n), Some(up));
            }
        }
    }

    #[test]
    fn unattainable_sector_is_rejected() {
        // (N - 1)/2 with N = 13 would need half a down spin
        let m = Magnetization::from_f64(6.0).unwrap();
        assert!(BasisIndex::sector(13, m).is_err());
        assert!(Magnetization::from_f64(0.25).is_err());
    }

    #[test]
    fn leg_swap_is_an_involution() {
        let p = SitePermutation::new(vec![1, 0, 3, 2, 4]).unwrap();
        assert!(p.is_involution());
        assert_eq!(p.apply(0b00001), 0b00010);
        assert_eq!(p.apply(0b10100), 0b11000);
        assert!(SitePermutation::new(vec![0, 0]).is_err());
    }

    proptest! {
        #[test]
        fn index_roundtrip(n in 1u32..14, up_frac in 0.0f64..=1.0) {
            let up = ((n as f64) * up_frac).round() as u32;
            let b = BasisIndex::sector(n, Magnetization::with_n_up(n, up)).unwrap();
            for i in 0..b.dim() {
                let c = b.config(i);
                prop_assert_eq!(c.count_ones(), up);
                prop_assert_eq!(b.index_of(c), Some(i));
            }
        }
    }
}
