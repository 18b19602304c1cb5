//! Densities of states and energy distributions on grids of width `g` whose
//! bins are centered at integer multiples of `g`.
//!
//! The Fourier path samples `c(t) = <psi|exp(-iHt)|psi>` on `[0, Theta]`,
//! extends it to negative times by `c(-t) = conj c(t)`, applies the taper
//! `exp(-4 (t/Theta)^2)` and transforms on the frequency grid `k pi/Theta`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rustfft::FftPlanner;

use crate::eigen::{Eigensystem, VectorPolicy};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::propagator::{propagate, EnergyShift, PropagationOptions, TimeGrid};
use crate::sparse::SparseOperator;
use crate::state::{StateVector, C64};

pub const DEFAULT_DOS_GRAINING: f64 = 0.09;

/// Density per unit energy on bins `k * width`, `k = k_min .. k_min + len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grained {
    pub width: f64,
    pub k_min: i64,
    pub values: Vec<f64>,
}

impl Grained {
    pub fn zeros(width: f64, k_min: i64, len: usize) -> Self {
        Self {
            width,
            k_min,
            values: vec![0.0; len],
        }
    }

    /// Bin index holding energy `e`.
    pub fn bin_of(width: f64, e: f64) -> i64 {
        (e / width).round() as i64
    }

    /// Bins a list of `(energy, mass)` pairs; values are `mass / width`.
    pub fn from_masses(width: f64, masses: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut acc: BTreeMap<i64, f64> = BTreeMap::new();
        for (e, m) in masses {
            *acc.entry(Self::bin_of(width, e)).or_insert(0.0) += m;
        }
        Self::from_bin_masses(width, acc)
    }

    pub fn from_bin_masses(width: f64, acc: BTreeMap<i64, f64>) -> Self {
        let (Some(&lo), Some(&hi)) = (acc.keys().next(), acc.keys().next_back()) else {
            return Self::zeros(width, 0, 0);
        };
        let mut out = Self::zeros(width, lo, (hi - lo + 1) as usize);
        for (k, m) in acc {
            out.values[(k - lo) as usize] = m / width;
        }
        out
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn k_max(&self) -> i64 {
        self.k_min + self.values.len() as i64 - 1
    }

    pub fn center(&self, i: usize) -> f64 {
        (self.k_min + i as i64) as f64 * self.width
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.center(i)).collect()
    }

    /// Value in bin `k`, zero outside the stored range.
    pub fn at(&self, k: i64) -> f64 {
        if k < self.k_min || k > self.k_max() {
            0.0
        } else {
            self.values[(k - self.k_min) as usize]
        }
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.width
    }

    /// Scales to unit integral; returns the previous integral.
    pub fn normalize(&mut self) -> f64 {
        let s = self.integral();
        if s > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= s);
        }
        s
    }

    /// Same density re-expressed on bins `k_min .. k_max` (zero padded / cropped).
    pub fn with_range(&self, k_min: i64, k_max: i64) -> Self {
        let mut out = Self::zeros(self.width, k_min, (k_max - k_min + 1).max(0) as usize);
        for (i, v) in out.values.iter_mut().enumerate() {
            *v = self.at(k_min + i as i64);
        }
        out
    }

    /// Shifts every bin by `dk`.
    pub fn shifted(&self, dk: i64) -> Self {
        Self {
            width: self.width,
            k_min: self.k_min + dk,
            values: self.values.clone(),
        }
    }

    /// Coarse grid of width `2 width`: `(p_{2m-1}/2 + p_{2m} + p_{2m+1}/2) / 2`,
    /// i.e. each fine bin's mass is split evenly between the coarse bins its
    /// edges straddle. Mass is conserved.
    pub fn coarsened2(&self) -> Self {
        let m_lo = (self.k_min - 1).div_euclid(2);
        let m_hi = (self.k_max() + 1).div_euclid(2) + 1;
        let mut out = Self::zeros(2.0 * self.width, m_lo, (m_hi - m_lo + 1) as usize);
        for (i, v) in out.values.iter_mut().enumerate() {
            let m = m_lo + i as i64;
            *v = (0.5 * self.at(2 * m - 1) + self.at(2 * m) + 0.5 * self.at(2 * m + 1)) / 2.0;
        }
        out.trimmed()
    }

    /// Bin average onto a grid of width `width`, which must be an integer
    /// multiple of the current width. Fine bins on a coarse edge are split evenly.
    pub fn resampled(&self, width: f64) -> Result<Self> {
        let fine: Vec<(i64, f64)> = (0..self.len())
            .map(|i| (self.k_min + i as i64, self.values[i]))
            .collect();
        Ok(regrain(&fine, self.width, width)?.trimmed())
    }

    /// Drops leading and trailing zero bins.
    pub fn trimmed(&self) -> Self {
        let first = self.values.iter().position(|&v| v != 0.0);
        let last = self.values.iter().rposition(|&v| v != 0.0);
        match (first, last) {
            (Some(a), Some(b)) => Self {
                width: self.width,
                k_min: self.k_min + a as i64,
                values: self.values[a..=b].to_vec(),
            },
            _ => Self::zeros(self.width, self.k_min, 0),
        }
    }

    /// Mean and standard deviation, treating each bin as a point mass at its center.
    pub fn moments(&self) -> (f64, f64) {
        let total: f64 = self.values.iter().sum();
        let mean = (0..self.len()).map(|i| self.values[i] * self.center(i)).sum::<f64>() / total;
        let var = (0..self.len())
            .map(|i| self.values[i] * (self.center(i) - mean).powi(2))
            .sum::<f64>()
            / total;
        (mean, var.max(0.0).sqrt())
    }

    /// Sets negative values to zero and renormalizes; returns the clipped mass.
    pub fn clip_negative(&mut self) -> f64 {
        let clipped: f64 = self.values.iter().filter(|v| **v < 0.0).map(|v| -v).sum::<f64>() * self.width;
        for v in &mut self.values {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        self.normalize();
        clipped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DosMethod {
    Exact,
    Typicality,
}

#[derive(Debug, Clone)]
pub struct DosEstimate {
    pub density: Grained,
    pub method: DosMethod,
    pub n_samples: Option<usize>,
    pub clipped_mass: f64,
}

#[derive(Debug, Clone)]
pub struct EnergyDistribution {
    pub density: Grained,
    pub clipped_mass: f64,
    pub method: DosMethod,
}

/// `ln Omega = logZ + beta E` on a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialFit {
    pub beta: f64,
    pub log_z: f64,
    pub lo: f64,
    pub hi: f64,
    /// Largest `|ln Omega - fit|` over the fitted bins.
    pub residual: f64,
    pub n_bins: usize,
    /// Coefficient of determination of the log-linear fit.
    pub r2: f64,
}

impl ExponentialFit {
    /// `F = -ln Z / beta`
    pub fn free_energy(&self) -> f64 {
        -self.log_z / self.beta
    }

    pub fn ln_omega(&self, e: f64) -> f64 {
        self.log_z + self.beta * e
    }
}

/// Normalized eigenvalue histogram.
pub fn dos_from_eigenvalues(values: &[f64], graining: f64) -> Result<DosEstimate> {
    check_graining(graining)?;
    if values.is_empty() {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    let w = 1.0 / values.len() as f64;
    let density = Grained::from_masses(graining, values.iter().map(|&e| (e, w)));
    Ok(DosEstimate {
        density,
        method: DosMethod::Exact,
        n_samples: None,
        clipped_mass: 0.0,
    })
}

/// Exact DOS of `H0` by full diagonalization.
pub fn dos_exact(spec: &ModelSpec, graining: f64) -> Result<DosEstimate> {
    check_graining(graining)?;
    let eig = Eigensystem::compute(spec, VectorPolicy::None)?;
    dos_from_eigenvalues(&eig.values(), graining)
}

fn check_graining(g: f64) -> Result<()> {
    if !(g.is_finite() && g > 0.0) {
        return Err(Error::param("graining", format!("must be positive, got {g}")));
    }
    Ok(())
}

/// Sampling and integration parameters of the Fourier path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierOptions {
    /// Largest time `Theta`; the frequency grid spacing is `pi / Theta`.
    pub theta: f64,
    /// Sampling step of `c(t)`. `None` picks `2 Theta / M` with `M` the
    /// smallest power of two clearing the Nyquist limit with 20% margin.
    pub sample_dt: Option<f64>,
    /// Upper limit on the integration step between samples.
    pub integration_dt: f64,
    pub norm_budget: f64,
}

impl FourierOptions {
    /// `Theta = pi / graining`, so frequency bins coincide with the graining.
    pub fn for_graining(graining: f64) -> Self {
        Self {
            theta: PI / graining,
            sample_dt: None,
            integration_dt: 0.02,
            norm_budget: 1e-6,
        }
    }
}

/// Time sampling of the autocorrelation: `M` samples of step `dt` over `[-Theta, Theta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleGrid {
    pub theta: f64,
    pub m: usize,
    pub dt: f64,
}

impl SampleGrid {
    pub fn resolution(&self) -> f64 {
        PI / self.theta
    }

    pub fn nyquist(&self) -> f64 {
        PI / self.dt
    }

    /// Sample grid for a spectrum within `[lo, hi]`.
    pub fn choose(opts: &FourierOptions, lo: f64, hi: f64) -> Result<Self> {
        if !(opts.theta.is_finite() && opts.theta > 0.0) {
            return Err(Error::param("theta", format!("must be positive, got {}", opts.theta)));
        }
        let bound = lo.abs().max(hi.abs());
        let grid = match opts.sample_dt {
            Some(dt) => {
                if !(dt.is_finite() && dt > 0.0) {
                    return Err(Error::param("sample_dt", format!("must be positive, got {dt}")));
                }
                let m = (2.0 * opts.theta / dt).round().max(2.0) as usize;
                let m = m + m % 2;
                Self {
                    theta: opts.theta,
                    m,
                    dt: 2.0 * opts.theta / m as f64,
                }
            }
            None => {
                let need = (2.0 * opts.theta * 1.2 * bound / PI).ceil().max(2.0) as usize;
                let m = need.next_power_of_two().max(8);
                Self {
                    theta: opts.theta,
                    m,
                    dt: 2.0 * opts.theta / m as f64,
                }
            }
        };
        if bound >= grid.nyquist() {
            return Err(Error::Nyquist {
                bound,
                limit: grid.nyquist(),
            });
        }
        Ok(grid)
    }

    pub fn taper(&self, t: f64) -> f64 {
        (-4.0 * (t / self.theta).powi(2)).exp()
    }
}

/// `c(t_j) = <psi|exp(-i H t_j)|psi> / <psi|psi>` for `t_j = j dt`, `j = 0 ..= M/2`.
pub fn autocorrelation(
    h0: &SparseOperator,
    psi: &StateVector,
    grid: &SampleGrid,
    opts: &FourierOptions,
) -> Result<Vec<C64>> {
    let half = grid.m / 2;
    let sub = (grid.dt / opts.integration_dt).ceil().max(1.0) as usize;
    let tgrid = TimeGrid::new(grid.dt / sub as f64, sub * half)?;
    let norm = psi.norm_sqr();
    let mut c = Vec::with_capacity(half + 1);
    let mut err = None;
    let mut obs = |_t: f64, cur: &StateVector| match psi.inner(cur) {
        Ok(v) => c.push(v / norm),
        Err(e) => err = Some(e),
    };
    let popts = PropagationOptions {
        shift: EnergyShift::Mean,
        norm_budget: opts.norm_budget,
        sample_every: Some(sub),
    };
    propagate(h0, None, &tgrid, psi, &popts, Some(&mut obs))?;
    if let Some(e) = err {
        return Err(e);
    }
    debug_assert_eq!(c.len(), half + 1);
    Ok(c)
}

/// Tapered transform of `c` onto the bins `k pi / Theta`, all `M` of them,
/// returned as `(k, density)` with `k` in `[-M/2, M/2)`.
pub fn spectrum_from_autocorrelation(c: &[C64], grid: &SampleGrid) -> Result<Vec<(i64, f64)>> {
    let m = grid.m;
    let half = m / 2;
    if c.len() != half + 1 {
        return Err(Error::GridMismatch(format!(
            "autocorrelation has {} samples, expected {}",
            c.len(),
            half + 1
        )));
    }
    let mut buf = vec![C64::new(0.0, 0.0); m];
    for (j, &cj) in c.iter().enumerate().take(half) {
        let w = grid.taper(j as f64 * grid.dt);
        buf[j] = cj * w;
        if j > 0 {
            buf[m - j] = cj.conj() * w;
        }
    }
    // t = -Theta: real part keeps the transform real
    buf[half] = C64::new(grid.taper(grid.theta) * c[half].re, 0.0);
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_inverse(m).process(&mut buf);
    let scale = grid.dt / (2.0 * PI);
    Ok((0..m)
        .map(|k| {
            let kk = if k < half { k as i64 } else { k as i64 - m as i64 };
            (kk, buf[k].re * scale)
        })
        .collect())
}

/// The same transform evaluated directly as a kernel sum over an exact
/// spectrum `(E_n, weight_n)`.
pub fn spectrum_direct(levels: &[(f64, f64)], grid: &SampleGrid) -> Vec<(i64, f64)> {
    let half = grid.m / 2;
    let scale = grid.dt / (2.0 * PI);
    let weights: Vec<f64> = (0..=half).map(|j| grid.taper(j as f64 * grid.dt)).collect();
    let res = grid.resolution();
    (-(half as i64)..half as i64)
        .map(|k| {
            let ek = k as f64 * res;
            let mut acc = 0.0;
            for &(en, wn) in levels {
                let x = ek - en;
                let mut s = weights[0] + weights[half] * (x * grid.theta).cos();
                for (j, w) in weights.iter().enumerate().take(half).skip(1) {
                    s += 2.0 * w * (x * j as f64 * grid.dt).cos();
                }
                acc += wn * s;
            }
            (k, acc * scale)
        })
        .collect()
}

/// Collapses the fine frequency bins (`pi/Theta`) onto bins of width `graining`,
/// which must be an integer multiple `r` of the resolution. Fine bins on a
/// coarse edge (even `r`) are split evenly.
fn regrain(fine: &[(i64, f64)], resolution: f64, graining: f64) -> Result<Grained> {
    let r_f = graining / resolution;
    let r = r_f.round() as i64;
    if r < 1 || (r_f - r as f64).abs() > 1e-6 {
        return Err(Error::param(
            "graining",
            format!("{graining} must be an integer multiple of the source resolution {resolution}"),
        ));
    }
    let mut acc: BTreeMap<i64, f64> = BTreeMap::new();
    for &(k, v) in fine {
        let mass = v * resolution;
        if r % 2 == 1 {
            *acc.entry(k.div_euclid(r) + i64::from(k.rem_euclid(r) > r / 2))
                .or_insert(0.0) += mass;
        } else {
            let rem = k.rem_euclid(r);
            let base = k.div_euclid(r);
            if rem == r / 2 {
                *acc.entry(base).or_insert(0.0) += 0.5 * mass;
                *acc.entry(base + 1).or_insert(0.0) += 0.5 * mass;
            } else if rem < r / 2 {
                *acc.entry(base).or_insert(0.0) += mass;
            } else {
                *acc.entry(base + 1).or_insert(0.0) += mass;
            }
        }
    }
    Ok(Grained::from_bin_masses(graining, acc))
}

fn finish(fine: Vec<(i64, f64)>, grid: &SampleGrid, graining: f64, lo: f64, hi: f64) -> Result<(Grained, f64)> {
    // keep a margin of several kernel widths around the spectrum
    let margin = 6.0 * (8.0f64).sqrt() / grid.theta + 2.0 * graining;
    let res = grid.resolution();
    let kept: Vec<(i64, f64)> = fine
        .into_iter()
        .filter(|&(k, _)| {
            let e = k as f64 * res;
            e >= lo - margin && e <= hi + margin
        })
        .collect();
    let mut g = regrain(&kept, res, graining)?;
    let clipped = g.clip_negative();
    Ok((g.trimmed(), clipped))
}

/// Energy distribution of `psi` by the Fourier path.
pub fn energy_distribution_fourier(
    h0: &SparseOperator,
    psi: &StateVector,
    graining: f64,
    opts: &FourierOptions,
) -> Result<EnergyDistribution> {
    check_graining(graining)?;
    let (lo, hi) = h0.spectral_range_estimate(60);
    let grid = SampleGrid::choose(opts, lo, hi)?;
    let c = autocorrelation(h0, psi, &grid, opts)?;
    let fine = spectrum_from_autocorrelation(&c, &grid)?;
    let (density, clipped_mass) = finish(fine, &grid, graining, lo, hi)?;
    Ok(EnergyDistribution {
        density,
        clipped_mass,
        method: DosMethod::Typicality,
    })
}

/// Energy distribution by projection onto eigenstates (hard binning).
/// Every level must carry a kept eigenvector.
pub fn energy_distribution_exact(eig: &Eigensystem, psi: &StateVector, graining: f64) -> Result<EnergyDistribution> {
    check_graining(graining)?;
    let pops = eig.populations(psi)?;
    let norm = psi.norm_sqr();
    let mut masses = Vec::with_capacity(pops.len());
    for (l, p) in eig.levels().iter().zip(&pops) {
        match p {
            Some(w) => masses.push((l.energy, w / norm)),
            None => {
                return Err(Error::param(
                    "eigensystem",
                    "exact energy distribution needs every eigenvector",
                ))
            }
        }
    }
    let mut density = Grained::from_masses(graining, masses);
    density.normalize();
    Ok(EnergyDistribution {
        density,
        clipped_mass: 0.0,
        method: DosMethod::Exact,
    })
}

/// Exact distribution passed through the same taper and frequency grid as
/// the Fourier path, for like-for-like comparisons.
/// `range` should be the spectral range the Fourier path used, so both crop alike.
pub fn energy_distribution_matched(
    eig: &Eigensystem,
    psi: &StateVector,
    graining: f64,
    grid: &SampleGrid,
    range: (f64, f64),
) -> Result<EnergyDistribution> {
    let pops = eig.populations(psi)?;
    let norm = psi.norm_sqr();
    let levels: Vec<(f64, f64)> = eig
        .levels()
        .iter()
        .zip(&pops)
        .filter_map(|(l, p)| p.map(|w| (l.energy, w / norm)))
        .collect();
    let fine = spectrum_direct(&levels, grid);
    let (density, clipped_mass) = finish(fine, grid, graining, range.0, range.1)?;
    Ok(EnergyDistribution {
        density,
        clipped_mass,
        method: DosMethod::Exact,
    })
}

/// Exact DOS passed through the taper and frequency grid of the Fourier path.
pub fn dos_matched(values: &[f64], graining: f64, grid: &SampleGrid, range: (f64, f64)) -> Result<DosEstimate> {
    check_graining(graining)?;
    if values.is_empty() {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    let w = 1.0 / values.len() as f64;
    let levels: Vec<(f64, f64)> = values.iter().map(|&e| (e, w)).collect();
    let fine = spectrum_direct(&levels, grid);
    let (density, clipped_mass) = finish(fine, grid, graining, range.0, range.1)?;
    Ok(DosEstimate {
        density,
        method: DosMethod::Exact,
        n_samples: None,
        clipped_mass,
    })
}

/// DOS as the average Fourier energy distribution of `n_samples` Haar-random states.
pub fn dos_typicality<R: Rng + ?Sized>(
    h0: &SparseOperator,
    graining: f64,
    n_samples: usize,
    opts: &FourierOptions,
    rng: &mut R,
) -> Result<DosEstimate> {
    check_graining(graining)?;
    if n_samples == 0 {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    let (lo, hi) = h0.spectral_range_estimate(60);
    let grid = SampleGrid::choose(opts, lo, hi)?;
    let half = grid.m / 2;
    let mut mean = vec![C64::new(0.0, 0.0); half + 1];
    // states are drawn up front so the draws do not depend on evaluation order
    let states: Vec<StateVector> = (0..n_samples).map(|_| StateVector::random(h0.dim(), rng)).collect();
    for psi in &states {
        let c = autocorrelation(h0, psi, &grid, opts)?;
        for (m, v) in mean.iter_mut().zip(c) {
            *m += v / n_samples as f64;
        }
    }
    let fine = spectrum_from_autocorrelation(&mean, &grid)?;
    let (density, clipped_mass) = finish(fine, &grid, graining, lo, hi)?;
    Ok(DosEstimate {
        density,
        method: DosMethod::Typicality,
        n_samples: Some(n_samples),
        clipped_mass,
    })
}

/// Least-squares line through `(E, ln Omega)` for bin centers in `[lo, hi]`.
pub fn fit_exponential(dos: &Grained, lo: f64, hi: f64) -> Result<ExponentialFit> {
    let pts: Vec<(f64, f64)> = (0..dos.len())
        .map(|i| (dos.center(i), dos.values[i]))
        .filter(|&(e, _)| e >= lo - 1e-12 && e <= hi + 1e-12)
        .collect();
    if pts.len() < 2 || pts.iter().any(|&(_, v)| v <= 0.0) {
        return Err(Error::NonPositiveFit { lo, hi });
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, &(e, v)| (a.0 + e, a.1 + v.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (sxx, sxy, syy) = pts.iter().fold((0.0, 0.0, 0.0), |a, &(e, v)| {
        let (dx, dy) = (e - mx, v.ln() - my);
        (a.0 + dx * dx, a.1 + dx * dy, a.2 + dy * dy)
    });
    let beta = sxy / sxx;
    let log_z = my - beta * mx;
    let residual = pts
        .iter()
        .map(|&(e, v)| (v.ln() - log_z - beta * e).abs())
        .fold(0.0, f64::max);
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(ExponentialFit {
        beta,
        log_z,
        lo,
        hi,
        residual,
        n_bins: pts.len(),
        r2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_static_hamiltonian;
    use crate::rng::job_rng;

    #[test]
    fn single_spin_dos_has_two_equal_bins() {
        let dos = dos_exact(&ModelSpec::ladder(0, 0.0), 0.05).unwrap();
        let d = &dos.density;
        assert!((d.at(Grained::bin_of(0.05, 0.25)) - 10.0).abs() < 1e-12);
        assert!((d.at(Grained::bin_of(0.05, -0.25)) - 10.0).abs() < 1e-12);
        assert!((d.integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn synthetic_exponential_fit_is_exact() {
        let width = 0.1;
        let mut g = Grained::zeros(width, -30, 61);
        for i in 0..g.len() {
            g.values[i] = (0.7 * g.center(i)).exp() * 3.0;
        }
        let fit = fit_exponential(&g, -2.0, 2.0).unwrap();
        assert!((fit.beta - 0.7).abs() < 1e-10);
        assert!((fit.log_z - 3.0f64.ln()).abs() < 1e-10);
        let again = fit_exponential(&g, -2.0, 2.0).unwrap();
        assert_eq!(fit, again);
        g.values[30] = 0.0;
        assert!(fit_exponential(&g, -2.0, 2.0).is_err());
    }

    #[test]
    fn coarsening_conserves_mass() {
        let g = Grained {
            width: 0.07,
            k_min: -3,
            values: vec![1.0, 2.0, 0.5, 0.0, 4.0],
        };
        let c = g.coarsened2();
        assert!((c.integral() - g.integral()).abs() < 1e-12);
        assert_eq!(c.width, 0.14);
    }

    #[test]
    fn fft_matches_direct_kernel_sum() {
        let levels = [(-1.234, 0.3), (0.5, 0.5), (2.01, 0.2)];
        let opts = FourierOptions::for_graining(0.1);
        let grid = SampleGrid::choose(&opts, -3.0, 3.0).unwrap();
        let c: Vec<C64> = (0..=grid.m / 2)
            .map(|j| {
                let t = j as f64 * grid.dt;
                levels.iter().map(|&(e, w)| C64::from_polar(w, -e * t)).sum()
            })
            .collect();
        let fft = spectrum_from_autocorrelation(&c, &grid).unwrap();
        let direct = spectrum_direct(&levels, &grid);
        let mut by_k: BTreeMap<i64, f64> = fft.into_iter().collect();
        for (k, v) in direct {
            let f = by_k.remove(&k).unwrap();
            assert!((f - v).abs() < 1e-10, "k={k}: {f} vs {v}");
        }
        let total: f64 = spectrum_direct(&levels, &grid).iter().map(|x| x.1).sum::<f64>() * grid.resolution();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nyquist_violation_is_an_error() {
        let opts = FourierOptions {
            sample_dt: Some(1.0),
            ..FourierOptions::for_graining(0.1)
        };
        assert!(matches!(
            SampleGrid::choose(&opts, -5.0, 5.0),
            Err(Error::Nyquist { .. })
        ));
    }

    #[test]
    fn eigenstate_occupies_a_single_bin() {
        let spec = ModelSpec::chain(5);
        let eig = Eigensystem::compute(&spec, VectorPolicy::All).unwrap();
        let v = eig.vector(3).unwrap();
        let d = energy_distribution_exact(&eig, &v, 0.07).unwrap().density;
        assert_eq!(d.values.iter().filter(|&&x| x > 1e-12).count(), 1);
    }

    #[test]
    fn fourier_path_matches_matched_exact_path() {
        let spec = ModelSpec::ladder(3, 0.2);
        let h = build_static_hamiltonian(&spec).unwrap();
        let eig = Eigensystem::compute(&spec, VectorPolicy::All).unwrap();
        let psi = StateVector::random(h.dim(), &mut job_rng(11, 0));
        let opts = FourierOptions {
            integration_dt: 0.005,
            ..FourierOptions::for_graining(0.1)
        };
        let f = energy_distribution_fourier(&h, &psi, 0.1, &opts).unwrap();
        let (lo, hi) = h.spectral_range_estimate(60);
        let grid = SampleGrid::choose(&opts, lo, hi).unwrap();
        let e = energy_distribution_matched(&eig, &psi, 0.1, &grid, (lo, hi)).unwrap();
        let k0 = f.density.k_min.min(e.density.k_min);
        let k1 = f.density.k_max().max(e.density.k_max());
        for k in k0..=k1 {
            let (a, b) = (f.density.at(k), e.density.at(k));
            assert!((a - b).abs() < 1e-6, "bin {k}: {a} vs {b}");
        }
    }
}
