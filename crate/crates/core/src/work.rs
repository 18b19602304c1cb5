//! Work distributions of driven protocols and the statistics built on them:
//! the stiffness measures `chi` and `chi_bar`, Jarzynski estimates, the
//! microcanonical Crooks ratio and the pure-state variance probe.
//!
//! All pdfs of one study share an absolute energy grid: initial windows are
//! centered at `anchor + k delta`, and a final energy `E_m` lands in work bin
//! `round((E_m - E_init) / delta)`, so work bins are centered at `j delta`.

use rand::Rng;
use rayon::prelude::*;

use crate::eigen::Eigensystem;
use crate::error::{Error, Result};
use crate::propagator::{propagate, Direction, DriveProtocol, PropagationOptions, TimeGrid};
use crate::rng::job_rng;
use crate::sparse::SparseOperator;
use crate::spectral::{energy_distribution_fourier, ExponentialFit, FourierOptions, Grained};
use crate::state::{complex_normal, StateVector, C64};
use crate::state_prep::{EnergyWindow, PreparedState};

pub const DEFAULT_CROOKS_FLOOR: f64 = 0.01;
pub const DEFAULT_STIFFNESS_SAMPLES: usize = 11;
pub const MIN_STIFFNESS_SAMPLES: usize = 5;
pub const MIN_VARIANCE_SEEDS: usize = 10;

/// Absolute grid of window centers `anchor + k delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkGrid {
    pub anchor: f64,
    pub delta: f64,
}

impl WorkGrid {
    pub fn new(anchor: f64, delta: f64) -> Result<Self> {
        if !anchor.is_finite() {
            return Err(Error::param("anchor", "must be finite"));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::param("delta", format!("must be positive, got {delta}")));
        }
        Ok(Self { anchor, delta })
    }

    pub fn index_of(&self, e: f64) -> i64 {
        ((e - self.anchor) / self.delta).round() as i64
    }

    pub fn center(&self, k: i64) -> f64 {
        self.anchor + k as f64 * self.delta
    }

    pub fn window(&self, k: i64) -> EnergyWindow {
        EnergyWindow {
            e: self.center(k),
            delta: self.delta,
        }
    }

    /// Nearest window index and the rounding error `|e - center|` (at most `delta / 2`).
    pub fn snap(&self, e: f64) -> (i64, f64) {
        let k = self.index_of(e);
        (k, (e - self.center(k)).abs())
    }

    /// The same anchor at another width.
    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Self::new(self.anchor, delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkMethod {
    /// Average over every eigenstate of the initial window.
    ExactTrace,
    /// Average over Haar-random window states, read out by eigenvector projection.
    PureState,
    /// Final energy distribution by the Fourier path.
    Fourier,
    Mixture,
}

#[derive(Debug, Clone)]
pub struct WorkPdf {
    /// Center of the initial window (the snapped energy).
    pub initial_e: f64,
    pub requested_e: f64,
    /// `|requested_e - initial_e|`
    pub rounding: f64,
    /// Mean initial energy of the prepared state(s).
    pub achieved_mean: f64,
    /// Density on bins `j delta`, unit integral.
    pub density: Grained,
    /// Ungrained `(W, probability)` pairs; empty for the Fourier path,
    /// where the density itself is the finest record.
    pub raw: Vec<(f64, f64)>,
    pub direction: Direction,
    pub method: WorkMethod,
    /// Number of propagated states.
    pub n_states: usize,
    pub window_count: Option<usize>,
    /// Probability not resolved before normalization (eigenvectors not kept, clipped mass).
    pub missing_mass: f64,
    pub max_norm_drift: f64,
}

impl WorkPdf {
    /// Pdf of a list of `(W, probability)` pairs on bins of width `delta`.
    pub fn from_raw(initial_e: f64, delta: f64, raw: Vec<(f64, f64)>, method: WorkMethod) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::param("delta", format!("must be positive, got {delta}")));
        }
        let total: f64 = raw.iter().map(|r| r.1).sum();
        if !(total > 0.0) || raw.iter().any(|r| r.1 < 0.0 || !r.0.is_finite()) {
            return Err(Error::param(
                "raw",
                "needs finite work values and non-negative, non-zero weights",
            ));
        }
        let mut density = Grained::from_masses(delta, raw.iter().copied());
        density.normalize();
        Ok(Self {
            initial_e,
            requested_e: initial_e,
            rounding: 0.0,
            achieved_mean: initial_e,
            density,
            raw,
            direction: Direction::Forward,
            method,
            n_states: 0,
            window_count: None,
            missing_mass: 1.0 - total.min(1.0),
            max_norm_drift: 0.0,
        })
    }

    pub fn delta(&self) -> f64 {
        self.density.width
    }

    /// Density regrained from the raw record onto bins of `width`; falls back
    /// to bin averaging for the Fourier path.
    pub fn regrained(&self, width: f64) -> Result<Grained> {
        if self.raw.is_empty() {
            return self.density.resampled(width);
        }
        let mut g = Grained::from_masses(width, self.raw.iter().copied());
        g.normalize();
        Ok(g)
    }

    /// Mean work over the bins.
    pub fn mean_work(&self) -> f64 {
        self.density.moments().0
    }

    /// Every bin with density at least `frac` times the peak.
    pub fn bins_above(&self, frac: f64) -> Vec<(i64, f64)> {
        let peak = self.density.values.iter().cloned().fold(0.0, f64::max);
        (0..self.density.len())
            .map(|i| (self.density.k_min + i as i64, self.density.values[i]))
            .filter(|&(_, v)| v >= frac * peak && v > 0.0)
            .collect()
    }
}

/// Everything needed to compute exact-path work pdfs: `eig` diagonalizes
/// `h0` on the full basis, with eigenvectors kept at least over the initial
/// windows and the reachable final energies.
#[derive(Clone, Copy)]
pub struct WorkSetup<'a> {
    pub h0: &'a SparseOperator,
    pub v: &'a SparseOperator,
    pub eig: &'a Eigensystem,
    pub protocol: DriveProtocol,
    pub grid: TimeGrid,
    pub options: PropagationOptions,
}

impl WorkSetup<'_> {
    fn check(&self) -> Result<()> {
        if self.eig.host_dim() != self.h0.dim() || self.v.dim() != self.h0.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.h0.dim(),
                got: self.eig.host_dim(),
            });
        }
        if (self.grid.duration() - self.protocol.duration()).abs() > 1e-9 * self.protocol.duration() {
            return Err(Error::param(
                "grid",
                format!(
                    "covers {} but the protocol lasts {}",
                    self.grid.duration(),
                    self.protocol.duration()
                ),
            ));
        }
        Ok(())
    }

    fn protocol_for(&self, direction: Direction) -> DriveProtocol {
        let mut p = self.protocol;
        p.direction = direction;
        p
    }

    /// Propagates `psi0` and returns the final `(E_m, p_m)` over kept
    /// eigenvectors, the unresolved probability and the norm drift.
    fn final_populations(&self, psi0: &StateVector, direction: Direction) -> Result<(Vec<(f64, f64)>, f64, f64)> {
        let proto = self.protocol_for(direction);
        let out = propagate(self.h0, Some((self.v, &proto)), &self.grid, psi0, &self.options, None)?;
        let pops = self.eig.populations(&out.state)?;
        let norm = out.state.norm_sqr();
        let mut kept = Vec::new();
        let mut total = 0.0;
        for (l, p) in self.eig.levels().iter().zip(&pops) {
            if let Some(w) = p {
                kept.push((l.energy, w / norm));
                total += w / norm;
            }
        }
        Ok((kept, (1.0 - total).max(0.0), out.norm_drift))
    }

    fn assemble(
        &self,
        wgrid: &WorkGrid,
        requested_e: f64,
        direction: Direction,
        method: WorkMethod,
        runs: Vec<(Vec<(f64, f64)>, f64, f64)>,
        achieved_mean: f64,
        window_count: usize,
    ) -> Result<WorkPdf> {
        let (k, rounding) = wgrid.snap(requested_e);
        let e_init = wgrid.center(k);
        let n = runs.len() as f64;
        let mut raw = Vec::new();
        let mut missing = 0.0;
        let mut drift: f64 = 0.0;
        for (pops, miss, d) in runs {
            raw.extend(pops.into_iter().map(|(e, p)| (e - e_init, p / n)));
            missing += miss / n;
            drift = drift.max(d);
        }
        let mut pdf = WorkPdf::from_raw(e_init, wgrid.delta, raw, method)?;
        pdf.requested_e = requested_e;
        pdf.rounding = rounding;
        pdf.achieved_mean = achieved_mean;
        pdf.direction = direction;
        pdf.n_states = n as usize;
        pdf.window_count = Some(window_count);
        pdf.missing_mass = missing;
        pdf.max_norm_drift = drift;
        Ok(pdf)
    }
}

/// `p_E(W)` for the microcanonical window around `e` (snapped to `wgrid`):
/// every window eigenstate is propagated and its final populations binned.
pub fn work_pdf_exact(setup: &WorkSetup, wgrid: &WorkGrid, e: f64, direction: Direction) -> Result<WorkPdf> {
    setup.check()?;
    let (k, _) = wgrid.snap(e);
    let idx = wgrid.window(k).levels(setup.eig)?;
    let runs = idx
        .par_iter()
        .map(|&n| setup.final_populations(&setup.eig.vector(n)?, direction))
        .collect::<Result<Vec<_>>>()?;
    let mean = idx.iter().map(|&n| setup.eig.energy(n)).sum::<f64>() / idx.len() as f64;
    setup.assemble(wgrid, e, direction, WorkMethod::ExactTrace, runs, mean, idx.len())
}

/// Average of the pdfs of `n_states` Haar-random states of the window
/// around `e`. With `n_states = 1` this is the single pure-state pdf.
pub fn work_pdf_pure<R: Rng + ?Sized>(
    setup: &WorkSetup,
    wgrid: &WorkGrid,
    e: f64,
    direction: Direction,
    n_states: usize,
    rng: &mut R,
) -> Result<WorkPdf> {
    setup.check()?;
    if n_states == 0 {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    let (k, _) = wgrid.snap(e);
    let idx = wgrid.window(k).levels(setup.eig)?;
    // drawn up front so the draws do not depend on evaluation order
    let coeffs: Vec<Vec<(usize, C64)>> = (0..n_states)
        .map(|_| idx.iter().map(|&n| (n, complex_normal(rng))).collect())
        .collect();
    let runs = coeffs
        .par_iter()
        .map(|c| {
            let mut psi = setup.eig.combination(c)?;
            psi.normalize();
            let mean = setup.h0.mean_and_std(&psi)?.0;
            setup.final_populations(&psi, direction).map(|r| (r, mean))
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = runs.iter().map(|r| r.1).sum::<f64>() / n_states as f64;
    let runs = runs.into_iter().map(|r| r.0).collect();
    setup.assemble(wgrid, e, direction, WorkMethod::PureState, runs, mean, idx.len())
}

/// Work pdf of a prepared state without diagonalization: the final energy
/// distribution comes from the Fourier path at graining `delta`, shifted by
/// the prepared mean energy rounded to the nearest bin. `h0` must be the
/// Hamiltonian at both ends of the protocol.
#[allow(clippy::too_many_arguments)]
pub fn work_pdf_fourier(
    h0: &SparseOperator,
    v: &SparseOperator,
    protocol: &DriveProtocol,
    grid: &TimeGrid,
    options: &PropagationOptions,
    prep: &PreparedState,
    wgrid: &WorkGrid,
    fourier: &FourierOptions,
) -> Result<WorkPdf> {
    let out = propagate(h0, Some((v, protocol)), grid, &prep.state, options, None)?;
    let dist = energy_distribution_fourier(h0, &out.state, wgrid.delta, fourier)?;
    let (k, rounding) = wgrid.snap(prep.achieved_mean);
    let e_init = wgrid.center(k);
    // energy bins are k' delta; work bins must be j delta with W = E - e_init
    let offset = e_init / wgrid.delta;
    if (offset - offset.round()).abs() > 1e-6 {
        return Err(Error::GridMismatch(format!(
            "the Fourier path bins energies at multiples of delta; anchor {} is off that grid",
            wgrid.anchor
        )));
    }
    let density = dist.density.shifted(-(offset.round() as i64));
    Ok(WorkPdf {
        initial_e: e_init,
        requested_e: prep.achieved_mean,
        rounding,
        achieved_mean: prep.achieved_mean,
        density,
        raw: Vec::new(),
        direction: protocol.direction,
        method: WorkMethod::Fourier,
        n_states: 1,
        window_count: prep.window_count,
        missing_mass: dist.clipped_mass,
        max_norm_drift: out.norm_drift,
    })
}

/// `int (p - q)^2 dW` on a common grid.
pub fn chi(p: &Grained, q: &Grained) -> Result<f64> {
    if (p.width - q.width).abs() > 1e-12 * p.width.max(q.width) {
        return Err(Error::GridMismatch(format!(
            "bin widths {} and {} differ; resample onto the coarser grid first",
            p.width, q.width
        )));
    }
    let lo = p.k_min.min(q.k_min);
    let hi = p.k_max().max(q.k_max());
    Ok((lo..=hi).map(|k| (p.at(k) - q.at(k)).powi(2)).sum::<f64>() * p.width)
}

/// `chi` after bin-averaging the finer density onto the coarser grid.
pub fn chi_resampled(p: &Grained, q: &Grained) -> Result<f64> {
    if p.width < q.width {
        chi(&p.resampled(q.width)?, q)
    } else if q.width < p.width {
        chi(p, &q.resampled(p.width)?)
    } else {
        chi(p, q)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StiffnessReport {
    pub e0: f64,
    /// Width of the sampled energy range.
    pub delta_window: f64,
    /// `(E', chi(E0, E'))`
    pub chi_values: Vec<(f64, f64)>,
    pub chi_bar: f64,
    pub chi_min: f64,
    pub chi_max: f64,
}

/// The `n` energies `E0 - Delta/2 .. E0 + Delta/2`, equally spaced.
pub fn stiffness_energies(e0: f64, delta_window: f64, n: usize) -> Result<Vec<f64>> {
    if n < MIN_STIFFNESS_SAMPLES {
        return Err(Error::TooFewSamples {
            need: MIN_STIFFNESS_SAMPLES,
            got: n,
        });
    }
    if !(delta_window.is_finite() && delta_window > 0.0) {
        return Err(Error::param("Delta", format!("must be positive, got {delta_window}")));
    }
    Ok((0..n)
        .map(|i| e0 - 0.5 * delta_window + delta_window * i as f64 / (n - 1) as f64)
        .collect())
}

/// Mean of `chi(center, p')` over the sampled pdfs.
pub fn chi_bar(center: &WorkPdf, others: &[WorkPdf], delta_window: f64) -> Result<StiffnessReport> {
    if others.len() < MIN_STIFFNESS_SAMPLES {
        return Err(Error::TooFewSamples {
            need: MIN_STIFFNESS_SAMPLES,
            got: others.len(),
        });
    }
    let chi_values = others
        .iter()
        .map(|p| Ok((p.initial_e, chi(&center.density, &p.density)?)))
        .collect::<Result<Vec<_>>>()?;
    let n = chi_values.len() as f64;
    let chi_bar = chi_values.iter().map(|c| c.1).sum::<f64>() / n;
    let chi_min = chi_values.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let chi_max = chi_values.iter().map(|c| c.1).fold(0.0, f64::max);
    Ok(StiffnessReport {
        e0: center.initial_e,
        delta_window,
        chi_values,
        chi_bar,
        chi_min,
        chi_max,
    })
}

/// How each pdf of a stiffness sweep is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepMethod {
    ExactTrace,
    /// `n_states` random window states per energy, job `i` seeded by `(seed, i)`.
    PureState {
        n_states: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone)]
pub struct StiffnessSweep {
    pub report: StiffnessReport,
    pub pdfs: Vec<WorkPdf>,
    /// Sample energies whose window holds no eigenstate.
    pub skipped: Vec<f64>,
}

/// Work pdfs at `n_samples` energies across `[e0 - Delta/2, e0 + Delta/2]`
/// and their `chi_bar` against the pdf at `e0`. Empty windows away from
/// `e0` are skipped and reported; at least `MIN_STIFFNESS_SAMPLES` must remain.
pub fn stiffness_sweep(
    setup: &WorkSetup,
    wgrid: &WorkGrid,
    e0: f64,
    delta_window: f64,
    n_samples: usize,
    method: SweepMethod,
) -> Result<StiffnessSweep> {
    let energies = stiffness_energies(e0, delta_window, n_samples)?;
    let one = |i: usize, e: f64| match method {
        SweepMethod::ExactTrace => work_pdf_exact(setup, wgrid, e, Direction::Forward),
        SweepMethod::PureState { n_states, seed } => work_pdf_pure(
            setup,
            wgrid,
            e,
            Direction::Forward,
            n_states,
            &mut job_rng(seed, i as u64),
        ),
    };
    let center = one(n_samples, e0)?;
    let mut pdfs = Vec::new();
    let mut skipped = Vec::new();
    for (i, &e) in energies.iter().enumerate() {
        if wgrid.snap(e).0 == wgrid.snap(e0).0 {
            pdfs.push(center.clone());
            continue;
        }
        match one(i, e) {
            Ok(p) => pdfs.push(p),
            Err(Error::EmptyWindow { .. }) => skipped.push(e),
            Err(err) => return Err(err),
        }
    }
    let report = chi_bar(&center, &pdfs, delta_window)?;
    Ok(StiffnessSweep { report, pdfs, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JrEstimate {
    /// `<exp(-beta W)>`
    pub value: f64,
    pub beta: f64,
    /// `Z_f / Z_i`; 1 when the Hamiltonian returns to `H0`.
    pub rhs_reference: f64,
    /// `value / rhs_reference - 1`
    pub deviation: f64,
}

/// `sum_j p_j delta exp(-beta W_j)` over the bins of `p`.
pub fn jarzynski_estimate(p: &Grained, beta: f64) -> JrEstimate {
    let value = (0..p.len())
        .map(|i| p.values[i] * p.width * (-beta * p.center(i)).exp())
        .sum::<f64>();
    JrEstimate {
        value,
        beta,
        rhs_reference: 1.0,
        deviation: value - 1.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureWeights {
    pub centers: Vec<f64>,
    pub weights: Vec<f64>,
}

impl MixtureWeights {
    pub fn new(centers: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if centers.is_empty() || centers.len() != weights.len() {
            return Err(Error::param("weights", "need one weight per center, at least one"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::param("weights", "must be finite and non-negative"));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::param("weights", format!("must sum to 1, got {s}")));
        }
        Ok(Self { centers, weights })
    }

    pub fn uniform(centers: Vec<f64>) -> Result<Self> {
        let n = centers.len().max(1);
        let weights = vec![1.0 / n as f64; centers.len()];
        Self::new(centers, weights)
    }
}

/// `p(W) = sum_n K(E_n) p_{E_n}(W)`; `pdfs[n]` belongs to `k.centers[n]`.
pub fn mixture_work_pdf(pdfs: &[WorkPdf], k: &MixtureWeights) -> Result<WorkPdf> {
    if pdfs.len() != k.weights.len() {
        return Err(Error::param(
            "weights",
            format!("{} weights for {} pdfs", k.weights.len(), pdfs.len()),
        ));
    }
    let width = pdfs[0].delta();
    for (p, &c) in pdfs.iter().zip(&k.centers) {
        if (p.delta() - width).abs() > 1e-12 * width {
            return Err(Error::GridMismatch("component pdfs have different bin widths".into()));
        }
        if (p.initial_e - c).abs() > 0.5 * width {
            return Err(Error::param(
                "centers",
                format!("pdf at {} does not match center {c}", p.initial_e),
            ));
        }
    }
    let lo = pdfs.iter().map(|p| p.density.k_min).min().unwrap_or(0);
    let hi = pdfs.iter().map(|p| p.density.k_max()).max().unwrap_or(0);
    let mut density = Grained::zeros(width, lo, (hi - lo + 1).max(0) as usize);
    for (p, &w) in pdfs.iter().zip(&k.weights) {
        for (i, v) in density.values.iter_mut().enumerate() {
            *v += w * p.density.at(lo + i as i64);
        }
    }
    let raw = if pdfs.iter().all(|p| !p.raw.is_empty()) {
        pdfs.iter()
            .zip(&k.weights)
            .flat_map(|(p, &w)| {
                let total: f64 = p.raw.iter().map(|r| r.1).sum();
                p.raw.iter().map(move |&(x, q)| (x, w * q / total))
            })
            .collect()
    } else {
        Vec::new()
    };
    let mix = |f: &dyn Fn(&WorkPdf) -> f64| pdfs.iter().zip(&k.weights).map(|(p, &w)| w * f(p)).sum::<f64>();
    Ok(WorkPdf {
        initial_e: mix(&|p| p.initial_e),
        requested_e: mix(&|p| p.requested_e),
        rounding: pdfs.iter().map(|p| p.rounding).fold(0.0, f64::max),
        achieved_mean: mix(&|p| p.achieved_mean),
        density,
        raw,
        direction: pdfs[0].direction,
        method: WorkMethod::Mixture,
        n_states: pdfs.iter().map(|p| p.n_states).sum(),
        window_count: None,
        missing_mass: mix(&|p| p.missing_mass),
        max_norm_drift: pdfs.iter().map(|p| p.max_norm_drift).fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrooksBin {
    pub w: f64,
    pub p: f64,
    pub p_tilde: f64,
    /// `ln[p_E(W) / p~_{E+W}(-W)]`
    pub log_ratio: f64,
    /// `ln[Omega(E+W) / Omega(E)]` from the exponential fit, `beta W`.
    pub log_omega_ratio: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrooksReport {
    pub bins: Vec<CrooksBin>,
    pub max_residual: f64,
}

/// Compares `p_E(W) / p~_{E+W}(-W)` with `Omega(E+W) / Omega(E)` on every
/// bin where both densities exceed `floor` times their own peak.
/// `backward` holds backward-protocol pdfs on the same window grid.
pub fn crooks_check(forward: &WorkPdf, backward: &[WorkPdf], fit: &ExponentialFit, floor: f64) -> Result<CrooksReport> {
    if forward.direction != Direction::Forward {
        return Err(Error::param("forward", "must come from the forward protocol"));
    }
    let delta = forward.delta();
    let mut bins = Vec::new();
    for (j, p) in forward.bins_above(floor) {
        let target = forward.initial_e + j as f64 * delta;
        let Some(b) = backward.iter().find(|b| (b.initial_e - target).abs() < 1e-6 * delta) else {
            continue;
        };
        if b.direction != Direction::Backward {
            return Err(Error::param("backward", "must come from the backward protocol"));
        }
        if (b.delta() - delta).abs() > 1e-12 * delta {
            return Err(Error::GridMismatch("forward and backward bin widths differ".into()));
        }
        let p_tilde = b.density.at(-j);
        let peak = b.density.values.iter().cloned().fold(0.0, f64::max);
        if !(p_tilde > 0.0 && p_tilde >= floor * peak) {
            continue;
        }
        let w = j as f64 * delta;
        let log_ratio = (p / p_tilde).ln();
        let log_omega_ratio = fit.beta * w;
        bins.push(CrooksBin {
            w,
            p,
            p_tilde,
            log_ratio,
            log_omega_ratio,
            residual: log_ratio - log_omega_ratio,
        });
    }
    if bins.is_empty() {
        return Err(Error::NoAdmissibleBins);
    }
    let max_residual = bins.iter().map(|b| b.residual.abs()).fold(0.0, f64::max);
    Ok(CrooksReport { bins, max_residual })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceProbe {
    pub w: f64,
    /// Probability `p_E(W) delta` in the probed bin, per seed.
    pub samples: Vec<f64>,
    pub mean: f64,
    /// Unbiased sample variance of `samples`.
    pub variance: f64,
    /// `1 / (Tr pi + 1)`
    pub bound: f64,
    pub window_count: usize,
}

/// Spread of the bin probability `p_E(W_j) delta` over `n_seeds`
/// Haar-random window states, against `1 / (Tr pi + 1)`.
pub fn typicality_variance_probe<R: Rng + ?Sized>(
    setup: &WorkSetup,
    wgrid: &WorkGrid,
    e: f64,
    bin: i64,
    n_seeds: usize,
    rng: &mut R,
) -> Result<VarianceProbe> {
    if n_seeds < MIN_VARIANCE_SEEDS {
        return Err(Error::TooFewSamples {
            need: MIN_VARIANCE_SEEDS,
            got: n_seeds,
        });
    }
    let seeds: Vec<u64> = (0..n_seeds).map(|_| rng.random()).collect();
    let pdfs = seeds
        .par_iter()
        .map(|&s| {
            let mut r = job_rng(s, 0);
            work_pdf_pure(setup, wgrid, e, Direction::Forward, 1, &mut r)
        })
        .collect::<Result<Vec<_>>>()?;
    let delta = wgrid.delta;
    let samples: Vec<f64> = pdfs.iter().map(|p| p.density.at(bin) * delta).collect();
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let variance = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let window_count = pdfs[0].window_count.unwrap_or(0);
    Ok(VarianceProbe {
        w: bin as f64 * delta,
        samples,
        mean,
        variance,
        bound: 1.0 / (window_count as f64 + 1.0),
        window_count,
    })
}
