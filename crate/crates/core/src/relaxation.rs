//! Undriven relaxation of the system spin from bath-window (x) spin product
//! states, its half-decay time, an exponential-fit classification and the
//! canonical value it should approach.

use rand::Rng;

use crate::basis::{BasisIndex, Magnetization};
use crate::eigen::{Eigensystem, VectorPolicy};
use crate::error::{Error, Result};
use crate::model::{
    build_bath_hamiltonian_on, build_observable, build_static_hamiltonian, observable_diagonal, ModelSpec, Observable,
};
use crate::propagator::{propagate, PropagationOptions, TimeGrid};
use crate::sparse::SparseOperator;
use crate::state::StateVector;
use crate::state_prep::{product_state, EnergyWindow, PreparedState, SpinState};

/// Normalized RMS residual below which a decay counts as exponential.
pub const EXPONENTIAL_NRMS: f64 = 0.05;
/// The exponential fit covers `t <= FIT_SPAN tau_R`, so long equilibrium
/// tails do not dilute the residual.
pub const FIT_SPAN: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub label: String,
}

/// `A exp(-rate t) + offset`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpFit {
    pub amplitude: f64,
    pub rate: f64,
    pub offset: f64,
    /// RMS residual over the initial distance from the offset.
    pub nrms: f64,
}

impl ExpFit {
    pub fn is_exponential(&self) -> bool {
        self.nrms < EXPONENTIAL_NRMS
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationFit {
    /// First time the signal minus its long-time average falls to half its initial value.
    pub tau_r: f64,
    /// Offset pinned to the long-time average, fitted over `t <= FIT_SPAN tau_R`.
    pub exp_fit: Option<ExpFit>,
    /// Mean over the final third of the trajectory.
    pub long_time_average: f64,
}

impl Trajectory {
    /// Pointwise mean of trajectories sampled on the same times.
    pub fn mean(runs: &[Trajectory], label: &str) -> Result<Trajectory> {
        let first = runs.first().ok_or(Error::TooFewSamples { need: 1, got: 0 })?;
        if runs.iter().any(|r| r.times != first.times) {
            return Err(Error::param("trajectories", "sample times differ"));
        }
        let k = runs.len() as f64;
        let values = (0..first.times.len())
            .map(|i| runs.iter().map(|r| r.values[i]).sum::<f64>() / k)
            .collect();
        Ok(Trajectory {
            times: first.times.clone(),
            values,
            label: label.to_string(),
        })
    }
}

/// `<O>(t)` along the undriven evolution of `prep` under `h0`.
pub fn relax_trajectory(
    h0: &SparseOperator,
    observable: &SparseOperator,
    prep: &PreparedState,
    grid: &TimeGrid,
    opts: &PropagationOptions,
    label: &str,
) -> Result<Trajectory> {
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut err = None;
    let norm = prep.state.norm_sqr();
    let mut obs = |t: f64, s: &StateVector| match observable.expectation(s) {
        Ok(v) => {
            times.push(t);
            values.push(v.re / norm);
        }
        Err(e) => err = Some(e),
    };
    propagate(h0, None, grid, &prep.state, opts, Some(&mut obs))?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(Trajectory {
        times,
        values,
        label: label.to_string(),
    })
}

/// Half-decay time, long-time average and exponential fit of a trajectory.
pub fn relaxation_time(traj: &Trajectory) -> Result<RelaxationFit> {
    let n = traj.values.len();
    if n < 6 || traj.times.len() != n {
        return Err(Error::TooFewSamples { need: 6, got: n });
    }
    let tail = &traj.values[n - n / 3..];
    let avg = tail.iter().sum::<f64>() / tail.len() as f64;
    let s0 = traj.values[0] - avg;
    if s0 == 0.0 {
        return Err(Error::NoDecay);
    }
    let mut tau_r = None;
    for k in 1..n {
        let s = (traj.values[k] - avg) / s0;
        if s <= 0.5 {
            let sp = (traj.values[k - 1] - avg) / s0;
            let (t0, t1) = (traj.times[k - 1], traj.times[k]);
            tau_r = Some(t0 + (sp - 0.5) / (sp - s) * (t1 - t0));
            break;
        }
    }
    let tau_r = tau_r.ok_or(Error::NoDecay)?;
    let m = traj.times.partition_point(|&t| t <= traj.times[0] + FIT_SPAN * tau_r);
    Ok(RelaxationFit {
        tau_r,
        exp_fit: fit_exponential_decay(&traj.times[..m], &traj.values[..m], avg),
        long_time_average: avg,
    })
}

/// Least squares `A exp(-r t) + offset` with the offset held fixed: `A` is
/// linear for each `r`, and `ln r` is minimized by golden section over a
/// bracket set by the time span.
pub fn fit_exponential_decay(times: &[f64], values: &[f64], offset: f64) -> Option<ExpFit> {
    let t_span = times.last()? - times.first()?;
    if t_span <= 0.0 || times.len() < 4 || times.len() != values.len() {
        return None;
    }
    let s0 = values[0] - offset;
    if s0 == 0.0 {
        return None;
    }
    let solve = |r: f64| -> (f64, f64) {
        let (mut sxx, mut sxy) = (0.0, 0.0);
        for (&t, &y) in times.iter().zip(values) {
            let x = (-r * t).exp();
            sxx += x * x;
            sxy += x * (y - offset);
        }
        if sxx < 1e-300 {
            return (0.0, f64::INFINITY);
        }
        let a = sxy / sxx;
        let sse = times
            .iter()
            .zip(values)
            .map(|(&t, &y)| (y - offset - a * (-r * t).exp()).powi(2))
            .sum();
        (a, sse)
    };
    let (mut lo, mut hi) = ((0.1 / t_span).ln(), (1000.0 / t_span).ln());
    // coarse scan then golden section around the best point
    let steps = 60;
    let mut best = lo;
    let mut best_sse = f64::INFINITY;
    for k in 0..=steps {
        let x = lo + (hi - lo) * k as f64 / steps as f64;
        let sse = solve(x.exp()).1;
        if sse < best_sse {
            best_sse = sse;
            best = x;
        }
    }
    let h = (hi - lo) / steps as f64;
    lo = best - h;
    hi = best + h;
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut fa, mut fb) = (solve(a.exp()).1, solve(b.exp()).1);
    for _ in 0..80 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = solve(a.exp()).1;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = solve(b.exp()).1;
        }
    }
    let rate = (0.5 * (lo + hi)).exp();
    let (amplitude, sse) = solve(rate);
    if !sse.is_finite() || amplitude == 0.0 {
        return None;
    }
    let nrms = (sse / times.len() as f64).sqrt() / s0.abs();
    Some(ExpFit {
        amplitude,
        rate,
        offset,
        nrms,
    })
}

/// `Tr{exp(-beta H) O} / Tr{exp(-beta H)}` for an observable diagonal in the
/// computational basis; every eigenvector of `eig` must be kept.
pub fn canonical_equilibrium(eig: &Eigensystem, beta: f64, diag: &[f64]) -> Result<f64> {
    if !beta.is_finite() {
        return Err(Error::param("beta", "must be finite"));
    }
    let expect = eig.diagonal_expectations(diag)?;
    let e_ref = if beta >= 0.0 {
        eig.energy(0)
    } else {
        eig.energy(eig.len() - 1)
    };
    let (mut z, mut o) = (0.0, 0.0);
    for (l, x) in eig.levels().iter().zip(expect) {
        let x = x.ok_or_else(|| Error::param("eigensystem", "canonical averages need every eigenvector"))?;
        let w = (-beta * (l.energy - e_ref)).exp();
        z += w;
        o += w * x;
    }
    Ok(o / z)
}

/// The magnetization sector with the most states, `n_up = floor(N / 2)`.
pub fn largest_sector(n_spins: u32) -> Magnetization {
    Magnetization::with_n_up(n_spins, n_spins / 2)
}

/// One spin down from full polarization.
pub fn one_down_sector(n_spins: u32) -> Magnetization {
    Magnetization::with_n_up(n_spins, n_spins - 1)
}

/// Sector-restricted relaxation setup: `H0` and `S^z_sys` on one
/// magnetization sector, with bath states drawn from the matching bath sector.
#[derive(Debug, Clone)]
pub struct RelaxationProblem {
    pub spec: ModelSpec,
    pub host: BasisIndex,
    pub h0: SparseOperator,
    pub sz: SparseOperator,
}

impl RelaxationProblem {
    pub fn new(spec: &ModelSpec, sector: Magnetization) -> Result<Self> {
        let spec = spec.clone().with_sector(Some(sector));
        spec.validate()?;
        let host = spec.basis()?;
        Ok(Self {
            h0: build_static_hamiltonian(&spec)?,
            sz: build_observable(&spec, Observable::SzSys)?,
            host,
            spec,
        })
    }

    pub fn sector(&self) -> Magnetization {
        self.host
            .sector_label()
            .expect("relaxation problems are sector restricted")
    }

    /// Bath sector that combines with spin `m` into this problem's sector.
    pub fn bath_basis(&self, m: SpinState) -> Result<BasisIndex> {
        let n = self.spec.n_spins();
        let n_up = self
            .sector()
            .n_up(n)
            .ok_or_else(|| Error::param("sector", "not attainable"))?;
        let bath_up = match m {
            SpinState::Up => n_up.checked_sub(1),
            SpinState::Down => Some(n_up),
        }
        .filter(|&u| u < n)
        .ok_or_else(|| Error::param("m", "no bath sector combines with this spin state"))?;
        BasisIndex::sector(n - 1, Magnetization::with_n_up(n - 1, bath_up))
    }

    /// Random bath window state around `bath_e` times the spin state `m`.
    pub fn prepare<R: Rng + ?Sized>(
        &self,
        bath_e: f64,
        delta: f64,
        m: SpinState,
        rng: &mut R,
    ) -> Result<PreparedState> {
        let win = EnergyWindow::new(bath_e, delta)?;
        let bath_basis = self.bath_basis(m)?;
        let build = |b: &BasisIndex| build_bath_hamiltonian_on(&self.spec, b);
        let policy = VectorPolicy::Range {
            lo: win.lo(),
            hi: win.hi(),
        };
        let bath = Eigensystem::compute_with(&bath_basis, None, self.spec.bath_symmetry().as_ref(), &build, policy)?;
        product_state(
            &self.h0,
            &bath,
            &bath_basis,
            &win,
            m,
            &self.host,
            self.spec.sys_bit(),
            rng,
        )
    }

    pub fn run(&self, prep: &PreparedState, t_max: f64, dt: f64, samples: usize, label: &str) -> Result<Trajectory> {
        let grid = TimeGrid::covering(t_max, dt)?;
        let opts = PropagationOptions {
            sample_every: Some(grid.n_steps.div_ceil(samples.max(1))),
            ..PropagationOptions::default()
        };
        relax_trajectory(&self.h0, &self.sz, prep, &grid, &opts, label)
    }

    /// Canonical `<S^z_sys>` within the sector.
    pub fn canonical(&self, beta: f64) -> Result<f64> {
        let eig = Eigensystem::compute(&self.spec, VectorPolicy::All)?;
        let diag = observable_diagonal(&self.spec, &self.host, Observable::SzSys);
        canonical_equilibrium(&eig, beta, &diag)
    }
}
