//! Time evolution under `H(t) = H0 + lambda sin(nu t) V`.
//!
//! Each step freezes the Hamiltonian at the step midpoint and applies the
//! fourth-order Taylor polynomial of `exp(-i H dt)` (which is what the
//! classical RK4 stages reduce to for a constant matrix):
//! `v_k = (alpha / k) H v_{k-1}`, `psi <- psi + v_1 + v_2 + v_3 + v_4`
//! with `alpha = -i dt`. The state is never renormalized; the norm drift is
//! checked against a budget at the end.

use std::f64::consts::PI;

use faer::Mat;

use crate::eigen::dense_symmetric_eigen;
use crate::error::{Error, Result};
use crate::sparse::SparseOperator;
use crate::state::{check_dim, StateVector, C64};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_NORM_BUDGET: f64 = 1e-6;
/// Dimension limit of the dense propagator oracle.
pub const ORACLE_DIM_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveProtocol {
    pub lambda: f64,
    pub nu: f64,
    /// Duration in units of `pi / nu`.
    pub half_periods: u32,
    pub direction: Direction,
}

impl DriveProtocol {
    pub fn new(lambda: f64, nu: f64, half_periods: u32) -> Result<Self> {
        let p = Self {
            lambda,
            nu,
            half_periods,
            direction: Direction::Forward,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() {
            return Err(Error::param("lambda", "must be finite"));
        }
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(Error::param("nu", format!("must be positive, got {}", self.nu)));
        }
        if self.half_periods == 0 {
            return Err(Error::param("half_periods", "must be at least 1"));
        }
        Ok(())
    }

    pub fn reversed(mut self) -> Self {
        self.direction = match self.direction {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        };
        self
    }

    pub fn duration(&self) -> f64 {
        self.half_periods as f64 * PI / self.nu
    }

    /// Drive prefactor at time `t`; the backward protocol runs the schedule from `T` to `0`.
    pub fn amplitude(&self, t: f64) -> f64 {
        let t = match self.direction {
            Direction::Forward => t,
            Direction::Backward => self.duration() - t,
        };
        self.lambda * (self.nu * t).sin()
    }

    /// An odd number of half periods makes `H(T - t) = H(t)`.
    pub fn is_time_symmetric(&self) -> bool {
        self.half_periods % 2 == 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::param("dt", format!("must be positive, got {dt}")));
        }
        if n_steps == 0 {
            return Err(Error::param("n_steps", "must be at least 1"));
        }
        Ok(Self { dt, n_steps })
    }

    /// Smallest uniform grid covering `duration` with steps no larger than `dt_max`.
    pub fn covering(duration: f64, dt_max: f64) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::param("duration", format!("must be positive, got {duration}")));
        }
        if !(dt_max.is_finite() && dt_max > 0.0) {
            return Err(Error::param("dt", format!("must be positive, got {dt_max}")));
        }
        let n = (duration / dt_max - 1e-9).ceil().max(1.0) as usize;
        Self::new(duration / n as f64, n)
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn midpoint(&self, step: usize) -> f64 {
        (step as f64 + 0.5) * self.dt
    }
}

/// Constant subtracted from `H0` while integrating; only a global phase,
/// which is restored at the end, but it shrinks the Taylor truncation error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnergyShift {
    None,
    /// `<psi0|H0|psi0>`
    Mean,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationOptions {
    pub shift: EnergyShift,
    pub norm_budget: f64,
    /// Observer cadence in steps; `None` means `ceil(n_steps / 2000)`.
    pub sample_every: Option<usize>,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self {
            shift: EnergyShift::Mean,
            norm_budget: DEFAULT_NORM_BUDGET,
            sample_every: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Propagation {
    pub state: StateVector,
    /// `|<psi(T)|psi(T)> - <psi0|psi0>|`
    pub norm_drift: f64,
    pub shift: f64,
}

/// Reusable buffers for Taylor steps.
pub(crate) struct TaylorWork {
    term: Vec<C64>,
    next: Vec<C64>,
    scratch: Vec<C64>,
}

impl TaylorWork {
    pub(crate) fn new(dim: usize) -> Self {
        let z = C64::new(0.0, 0.0);
        Self {
            term: vec![z; dim],
            next: vec![z; dim],
            scratch: vec![z; dim],
        }
    }

    /// `psi <- sum_{k<=4} (alpha A)^k / k! psi` for the operator `apply(x, y, scratch)`: `y = A x`.
    pub(crate) fn step<F>(&mut self, psi: &mut [C64], alpha: C64, mut apply: F)
    where
        F: FnMut(&[C64], &mut [C64], &mut [C64]),
    {
        self.term.copy_from_slice(psi);
        for k in 1..=4 {
            apply(&self.term, &mut self.next, &mut self.scratch);
            let f = alpha / k as f64;
            for (p, (t, n)) in psi.iter_mut().zip(self.term.iter_mut().zip(&self.next)) {
                *t = n * f;
                *p += *t;
            }
        }
    }
}

/// Integrates from `psi0` over `grid`. With `drive = None` the evolution is
/// under `H0` alone. `observer(t, psi)` sees the state at `t = 0`, every
/// `sample_every` steps and at the end.
pub fn propagate(
    h0: &SparseOperator,
    drive: Option<(&SparseOperator, &DriveProtocol)>,
    grid: &TimeGrid,
    psi0: &StateVector,
    opts: &PropagationOptions,
    mut observer: Option<&mut dyn FnMut(f64, &StateVector)>,
) -> Result<Propagation> {
    check_dim(h0.dim(), psi0.dim())?;
    if let Some((v, proto)) = drive {
        check_dim(h0.dim(), v.dim())?;
        proto.validate()?;
    }
    let shift = match opts.shift {
        EnergyShift::None => 0.0,
        EnergyShift::Fixed(c) => c,
        EnergyShift::Mean => h0.mean_and_std(psi0)?.0,
    };
    let every = opts.sample_every.unwrap_or_else(|| grid.n_steps.div_ceil(2000)).max(1);
    let norm0 = psi0.norm_sqr();
    let mut psi = psi0.clone();
    let mut work = TaylorWork::new(h0.dim());
    let alpha = C64::new(0.0, -grid.dt);

    if let Some(obs) = observer.as_mut() {
        obs(0.0, &psi);
    }
    for step in 0..grid.n_steps {
        let extra = drive.map(|(v, proto)| (v, proto.amplitude(grid.midpoint(step))));
        let extra = extra.filter(|&(_, s)| s != 0.0);
        work.step(psi.amplitudes_mut(), alpha, |x, y, _| {
            h0.apply_combined(extra, shift, x, y)
        });
        let done = step + 1;
        if let Some(obs) = observer.as_mut() {
            if done % every == 0 || done == grid.n_steps {
                let t = done as f64 * grid.dt;
                if shift != 0.0 {
                    let mut view = psi.clone();
                    rephase(&mut view, shift * t);
                    obs(t, &view);
                } else {
                    obs(t, &psi);
                }
            }
        }
    }
    rephase(&mut psi, shift * grid.duration());
    let norm_drift = (psi.norm_sqr() - norm0).abs();
    if norm_drift > opts.norm_budget {
        return Err(Error::NormBudget {
            drift: norm_drift,
            budget: opts.norm_budget,
            dt: grid.dt,
        });
    }
    Ok(Propagation {
        state: psi,
        norm_drift,
        shift,
    })
}

/// Multiplies by `exp(-i phase)`, undoing the `+shift` of `H0 - shift`.
fn rephase(psi: &mut StateVector, phase: f64) {
    if phase != 0.0 {
        let f = C64::from_polar(1.0, -phase);
        psi.amplitudes_mut().iter_mut().for_each(|a| *a *= f);
    }
}

/// `exp(-i M t)` for a real symmetric `M`.
pub fn dense_exp_symmetric(m: &Mat<f64>, t: f64) -> Result<Mat<C64>> {
    let (vals, q) = dense_symmetric_eigen(m)?;
    let n = m.nrows();
    let qc = Mat::<C64>::from_fn(n, n, |i, j| C64::new(q[(i, j)], 0.0));
    let qd = Mat::<C64>::from_fn(n, n, |i, j| qc[(i, j)] * C64::from_polar(1.0, -vals[j] * t));
    Ok(&qd * qc.transpose())
}

/// Product of exact exponentials of the midpoint-frozen Hamiltonians on `grid`.
pub fn dense_propagator_oracle(
    h0: &SparseOperator,
    v: &SparseOperator,
    proto: &DriveProtocol,
    grid: &TimeGrid,
) -> Result<Mat<C64>> {
    let dim = h0.dim();
    check_dim(dim, v.dim())?;
    if dim > ORACLE_DIM_LIMIT {
        return Err(Error::DimensionGuard {
            dim,
            limit: ORACLE_DIM_LIMIT,
            hint: "the dense oracle is a test instrument for small systems",
        });
    }
    let h = h0.to_dense();
    let vd = v.to_dense();
    let mut u = Mat::<C64>::identity(dim, dim);
    for step in 0..grid.n_steps {
        let s = proto.amplitude(grid.midpoint(step));
        let hk = &h + &vd * faer::Scale(s);
        let e = dense_exp_symmetric(&hk, grid.dt)?;
        u = &e * &u;
    }
    Ok(u)
}

/// Applies the midpoint-frozen exact propagator on `grid` to a state.
pub fn dense_oracle_state(
    h0: &SparseOperator,
    v: &SparseOperator,
    proto: &DriveProtocol,
    grid: &TimeGrid,
    psi0: &StateVector,
) -> Result<StateVector> {
    let dim = h0.dim();
    check_dim(dim, psi0.dim())?;
    if dim > ORACLE_DIM_LIMIT {
        return Err(Error::DimensionGuard {
            dim,
            limit: ORACLE_DIM_LIMIT,
            hint: "the dense oracle is a test instrument for small systems",
        });
    }
    let h = h0.to_dense();
    let vd = v.to_dense();
    let mut psi = Mat::<C64>::from_fn(dim, 1, |i, _| psi0.amplitudes()[i]);
    for step in 0..grid.n_steps {
        let s = proto.amplitude(grid.midpoint(step));
        let hk = &h + &vd * faer::Scale(s);
        let (vals, q) = dense_symmetric_eigen(&hk)?;
        // q^T psi, phase, q (.)
        let mut c = vec![C64::new(0.0, 0.0); dim];
        for (j, cj) in c.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..dim {
                acc += psi[(i, 0)] * q[(i, j)];
            }
            *cj = acc * C64::from_polar(1.0, -vals[j] * grid.dt);
        }
        for i in 0..dim {
            let mut acc = C64::new(0.0, 0.0);
            for (j, cj) in c.iter().enumerate() {
                acc += cj * q[(i, j)];
            }
            psi[(i, 0)] = acc;
        }
    }
    Ok(StateVector::from_amplitudes((0..dim).map(|i| psi[(i, 0)]).collect()))
}

/// Max elementwise modulus of `A - B`.
pub fn max_abs_diff(a: &Mat<C64>, b: &Mat<C64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            worst = worst.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    worst
}
