//! Initial states: random superpositions inside microcanonical windows,
//! Gaussian-filtered random states, and bath-times-spin product states.

use rand::Rng;

use crate::basis::BasisIndex;
use crate::eigen::Eigensystem;
use crate::error::{Error, Result};
use crate::propagator::TaylorWork;
use crate::sparse::SparseOperator;
use crate::state::{complex_normal, StateVector, C64};

pub const DEFAULT_DELTA: f64 = 0.07;
/// `1 / sqrt(1000)`
pub const DEFAULT_SIGMA: f64 = 0.031_622_776_601_683_79;
pub const DEFAULT_FILTER_STEPS: usize = 2000;

/// `[E - delta/2, E + delta/2)`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyWindow {
    pub e: f64,
    pub delta: f64,
}

impl EnergyWindow {
    pub fn new(e: f64, delta: f64) -> Result<Self> {
        if !e.is_finite() {
            return Err(Error::param("E", "must be finite"));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::param("delta", format!("must be positive, got {delta}")));
        }
        Ok(Self { e, delta })
    }

    pub fn lo(&self) -> f64 {
        self.e - 0.5 * self.delta
    }

    pub fn hi(&self) -> f64 {
        self.e + 0.5 * self.delta
    }

    /// Levels of `eig` inside the window; an empty window is an error.
    pub fn levels(&self, eig: &Eigensystem) -> Result<Vec<usize>> {
        let idx = eig.indices_in(self.lo(), self.hi());
        if idx.is_empty() {
            return Err(Error::EmptyWindow {
                lo: self.lo(),
                hi: self.hi(),
                nearest: eig.nearest(self.e),
            });
        }
        Ok(idx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrepMethod {
    ExactWindow,
    GaussianFilter,
    Product,
}

#[derive(Debug, Clone)]
pub struct PreparedState {
    pub state: StateVector,
    pub achieved_mean: f64,
    pub achieved_std: f64,
    pub method: PrepMethod,
    /// Eigenstates spanning the window, when known.
    pub window_count: Option<usize>,
}

impl PreparedState {
    fn measure(
        h: &SparseOperator,
        state: StateVector,
        method: PrepMethod,
        window_count: Option<usize>,
    ) -> Result<Self> {
        let (achieved_mean, achieved_std) = h.mean_and_std(&state)?;
        Ok(Self {
            state,
            achieved_mean,
            achieved_std,
            method,
            window_count,
        })
    }
}

/// Haar-random state in the span of the window eigenstates: i.i.d. complex
/// normal coefficients, normalized.
pub fn microcanonical_pure<R: Rng + ?Sized>(
    h0: &SparseOperator,
    eig: &Eigensystem,
    win: &EnergyWindow,
    rng: &mut R,
) -> Result<PreparedState> {
    let idx = win.levels(eig)?;
    let coeffs: Vec<(usize, C64)> = idx.iter().map(|&n| (n, complex_normal(rng))).collect();
    let mut state = eig.combination(&coeffs)?;
    state.normalize();
    PreparedState::measure(h0, state, PrepMethod::ExactWindow, Some(idx.len()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterOptions {
    /// Lower limit on the number of imaginary-time steps.
    pub min_steps: usize,
    /// Largest `dtau * ||(H - E)^2||` allowed; the Taylor polynomial of
    /// `exp(-x)` stays contractive up to about 2.78.
    pub stability: f64,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self {
            min_steps: DEFAULT_FILTER_STEPS,
            stability: 2.5,
        }
    }
}

/// Normalized `exp(-(H0 - E)^2 / (4 sigma^2)) |phi>` for a Haar-random `|phi>`,
/// integrated in imaginary time under `(H0 - E)^2` up to `1 / (4 sigma^2)`.
pub fn gaussian_filter_state<R: Rng + ?Sized>(
    h0: &SparseOperator,
    e: f64,
    sigma: f64,
    rng: &mut R,
    opts: &FilterOptions,
) -> Result<PreparedState> {
    let phi = StateVector::random(h0.dim(), rng);
    let state = gaussian_filter(h0, e, sigma, phi, opts)?;
    PreparedState::measure(h0, state, PrepMethod::GaussianFilter, None)
}

/// Applies the Gaussian energy filter to a given state and normalizes.
pub fn gaussian_filter(
    h0: &SparseOperator,
    e: f64,
    sigma: f64,
    mut psi: StateVector,
    opts: &FilterOptions,
) -> Result<StateVector> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::param("sigma", format!("must be positive, got {sigma}")));
    }
    if !e.is_finite() {
        return Err(Error::param("E", "must be finite"));
    }
    let tau = 1.0 / (4.0 * sigma * sigma);
    let (lo, hi) = h0.spectral_range_estimate(60);
    let reach = (hi - e).abs().max((e - lo).abs());
    let dtau_max = opts.stability / (reach * reach).max(1e-12);
    let n_steps = opts.min_steps.max((tau / dtau_max).ceil() as usize).max(1);
    let dtau = tau / n_steps as f64;

    let mut log_norm = psi.normalize().ln();
    let start = log_norm;
    let mut work = TaylorWork::new(h0.dim());
    let alpha = C64::new(-dtau, 0.0);
    for step in 0..n_steps {
        work.step(psi.amplitudes_mut(), alpha, |x, y, tmp| {
            h0.apply_combined(None, e, x, tmp);
            h0.apply_combined(None, e, tmp, y);
        });
        if step % 64 == 63 || step + 1 == n_steps {
            let n = psi.normalize();
            if n == 0.0 || !n.is_finite() {
                return Err(Error::VanishingNorm {
                    energy: e,
                    relative: 0.0,
                });
            }
            log_norm += n.ln();
        }
    }
    let relative = (log_norm - start).exp();
    // a dense window keeps roughly sqrt(sigma * Omega(E)) of the norm
    if relative < 1e-12 {
        return Err(Error::VanishingNorm { energy: e, relative });
    }
    Ok(psi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpinState {
    Up,
    Down,
}

impl SpinState {
    pub fn sz(self) -> f64 {
        match self {
            SpinState::Up => 0.5,
            SpinState::Down => -0.5,
        }
    }
}

/// Embeds `|bath> (x) |m>` into `host`, with the system spin at bit `sys_bit`.
pub fn embed_product(
    bath: &StateVector,
    bath_basis: &BasisIndex,
    m: SpinState,
    host: &BasisIndex,
    sys_bit: u32,
) -> Result<StateVector> {
    if bath.dim() != bath_basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: bath_basis.dim(),
            got: bath.dim(),
        });
    }
    let mask = match m {
        SpinState::Up => 1u64 << sys_bit,
        SpinState::Down => 0,
    };
    let mut out = StateVector::zeros(host.dim());
    for (k, &a) in bath.amplitudes().iter().enumerate() {
        if a == C64::new(0.0, 0.0) {
            continue;
        }
        let idx = host
            .index_of(bath_basis.config(k) | mask)
            .ok_or_else(|| Error::Structural("product state leaves the host magnetization sector".into()))?;
        out.amplitudes_mut()[idx] = a;
    }
    Ok(out)
}

/// Random bath window state times a system spin eigenstate.
///
/// `bath` diagonalizes `H'` on `bath_basis`, which must match the host sector
/// once the system spin is added.
#[allow(clippy::too_many_arguments)]
pub fn product_state<R: Rng + ?Sized>(
    h0: &SparseOperator,
    bath: &Eigensystem,
    bath_basis: &BasisIndex,
    bath_win: &EnergyWindow,
    m: SpinState,
    host: &BasisIndex,
    sys_bit: u32,
    rng: &mut R,
) -> Result<PreparedState> {
    let idx = bath_win.levels(bath)?;
    let coeffs: Vec<(usize, C64)> = idx.iter().map(|&n| (n, complex_normal(rng))).collect();
    let mut b = bath.combination(&coeffs)?;
    b.normalize();
    let state = embed_product(&b, bath_basis, m, host, sys_bit)?;
    PreparedState::measure(h0, state, PrepMethod::Product, Some(idx.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::VectorPolicy;
    use crate::model::{build_bath_hamiltonian_on, build_observable, build_static_hamiltonian, ModelSpec, Observable};
    use crate::rng::job_rng;

    #[test]
    fn single_state_window_returns_the_eigenstate() {
        let spec = ModelSpec::ladder(2, 0.2);
        let h = build_static_hamiltonian(&spec).unwrap();
        let eig = Eigensystem::compute(&spec, VectorPolicy::All).unwrap();
        let e0 = eig.energy(0);
        let gap = eig.energy(1) - e0;
        let win = EnergyWindow::new(e0, gap).unwrap();
        let p = microcanonical_pure(&h, &eig, &win, &mut job_rng(1, 0)).unwrap();
        let ov = eig.vector(0).unwrap().inner(&p.state).unwrap().norm();
        assert!((ov - 1.0).abs() < 1e-12);
        assert_eq!(p.window_count, Some(1));
    }

    #[test]
    fn achieved_mean_lies_in_window_and_empty_windows_fail() {
        let spec = ModelSpec::chain(7);
        let h = build_static_hamiltonian(&spec).unwrap();
        let eig = Eigensystem::compute(&spec, VectorPolicy::All).unwrap();
        let win = EnergyWindow::new(-1.0, 0.3).unwrap();
        for s in 0..5 {
            let p = microcanonical_pure(&h, &eig, &win, &mut job_rng(2, s)).unwrap();
            assert!(p.achieved_mean >= win.lo() && p.achieved_mean <= win.hi());
            assert!((p.state.norm_sqr() - 1.0).abs() < 1e-10);
        }
        let far = EnergyWindow::new(100.0, 0.07).unwrap();
        assert!(matches!(
            microcanonical_pure(&h, &eig, &far, &mut job_rng(2, 0)),
            Err(Error::EmptyWindow { .. })
        ));
    }

    #[test]
    fn filter_leaves_eigenstates_alone() {
        let spec = ModelSpec::ladder(2, 0.2);
        let h = build_static_hamiltonian(&spec).unwrap();
        let eig = Eigensystem::compute(&spec, VectorPolicy::All).unwrap();
        let v = eig.vector(5).unwrap();
        let out = gaussian_filter(&h, eig.energy(5), 0.05, v.clone(), &FilterOptions::default()).unwrap();
        assert!((v.inner(&out).unwrap().norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn filter_far_outside_spectrum_vanishes() {
        let spec = ModelSpec::ladder(2, 0.2);
        let h = build_static_hamiltonian(&spec).unwrap();
        let r = gaussian_filter_state(&h, 40.0, DEFAULT_SIGMA, &mut job_rng(0, 0), &FilterOptions::default());
        assert!(matches!(r, Err(Error::VanishingNorm { .. })));
    }

    #[test]
    fn filtered_state_is_concentrated() {
        let spec = ModelSpec::ladder(4, 0.2);
        let h = build_static_hamiltonian(&spec).unwrap();
        let eig = Eigensystem::compute(&spec, VectorPolicy::All).unwrap();
        let sigma = 0.1;
        let e = -2.0;
        let p = gaussian_filter_state(&h, e, sigma, &mut job_rng(4, 0), &FilterOptions::default()).unwrap();
        let pops = eig.populations(&p.state).unwrap();
        let outside: f64 = eig
            .levels()
            .iter()
            .zip(&pops)
            .filter(|(l, _)| (l.energy - e).abs() > 5.0 * sigma)
            .map(|(_, w)| w.unwrap())
            .sum();
        assert!(outside < 1e-4, "{outside}");
        assert!((p.achieved_mean - e).abs() < 3.0 * sigma);
    }

    #[test]
    fn product_state_spin_and_magnetization() {
        let spec = ModelSpec::ladder(3, 0.2);
        let n = spec.n_spins();
        let host = spec.basis().unwrap();
        let h = build_static_hamiltonian(&spec).unwrap();
        let bath_basis = BasisIndex::full(n - 1).unwrap();
        let build = |b: &BasisIndex| build_bath_hamiltonian_on(&spec, b);
        let bath = Eigensystem::compute_with(
            &bath_basis,
            None,
            spec.bath_symmetry().as_ref(),
            &build,
            VectorPolicy::All,
        )
        .unwrap();
        let win = EnergyWindow::new(-1.0, 0.3).unwrap();
        let sz = build_observable(&spec, Observable::SzSys).unwrap();
        let p = product_state(
            &h,
            &bath,
            &bath_basis,
            &win,
            SpinState::Up,
            &host,
            n - 1,
            &mut job_rng(3, 0),
        )
        .unwrap();
        assert!((sz.expectation(&p.state).unwrap().re - 0.5).abs() < 1e-14);
        // the coupling shifts the mean by less than kappa
        assert!((p.achieved_mean - (-1.0 + 0.25)).abs() < 0.2 + 0.15);
    }
}
