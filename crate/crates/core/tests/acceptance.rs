//! Acceptance run over the twelve criteria. Every criterion prints one
//! `criterion NN: PASS|FAIL` line on stdout (written past the test harness
//! capture, so it shows up in plain `cargo test` output). Computation errors
//! panic; a red criterion only fails the test when
//! `STIFFWORK_ACCEPTANCE_STRICT=1` is set.
//!
//! The full run takes a bit over an hour on one core.

use std::io::Write;
use std::time::Instant;

use faer::Mat;

use stiffwork::eigen::{Eigensystem, VectorPolicy};
use stiffwork::fgr_eth::{
    detailed_balance_residuals, rate_stiffness, short_time_check, ElementStats, SpreadReport, WindowPartition,
};
use stiffwork::model::{build_drive_operator, build_observable, build_static_hamiltonian, ModelSpec, Observable};
use stiffwork::propagator::{
    dense_oracle_state, dense_propagator_oracle, max_abs_diff, propagate, Direction, DriveProtocol, PropagationOptions,
    TimeGrid,
};
use stiffwork::relaxation::{largest_sector, relaxation_time, RelaxationProblem, Trajectory};
use stiffwork::rng::{job_rng, split_seed};
use stiffwork::sparse::SparseOperator;
use stiffwork::spectral::{
    dos_from_eigenvalues, dos_matched, dos_typicality, fit_exponential, FourierOptions, Grained, SampleGrid,
};
use stiffwork::state::{StateVector, C64};
use stiffwork::state_prep::SpinState;
use stiffwork::work::{
    chi_resampled, crooks_check, jarzynski_estimate, mixture_work_pdf, stiffness_sweep, typicality_variance_probe,
    work_pdf_exact, work_pdf_pure, MixtureWeights, SweepMethod, WorkGrid, WorkPdf, WorkSetup,
};
use stiffwork::Error;

const SEED: u64 = 7;
const DELTA: f64 = 0.07;
const WINDOW: f64 = 2.5;
const GRAINING: f64 = 0.09;
const N_ENERGIES: usize = 11;
/// Random window states per energy where the exact trace is out of reach.
const PURE_STATES: usize = 8;
const RELAX_SEEDS: u64 = 4;

fn say(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
    let _ = out.flush();
}

fn note(text: &str) {
    say(&format!("    {text}"));
}

struct Verdicts {
    rows: Vec<(u32, bool)>,
}

impl Verdicts {
    fn record(&mut self, id: u32, pass: bool, summary: &str) {
        say(&format!(
            "criterion {id:>2}: {} {summary}",
            if pass { "PASS" } else { "FAIL" }
        ));
        self.rows.push((id, pass));
    }
}

/// `H0`, `V`, eigensystem and protocol of one preset at one size.
struct Driven {
    n: u32,
    e0: f64,
    h0: SparseOperator,
    v: SparseOperator,
    eig: Eigensystem,
    protocol: DriveProtocol,
    grid: TimeGrid,
}

impl Driven {
    fn ladder(l: u32, kappa: f64) -> Self {
        let spec = ModelSpec::ladder(l, kappa);
        let e0 = -0.2 * spec.n_spins() as f64;
        Self::build(spec, e0, DriveProtocol::new(0.26, 0.5, 13).unwrap(), 0.05, 4.0)
    }

    fn chain(l: u32) -> Self {
        let spec = ModelSpec::chain(l);
        let e0 = -0.18 * spec.n_spins() as f64;
        Self::build(spec, e0, DriveProtocol::new(3.85, 0.75, 1).unwrap(), 0.02, 4.0 + 3.85)
    }

    fn build(spec: ModelSpec, e0: f64, protocol: DriveProtocol, dt: f64, reach: f64) -> Self {
        let t = Instant::now();
        let half = 0.5 * WINDOW + reach;
        let eig = Eigensystem::compute(
            &spec,
            VectorPolicy::Range {
                lo: e0 - half,
                hi: e0 + half,
            },
        )
        .unwrap();
        note(&format!(
            "{:?} N = {}: diagonalized in {:.0} s",
            spec.topology,
            spec.n_spins(),
            t.elapsed().as_secs_f64()
        ));
        Self {
            n: spec.n_spins(),
            e0,
            h0: build_static_hamiltonian(&spec).unwrap(),
            v: build_drive_operator(&spec).unwrap(),
            eig,
            grid: TimeGrid::covering(protocol.duration(), dt).unwrap(),
            protocol,
        }
    }

    fn setup(&self) -> WorkSetup<'_> {
        WorkSetup {
            h0: &self.h0,
            v: &self.v,
            eig: &self.eig,
            protocol: self.protocol,
            grid: self.grid,
            options: PropagationOptions::default(),
        }
    }

    fn wgrid(&self) -> WorkGrid {
        WorkGrid::new(self.e0, DELTA).unwrap()
    }

    fn beta(&self) -> f64 {
        let dos = dos_from_eigenvalues(&self.eig.values(), GRAINING).unwrap();
        fit_exponential(&dos.density, self.e0 - 0.5 * WINDOW, self.e0 + 0.5 * WINDOW)
            .unwrap()
            .beta
    }

    /// Stiffness sweep over the preset window; `None` runs the exact trace.
    fn sweep(&self, pure: Option<usize>) -> stiffwork::work::StiffnessSweep {
        let t = Instant::now();
        let method = match pure {
            None => SweepMethod::ExactTrace,
            Some(k) => SweepMethod::PureState {
                n_states: k,
                seed: SEED,
            },
        };
        let sw = stiffness_sweep(&self.setup(), &self.wgrid(), self.e0, WINDOW, N_ENERGIES, method).unwrap();
        let counts: Vec<usize> = sw.pdfs.iter().filter_map(|p| p.window_count).collect();
        let missing = sw.pdfs.iter().map(|p| p.missing_mass).fold(0.0, f64::max);
        note(&format!(
            "N = {}: chi_bar = {:.5} ({}), window counts {:?}, skipped empty {:?}, missing mass {:.1e}, {:.0} s",
            self.n,
            sw.report.chi_bar,
            pure.map_or("exact trace".to_string(), |k| format!("{k} pure states per window")),
            counts,
            sw.skipped,
            missing,
            t.elapsed().as_secs_f64()
        ));
        sw
    }
}

/// Slope and R^2 of `-ln chi_bar` against `ln N`.
fn loglog_slope(points: &[(u32, f64)]) -> (f64, f64) {
    let xy: Vec<(f64, f64)> = points.iter().map(|&(n, c)| ((n as f64).ln(), -c.ln())).collect();
    let m = xy.len() as f64;
    let (mx, my) = xy.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / m, a.1 + p.1 / m));
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = xy.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, sxy * sxy / (sxx * syy))
}

fn strictly_decreasing(points: &[(u32, f64)]) -> bool {
    points.windows(2).all(|w| w[1].1 < w[0].1)
}

/// Local maxima of a density above `min_frac` of its peak, as `(W, height)`.
fn local_peaks(g: &Grained, min_frac: f64) -> Vec<(f64, f64)> {
    let peak = g.values.iter().cloned().fold(0.0, f64::max);
    (0..g.len())
        .filter(|&i| {
            let v = g.values[i];
            let left = if i > 0 { g.values[i - 1] } else { 0.0 };
            let right = g.values.get(i + 1).copied().unwrap_or(0.0);
            v > left && v >= right && v >= min_frac * peak
        })
        .map(|i| (g.center(i), g.values[i]))
        .collect()
}

/// Largest relative spread over the omegas whose mean rate is at least a
/// tenth of the largest mean rate, and the largest spread over all omegas.
fn significant_spread(rep: &SpreadReport) -> (f64, f64) {
    let top = rep.per_omega.iter().map(|s| s.mean).fold(0.0, f64::max);
    let sig = rep
        .per_omega
        .iter()
        .filter(|s| s.mean >= 0.1 * top)
        .map(|s| s.relative_spread)
        .fold(0.0, f64::max);
    (sig, rep.max_spread)
}

struct RateFindings {
    /// Zero fraction among pairs no resolved symmetry forbids.
    zero_fraction: f64,
    spread: Option<(f64, f64)>,
    balance: Option<f64>,
}

/// Golden-rule rates on `delta` windows over the preset window plus `max_omega`.
fn rate_findings(eig: &Eigensystem, v: &SparseOperator, e0: f64, beta: Option<f64>, label: &str) -> RateFindings {
    let max_omega = 1.0;
    let half = 0.5 * WINDOW;
    let part = WindowPartition::new(
        eig,
        e0,
        DELTA,
        e0 - half - max_omega - DELTA,
        e0 + half + max_omega + DELTA,
    )
    .unwrap();
    let stats = ElementStats::compute(eig, v, &part).unwrap();
    let rm = stats.rates();
    let lo_count = part.counts.iter().min().copied().unwrap_or(0);
    let hi_count = part.counts.iter().max().copied().unwrap_or(0);
    note(&format!(
        "{label}: window counts {lo_count}..{hi_count}, zero fraction {:.3} over all pairs, {:.3} over symmetry-allowed pairs",
        stats.zero_fraction(),
        stats.connected_zero_fraction()
    ));
    let mut out = RateFindings {
        zero_fraction: stats.connected_zero_fraction(),
        spread: None,
        balance: None,
    };
    match rate_stiffness(&rm, e0 - half, e0 + half, max_omega) {
        Ok(rep) => {
            let (sig, all) = significant_spread(&rep);
            out.spread = Some((sig, all));
            out.balance = beta.map(|b| {
                detailed_balance_residuals(&rep, b)
                    .iter()
                    .map(|r| r.1.abs())
                    .fold(0.0, f64::max)
            });
            note(&format!(
                "{label}: rate spread {sig:.3} on omegas with >= 10% of the peak rate ({all:.3} over all |omega| <= 1){}",
                out.balance
                    .map_or(String::new(), |b| format!(", max |ln g(w) + beta w - ln g(-w)| = {b:.3}"))
            ));
        }
        Err(e) => note(&format!("{label}: no rate spread ({e})")),
    }
    out
}

fn infidelity(a: &StateVector, b: &StateVector) -> f64 {
    1.0 - a.inner(b).unwrap().norm_sqr() / (a.norm_sqr() * b.norm_sqr())
}

fn conjugate(m: &Mat<C64>) -> Mat<C64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].conj())
}

fn criterion_1(out: &mut Verdicts) {
    let mut worst: f64 = 0.0;
    let pair = Eigensystem::compute(&ModelSpec::chain(1), VectorPolicy::None)
        .unwrap()
        .values();
    for (a, b) in pair.iter().zip([-0.75, 0.25, 0.25, 0.25]) {
        worst = worst.max((a - b).abs());
    }
    let spin = Eigensystem::compute(&ModelSpec::ladder(0, 0.2), VectorPolicy::None)
        .unwrap()
        .values();
    for (a, b) in spin.iter().zip([-0.25, 0.25]) {
        worst = worst.max((a - b).abs());
    }
    let mut herm: f64 = 0.0;
    let mut comm: f64 = 0.0;
    for spec in [
        ModelSpec::ladder(4, 0.2),
        ModelSpec::ladder(4, 0.6),
        ModelSpec::chain(9),
    ] {
        let h = build_static_hamiltonian(&spec).unwrap();
        let v = build_drive_operator(&spec).unwrap();
        let m = build_observable(&spec, Observable::MTotal).unwrap();
        herm = herm.max(h.max_asymmetry()).max(v.max_asymmetry());
        comm = comm.max(h.commutator_residual(&m).unwrap());
    }
    // the drive flips one spin, so it must not commute with M_total
    let spec = ModelSpec::ladder(2, 0.2);
    let flips = build_drive_operator(&spec)
        .unwrap()
        .commutator_residual(&build_observable(&spec, Observable::MTotal).unwrap())
        .unwrap();
    note(&format!(
        "two-site and single-spin spectra off by {worst:.1e}; asymmetry {herm:.1e}; [H0, M] residual {comm:.1e}; [V, M] residual {flips:.2}"
    ));
    let pass = worst < 1e-10 && herm < 1e-10 && comm < 1e-10 && flips > 0.1;
    out.record(1, pass, "exact algebra to 1e-10");
}

fn criterion_2(out: &mut Verdicts) {
    let t = Instant::now();
    let proto = DriveProtocol::new(0.26, 0.5, 13).unwrap();
    let spec = ModelSpec::ladder(4, 0.2);
    let h = build_static_hamiltonian(&spec).unwrap();
    let v = build_drive_operator(&spec).unwrap();
    let grid = TimeGrid::covering(proto.duration(), 0.05).unwrap();
    let psi = StateVector::random(h.dim(), &mut job_rng(SEED, 0));
    // a full-band random state drifts more than the window states used in production
    let loose = PropagationOptions {
        norm_budget: 1.0,
        ..PropagationOptions::default()
    };
    let fast = propagate(&h, Some((&v, &proto)), &grid, &psi, &loose, None).unwrap();
    let exact = dense_oracle_state(&h, &v, &proto, &grid, &psi).unwrap();
    let inf = infidelity(&fast.state, &exact);
    note(&format!(
        "ladder N = 9, {} steps of {:.4}: infidelity {inf:.2e}, norm drift {:.1e} ({:.0} s)",
        grid.n_steps,
        grid.dt,
        fast.norm_drift,
        t.elapsed().as_secs_f64()
    ));

    // step halving on N = 7 over the same protocol; the oracle shares each grid
    let spec = ModelSpec::ladder(3, 0.2);
    let h = build_static_hamiltonian(&spec).unwrap();
    let v = build_drive_operator(&spec).unwrap();
    let psi = StateVector::random(h.dim(), &mut job_rng(SEED, 1));
    let errors: Vec<f64> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&dt| {
            let grid = TimeGrid::covering(proto.duration(), dt).unwrap();
            let a = propagate(&h, Some((&v, &proto)), &grid, &psi, &loose, None)
                .unwrap()
                .state;
            let b = dense_oracle_state(&h, &v, &proto, &grid, &psi).unwrap();
            a.amplitudes()
                .iter()
                .zip(b.amplitudes())
                .map(|(x, y)| (x - y).norm_sqr())
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let shown: Vec<String> = errors.iter().map(|e| format!("{e:.2e}")).collect();
    note(&format!(
        "ladder N = 7 errors at dt 0.2/0.1/0.05: {}, orders {orders:.2?}",
        shown.join(", ")
    ));
    let order = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    out.record(
        2,
        inf < 1e-6 && order >= 3.5,
        &format!("infidelity {inf:.1e} < 1e-6, step-halving order {order:.2} >= 3.5"),
    );
}

fn criterion_3(out: &mut Verdicts) {
    let proto = DriveProtocol::new(0.26, 0.5, 13).unwrap();
    let spec = ModelSpec::ladder(3, 0.2);
    let h = build_static_hamiltonian(&spec).unwrap();
    let v = build_drive_operator(&spec).unwrap();
    let grid = TimeGrid::covering(proto.duration(), 0.05).unwrap();
    let u = dense_propagator_oracle(&h, &v, &proto, &grid).unwrap();
    let ub = dense_propagator_oracle(&h, &v, &proto.reversed(), &grid).unwrap();
    let conj = max_abs_diff(&conjugate(&u), &ub.adjoint().to_owned());
    let same = max_abs_diff(&u, &ub);
    note(&format!(
        "ladder N = 7, k = 13: max |U* - U~^dag| = {conj:.1e}, max |U - U~| = {same:.1e} (protocol time-symmetric: {})",
        proto.is_time_symmetric()
    ));
    out.record(3, conj < 1e-8 && same < 1e-8, "U* = U~^dag and U = U~ to 1e-8");
}

#[test]
fn acceptance() {
    let started = Instant::now();
    let mut out = Verdicts { rows: Vec::new() };
    say("acceptance run");

    criterion_1(&mut out);
    criterion_2(&mut out);
    criterion_3(&mut out);

    // ladder, weak coupling and weak driving
    let mut ladder_chi = Vec::new();
    for l in [4, 5] {
        let d = Driven::ladder(l, 0.2);
        ladder_chi.push((d.n, d.sweep(None).report.chi_bar));
    }

    let d13 = Driven::ladder(6, 0.2);
    let sw13 = d13.sweep(None);
    ladder_chi.push((d13.n, sw13.report.chi_bar));
    let center = sw13
        .pdfs
        .iter()
        .find(|p| (p.initial_e - d13.e0).abs() < 1e-9)
        .expect("the sweep contains the center pdf")
        .clone();
    let beta13 = d13.beta();

    // 4: DOS by typicality against the exact spectrum through the same kernel
    let (lo, hi) = d13.h0.spectral_range_estimate(60);
    let opts = FourierOptions::for_graining(GRAINING);
    let grid = SampleGrid::choose(&opts, lo, hi).unwrap();
    let exact = dos_matched(&d13.eig.values(), GRAINING, &grid, (lo, hi))
        .unwrap()
        .density;
    let typ = dos_typicality(&d13.h0, GRAINING, 16, &opts, &mut job_rng(SEED, 40))
        .unwrap()
        .density;
    let k0 = exact.k_min.min(typ.k_min);
    let k1 = exact.k_max().max(typ.k_max());
    let peak = exact.values.iter().cloned().fold(0.0, f64::max);
    let sq: f64 = (k0..=k1).map(|k| (exact.at(k) - typ.at(k)).powi(2)).sum();
    let rms = (sq / (k1 - k0 + 1) as f64).sqrt() / peak;
    let beta_typ = fit_exponential(&typ, d13.e0 - 0.5 * WINDOW, d13.e0 + 0.5 * WINDOW)
        .unwrap()
        .beta;
    note(&format!(
        "ladder N = 13, 16 random states: rms bin mismatch {:.2}% of peak (l2 norm over all bins {:.1}% of peak); beta {beta_typ:.4} (typicality), {beta13:.4} (exact)",
        100.0 * rms,
        100.0 * sq.sqrt() / peak
    ));

    // 5: graining robustness at the window center
    let t = Instant::now();
    let wide = work_pdf_exact(
        &d13.setup(),
        &d13.wgrid().with_delta(2.0 * DELTA).unwrap(),
        d13.e0,
        Direction::Forward,
    )
    .unwrap();
    let chi_g = chi_resampled(&center.density, &wide.density).unwrap();
    let norm_g: f64 = wide.density.values.iter().map(|x| x * x).sum::<f64>() * wide.density.width;
    note(&format!(
        "ladder N = 13 at E0: chi(delta, 2 delta) = {chi_g:.4}, int p^2 = {norm_g:.4}, windows of {:?} and {:?} states ({:.0} s)",
        center.window_count,
        wide.window_count,
        t.elapsed().as_secs_f64()
    ));
    out_later_5(&mut out, chi_g / norm_g);

    // 6: side peaks of the weak-driving pdf
    let peaks = local_peaks(&center.density, 0.02);
    let found: Vec<Option<(f64, f64)>> = (-2..=2)
        .map(|m| {
            let target = 0.5 * m as f64;
            peaks
                .iter()
                .filter(|p| (p.0 - target).abs() <= 1.5 * DELTA)
                .cloned()
                .max_by(|a, b| a.1.total_cmp(&b.1))
        })
        .collect();
    note(&format!(
        "ladder N = 13 peaks near W = -1, -0.5, 0, 0.5, 1: {found:.3?}"
    ));
    let side_ok = match found.iter().copied().collect::<Option<Vec<_>>>() {
        Some(p) => {
            let spacing = p.windows(2).all(|w| ((w[1].0 - w[0].0) - 0.5).abs() <= DELTA + 1e-9);
            let falling = p[2].1 > p[1].1 && p[1].1 > p[0].1 && p[2].1 > p[3].1 && p[3].1 > p[4].1;
            spacing && falling
        }
        None => false,
    };

    // 8: Jarzynski at the center and for a mixture over the sampled windows
    let jr = jarzynski_estimate(&center.density, beta13);
    let comps: Vec<WorkPdf> = sw13.pdfs.clone();
    let centers: Vec<f64> = comps.iter().map(|p| p.initial_e).collect();
    let mix = mixture_work_pdf(&comps, &MixtureWeights::uniform(centers).unwrap()).unwrap();
    let jr_mix = jarzynski_estimate(&mix.density, beta13);
    let worst_comp = comps
        .iter()
        .map(|p| jarzynski_estimate(&p.density, beta13).deviation.abs())
        .fold(0.0, f64::max);
    note(&format!(
        "ladder N = 13, beta {beta13:.4}: <exp(-beta W)> - 1 = {:+.4} at E0; mixture of {} windows {:+.4}, worst component {worst_comp:.4}",
        jr.deviation,
        comps.len(),
        jr_mix.deviation
    ));

    // 9: Crooks with random window states for the backward protocol
    let t = Instant::now();
    let fit13 = {
        let dos = dos_from_eigenvalues(&d13.eig.values(), GRAINING).unwrap();
        fit_exponential(&dos.density, d13.e0 - 0.5 * WINDOW, d13.e0 + 0.5 * WINDOW).unwrap()
    };
    let floor = 0.05;
    let wg = d13.wgrid();
    let mut backward = Vec::new();
    for (i, (j, _)) in center.bins_above(floor).into_iter().enumerate() {
        let e = center.initial_e + j as f64 * DELTA;
        match work_pdf_pure(
            &d13.setup(),
            &wg,
            e,
            Direction::Backward,
            PURE_STATES,
            &mut job_rng(split_seed(SEED, 9), i as u64),
        ) {
            Ok(p) => backward.push(p),
            Err(Error::EmptyWindow { .. }) => continue,
            Err(e) => panic!("{e}"),
        }
    }
    let crooks = crooks_check(&center, &backward, &fit13, floor).unwrap();
    note(&format!(
        "ladder N = 13: {} bins above 5% of both peaks, {} backward windows, residuals {:?} ({:.0} s)",
        crooks.bins.len(),
        backward.len(),
        crooks
            .bins
            .iter()
            .map(|b| ((b.w * 100.0).round() / 100.0, (b.residual * 1000.0).round() / 1000.0))
            .collect::<Vec<_>>(),
        t.elapsed().as_secs_f64()
    ));
    // split each residual into the count-ratio part, which is exact for traces,
    // and the deviation of the actual window counts from the fitted exponential
    let n_f = center.window_count.expect("exact forward pdf") as f64;
    let (mut noise, mut dos_dev) = (0.0f64, 0.0f64);
    for b in &crooks.bins {
        let back = backward
            .iter()
            .find(|p| (p.initial_e - center.initial_e - b.w).abs() < 1e-6)
            .expect("the bin has a backward pdf");
        let ln_counts = (back.window_count.expect("window count") as f64 / n_f).ln();
        noise = noise.max((b.log_ratio - ln_counts).abs());
        dos_dev = dos_dev.max((ln_counts - b.log_omega_ratio).abs());
    }
    note(&format!(
        "Crooks residual split: against actual window counts at most {noise:.3}; window counts against the fitted exponential at most {dos_dev:.3}"
    ));

    // 11, short time: golden-rule slope against direct propagation
    let t = Instant::now();
    let part = WindowPartition::new(&d13.eig, d13.e0, DELTA, d13.e0 - 0.5, d13.e0 + 0.5).unwrap();
    let from = part.window_of(d13.e0).unwrap();
    let short = short_time_check(
        &d13.h0,
        &d13.v,
        &d13.eig,
        &part,
        from,
        from + 3,
        0.02,
        (40.0, 150.0),
        0.05,
    )
    .unwrap();
    note(&format!(
        "ladder N = 13, E0 -> E0 + 0.21, lambda 0.02, t in [40, 150]: slope {:.3e} against {:.3e}, off by {:.1}% ({:.0} s)",
        short.measured_slope,
        short.predicted_slope,
        100.0 * short.relative_error(),
        t.elapsed().as_secs_f64()
    ));
    drop(d13);

    // ladder N = 15: random window states, rates, DOS fit
    let d15 = Driven::ladder(7, 0.2);
    ladder_chi.push((d15.n, d15.sweep(Some(PURE_STATES)).report.chi_bar));
    let beta_l15 = d15.beta();
    let rates_ladder = rate_findings(&d15.eig, &d15.v, d15.e0, Some(beta_l15), "ladder L = 7");
    drop(d15);

    // chain, strong driving
    let c9 = Eigensystem::compute(&ModelSpec::chain(8), VectorPolicy::None).unwrap();
    let e9 = -0.18 * 9.0;
    note(&format!(
        "chain N = 9 unreachable: the window at E0 = {e9:.2} holds {} eigenstates",
        c9.indices_in(e9 - 0.5 * DELTA, e9 + 0.5 * DELTA).len()
    ));
    let mut chain_chi = Vec::new();
    for l in [10, 12] {
        let d = Driven::chain(l);
        chain_chi.push((d.n, d.sweep(None).report.chi_bar));
    }
    let c15 = Driven::chain(14);
    chain_chi.push((c15.n, c15.sweep(Some(PURE_STATES)).report.chi_bar));
    let beta_c15 = c15.beta();
    let rates_chain15 = rate_findings(&c15.eig, &c15.v, c15.e0, Some(beta_c15), "chain L = 14");
    drop(c15);

    let c7 = ModelSpec::chain(7);
    let c7_eig = Eigensystem::compute(&c7, VectorPolicy::All).unwrap();
    let c7_beta = fit_exponential(
        &dos_from_eigenvalues(&c7_eig.values(), GRAINING).unwrap().density,
        -0.18 * 8.0 - 0.5 * WINDOW,
        -0.18 * 8.0 + 0.5 * WINDOW,
    );
    if let Err(e) = &c7_beta {
        note(&format!(
            "chain L = 7 has no exponential DOS fit over the preset window: {e}"
        ));
    }
    let rates_chain7 = rate_findings(
        &c7_eig,
        &build_drive_operator(&c7).unwrap(),
        -0.18 * 8.0,
        c7_beta.as_ref().ok().map(|f| f.beta),
        "chain L = 7",
    );

    // 10: typicality variance on the chain, N = 12
    let t = Instant::now();
    let c12 = Driven::chain(11);
    let probe = typicality_variance_probe(&c12.setup(), &c12.wgrid(), c12.e0, 0, 24, &mut job_rng(SEED, 10)).unwrap();
    note(&format!(
        "chain N = 12, 24 random states, bin W = 0: mean {:.4}, variance {:.2e}, bound 1/(Tr pi + 1) = {:.2e} with Tr pi = {} ({:.0} s)",
        probe.mean,
        probe.variance,
        probe.bound,
        probe.window_count,
        t.elapsed().as_secs_f64()
    ));
    drop(c12);

    // 12: relaxation of the system spin at N = 15
    let t = Instant::now();
    let beta_k06 = {
        let spec = ModelSpec::ladder(7, 0.6);
        let values = Eigensystem::compute(&spec, VectorPolicy::None).unwrap().values();
        fit_exponential(
            &dos_from_eigenvalues(&values, GRAINING).unwrap().density,
            -3.0 - 0.5 * WINDOW,
            -3.0 + 0.5 * WINDOW,
        )
        .unwrap()
        .beta
    };
    let cases = [
        ("ladder kappa 0.2", ModelSpec::ladder(7, 0.2), beta_l15, true),
        ("ladder kappa 0.6", ModelSpec::ladder(7, 0.6), beta_k06, false),
        ("chain", ModelSpec::chain(14), beta_c15, false),
    ];
    let mut relax_ok = true;
    for (ci, (label, spec, beta, want_exp)) in cases.into_iter().enumerate() {
        let n = spec.n_spins();
        let e0 = if label == "chain" {
            -0.18 * n as f64
        } else {
            -0.2 * n as f64
        };
        let problem = RelaxationProblem::new(&spec, largest_sector(n)).unwrap();
        let canonical = problem.canonical(beta).unwrap();
        for (mi, m) in [SpinState::Up, SpinState::Down].into_iter().enumerate() {
            let runs: Vec<Trajectory> = (0..RELAX_SEEDS)
                .map(|s| {
                    let mut rng = job_rng(split_seed(SEED, 12 + 2 * ci as u64 + mi as u64), s);
                    let prep = problem.prepare(e0, 0.4, m, &mut rng).unwrap();
                    problem.run(&prep, 250.0, 0.05, 2000, label).unwrap()
                })
                .collect();
            let fit = relaxation_time(&Trajectory::mean(&runs, label).unwrap()).unwrap();
            let nrms = fit.exp_fit.map_or(f64::INFINITY, |f| f.nrms);
            let exponential = fit.exp_fit.is_some_and(|f| f.is_exponential());
            let gap = (fit.long_time_average - canonical).abs();
            note(&format!(
                "{label}, spin {m:?}: tau_R {:.2}, exponential-fit nrms {nrms:.4} ({}), long-time {:.4} vs canonical {canonical:.4} at beta {beta:.4}",
                fit.tau_r,
                if exponential { "exponential" } else { "not exponential" },
                fit.long_time_average
            ));
            relax_ok &= exponential == want_exp && gap <= 0.05;
        }
    }
    note(&format!("relaxation runs: {:.0} s", t.elapsed().as_secs_f64()));

    // verdicts in order; 1 to 3 and 5 are already printed
    out.record(
        4,
        rms < 0.02 && (beta_typ - 0.69).abs() <= 0.05 && (beta13 - 0.69).abs() <= 0.05 && (beta_c15 - 0.86).abs() <= 0.05,
        &format!(
            "DOS mismatch {:.2}% of peak; beta ladder {beta_typ:.3}/{beta13:.3} vs 0.69, chain L = 14 {beta_c15:.3} vs 0.86",
            100.0 * rms
        ),
    );
    out.record(6, side_ok, "side peaks at 0.5 spacing, falling outward");
    let (ls, lr) = loglog_slope(&ladder_chi);
    let (cs, cr) = loglog_slope(&chain_chi);
    note(&format!("ladder chi_bar {ladder_chi:.4?}: slope {ls:.2}, R^2 {lr:.3}"));
    note(&format!("chain chi_bar {chain_chi:.4?}: slope {cs:.2}, R^2 {cr:.3}"));
    out.record(
        7,
        strictly_decreasing(&ladder_chi)
            && strictly_decreasing(&chain_chi)
            && ls > 0.0
            && lr > 0.8
            && cs > 0.0
            && cr > 0.8,
        "chi_bar strictly decreasing with positive log-log slope, R^2 > 0.8, both models",
    );
    out.record(
        8,
        jr.deviation.abs() <= 0.1 && jr_mix.deviation.abs() <= 2.0 * worst_comp,
        &format!(
            "|<exp(-beta W)> - 1| = {:.4} <= 0.1; mixture {:.4} <= 2 x {worst_comp:.4}",
            jr.deviation.abs(),
            jr_mix.deviation.abs()
        ),
    );
    out.record(
        9,
        crooks.max_residual < 0.15,
        &format!("max Crooks log-residual {:.3} < 0.15", crooks.max_residual),
    );
    out.record(
        10,
        probe.variance < probe.bound,
        &format!("variance {:.2e} < {:.2e}", probe.variance, probe.bound),
    );
    let spread_ok = |r: &RateFindings| r.spread.is_some_and(|s| s.0 < 0.3);
    let balance_ok = |r: &RateFindings| r.balance.is_some_and(|b| b < 0.3);
    let zero_ok = rates_chain15.zero_fraction > rates_ladder.zero_fraction;
    note(&format!(
        "rate spread < 0.3 at L = 7: ladder {}, chain {}; symmetry-allowed zero fraction at N = 15: chain {:.3} vs ladder {:.3} (chain L = 7: {:.3}); detailed balance < 0.3: ladder {}, chain L = 14 {}; short-time slope within 25%: {}",
        spread_ok(&rates_ladder),
        spread_ok(&rates_chain7),
        rates_chain15.zero_fraction,
        rates_ladder.zero_fraction,
        rates_chain7.zero_fraction,
        balance_ok(&rates_ladder),
        balance_ok(&rates_chain15),
        short.relative_error() < 0.25
    ));
    out.record(
        11,
        spread_ok(&rates_ladder)
            && spread_ok(&rates_chain7)
            && zero_ok
            && balance_ok(&rates_ladder)
            && balance_ok(&rates_chain15)
            && short.relative_error() < 0.25,
        "rate stiffness, zero fractions, golden-rule slope, detailed balance",
    );
    out.record(
        12,
        relax_ok,
        "kappa 0.2 exponential, kappa 0.6 and chain not; long-time value within 0.05 of canonical",
    );

    out.rows.sort_by_key(|r| r.0);
    let red: Vec<u32> = out.rows.iter().filter(|r| !r.1).map(|r| r.0).collect();
    say(&format!(
        "acceptance: {} of {} criteria pass{} ({:.0} min)",
        out.rows.len() - red.len(),
        out.rows.len(),
        if red.is_empty() {
            String::new()
        } else {
            format!(", red: {red:?}")
        },
        started.elapsed().as_secs_f64() / 60.0
    ));
    if std::env::var("STIFFWORK_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        assert!(red.is_empty(), "red criteria: {red:?}");
    }
}

fn out_later_5(out: &mut Verdicts, ratio: f64) {
    out.record(
        5,
        ratio < 0.05,
        &format!("chi(delta, 2 delta) is {:.2}% of int p^2 (< 5%)", 100.0 * ratio),
    );
}
