//! One function per experiment kind. Each writes CSV artifacts (and
//! gnuplot data under `plots/`) into the output directory and returns
//! their records for the manifest.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use stiffwork::eigen::{Eigensystem, VectorPolicy, EXACT_DIM_LIMIT};
use stiffwork::fgr_eth::{detailed_balance_residuals, rate_stiffness, ElementStats, WindowPartition};
use stiffwork::io::{render_csv, write_atomic};
use stiffwork::model::{build_drive_operator, build_static_hamiltonian, ModelSpec};
use stiffwork::propagator::{Direction, DriveProtocol, PropagationOptions, TimeGrid};
use stiffwork::relaxation::{largest_sector, relaxation_time, RelaxationProblem, Trajectory};
use stiffwork::rng::{job_rng, split_seed};
use stiffwork::sparse::SparseOperator;
use stiffwork::spectral::{dos_exact, dos_typicality, fit_exponential, ExponentialFit, FourierOptions};
use stiffwork::state_prep::SpinState;
use stiffwork::work::{
    crooks_check, jarzynski_estimate, mixture_work_pdf, stiffness_sweep, work_pdf_exact, work_pdf_pure, MixtureWeights,
    StiffnessSweep, SweepMethod, WorkGrid, WorkPdf, WorkSetup,
};

use crate::config::{ExperimentConfig, Kind, ValidationError, MIN_WINDOW_STATES};

#[derive(Debug)]
pub enum RunError {
    Validation(ValidationError),
    Numeric(stiffwork::Error),
    Other(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Validation(_) => 2,
            RunError::Numeric(_) => 3,
            RunError::Other(_) => 1,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Validation(e) => write!(f, "{e}"),
            RunError::Numeric(e) => write!(f, "numeric budget breached: {e}"),
            RunError::Other(e) => write!(f, "{e}"),
        }
    }
}

impl From<ValidationError> for RunError {
    fn from(e: ValidationError) -> Self {
        RunError::Validation(e)
    }
}

impl From<stiffwork::Error> for RunError {
    fn from(e: stiffwork::Error) -> Self {
        use stiffwork::Error as E;
        match e {
            E::NormBudget { .. } | E::VanishingNorm { .. } => RunError::Numeric(e),
            E::InvalidParameter { name, reason } => RunError::Validation(ValidationError::new(name, reason)),
            E::EmptyWindow { .. } => RunError::Validation(ValidationError::new("analysis.e0", e.to_string())),
            E::DimensionGuard { .. } => RunError::Validation(ValidationError::new("model.l", e.to_string())),
            E::Nyquist { .. } => RunError::Validation(ValidationError::new("protocol.dt", e.to_string())),
            E::TooFewSamples { .. } | E::NoAdmissibleBins | E::NonPositiveFit { .. } => {
                RunError::Validation(ValidationError::new("analysis", e.to_string()))
            }
            other => RunError::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Other(format!("i/o: {e}"))
    }
}

pub type RunResult<T> = std::result::Result<T, RunError>;

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub file: String,
    pub rows: usize,
    pub wall_time_s: f64,
}

/// Shared state of one run: resolved config, output paths and the
/// artifact list.
pub struct Ctx<'a> {
    pub cfg: &'a ExperimentConfig,
    pub kind: Kind,
    pub spec: ModelSpec,
    pub e0: f64,
    pub out: PathBuf,
    pub artifacts: Vec<Artifact>,
    clock: Instant,
}

impl<'a> Ctx<'a> {
    pub fn new(cfg: &'a ExperimentConfig, kind: Kind, out: &Path) -> RunResult<Self> {
        Ok(Self {
            spec: cfg.model_spec()?,
            e0: cfg.e0(),
            cfg,
            kind,
            out: out.to_path_buf(),
            artifacts: Vec::new(),
            clock: Instant::now(),
        })
    }

    fn meta(&self, extra: Vec<(&'static str, String)>) -> Vec<(&'static str, String)> {
        let mut m = vec![
            ("kind", self.kind.name().to_string()),
            ("config_hash", self.cfg.hash()),
            ("seed", self.cfg.run.seed.to_string()),
            ("version", env!("CARGO_PKG_VERSION").to_string()),
            ("N", self.spec.n_spins().to_string()),
            ("E0", self.e0.to_string()),
        ];
        m.extend(extra);
        m
    }

    /// Writes `name` as CSV and `plots/<stem>.dat` as whitespace-separated data.
    fn emit(
        &mut self,
        name: &str,
        extra: Vec<(&'static str, String)>,
        header: &[&str],
        rows: &[Vec<f64>],
    ) -> RunResult<()> {
        let meta = self.meta(extra);
        let csv = render_csv(&meta, header, rows)?;
        write_atomic(&self.out.join(name), csv.as_bytes())?;
        let mut dat = format!("# {}\n", header.join(" "));
        for r in rows {
            let cells: Vec<String> = r.iter().map(|x| format!("{x}")).collect();
            dat.push_str(&cells.join(" "));
            dat.push('\n');
        }
        let stem = name.trim_end_matches(".csv");
        write_atomic(&self.out.join("plots").join(format!("{stem}.dat")), dat.as_bytes())?;
        self.artifacts.push(Artifact {
            file: name.to_string(),
            rows: rows.len(),
            wall_time_s: self.clock.elapsed().as_secs_f64(),
        });
        self.clock = Instant::now();
        Ok(())
    }

    fn sweep_method(&self, job: u64) -> SweepMethod {
        match self.cfg.analysis.n_states {
            0 => SweepMethod::ExactTrace,
            n => SweepMethod::PureState {
                n_states: n,
                seed: split_seed(self.cfg.run.seed, job),
            },
        }
    }

    fn refuse_small(&self, eig: &Eigensystem, wgrid: &WorkGrid, energies: &[f64]) -> RunResult<()> {
        if self.cfg.run.force {
            return Ok(());
        }
        for &e in energies {
            let count = wgrid.window(wgrid.snap(e).0).levels(eig).map(|l| l.len()).unwrap_or(0);
            if count > 0 && count < MIN_WINDOW_STATES {
                return Err(ValidationError::new(
                    "analysis.delta",
                    format!(
                        "window at E = {:.4} holds {count} eigenstates (< {MIN_WINDOW_STATES}); widen delta, grow the system or set run.force",
                        wgrid.center(wgrid.snap(e).0)
                    ),
                )
                .into());
            }
        }
        Ok(())
    }
}

pub fn run_kind(ctx: &mut Ctx) -> RunResult<()> {
    match ctx.kind {
        Kind::Dos => run_dos(ctx),
        Kind::Relax => run_relax(ctx),
        Kind::Drive => run_drive(ctx),
        Kind::Stiffness => run_stiffness(ctx),
        Kind::Jr => run_jr(ctx),
        Kind::Crooks => run_crooks(ctx),
        Kind::Fgr | Kind::Eth => run_matrix(ctx),
    }
}

fn fit_range(ctx: &Ctx) -> (f64, f64) {
    let half = 0.5 * ctx.cfg.analysis.window;
    (ctx.e0 - half, ctx.e0 + half)
}

/// Exponential fit of the exact DOS over the analysis range.
fn dos_fit(ctx: &Ctx) -> RunResult<ExponentialFit> {
    let spec = ctx.spec.clone().with_sector(None);
    let dos = dos_exact(&spec, ctx.cfg.analysis.graining)?;
    let (lo, hi) = fit_range(ctx);
    Ok(fit_exponential(&dos.density, lo, hi)?)
}

fn beta(ctx: &Ctx) -> RunResult<(f64, &'static str)> {
    match ctx.cfg.analysis.beta {
        Some(b) => Ok((b, "config")),
        None => Ok((dos_fit(ctx)?.beta, "dos-fit")),
    }
}

fn run_dos(ctx: &mut Ctx) -> RunResult<()> {
    let a = &ctx.cfg.analysis;
    let dim = ctx.spec.basis()?.dim();
    let dos = if dim <= EXACT_DIM_LIMIT {
        dos_exact(&ctx.spec, a.graining)?
    } else {
        let h0 = build_static_hamiltonian(&ctx.spec)?;
        let mut opts = FourierOptions::for_graining(a.graining);
        opts.theta = ctx.cfg.theta();
        dos_typicality(&h0, a.graining, a.n_samples, &opts, &mut job_rng(ctx.cfg.run.seed, 0))?
    };
    let (lo, hi) = fit_range(ctx);
    let fit = fit_exponential(&dos.density, lo, hi).ok();
    let rows: Vec<Vec<f64>> = (0..dos.density.len())
        .map(|i| vec![dos.density.center(i), dos.density.values[i]])
        .collect();
    let mut extra = vec![
        ("method", format!("{:?}", dos.method)),
        ("graining", a.graining.to_string()),
        ("fit_range", format!("{lo} {hi}")),
    ];
    match fit {
        Some(f) => {
            extra.push(("beta", f.beta.to_string()));
            extra.push(("log_z", f.log_z.to_string()));
            extra.push(("fit_r2", f.r2.to_string()));
        }
        None => extra.push(("beta", "none (non-positive bins in the fit range)".into())),
    }
    ctx.emit("dos.csv", extra, &["E", "density"], &rows)
}

struct Driven {
    h0: SparseOperator,
    v: SparseOperator,
    eig: Eigensystem,
    protocol: DriveProtocol,
    grid: TimeGrid,
    wgrid: WorkGrid,
}

impl Driven {
    fn new(ctx: &Ctx, extra_lo: f64, extra_hi: f64) -> RunResult<Self> {
        let protocol = ctx.cfg.protocol()?;
        let (lo, hi) = fit_range(ctx);
        // final energies stay within a few units of the initial window for the presets
        let reach = 4.0 + protocol.lambda.abs();
        let eig = Eigensystem::compute(
            &ctx.spec,
            VectorPolicy::Range {
                lo: lo.min(extra_lo) - reach,
                hi: hi.max(extra_hi) + reach,
            },
        )?;
        Ok(Self {
            h0: build_static_hamiltonian(&ctx.spec)?,
            v: build_drive_operator(&ctx.spec)?,
            eig,
            grid: TimeGrid::covering(protocol.duration(), ctx.cfg.protocol.dt)?,
            protocol,
            wgrid: WorkGrid::new(ctx.e0, ctx.cfg.analysis.delta)?,
        })
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

    fn pdf(&self, ctx: &Ctx, e: f64, direction: Direction, job: u64) -> RunResult<WorkPdf> {
        let setup = self.setup();
        Ok(match ctx.sweep_method(job) {
            SweepMethod::ExactTrace => work_pdf_exact(&setup, &self.wgrid, e, direction)?,
            SweepMethod::PureState { n_states, seed } => {
                work_pdf_pure(&setup, &self.wgrid, e, direction, n_states, &mut job_rng(seed, 0))?
            }
        })
    }
}

fn pdf_meta(p: &WorkPdf) -> Vec<(&'static str, String)> {
    vec![
        ("initial_e", p.initial_e.to_string()),
        ("rounding", p.rounding.to_string()),
        ("achieved_mean", p.achieved_mean.to_string()),
        ("method", format!("{:?}", p.method)),
        ("direction", format!("{:?}", p.direction)),
        ("window_count", p.window_count.map_or("none".into(), |c| c.to_string())),
        ("n_states", p.n_states.to_string()),
        ("missing_mass", p.missing_mass.to_string()),
        ("max_norm_drift", p.max_norm_drift.to_string()),
    ]
}

fn pdf_rows(p: &WorkPdf) -> Vec<Vec<f64>> {
    (0..p.density.len())
        .map(|i| vec![p.density.center(i), p.density.values[i]])
        .collect()
}

fn run_drive(ctx: &mut Ctx) -> RunResult<()> {
    let d = Driven::new(ctx, ctx.e0, ctx.e0)?;
    ctx.refuse_small(&d.eig, &d.wgrid, &[ctx.e0])?;
    let p = d.pdf(ctx, ctx.e0, Direction::Forward, 0)?;
    ctx.emit("work_pdf.csv", pdf_meta(&p), &["W", "density"], &pdf_rows(&p))
}

fn run_stiffness(ctx: &mut Ctx) -> RunResult<()> {
    let d = Driven::new(ctx, ctx.e0, ctx.e0)?;
    let a = &ctx.cfg.analysis;
    let energies = stiffwork::work::stiffness_energies(ctx.e0, a.window, a.n_energies)?;
    ctx.refuse_small(&d.eig, &d.wgrid, &energies)?;
    let sw: StiffnessSweep = stiffness_sweep(
        &d.setup(),
        &d.wgrid,
        ctx.e0,
        a.window,
        a.n_energies,
        ctx.sweep_method(0),
    )?;
    let r = &sw.report;
    let rows: Vec<Vec<f64>> = r.chi_values.iter().map(|&(e, c)| vec![e, c]).collect();
    let skipped: Vec<String> = sw.skipped.iter().map(|e| e.to_string()).collect();
    let extra = vec![
        ("chi_bar", r.chi_bar.to_string()),
        ("chi_min", r.chi_min.to_string()),
        ("chi_max", r.chi_max.to_string()),
        ("Delta", r.delta_window.to_string()),
        ("skipped_empty", skipped.join(" ")),
    ];
    ctx.emit("stiffness.csv", extra, &["E_prime", "chi"], &rows)?;
    let long: Vec<Vec<f64>> = sw
        .pdfs
        .iter()
        .flat_map(|p| pdf_rows(p).into_iter().map(move |r| vec![p.initial_e, r[0], r[1]]))
        .collect();
    ctx.emit("work_pdfs.csv", vec![], &["E_initial", "W", "density"], &long)
}

fn run_jr(ctx: &mut Ctx) -> RunResult<()> {
    let (b, source) = beta(ctx)?;
    let a = &ctx.cfg.analysis;
    let m = a.mixture_windows;
    let centers: Vec<f64> = if m == 1 {
        vec![ctx.e0]
    } else {
        (0..m)
            .map(|i| ctx.e0 - 0.5 * a.window + a.window * i as f64 / (m - 1) as f64)
            .collect()
    };
    let d = Driven::new(ctx, centers[0], centers[m - 1])?;
    ctx.refuse_small(&d.eig, &d.wgrid, &centers)?;
    let mut pdfs = Vec::new();
    for (i, &e) in centers.iter().enumerate() {
        pdfs.push(d.pdf(ctx, e, Direction::Forward, i as u64)?);
    }
    let snapped: Vec<f64> = pdfs.iter().map(|p| p.initial_e).collect();
    let mix = mixture_work_pdf(&pdfs, &MixtureWeights::uniform(snapped)?)?;
    let jm = jarzynski_estimate(&mix.density, b);
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for p in &pdfs {
        let j = jarzynski_estimate(&p.density, b);
        worst = worst.max(j.deviation.abs());
        rows.push(vec![p.initial_e, j.value, j.deviation]);
    }
    let center = jarzynski_estimate(&d.pdf(ctx, ctx.e0, Direction::Forward, m as u64)?.density, b);
    let extra = vec![
        ("beta", b.to_string()),
        ("beta_source", source.to_string()),
        ("rhs_reference", center.rhs_reference.to_string()),
        ("center_value", center.value.to_string()),
        ("center_deviation", center.deviation.to_string()),
        ("mixture_value", jm.value.to_string()),
        ("mixture_deviation", jm.deviation.to_string()),
        ("worst_component_deviation", worst.to_string()),
    ];
    ctx.emit("jr.csv", extra, &["initial_e", "value", "deviation"], &rows)
}

fn run_crooks(ctx: &mut Ctx) -> RunResult<()> {
    let fit = dos_fit(ctx)?;
    let floor = ctx.cfg.analysis.crooks_floor;
    let d = Driven::new(ctx, ctx.e0 - 3.0, ctx.e0 + 3.0)?;
    ctx.refuse_small(&d.eig, &d.wgrid, &[ctx.e0])?;
    let fwd = d.pdf(ctx, ctx.e0, Direction::Forward, 0)?;
    let mut back = Vec::new();
    for (i, (j, _)) in fwd.bins_above(floor).into_iter().enumerate() {
        let e = fwd.initial_e + j as f64 * d.wgrid.delta;
        match d.pdf(ctx, e, Direction::Backward, 1 + i as u64) {
            Ok(p) => back.push(p),
            Err(RunError::Validation(v)) if v.field == "analysis.e0" => continue,
            Err(e) => return Err(e),
        }
    }
    let rep = crooks_check(&fwd, &back, &fit, floor)?;
    let rows: Vec<Vec<f64>> = rep
        .bins
        .iter()
        .map(|b| vec![b.w, b.p, b.p_tilde, b.log_ratio, b.log_omega_ratio, b.residual])
        .collect();
    let extra = vec![
        ("beta", fit.beta.to_string()),
        ("floor", floor.to_string()),
        ("max_residual", rep.max_residual.to_string()),
        ("backward_windows", back.len().to_string()),
    ];
    ctx.emit(
        "crooks.csv",
        extra,
        &["W", "p", "p_tilde", "log_ratio", "log_omega_ratio", "residual"],
        &rows,
    )
}

fn run_matrix(ctx: &mut Ctx) -> RunResult<()> {
    let a = &ctx.cfg.analysis;
    let (lo, hi) = fit_range(ctx);
    let (plo, phi) = (lo - a.max_omega - a.delta, hi + a.max_omega + a.delta);
    let eig = Eigensystem::compute(
        &ctx.spec,
        VectorPolicy::Range {
            lo: plo - a.delta,
            hi: phi + a.delta,
        },
    )?;
    let v = build_drive_operator(&ctx.spec)?;
    let part = WindowPartition::new(&eig, ctx.e0, a.delta, plo, phi)?;
    let stats = ElementStats::compute(&eig, &v, &part)?;
    if ctx.kind == Kind::Eth {
        let eth = stats.eth();
        let rows: Vec<Vec<f64>> = eth
            .cells
            .iter()
            .map(|c| {
                vec![
                    c.e,
                    c.e_prime,
                    c.n_elements as f64,
                    c.mean,
                    c.variance,
                    c.zero_fraction,
                    f64::from(u8::from(c.reliable)),
                ]
            })
            .collect();
        let extra = vec![
            ("zero_fraction", stats.zero_fraction().to_string()),
            ("connected_zero_fraction", stats.connected_zero_fraction().to_string()),
        ];
        ctx.emit(
            "eth.csv",
            extra,
            &[
                "E",
                "E_prime",
                "n_elements",
                "mean",
                "variance",
                "zero_fraction",
                "reliable",
            ],
            &rows,
        )?;
        let diag: Vec<Vec<f64>> = eth.diagonal.iter().map(|&(e, m)| vec![e, m]).collect();
        return ctx.emit("eth_diagonal.csv", vec![], &["E", "mean_V_nn"], &diag);
    }
    let (b, source) = beta(ctx)?;
    let rm = stats.rates();
    let mut rows = Vec::new();
    for (s, row) in rm.gamma.iter().enumerate() {
        for (f, g) in row.iter().enumerate() {
            if let Some(g) = g {
                rows.push(vec![part.center(s), part.center(f), *g, stats.elements(s, f) as f64]);
            }
        }
    }
    ctx.emit("fgr_rates.csv", vec![], &["E", "E_prime", "gamma", "n_elements"], &rows)?;
    let spread = rate_stiffness(&rm, lo, hi, a.max_omega)?;
    let rows: Vec<Vec<f64>> = spread
        .per_omega
        .iter()
        .map(|s| vec![s.omega, s.mean, s.relative_spread, s.n_sources as f64])
        .collect();
    ctx.emit(
        "fgr_spread.csv",
        vec![("max_spread", spread.max_spread.to_string())],
        &["omega", "mean_gamma", "relative_spread", "n_sources"],
        &rows,
    )?;
    let db = detailed_balance_residuals(&spread, b);
    let worst = db.iter().map(|r| r.1.abs()).fold(0.0, f64::max);
    let rows: Vec<Vec<f64>> = db.iter().map(|&(w, r)| vec![w, r]).collect();
    ctx.emit(
        "detailed_balance.csv",
        vec![
            ("beta", b.to_string()),
            ("beta_source", source.into()),
            ("max_abs_residual", worst.to_string()),
        ],
        &["omega", "residual"],
        &rows,
    )
}

fn run_relax(ctx: &mut Ctx) -> RunResult<()> {
    let a = &ctx.cfg.analysis;
    let n = ctx.spec.n_spins();
    let sector = ctx.spec.sector.unwrap_or_else(|| largest_sector(n));
    let problem = RelaxationProblem::new(&ctx.spec.clone().with_sector(None), sector)?;
    let (b, source) = beta(ctx)?;
    let canonical = problem.canonical(b)?;
    let mut summary = Vec::new();
    for (mi, m) in [SpinState::Up, SpinState::Down].into_iter().enumerate() {
        let mut runs = Vec::new();
        for s in 0..a.relax_seeds {
            let mut rng = job_rng(split_seed(ctx.cfg.run.seed, mi as u64), s as u64);
            let prep = problem.prepare(ctx.e0, a.bath_delta, m, &mut rng)?;
            runs.push(problem.run(&prep, a.t_max, ctx.cfg.protocol.dt, 2000, "relax")?);
        }
        let label = match m {
            SpinState::Up => "up",
            SpinState::Down => "down",
        };
        let tr = Trajectory::mean(&runs, label)?;
        let fit = relaxation_time(&tr)?;
        let (nrms, exponential) = fit
            .exp_fit
            .map_or((f64::NAN, 0.0), |f| (f.nrms, f64::from(u8::from(f.is_exponential()))));
        summary.push(vec![
            m.sz(),
            fit.tau_r,
            nrms,
            exponential,
            fit.long_time_average,
            canonical,
        ]);
        let rows: Vec<Vec<f64>> = tr.times.iter().zip(&tr.values).map(|(&t, &v)| vec![t, v]).collect();
        let extra = vec![
            ("sector_twice_m", sector.twice().to_string()),
            ("bath_delta", a.bath_delta.to_string()),
            ("seeds_averaged", a.relax_seeds.to_string()),
            ("tau_r", fit.tau_r.to_string()),
        ];
        ctx.emit(&format!("relax_{label}.csv"), extra, &["t", "sz_sys"], &rows)?;
    }
    let extra = vec![("beta", b.to_string()), ("beta_source", source.into())];
    ctx.emit(
        "relax_summary.csv",
        extra,
        &["m", "tau_r", "nrms", "exponential", "long_time_average", "canonical"],
        &summary,
    )
}

/// Resolves the output directory and prepares it.
pub fn prepare_out(dir: &Path) -> RunResult<()> {
    fs::create_dir_all(dir.join("plots"))?;
    Ok(())
}
