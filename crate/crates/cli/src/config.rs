//! Experiment configuration: TOML sections layered over a named preset,
//! validated before any computation starts.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use stiffwork::basis::Magnetization;
use stiffwork::eigen::EXACT_DIM_LIMIT;
use stiffwork::model::ModelSpec;
use stiffwork::propagator::DriveProtocol;

pub const PRESETS: [&str; 5] = [
    "ladder-weak-weak",
    "ladder-weak-strong",
    "ladder-strong-weak",
    "ladder-strong-strong",
    "chain-strong",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Dos,
    Relax,
    Drive,
    Stiffness,
    Jr,
    Crooks,
    Fgr,
    Eth,
}

impl Kind {
    pub const ALL: [Kind; 8] = [
        Kind::Dos,
        Kind::Relax,
        Kind::Drive,
        Kind::Stiffness,
        Kind::Jr,
        Kind::Crooks,
        Kind::Fgr,
        Kind::Eth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Dos => "dos",
            Kind::Relax => "relax",
            Kind::Drive => "drive",
            Kind::Stiffness => "stiffness",
            Kind::Jr => "jr",
            Kind::Crooks => "crooks",
            Kind::Fgr => "fgr",
            Kind::Eth => "eth",
        }
    }

    pub fn parse(s: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyName {
    Ladder,
    Chain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub topology: TopologyName,
    pub l: u32,
    pub kappa: f64,
    pub b: f64,
    /// `full`, `largest` (n_up = floor(N/2)), `one-down`, or `m=<2M>`.
    pub sector: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub lambda: f64,
    pub nu: f64,
    pub half_periods: u32,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Window width and work-bin width.
    pub delta: f64,
    /// Width of the stiffness / fit range around `E0`.
    pub window: f64,
    /// `E0 = e0_per_spin * N` unless `e0` is given.
    pub e0_per_spin: f64,
    pub e0: Option<f64>,
    /// DOS bin width.
    pub graining: f64,
    /// Largest Fourier time; defaults to `pi / graining`.
    pub theta: Option<f64>,
    /// Random states for typicality estimates.
    pub n_samples: usize,
    /// Sample energies `E'` across the stiffness range.
    pub n_energies: usize,
    /// Random window states per pdf; 0 propagates every window eigenstate.
    pub n_states: usize,
    /// Crooks density floor as a fraction of the forward peak.
    pub crooks_floor: f64,
    /// Mixture components for the `jr` kind.
    pub mixture_windows: usize,
    /// Bath window width for relaxation initial states.
    pub bath_delta: f64,
    pub t_max: f64,
    /// Bath seeds averaged per relaxation trajectory.
    pub relax_seeds: usize,
    /// Inverse temperature; fitted from the exact DOS when absent.
    pub beta: Option<f64>,
    /// Largest `|omega|` reported by the `fgr` kind.
    pub max_omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub out: String,
    /// Allows exact-path windows with fewer than `MIN_WINDOW_STATES` states.
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub protocol: ProtocolConfig,
    pub analysis: AnalysisConfig,
    pub run: RunConfig,
}

pub const MIN_WINDOW_STATES: usize = 10;

/// A rejected field with the precondition it violates.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationError {
    pub field: String,
    pub reason: String,
}

impl ValidationError {
    pub fn new(field: &str, reason: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid `{}`: {}", self.field, self.reason)
    }
}

impl std::error::Error for ValidationError {}

fn analysis_defaults(e0_per_spin: f64) -> AnalysisConfig {
    AnalysisConfig {
        delta: 0.07,
        window: 2.5,
        e0_per_spin,
        e0: None,
        graining: 0.09,
        theta: None,
        n_samples: 4,
        n_energies: 11,
        n_states: 0,
        crooks_floor: 0.01,
        mixture_windows: 5,
        bath_delta: 0.4,
        t_max: 250.0,
        relax_seeds: 2,
        beta: None,
        max_omega: 1.0,
    }
}

fn run_defaults() -> RunConfig {
    RunConfig {
        seed: 1,
        workers: 1,
        out: "out".into(),
        force: false,
    }
}

pub fn preset(name: &str) -> Result<ExperimentConfig, ValidationError> {
    let ladder = |kappa: f64, lambda: f64, half_periods: u32| ExperimentConfig {
        model: ModelConfig {
            topology: TopologyName::Ladder,
            l: 6,
            kappa,
            b: ModelSpec::DEFAULT_FIELD,
            sector: "full".into(),
        },
        protocol: ProtocolConfig {
            lambda,
            nu: 0.5,
            half_periods,
            dt: 0.05,
        },
        analysis: analysis_defaults(-0.2),
        run: run_defaults(),
    };
    Ok(match name {
        "ladder-weak-weak" => ladder(0.2, 0.26, 13),
        "ladder-weak-strong" => ladder(0.2, 2.5, 1),
        "ladder-strong-weak" => ladder(0.6, 0.26, 13),
        "ladder-strong-strong" => ladder(0.6, 2.5, 1),
        "chain-strong" => ExperimentConfig {
            model: ModelConfig {
                topology: TopologyName::Chain,
                l: 12,
                kappa: 1.0,
                b: 0.0,
                sector: "full".into(),
            },
            protocol: ProtocolConfig {
                lambda: 3.85,
                nu: 0.75,
                half_periods: 1,
                dt: 0.02,
            },
            analysis: analysis_defaults(-0.18),
            run: run_defaults(),
        },
        _ => {
            return Err(ValidationError::new(
                "preset",
                format!("unknown preset `{name}`; available: {}", PRESETS.join(", ")),
            ))
        }
    })
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_table() && v.is_table() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Parses `text` over `preset_name` (or `[run] preset` inside the text,
/// defaulting to `ladder-weak-weak`). Unknown keys are rejected.
pub fn load(text: &str, preset_name: Option<&str>) -> Result<ExperimentConfig, ValidationError> {
    let mut over: toml::Value = text
        .parse::<toml::Table>()
        .map(toml::Value::Table)
        .map_err(|e| ValidationError::new("config", format!("not valid TOML: {}", e.message())))?;
    let in_file = over
        .get_mut("run")
        .and_then(|r| r.as_table_mut())
        .and_then(|r| r.remove("preset"));
    let in_file = match in_file {
        Some(toml::Value::String(s)) => Some(s),
        Some(_) => return Err(ValidationError::new("run.preset", "must be a string")),
        None => None,
    };
    let name = preset_name
        .map(str::to_string)
        .or(in_file)
        .unwrap_or_else(|| PRESETS[0].to_string());
    let base = preset(&name)?;
    let mut value = toml::Value::try_from(&base).map_err(|e| ValidationError::new("preset", e.to_string()))?;
    merge(&mut value, over);
    value
        .try_into()
        .map_err(|e: toml::de::Error| ValidationError::new("config", e.message().to_string()))
}

fn positive(field: &str, x: f64) -> Result<(), ValidationError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(ValidationError::new(
            field,
            format!("must be positive and finite, got {x}"),
        ))
    }
}

fn finite(field: &str, x: f64) -> Result<(), ValidationError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(ValidationError::new(field, format!("must be finite, got {x}")))
    }
}

impl ExperimentConfig {
    pub fn model_spec(&self) -> Result<ModelSpec, ValidationError> {
        let m = &self.model;
        let spec = match m.topology {
            TopologyName::Ladder => ModelSpec::ladder(m.l, m.kappa),
            TopologyName::Chain => {
                let mut s = ModelSpec::chain(m.l);
                s.kappa = m.kappa;
                s
            }
        }
        .with_field(m.b);
        let n = spec.n_spins();
        let sector = match m.sector.as_str() {
            "full" => None,
            "largest" => Some(Magnetization::with_n_up(n, n / 2)),
            "one-down" => Some(Magnetization::with_n_up(n, n.saturating_sub(1))),
            s => {
                let twice: i32 = s.strip_prefix("m=").and_then(|v| v.parse().ok()).ok_or_else(|| {
                    ValidationError::new(
                        "model.sector",
                        format!("expected full, largest, one-down or m=<2M>, got `{s}`"),
                    )
                })?;
                Some(Magnetization::from_twice(twice))
            }
        };
        let spec = spec.with_sector(sector);
        spec.validate()
            .map_err(|e| ValidationError::new("model", e.to_string()))?;
        Ok(spec)
    }

    pub fn protocol(&self) -> Result<DriveProtocol, ValidationError> {
        let p = &self.protocol;
        DriveProtocol::new(p.lambda, p.nu, p.half_periods).map_err(|e| ValidationError::new("protocol", e.to_string()))
    }

    pub fn e0(&self) -> f64 {
        let n = match self.model.topology {
            TopologyName::Ladder => 2 * self.model.l + 1,
            TopologyName::Chain => self.model.l + 1,
        };
        self.analysis.e0.unwrap_or(self.analysis.e0_per_spin * n as f64)
    }

    pub fn theta(&self) -> f64 {
        self.analysis.theta.unwrap_or(PI / self.analysis.graining)
    }

    /// Checks every precondition reachable from this config for `kind`.
    pub fn validate(&self, kind: Kind) -> Result<(), ValidationError> {
        let spec = self.model_spec()?;
        finite("model.kappa", self.model.kappa)?;
        finite("model.b", self.model.b)?;
        if self.model.topology == TopologyName::Ladder && self.model.l == 0 && kind != Kind::Dos {
            return Err(ValidationError::new(
                "model.l",
                "an isolated spin has no bath; only `dos` runs on L = 0",
            ));
        }
        self.protocol()?;
        positive("protocol.dt", self.protocol.dt)?;
        if self.protocol.dt > 0.1 {
            return Err(ValidationError::new(
                "protocol.dt",
                "must not exceed 0.1 (Taylor step stability)",
            ));
        }
        let a = &self.analysis;
        positive("analysis.delta", a.delta)?;
        positive("analysis.window", a.window)?;
        finite("analysis.e0_per_spin", a.e0_per_spin)?;
        if let Some(e) = a.e0 {
            finite("analysis.e0", e)?;
        }
        positive("analysis.graining", a.graining)?;
        if let Some(t) = a.theta {
            positive("analysis.theta", t)?;
            if PI / t > a.graining * (1.0 + 1e-9) {
                return Err(ValidationError::new(
                    "analysis.theta",
                    format!(
                        "resolution pi/theta = {} is coarser than the graining {}",
                        PI / t,
                        a.graining
                    ),
                ));
            }
        }
        if a.n_samples == 0 {
            return Err(ValidationError::new("analysis.n_samples", "must be at least 1"));
        }
        if a.n_energies < stiffwork::work::MIN_STIFFNESS_SAMPLES {
            return Err(ValidationError::new(
                "analysis.n_energies",
                format!(
                    "chi_bar needs at least {} sample energies",
                    stiffwork::work::MIN_STIFFNESS_SAMPLES
                ),
            ));
        }
        if !(a.crooks_floor > 0.0 && a.crooks_floor < 1.0) {
            return Err(ValidationError::new("analysis.crooks_floor", "must lie in (0, 1)"));
        }
        if a.mixture_windows == 0 {
            return Err(ValidationError::new("analysis.mixture_windows", "must be at least 1"));
        }
        positive("analysis.bath_delta", a.bath_delta)?;
        positive("analysis.t_max", a.t_max)?;
        positive("analysis.max_omega", a.max_omega)?;
        if a.relax_seeds == 0 {
            return Err(ValidationError::new("analysis.relax_seeds", "must be at least 1"));
        }
        if let Some(b) = a.beta {
            finite("analysis.beta", b)?;
        }
        if self.run.workers == 0 {
            return Err(ValidationError::new("run.workers", "must be at least 1"));
        }
        if self.run.out.is_empty() {
            return Err(ValidationError::new("run.out", "must name a directory"));
        }
        let dim = spec
            .basis()
            .map_err(|e| ValidationError::new("model", e.to_string()))?
            .dim();
        match kind {
            Kind::Dos => {}
            Kind::Relax => {
                if dim > EXACT_DIM_LIMIT {
                    return Err(ValidationError::new(
                        "model.l",
                        format!("{dim} states exceed the exact limit {EXACT_DIM_LIMIT} needed for the canonical value"),
                    ));
                }
            }
            _ => {
                if spec.sector.is_some() {
                    return Err(ValidationError::new(
                        "model.sector",
                        "the drive mixes sectors; use `full`",
                    ));
                }
                if dim > EXACT_DIM_LIMIT {
                    return Err(ValidationError::new(
                        "model.l",
                        format!("dimension {dim} exceeds the exact-diagonalization limit {EXACT_DIM_LIMIT}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML rendering. Worker count and output
    /// directory do not change results and are left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.run.workers = 1;
        c.run.out.clear();
        let text = toml::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
