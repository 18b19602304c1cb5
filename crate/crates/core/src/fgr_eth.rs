//! The driving operator in the eigenbasis of `H0`: windowed golden-rule
//! rates, their dependence on the energy difference only, the coarse map
//! `g(E', E)` and cell statistics of the matrix elements.
//!
//! Matrix elements are formed block by block, `Q_a^T V Q_b` for every pair of
//! diagonalized sectors that `V` connects, and reduced into window cells on
//! the fly; the full matrix is never stored.

use std::f64::consts::PI;

use faer::Mat;
use rayon::prelude::*;

use crate::eigen::Eigensystem;
use crate::error::{Error, Result};
use crate::propagator::{propagate, DriveProtocol, PropagationOptions, TimeGrid};
use crate::sparse::SparseOperator;
use crate::state_prep::EnergyWindow;

/// Matrix elements below this magnitude count as zero.
pub const ZERO_TOL: f64 = 1e-10;
/// Cells with fewer elements are flagged unreliable.
pub const MIN_RELIABLE_ELEMENTS: usize = 10;

/// Windows centered at `anchor + k delta` for `k = k_min ..`, with their eigenstate counts.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPartition {
    pub anchor: f64,
    pub delta: f64,
    pub k_min: i64,
    pub counts: Vec<usize>,
}

impl WindowPartition {
    /// Every window of the grid whose center lies in `[lo, hi]`.
    pub fn new(eig: &Eigensystem, anchor: f64, delta: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::param("delta", format!("must be positive, got {delta}")));
        }
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::param("range", format!("[{lo}, {hi}] is not an interval")));
        }
        let k_min = ((lo - anchor) / delta).ceil() as i64;
        let k_max = ((hi - anchor) / delta).floor() as i64;
        if k_max < k_min {
            return Err(Error::param("range", format!("[{lo}, {hi}] holds no window center")));
        }
        let counts = (k_min..=k_max)
            .map(|k| {
                let w = EnergyWindow {
                    e: anchor + k as f64 * delta,
                    delta,
                };
                eig.indices_in(w.lo(), w.hi()).len()
            })
            .collect();
        Ok(Self {
            anchor,
            delta,
            k_min,
            counts,
        })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn center(&self, w: usize) -> f64 {
        self.anchor + (self.k_min + w as i64) as f64 * self.delta
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.len()).map(|w| self.center(w)).collect()
    }

    /// Window holding energy `e`, using the same half-open convention as [`EnergyWindow`].
    pub fn window_of(&self, e: f64) -> Option<usize> {
        let k = ((e - self.anchor) / self.delta + 0.5).floor() as i64;
        let w = k - self.k_min;
        (w >= 0 && (w as usize) < self.len()).then_some(w as usize)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Count at the midpoint of windows `a` and `b`; halfway points average the two neighbors.
    pub fn midpoint_count(&self, a: usize, b: usize) -> Option<f64> {
        let s = a + b;
        if s % 2 == 0 {
            self.counts.get(s / 2).map(|&c| c as f64)
        } else {
            let (l, r) = (s / 2, s / 2 + 1);
            match (self.counts.get(l), self.counts.get(r)) {
                (Some(&x), Some(&y)) => Some(0.5 * (x + y) as f64),
                _ => None,
            }
        }
    }
}

/// Per window pair `(E, E')` sums over `i in E, f in E'` of the matrix elements `V_if`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementStats {
    pub partition: WindowPartition,
    n: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    sum_abs: Vec<f64>,
    nonzero: Vec<usize>,
    diag_sum: Vec<f64>,
    /// Pairs inside (sector, parity) sub-blocks holding at least one nonzero element.
    connected: usize,
}

impl ElementStats {
    /// Reduces the eigenbasis matrix of `v` into the cells of `part`. Every
    /// level inside the partition must carry a kept eigenvector.
    pub fn compute(eig: &Eigensystem, v: &SparseOperator, part: &WindowPartition) -> Result<Self> {
        if v.dim() != eig.host_dim() {
            return Err(Error::DimensionMismatch {
                expected: eig.host_dim(),
                got: v.dim(),
            });
        }
        if !v.is_hermitian() {
            return Err(Error::param("v", "must be Hermitian"));
        }
        // host index -> (block, local row)
        let mut owner = vec![(u32::MAX, u32::MAX); eig.host_dim()];
        for (b, blk) in eig.blocks().iter().enumerate() {
            for (k, &h) in blk.host_index.iter().enumerate() {
                owner[h] = (b as u32, k as u32);
            }
        }
        // kept columns of each block falling in the partition
        let mut selected: Vec<Vec<(usize, usize, i8)>> = Vec::with_capacity(eig.blocks().len());
        for blk in eig.blocks() {
            let mut sel = Vec::new();
            for (local, &e) in blk.values.iter().enumerate() {
                if let Some(w) = part.window_of(e) {
                    let parity = blk.parity[local];
                    let col = blk.column(local).ok_or_else(|| {
                        Error::param(
                            "eigensystem",
                            format!("no eigenvector kept for E = {e} inside the partition"),
                        )
                    })?;
                    sel.push((col, w, parity));
                }
            }
            selected.push(sel);
        }
        let n = part.len();
        let nb = eig.blocks().len();
        let pairs: Vec<(usize, usize)> = (0..nb).flat_map(|a| (0..nb).map(move |b| (a, b))).collect();
        let partial = pairs
            .par_iter()
            .map(|&(a, b)| pair_cells(eig, v, &owner, &selected, a, b, n))
            .collect::<Vec<_>>();
        let mut out = Self {
            partition: part.clone(),
            n,
            sum: vec![0.0; n * n],
            sum_sq: vec![0.0; n * n],
            sum_abs: vec![0.0; n * n],
            nonzero: vec![0; n * n],
            diag_sum: vec![0.0; n],
            connected: 0,
        };
        for p in partial.into_iter().flatten() {
            out.connected += p.connected;
            for c in 0..n * n {
                out.sum[c] += p.sum[c];
                out.sum_sq[c] += p.sum_sq[c];
                out.sum_abs[c] += p.sum_abs[c];
                out.nonzero[c] += p.nonzero[c];
            }
            for w in 0..n {
                out.diag_sum[w] += p.diag_sum[w];
            }
        }
        Ok(out)
    }

    fn cell(&self, from: usize, to: usize) -> usize {
        from * self.n + to
    }

    /// `sum_{i in E, f in E'} |V_if|^2`
    pub fn sum_sq(&self, from: usize, to: usize) -> f64 {
        self.sum_sq[self.cell(from, to)]
    }

    /// `sum_{i in E, f in E'} |V_if|`
    pub fn sum_abs(&self, from: usize, to: usize) -> f64 {
        self.sum_abs[self.cell(from, to)]
    }

    /// `N(E) N(E')`
    pub fn elements(&self, from: usize, to: usize) -> usize {
        self.partition.counts[from] * self.partition.counts[to]
    }

    /// `gamma_{E -> E'} = 2 pi / (delta N(E)) sum |V_if|^2`, `None` for empty source windows.
    pub fn rates(&self) -> RateMatrix {
        let d = self.partition.delta;
        let gamma = (0..self.n)
            .map(|i| {
                let ni = self.partition.counts[i];
                (0..self.n)
                    .map(|f| (ni > 0).then(|| 2.0 * PI * self.sum_sq(i, f) / (d * ni as f64)))
                    .collect()
            })
            .collect();
        RateMatrix {
            partition: self.partition.clone(),
            gamma,
        }
    }

    /// `g(E', E) = sum |V_if| sqrt(N_mid) / (N_E' N_E)`; `None` where a count vanishes
    /// or the midpoint leaves the partition.
    pub fn coarse_map(&self) -> CoarseMatrix {
        let p = &self.partition;
        let g = (0..self.n)
            .map(|i| {
                (0..self.n)
                    .map(|f| {
                        let (ni, nf) = (p.counts[i], p.counts[f]);
                        let mid = p.midpoint_count(i, f)?;
                        (ni > 0 && nf > 0).then(|| self.sum_abs(i, f) * mid.sqrt() / (ni * nf) as f64)
                    })
                    .collect()
            })
            .collect();
        CoarseMatrix {
            partition: p.clone(),
            g,
        }
    }

    pub fn eth(&self) -> EthStats {
        let p = &self.partition;
        let mut cells = Vec::new();
        for i in 0..self.n {
            for f in 0..self.n {
                let n_el = self.elements(i, f);
                if n_el == 0 {
                    continue;
                }
                let c = self.cell(i, f);
                let m = n_el as f64;
                let mean = self.sum[c] / m;
                cells.push(EthCell {
                    e: p.center(i),
                    e_prime: p.center(f),
                    n_elements: n_el,
                    mean,
                    variance: (self.sum_sq[c] / m - mean * mean).max(0.0),
                    zero_fraction: 1.0 - self.nonzero[c] as f64 / m,
                    reliable: n_el >= MIN_RELIABLE_ELEMENTS,
                });
            }
        }
        let diagonal = (0..self.n)
            .filter(|&w| p.counts[w] > 0)
            .map(|w| (p.center(w), self.diag_sum[w] / p.counts[w] as f64))
            .collect();
        EthStats { cells, diagonal }
    }

    /// Fraction of exactly vanishing elements over all pairs inside the partition.
    pub fn zero_fraction(&self) -> f64 {
        let total: usize = (0..self.n)
            .flat_map(|i| (0..self.n).map(move |f| (i, f)))
            .map(|(i, f)| self.elements(i, f))
            .sum();
        let nz: usize = self.nonzero.iter().sum();
        1.0 - nz as f64 / total.max(1) as f64
    }

    /// Fraction of vanishing elements among the pairs that no resolved
    /// symmetry forbids: sub-blocks of fixed magnetization and parity on
    /// both sides that hold no nonzero element at all are left out. What
    /// remains counts zeros from conservation laws the blocking does not see.
    pub fn connected_zero_fraction(&self) -> f64 {
        let nz: usize = self.nonzero.iter().sum();
        1.0 - nz as f64 / self.connected.max(1) as f64
    }
}

struct Cells {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    sum_abs: Vec<f64>,
    nonzero: Vec<usize>,
    diag_sum: Vec<f64>,
    connected: usize,
}

fn pair_cells(
    eig: &Eigensystem,
    v: &SparseOperator,
    owner: &[(u32, u32)],
    selected: &[Vec<(usize, usize, i8)>],
    a: usize,
    b: usize,
    n: usize,
) -> Option<Cells> {
    let (sa, sb) = (&selected[a], &selected[b]);
    if sa.is_empty() || sb.is_empty() {
        return None;
    }
    let (ba, bb) = (&eig.blocks()[a], &eig.blocks()[b]);
    // rows of V restricted to block a x block b, as (row, col, value) in local indices
    let mut entries = Vec::new();
    for (ka, &h) in ba.host_index.iter().enumerate() {
        for (col, val) in v.row(h) {
            let (ob, kb) = owner[col];
            if ob as usize == b {
                entries.push((ka, kb as usize, val));
            }
        }
    }
    if entries.is_empty() {
        return None;
    }
    let qa = Mat::<f64>::from_fn(ba.dim(), sa.len(), |r, c| ba.vectors[(r, sa[c].0)]);
    let mut vqb = Mat::<f64>::zeros(ba.dim(), sb.len());
    for &(ka, kb, val) in &entries {
        for (c, &(col, _, _)) in sb.iter().enumerate() {
            vqb[(ka, c)] += val * bb.vectors[(kb, col)];
        }
    }
    let m = qa.transpose() * &vqb;
    let mut out = Cells {
        sum: vec![0.0; n * n],
        sum_sq: vec![0.0; n * n],
        sum_abs: vec![0.0; n * n],
        nonzero: vec![0; n * n],
        diag_sum: vec![0.0; n],
        connected: 0,
    };
    // (pairs, nonzero) per parity class, indexed by parity + 1 on each side
    let mut class = [[(0usize, 0usize); 3]; 3];
    for (i, &(ca, wi, pi)) in sa.iter().enumerate() {
        for (f, &(cb, wf, pf)) in sb.iter().enumerate() {
            let x = m[(i, f)];
            let c = wi * n + wf;
            out.sum[c] += x;
            out.sum_sq[c] += x * x;
            out.sum_abs[c] += x.abs();
            let k = &mut class[(pi + 1) as usize][(pf + 1) as usize];
            k.0 += 1;
            if x.abs() >= ZERO_TOL {
                out.nonzero[c] += 1;
                k.1 += 1;
            }
            if a == b && ca == cb {
                out.diag_sum[wi] += x;
            }
        }
    }
    out.connected = class.iter().flatten().filter(|k| k.1 > 0).map(|k| k.0).sum();
    Some(out)
}

/// `gamma[E][E']`, rates for the unit-amplitude operator; multiply by the
/// squared drive amplitude for `lambda V`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    pub partition: WindowPartition,
    pub gamma: Vec<Vec<Option<f64>>>,
}

/// Coarse-grained map, indexed `g[E][E']`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseMatrix {
    pub partition: WindowPartition,
    pub g: Vec<Vec<Option<f64>>>,
}

pub fn fgr_rates(eig: &Eigensystem, v: &SparseOperator, part: &WindowPartition) -> Result<RateMatrix> {
    Ok(ElementStats::compute(eig, v, part)?.rates())
}

pub fn coarse_grained_map(eig: &Eigensystem, v: &SparseOperator, part: &WindowPartition) -> Result<CoarseMatrix> {
    Ok(ElementStats::compute(eig, v, part)?.coarse_map())
}

pub fn eth_offdiagonal_stats(eig: &Eigensystem, v: &SparseOperator, part: &WindowPartition) -> Result<EthStats> {
    Ok(ElementStats::compute(eig, v, part)?.eth())
}

/// Spread of a window-pair quantity over source windows at fixed `omega = E - E'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaSpread {
    pub omega: f64,
    pub mean: f64,
    /// Standard deviation over mean.
    pub relative_spread: f64,
    pub n_sources: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpreadReport {
    pub per_omega: Vec<OmegaSpread>,
    pub max_spread: f64,
}

impl SpreadReport {
    pub fn at(&self, omega: f64) -> Option<&OmegaSpread> {
        self.per_omega.iter().find(|s| (s.omega - omega).abs() < 1e-9)
    }
}

/// For each `omega` with `|omega| <= max_omega`, the relative spread of
/// `m[E][E - omega]` over source windows `E` in `[lo, hi]`. Needs at least
/// `min_sources` sources per `omega` (and 3 overall).
pub fn fixed_omega_spread(
    m: &[Vec<Option<f64>>],
    part: &WindowPartition,
    lo: f64,
    hi: f64,
    max_omega: f64,
) -> Result<SpreadReport> {
    let sources: Vec<usize> = (0..part.len())
        .filter(|&w| {
            let e = part.center(w);
            e >= lo - 1e-9 && e <= hi + 1e-9
        })
        .collect();
    if sources.len() < 3 {
        return Err(Error::TooFewSamples {
            need: 3,
            got: sources.len(),
        });
    }
    let j_max = (max_omega / part.delta + 1e-9).floor() as i64;
    let mut per_omega = Vec::new();
    for j in -j_max..=j_max {
        let vals: Vec<f64> = sources
            .iter()
            .filter_map(|&s| {
                let f = s as i64 - j;
                if f < 0 || f as usize >= part.len() {
                    return None;
                }
                m[s][f as usize]
            })
            .collect();
        if vals.len() < 3 {
            continue;
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let sd = (vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        per_omega.push(OmegaSpread {
            omega: j as f64 * part.delta,
            mean,
            relative_spread: if mean > 0.0 { sd / mean } else { f64::INFINITY },
            n_sources: vals.len(),
        });
    }
    let max_spread = per_omega.iter().map(|s| s.relative_spread).fold(0.0, f64::max);
    Ok(SpreadReport { per_omega, max_spread })
}

/// Rate stiffness: relative spread of `gamma_{E -> E - omega}` over `E` in `[lo, hi]`.
pub fn rate_stiffness(rm: &RateMatrix, lo: f64, hi: f64, max_omega: f64) -> Result<SpreadReport> {
    fixed_omega_spread(&rm.gamma, &rm.partition, lo, hi, max_omega)
}

/// Spread of `g` along lines of fixed `omega`.
pub fn coarse_map_spread(cm: &CoarseMatrix, lo: f64, hi: f64, max_omega: f64) -> Result<SpreadReport> {
    fixed_omega_spread(&cm.g, &cm.partition, lo, hi, max_omega)
}

/// `ln gamma(omega) + beta omega - ln gamma(-omega)` from the source-averaged
/// rates of a spread report; zero under detailed balance with `Omega ~ exp(beta E)`.
pub fn detailed_balance_residuals(report: &SpreadReport, beta: f64) -> Vec<(f64, f64)> {
    report
        .per_omega
        .iter()
        .filter(|s| s.omega > 0.0)
        .filter_map(|s| {
            let back = report.at(-s.omega)?;
            (s.mean > 0.0 && back.mean > 0.0).then(|| (s.omega, s.mean.ln() + beta * s.omega - back.mean.ln()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EthCell {
    pub e: f64,
    pub e_prime: f64,
    pub n_elements: usize,
    pub mean: f64,
    pub variance: f64,
    pub zero_fraction: f64,
    /// At least [`MIN_RELIABLE_ELEMENTS`] elements.
    pub reliable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EthStats {
    pub cells: Vec<EthCell>,
    /// `(E, mean V_nn)` per non-empty window.
    pub diagonal: Vec<(f64, f64)>,
}

/// `max_i |sum_f |V_if|^2 - <i|V^2|i>|` over the given levels, summing `f`
/// over every level of `eig` (all eigenvectors must be kept).
pub fn sum_rule_residual(eig: &Eigensystem, v: &SparseOperator, levels: &[usize]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &i in levels {
        let psi = eig.vector(i)?;
        let vpsi = v.apply(&psi)?;
        let direct = vpsi.norm_sqr();
        let pops = eig.populations(&vpsi)?;
        let mut s = 0.0;
        for p in pops {
            s += p.ok_or_else(|| Error::param("eigensystem", "sum rule needs every eigenvector"))?;
        }
        worst = worst.max((s - direct).abs());
    }
    Ok(worst)
}

/// Direct propagation against the golden rule: the population of window
/// `to` after driving window `from` with `lambda sin(nu t) V`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortTimeCheck {
    /// `(t, P_{E'}(t))` averaged over the source window eigenstates.
    pub curve: Vec<(f64, f64)>,
    /// Least-squares slope of `P` over the fit interval.
    pub measured_slope: f64,
    /// `lambda^2 / 4 gamma_{E -> E'}`
    pub predicted_slope: f64,
}

impl ShortTimeCheck {
    pub fn relative_error(&self) -> f64 {
        (self.measured_slope - self.predicted_slope).abs() / self.predicted_slope.abs()
    }
}

/// Propagates every eigenstate of window `from` of `part` under
/// `h0 + lambda sin(nu t) v` with `nu = |E' - E|` and fits the slope of the
/// transferred population into window `to` over `fit = (t0, t1)`.
#[allow(clippy::too_many_arguments)]
pub fn short_time_check(
    h0: &SparseOperator,
    v: &SparseOperator,
    eig: &Eigensystem,
    part: &WindowPartition,
    from: usize,
    to: usize,
    lambda: f64,
    fit: (f64, f64),
    dt: f64,
) -> Result<ShortTimeCheck> {
    let (t0, t1) = fit;
    if !(t0 >= 0.0 && t1 > t0) {
        return Err(Error::param("fit", format!("({t0}, {t1}) is not an interval")));
    }
    let nu = (part.center(to) - part.center(from)).abs();
    if nu <= 0.0 {
        return Err(Error::param("to", "must differ from the source window"));
    }
    // half periods covering the fit interval; the duration only sets the schedule
    let half_periods = (t1 * nu / PI).ceil().max(1.0) as u32;
    let proto = DriveProtocol::new(lambda, nu, half_periods)?;
    let grid = TimeGrid::covering(t1, dt)?;
    let src = EnergyWindow {
        e: part.center(from),
        delta: part.delta,
    };
    let dst = EnergyWindow {
        e: part.center(to),
        delta: part.delta,
    };
    let sources = src.levels(eig)?;
    let targets = dst.levels(eig)?;
    let rm = ElementStats::compute(eig, v, part)?.rates();
    let gamma = rm.gamma[from][to].ok_or(Error::NoAdmissibleBins)?;
    let opts = PropagationOptions {
        sample_every: Some((grid.n_steps / 200).max(1)),
        ..PropagationOptions::default()
    };
    let curves = sources
        .par_iter()
        .map(|&i| {
            let psi = eig.vector(i)?;
            let mut pts = Vec::new();
            let mut err = None;
            let mut obs = |t: f64, s: &crate::state::StateVector| match eig.populations(s) {
                Ok(p) => pts.push((t, targets.iter().map(|&f| p[f].unwrap_or(0.0)).sum::<f64>())),
                Err(e) => err = Some(e),
            };
            propagate(h0, Some((v, &proto)), &grid, &psi, &opts, Some(&mut obs))?;
            match err {
                Some(e) => Err(e),
                None => Ok(pts),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let n = curves.len() as f64;
    let curve: Vec<(f64, f64)> = (0..curves[0].len())
        .map(|k| (curves[0][k].0, curves.iter().map(|c| c[k].1).sum::<f64>() / n))
        .collect();
    let pts: Vec<(f64, f64)> = curve.iter().copied().filter(|&(t, _)| t >= t0 && t <= t1).collect();
    if pts.len() < 3 {
        return Err(Error::TooFewSamples {
            need: 3,
            got: pts.len(),
        });
    }
    let m = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / m, a.1 + p.1 / m));
    let (sxx, sxy) = pts.iter().fold((0.0, 0.0), |a, p| {
        (a.0 + (p.0 - mx).powi(2), a.1 + (p.0 - mx) * (p.1 - my))
    });
    Ok(ShortTimeCheck {
        curve,
        measured_slope: sxy / sxx,
        predicted_slope: lambda * lambda / 4.0 * gamma,
    })
}
