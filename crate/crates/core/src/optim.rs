//! Classical optimizers for the surface configuration and FD beamformer.
//!
//! For fixed `(v, w)` the combiner-output SI and the downlink amplitude are
//! both affine in each element's coefficient (see [`LinkTerms`]), so every
//! inner step here is a closed-form or 1-D update on scalar sums:
//!
//! * [`phase_cd_reflect`] rotates each reflect phase against the rest of the
//!   SI sum,
//! * [`phase_cd_transmit`] co-phases each transmit term with the rest of the
//!   downlink sum,
//! * [`es_amplitude_step`] grid-searches each element's split angle,
//! * [`ms_flip_pass`] tries single-element reflect/transmit flips.
//!
//! [`alternating_optimize`] cycles through them with a ZF beamformer and an
//! MRC combiner. Constrained objectives are scalarized with a softplus hinge
//! penalty whose weight grows over the first outer iterations.

use std::cmp::Ordering;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::channel::{ChannelSet, ScenarioSpec};
use crate::error::{Error, Result};
use crate::fdlink::{evaluate, mrc_combiner, rate_from_snr, to_db, LinkConfig, LinkTerms, Metrics};
use crate::numerics::{dot_h, norm_sq, wrap_angle, CMatrix, Rng, C64, ZERO};
use crate::starris::{effective_dl_channel, effective_si_channel, phase_step, project, StarConfig, StarMode};

/// Penalty weights used by successive outer iterations; the last one is
/// kept for the remainder of the run.
pub const LAMBDA_SCHEDULE: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];

/// Sharpness of the softplus hinge, per unit of violation (dB or bps/Hz).
pub const HINGE_SHARPNESS: f64 = 10.0;

/// Relative tolerance of the exact feasibility check.
pub const FEAS_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Objective {
    /// Maximize the downlink rate with residual SI at most `epsilon_db`
    /// above the FD noise floor.
    MaxRateSubjectToSi { epsilon_db: f64 },
    /// Minimize residual SI with the downlink rate at least `r_min` bps/Hz.
    MinSiSubjectToRate { r_min: f64 },
}

impl Objective {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Objective::MaxRateSubjectToSi { epsilon_db } if !epsilon_db.is_finite() => {
                Err(Error::Config("epsilon_db must be finite".into()))
            }
            Objective::MinSiSubjectToRate { r_min } if !(r_min >= 0.0) || !r_min.is_finite() => {
                Err(Error::Config("r_min must be non-negative".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn is_feasible(&self, m: &Metrics) -> bool {
        match *self {
            Objective::MaxRateSubjectToSi { epsilon_db } => {
                m.resid_si_db <= epsilon_db + FEAS_TOL * epsilon_db.abs().max(1.0)
            }
            Objective::MinSiSubjectToRate { r_min } => m.rate_dl >= r_min * (1.0 - FEAS_TOL),
        }
    }

    /// Constraint violation in the constraint's own unit; 0 when satisfied.
    pub fn violation(&self, rate_dl: f64, resid_si_db: f64) -> f64 {
        match *self {
            Objective::MaxRateSubjectToSi { epsilon_db } => (resid_si_db - epsilon_db).max(0.0),
            Objective::MinSiSubjectToRate { r_min } => (r_min - rate_dl).max(0.0),
        }
    }

    /// Single ranking value, higher is better. Every feasible point outranks
    /// every infeasible one; infeasible points rank by violation.
    pub fn score(&self, m: &Metrics) -> f64 {
        let feasible = self.is_feasible(m);
        let viol = self.violation(m.rate_dl, m.resid_si_db);
        match self {
            Objective::MaxRateSubjectToSi { .. } => {
                if feasible {
                    m.rate_dl
                } else {
                    -viol.max(f64::MIN_POSITIVE)
                }
            }
            Objective::MinSiSubjectToRate { .. } => {
                if feasible {
                    -m.resid_si_db
                } else {
                    -1e6 - viol
                }
            }
        }
    }

    /// Primary quantity, higher is better: downlink rate, or SIC gain.
    pub fn primary(&self, m: &Metrics) -> f64 {
        match self {
            Objective::MaxRateSubjectToSi { .. } => m.rate_dl,
            Objective::MinSiSubjectToRate { .. } => m.sic_gain_db,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::MaxRateSubjectToSi { epsilon_db } => write!(f, "maxrate:{epsilon_db}"),
            Objective::MinSiSubjectToRate { r_min } => write!(f, "minsi:{r_min}"),
        }
    }
}

impl FromStr for Objective {
    type Err = Error;

    /// Parses `maxrate:<epsilon_db>` or `minsi:<r_min>`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, val) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("objective '{s}' must look like maxrate:3 or minsi:2")))?;
        let x: f64 = val
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("objective parameter '{val}' is not a number")))?;
        let obj = match kind.trim().to_ascii_lowercase().as_str() {
            "maxrate" => Objective::MaxRateSubjectToSi { epsilon_db: x },
            "minsi" => Objective::MinSiSubjectToRate { r_min: x },
            other => return Err(Error::Config(format!("unknown objective '{other}'"))),
        };
        obj.validate()?;
        Ok(obj)
    }
}

pub fn softplus_hinge(x: f64) -> f64 {
    let z = HINGE_SHARPNESS * x;
    if z > 30.0 {
        x
    } else {
        z.exp().ln_1p() / HINGE_SHARPNESS
    }
}

/// Penalty-form scalarization `J` of an objective; lower is better.
#[derive(Clone, Copy, Debug)]
pub struct Scalarizer {
    pub objective: Objective,
    pub lambda: f64,
    pub noise_fd: f64,
    pub noise_bob: f64,
    pub floor: f64,
}

impl Scalarizer {
    pub fn new(spec: &ScenarioSpec, objective: Objective, lambda: f64) -> Self {
        Self {
            objective,
            lambda,
            noise_fd: spec.noise_fd,
            noise_bob: spec.noise_bob,
            floor: spec.residual_floor,
        }
    }

    pub fn value(&self, rate_dl: f64, resid_si_db: f64) -> f64 {
        match self.objective {
            Objective::MaxRateSubjectToSi { epsilon_db } => {
                -rate_dl + self.lambda * softplus_hinge(resid_si_db - epsilon_db)
            }
            Objective::MinSiSubjectToRate { r_min } => resid_si_db + self.lambda * softplus_hinge(r_min - rate_dl),
        }
    }

    /// `J` from the raw SI and downlink amplitudes.
    pub fn from_sums(&self, si: C64, dl: C64) -> f64 {
        let rate = rate_from_snr(dl.norm_sqr() / self.noise_bob);
        let resid_db = to_db(si.norm_sqr() + self.floor, self.noise_fd);
        self.value(rate, resid_db)
    }

    pub fn of(&self, terms: &LinkTerms, cfg: &StarConfig) -> f64 {
        self.from_sums(terms.si_sum(cfg), terms.dl_sum(cfg))
    }

    pub fn of_metrics(&self, m: &Metrics) -> f64 {
        self.value(m.rate_dl, m.resid_si_db)
    }
}

/// Outcome of any optimizer.
#[derive(Clone, Debug)]
pub struct OptResult {
    pub cfg: StarConfig,
    pub link: LinkConfig,
    pub metrics: Metrics,
    pub feasible: bool,
    pub iters: usize,
    pub wall_ms: f64,
    /// Best-seen score after each outer iteration (or each sample).
    pub history: Vec<f64>,
    /// Set when a step failed and the result is reported as infeasible.
    pub note: Option<String>,
}

impl OptResult {
    fn new(
        spec: &ScenarioSpec,
        ch: &ChannelSet,
        objective: Objective,
        cfg: StarConfig,
        link: LinkConfig,
    ) -> Result<OptResult> {
        let metrics = evaluate(spec, ch, &cfg, &link)?;
        Ok(OptResult {
            feasible: objective.is_feasible(&metrics),
            cfg,
            link,
            metrics,
            iters: 0,
            wall_ms: 0.0,
            history: Vec::new(),
            note: None,
        })
    }

    pub fn score(&self, objective: &Objective) -> f64 {
        objective.score(&self.metrics)
    }
}

/// Candidate phases on the grid adjacent to `target`, or `target` itself for
/// continuous phases. The lower grid point comes first.
fn phase_candidates(target: f64, levels: usize) -> ([f64; 2], usize) {
    let t = wrap_angle(target);
    match phase_step(levels) {
        None => ([t, t], 1),
        Some(step) => {
            let lo = ((t / step).floor() as usize) % levels;
            let hi = (lo + 1) % levels;
            ([lo as f64 * step, hi as f64 * step], 2)
        }
    }
}

/// Picks the candidate phase minimizing (`minimize`) or maximizing
/// `|rest + a e^{jθ}|`. Ties keep the earlier candidate.
fn best_phase(rest: C64, a: C64, target: f64, levels: usize, minimize: bool) -> f64 {
    let (cands, n) = phase_candidates(target, levels);
    let mut best = cands[0];
    let mut best_val = (rest + a * C64::from_polar(1.0, best)).norm_sqr();
    for &th in &cands[1..n] {
        let val = (rest + a * C64::from_polar(1.0, th)).norm_sqr();
        if (minimize && val < best_val) || (!minimize && val > best_val) {
            best = th;
            best_val = val;
        }
    }
    best
}

/// Closed-form reflect phase for element `i` given the rest of the SI sum.
fn reflect_phase_for(terms: &LinkTerms, cfg: &StarConfig, i: usize, rest: C64) -> Option<f64> {
    let a = terms.refl[i] * cfg.beta_r[i];
    if a == ZERO || rest == ZERO {
        return None;
    }
    let target = PI + rest.arg() - a.arg();
    Some(best_phase(rest, a, target, cfg.phase_levels, true))
}

fn transmit_phase_for(terms: &LinkTerms, cfg: &StarConfig, i: usize, rest: C64) -> Option<f64> {
    let b = terms.trans[i] * cfg.beta_t[i];
    if b == ZERO || rest == ZERO {
        return None;
    }
    let target = rest.arg() - b.arg();
    Some(best_phase(rest, b, target, cfg.phase_levels, false))
}

/// Coordinate descent on reflect phases; returns the config and the
/// residual SI power (floor excluded) after every element update.
pub fn phase_cd_reflect_traced(
    ch: &ChannelSet,
    cfg: &StarConfig,
    link: &LinkConfig,
    sweeps: usize,
) -> Result<(StarConfig, Vec<f64>)> {
    let terms = LinkTerms::new(ch, link, 0.0)?;
    let mut cfg = cfg.clone();
    let mut sum = terms.si_sum(&cfg);
    let mut trace = vec![sum.norm_sqr()];
    for _ in 0..sweeps {
        for i in 0..cfg.len() {
            let cur = terms.refl[i] * cfg.refl_coef(i);
            let rest = sum - cur;
            if let Some(th) = reflect_phase_for(&terms, &cfg, i, rest) {
                let next = rest + terms.refl[i] * C64::from_polar(cfg.beta_r[i], th);
                if next.norm_sqr() <= sum.norm_sqr() {
                    cfg.theta_r[i] = th;
                    sum = next;
                }
            }
            trace.push(sum.norm_sqr());
        }
    }
    Ok((cfg, trace))
}

pub fn phase_cd_reflect(ch: &ChannelSet, cfg: &StarConfig, link: &LinkConfig, sweeps: usize) -> Result<StarConfig> {
    Ok(phase_cd_reflect_traced(ch, cfg, link, sweeps)?.0)
}

/// Coordinate ascent on transmit phases; the trace holds the downlink
/// power `|g_eff w|²` after every element update.
pub fn phase_cd_transmit_traced(
    ch: &ChannelSet,
    cfg: &StarConfig,
    link: &LinkConfig,
    sweeps: usize,
) -> Result<(StarConfig, Vec<f64>)> {
    let terms = LinkTerms::new(ch, link, 0.0)?;
    let mut cfg = cfg.clone();
    let mut sum = terms.dl_sum(&cfg);
    let mut trace = vec![sum.norm_sqr()];
    for _ in 0..sweeps {
        for i in 0..cfg.len() {
            let cur = terms.trans[i] * cfg.trans_coef(i);
            let rest = sum - cur;
            if let Some(th) = transmit_phase_for(&terms, &cfg, i, rest) {
                let next = rest + terms.trans[i] * C64::from_polar(cfg.beta_t[i], th);
                if next.norm_sqr() >= sum.norm_sqr() {
                    cfg.theta_t[i] = th;
                    sum = next;
                }
            }
            trace.push(sum.norm_sqr());
        }
    }
    Ok((cfg, trace))
}

pub fn phase_cd_transmit(ch: &ChannelSet, cfg: &StarConfig, link: &LinkConfig, sweeps: usize) -> Result<StarConfig> {
    Ok(phase_cd_transmit_traced(ch, cfg, link, sweeps)?.0)
}

/// Per-element grid search over the split angle `psi ∈ [0, π/2]`; the trace
/// holds `J` after every element.
pub fn es_amplitude_step_traced(
    ch: &ChannelSet,
    cfg: &StarConfig,
    link: &LinkConfig,
    scal: &Scalarizer,
    grid: usize,
) -> Result<(StarConfig, Vec<f64>)> {
    if cfg.mode != StarMode::Es {
        return Err(Error::ModeMismatch("amplitude step undefined for MS"));
    }
    if grid < 2 {
        return Err(Error::Config("amplitude grid needs at least 2 points".into()));
    }
    let terms = LinkTerms::new(ch, link, 0.0)?;
    let mut cfg = cfg.clone();
    let mut si = terms.si_sum(&cfg);
    let mut dl = terms.dl_sum(&cfg);
    let mut cur_j = scal.from_sums(si, dl);
    let mut trace = vec![cur_j];
    for i in 0..cfg.len() {
        let si_rest = si - terms.refl[i] * cfg.refl_coef(i);
        let dl_rest = dl - terms.trans[i] * cfg.trans_coef(i);
        let er = terms.refl[i] * C64::from_polar(1.0, cfg.theta_r[i]);
        let et = terms.trans[i] * C64::from_polar(1.0, cfg.theta_t[i]);
        let mut best: Option<(f64, f64, C64, C64)> = None;
        for k in 0..grid {
            let psi = FRAC_PI_2 * k as f64 / (grid - 1) as f64;
            let (s, c) = psi.sin_cos();
            let (si_k, dl_k) = (si_rest + er * c, dl_rest + et * s);
            let j = scal.from_sums(si_k, dl_k);
            if best.is_none_or(|b| j < b.0) {
                best = Some((j, psi, si_k, dl_k));
            }
        }
        if let Some((j, psi, si_k, dl_k)) = best {
            if j < cur_j {
                cfg.set_psi(i, psi);
                si = si_k;
                dl = dl_k;
                cur_j = j;
            }
        }
        trace.push(cur_j);
    }
    Ok((cfg, trace))
}

pub fn es_amplitude_step(
    ch: &ChannelSet,
    cfg: &StarConfig,
    link: &LinkConfig,
    scal: &Scalarizer,
    grid: usize,
) -> Result<StarConfig> {
    Ok(es_amplitude_step_traced(ch, cfg, link, scal, grid)?.0)
}

/// One pass of single-element reflect/transmit flips with the newly active
/// phase re-optimized; a flip is kept only if `J` strictly improves.
/// Returns the config, the number of accepted flips and the `J` trace.
pub fn ms_flip_pass_traced(
    ch: &ChannelSet,
    cfg: &StarConfig,
    link: &LinkConfig,
    scal: &Scalarizer,
) -> Result<(StarConfig, usize, Vec<f64>)> {
    if cfg.mode != StarMode::Ms {
        return Err(Error::ModeMismatch("flip pass undefined for ES"));
    }
    let terms = LinkTerms::new(ch, link, 0.0)?;
    let mut cfg = cfg.clone();
    let mut si = terms.si_sum(&cfg);
    let mut dl = terms.dl_sum(&cfg);
    let mut cur_j = scal.from_sums(si, dl);
    let mut trace = vec![cur_j];
    let mut flips = 0;
    for i in 0..cfg.len() {
        let si_rest = si - terms.refl[i] * cfg.refl_coef(i);
        let dl_rest = dl - terms.trans[i] * cfg.trans_coef(i);
        let mut cand = cfg.clone();
        if cfg.is_reflecting(i) {
            cand.set_psi(i, FRAC_PI_2);
            if let Some(th) = transmit_phase_for(&terms, &cand, i, dl_rest) {
                cand.theta_t[i] = th;
            }
        } else {
            cand.set_psi(i, 0.0);
            if let Some(th) = reflect_phase_for(&terms, &cand, i, si_rest) {
                cand.theta_r[i] = th;
            }
        }
        let si_c = si_rest + terms.refl[i] * cand.refl_coef(i);
        let dl_c = dl_rest + terms.trans[i] * cand.trans_coef(i);
        let j = scal.from_sums(si_c, dl_c);
        if j < cur_j {
            cfg = cand;
            si = si_c;
            dl = dl_c;
            cur_j = j;
            flips += 1;
        }
        trace.push(cur_j);
    }
    Ok((cfg, flips, trace))
}

pub fn ms_flip_pass(ch: &ChannelSet, cfg: &StarConfig, link: &LinkConfig, scal: &Scalarizer) -> Result<StarConfig> {
    Ok(ms_flip_pass_traced(ch, cfg, link, scal)?.0)
}

fn normalize_to_power(v: &[C64], p: f64) -> Option<CMatrix> {
    let n = norm_sq(v).sqrt();
    (n > 0.0 && n.is_finite()).then(|| CMatrix::column(v).scale(C64::new(p.sqrt() / n, 0.0)))
}

/// Maximum-ratio transmit beam toward the effective downlink channel.
pub fn mrt_beamformer(ch: &ChannelSet, cfg: &StarConfig, p_fd: f64) -> Result<Option<CMatrix>> {
    let g = effective_dl_channel(ch, cfg)?;
    let gh: Vec<C64> = g.as_slice().iter().map(|z| z.conj()).collect();
    Ok(normalize_to_power(&gh, p_fd))
}

/// Zero-forcing beamformer: MRT projected onto the complement of
/// `q = H_effᴴ v`, so that `vᴴ H_eff w = 0`.
pub fn zf_beamformer(ch: &ChannelSet, cfg: &StarConfig, v: &CMatrix, p_fd: f64) -> Result<CMatrix> {
    let n_tx = ch.n_tx();
    if n_tx < 2 {
        return Err(Error::NoZfDof);
    }
    let h = effective_si_channel(ch, cfg)?;
    let q = h.hermitian().matmul(v)?;
    let g = effective_dl_channel(ch, cfg)?;
    let gh: Vec<C64> = g.as_slice().iter().map(|z| z.conj()).collect();
    let gnorm = norm_sq(&gh).sqrt();
    if !(gnorm > 0.0) {
        return Err(Error::DownlinkInNullSpace);
    }
    let q = q.as_slice();
    let qn = norm_sq(q);
    let projected: Vec<C64> = if qn > 0.0 {
        let coef = dot_h(q, &gh) / qn;
        gh.iter().zip(q).map(|(&x, &qi)| x - qi * coef).collect()
    } else {
        gh.clone()
    };
    if norm_sq(&projected).sqrt() <= 1e-12 * gnorm {
        return Err(Error::DownlinkInNullSpace);
    }
    Ok(normalize_to_power(&projected, p_fd).expect("non-zero projection"))
}

/// DFT column `k` of size `n`, scaled to power `p`.
pub fn dft_beam(n: usize, k: usize, p: f64) -> CMatrix {
    let amp = (p / n as f64).sqrt();
    let col: Vec<C64> = (0..n)
        .map(|i| C64::from_polar(amp, -TAU * (k * i) as f64 / n as f64))
        .collect();
    CMatrix::column(&col)
}

/// The oracle's finite beam codebook for a given surface state:
/// `[MRT, ZF-projected MRT, DFT column 0, DFT column 1]`.
/// MRT falls back to DFT column 0 when the downlink channel is zero, and
/// the ZF entry falls back to MRT when no ZF solution exists.
pub fn beam_codebook(ch: &ChannelSet, cfg: &StarConfig, v: &CMatrix, p_fd: f64) -> Result<[CMatrix; 4]> {
    let n = ch.n_tx();
    let dft0 = dft_beam(n, 0, p_fd);
    let dft1 = dft_beam(n, 1 % n.max(1), p_fd);
    let mrt = mrt_beamformer(ch, cfg, p_fd)?.unwrap_or_else(|| dft0.clone());
    let zf = zf_beamformer(ch, cfg, v, p_fd).unwrap_or_else(|_| mrt.clone());
    Ok([mrt, zf, dft0, dft1])
}

/// Beam on the arc between MRT (`alpha = 0`) and ZF (`alpha = 1`):
/// `√p · normalize(gᴴ − alpha · P_q gᴴ)`, where `P_q` projects onto
/// `q = H_effᴴ v`. For fixed `(cfg, v)` the rate-optimal beam under an SI
/// budget lies on this arc.
pub fn arc_beamformer(
    ch: &ChannelSet,
    cfg: &StarConfig,
    v: &CMatrix,
    p_fd: f64,
    alpha: f64,
) -> Result<Option<CMatrix>> {
    let (gh, q) = beam_directions(ch, cfg, v)?;
    Ok(arc_point(&gh, &q, alpha, p_fd))
}

fn beam_directions(ch: &ChannelSet, cfg: &StarConfig, v: &CMatrix) -> Result<(Vec<C64>, Vec<C64>)> {
    let q = effective_si_channel(ch, cfg)?.hermitian().matmul(v)?.into_vec();
    let gh = effective_dl_channel(ch, cfg)?
        .as_slice()
        .iter()
        .map(|z| z.conj())
        .collect();
    Ok((gh, q))
}

fn arc_point(gh: &[C64], q: &[C64], alpha: f64, p_fd: f64) -> Option<CMatrix> {
    let qn = norm_sq(q);
    let coef = if qn > 0.0 { dot_h(q, gh) / qn * alpha } else { ZERO };
    let u: Vec<C64> = gh.iter().zip(q).map(|(&x, &qi)| x - qi * coef).collect();
    if norm_sq(&u).sqrt() <= 1e-12 * norm_sq(gh).sqrt() {
        return None;
    }
    normalize_to_power(&u, p_fd)
}

/// Beam step of the alternating loop. With two or more antennas the ZF beam
/// must exist; the step then picks the point of the MRT–ZF arc (grid of
/// `grid` values of `alpha`, ZF included) with the lowest `J`. A single
/// antenna has only the full-power beam phased toward the downlink.
fn loop_beamformer(
    ch: &ChannelSet,
    cfg: &StarConfig,
    v: &CMatrix,
    p_fd: f64,
    scal: &Scalarizer,
    grid: usize,
) -> Result<CMatrix> {
    if ch.n_tx() < 2 {
        return Ok(mrt_beamformer(ch, cfg, p_fd)?.unwrap_or_else(|| dft_beam(1, 0, p_fd)));
    }
    let zf = zf_beamformer(ch, cfg, v, p_fd)?;
    let (gh, q) = beam_directions(ch, cfg, v)?;
    let j_of = |w: &CMatrix| {
        let si = dot_h(&q, w.as_slice());
        let dl: C64 = gh.iter().zip(w.as_slice()).map(|(g, x)| g.conj() * x).sum();
        scal.from_sums(si, dl)
    };
    let mut best_j = j_of(&zf);
    let mut best = zf;
    let n = grid.max(2);
    for k in 0..n - 1 {
        let alpha = k as f64 / (n - 1) as f64;
        if let Some(w) = arc_point(&gh, &q, alpha, p_fd) {
            let j = j_of(&w);
            if j < best_j {
                best_j = j;
                best = w;
            }
        }
    }
    Ok(best)
}

/// Checks the enumeration preconditions and returns the number of points.
pub fn oracle_size(spec: &ScenarioSpec, ch: &ChannelSet) -> Result<usize> {
    enumeration_size(spec.mode, spec.phase_levels, ch.n_elems(), ch.n_tx())
}

/// [`oracle_size`] from the scenario dimensions alone.
pub fn oracle_size_for(spec: &ScenarioSpec) -> Result<usize> {
    enumeration_size(spec.mode, spec.phase_levels, spec.n_elems, spec.n_tx)
}

fn enumeration_size(mode: StarMode, l: usize, m: usize, n_tx: usize) -> Result<usize> {
    let mut why = Vec::new();
    if mode != StarMode::Ms {
        why.push("mode must be MS".to_string());
    }
    if l != 2 && l != 4 {
        why.push(format!("phase_levels must be 2 or 4 (got {l})"));
    }
    if m > 4 {
        why.push(format!("M must be at most 4 (got {m})"));
    }
    if n_tx > 2 {
        why.push(format!("n_tx must be at most 2 (got {n_tx})"));
    }
    if !why.is_empty() {
        let pts = (2 * l * l).max(1) as f64;
        return Err(Error::InstanceTooLarge(format!(
            "{}; space would hold {:.3e} points",
            why.join(", "),
            pts.powi(m as i32) * 4.0
        )));
    }
    Ok((2 * l * l).pow(m as u32) * 4)
}

/// Decodes enumeration index `idx` into an MS grid config; element 0 is the
/// most significant digit, so increasing `idx` walks configs in
/// lexicographic order of [`StarConfig::grid_encoding`].
fn ms_grid_config(idx: usize, m: usize, levels: usize) -> StarConfig {
    let per = 2 * levels * levels;
    let step = TAU / levels as f64;
    let mut psi = vec![0.0; m];
    let mut tr = vec![0.0; m];
    let mut tt = vec![0.0; m];
    let mut rest = idx;
    for e in (0..m).rev() {
        let digit = rest % per;
        rest /= per;
        let bit = digit / (levels * levels);
        let r = (digit / levels) % levels;
        let t = digit % levels;
        psi[e] = if bit == 1 { FRAC_PI_2 } else { 0.0 };
        tr[e] = r as f64 * step;
        tt[e] = t as f64 * step;
    }
    project(&psi, &tr, &tt, StarMode::Ms, levels).expect("equal lengths")
}

/// `a` beats `b` when its score is higher, or equal with a smaller key.
fn beats(a: (f64, &[(u8, usize, usize)], usize), b: (f64, &[(u8, usize, usize)], usize)) -> bool {
    match a.0.partial_cmp(&b.0) {
        Some(Ordering::Greater) => true,
        Some(Ordering::Equal) => (a.1, a.2) < (b.1, b.2),
        _ => false,
    }
}

/// Exhaustive search over every MS grid config and every codebook beam.
pub fn enumerate_oracle(spec: &ScenarioSpec, ch: &ChannelSet, objective: Objective) -> Result<OptResult> {
    enumerate_oracle_ordered(spec, ch, objective, false)
}

#[doc(hidden)]
pub fn enumerate_oracle_ordered(
    spec: &ScenarioSpec,
    ch: &ChannelSet,
    objective: Objective,
    reverse: bool,
) -> Result<OptResult> {
    let start = Instant::now();
    let total = oracle_size(spec, ch)?;
    let m = ch.n_elems();
    let l = spec.phase_levels;
    let v = mrc_combiner(ch)?;
    let n_cfg = total / 4;
    let mut best: Option<(f64, Vec<(u8, usize, usize)>, usize, StarConfig, LinkConfig)> = None;
    let mut visited = 0usize;
    for n in 0..n_cfg {
        let idx = if reverse { n_cfg - 1 - n } else { n };
        let cfg = ms_grid_config(idx, m, l);
        let key = cfg.grid_encoding();
        let book = beam_codebook(ch, &cfg, &v, spec.p_fd)?;
        for (b, w) in book.into_iter().enumerate() {
            visited += 1;
            let link = LinkConfig { w, v: v.clone() };
            let metrics = evaluate(spec, ch, &cfg, &link)?;
            let s = objective.score(&metrics);
            let better = match &best {
                None => true,
                Some((bs, bk, bb, _, _)) => beats((s, &key, b), (*bs, bk, *bb)),
            };
            if better {
                best = Some((s, key.clone(), b, cfg.clone(), link));
            }
        }
    }
    let (_, _, _, cfg, link) = best.expect("non-empty search space");
    let mut res = OptResult::new(spec, ch, objective, cfg, link)?;
    res.iters = visited;
    res.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    res.history = vec![res.score(&objective)];
    Ok(res)
}

/// Uniform random configurations (projected to the scenario's mode and
/// phase grid) paired with their MRT beam. The sample stream depends only
/// on the seed, so a larger budget extends a smaller one.
pub fn random_search(
    spec: &ScenarioSpec,
    ch: &ChannelSet,
    objective: Objective,
    budget: usize,
    rng: &mut Rng,
) -> Result<OptResult> {
    if budget == 0 {
        return Err(Error::Config("random search budget must be at least 1".into()));
    }
    let start = Instant::now();
    let m = ch.n_elems();
    let v = mrc_combiner(ch)?;
    let mut best: Option<(f64, StarConfig, LinkConfig)> = None;
    let mut history = Vec::with_capacity(budget);
    for _ in 0..budget {
        let cfg = random_config(rng, m, spec.mode, spec.phase_levels);
        let w = mrt_beamformer(ch, &cfg, spec.p_fd)?.unwrap_or_else(|| dft_beam(ch.n_tx(), 0, spec.p_fd));
        let link = LinkConfig { w, v: v.clone() };
        let s = objective.score(&evaluate(spec, ch, &cfg, &link)?);
        if best.as_ref().is_none_or(|b| s > b.0) {
            best = Some((s, cfg, link));
        }
        history.push(best.as_ref().map(|b| b.0).unwrap());
    }
    let (_, cfg, link) = best.expect("budget >= 1");
    let mut res = OptResult::new(spec, ch, objective, cfg, link)?;
    res.iters = budget;
    res.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    res.history = history;
    Ok(res)
}

/// Uniformly drawn raw state, projected.
pub fn random_config(rng: &mut Rng, m: usize, mode: StarMode, levels: usize) -> StarConfig {
    let psi: Vec<f64> = (0..m).map(|_| rng.uniform_range(0.0, FRAC_PI_2)).collect();
    let tr: Vec<f64> = (0..m).map(|_| rng.uniform_range(0.0, TAU)).collect();
    let tt: Vec<f64> = (0..m).map(|_| rng.uniform_range(0.0, TAU)).collect();
    project(&psi, &tr, &tt, mode, levels).expect("equal lengths")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AltOptions {
    pub max_outer: usize,
    /// Relative improvement of `J` below which the loop stops.
    pub tol: f64,
    /// Coordinate-descent sweeps per phase update.
    pub sweeps: usize,
    /// Split-angle grid size for the ES amplitude step.
    pub grid: usize,
    /// Number of starting points tried (balanced split, all transmit,
    /// all reflect); the best result is returned.
    pub starts: usize,
}

impl Default for AltOptions {
    fn default() -> Self {
        Self {
            max_outer: 50,
            tol: 1e-6,
            sweeps: 2,
            grid: 64,
            starts: 3,
        }
    }
}

/// Starting configuration `k`: 0 balanced, 1 all transmit, 2 all reflect.
/// Balanced means `psi = π/4` under ES and alternating roles under MS.
pub fn initial_config(m: usize, mode: StarMode, levels: usize, k: usize) -> StarConfig {
    match (k % 3, mode) {
        (0, StarMode::Es) => StarConfig::uniform(m, mode, levels, FRAC_PI_4),
        (0, StarMode::Ms) => {
            let psi: Vec<f64> = (0..m).map(|i| if i % 2 == 0 { FRAC_PI_2 } else { 0.0 }).collect();
            project(&psi, &vec![0.0; m], &vec![0.0; m], mode, levels).expect("equal lengths")
        }
        (1, _) => StarConfig::uniform(m, mode, levels, FRAC_PI_2),
        _ => StarConfig::uniform(m, mode, levels, 0.0),
    }
}

/// Alternates beamformer, phase and amplitude/role updates; returns the
/// best-seen point by [`Objective::score`].
pub fn alternating_optimize(
    spec: &ScenarioSpec,
    ch: &ChannelSet,
    objective: Objective,
    opts: &AltOptions,
) -> Result<OptResult> {
    objective.validate()?;
    let start = Instant::now();
    let mut best: Option<OptResult> = None;
    let mut iters = 0;
    for k in 0..opts.starts.max(1) {
        let init = initial_config(ch.n_elems(), spec.mode, spec.phase_levels, k);
        let res = alternating_from(spec, ch, objective, opts, init)?;
        iters += res.iters;
        let better = match &best {
            None => true,
            Some(b) => res.score(&objective) > b.score(&objective),
        };
        if better {
            best = Some(res);
        }
    }
    let mut res = best.expect("at least one start");
    res.iters = iters;
    res.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(res)
}

/// One alternating run from a given starting configuration.
pub fn alternating_from(
    spec: &ScenarioSpec,
    ch: &ChannelSet,
    objective: Objective,
    opts: &AltOptions,
    init: StarConfig,
) -> Result<OptResult> {
    let start = Instant::now();
    let v = mrc_combiner(ch)?;
    let mut cfg = init;
    let mut best: Option<OptResult> = None;
    let mut history = Vec::new();
    let mut prev_j = f64::INFINITY;
    let mut note = None;
    let mut iters = 0;

    for k in 0..opts.max_outer.max(1) {
        let lambda = LAMBDA_SCHEDULE[k.min(LAMBDA_SCHEDULE.len() - 1)];
        let scal = Scalarizer::new(spec, objective, lambda);
        let w = match loop_beamformer(ch, &cfg, &v, spec.p_fd, &scal, opts.grid) {
            Ok(w) => w,
            Err(e) => {
                note = Some(e.to_string());
                break;
            }
        };
        let link = LinkConfig { w, v: v.clone() };
        cfg = phase_cd_reflect(ch, &cfg, &link, opts.sweeps)?;
        cfg = phase_cd_transmit(ch, &cfg, &link, opts.sweeps)?;
        cfg = match spec.mode {
            StarMode::Es => es_amplitude_step(ch, &cfg, &link, &scal, opts.grid)?,
            StarMode::Ms => ms_flip_pass(ch, &cfg, &link, &scal)?,
        };
        iters = k + 1;

        let metrics = evaluate(spec, ch, &cfg, &link)?;
        let score = objective.score(&metrics);
        if best.as_ref().is_none_or(|b| score > b.score(&objective)) {
            best = Some(OptResult {
                feasible: objective.is_feasible(&metrics),
                cfg: cfg.clone(),
                link,
                metrics,
                iters: 0,
                wall_ms: 0.0,
                history: Vec::new(),
                note: None,
            });
        }
        history.push(best.as_ref().unwrap().score(&objective));

        let j = scal.of_metrics(&metrics);
        let settled = k + 1 >= LAMBDA_SCHEDULE.len();
        if settled && prev_j - j < opts.tol * j.abs().max(1.0) {
            break;
        }
        prev_j = j;
    }

    let mut res = match best {
        Some(b) => b,
        None => {
            // The beamformer failed before any full iteration; report the
            // starting point with a fallback beam as infeasible.
            let w = mrt_beamformer(ch, &cfg, spec.p_fd)?.unwrap_or_else(|| dft_beam(ch.n_tx(), 0, spec.p_fd));
            OptResult::new(spec, ch, objective, cfg, LinkConfig { w, v })?
        }
    };
    if note.is_some() {
        res.feasible = false;
        res.note = note;
    }
    res.iters = iters;
    res.history = history;
    res.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::gen_channels;
    use crate::numerics::ONE;
    use crate::starris::reflect_matrix;

    fn spec(n_tx: usize, m: usize, mode: StarMode, levels: usize) -> ScenarioSpec {
        ScenarioSpec {
            n_tx,
            n_rx: 2,
            n_elems: m,
            mode,
            phase_levels: levels,
            ..Default::default()
        }
    }

    fn link_for(spec: &ScenarioSpec, ch: &ChannelSet, cfg: &StarConfig) -> LinkConfig {
        let v = mrc_combiner(ch).unwrap();
        let w = mrt_beamformer(ch, cfg, spec.p_fd).unwrap().unwrap();
        LinkConfig { w, v }
    }

    #[test]
    fn objective_parse_and_display() {
        let o: Objective = "maxrate:3".parse().unwrap();
        assert_eq!(o, Objective::MaxRateSubjectToSi { epsilon_db: 3.0 });
        assert_eq!(o.to_string().parse::<Objective>().unwrap(), o);
        assert!("minsi:-1".parse::<Objective>().is_err());
        assert!("fast:1".parse::<Objective>().is_err());
    }

    #[test]
    fn score_ranks_feasible_first() {
        let obj = Objective::MaxRateSubjectToSi { epsilon_db: 3.0 };
        let mk = |rate, db| Metrics {
            rate_dl: rate,
            rate_ul: 0.0,
            resid_si: 0.0,
            resid_si_db: db,
            sic_gain_db: 0.0,
            baseline_si: 0.0,
        };
        assert!(obj.score(&mk(0.0, 2.0)) > obj.score(&mk(10.0, 3.5)));
        assert!(obj.score(&mk(1.0, 2.0)) > obj.score(&mk(0.5, -20.0)));
        assert!(obj.score(&mk(1.0, 4.0)) > obj.score(&mk(1.0, 9.0)));
    }

    #[test]
    fn single_element_reflect_phase_is_antiphase() {
        let s = spec(1, 1, StarMode::Ms, 0);
        let ch = gen_channels(&s, &mut Rng::new(3)).unwrap();
        let cfg = StarConfig::uniform(1, StarMode::Ms, 0, 0.0);
        let link = link_for(&s, &ch, &StarConfig::uniform(1, StarMode::Ms, 0, FRAC_PI_2));
        let out = phase_cd_reflect(&ch, &cfg, &link, 1).unwrap();
        let terms = LinkTerms::new(&ch, &link, 0.0).unwrap();
        let (c, a) = (terms.si0, terms.refl[0]);
        let resid = terms.si_sum(&out).norm_sqr();
        let closed = (c.norm() - a.norm()).powi(2);
        assert!((resid - closed).abs() <= 1e-9 * closed.max(1e-300));
        // Dense sweep never beats it.
        let mut sweep_min = f64::INFINITY;
        for k in 0..3600 {
            let th = k as f64 * TAU / 3600.0;
            sweep_min = sweep_min.min((c + a * C64::from_polar(1.0, th)).norm_sqr());
        }
        assert!(resid <= sweep_min * (1.0 + 1e-9));
    }

    #[test]
    fn reflect_cd_fixed_point_and_monotone() {
        for levels in [0, 4] {
            let s = spec(2, 12, StarMode::Es, levels);
            let ch = gen_channels(&s, &mut Rng::new(5)).unwrap();
            let cfg = random_config(&mut Rng::new(6), 12, StarMode::Es, levels);
            let link = link_for(&s, &ch, &cfg);
            let (out, trace) = phase_cd_reflect_traced(&ch, &cfg, &link, 5).unwrap();
            assert!(trace.windows(2).all(|w| w[1] <= w[0]));
            let (again, _) = phase_cd_reflect_traced(&ch, &out, &link, 1).unwrap();
            let before = LinkTerms::new(&ch, &link, 0.0).unwrap().si_sum(&out).norm_sqr();
            let after = LinkTerms::new(&ch, &link, 0.0).unwrap().si_sum(&again).norm_sqr();
            assert!(after <= before);
            if levels == 0 {
                for i in 0..12 {
                    let d = (wrap_angle(again.theta_r[i] - out.theta_r[i] + PI) - PI).abs();
                    assert!(d < 1e-6 || (before < 1e-30), "element {i} moved by {d}");
                }
            }
        }
    }

    #[test]
    fn transmit_cd_cases() {
        // Real positive terms are already co-phased.
        let mut ch = gen_channels(&spec(1, 3, StarMode::Ms, 0), &mut Rng::new(1)).unwrap();
        ch.g1 = CMatrix::column(&[ONE, ONE, ONE]);
        ch.g2t = CMatrix::row(&[C64::new(1.0, 0.0), C64::new(2.0, 0.0), C64::new(0.5, 0.0)]);
        let cfg = StarConfig::uniform(3, StarMode::Ms, 0, FRAC_PI_2);
        let link = LinkConfig {
            w: CMatrix::column(&[ONE]),
            v: mrc_combiner(&ch).unwrap(),
        };
        let out = phase_cd_transmit(&ch, &cfg, &link, 2).unwrap();
        for i in 0..3 {
            assert!(out.theta_t[i].min(TAU - out.theta_t[i]) < 1e-12);
        }

        // Two symmetric terms end with equal phases.
        ch.g1 = CMatrix::column(&[ONE, ONE]);
        ch.g2t = CMatrix::row(&[C64::new(0.0, 1.0), C64::new(0.0, 1.0)]);
        ch.g2r = CMatrix::zeros(2, 2);
        let cfg = project(&[FRAC_PI_2; 2], &[0.0; 2], &[0.3, 2.0], StarMode::Ms, 0).unwrap();
        let out = phase_cd_transmit(&ch, &cfg, &link, 3).unwrap();
        assert!((out.theta_t[0] - out.theta_t[1]).abs() < 1e-12);

        let s = spec(2, 10, StarMode::Es, 8);
        let ch = gen_channels(&s, &mut Rng::new(2)).unwrap();
        let cfg = random_config(&mut Rng::new(3), 10, StarMode::Es, 8);
        let link = link_for(&s, &ch, &cfg);
        let (_, trace) = phase_cd_transmit_traced(&ch, &cfg, &link, 4).unwrap();
        assert!(trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn es_step_cases() {
        let s = spec(1, 6, StarMode::Es, 0);
        let ch = gen_channels(&s, &mut Rng::new(4)).unwrap();
        let cfg = random_config(&mut Rng::new(4), 6, StarMode::Es, 0);
        let link = link_for(&s, &ch, &cfg);
        let scal = Scalarizer::new(&s, Objective::MinSiSubjectToRate { r_min: 1.0 }, 10.0);

        let (_, trace) = es_amplitude_step_traced(&ch, &cfg, &link, &scal, 32).unwrap();
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));

        let ends = es_amplitude_step(&ch, &cfg, &link, &scal, 2).unwrap();
        for (i, &p) in ends.psi.iter().enumerate() {
            assert!(p == 0.0 || p == FRAC_PI_2 || p == cfg.psi[i]);
        }

        let ms = StarConfig::uniform(6, StarMode::Ms, 0, 0.0);
        assert!(matches!(
            es_amplitude_step(&ch, &ms, &link, &scal, 8),
            Err(Error::ModeMismatch(_))
        ));
    }

    #[test]
    fn es_step_sends_useless_reflector_to_transmit() {
        let s = spec(1, 2, StarMode::Es, 0);
        let mut ch = gen_channels(&s, &mut Rng::new(8)).unwrap();
        // Element 0 cannot reach the FD receiver.
        for r in 0..2 {
            ch.g2r[(r, 0)] = ZERO;
        }
        let link = link_for(&s, &ch, &StarConfig::uniform(2, StarMode::Es, 0, FRAC_PI_2));
        let cfg = phase_cd_transmit(&ch, &StarConfig::uniform(2, StarMode::Es, 0, FRAC_PI_4), &link, 2).unwrap();
        let scal = Scalarizer::new(&s, Objective::MinSiSubjectToRate { r_min: 30.0 }, 100.0);
        let out = es_amplitude_step(&ch, &cfg, &link, &scal, 65).unwrap();
        assert_eq!(out.psi[0], FRAC_PI_2);
    }

    #[test]
    fn es_grid_refinement() {
        // With the SI constraint slack, J is a smooth function of each split
        // angle and grid resolution barely matters.
        for seed in 0..5 {
            let s = spec(1, 8, StarMode::Es, 0);
            let ch = gen_channels(&s, &mut Rng::new(seed)).unwrap();
            let cfg = random_config(&mut Rng::new(seed + 50), 8, StarMode::Es, 0);
            let link = link_for(&s, &ch, &cfg);
            let scal = Scalarizer::new(&s, Objective::MaxRateSubjectToSi { epsilon_db: 200.0 }, 1.0);
            let terms = LinkTerms::new(&ch, &link, 0.0).unwrap();
            let coarse = scal.of(&terms, &es_amplitude_step(&ch, &cfg, &link, &scal, 64).unwrap());
            let fine = scal.of(&terms, &es_amplitude_step(&ch, &cfg, &link, &scal, 1024).unwrap());
            assert!((coarse - fine).abs() <= 1e-3 * fine.abs(), "{coarse} vs {fine}");
        }
    }

    #[test]
    fn flip_pass_cases() {
        let s = spec(1, 4, StarMode::Ms, 4);
        let ch = gen_channels(&s, &mut Rng::new(10)).unwrap();
        let all_r = StarConfig::uniform(4, StarMode::Ms, 4, 0.0);
        let link = link_for(&s, &ch, &StarConfig::uniform(4, StarMode::Ms, 4, FRAC_PI_2));
        let scal = Scalarizer::new(&s, Objective::MinSiSubjectToRate { r_min: 2.0 }, 1000.0);
        let (out, flips, trace) = ms_flip_pass_traced(&ch, &all_r, &link, &scal).unwrap();
        assert!(flips >= 1);
        assert!(out.psi.contains(&FRAC_PI_2));
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));

        // Iterate to a local optimum, then nothing flips.
        let mut cfg = out;
        for _ in 0..20 {
            cfg = ms_flip_pass(&ch, &cfg, &link, &scal).unwrap();
        }
        let (_, flips, _) = ms_flip_pass_traced(&ch, &cfg, &link, &scal).unwrap();
        assert_eq!(flips, 0);

        let es = StarConfig::uniform(4, StarMode::Es, 4, 0.5);
        assert!(ms_flip_pass(&ch, &es, &link, &scal).is_err());
    }

    #[test]
    fn flip_local_optimum_is_a_role_basin() {
        // M = 2: the flip-pass fixed point must be a local optimum among the
        // four role assignments (no single flip with re-optimized phase
        // improves J), checked by enumerating the assignments directly.
        for seed in 0..10 {
            let s = spec(1, 2, StarMode::Ms, 0);
            let ch = gen_channels(&s, &mut Rng::new(seed)).unwrap();
            let link = link_for(&s, &ch, &StarConfig::uniform(2, StarMode::Ms, 0, FRAC_PI_2));
            let scal = Scalarizer::new(&s, Objective::MinSiSubjectToRate { r_min: 1.0 }, 100.0);
            let mut cfg = StarConfig::uniform(2, StarMode::Ms, 0, FRAC_PI_2);
            for _ in 0..5 {
                cfg = ms_flip_pass(&ch, &cfg, &link, &scal).unwrap();
            }
            let terms = LinkTerms::new(&ch, &link, 0.0).unwrap();
            let here = scal.of(&terms, &cfg);
            for i in 0..2 {
                let mut alt = cfg.clone();
                let psi = if cfg.is_reflecting(i) { FRAC_PI_2 } else { 0.0 };
                alt.set_psi(i, psi);
                // best phase for the flipped element by dense sweep
                let mut best = f64::INFINITY;
                for k in 0..720 {
                    let th = k as f64 * TAU / 720.0;
                    alt.theta_r[i] = th;
                    alt.theta_t[i] = th;
                    best = best.min(scal.of(&terms, &alt));
                }
                assert!(
                    best >= here - 1e-6 * here.abs().max(1.0),
                    "seed {seed}: {best} < {here}"
                );
            }
        }
    }

    #[test]
    fn zf_beamformer_cases() {
        let s = spec(3, 6, StarMode::Es, 0);
        for seed in 0..10 {
            let ch = gen_channels(&s, &mut Rng::new(seed)).unwrap();
            let cfg = random_config(&mut Rng::new(seed), 6, StarMode::Es, 0);
            let v = mrc_combiner(&ch).unwrap();
            let w = zf_beamformer(&ch, &cfg, &v, s.p_fd).unwrap();
            let q = effective_si_channel(&ch, &cfg).unwrap().hermitian().matmul(&v).unwrap();
            let leak = dot_h(q.as_slice(), w.as_slice()).norm();
            assert!(leak <= 1e-10 * norm_sq(q.as_slice()).sqrt() * norm_sq(w.as_slice()).sqrt());
            assert!((norm_sq(w.as_slice()) / s.p_fd - 1.0).abs() < 1e-9);
        }

        // q = 0 gives MRT.
        let mut ch = gen_channels(&s, &mut Rng::new(1)).unwrap();
        ch.h_d = CMatrix::zeros(2, 3);
        ch.g2r = CMatrix::zeros(2, 6);
        let cfg = StarConfig::uniform(6, StarMode::Es, 0, 0.7);
        let v = mrc_combiner(&ch).unwrap();
        let zf = zf_beamformer(&ch, &cfg, &v, 1.0).unwrap();
        let mrt = mrt_beamformer(&ch, &cfg, 1.0).unwrap().unwrap();
        assert!(zf.add(&mrt.scale(-ONE)).unwrap().fro_norm_sq() < 1e-24);

        assert!(matches!(
            zf_beamformer(
                &gen_channels(&spec(1, 2, StarMode::Es, 0), &mut Rng::new(1)).unwrap(),
                &StarConfig::uniform(2, StarMode::Es, 0, 0.5),
                &v.clone(),
                1.0
            ),
            Err(Error::NoZfDof)
        ));
    }

    #[test]
    fn arc_endpoints_are_mrt_and_zf() {
        let s = spec(2, 4, StarMode::Es, 0);
        let ch = gen_channels(&s, &mut Rng::new(31)).unwrap();
        let cfg = random_config(&mut Rng::new(32), 4, StarMode::Es, 0);
        let v = mrc_combiner(&ch).unwrap();
        let diff = |a: &CMatrix, b: &CMatrix| a.add(&b.scale(-ONE)).unwrap().fro_norm_sq();
        let a0 = arc_beamformer(&ch, &cfg, &v, 1.0, 0.0).unwrap().unwrap();
        let a1 = arc_beamformer(&ch, &cfg, &v, 1.0, 1.0).unwrap().unwrap();
        assert!(diff(&a0, &mrt_beamformer(&ch, &cfg, 1.0).unwrap().unwrap()) < 1e-24);
        assert!(diff(&a1, &zf_beamformer(&ch, &cfg, &v, 1.0).unwrap()) < 1e-24);

        // Along the arc the SI falls and the downlink gain falls.
        let q = effective_si_channel(&ch, &cfg).unwrap().hermitian().matmul(&v).unwrap();
        let g = effective_dl_channel(&ch, &cfg).unwrap();
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for k in 0..=10 {
            let w = arc_beamformer(&ch, &cfg, &v, 1.0, k as f64 / 10.0).unwrap().unwrap();
            let si = dot_h(q.as_slice(), w.as_slice()).norm_sqr();
            let dl = g.matmul(&w).unwrap()[(0, 0)].norm_sqr();
            assert!(si <= prev.0 * (1.0 + 1e-12) && dl <= prev.1 * (1.0 + 1e-12));
            prev = (si, dl);
        }
    }

    #[test]
    fn zf_orthogonal_downlink_is_mrt() {
        // Build g ⟂ q: with two antennas, put SI entirely on antenna 0 and the
        // downlink entirely on antenna 1.
        let s = spec(2, 1, StarMode::Ms, 0);
        let mut ch = gen_channels(&s, &mut Rng::new(2)).unwrap();
        ch.h_d = CMatrix::from_rows(&[vec![ONE, ZERO], vec![ONE, ZERO]]).unwrap();
        ch.g2r = CMatrix::zeros(2, 1);
        ch.g1 = CMatrix::row(&[ZERO, C64::new(0.0, 2.0)]);
        let cfg = StarConfig::uniform(1, StarMode::Ms, 0, FRAC_PI_2);
        let v = mrc_combiner(&ch).unwrap();
        let zf = zf_beamformer(&ch, &cfg, &v, 1.0).unwrap();
        let mrt = mrt_beamformer(&ch, &cfg, 1.0).unwrap().unwrap();
        assert!(zf.add(&mrt.scale(-ONE)).unwrap().fro_norm_sq() < 1e-24);

        // Downlink parallel to SI direction has no ZF solution.
        ch.g1 = CMatrix::row(&[C64::new(1.0, 0.0), ZERO]);
        assert!(matches!(
            zf_beamformer(&ch, &cfg, &v, 1.0),
            Err(Error::DownlinkInNullSpace)
        ));
    }

    #[test]
    fn oracle_counts_and_refusal() {
        let s = spec(1, 1, StarMode::Ms, 2);
        let ch = gen_channels(&s, &mut Rng::new(1)).unwrap();
        let r = enumerate_oracle(&s, &ch, Objective::MaxRateSubjectToSi { epsilon_db: 30.0 }).unwrap();
        assert_eq!(r.iters, 32);

        let big = spec(1, 5, StarMode::Ms, 2);
        let ch = gen_channels(&big, &mut Rng::new(1)).unwrap();
        let err = enumerate_oracle(&big, &ch, Objective::MaxRateSubjectToSi { epsilon_db: 3.0 }).unwrap_err();
        assert!(matches!(err, Error::InstanceTooLarge(ref msg) if msg.contains("M must be at most 4")));
        let es = spec(1, 2, StarMode::Es, 2);
        let ch = gen_channels(&es, &mut Rng::new(1)).unwrap();
        assert!(enumerate_oracle(&es, &ch, Objective::MaxRateSubjectToSi { epsilon_db: 3.0 }).is_err());
    }

    #[test]
    fn oracle_enumeration_order_is_irrelevant() {
        for seed in 0..5 {
            let s = spec(2, 2, StarMode::Ms, 2);
            let ch = gen_channels(&s, &mut Rng::new(seed)).unwrap();
            for obj in [
                Objective::MaxRateSubjectToSi { epsilon_db: 30.0 },
                Objective::MinSiSubjectToRate { r_min: 1.0 },
            ] {
                let fwd = enumerate_oracle_ordered(&s, &ch, obj, false).unwrap();
                let rev = enumerate_oracle_ordered(&s, &ch, obj, true).unwrap();
                assert_eq!(fwd.cfg, rev.cfg);
                assert_eq!(fwd.link, rev.link);
            }
        }
    }

    #[test]
    fn oracle_finds_constructed_null() {
        let s = spec(1, 2, StarMode::Ms, 4);
        let mut ch = gen_channels(&s, &mut Rng::new(3)).unwrap();
        let target = project(&[0.0, 0.0], &[PI / 2.0, PI], &[0.0, 0.0], StarMode::Ms, 4).unwrap();
        let refl = ch.g2r.matmul(&reflect_matrix(&target)).unwrap().matmul(&ch.g1).unwrap();
        ch.h_d = refl.scale(-ONE);
        let r = enumerate_oracle(&s, &ch, Objective::MinSiSubjectToRate { r_min: 0.0 }).unwrap();
        assert!(r.metrics.resid_si <= s.residual_floor + 1e-12 * r.metrics.baseline_si);
    }

    #[test]
    fn oracle_dominates_random_search() {
        for seed in 0..10 {
            let s = spec(1, 3, StarMode::Ms, 2);
            let ch = gen_channels(&s, &mut Rng::new(seed)).unwrap();
            let obj = Objective::MaxRateSubjectToSi { epsilon_db: 25.0 };
            let oracle = enumerate_oracle(&s, &ch, obj).unwrap();
            let rs = random_search(&s, &ch, obj, 200, &mut Rng::new(seed)).unwrap();
            assert!(oracle.score(&obj) >= rs.score(&obj));
        }
    }

    #[test]
    fn random_search_budget_properties() {
        let s = spec(1, 8, StarMode::Es, 4);
        let ch = gen_channels(&s, &mut Rng::new(4)).unwrap();
        let obj = Objective::MaxRateSubjectToSi { epsilon_db: 40.0 };

        let one = random_search(&s, &ch, obj, 1, &mut Rng::new(9)).unwrap();
        let mut rng = Rng::new(9);
        let cfg = random_config(&mut rng, 8, s.mode, s.phase_levels);
        assert_eq!(one.cfg, cfg);

        let small = random_search(&s, &ch, obj, 10, &mut Rng::new(9)).unwrap();
        let large = random_search(&s, &ch, obj, 10_000, &mut Rng::new(9)).unwrap();
        assert!(large.score(&obj) >= small.score(&obj));
        assert_eq!(large.history[9], small.history[9]);
        assert!(large.history.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn random_search_gap_to_oracle_shrinks() {
        let obj = Objective::MaxRateSubjectToSi { epsilon_db: 25.0 };
        let (mut gap_small, mut gap_large) = (0.0, 0.0);
        for seed in 0..20 {
            let s = spec(1, 3, StarMode::Ms, 2);
            let ch = gen_channels(&s, &mut Rng::new(seed)).unwrap();
            let best = enumerate_oracle(&s, &ch, obj).unwrap().score(&obj);
            gap_small += best - random_search(&s, &ch, obj, 5, &mut Rng::new(seed)).unwrap().score(&obj);
            gap_large += best
                - random_search(&s, &ch, obj, 500, &mut Rng::new(seed))
                    .unwrap()
                    .score(&obj);
        }
        assert!(gap_large < gap_small, "{gap_large} vs {gap_small}");
    }

    #[test]
    fn alternating_constructed_null() {
        let s = ScenarioSpec {
            phase_levels: 0,
            ..spec(1, 8, StarMode::Es, 0)
        };
        let mut rng = Rng::new(12);
        let mut ch = gen_channels(&s, &mut rng).unwrap();
        let target = random_config(&mut rng, 8, StarMode::Es, 0);
        let refl = ch.g2r.matmul(&reflect_matrix(&target)).unwrap().matmul(&ch.g1).unwrap();
        ch.h_d = refl.scale(-ONE);
        let obj = Objective::MinSiSubjectToRate { r_min: 0.0 };
        let r = alternating_optimize(&s, &ch, obj, &AltOptions::default()).unwrap();
        assert!(
            r.metrics.resid_si <= s.residual_floor + 1e-12 * r.metrics.baseline_si.max(1e-300) + 1e-300,
            "{:?}",
            r.metrics
        );
        assert!(r.history.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn alternating_reports_zf_failure_as_infeasible() {
        let s = spec(2, 2, StarMode::Ms, 2);
        let mut ch = gen_channels(&s, &mut Rng::new(1)).unwrap();
        ch.g2t = CMatrix::zeros(1, 2);
        let r = alternating_optimize(
            &s,
            &ch,
            Objective::MaxRateSubjectToSi { epsilon_db: 3.0 },
            &AltOptions::default(),
        )
        .unwrap();
        assert!(!r.feasible);
        assert_eq!(r.note.as_deref(), Some("downlink in SI null space"));
    }
}
