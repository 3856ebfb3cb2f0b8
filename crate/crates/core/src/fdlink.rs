//! One full-duplex link evaluation: residual self-interference at the
//! combiner output, the Alice → FD uplink rate and the FD → Bob downlink rate.

use crate::channel::{ChannelSet, ScenarioSpec};
use crate::error::{Error, Result};
use crate::numerics::{dot, dot_h, fro_norm_sq, norm_sq, CMatrix, C64, ZERO};
use crate::starris::{effective_dl_channel, effective_si_channel, StarConfig};

/// Power clamp used when converting a vanishing residual to dB.
pub const TINY_POWER: f64 = 1e-30;

/// Transmit beamformer `w` (n_tx × 1) and receive combiner `v` (n_rx × 1).
#[derive(Clone, Debug, PartialEq)]
pub struct LinkConfig {
    pub w: CMatrix,
    pub v: CMatrix,
}

impl LinkConfig {
    pub fn violations(&self, p_fd: f64) -> Vec<String> {
        let mut out = Vec::new();
        let pw = fro_norm_sq(&self.w);
        if pw > p_fd * (1.0 + 1e-9) {
            out.push(format!("beamformer power {pw} exceeds budget {p_fd}"));
        }
        if (fro_norm_sq(&self.v) - 1.0).abs() > 1e-9 {
            out.push("combiner is not unit norm".into());
        }
        if !self.w.is_finite() || !self.v.is_finite() {
            out.push("non-finite link weights".into());
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    /// FD → Bob, bps/Hz.
    pub rate_dl: f64,
    /// Alice → FD, bps/Hz.
    pub rate_ul: f64,
    /// Residual SI at the combiner output, watts.
    pub resid_si: f64,
    /// Residual SI relative to the FD noise floor, dB.
    pub resid_si_db: f64,
    /// Suppression relative to the uncancelled direct leak, dB.
    pub sic_gain_db: f64,
    /// Uncancelled leak `|vᴴ h_d w|² + floor`, watts.
    pub baseline_si: f64,
}

/// Combiner-output SI amplitude `vᴴ H_eff w`.
pub fn si_amplitude(ch: &ChannelSet, cfg: &StarConfig, link: &LinkConfig) -> Result<C64> {
    let h = effective_si_channel(ch, cfg)?;
    let hw = h.matmul(&link.w)?;
    Ok(dot_h(link.v.as_slice(), hw.as_slice()))
}

pub fn residual_si_power(ch: &ChannelSet, cfg: &StarConfig, link: &LinkConfig, floor: f64) -> Result<f64> {
    Ok(si_amplitude(ch, cfg, link)?.norm_sqr() + floor)
}

pub fn downlink_power(ch: &ChannelSet, cfg: &StarConfig, link: &LinkConfig) -> Result<f64> {
    let g = effective_dl_channel(ch, cfg)?;
    Ok(g.matmul(&link.w)?[(0, 0)].norm_sqr())
}

pub fn rate_from_snr(snr: f64) -> f64 {
    (1.0 + snr.max(0.0)).log2()
}

pub fn downlink_rate(ch: &ChannelSet, cfg: &StarConfig, link: &LinkConfig, noise_bob: f64) -> Result<f64> {
    Ok(rate_from_snr(downlink_power(ch, cfg, link)? / noise_bob))
}

/// Desired uplink power `p_alice |vᴴ h_a|²`.
pub fn uplink_signal(ch: &ChannelSet, link: &LinkConfig, p_alice: f64) -> f64 {
    p_alice * dot_h(link.v.as_slice(), ch.h_a.as_slice()).norm_sqr()
}

pub fn uplink_rate_given_residual(signal: f64, residual: f64, noise_fd: f64) -> f64 {
    rate_from_snr(signal / (residual + noise_fd))
}

pub fn uplink_rate(ch: &ChannelSet, cfg: &StarConfig, link: &LinkConfig, spec: &ScenarioSpec) -> Result<f64> {
    let resid = residual_si_power(ch, cfg, link, spec.residual_floor)?;
    Ok(uplink_rate_given_residual(
        uplink_signal(ch, link, spec.p_alice),
        resid,
        spec.noise_fd,
    ))
}

/// Maximum-ratio combiner matched to Alice's channel.
pub fn mrc_combiner(ch: &ChannelSet) -> Result<CMatrix> {
    let n = norm_sq(ch.h_a.as_slice()).sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::DegenerateUplink);
    }
    Ok(ch.h_a.scale(C64::new(1.0 / n, 0.0)))
}

pub fn to_db(power: f64, reference: f64) -> f64 {
    10.0 * (power.max(TINY_POWER) / reference).log10()
}

pub fn sic_gain_db(baseline: f64, resid: f64) -> f64 {
    10.0 * (baseline / resid.max(TINY_POWER)).log10()
}

pub fn evaluate(spec: &ScenarioSpec, ch: &ChannelSet, cfg: &StarConfig, link: &LinkConfig) -> Result<Metrics> {
    let resid = residual_si_power(ch, cfg, link, spec.residual_floor)?;
    let hdw = ch.h_d.matmul(&link.w)?;
    let baseline = dot_h(link.v.as_slice(), hdw.as_slice()).norm_sqr() + spec.residual_floor;
    let rate_dl = downlink_rate(ch, cfg, link, spec.noise_bob)?;
    let rate_ul = uplink_rate_given_residual(uplink_signal(ch, link, spec.p_alice), resid, spec.noise_fd);
    Ok(Metrics {
        rate_dl,
        rate_ul,
        resid_si: resid,
        resid_si_db: to_db(resid, spec.noise_fd),
        sic_gain_db: sic_gain_db(baseline, resid),
        baseline_si: baseline,
    })
}

/// Per-element scalar terms of the link for a fixed `(v, w)`.
///
/// With `v` and `w` fixed, the combiner-output SI is
/// `si0 + Σ_i refl[i] · Γ_r,i` and the downlink amplitude is
/// `dl0 + Σ_i trans[i] · Γ_t,i`, where `Γ` are the element coefficients.
#[derive(Clone, Debug)]
pub struct LinkTerms {
    pub si0: C64,
    pub refl: Vec<C64>,
    pub dl0: C64,
    pub trans: Vec<C64>,
    pub ul_signal: f64,
}

impl LinkTerms {
    pub fn new(ch: &ChannelSet, link: &LinkConfig, p_alice: f64) -> Result<Self> {
        let w = link.w.as_slice();
        let v = link.v.as_slice();
        if w.len() != ch.n_tx() || v.len() != ch.n_rx() {
            return Err(Error::Dimension("link weights do not match channels".into()));
        }
        let hdw = ch.h_d.matmul(&link.w)?;
        let si0 = dot_h(v, hdw.as_slice());
        let dl0 = dot(ch.h_fb.as_slice(), w);
        let m = ch.n_elems();
        let mut refl = Vec::with_capacity(m);
        let mut trans = Vec::with_capacity(m);
        let g2r_cols: Vec<C64> = (0..m)
            .map(|i| (0..ch.n_rx()).fold(ZERO, |acc, r| acc + v[r].conj() * ch.g2r[(r, i)]))
            .collect();
        for (i, vg) in g2r_cols.into_iter().enumerate() {
            let g1w = dot(ch.g1.row_slice(i), w);
            refl.push(vg * g1w);
            trans.push(ch.g2t[(0, i)] * g1w);
        }
        Ok(Self {
            si0,
            refl,
            dl0,
            trans,
            ul_signal: uplink_signal(ch, link, p_alice),
        })
    }

    pub fn si_sum(&self, cfg: &StarConfig) -> C64 {
        self.si0 + (0..cfg.len()).map(|i| self.refl[i] * cfg.refl_coef(i)).sum::<C64>()
    }

    pub fn dl_sum(&self, cfg: &StarConfig) -> C64 {
        self.dl0 + (0..cfg.len()).map(|i| self.trans[i] * cfg.trans_coef(i)).sum::<C64>()
    }
}
