//! Scenario geometry, link budget and channel generation.
//!
//! Links touching the surface (FD tx → surface, surface → FD rx, surface →
//! Bob) are Rician with a fixed half-wavelength ULA line-of-sight component.
//! The direct links (SI leak, Alice → FD rx, FD tx → Bob) are Rayleigh.
//! Large-scale loss follows the log-distance model `PL0 · d^-alpha`; the SI
//! leak uses a fixed isolation gain instead of a distance.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numerics::{cgauss_sample, db_to_lin, dbm_to_watts, CMatrix, Rng, C64};
use crate::starris::StarMode;

/// Everything needed to draw one scenario realization.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_elems: usize,
    /// Surface to FD antenna distance in meters.
    pub d_sr: f64,
    /// FD device to Bob distance in meters.
    pub d_fb: f64,
    /// Alice to FD device distance in meters.
    pub d_af: f64,
    pub p_fd: f64,
    pub p_alice: f64,
    pub noise_fd: f64,
    pub noise_bob: f64,
    pub rician_k: f64,
    pub pl0_db: f64,
    pub alpha_ris: f64,
    pub alpha_nlos: f64,
    /// Power gain of the direct tx → rx leak (antenna isolation), in dB.
    pub si_leak_db: f64,
    pub phase_levels: usize,
    pub mode: StarMode,
    pub direct_fb_blocked: bool,
    /// Residual power left by classical cancellation stages, in watts.
    pub residual_floor: f64,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            n_tx: 1,
            n_rx: 2,
            n_elems: 32,
            d_sr: 0.1,
            d_fb: 5.0,
            d_af: 1.4,
            p_fd: 1.0,
            p_alice: 0.1,
            noise_fd: dbm_to_watts(-90.0),
            noise_bob: dbm_to_watts(-90.0),
            rician_k: db_to_lin(3.0),
            pl0_db: 68.0,
            alpha_ris: 2.2,
            alpha_nlos: 3.5,
            si_leak_db: -70.0,
            phase_levels: 4,
            mode: StarMode::Es,
            direct_fb_blocked: true,
            residual_floor: 0.0,
            seed: 0,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        validate_geometry(self).map_err(|errs| Error::Config(errs.join("; ")))
    }

    /// Mean linear gain of each link, in `ChannelSet` field order.
    pub fn link_gains(&self) -> LinkGains {
        let ris = |d| pathloss_lin(d, self.pl0_db, self.alpha_ris).unwrap_or(0.0);
        let nlos = |d| pathloss_lin(d, self.pl0_db, self.alpha_nlos).unwrap_or(0.0);
        LinkGains {
            h_d: db_to_lin(self.si_leak_db),
            g1: ris(self.d_sr),
            g2r: ris(self.d_sr),
            g2t: ris(self.d_fb - self.d_sr),
            h_a: nlos(self.d_af),
            h_fb: nlos(self.d_fb),
        }
    }

    /// Mean post-MRC uplink SNR without any self-interference.
    pub fn mean_uplink_snr(&self) -> f64 {
        self.p_alice * self.n_rx as f64 * self.link_gains().h_a / self.noise_fd
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkGains {
    pub h_d: f64,
    pub g1: f64,
    pub g2r: f64,
    pub g2t: f64,
    pub h_a: f64,
    pub h_fb: f64,
}

/// All channel matrices of one realization.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    /// Direct SI leak, n_rx × n_tx.
    pub h_d: CMatrix,
    /// FD tx → surface, M × n_tx.
    pub g1: CMatrix,
    /// Surface (reflection side) → FD rx, n_rx × M.
    pub g2r: CMatrix,
    /// Surface (transmission side) → Bob, 1 × M.
    pub g2t: CMatrix,
    /// Alice → FD rx, n_rx × 1.
    pub h_a: CMatrix,
    /// FD tx → Bob, 1 × n_tx; zero when blocked.
    pub h_fb: CMatrix,
}

impl ChannelSet {
    pub fn n_tx(&self) -> usize {
        self.h_d.cols()
    }

    pub fn n_rx(&self) -> usize {
        self.h_d.rows()
    }

    pub fn n_elems(&self) -> usize {
        self.g1.rows()
    }

    pub fn check_dims(&self) -> Result<()> {
        let (n_rx, n_tx, m) = (self.n_rx(), self.n_tx(), self.n_elems());
        let expect = [
            ("g1", self.g1.shape(), (m, n_tx)),
            ("g2r", self.g2r.shape(), (n_rx, m)),
            ("g2t", self.g2t.shape(), (1, m)),
            ("h_a", self.h_a.shape(), (n_rx, 1)),
            ("h_fb", self.h_fb.shape(), (1, n_tx)),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::Dimension(format!("{name} is {got:?}, expected {want:?}")));
            }
        }
        Ok(())
    }

    /// Scales every link by the same complex factor; handy for building
    /// degenerate test scenarios.
    pub fn map(&self, f: impl Fn(&CMatrix) -> CMatrix) -> ChannelSet {
        ChannelSet {
            h_d: f(&self.h_d),
            g1: f(&self.g1),
            g2r: f(&self.g2r),
            g2t: f(&self.g2t),
            h_a: f(&self.h_a),
            h_fb: f(&self.h_fb),
        }
    }
}

/// Log-distance pathloss as a linear power gain.
pub fn pathloss_lin(d: f64, pl0_db: f64, alpha: f64) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Config(format!("distance must be positive, got {d}")));
    }
    Ok(10f64.powf(-pl0_db / 10.0) * d.powf(-alpha))
}

/// Line-of-sight geometry of a link: arrival and departure angles of a
/// half-wavelength uniform linear array, in radians from broadside.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LosAngles {
    pub arrival: f64,
    pub departure: f64,
}

impl Default for LosAngles {
    fn default() -> Self {
        Self {
            arrival: PI / 6.0,
            departure: PI / 4.0,
        }
    }
}

fn steering(n: usize, angle: f64) -> Vec<C64> {
    let phase = PI * angle.sin();
    (0..n).map(|k| C64::from_polar(1.0, phase * k as f64)).collect()
}

/// Unit-modulus LoS matrix `a_rx(arrival) · a_tx(departure)ᴴ`.
pub fn los_matrix(rows: usize, cols: usize, los: LosAngles) -> CMatrix {
    let ar = steering(rows, los.arrival);
    let at = steering(cols, los.departure);
    let mut m = CMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m[(r, c)] = ar[r] * at[c].conj();
        }
    }
    m
}

pub fn rician_channel(rng: &mut Rng, rows: usize, cols: usize, gain: f64, k: f64) -> Result<CMatrix> {
    rician_channel_with(rng, rows, cols, gain, k, LosAngles::default())
}

pub fn rician_channel_with(
    rng: &mut Rng,
    rows: usize,
    cols: usize,
    gain: f64,
    k: f64,
    los: LosAngles,
) -> Result<CMatrix> {
    if !(gain >= 0.0) || !(k >= 0.0) {
        return Err(Error::Config(format!(
            "rician channel needs gain >= 0 and k >= 0 (gain {gain}, k {k})"
        )));
    }
    // Always draw the scattered part so the stream position does not depend on k.
    let scatter = cgauss_sample(rng, rows, cols, 1.0)?;
    let amp = gain.sqrt();
    let w_los = amp * (k / (k + 1.0)).sqrt();
    let w_nlos = amp * (1.0 / (k + 1.0)).sqrt();
    let los = los_matrix(rows, cols, los);
    los.scale(C64::new(w_los, 0.0))
        .add(&scatter.scale(C64::new(w_nlos, 0.0)))
}

// Fixed LoS geometry per surface link.
const G1_LOS: LosAngles = LosAngles {
    arrival: PI / 5.0,
    departure: -PI / 7.0,
};
const G2R_LOS: LosAngles = LosAngles {
    arrival: PI / 9.0,
    departure: -PI / 4.0,
};
const G2T_LOS: LosAngles = LosAngles {
    arrival: 0.0,
    departure: PI / 3.0,
};

/// Draws one realization. Draw order is fixed: h_d, g1, g2r, g2t, h_a, h_fb.
pub fn gen_channels(spec: &ScenarioSpec, rng: &mut Rng) -> Result<ChannelSet> {
    spec.validate()?;
    let gains = spec.link_gains();
    let (n_tx, n_rx, m, k) = (spec.n_tx, spec.n_rx, spec.n_elems, spec.rician_k);

    let h_d = rician_channel(rng, n_rx, n_tx, gains.h_d, 0.0)?;
    let g1 = rician_channel_with(rng, m, n_tx, gains.g1, k, G1_LOS)?;
    let g2r = rician_channel_with(rng, n_rx, m, gains.g2r, k, G2R_LOS)?;
    let g2t = rician_channel_with(rng, 1, m, gains.g2t, k, G2T_LOS)?;
    let h_a = rician_channel(rng, n_rx, 1, gains.h_a, 0.0)?;
    let mut h_fb = rician_channel(rng, 1, n_tx, gains.h_fb, 0.0)?;
    if spec.direct_fb_blocked {
        h_fb = CMatrix::zeros(1, n_tx);
    }
    Ok(ChannelSet {
        h_d,
        g1,
        g2r,
        g2t,
        h_a,
        h_fb,
    })
}

/// Checks every scenario constraint and reports all violations at once.
pub fn validate_geometry(spec: &ScenarioSpec) -> std::result::Result<(), Vec<String>> {
    let mut errs = Vec::new();
    for (name, v) in [("n_tx", spec.n_tx), ("n_rx", spec.n_rx), ("n_elems", spec.n_elems)] {
        if v == 0 {
            errs.push(format!("{name} must be at least 1"));
        }
    }
    let positive = [
        ("d_sr", spec.d_sr),
        ("d_fb", spec.d_fb),
        ("d_af", spec.d_af),
        ("p_fd", spec.p_fd),
        ("p_alice", spec.p_alice),
        ("noise_fd", spec.noise_fd),
        ("noise_bob", spec.noise_bob),
    ];
    for (name, v) in positive {
        if !(v > 0.0) || !v.is_finite() {
            errs.push(format!("{name} must be positive"));
        }
    }
    if spec.d_sr > 0.0 && spec.d_fb > 0.0 && spec.d_sr >= spec.d_fb {
        errs.push("d_sr must be smaller than d_fb (surface sits between FD device and Bob)".into());
    }
    if !(spec.rician_k >= 0.0) || !spec.rician_k.is_finite() {
        errs.push("rician_k must be non-negative".into());
    }
    for (name, v) in [
        ("pl0_db", spec.pl0_db),
        ("alpha_ris", spec.alpha_ris),
        ("alpha_nlos", spec.alpha_nlos),
        ("si_leak_db", spec.si_leak_db),
    ] {
        if !v.is_finite() {
            errs.push(format!("{name} must be finite"));
        }
    }
    if !(spec.residual_floor >= 0.0) || !spec.residual_floor.is_finite() {
        errs.push("residual_floor must be non-negative".into());
    }
    if !valid_phase_levels(spec.phase_levels) {
        errs.push("phase levels must be 0 or a power of two".into());
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

/// 0 (continuous) or a power of two no smaller than 2.
pub fn valid_phase_levels(l: usize) -> bool {
    l == 0 || (l >= 2 && l.is_power_of_two())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::fro_norm_sq;

    #[test]
    fn pathloss_examples() {
        assert!((pathloss_lin(1.0, 30.0, 2.0).unwrap() - 1e-3).abs() < 1e-18);
        assert!((pathloss_lin(2.0, 30.0, 2.0).unwrap() - 2.5e-4).abs() < 1e-18);
        for alpha in [0.5, 2.0, 2.2, 3.5] {
            assert!(pathloss_lin(0.1, 30.0, alpha).unwrap() > pathloss_lin(0.5, 30.0, alpha).unwrap());
        }
        assert!(pathloss_lin(0.0, 30.0, 2.0).is_err());
        assert!(pathloss_lin(-1.0, 30.0, 2.0).is_err());
    }

    #[test]
    fn log_gain_slope_matches_exponent() {
        for alpha in [1.1, 2.2, 4.4] {
            let r = pathloss_lin(0.1, 30.0, alpha).unwrap() / pathloss_lin(0.5, 30.0, alpha).unwrap();
            assert!((r.log10() - alpha * 5f64.log10()).abs() < 1e-12);
        }
    }

    #[test]
    fn rician_limits() {
        let g = 0.25;
        let m = rician_channel(&mut Rng::new(3), 3, 4, g, 1e9).unwrap();
        for z in m.as_slice() {
            assert!((z.norm() - g.sqrt()).abs() / g.sqrt() < 1e-3);
        }

        let r = rician_channel(&mut Rng::new(4), 3, 4, g, 0.0).unwrap();
        let w = cgauss_sample(&mut Rng::new(4), 3, 4, 1.0)
            .unwrap()
            .scale(C64::new(g.sqrt(), 0.0));
        assert_eq!(r, w);

        assert!(rician_channel(&mut Rng::new(5), 2, 2, 0.0, 2.0).unwrap().is_zero());
        assert!(rician_channel(&mut Rng::new(5), 2, 2, -1.0, 2.0).is_err());
    }

    #[test]
    fn channel_shapes_and_flags() {
        let spec = ScenarioSpec {
            n_tx: 2,
            n_rx: 2,
            n_elems: 4,
            ..Default::default()
        };
        let ch = gen_channels(&spec, &mut Rng::new(1)).unwrap();
        assert_eq!(ch.h_d.shape(), (2, 2));
        assert_eq!(ch.g1.shape(), (4, 2));
        assert_eq!(ch.g2r.shape(), (2, 4));
        assert_eq!(ch.g2t.shape(), (1, 4));
        assert_eq!(ch.h_a.shape(), (2, 1));
        assert!(ch.h_fb.is_zero());
        ch.check_dims().unwrap();

        let again = gen_channels(&spec, &mut Rng::new(1)).unwrap();
        assert_eq!(ch, again);

        let open = ScenarioSpec {
            direct_fb_blocked: false,
            ..spec
        };
        assert!(!gen_channels(&open, &mut Rng::new(1)).unwrap().h_fb.is_zero());
    }

    #[test]
    fn g1_power_matches_pathloss() {
        let spec = ScenarioSpec {
            n_tx: 1,
            n_elems: 10_000,
            ..Default::default()
        };
        let ch = gen_channels(&spec, &mut Rng::new(77)).unwrap();
        assert!(ch.g1.is_finite() && ch.g2r.is_finite() && ch.h_d.is_finite());
        let per_entry = fro_norm_sq(&ch.g1) / 10_000.0;
        let want = spec.link_gains().g1;
        assert!((per_entry / want - 1.0).abs() < 0.05, "{per_entry} vs {want}");
    }

    #[test]
    fn geometry_validation() {
        let ok = ScenarioSpec {
            d_sr: 0.1,
            d_fb: 20.0,
            ..Default::default()
        };
        assert!(validate_geometry(&ok).is_ok());

        let errs = validate_geometry(&ScenarioSpec {
            d_sr: 0.0,
            ..Default::default()
        })
        .unwrap_err();
        assert!(errs.contains(&"d_sr must be positive".to_string()));

        let errs = validate_geometry(&ScenarioSpec {
            phase_levels: 3,
            ..Default::default()
        })
        .unwrap_err();
        assert_eq!(errs, vec!["phase levels must be 0 or a power of two".to_string()]);

        let errs = validate_geometry(&ScenarioSpec {
            n_rx: 0,
            d_sr: 6.0,
            p_fd: -1.0,
            ..Default::default()
        })
        .unwrap_err();
        assert_eq!(errs.len(), 3, "{errs:?}");
    }

    #[test]
    fn default_uplink_snr_near_40_db() {
        let snr_db = 10.0 * ScenarioSpec::default().mean_uplink_snr().log10();
        assert!((snr_db - 40.0).abs() < 0.5, "{snr_db}");
    }
}
