//! Surface state under energy-splitting (ES) and mode-switching (MS)
//! operation, and the effective channels it induces.
//!
//! Each element's amplitude split is carried as a single angle `psi`:
//! `beta_r = cos psi`, `beta_t = sin psi`. Under ES any `psi` in `[0, π/2]`
//! is allowed; under MS only the two endpoints (pure reflect at 0, pure
//! transmit at π/2).

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};
use std::fmt;
use std::str::FromStr;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::numerics::{wrap_angle, CMatrix, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StarMode {
    /// Energy splitting: every element reflects and transmits.
    Es,
    /// Mode switching: every element either reflects or transmits.
    Ms,
}

impl fmt::Display for StarMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StarMode::Es => "ES",
            StarMode::Ms => "MS",
        })
    }
}

impl FromStr for StarMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ES" => Ok(StarMode::Es),
            "MS" => Ok(StarMode::Ms),
            other => Err(Error::Config(format!("unknown mode '{other}' (expected ES or MS)"))),
        }
    }
}

/// Complete controllable state of the surface.
#[derive(Clone, Debug, PartialEq)]
pub struct StarConfig {
    pub mode: StarMode,
    pub phase_levels: usize,
    pub psi: Vec<f64>,
    pub beta_r: Vec<f64>,
    pub beta_t: Vec<f64>,
    pub theta_r: Vec<f64>,
    pub theta_t: Vec<f64>,
}

/// Amplitudes for a split angle under the given mode.
pub fn split_amplitudes(mode: StarMode, psi: f64) -> (f64, f64, f64) {
    match mode {
        StarMode::Es => {
            let p = psi.clamp(0.0, FRAC_PI_2);
            (p, p.cos(), p.sin())
        }
        // Nearest binary point; the π/4 tie goes to transmit.
        StarMode::Ms => {
            if psi < FRAC_PI_4 {
                (0.0, 1.0, 0.0)
            } else {
                (FRAC_PI_2, 0.0, 1.0)
            }
        }
    }
}

/// Phase grid step for `levels` (0 = continuous).
pub fn phase_step(levels: usize) -> Option<f64> {
    (levels > 0).then(|| TAU / levels as f64)
}

/// Wraps to `[0, 2π)` and rounds to the nearest multiple of `2π/L`.
pub fn quantize_phase(theta: f64, levels: usize) -> f64 {
    let t = wrap_angle(theta);
    match phase_step(levels) {
        None => t,
        Some(step) => {
            let idx = (t / step).round() as usize % levels;
            idx as f64 * step
        }
    }
}

/// Index of a quantized phase on its grid.
pub fn phase_index(theta: f64, levels: usize) -> usize {
    match phase_step(levels) {
        None => 0,
        Some(step) => (theta / step).round() as usize % levels,
    }
}

pub fn project(
    raw_psi: &[f64],
    raw_theta_r: &[f64],
    raw_theta_t: &[f64],
    mode: StarMode,
    levels: usize,
) -> Result<StarConfig> {
    let m = raw_psi.len();
    if raw_theta_r.len() != m || raw_theta_t.len() != m {
        return Err(Error::Dimension(format!(
            "project: psi has {m} entries, theta_r {}, theta_t {}",
            raw_theta_r.len(),
            raw_theta_t.len()
        )));
    }
    let mut cfg = StarConfig {
        mode,
        phase_levels: levels,
        psi: Vec::with_capacity(m),
        beta_r: Vec::with_capacity(m),
        beta_t: Vec::with_capacity(m),
        theta_r: Vec::with_capacity(m),
        theta_t: Vec::with_capacity(m),
    };
    for i in 0..m {
        // NaN inputs collapse to 0 so the output stays feasible.
        let psi = if raw_psi[i].is_nan() { 0.0 } else { raw_psi[i] };
        let (p, br, bt) = split_amplitudes(mode, psi);
        cfg.psi.push(p);
        cfg.beta_r.push(br);
        cfg.beta_t.push(bt);
        cfg.theta_r.push(quantize_phase(finite_or_zero(raw_theta_r[i]), levels));
        cfg.theta_t.push(quantize_phase(finite_or_zero(raw_theta_t[i]), levels));
    }
    Ok(cfg)
}

fn finite_or_zero(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        0.0
    }
}

impl StarConfig {
    /// Every element at `psi` with zero phases.
    pub fn uniform(m: usize, mode: StarMode, levels: usize, psi: f64) -> StarConfig {
        project(&vec![psi; m], &vec![0.0; m], &vec![0.0; m], mode, levels).expect("equal lengths")
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    /// Re-projects the stored raw state.
    pub fn reproject(&self) -> StarConfig {
        project(&self.psi, &self.theta_r, &self.theta_t, self.mode, self.phase_levels)
            .expect("config fields have equal length")
    }

    pub fn set_psi(&mut self, i: usize, psi: f64) {
        let (p, br, bt) = split_amplitudes(self.mode, psi);
        self.psi[i] = p;
        self.beta_r[i] = br;
        self.beta_t[i] = bt;
    }

    pub fn set_theta_r(&mut self, i: usize, theta: f64) {
        self.theta_r[i] = quantize_phase(theta, self.phase_levels);
    }

    pub fn set_theta_t(&mut self, i: usize, theta: f64) {
        self.theta_t[i] = quantize_phase(theta, self.phase_levels);
    }

    pub fn is_reflecting(&self, i: usize) -> bool {
        self.beta_r[i] > 0.0
    }

    /// Complex reflection coefficient of element `i`.
    pub fn refl_coef(&self, i: usize) -> C64 {
        C64::from_polar(self.beta_r[i], self.theta_r[i])
    }

    pub fn trans_coef(&self, i: usize) -> C64 {
        C64::from_polar(self.beta_t[i], self.theta_t[i])
    }

    /// Lists every violated invariant.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let m = self.psi.len();
        for (name, len) in [
            ("beta_r", self.beta_r.len()),
            ("beta_t", self.beta_t.len()),
            ("theta_r", self.theta_r.len()),
            ("theta_t", self.theta_t.len()),
        ] {
            if len != m {
                out.push(format!("{name} has {len} entries, expected {m}"));
            }
        }
        if !out.is_empty() {
            return out;
        }
        for i in 0..m {
            let (br, bt) = (self.beta_r[i], self.beta_t[i]);
            if !(0.0..=1.0).contains(&br) || !(0.0..=1.0).contains(&bt) {
                out.push(format!("element {i}: amplitude outside [0, 1]"));
            }
            match self.mode {
                StarMode::Es => {
                    if (br * br + bt * bt - 1.0).abs() > 1e-12 {
                        out.push(format!("element {i}: ES energy split violated"));
                    }
                }
                StarMode::Ms => {
                    if !((br == 1.0 && bt == 0.0) || (br == 0.0 && bt == 1.0)) {
                        out.push(format!("element {i}: MS amplitudes not binary"));
                    }
                }
            }
            for (name, th) in [("theta_r", self.theta_r[i]), ("theta_t", self.theta_t[i])] {
                if !(0.0..TAU).contains(&th) {
                    out.push(format!("element {i}: {name} outside [0, 2pi)"));
                } else if let Some(step) = phase_step(self.phase_levels) {
                    let k = (th / step).round();
                    if k * step != th {
                        out.push(format!("element {i}: {name} not a multiple of 2pi/L"));
                    }
                }
            }
        }
        out
    }

    /// Per-element integer encoding `(amplitude bit, theta_r index,
    /// theta_t index)` for MS configs on a phase grid. Used for
    /// lexicographic tie-breaking.
    pub fn grid_encoding(&self) -> Vec<(u8, usize, usize)> {
        (0..self.len())
            .map(|i| {
                (
                    u8::from(self.beta_t[i] > self.beta_r[i]),
                    phase_index(self.theta_r[i], self.phase_levels),
                    phase_index(self.theta_t[i], self.phase_levels),
                )
            })
            .collect()
    }

    pub fn csv_header(m: usize) -> String {
        let mut cols = vec!["mode".to_string(), "L".into(), "M".into()];
        for prefix in ["psi", "theta_r", "theta_t"] {
            cols.extend((0..m).map(|i| format!("{prefix}_{i}")));
        }
        cols.join(",")
    }

    /// One CSV row: `mode,L,M,psi_0..,theta_r_0..,theta_t_0..`.
    /// Floats use Rust's shortest round-trip formatting.
    pub fn to_csv_row(&self) -> String {
        let mut cols = vec![
            self.mode.to_string(),
            self.phase_levels.to_string(),
            self.len().to_string(),
        ];
        for v in [&self.psi, &self.theta_r, &self.theta_t] {
            cols.extend(v.iter().map(|x| format!("{x:?}")));
        }
        cols.join(",")
    }

    pub fn from_csv_row(row: &str) -> Result<StarConfig> {
        let cols: Vec<&str> = row.trim().split(',').collect();
        if cols.len() < 3 {
            return Err(Error::Config("config row too short".into()));
        }
        let mode: StarMode = cols[0].parse()?;
        let levels: usize = parse_num(cols[1])?;
        let m: usize = parse_num(cols[2])?;
        if cols.len() != 3 + 3 * m {
            return Err(Error::Config(format!(
                "config row has {} columns, expected {}",
                cols.len(),
                3 + 3 * m
            )));
        }
        let nums = cols[3..]
            .iter()
            .map(|c| parse_num::<f64>(c))
            .collect::<Result<Vec<_>>>()?;
        project(&nums[..m], &nums[m..2 * m], &nums[2 * m..], mode, levels)
    }
}

fn parse_num<T: FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("not a number: '{s}'")))
}

fn diag_matrix(coefs: impl Iterator<Item = C64>) -> CMatrix {
    let v: Vec<C64> = coefs.collect();
    CMatrix::diag(&v)
}

pub fn reflect_matrix(cfg: &StarConfig) -> CMatrix {
    diag_matrix((0..cfg.len()).map(|i| cfg.refl_coef(i)))
}

pub fn transmit_matrix(cfg: &StarConfig) -> CMatrix {
    diag_matrix((0..cfg.len()).map(|i| cfg.trans_coef(i)))
}

/// `left · diag(coefs) · right` without forming the diagonal matrix.
fn cascade(left: &CMatrix, coefs: &[C64], right: &CMatrix) -> Result<CMatrix> {
    if left.cols() != coefs.len() || right.rows() != coefs.len() {
        return Err(Error::Dimension(format!(
            "cascade: {:?} · diag({}) · {:?}",
            left.shape(),
            coefs.len(),
            right.shape()
        )));
    }
    let mut out = CMatrix::zeros(left.rows(), right.cols());
    for r in 0..left.rows() {
        for (k, &ck) in coefs.iter().enumerate() {
            let lk = left[(r, k)] * ck;
            if lk == C64::new(0.0, 0.0) {
                continue;
            }
            for c in 0..right.cols() {
                out[(r, c)] += lk * right[(k, c)];
            }
        }
    }
    Ok(out)
}

pub fn effective_si_channel(ch: &ChannelSet, cfg: &StarConfig) -> Result<CMatrix> {
    let coefs: Vec<C64> = (0..cfg.len()).map(|i| cfg.refl_coef(i)).collect();
    ch.h_d.add(&cascade(&ch.g2r, &coefs, &ch.g1)?)
}

pub fn effective_dl_channel(ch: &ChannelSet, cfg: &StarConfig) -> Result<CMatrix> {
    let coefs: Vec<C64> = (0..cfg.len()).map(|i| cfg.trans_coef(i)).collect();
    ch.h_fb.add(&cascade(&ch.g2t, &coefs, &ch.g1)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gen_channels, ScenarioSpec};
    use crate::numerics::{fro_norm_sq, Rng, ONE};
    use std::f64::consts::{PI, SQRT_2};

    fn unit_channels(n: usize) -> ChannelSet {
        let ones = |r, c| CMatrix::from_vec(r, c, vec![ONE; r * c]).unwrap();
        ChannelSet {
            h_d: ones(n, n),
            g1: ones(1, n),
            g2r: ones(n, 1),
            g2t: ones(1, 1),
            h_a: ones(n, 1),
            h_fb: CMatrix::zeros(1, n),
        }
    }

    #[test]
    fn project_examples() {
        let es = project(&[PI / 4.0], &[0.0], &[0.0], StarMode::Es, 0).unwrap();
        assert!((es.beta_r[0] - SQRT_2 / 2.0).abs() < 1e-15);
        assert!((es.beta_t[0] - SQRT_2 / 2.0).abs() < 1e-15);

        let ms = project(&[PI / 2.0], &[0.0], &[0.0], StarMode::Ms, 0).unwrap();
        assert_eq!((ms.beta_r[0], ms.beta_t[0]), (0.0, 1.0));
        let ms = project(&[0.0], &[0.0], &[0.0], StarMode::Ms, 0).unwrap();
        assert_eq!((ms.beta_r[0], ms.beta_t[0]), (1.0, 0.0));

        let q = project(&[0.0], &[1.70], &[-0.1], StarMode::Es, 4).unwrap();
        assert_eq!(q.theta_r[0], PI / 2.0);
        assert_eq!(q.theta_t[0], 0.0);

        assert!(project(&[0.0, 1.0], &[0.0], &[0.0, 0.0], StarMode::Es, 0).is_err());
    }

    #[test]
    fn reflect_transmit_matrices() {
        let mut cfg = StarConfig::uniform(3, StarMode::Ms, 0, PI / 2.0);
        assert!(reflect_matrix(&cfg).is_zero());

        let one = project(&[0.0], &[PI], &[0.0], StarMode::Ms, 0).unwrap();
        let r = reflect_matrix(&one);
        assert!((r[(0, 0)] - C64::new(-1.0, 0.0)).norm() < 1e-15);

        let es = StarConfig::uniform(4, StarMode::Es, 0, PI / 4.0);
        for i in 0..4 {
            assert!((transmit_matrix(&es)[(i, i)].norm() - SQRT_2 / 2.0).abs() < 1e-15);
        }
        let total = fro_norm_sq(&reflect_matrix(&es)) + fro_norm_sq(&transmit_matrix(&es));
        assert!((total - 4.0).abs() < 1e-12);

        cfg.set_psi(1, 0.0);
        let (r, t) = (reflect_matrix(&cfg), transmit_matrix(&cfg));
        for i in 0..3 {
            assert!(r[(i, i)].norm() <= 1.0 && t[(i, i)].norm() <= 1.0);
            assert!(r[(i, i)].norm() == 0.0 || t[(i, i)].norm() == 0.0);
        }
    }

    #[test]
    fn effective_channels_hand_cases() {
        let ch = unit_channels(1);
        let all_t = StarConfig::uniform(1, StarMode::Ms, 0, PI / 2.0);
        assert_eq!(effective_si_channel(&ch, &all_t).unwrap(), ch.h_d);

        let refl = StarConfig::uniform(1, StarMode::Ms, 0, 0.0);
        let si = effective_si_channel(&ch, &refl).unwrap();
        assert!((si[(0, 0)] - C64::new(2.0, 0.0)).norm() < 1e-15);

        let dl = effective_dl_channel(&ch, &all_t).unwrap();
        assert!((dl[(0, 0)] - ONE).norm() < 1e-15);
        assert!(effective_dl_channel(&ch, &refl).unwrap().is_zero());
    }

    #[test]
    fn constructed_null_cancels() {
        let spec = ScenarioSpec {
            n_tx: 2,
            n_rx: 2,
            n_elems: 6,
            ..Default::default()
        };
        let mut rng = Rng::new(9);
        let mut ch = gen_channels(&spec, &mut rng).unwrap();
        let star = project(
            &(0..6).map(|_| rng.uniform_range(0.0, PI / 2.0)).collect::<Vec<_>>(),
            &(0..6).map(|_| rng.uniform_range(0.0, TAU)).collect::<Vec<_>>(),
            &[0.0; 6],
            StarMode::Es,
            0,
        )
        .unwrap();
        let refl = ch.g2r.matmul(&reflect_matrix(&star)).unwrap().matmul(&ch.g1).unwrap();
        ch.h_d = refl.scale(C64::new(-1.0, 0.0));
        let eff = effective_si_channel(&ch, &star).unwrap();
        assert!(fro_norm_sq(&eff).sqrt() <= 1e-12 * fro_norm_sq(&refl).sqrt());
    }

    #[test]
    fn dl_channel_is_linear_in_g1() {
        let spec = ScenarioSpec {
            n_tx: 2,
            n_elems: 5,
            ..Default::default()
        };
        let ch = gen_channels(&spec, &mut Rng::new(2)).unwrap();
        let cfg = StarConfig::uniform(5, StarMode::Es, 0, 1.0);
        let base = effective_dl_channel(&ch, &cfg).unwrap();
        let c = C64::new(0.3, -2.0);
        let mut scaled = ch.clone();
        scaled.g1 = ch.g1.scale(c);
        let out = effective_dl_channel(&scaled, &cfg).unwrap();
        let diff = out.add(&base.scale(-c)).unwrap();
        assert!(fro_norm_sq(&diff) <= 1e-24 * fro_norm_sq(&out).max(1e-300));
    }

    #[test]
    fn si_channel_affine_in_one_coefficient() {
        // Three reflection coefficients on a line give three collinear outputs.
        let spec = ScenarioSpec {
            n_tx: 1,
            n_rx: 1,
            n_elems: 3,
            ..Default::default()
        };
        let ch = gen_channels(&spec, &mut Rng::new(4)).unwrap();
        let mut cfg = StarConfig::uniform(3, StarMode::Es, 0, 0.3);
        let mut pts = Vec::new();
        for psi in [0.0, 0.5, 1.0] {
            cfg.set_psi(1, psi);
            cfg.set_theta_r(1, 0.0);
            pts.push(effective_si_channel(&ch, &cfg).unwrap()[(0, 0)]);
        }
        let (a, b) = (pts[1] - pts[0], pts[2] - pts[0]);
        let cross = a.re * b.im - a.im * b.re;
        assert!(cross.abs() <= 1e-9 * a.norm() * b.norm());
    }

    #[test]
    fn csv_row_round_trip() {
        let cfg = project(&[0.1, 1.2], &[0.3, 4.0], &[5.0, 2.0], StarMode::Es, 8).unwrap();
        let back = StarConfig::from_csv_row(&cfg.to_csv_row()).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(StarConfig::csv_header(2).split(',').count(), 9);
        assert!(StarConfig::from_csv_row("ES,0,2,1.0").is_err());
    }

    #[test]
    fn ms_config_space_size() {
        // Every (amplitude, theta_r, theta_t) triple on the grid is distinct.
        let l = 4;
        let mut seen = std::collections::BTreeSet::new();
        for bit in 0..2 {
            for r in 0..l {
                for t in 0..l {
                    let step = TAU / l as f64;
                    let cfg = project(
                        &[bit as f64 * PI / 2.0],
                        &[r as f64 * step],
                        &[t as f64 * step],
                        StarMode::Ms,
                        l,
                    )
                    .unwrap();
                    seen.insert(cfg.grid_encoding());
                }
            }
        }
        assert_eq!(seen.len(), 2 * l * l);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn raw(m: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
            (
                prop::collection::vec(-2.0f64..3.0, m),
                prop::collection::vec(-20.0f64..20.0, m),
                prop::collection::vec(-20.0f64..20.0, m),
            )
        }

        fn mode() -> impl Strategy<Value = StarMode> {
            prop_oneof![Just(StarMode::Es), Just(StarMode::Ms)]
        }

        proptest! {
            #[test]
            fn project_is_idempotent((p, r, t) in raw(6), mode in mode(), l in prop_oneof![Just(0usize), Just(2), Just(4), Just(8)]) {
                let once = project(&p, &r, &t, mode, l).unwrap();
                prop_assert!(once.violations().is_empty(), "{:?}", once.violations());
                prop_assert_eq!(once.reproject(), once);
            }
        }
    }
}
