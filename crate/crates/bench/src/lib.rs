//! Shared fixtures for the benchmarks.

use starfd_core::fdlink::mrc_combiner;
use starfd_core::neural::{Activation, Mlp};
use starfd_core::optim::mrt_beamformer;
use starfd_core::{gen_channels, ChannelSet, LinkConfig, Rng, ScenarioSpec, StarConfig, StarMode};

pub struct Instance {
    pub spec: ScenarioSpec,
    pub ch: ChannelSet,
    pub cfg: StarConfig,
    pub link: LinkConfig,
}

/// Default scenario with `m` elements, a balanced surface and MRT/MRC.
pub fn instance(m: usize, mode: StarMode, seed: u64) -> Instance {
    let spec = ScenarioSpec {
        n_elems: m,
        mode,
        seed,
        ..ScenarioSpec::default()
    };
    oracle_sized(spec)
}

/// Two-antenna MS instance small enough for exhaustive enumeration.
pub fn small_ms(seed: u64) -> Instance {
    oracle_sized(ScenarioSpec {
        n_tx: 2,
        n_elems: 3,
        mode: StarMode::Ms,
        phase_levels: 2,
        si_leak_db: -90.0,
        d_fb: 0.3,
        seed,
        ..ScenarioSpec::default()
    })
}

fn oracle_sized(spec: ScenarioSpec) -> Instance {
    let ch = gen_channels(&spec, &mut Rng::new(spec.seed)).expect("valid spec");
    let cfg = StarConfig::uniform(spec.n_elems, spec.mode, spec.phase_levels, std::f64::consts::FRAC_PI_4);
    let w = mrt_beamformer(&ch, &cfg, spec.p_fd)
        .expect("dims")
        .expect("nonzero downlink");
    let v = mrc_combiner(&ch).expect("nonzero uplink");
    Instance {
        spec,
        ch,
        cfg,
        link: LinkConfig { w, v },
    }
}

pub fn mlp(dims: &[usize], seed: u64) -> Mlp {
    Mlp::new(dims, Activation::Relu, &mut Rng::new(seed)).expect("valid dims")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_consistent() {
        let i = instance(16, StarMode::Es, 1);
        assert_eq!(i.ch.n_elems(), 16);
        assert!(i.cfg.violations().is_empty());
        assert!(i.link.violations(i.spec.p_fd).is_empty());
        let s = small_ms(2);
        assert_eq!((s.ch.n_tx(), s.ch.n_elems()), (2, 3));
        assert_eq!(mlp(&[4, 8, 2], 0).dims(), vec![4, 8, 2]);
    }
}
