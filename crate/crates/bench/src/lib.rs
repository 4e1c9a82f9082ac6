//! Shared fixtures for the detector benchmarks.

use symdet::channels::{
    build_spatial_h, exp_decay_taps, Constellation, FmChannelSpec, FmKind, MimoChannelSpec,
    MimoKind,
};
use symdet::numkit::RngStream;
use symdet::trellis::Trellis;

/// An AWGN ISI block plus the per-state signal table its detectors use.
pub struct FmFixture {
    pub spec: FmChannelSpec,
    pub trellis: Trellis,
    pub signals: Vec<f64>,
    pub obs: Vec<f64>,
}

pub fn fm_fixture(memory: usize, t_len: usize, seed: u64) -> FmFixture {
    let spec = FmChannelSpec::new(
        FmKind::Awgn,
        exp_decay_taps(memory, 0.2).unwrap(),
        10f64.powf(0.8),
        Constellation::bpsk(),
    )
    .unwrap();
    let trellis = Trellis::new(2, memory).unwrap();
    let signals = (0..trellis.n_states())
        .map(|s| spec.state_signal(&trellis.state(s).symbols))
        .collect();
    let mut rng = RngStream::new(seed, 0);
    let sym: Vec<usize> = (0..t_len).map(|_| rng.index(2)).collect();
    let obs = spec.sample(&sym, &mut rng).unwrap();
    FmFixture {
        spec,
        trellis,
        signals,
        obs,
    }
}

/// A Gaussian MIMO observation batch at 12 dB.
pub struct MimoFixture {
    pub spec: MimoChannelSpec,
    pub obs: Vec<Vec<f64>>,
}

pub fn mimo_fixture(k: usize, n_vectors: usize, seed: u64) -> MimoFixture {
    let spec = MimoChannelSpec::new(
        MimoKind::Gaussian,
        build_spatial_h(k, k),
        10f64.powf(-1.2),
        Constellation::bpsk(),
    )
    .unwrap();
    let mut rng = RngStream::new(seed, 1);
    let obs = (0..n_vectors)
        .map(|_| {
            let s: Vec<usize> = (0..k).map(|_| rng.index(2)).collect();
            spec.sample(&s, &mut rng).unwrap()
        })
        .collect();
    MimoFixture { spec, obs }
}
