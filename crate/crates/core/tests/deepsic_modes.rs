//! Cross-method comparison of the two DeepSIC training modes on the
//! 6×6 spatial-decay channel: sequential training stays within 1.5× of
//! the end-to-end-trained receiver on held-out data.

use symdet::channels::{build_spatial_h, gen_mimo_dataset, Constellation, MimoChannelSpec, MimoKind};
use symdet::hybrid::{deepsic_train_e2e, deepsic_train_seq, DeepSicConfig};
use symdet::neural::TrainConfig;
use symdet::numkit::RngStream;

#[test]
fn sequential_training_tracks_end_to_end() {
    let snr_db = 10.0;
    let spec = MimoChannelSpec::new(
        MimoKind::Gaussian,
        build_spatial_h(6, 6),
        10f64.powf(-snr_db / 10.0),
        Constellation::bpsk(),
    )
    .unwrap();
    let mut data_rng = RngStream::new(606, 0);
    let ds = gen_mimo_dataset(&spec, 5000, &mut data_rng).unwrap();
    let tcfg = TrainConfig::default().with_epochs(30).with_seed(606);
    let (net_e2e, _) =
        deepsic_train_e2e(&ds, &spec.constellation, &DeepSicConfig::end_to_end(), &tcfg).unwrap();
    let (net_seq, _) =
        deepsic_train_seq(&ds, &spec.constellation, &DeepSicConfig::sequential(), &tcfg).unwrap();

    let mut test_rng = RngStream::new(607, 0);
    let n_vectors = 20_000;
    let (mut err_e2e, mut err_seq, mut total) = (0u64, 0u64, 0u64);
    for _ in 0..n_vectors {
        let s: Vec<usize> = (0..6).map(|_| test_rng.index(2)).collect();
        let y = spec.sample(&s, &mut test_rng).unwrap();
        let (d_e2e, _) = net_e2e.detect(&y);
        let (d_seq, _) = net_seq.detect(&y);
        err_e2e += d_e2e.iter().zip(&s).filter(|(a, b)| a != b).count() as u64;
        err_seq += d_seq.iter().zip(&s).filter(|(a, b)| a != b).count() as u64;
        total += 6;
    }
    let ser_e2e = err_e2e as f64 / total as f64;
    let ser_seq = err_seq as f64 / total as f64;
    eprintln!("deepsic held-out SER: e2e {ser_e2e:.5}, sequential {ser_seq:.5}");
    assert!(
        ser_seq <= 1.5 * ser_e2e,
        "sequential {ser_seq:.5} vs end-to-end {ser_e2e:.5}"
    );
}
