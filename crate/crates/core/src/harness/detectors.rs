//! Configured detector instances and Monte Carlo SER evaluation.

use crate::channels::{
    gen_fm_dataset, gen_mimo_dataset, perturb_h, perturb_taps, Constellation, FmChannelSpec,
    FmDataset, MimoChannelSpec, MimoDataset,
};
use crate::error::Error;
use crate::hybrid::{
    bcjrnet_detect, brnn_block_detect, deepsic_train_e2e, deepsic_train_seq, detnet_build,
    detnet_train, likelihood_train, sbrnn_detect, sbrnn_train, viterbinet_detect, DeepSicConfig,
    DeepSicNet, DetNet, DetNetConfig, HeadKind, LikelihoodArch, LikelihoodModel, SbrnnConfig,
    SbrnnModel,
};
use crate::mimo::{default_pg_step, iterative_sic, mimo_map_bruteforce, projected_gradient_detect, SicConfig};
use crate::neural::TrainConfig;
use crate::numkit::{Mat, RngStream};
use crate::trellis::{bcjr, viterbi, Trellis};
use crate::Result;

use super::spec::{ExperimentSpec, TrainOverrides};

/// A detector ready to run: model-based detectors carry their (possibly
/// CSI-perturbed) channel parameters, learned detectors carry trained
/// models.
pub enum DetectorInstance {
    Viterbi { spec: FmChannelSpec },
    Bcjr { spec: FmChannelSpec },
    ViterbiNet { model: LikelihoodModel },
    BcjrNet { model: LikelihoodModel },
    SbrnnSliding { model: SbrnnModel },
    SbrnnBlock { model: SbrnnModel },
    MimoMap { spec: MimoChannelSpec },
    /// Gaussian-model iterative SIC; on a Poisson channel it is applied
    /// to the raw counts unchanged, reproducing how badly the linear
    /// cancellation model fits that channel.
    Sic {
        h: Mat,
        noise_var: f64,
        constellation: Constellation,
        config: SicConfig,
    },
    DeepSic { net: DeepSicNet },
    DetNet { net: DetNet },
    Pg { h: Mat, iterations: usize },
}

impl DetectorInstance {
    /// Wrap a trained model loaded from a checkpoint into the detector
    /// named on the command line; the kind must agree.
    pub fn from_checkpoint(ckpt: super::Checkpoint, detector: &str) -> Result<Self> {
        use super::Checkpoint;
        let found = ckpt.kind().to_string();
        let mismatch = |expected: &str| Error::KindMismatch {
            expected: expected.to_string(),
            found: found.clone(),
        };
        match (detector, ckpt) {
            ("viterbinet", Checkpoint::ViterbiNet(model)) => {
                Ok(DetectorInstance::ViterbiNet { model })
            }
            ("bcjrnet", Checkpoint::BcjrNet(model)) => Ok(DetectorInstance::BcjrNet { model }),
            ("deepsic-seq" | "deepsic-e2e" | "deepsic", Checkpoint::DeepSic(net)) => {
                Ok(DetectorInstance::DeepSic { net })
            }
            ("detnet", Checkpoint::DetNet(net)) => Ok(DetectorInstance::DetNet { net }),
            ("sbrnn", Checkpoint::Sbrnn(model)) => Ok(DetectorInstance::SbrnnSliding { model }),
            ("sbrnn-block", Checkpoint::Sbrnn(model)) => {
                Ok(DetectorInstance::SbrnnBlock { model })
            }
            ("viterbinet", _) => Err(mismatch("viterbinet")),
            ("bcjrnet", _) => Err(mismatch("bcjrnet")),
            ("deepsic-seq" | "deepsic-e2e" | "deepsic", _) => Err(mismatch("deepsic")),
            ("detnet", _) => Err(mismatch("detnet")),
            ("sbrnn" | "sbrnn-block", _) => Err(mismatch("sbrnn")),
            (other, _) => Err(Error::Parse(format!(
                "detector '{other}' does not load from checkpoints"
            ))),
        }
    }

    /// Extract the trained model for checkpointing; model-based
    /// detectors have none.
    pub fn into_checkpoint(self) -> Option<super::Checkpoint> {
        use super::Checkpoint;
        match self {
            DetectorInstance::ViterbiNet { model } => Some(Checkpoint::ViterbiNet(model)),
            DetectorInstance::BcjrNet { model } => Some(Checkpoint::BcjrNet(model)),
            DetectorInstance::DeepSic { net } => Some(Checkpoint::DeepSic(net)),
            DetectorInstance::DetNet { net } => Some(Checkpoint::DetNet(net)),
            DetectorInstance::SbrnnSliding { model } | DetectorInstance::SbrnnBlock { model } => {
                Some(Checkpoint::Sbrnn(model))
            }
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DetectorInstance::Viterbi { .. } => "viterbi",
            DetectorInstance::Bcjr { .. } => "bcjr",
            DetectorInstance::ViterbiNet { .. } => "viterbinet",
            DetectorInstance::BcjrNet { .. } => "bcjrnet",
            DetectorInstance::SbrnnSliding { .. } => "sbrnn",
            DetectorInstance::SbrnnBlock { .. } => "sbrnn-block",
            DetectorInstance::MimoMap { .. } => "map",
            DetectorInstance::Sic { .. } => "sic",
            DetectorInstance::DeepSic { .. } => "deepsic",
            DetectorInstance::DetNet { .. } => "detnet",
            DetectorInstance::Pg { .. } => "pg",
        }
    }

    /// Detect one finite-memory block of observations.
    pub fn detect_fm_block(&self, ys: &[f64]) -> Result<Vec<usize>> {
        match self {
            DetectorInstance::Viterbi { spec } => {
                let tr = Trellis::new(spec.constellation.size(), spec.memory())?;
                let signals = state_signal_table(spec, &tr);
                viterbi(&tr, ys.len(), |i, s| loglik_from_signal(spec, ys[i], signals[s]))
            }
            DetectorInstance::Bcjr { spec } => {
                let tr = Trellis::new(spec.constellation.size(), spec.memory())?;
                let signals = state_signal_table(spec, &tr);
                Ok(bcjr(&tr, ys.len(), |i, s| {
                    loglik_from_signal(spec, ys[i], signals[s])
                })?
                .decisions)
            }
            DetectorInstance::ViterbiNet { model } => viterbinet_detect(model, ys),
            DetectorInstance::BcjrNet { model } => Ok(bcjrnet_detect(model, ys)?.decisions),
            DetectorInstance::SbrnnSliding { model } => Ok(sbrnn_detect(model, ys)),
            DetectorInstance::SbrnnBlock { model } => Ok(brnn_block_detect(model, ys)),
            other => Err(Error::Domain(format!(
                "detector '{}' cannot detect finite-memory blocks",
                other.name()
            ))),
        }
    }

    /// Detect one MIMO observation vector.
    pub fn detect_mimo(&self, y: &[f64]) -> Result<Vec<usize>> {
        match self {
            DetectorInstance::MimoMap { spec } => Ok(mimo_map_bruteforce(y, spec)?.0),
            DetectorInstance::Sic {
                h,
                noise_var,
                constellation,
                config,
            } => Ok(iterative_sic(y, h, *noise_var, constellation, config)?.1),
            DetectorInstance::DeepSic { net } => Ok(net.detect(y).0),
            DetectorInstance::DetNet { net } => Ok(net.detect(y)),
            DetectorInstance::Pg { h, iterations } => {
                let eta = default_pg_step(h);
                let etas = vec![eta; *iterations];
                let s0 = vec![0.0; h.cols()];
                Ok(projected_gradient_detect(y, h, &etas, &s0))
            }
            other => Err(Error::Domain(format!(
                "detector '{}' cannot detect MIMO vectors",
                other.name()
            ))),
        }
    }
}

fn state_signal_table(spec: &FmChannelSpec, tr: &Trellis) -> Vec<f64> {
    (0..tr.n_states())
        .map(|s| spec.state_signal(&tr.state(s).symbols))
        .collect()
}

fn loglik_from_signal(spec: &FmChannelSpec, y: f64, signal: f64) -> f64 {
    use crate::channels::FmKind;
    match spec.kind {
        FmKind::Awgn => {
            let d = y - signal;
            -0.5 * ((2.0 * std::f64::consts::PI).ln() + d * d)
        }
        FmKind::Poisson => {
            let rate = signal + 1.0;
            if rate <= 0.0 || y < 0.0 || y.fract() != 0.0 {
                return f64::NEG_INFINITY;
            }
            y * rate.ln() - rate - libm::lgamma(y + 1.0)
        }
    }
}

/// Training hyperparameters with overrides applied.
pub fn train_config(ov: &TrainOverrides, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::default().with_seed(seed);
    if let Some(e) = ov.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = ov.learning_rate {
        cfg.learning_rate = lr;
    }
    if let Some(b) = ov.batch_size {
        cfg.batch_size = b;
    }
    cfg
}

fn sbrnn_config(ov: &TrainOverrides) -> SbrnnConfig {
    let mut cfg = SbrnnConfig::default();
    if let Some(w) = ov.sbrnn_window {
        cfg.window = w;
    }
    if let Some(l) = ov.sbrnn_layers {
        cfg.layers = l;
    }
    if let Some(h) = ov.sbrnn_hidden {
        cfg.hidden = h;
    }
    if let Some(d) = ov.sbrnn_dropout {
        cfg.dropout = d;
    }
    cfg
}

/// Generate the training set for a finite-memory cell. Under CSI
/// uncertainty every block draws a fresh perturbed tap vector, so the
/// learner sees the error distribution rather than one bad draw, which
/// is how the robustness experiments train across varied conditions.
pub fn fm_training_set(
    true_spec: &FmChannelSpec,
    sigma_e2: f64,
    train_size: usize,
    block_len: usize,
    rng: &mut RngStream,
) -> Result<FmDataset> {
    let n_blocks = train_size.div_ceil(block_len);
    if sigma_e2 == 0.0 {
        return gen_fm_dataset(true_spec, block_len, n_blocks, rng);
    }
    let mut ds: Option<FmDataset> = None;
    for _ in 0..n_blocks {
        let noisy = FmChannelSpec {
            taps: perturb_taps(&true_spec.taps, sigma_e2, rng),
            ..true_spec.clone()
        };
        let block = gen_fm_dataset(&noisy, block_len, 1, rng)?;
        match ds.as_mut() {
            Some(d) => d.extend(block)?,
            None => ds = Some(block),
        }
    }
    Ok(ds.expect("at least one block"))
}

/// Generate the training set for a MIMO cell; under CSI uncertainty each
/// sample draws a fresh perturbed H.
pub fn mimo_training_set(
    true_spec: &MimoChannelSpec,
    sigma_e2: f64,
    train_size: usize,
    rng: &mut RngStream,
) -> Result<MimoDataset> {
    if sigma_e2 == 0.0 {
        return gen_mimo_dataset(true_spec, train_size, rng);
    }
    let mut ds: Option<MimoDataset> = None;
    for _ in 0..train_size {
        let noisy = MimoChannelSpec {
            h: perturb_h(&true_spec.h, sigma_e2, rng),
            ..true_spec.clone()
        };
        let sample = gen_mimo_dataset(&noisy, 1, rng)?;
        match ds.as_mut() {
            Some(d) => d.extend(sample)?,
            None => ds = Some(sample),
        }
    }
    Ok(ds.expect("at least one sample"))
}

/// Build (and if needed train) one detector for a finite-memory cell.
///
/// `regime_spec` carries the channel parameters the receiver believes in
/// (true taps under perfect CSI, one perturbed draw otherwise);
/// `true_spec` generates training data under perfect CSI.
pub fn build_fm_detector(
    name: &str,
    exp: &ExperimentSpec,
    true_spec: &FmChannelSpec,
    regime_spec: &FmChannelSpec,
    data_rng: &mut RngStream,
    train_seed: u64,
) -> Result<DetectorInstance> {
    match name {
        "viterbi" => Ok(DetectorInstance::Viterbi {
            spec: regime_spec.clone(),
        }),
        "bcjr" => Ok(DetectorInstance::Bcjr {
            spec: regime_spec.clone(),
        }),
        "viterbinet" | "bcjrnet" => {
            let ds = fm_training_set(
                true_spec,
                exp.sigma_e2,
                exp.train_size,
                exp.block_len,
                data_rng,
            )?;
            let head = exp.train.likelihood_head.unwrap_or(HeadKind::Classification);
            let mut arch = LikelihoodArch::default();
            if let Some(c) = exp.train.mdn_components {
                arch.n_components = c;
            }
            let cfg = train_config(&exp.train, train_seed);
            let (model, _) = likelihood_train(
                &ds,
                &true_spec.constellation,
                true_spec.memory(),
                head,
                &arch,
                &cfg,
            )?;
            if name == "viterbinet" {
                Ok(DetectorInstance::ViterbiNet { model })
            } else {
                Ok(DetectorInstance::BcjrNet { model })
            }
        }
        "sbrnn" | "sbrnn-block" => {
            let ds = fm_training_set(
                true_spec,
                exp.sigma_e2,
                exp.train_size,
                exp.block_len,
                data_rng,
            )?;
            let scfg = sbrnn_config(&exp.train);
            let cfg = train_config(&exp.train, train_seed);
            let (model, _) = sbrnn_train(&ds, &true_spec.constellation, &scfg, &cfg)?;
            if name == "sbrnn" {
                Ok(DetectorInstance::SbrnnSliding { model })
            } else {
                Ok(DetectorInstance::SbrnnBlock { model })
            }
        }
        other => Err(Error::Parse(format!(
            "detector '{other}' is not a finite-memory detector"
        ))),
    }
}

/// Build (and if needed train) one detector for a MIMO cell.
pub fn build_mimo_detector(
    name: &str,
    exp: &ExperimentSpec,
    true_spec: &MimoChannelSpec,
    regime_spec: &MimoChannelSpec,
    data_rng: &mut RngStream,
    train_seed: u64,
) -> Result<DetectorInstance> {
    let sic_q = exp.train.sic_iterations.unwrap_or(5);
    match name {
        "map" => Ok(DetectorInstance::MimoMap {
            spec: regime_spec.clone(),
        }),
        "sic" => Ok(DetectorInstance::Sic {
            h: regime_spec.h.clone(),
            noise_var: regime_spec.noise_var,
            constellation: regime_spec.constellation.clone(),
            config: SicConfig { iterations: sic_q },
        }),
        "pg" => Ok(DetectorInstance::Pg {
            h: regime_spec.h.clone(),
            iterations: exp.train.detnet_layers.unwrap_or(20),
        }),
        "deepsic-seq" | "deepsic-e2e" => {
            let ds = mimo_training_set(true_spec, exp.sigma_e2, exp.train_size, data_rng)?;
            let mut config = if name == "deepsic-seq" {
                DeepSicConfig::sequential()
            } else {
                DeepSicConfig::end_to_end()
            };
            config.iterations = sic_q;
            let cfg = train_config(&exp.train, train_seed);
            let net = if name == "deepsic-seq" {
                deepsic_train_seq(&ds, &true_spec.constellation, &config, &cfg)?.0
            } else {
                deepsic_train_e2e(&ds, &true_spec.constellation, &config, &cfg)?.0
            };
            Ok(DetectorInstance::DeepSic { net })
        }
        "detnet" => {
            // the unfolded detector embeds its (believed) H; its training
            // data comes from that same channel, so no variety here
            let ds = gen_mimo_dataset(regime_spec, exp.train_size, data_rng)?;
            let k = regime_spec.n_users();
            let mut dcfg = DetNetConfig::desk(k);
            if let Some(l) = exp.train.detnet_layers {
                dcfg.layers = l;
            }
            if let Some(h) = exp.train.detnet_hidden {
                dcfg.hidden = h;
            }
            if let Some(o) = exp.train.detnet_log_offset_one {
                dcfg.log_offset_one = o;
            }
            let cfg = train_config(&exp.train, train_seed);
            let mut net = detnet_build(&regime_spec.h, &dcfg, cfg.seed)?;
            detnet_train(&mut net, &ds, &cfg)?;
            Ok(DetectorInstance::DetNet { net })
        }
        other => Err(Error::Parse(format!(
            "detector '{other}' is not a MIMO detector"
        ))),
    }
}

/// Monte Carlo SER on fresh blocks from the true finite-memory channel.
pub fn ser_eval_fm(
    det: &DetectorInstance,
    true_spec: &FmChannelSpec,
    n_symbols: usize,
    block_len: usize,
    rng: &mut RngStream,
) -> Result<(u64, u64, f64)> {
    let n_blocks = n_symbols.div_ceil(block_len);
    let mut errors = 0u64;
    let mut total = 0u64;
    for _ in 0..n_blocks {
        let sym: Vec<usize> = (0..block_len)
            .map(|_| true_spec.constellation.draw(rng))
            .collect();
        let ys = true_spec.sample(&sym, rng)?;
        let dec = det.detect_fm_block(&ys)?;
        errors += dec.iter().zip(&sym).filter(|(a, b)| a != b).count() as u64;
        total += block_len as u64;
    }
    Ok((errors, total, errors as f64 / total as f64))
}

/// Monte Carlo SER on fresh vectors from the true MIMO channel; every
/// user-symbol counts once.
pub fn ser_eval_mimo(
    det: &DetectorInstance,
    true_spec: &MimoChannelSpec,
    n_symbols: usize,
    rng: &mut RngStream,
) -> Result<(u64, u64, f64)> {
    let k = true_spec.n_users();
    let n_vectors = n_symbols.div_ceil(k);
    let mut errors = 0u64;
    let mut total = 0u64;
    for _ in 0..n_vectors {
        let s: Vec<usize> = (0..k).map(|_| true_spec.constellation.draw(rng)).collect();
        let y = true_spec.sample(&s, rng)?;
        let dec = det.detect_mimo(&y)?;
        errors += dec.iter().zip(&s).filter(|(a, b)| a != b).count() as u64;
        total += k as u64;
    }
    Ok((errors, total, errors as f64 / total as f64))
}
