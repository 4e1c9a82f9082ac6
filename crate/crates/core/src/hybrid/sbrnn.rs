//! Sliding bidirectional RNN detection for finite-memory channels.
//!
//! A bidirectional LSTM stack with a per-position softmax head is
//! trained on windows of B consecutive transmissions. At detection time
//! the model runs either in block mode (disjoint length-B windows,
//! argmax per position) or sliding mode, where the window advances one
//! symbol at a time and the per-position estimate is the uniform
//! average of the window estimates covering that position.
//!
//! Blocks shorter than B are padded by repeating the last observation;
//! padded positions are masked out of losses and decisions.

use crate::channels::{Constellation, FmDataset};
use crate::error::Error;
use crate::neural::{train, BiLstmStack, Mlp, ParamStore, TrainConfig};
use crate::numkit::{softmax, PmfVec, RngStream};
use crate::Result;

/// SBRNN structural configuration.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SbrnnConfig {
    /// Window length B.
    pub window: usize,
    /// Number of bidirectional LSTM layers.
    pub layers: usize,
    /// Hidden size per direction.
    pub hidden: usize,
    /// Inter-layer dropout rate (inverted, training only).
    pub dropout: f64,
    /// Stride between training windows; `None` means disjoint windows
    /// (stride = B).
    pub stride: Option<usize>,
}

impl Default for SbrnnConfig {
    fn default() -> Self {
        // B = 10, 3 LSTM layers of size 100, dropout 0.1
        SbrnnConfig {
            window: 10,
            layers: 3,
            hidden: 100,
            dropout: 0.1,
            stride: None,
        }
    }
}

/// A trained sliding-BRNN detector.
#[derive(Debug, Clone)]
pub struct SbrnnModel {
    pub config: SbrnnConfig,
    pub constellation: Constellation,
    pub stack: BiLstmStack,
    pub head: Mlp,
    pub params: ParamStore,
}

impl SbrnnModel {
    pub fn build(constellation: &Constellation, config: &SbrnnConfig, seed: u64) -> Result<Self> {
        if config.window < 1 || config.layers < 1 || config.hidden < 1 {
            return Err(Error::Domain("sbrnn: degenerate configuration".into()));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(Error::Domain("sbrnn: dropout must be in [0, 1)".into()));
        }
        let mut params = ParamStore::new(seed);
        let stack = BiLstmStack::new(
            &mut params,
            "brnn",
            1,
            config.hidden,
            config.layers,
            config.dropout,
        );
        let head = Mlp::new(
            &mut params,
            "head",
            &[stack.out_dim(), constellation.size()],
            &[crate::neural::Activation::Identity],
        );
        Ok(SbrnnModel {
            config: config.clone(),
            constellation: constellation.clone(),
            stack,
            head,
            params,
        })
    }

    /// Per-position symbol distributions for one window (length ≤ B;
    /// shorter input is padded with its last observation internally and
    /// only the real positions are returned).
    pub fn window_pmfs(&self, ys: &[f64]) -> Vec<PmfVec> {
        let b = self.config.window;
        let real = ys.len().min(b);
        let mut padded: Vec<Vec<f64>> = ys.iter().take(real).map(|&y| vec![y]).collect();
        while padded.len() < b {
            let last = padded.last().cloned().unwrap_or_else(|| vec![0.0]);
            padded.push(last);
        }
        let hidden = self.stack.infer(&self.params, &padded);
        hidden
            .into_iter()
            .take(real)
            .map(|h| softmax(&self.head.infer(&self.params, &h)))
            .collect()
    }

    fn window_starts(block_len: usize, window: usize, stride: usize) -> Vec<usize> {
        if block_len < window {
            return vec![];
        }
        (0..=block_len - window).step_by(stride.max(1)).collect()
    }
}

/// Train on a state-labeled dataset sliced into windows of B consecutive
/// transmissions; the loss is the per-position cross entropy summed over
/// the window.
pub fn sbrnn_train(
    ds: &FmDataset,
    constellation: &Constellation,
    config: &SbrnnConfig,
    cfg: &TrainConfig,
) -> Result<(SbrnnModel, Vec<f64>)> {
    let b = config.window;
    let stride = config.stride.unwrap_or(b);
    let starts_per_block = SbrnnModel::window_starts(ds.block_len, b, stride);
    if starts_per_block.is_empty() {
        return Err(Error::Domain(format!(
            "sbrnn_train: block length {} shorter than window {b}",
            ds.block_len
        )));
    }
    let mut windows: Vec<(usize, usize)> = Vec::new(); // (block, start)
    for blk in 0..ds.n_blocks {
        for &st in &starts_per_block {
            windows.push((blk, st));
        }
    }
    let mut model = SbrnnModel::build(constellation, config, cfg.seed)?;
    let stack = model.stack.clone();
    let head = model.head.clone();
    let dropout_rng = std::cell::RefCell::new(RngStream::new(cfg.seed, 0x64726f70)); // "drop"
    let trace = train(&mut model.params, windows.len(), cfg, |g, ps, idx| {
        let (blk, st) = windows[idx];
        let base = blk * ds.block_len + st;
        let xs: Vec<_> = (0..b).map(|p| g.input(vec![ds.obs[base + p]])).collect();
        let mut rng = dropout_rng.borrow_mut();
        let hs = stack.run(g, ps, &xs, Some(&mut rng))?;
        let mut loss = g.input(vec![0.0]);
        for (p, h) in hs.into_iter().enumerate() {
            let logits = head.forward(g, ps, h)?;
            let ce = g.cross_entropy_logits(logits, ds.symbols[base + p]);
            loss = g.add(loss, ce);
        }
        Ok(loss)
    })?;
    Ok((model, trace))
}

/// Block detection: partition into disjoint length-B windows (the final
/// partial window padded) and take the per-position argmax.
pub fn brnn_block_detect(model: &SbrnnModel, ys: &[f64]) -> Vec<usize> {
    let b = model.config.window;
    let mut out = Vec::with_capacity(ys.len());
    let mut start = 0;
    while start < ys.len() {
        let end = (start + b).min(ys.len());
        for p in model.window_pmfs(&ys[start..end]) {
            out.push(p.argmax());
        }
        start = end;
    }
    out
}

/// Sliding detection: the window advances one symbol at a time and each
/// position's estimate averages the estimates of every window covering
/// it with uniform weights 1/|K_i|.
pub fn sbrnn_detect(model: &SbrnnModel, ys: &[f64]) -> Vec<usize> {
    let b = model.config.window;
    let t_len = ys.len();
    if t_len <= b {
        // a single window: sliding and block modes coincide
        return model.window_pmfs(ys).iter().map(|p| p.argmax()).collect();
    }
    let m = model.constellation.size();
    let mut acc = vec![0.0f64; t_len * m];
    let mut count = vec![0u32; t_len];
    for start in 0..=t_len - b {
        let pmfs = model.window_pmfs(&ys[start..start + b]);
        for (offset, p) in pmfs.iter().enumerate() {
            let i = start + offset;
            for (j, &v) in p.as_slice().iter().enumerate() {
                acc[i * m + j] += v;
            }
            count[i] += 1;
        }
    }
    (0..t_len)
        .map(|i| {
            let row = &acc[i * m..(i + 1) * m];
            let inv = 1.0 / count[i] as f64;
            let avg: Vec<f64> = row.iter().map(|v| v * inv).collect();
            PmfVec::new(avg).expect("convex combination of pmfs").argmax()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{exp_decay_taps, gen_fm_dataset, FmChannelSpec, FmKind};

    fn small_cfg(window: usize) -> SbrnnConfig {
        SbrnnConfig {
            window,
            layers: 1,
            hidden: 12,
            dropout: 0.1,
            stride: None,
        }
    }

    fn awgn(memory: usize, rho: f64) -> FmChannelSpec {
        FmChannelSpec::new(
            FmKind::Awgn,
            exp_decay_taps(memory, 0.4).unwrap(),
            rho,
            Constellation::bpsk(),
        )
        .unwrap()
    }

    #[test]
    fn window_pmfs_are_valid_and_sized() {
        let model = SbrnnModel::build(&Constellation::bpsk(), &small_cfg(5), 1).unwrap();
        let pmfs = model.window_pmfs(&[0.1, -0.4, 0.9, 0.0, 1.0]);
        assert_eq!(pmfs.len(), 5);
        for p in &pmfs {
            assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // short input: padded internally, only real positions returned
        assert_eq!(model.window_pmfs(&[0.1, 0.2]).len(), 2);
    }

    #[test]
    fn single_window_modes_coincide() {
        let model = SbrnnModel::build(&Constellation::bpsk(), &small_cfg(8), 2).unwrap();
        let ys = [0.5, -0.3, 0.8, -0.9, 0.2];
        assert_eq!(sbrnn_detect(&model, &ys), brnn_block_detect(&model, &ys));
    }

    #[test]
    fn interior_positions_average_b_windows() {
        // reproduce the uniform average by hand for an interior position
        let model = SbrnnModel::build(&Constellation::bpsk(), &small_cfg(3), 3).unwrap();
        let ys = [0.5, -0.3, 0.8, -0.9, 0.2, 1.1, -0.6];
        let b = 3;
        let i = 4; // interior: |K_i| = B
        let mut acc = vec![0.0; 2];
        let mut n = 0;
        for start in 0..=ys.len() - b {
            if start <= i && start + b > i {
                let p = model.window_pmfs(&ys[start..start + b]);
                for (j, v) in p[i - start].as_slice().iter().enumerate() {
                    acc[j] += v;
                }
                n += 1;
            }
        }
        assert_eq!(n, b);
        let expect = if acc[1] > acc[0] { 1 } else { 0 };
        assert_eq!(sbrnn_detect(&model, &ys)[i], expect);
    }

    #[test]
    fn locality_of_sliding_estimates() {
        // position i depends only on observations within B−1 of it
        let model = SbrnnModel::build(&Constellation::bpsk(), &small_cfg(3), 4).unwrap();
        let mut ys = vec![0.5, -0.3, 0.8, -0.9, 0.2, 1.1, -0.6, 0.4];
        let before = sbrnn_detect(&model, &ys);
        ys[7] = -2.5; // i = 2 is more than B−1 away from position 7
        let after = sbrnn_detect(&model, &ys);
        assert_eq!(before[2], after[2]);
        assert_eq!(before[..5], after[..5]);
    }

    #[test]
    fn b_equal_one_reduces_to_symbolwise_classifier() {
        let spec = awgn(1, 16.0);
        let mut rng = crate::numkit::RngStream::new(5, 0);
        let ds = gen_fm_dataset(&spec, 40, 8, &mut rng).unwrap();
        let cfg = small_cfg(1);
        let tcfg = TrainConfig::default().with_epochs(30).with_seed(6);
        let (model, _) = sbrnn_train(&ds, &spec.constellation, &cfg, &tcfg).unwrap();
        // every position is its own window in both modes
        let ys = [2.0, -2.0, 2.0];
        let per_symbol: Vec<usize> = ys
            .iter()
            .map(|&y| model.window_pmfs(&[y])[0].argmax())
            .collect();
        assert_eq!(brnn_block_detect(&model, &ys), per_symbol);
        assert_eq!(sbrnn_detect(&model, &ys), per_symbol);
    }

    #[test]
    fn memoryless_noiseless_channel_trains_to_window_accuracy() {
        let spec = awgn(1, 25.0);
        let mut rng = crate::numkit::RngStream::new(7, 0);
        let mut ds = gen_fm_dataset(&spec, 30, 6, &mut rng).unwrap();
        // replace outputs by their noiseless means: ±5
        for i in 0..ds.len() {
            ds.obs[i] = if ds.symbols[i] == 1 { 5.0 } else { -5.0 };
        }
        let cfg = small_cfg(5);
        let tcfg = TrainConfig::default().with_epochs(40).with_seed(8);
        let (model, trace) = sbrnn_train(&ds, &spec.constellation, &cfg, &tcfg).unwrap();
        for blk in 0..ds.n_blocks {
            let ys = ds.block_obs(blk);
            let got = brnn_block_detect(&model, ys);
            assert_eq!(got, ds.block_symbols(blk), "loss {:?}", trace.last());
        }
    }

    #[test]
    fn training_loss_decreases_over_first_epochs() {
        let spec = awgn(4, 10f64.powf(0.8));
        let mut rng = crate::numkit::RngStream::new(8, 0);
        let ds = gen_fm_dataset(&spec, 50, 10, &mut rng).unwrap();
        let tcfg = TrainConfig::default().with_epochs(10).with_seed(9);
        let (_, trace) = sbrnn_train(&ds, &spec.constellation, &small_cfg(10), &tcfg).unwrap();
        assert!(trace.last().unwrap() < trace.first().unwrap(), "{trace:?}");
    }

    #[test]
    fn overlapping_training_windows_are_available() {
        let spec = awgn(2, 4.0);
        let mut rng = crate::numkit::RngStream::new(9, 0);
        let ds = gen_fm_dataset(&spec, 20, 2, &mut rng).unwrap();
        let cfg = SbrnnConfig {
            stride: Some(1),
            ..small_cfg(5)
        };
        let tcfg = TrainConfig::default().with_epochs(1).with_seed(1);
        // 16 start positions per block, 2 blocks
        let (model, _) = sbrnn_train(&ds, &spec.constellation, &cfg, &tcfg).unwrap();
        assert_eq!(model.config.stride, Some(1));
    }

    #[test]
    fn training_requires_full_windows() {
        let spec = awgn(2, 4.0);
        let mut rng = crate::numkit::RngStream::new(10, 0);
        let ds = gen_fm_dataset(&spec, 4, 2, &mut rng).unwrap();
        let tcfg = TrainConfig::default().with_epochs(1);
        assert!(sbrnn_train(&ds, &spec.constellation, &small_cfg(10), &tcfg).is_err());
    }
}
