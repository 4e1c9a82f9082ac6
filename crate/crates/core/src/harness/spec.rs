//! Declarative experiment descriptions, mirrored one-to-one by the JSON
//! config files the CLI consumes.

use std::path::Path;

use crate::channels::{
    exp_decay_taps, read_tap_file, build_spatial_h, Constellation, FmChannelSpec, FmKind,
    MimoChannelSpec, MimoKind, TapProfile,
};
use crate::error::Error;
use crate::numkit::Mat;
use crate::Result;

/// Named constellations accepted in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstellationName {
    Bpsk,
    Ook,
}

impl ConstellationName {
    pub fn build(self) -> Constellation {
        match self {
            ConstellationName::Bpsk => Constellation::bpsk(),
            ConstellationName::Ook => Constellation::ook(),
        }
    }
}

/// Channel description: family plus its parameters.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ChannelConfig {
    /// Finite-memory scalar channel. Taps come either from the γ grid
    /// (exponential decay of length `memory`) or from an external tap
    /// file, one decimal real per line.
    Fm {
        kind: FmKind,
        memory: usize,
        constellation: ConstellationName,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        taps_file: Option<String>,
    },
    /// Flat MIMO channel with the spatial-decay matrix e^{−|i−k|}.
    Mimo {
        kind: MimoKind,
        n: usize,
        k: usize,
        constellation: ConstellationName,
    },
}

impl ChannelConfig {
    pub fn is_fm(&self) -> bool {
        matches!(self, ChannelConfig::Fm { .. })
    }

    pub fn constellation(&self) -> Constellation {
        match self {
            ChannelConfig::Fm { constellation, .. } => constellation.build(),
            ChannelConfig::Mimo { constellation, .. } => constellation.build(),
        }
    }
}

/// Per-detector training and architecture overrides; every field has a
/// sensible default so config files only set what they change.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    /// Rounds Q for iterative SIC and DeepSIC.
    pub sic_iterations: Option<usize>,
    pub detnet_layers: Option<usize>,
    pub detnet_hidden: Option<usize>,
    pub detnet_log_offset_one: Option<bool>,
    pub sbrnn_window: Option<usize>,
    pub sbrnn_layers: Option<usize>,
    pub sbrnn_hidden: Option<usize>,
    pub sbrnn_dropout: Option<f64>,
    /// "classification" (default) or "mixturedensity".
    pub likelihood_head: Option<crate::hybrid::HeadKind>,
    pub mdn_components: Option<usize>,
}

fn default_block_len() -> usize {
    200
}

fn default_trials() -> u64 {
    1
}

fn default_test_symbols() -> usize {
    100_000
}

/// Declarative description of one sweep: channel, detectors, grids,
/// CSI-error level, data sizes, and the master seed every output row
/// records.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ExperimentSpec {
    pub id: String,
    pub channel: ChannelConfig,
    pub detectors: Vec<String>,
    pub snr_db_grid: Vec<f64>,
    #[serde(default)]
    pub sigma_e2: f64,
    #[serde(default)]
    pub gamma_grid: Vec<f64>,
    pub train_size: usize,
    /// Test symbols per cell; defaults to 10⁵, which bounds the SER
    /// standard error below 1e-3 at SER ≈ 1e-2.
    #[serde(default = "default_test_symbols")]
    pub test_symbols: usize,
    #[serde(default = "default_block_len")]
    pub block_len: usize,
    #[serde(default = "default_trials")]
    pub trials: u64,
    pub master_seed: u64,
    #[serde(default)]
    pub train: TrainOverrides,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("experiment spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_db_grid.is_empty() {
            return Err(Error::Parse("snr_db_grid must be nonempty".into()));
        }
        if self.detectors.is_empty() {
            return Err(Error::Parse("detectors must be nonempty".into()));
        }
        if self.sigma_e2 < 0.0 {
            return Err(Error::Parse("sigma_e2 must be ≥ 0".into()));
        }
        if self.test_symbols == 0 || self.block_len == 0 || self.trials == 0 {
            return Err(Error::Parse("test_symbols, block_len, trials must be ≥ 1".into()));
        }
        if let ChannelConfig::Fm { taps_file, .. } = &self.channel {
            if taps_file.is_none() && self.gamma_grid.is_empty() {
                return Err(Error::Parse(
                    "fm channel needs a nonempty gamma_grid or a taps_file".into(),
                ));
            }
        }
        for d in &self.detectors {
            detector_id(d, self.channel.is_fm())?;
        }
        Ok(())
    }

    /// The γ axis: tap-profile grid for ISI channels, a single slot for
    /// MIMO (where the column records the H index instead).
    pub fn gamma_axis_len(&self) -> usize {
        match &self.channel {
            ChannelConfig::Fm { taps_file, .. } => {
                if taps_file.is_some() {
                    1
                } else {
                    self.gamma_grid.len()
                }
            }
            ChannelConfig::Mimo { .. } => 1,
        }
    }

    /// Resolve the tap profile for one γ-axis slot.
    pub fn taps_for(&self, gamma_idx: usize) -> Result<TapProfile> {
        match &self.channel {
            ChannelConfig::Fm {
                memory, taps_file, ..
            } => match taps_file {
                Some(path) => {
                    let file = std::fs::File::open(path)?;
                    let taps = read_tap_file(std::io::BufReader::new(file))?;
                    if taps.len() != *memory {
                        return Err(Error::Parse(format!(
                            "tap file has {} taps, spec says memory {}",
                            taps.len(),
                            memory
                        )));
                    }
                    TapProfile::new(taps)
                }
                None => exp_decay_taps(*memory, self.gamma_grid[gamma_idx]),
            },
            ChannelConfig::Mimo { .. } => {
                Err(Error::Parse("taps_for called on a MIMO channel".into()))
            }
        }
    }

    /// The value recorded in the result `gamma` column.
    pub fn gamma_value(&self, gamma_idx: usize) -> f64 {
        match &self.channel {
            ChannelConfig::Fm { taps_file, .. } => {
                if taps_file.is_some() {
                    0.0
                } else {
                    self.gamma_grid[gamma_idx]
                }
            }
            ChannelConfig::Mimo { .. } => gamma_idx as f64,
        }
    }

    /// True finite-memory channel for one (γ, SNR) cell.
    pub fn fm_channel(&self, gamma_idx: usize, snr_db: f64) -> Result<FmChannelSpec> {
        let ChannelConfig::Fm { kind, constellation, .. } = &self.channel else {
            return Err(Error::Parse("fm_channel called on a MIMO spec".into()));
        };
        FmChannelSpec::new(
            *kind,
            self.taps_for(gamma_idx)?,
            10f64.powf(snr_db / 10.0),
            constellation.build(),
        )
    }

    /// True MIMO channel for one SNR cell (SNR = 1/σ_w²).
    pub fn mimo_channel(&self, snr_db: f64) -> Result<MimoChannelSpec> {
        let ChannelConfig::Mimo { kind, n, k, constellation } = &self.channel else {
            return Err(Error::Parse("mimo_channel called on an FM spec".into()));
        };
        MimoChannelSpec::new(
            *kind,
            build_spatial_h(*n, *k),
            10f64.powf(-snr_db / 10.0),
            constellation.build(),
        )
    }

    /// MIMO channel with an explicit (e.g. perturbed) matrix.
    pub fn mimo_channel_with(&self, h: Mat, snr_db: f64) -> Result<MimoChannelSpec> {
        let ChannelConfig::Mimo { kind, constellation, .. } = &self.channel else {
            return Err(Error::Parse("mimo_channel_with called on an FM spec".into()));
        };
        MimoChannelSpec::new(*kind, h, 10f64.powf(-snr_db / 10.0), constellation.build())
    }
}

/// Stable small id per detector name, used in cell-seed derivation so
/// adding detectors never perturbs other cells' randomness.
pub fn detector_id(name: &str, fm: bool) -> Result<u64> {
    let (id, fm_only, mimo_only) = match name {
        "viterbi" => (1, true, false),
        "bcjr" => (2, true, false),
        "viterbinet" => (3, true, false),
        "bcjrnet" => (4, true, false),
        "sbrnn" => (5, true, false),
        "sbrnn-block" => (6, true, false),
        "map" => (7, false, true),
        "sic" => (8, false, true),
        "deepsic-seq" => (9, false, true),
        "deepsic-e2e" => (10, false, true),
        "detnet" => (11, false, true),
        "pg" => (12, false, true),
        other => return Err(Error::Parse(format!("unknown detector '{other}'"))),
    };
    if fm && mimo_only {
        return Err(Error::Parse(format!(
            "detector '{name}' applies to MIMO channels only"
        )));
    }
    if !fm && fm_only {
        return Err(Error::Parse(format!(
            "detector '{name}' applies to finite-memory channels only"
        )));
    }
    Ok(id)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FM_JSON: &str = r#"{
        "id": "awgn-mini",
        "channel": {"family": "fm", "kind": "awgn", "memory": 4, "constellation": "bpsk"},
        "detectors": ["viterbi", "bcjr", "viterbinet"],
        "snr_db_grid": [0.0, 4.0, 8.0],
        "sigma_e2": 0.1,
        "gamma_grid": [0.2, 0.5],
        "train_size": 5000,
        "test_symbols": 20000,
        "master_seed": 42
    }"#;

    #[test]
    fn parses_and_validates_fm_spec() {
        let spec = ExperimentSpec::from_json(FM_JSON).unwrap();
        assert_eq!(spec.block_len, 200);
        assert_eq!(spec.trials, 1);
        assert_eq!(spec.gamma_axis_len(), 2);
        let ch = spec.fm_channel(0, 8.0).unwrap();
        assert!((ch.rho - 10f64.powf(0.8)).abs() < 1e-12);
        assert_eq!(ch.memory(), 4);
    }

    #[test]
    fn rejects_mismatched_detectors() {
        let bad = FM_JSON.replace("\"viterbi\"", "\"detnet\"");
        assert!(ExperimentSpec::from_json(&bad).is_err());
    }

    #[test]
    fn rejects_fm_without_gamma_or_taps() {
        let bad = FM_JSON.replace("\"gamma_grid\": [0.2, 0.5],", "");
        assert!(ExperimentSpec::from_json(&bad).is_err());
    }

    #[test]
    fn mimo_spec_roundtrip() {
        let text = r#"{
            "id": "mimo6",
            "channel": {"family": "mimo", "kind": "gaussian", "n": 6, "k": 6, "constellation": "bpsk"},
            "detectors": ["map", "sic", "deepsic-seq"],
            "snr_db_grid": [6.0, 10.0, 14.0],
            "train_size": 5000,
            "test_symbols": 20000,
            "master_seed": 7
        }"#;
        let spec = ExperimentSpec::from_json(text).unwrap();
        let ch = spec.mimo_channel(10.0).unwrap();
        assert!((ch.noise_var - 0.1).abs() < 1e-12);
        assert_eq!(ch.n_users(), 6);
        // serialize back and re-parse
        let again = ExperimentSpec::from_json(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(again.id, "mimo6");
    }

    #[test]
    fn taps_file_channel_resolves() {
        let dir = std::env::temp_dir().join(format!("symdet-taps-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let tap_path = dir.join("h.txt");
        std::fs::write(&tap_path, "1.0\n0.6\n0.3\n").unwrap();
        let text = format!(
            r#"{{
            "id": "ext-taps",
            "channel": {{"family": "fm", "kind": "awgn", "memory": 3,
                         "constellation": "bpsk", "taps_file": "{}"}},
            "detectors": ["viterbi"],
            "snr_db_grid": [4.0],
            "train_size": 100,
            "test_symbols": 1000,
            "master_seed": 3
        }}"#,
            tap_path.display()
        );
        let spec = ExperimentSpec::from_json(&text).unwrap();
        assert_eq!(spec.gamma_axis_len(), 1);
        assert_eq!(spec.gamma_value(0), 0.0);
        let taps = spec.taps_for(0).unwrap();
        assert_eq!(taps.taps(), &[1.0, 0.6, 0.3]);
        let ch = spec.fm_channel(0, 4.0).unwrap();
        assert_eq!(ch.memory(), 3);
        // a wrong-length file is rejected
        std::fs::write(&tap_path, "1.0\n0.6\n").unwrap();
        assert!(spec.taps_for(0).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn detector_ids_are_stable() {
        assert_eq!(detector_id("viterbi", true).unwrap(), 1);
        assert_eq!(detector_id("pg", false).unwrap(), 12);
        assert!(detector_id("viterbi", false).is_err());
        assert!(detector_id("nonsense", true).is_err());
    }
}
