//! Versioned model checkpoints.
//!
//! A checkpoint is a JSON document carrying the format version, the
//! detector kind, the initialization seed, the architecture descriptor,
//! and every parameter tensor. Floats serialize in shortest
//! round-trip decimal form, so load ∘ save is value-exact. Detection
//! needs no side information beyond the checkpoint.

use std::path::Path;

use crate::channels::Constellation;
use crate::error::Error;
use crate::hybrid::{
    detnet_build, DeepSicConfig, DeepSicNet, DetNet, DetNetConfig, HeadKind, LikelihoodArch,
    LikelihoodModel, SbrnnConfig, SbrnnModel,
};
use crate::neural::ParamStore;
use crate::numkit::Mat;
use crate::Result;

pub const FORMAT_VERSION: u32 = 1;

/// A saveable trained model, tagged by detector kind.
#[derive(Debug, Clone)]
pub enum Checkpoint {
    ViterbiNet(LikelihoodModel),
    BcjrNet(LikelihoodModel),
    DeepSic(DeepSicNet),
    DetNet(DetNet),
    Sbrnn(SbrnnModel),
}

impl Checkpoint {
    pub fn kind(&self) -> &'static str {
        match self {
            Checkpoint::ViterbiNet(_) => "viterbinet",
            Checkpoint::BcjrNet(_) => "bcjrnet",
            Checkpoint::DeepSic(_) => "deepsic",
            Checkpoint::DetNet(_) => "detnet",
            Checkpoint::Sbrnn(_) => "sbrnn",
        }
    }

    fn params(&self) -> &ParamStore {
        match self {
            Checkpoint::ViterbiNet(m) | Checkpoint::BcjrNet(m) => &m.params,
            Checkpoint::DeepSic(n) => &n.params,
            Checkpoint::DetNet(n) => &n.params,
            Checkpoint::Sbrnn(m) => &m.params,
        }
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct TensorDoc {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct LikelihoodConfigDoc {
    head: HeadKind,
    memory: usize,
    constellation: Vec<f64>,
    arch: LikelihoodArch,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct DeepSicConfigDoc {
    n_rx: usize,
    n_users: usize,
    constellation: Vec<f64>,
    config: DeepSicConfig,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct DetNetConfigDoc {
    h: TensorDoc,
    config: DetNetConfig,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct SbrnnConfigDoc {
    constellation: Vec<f64>,
    config: SbrnnConfig,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct CheckpointDoc {
    format_version: u32,
    kind: String,
    seed: u64,
    config: serde_json::Value,
    params: Vec<TensorDoc>,
}

fn tensor_docs(ps: &ParamStore) -> Vec<TensorDoc> {
    ps.iter()
        .map(|(name, m)| TensorDoc {
            name: name.to_string(),
            rows: m.rows(),
            cols: m.cols(),
            data: m.as_slice().to_vec(),
        })
        .collect()
}

fn restore_params(ps: &mut ParamStore, docs: &[TensorDoc]) -> Result<()> {
    if docs.len() != ps.len() {
        return Err(Error::Parse(format!(
            "checkpoint holds {} tensors, model expects {}",
            docs.len(),
            ps.len()
        )));
    }
    for doc in docs {
        let id = ps.id(&doc.name).ok_or_else(|| {
            Error::Parse(format!("checkpoint tensor '{}' not in model", doc.name))
        })?;
        let slot = ps.value_mut(id);
        if slot.rows() != doc.rows || slot.cols() != doc.cols {
            return Err(Error::Parse(format!(
                "checkpoint tensor '{}' is {}x{}, model expects {}x{}",
                doc.name,
                doc.rows,
                doc.cols,
                slot.rows(),
                slot.cols()
            )));
        }
        *slot = Mat::from_vec(doc.rows, doc.cols, doc.data.clone())?;
    }
    Ok(())
}

fn to_doc(ckpt: &Checkpoint) -> Result<CheckpointDoc> {
    let config = match ckpt {
        Checkpoint::ViterbiNet(m) | Checkpoint::BcjrNet(m) => {
            serde_json::to_value(LikelihoodConfigDoc {
                head: m.head_kind(),
                memory: m.memory,
                constellation: m.constellation.points().to_vec(),
                arch: m.arch.clone(),
            })
        }
        Checkpoint::DeepSic(n) => serde_json::to_value(DeepSicConfigDoc {
            n_rx: n.n_rx,
            n_users: n.n_users,
            constellation: n.constellation.points().to_vec(),
            config: n.config.clone(),
        }),
        Checkpoint::DetNet(n) => serde_json::to_value(DetNetConfigDoc {
            h: TensorDoc {
                name: "H".to_string(),
                rows: n.h.rows(),
                cols: n.h.cols(),
                data: n.h.as_slice().to_vec(),
            },
            config: n.config,
        }),
        Checkpoint::Sbrnn(m) => serde_json::to_value(SbrnnConfigDoc {
            constellation: m.constellation.points().to_vec(),
            config: m.config.clone(),
        }),
    }
    .map_err(|e| Error::Parse(format!("checkpoint encode: {e}")))?;
    Ok(CheckpointDoc {
        format_version: FORMAT_VERSION,
        kind: ckpt.kind().to_string(),
        seed: ckpt.params().seed(),
        config,
        params: tensor_docs(ckpt.params()),
    })
}

fn from_doc(doc: CheckpointDoc) -> Result<Checkpoint> {
    if doc.format_version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: FORMAT_VERSION,
            found: doc.format_version,
        });
    }
    let parse = |e: serde_json::Error| Error::Parse(format!("checkpoint config: {e}"));
    match doc.kind.as_str() {
        "viterbinet" | "bcjrnet" => {
            let cfg: LikelihoodConfigDoc = serde_json::from_value(doc.config).map_err(parse)?;
            let cons = Constellation::new(cfg.constellation)?;
            let mut model =
                LikelihoodModel::build(&cons, cfg.memory, cfg.head, &cfg.arch, doc.seed)?;
            restore_params(&mut model.params, &doc.params)?;
            Ok(if doc.kind == "viterbinet" {
                Checkpoint::ViterbiNet(model)
            } else {
                Checkpoint::BcjrNet(model)
            })
        }
        "deepsic" => {
            let cfg: DeepSicConfigDoc = serde_json::from_value(doc.config).map_err(parse)?;
            let cons = Constellation::new(cfg.constellation)?;
            let mut net = DeepSicNet::build(cfg.n_rx, cfg.n_users, &cons, &cfg.config, doc.seed)?;
            restore_params(&mut net.params, &doc.params)?;
            Ok(Checkpoint::DeepSic(net))
        }
        "detnet" => {
            let cfg: DetNetConfigDoc = serde_json::from_value(doc.config).map_err(parse)?;
            let h = Mat::from_vec(cfg.h.rows, cfg.h.cols, cfg.h.data)?;
            let mut net = detnet_build(&h, &cfg.config, doc.seed)?;
            restore_params(&mut net.params, &doc.params)?;
            Ok(Checkpoint::DetNet(net))
        }
        "sbrnn" => {
            let cfg: SbrnnConfigDoc = serde_json::from_value(doc.config).map_err(parse)?;
            let cons = Constellation::new(cfg.constellation)?;
            let mut model = SbrnnModel::build(&cons, &cfg.config, doc.seed)?;
            restore_params(&mut model.params, &doc.params)?;
            Ok(Checkpoint::Sbrnn(model))
        }
        other => Err(Error::Parse(format!("unknown checkpoint kind '{other}'"))),
    }
}

/// Write a checkpoint; load ∘ save is value-exact.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let doc = to_doc(ckpt)?;
    let text =
        serde_json::to_string(&doc).map_err(|e| Error::Parse(format!("checkpoint encode: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Read a checkpoint of any kind.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path)?;
    let doc: CheckpointDoc = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("checkpoint decode: {e}")))?;
    from_doc(doc)
}

/// Read a checkpoint and require a specific detector kind.
pub fn load_checkpoint_as(path: &Path, expected_kind: &str) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.kind() != expected_kind {
        return Err(Error::KindMismatch {
            expected: expected_kind.to_string(),
            found: ckpt.kind().to_string(),
        });
    }
    Ok(ckpt)
}
