//! Learned state-conditional likelihoods and the detectors built on
//! them: ViterbiNet (learned likelihoods inside the Viterbi recursion)
//! and BCJRNet (the same learned function node inside BCJR message
//! passing).
//!
//! Two heads are available. The classification head trains a softmax
//! network to estimate the state posterior P(s̄ | y) and inverts it by
//! Bayes rule with the marginal output density taken as 1, which leaves
//! every argmin/argmax consumer unchanged. The mixture-density head
//! learns the conditional density p(y | s̄) directly, one mixture per
//! state.

use crate::channels::{Constellation, FmDataset};
use crate::error::Error;
use crate::neural::{train, Activation, MdnTable, Mlp, ParamStore, TrainConfig};
use crate::numkit::log_softmax;
use crate::trellis::{bcjr, viterbi, BcjrOutput, Trellis};
use crate::Result;

/// Which learned likelihood head to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Classification,
    MixtureDensity,
}

/// Architecture knobs for the likelihood network.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LikelihoodArch {
    /// Hidden layer widths of the classification net (input is the
    /// scalar observation, output has M^L states).
    pub hidden: Vec<usize>,
    /// Mixture components per state for the density head.
    pub n_components: usize,
}

impl Default for LikelihoodArch {
    fn default() -> Self {
        // 1×100 then 100×50 then 50×M^L with sigmoid/ReLU intermediates
        LikelihoodArch {
            hidden: vec![100, 50],
            n_components: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Head {
    Classification(Mlp),
    MixtureDensity(MdnTable),
}

/// A trained state-conditional likelihood estimator.
#[derive(Debug, Clone)]
pub struct LikelihoodModel {
    pub head: Head,
    pub params: ParamStore,
    pub constellation: Constellation,
    pub memory: usize,
    pub arch: LikelihoodArch,
}

impl LikelihoodModel {
    /// Untrained model with seed-derived initialization.
    pub fn build(
        constellation: &Constellation,
        memory: usize,
        head: HeadKind,
        arch: &LikelihoodArch,
        seed: u64,
    ) -> Result<Self> {
        let m = constellation.size();
        let n_states = m
            .checked_pow(memory as u32)
            .filter(|&n| n <= 1 << 24)
            .ok_or_else(|| Error::TooLarge(format!("M^L = {m}^{memory}")))?;
        let mut params = ParamStore::new(seed);
        let head = match head {
            HeadKind::Classification => {
                let mut dims = vec![1usize];
                dims.extend_from_slice(&arch.hidden);
                dims.push(n_states);
                let mut acts = vec![Activation::Sigmoid];
                for _ in 1..arch.hidden.len() {
                    acts.push(Activation::Relu);
                }
                acts.push(Activation::Identity);
                Head::Classification(Mlp::new(&mut params, "lik", &dims, &acts))
            }
            HeadKind::MixtureDensity => {
                Head::MixtureDensity(MdnTable::new(&mut params, "lik", n_states, arch.n_components))
            }
        };
        Ok(LikelihoodModel {
            head,
            params,
            constellation: constellation.clone(),
            memory,
            arch: arch.clone(),
        })
    }

    pub fn head_kind(&self) -> HeadKind {
        match &self.head {
            Head::Classification(_) => HeadKind::Classification,
            Head::MixtureDensity(_) => HeadKind::MixtureDensity,
        }
    }

    pub fn n_states(&self) -> usize {
        self.constellation.size().pow(self.memory as u32)
    }

    pub fn trellis(&self) -> Result<Trellis> {
        Trellis::new(self.constellation.size(), self.memory)
    }

    /// Learned log-likelihood for every state at one observation.
    ///
    /// Classification head: log P̂(s̄ | y) + L·ln M (the Bayes inversion
    /// with the output marginal fixed to one; the additive constant is
    /// irrelevant to the recursions but keeps values interpretable).
    /// Mixture head: the learned log-density per state.
    pub fn loglik_row(&self, y: f64) -> Vec<f64> {
        match &self.head {
            Head::Classification(mlp) => {
                let logits = mlp.infer(&self.params, &[y]);
                let log_post = log_softmax(&logits);
                let shift = self.memory as f64 * (self.constellation.size() as f64).ln();
                log_post.into_iter().map(|v| v + shift).collect()
            }
            Head::MixtureDensity(table) => (0..self.n_states())
                .map(|s| table.log_density(&self.params, s, y))
                .collect(),
        }
    }

    /// Rows for a whole block.
    pub fn loglik_rows(&self, ys: &[f64]) -> Vec<Vec<f64>> {
        ys.iter().map(|&y| self.loglik_row(y)).collect()
    }
}

/// Train a likelihood model on a state-labeled dataset.
pub fn likelihood_train(
    ds: &FmDataset,
    constellation: &Constellation,
    memory: usize,
    head: HeadKind,
    arch: &LikelihoodArch,
    cfg: &TrainConfig,
) -> Result<(LikelihoodModel, Vec<f64>)> {
    if ds.is_empty() {
        return Err(Error::Domain("likelihood_train: empty dataset".into()));
    }
    let mut model = LikelihoodModel::build(constellation, memory, head, arch, cfg.seed)?;
    let n_states = model.n_states();
    if let Some(&bad) = ds.states.iter().find(|&&s| s >= n_states) {
        return Err(Error::Domain(format!(
            "likelihood_train: state label {bad} out of range for {n_states} states"
        )));
    }
    let trace = match model.head.clone() {
        Head::Classification(mlp) => train(&mut model.params, ds.len(), cfg, |g, ps, idx| {
            let x = g.input(vec![ds.obs[idx]]);
            let logits = mlp.forward(g, ps, x)?;
            Ok(g.cross_entropy_logits(logits, ds.states[idx]))
        })?,
        Head::MixtureDensity(table) => train(&mut model.params, ds.len(), cfg, |g, ps, idx| {
            table.build_nll(g, ps, ds.states[idx], ds.obs[idx])
        })?,
    };
    Ok((model, trace))
}

/// Viterbi detection with the learned likelihood in place of the exact one.
pub fn viterbinet_detect(model: &LikelihoodModel, ys: &[f64]) -> Result<Vec<usize>> {
    let tr = model.trellis()?;
    let rows = model.loglik_rows(ys);
    viterbi(&tr, ys.len(), |i, s| rows[i][s])
}

/// BCJR detection with the learned function node.
pub fn bcjrnet_detect(model: &LikelihoodModel, ys: &[f64]) -> Result<BcjrOutput> {
    let tr = model.trellis()?;
    let rows = model.loglik_rows(ys);
    bcjr(&tr, ys.len(), |i, s| rows[i][s])
}
