//! Sweep execution: a worker pool over independent cells with
//! coordinate-derived random streams.

use rayon::prelude::*;

use crate::channels::{perturb_h, perturb_taps, FmChannelSpec, MimoChannelSpec};
use crate::numkit::{derive_stream, RngStream};
use crate::Result;

use super::detectors::{
    build_fm_detector, build_mimo_detector, ser_eval_fm, ser_eval_mimo,
};
use super::spec::{detector_id, ExperimentSpec};

/// One row of sweep output.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub detector: String,
    pub snr_db: f64,
    pub sigma_e2: f64,
    /// γ of the tap profile for ISI cells; the H index for MIMO cells.
    pub gamma: f64,
    pub symbols: u64,
    pub errors: u64,
    pub ser: f64,
    pub wall_time_s: f64,
    pub seed: u64,
}

struct Cell {
    snr_idx: usize,
    gamma_idx: usize,
    detector: String,
    det_id: u64,
    trial: u64,
}

/// Derive the random stream id of one cell from the master seed and the
/// cell coordinates, so adding detectors or grid points never perturbs
/// other cells' randomness.
fn cell_stream(exp: &ExperimentSpec, cell: &Cell) -> u64 {
    derive_stream(&[
        exp.master_seed,
        cell.snr_idx as u64,
        cell.gamma_idx as u64,
        cell.det_id,
        cell.trial,
    ])
}

// Sub-stream roles within a cell.
const SUB_PERTURB: u64 = 0;
const SUB_TRAIN_DATA: u64 = 1;
const SUB_TRAIN_SEED: u64 = 2;
const SUB_TEST: u64 = 3;

fn run_fm_cell(exp: &ExperimentSpec, cell: &Cell) -> Result<(u64, u64, f64)> {
    let stream = cell_stream(exp, cell);
    let root = RngStream::new(exp.master_seed, stream);
    let snr_db = exp.snr_db_grid[cell.snr_idx];
    let true_spec = exp.fm_channel(cell.gamma_idx, snr_db)?;
    let regime_spec = if exp.sigma_e2 > 0.0 {
        let mut rng = root.substream(SUB_PERTURB);
        FmChannelSpec {
            taps: perturb_taps(&true_spec.taps, exp.sigma_e2, &mut rng),
            ..true_spec.clone()
        }
    } else {
        true_spec.clone()
    };
    let mut data_rng = root.substream(SUB_TRAIN_DATA);
    let train_seed = derive_stream(&[stream, SUB_TRAIN_SEED]);
    let det = build_fm_detector(
        &cell.detector,
        exp,
        &true_spec,
        &regime_spec,
        &mut data_rng,
        train_seed,
    )?;
    let mut test_rng = root.substream(SUB_TEST);
    ser_eval_fm(&det, &true_spec, exp.test_symbols, exp.block_len, &mut test_rng)
}

fn run_mimo_cell(exp: &ExperimentSpec, cell: &Cell) -> Result<(u64, u64, f64)> {
    let stream = cell_stream(exp, cell);
    let root = RngStream::new(exp.master_seed, stream);
    let snr_db = exp.snr_db_grid[cell.snr_idx];
    let true_spec = exp.mimo_channel(snr_db)?;
    let regime_spec = if exp.sigma_e2 > 0.0 {
        let mut rng = root.substream(SUB_PERTURB);
        MimoChannelSpec {
            h: perturb_h(&true_spec.h, exp.sigma_e2, &mut rng),
            ..true_spec.clone()
        }
    } else {
        true_spec.clone()
    };
    let mut data_rng = root.substream(SUB_TRAIN_DATA);
    let train_seed = derive_stream(&[stream, SUB_TRAIN_SEED]);
    let det = build_mimo_detector(
        &cell.detector,
        exp,
        &true_spec,
        &regime_spec,
        &mut data_rng,
        train_seed,
    )?;
    let mut test_rng = root.substream(SUB_TEST);
    ser_eval_mimo(&det, &true_spec, exp.test_symbols, &mut test_rng)
}

/// Run every (SNR, γ/H, detector, trial) cell of the sweep.
///
/// Cells execute on a worker pool; each owns streams derived from its
/// coordinates, so the output is independent of scheduling. A failing
/// cell yields an error record (zero counts, NaN SER) rather than
/// aborting the sweep.
pub fn run_sweep(exp: &ExperimentSpec) -> Result<Vec<ResultRecord>> {
    exp.validate()?;
    let fm = exp.channel.is_fm();
    let mut cells = Vec::new();
    for snr_idx in 0..exp.snr_db_grid.len() {
        for gamma_idx in 0..exp.gamma_axis_len() {
            for name in &exp.detectors {
                for trial in 0..exp.trials {
                    cells.push(Cell {
                        snr_idx,
                        gamma_idx,
                        detector: name.clone(),
                        det_id: detector_id(name, fm)?,
                        trial,
                    });
                }
            }
        }
    }
    let records: Vec<ResultRecord> = cells
        .par_iter()
        .map(|cell| {
            let t0 = std::time::Instant::now();
            let outcome = if fm {
                run_fm_cell(exp, cell)
            } else {
                run_mimo_cell(exp, cell)
            };
            let (errors, symbols, ser) = match outcome {
                Ok(v) => v,
                Err(e) => {
                    eprintln!(
                        "sweep cell failed (snr={}, gamma_idx={}, detector={}, trial={}): {e}",
                        exp.snr_db_grid[cell.snr_idx], cell.gamma_idx, cell.detector, cell.trial
                    );
                    (0, 0, f64::NAN)
                }
            };
            ResultRecord {
                experiment: exp.id.clone(),
                detector: cell.detector.clone(),
                snr_db: exp.snr_db_grid[cell.snr_idx],
                sigma_e2: exp.sigma_e2,
                gamma: exp.gamma_value(cell.gamma_idx),
                symbols,
                errors,
                ser,
                wall_time_s: t0.elapsed().as_secs_f64(),
                seed: cell_stream(exp, cell),
            }
        })
        .collect();
    Ok(records)
}

/// Run the single cell named by the arguments; the CLI `eval` command.
pub fn run_single_cell(
    exp: &ExperimentSpec,
    detector: &str,
    snr_idx: usize,
    gamma_idx: usize,
) -> Result<ResultRecord> {
    let fm = exp.channel.is_fm();
    let cell = Cell {
        snr_idx,
        gamma_idx,
        detector: detector.to_string(),
        det_id: detector_id(detector, fm)?,
        trial: 0,
    };
    let t0 = std::time::Instant::now();
    let (errors, symbols, ser) = if fm {
        run_fm_cell(exp, &cell)?
    } else {
        run_mimo_cell(exp, &cell)?
    };
    Ok(ResultRecord {
        experiment: exp.id.clone(),
        detector: detector.to_string(),
        snr_db: exp.snr_db_grid[snr_idx],
        sigma_e2: exp.sigma_e2,
        gamma: exp.gamma_value(gamma_idx),
        symbols,
        errors,
        ser,
        wall_time_s: t0.elapsed().as_secs_f64(),
        seed: cell_stream(exp, &cell),
    })
}
