//! Experiment engine: declarative sweep specs, per-cell training and
//! SER evaluation, checkpoint persistence, and result emission.

mod checkpoint;
mod detectors;
mod emit;
mod spec;
mod sweep;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_as, save_checkpoint, Checkpoint, FORMAT_VERSION,
};
pub use detectors::{
    build_fm_detector, build_mimo_detector, fm_training_set, mimo_training_set, ser_eval_fm,
    ser_eval_mimo, train_config, DetectorInstance,
};
pub use emit::{emit_results, write_csv, write_jsonl, EmitFormat, CSV_HEADER};
pub use spec::{detector_id, ChannelConfig, ConstellationName, ExperimentSpec, TrainOverrides};
pub use sweep::{run_single_cell, run_sweep, ResultRecord};
