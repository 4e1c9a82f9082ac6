//! Benchmark harness CLI: dataset generation, detector training,
//! detection from checkpoints, single-cell evaluation, full sweeps, and
//! brute-force oracle checks.
//!
//! Exit code is 0 on success; every failure prints one machine-readable
//! JSON line `{"error": "..."}` to stderr and exits nonzero.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};

use symdet::channels::{gen_fm_dataset, gen_mimo_dataset, FmDataset, MimoDataset};
use symdet::harness::{
    build_fm_detector, build_mimo_detector, emit_results, load_checkpoint, run_single_cell,
    run_sweep, save_checkpoint, DetectorInstance, EmitFormat, ExperimentSpec,
};
use symdet::numkit::{derive_stream, RngStream};
use symdet::trellis::{bcjr, bruteforce_seq_ml, bruteforce_symbol_map, viterbi_with_cost, Trellis};

#[derive(Parser)]
#[command(name = "symdet", version, about = "Symbol-detection benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled dataset CSV from an experiment's channel.
    GenData {
        /// Experiment spec JSON file.
        #[arg(long)]
        spec: PathBuf,
        /// SNR in dB (ρ for ISI channels, 1/σ_w² for MIMO).
        #[arg(long)]
        snr_db: f64,
        /// Tap-decay γ (ISI channels; defaults to the spec's first grid entry).
        #[arg(long)]
        gamma: Option<f64>,
        /// Number of samples (defaults to the spec's train_size).
        #[arg(long)]
        samples: Option<usize>,
        /// Block length for ISI datasets (defaults to the spec's block_len).
        #[arg(long)]
        block_len: Option<usize>,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a learned detector and write its checkpoint.
    Train {
        #[arg(long)]
        spec: PathBuf,
        /// One of: viterbinet, bcjrnet, deepsic-seq, deepsic-e2e, detnet, sbrnn.
        #[arg(long)]
        detector: String,
        #[arg(long)]
        snr_db: f64,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Checkpoint output path.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Detect symbols in a dataset CSV using a trained checkpoint.
    Detect {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Detector the checkpoint is expected to hold.
        #[arg(long)]
        detector: String,
        /// Input dataset CSV (as written by gen-data).
        #[arg(long = "in")]
        input: PathBuf,
        /// Decisions CSV output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate one detector at one grid point and report its SER.
    Eval {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        detector: String,
        #[arg(long)]
        snr_db: f64,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Optional results file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Run the full sweep described by an experiment spec.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Brute-force oracle checks on random instances.
    Oracle {
        /// Channel family: fm or mimo.
        #[arg(long, default_value = "fm")]
        family: String,
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                eprintln!("{}", serde_json::json!({ "error": e.to_string() }));
                std::process::exit(2);
            }
            // --help / --version
            print!("{e}");
            std::process::exit(0);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("{}", serde_json::json!({ "error": format!("{e:#}") }));
        std::process::exit(1);
    }
}

fn load_spec(path: &PathBuf, seed: Option<u64>) -> anyhow::Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::from_file(path)
        .with_context(|| format!("loading spec {}", path.display()))?;
    if let Some(s) = seed {
        spec.master_seed = s;
    }
    Ok(spec)
}

/// Narrow a spec to a single (SNR, γ) point so cell seeds are derived
/// from coordinate (0, 0).
fn narrow(spec: &mut ExperimentSpec, snr_db: f64, gamma: Option<f64>) {
    spec.snr_db_grid = vec![snr_db];
    if spec.channel.is_fm() {
        if let Some(g) = gamma {
            spec.gamma_grid = vec![g];
        } else if !spec.gamma_grid.is_empty() {
            spec.gamma_grid.truncate(1);
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData {
            spec,
            snr_db,
            gamma,
            samples,
            block_len,
            seed,
            out,
        } => {
            let mut exp = load_spec(&spec, seed)?;
            narrow(&mut exp, snr_db, gamma);
            let n = samples.unwrap_or(exp.train_size);
            let mut rng = RngStream::new(exp.master_seed, derive_stream(&[0x6461_7461]));
            let mut file = std::io::BufWriter::new(std::fs::File::create(&out)?);
            if exp.channel.is_fm() {
                let blk = block_len.unwrap_or(exp.block_len);
                let ch = exp.fm_channel(0, snr_db)?;
                let ds = gen_fm_dataset(&ch, blk, n.div_ceil(blk), &mut rng)?;
                ds.write_csv(&mut file)?;
            } else {
                let ch = exp.mimo_channel(snr_db)?;
                let ds = gen_mimo_dataset(&ch, n, &mut rng)?;
                ds.write_csv(&mut file)?;
            }
            file.flush()?;
            println!(
                "{}",
                serde_json::json!({ "written": out.display().to_string(), "samples": n })
            );
            Ok(())
        }
        Command::Train {
            spec,
            detector,
            snr_db,
            gamma,
            seed,
            checkpoint,
        } => {
            let mut exp = load_spec(&spec, seed)?;
            narrow(&mut exp, snr_db, gamma);
            let stream = derive_stream(&[exp.master_seed, 0, 0]);
            let root = RngStream::new(exp.master_seed, stream);
            let mut data_rng = root.substream(1);
            let train_seed = derive_stream(&[stream, 2]);
            let inst = if exp.channel.is_fm() {
                let true_ch = exp.fm_channel(0, snr_db)?;
                build_fm_detector(&detector, &exp, &true_ch, &true_ch, &mut data_rng, train_seed)?
            } else {
                let true_ch = exp.mimo_channel(snr_db)?;
                build_mimo_detector(&detector, &exp, &true_ch, &true_ch, &mut data_rng, train_seed)?
            };
            let ckpt = inst
                .into_checkpoint()
                .ok_or_else(|| anyhow!("detector '{detector}' is model-based; nothing to train"))?;
            save_checkpoint(&checkpoint, &ckpt)?;
            println!(
                "{}",
                serde_json::json!({
                    "checkpoint": checkpoint.display().to_string(),
                    "kind": ckpt.kind()
                })
            );
            Ok(())
        }
        Command::Detect {
            checkpoint,
            detector,
            input,
            out,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let inst = DetectorInstance::from_checkpoint(ckpt, &detector)?;
            let text = std::fs::read(&input)?;
            let mut file = std::io::BufWriter::new(std::fs::File::create(&out)?);
            let (symbols, errors) = match &inst {
                DetectorInstance::DeepSic { .. } | DetectorInstance::DetNet { .. } => {
                    let ds = MimoDataset::read_csv(&text[..])?;
                    writeln!(file, "block,i,s_hat")?;
                    let mut errors = 0u64;
                    for t in 0..ds.n_samples {
                        let dec = inst.detect_mimo(ds.obs_row(t))?;
                        for (u, s_hat) in dec.iter().enumerate() {
                            writeln!(file, "{t},{},{s_hat}", u + 1)?;
                        }
                        errors += dec
                            .iter()
                            .zip(ds.sym_row(t))
                            .filter(|(a, b)| a != b)
                            .count() as u64;
                    }
                    ((ds.n_samples * ds.n_users) as u64, errors)
                }
                _ => {
                    let ds = FmDataset::read_csv(&text[..])?;
                    writeln!(file, "block,i,s_hat")?;
                    let mut errors = 0u64;
                    for b in 0..ds.n_blocks {
                        let dec = inst.detect_fm_block(ds.block_obs(b))?;
                        for (i, s_hat) in dec.iter().enumerate() {
                            writeln!(file, "{b},{},{s_hat}", i + 1)?;
                        }
                        errors += dec
                            .iter()
                            .zip(ds.block_symbols(b))
                            .filter(|(a, b)| a != b)
                            .count() as u64;
                    }
                    (ds.len() as u64, errors)
                }
            };
            file.flush()?;
            println!(
                "{}",
                serde_json::json!({
                    "decisions": out.display().to_string(),
                    "symbols": symbols,
                    "errors": errors,
                    "ser": errors as f64 / symbols as f64
                })
            );
            Ok(())
        }
        Command::Eval {
            spec,
            detector,
            snr_db,
            gamma,
            seed,
            out,
            format,
        } => {
            let mut exp = load_spec(&spec, seed)?;
            narrow(&mut exp, snr_db, gamma);
            let record = run_single_cell(&exp, &detector, 0, 0)?;
            println!("{}", serde_json::to_string(&record)?);
            if let Some(path) = out {
                let fmt: EmitFormat = format.parse()?;
                emit_results(std::slice::from_ref(&record), &path, fmt)?;
            }
            Ok(())
        }
        Command::Sweep {
            spec,
            out,
            format,
            seed,
        } => {
            let exp = load_spec(&spec, seed)?;
            let records = run_sweep(&exp)?;
            let fmt: EmitFormat = format.parse()?;
            emit_results(&records, &out, fmt)?;
            let failed = records.iter().filter(|r| r.ser.is_nan()).count();
            println!(
                "{}",
                serde_json::json!({
                    "out": out.display().to_string(),
                    "rows": records.len(),
                    "failed_cells": failed
                })
            );
            if failed > 0 {
                bail!("{failed} sweep cells failed");
            }
            Ok(())
        }
        Command::Oracle {
            family,
            instances,
            seed,
        } => match family.as_str() {
            "fm" => oracle_fm(instances, seed),
            "mimo" => oracle_mimo(instances, seed),
            other => bail!("unknown family '{other}' (fm|mimo)"),
        },
    }
}

/// Viterbi and BCJR against exhaustive search on random short blocks of
/// both ISI channel kinds.
fn oracle_fm(instances: usize, seed: u64) -> anyhow::Result<()> {
    use symdet::channels::{exp_decay_taps, Constellation, FmChannelSpec, FmKind};
    let mut rng = RngStream::new(seed, derive_stream(&[0x6f72_61]));
    let mut max_cost_err = 0.0f64;
    let mut max_marg_err = 0.0f64;
    for trial in 0..instances {
        let kind = if trial % 2 == 0 { FmKind::Awgn } else { FmKind::Poisson };
        let memory = 1 + trial % 3;
        let gamma = rng.uniform_in(0.1, 2.0);
        let rho = rng.uniform_in(0.5, 6.0);
        let cons = match kind {
            FmKind::Awgn => Constellation::bpsk(),
            FmKind::Poisson => Constellation::ook(),
        };
        let spec = FmChannelSpec::new(kind, exp_decay_taps(memory, gamma)?, rho, cons)?;
        let t_len = 1 + rng.index(8);
        let sym: Vec<usize> = (0..t_len).map(|_| rng.index(2)).collect();
        let ys = spec.sample(&sym, &mut rng)?;
        let tr = Trellis::new(2, memory)?;
        let ll = |i: usize, s: usize| spec.loglik(ys[i], &tr.state(s).symbols);
        let (_, vt_cost) = viterbi_with_cost(&tr, t_len, ll)?;
        let (_, bf_cost) = bruteforce_seq_ml(&tr, t_len, ll)?;
        max_cost_err = max_cost_err.max((vt_cost - bf_cost).abs());
        let out = bcjr(&tr, t_len, ll)?;
        let oracle = bruteforce_symbol_map(&tr, t_len, ll)?;
        for (a, b) in out.marginals.iter().zip(&oracle) {
            for s in 0..2 {
                max_marg_err = max_marg_err.max((a.get(s) - b.get(s)).abs());
            }
        }
    }
    let viterbi_ok = max_cost_err <= 1e-9;
    let bcjr_ok = max_marg_err <= 1e-9;
    println!(
        "oracle viterbi_vs_bruteforce: {} (instances={instances}, max_cost_err={max_cost_err:.2e})",
        if viterbi_ok { "ok" } else { "MISMATCH" }
    );
    println!(
        "oracle bcjr_vs_bruteforce: {} (instances={instances}, max_marginal_err={max_marg_err:.2e})",
        if bcjr_ok { "ok" } else { "MISMATCH" }
    );
    if !(viterbi_ok && bcjr_ok) {
        bail!("oracle mismatch");
    }
    Ok(())
}

/// Single-user SIC = MAP equality plus a SIC/MAP agreement smoke test.
fn oracle_mimo(instances: usize, seed: u64) -> anyhow::Result<()> {
    use symdet::channels::{build_spatial_h, Constellation, MimoChannelSpec, MimoKind};
    use symdet::mimo::{iterative_sic, mimo_map_bruteforce, SicConfig};
    let mut rng = RngStream::new(seed, derive_stream(&[0x6f72_62]));
    let single = MimoChannelSpec::new(
        MimoKind::Gaussian,
        build_spatial_h(2, 1),
        0.5,
        Constellation::bpsk(),
    )?;
    let mut single_ok = true;
    for _ in 0..instances {
        let s = [rng.index(2)];
        let y = single.sample(&s, &mut rng)?;
        let (_, hard) = iterative_sic(
            &y,
            &single.h,
            single.noise_var,
            &single.constellation,
            &SicConfig::default(),
        )?;
        let (map_s, _) = mimo_map_bruteforce(&y, &single)?;
        single_ok &= hard == map_s;
    }
    println!(
        "oracle sic_single_user_equals_map: {} (instances={instances})",
        if single_ok { "ok" } else { "MISMATCH" }
    );
    let spec = MimoChannelSpec::new(
        MimoKind::Gaussian,
        build_spatial_h(4, 4),
        10f64.powf(-1.2),
        Constellation::bpsk(),
    )?;
    let mut agree = 0usize;
    for _ in 0..instances {
        let s: Vec<usize> = (0..4).map(|_| rng.index(2)).collect();
        let y = spec.sample(&s, &mut rng)?;
        let (_, hard) = iterative_sic(
            &y,
            &spec.h,
            spec.noise_var,
            &spec.constellation,
            &SicConfig::default(),
        )?;
        let (map_s, _) = mimo_map_bruteforce(&y, &spec)?;
        if hard == map_s {
            agree += 1;
        }
    }
    let frac = agree as f64 / instances as f64;
    let agree_ok = frac >= 0.9;
    println!(
        "oracle sic_vs_map_agreement: {} (instances={instances}, agreement={frac:.3})",
        if agree_ok { "ok" } else { "LOW" }
    );
    if !(single_ok && agree_ok) {
        bail!("oracle mismatch");
    }
    Ok(())
}
