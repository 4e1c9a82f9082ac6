//! Labeled dataset generation and CSV import/export.

use std::io::{BufRead, Write};

use super::{Constellation, FmChannelSpec, MimoChannelSpec, PAD_SYMBOL};
use crate::error::Error;
use crate::numkit::RngStream;
use crate::trellis::state_index;
use crate::Result;

/// Labeled samples from a finite-memory channel: i.i.d. uniform symbols,
/// channel outputs, and the per-sample trellis state index
/// [s_{i−L+1}, …, s_i] under the pre-history padding convention.
#[derive(Debug, Clone)]
pub struct FmDataset {
    pub block_len: usize,
    pub n_blocks: usize,
    /// Symbol indices, flattened block-major.
    pub symbols: Vec<usize>,
    /// Trellis state index per sample.
    pub states: Vec<usize>,
    /// Channel outputs per sample.
    pub obs: Vec<f64>,
}

impl FmDataset {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Observations of one block.
    pub fn block_obs(&self, b: usize) -> &[f64] {
        &self.obs[b * self.block_len..(b + 1) * self.block_len]
    }

    /// Symbols of one block.
    pub fn block_symbols(&self, b: usize) -> &[usize] {
        &self.symbols[b * self.block_len..(b + 1) * self.block_len]
    }

    /// Append another dataset with the same block length.
    pub fn extend(&mut self, other: FmDataset) -> Result<()> {
        if other.block_len != self.block_len {
            return Err(Error::Dim("FmDataset::extend: block length mismatch".into()));
        }
        self.n_blocks += other.n_blocks;
        self.symbols.extend(other.symbols);
        self.states.extend(other.states);
        self.obs.extend(other.obs);
        Ok(())
    }

    /// CSV with header `block,i,s,state_index,y`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "block,i,s,state_index,y")?;
        for b in 0..self.n_blocks {
            for i in 0..self.block_len {
                let t = b * self.block_len + i;
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    b,
                    i + 1,
                    self.symbols[t],
                    self.states[t],
                    self.obs[t]
                )?;
            }
        }
        Ok(())
    }

    /// Parse the CSV format written by [`FmDataset::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut symbols = Vec::new();
        let mut states = Vec::new();
        let mut obs = Vec::new();
        let mut block_len = 0usize;
        let mut n_blocks = 0usize;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if lineno == 0 {
                if line.trim() != "block,i,s,state_index,y" {
                    return Err(Error::Parse(format!("unexpected dataset header: {line}")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 {
                return Err(Error::Parse(format!("line {}: expected 5 columns", lineno + 1)));
            }
            let parse_usize = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            let b = parse_usize(cols[0])?;
            let i = parse_usize(cols[1])?;
            symbols.push(parse_usize(cols[2])?);
            states.push(parse_usize(cols[3])?);
            obs.push(
                cols[4]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?,
            );
            n_blocks = n_blocks.max(b + 1);
            block_len = block_len.max(i);
        }
        if symbols.is_empty() {
            return Err(Error::Parse("dataset file has no rows".into()));
        }
        if block_len * n_blocks != symbols.len() {
            return Err(Error::Parse("dataset rows do not form complete blocks".into()));
        }
        Ok(FmDataset {
            block_len,
            n_blocks,
            symbols,
            states,
            obs,
        })
    }
}

/// Generate `n_blocks` blocks of `block_len` i.i.d. uniform symbols and
/// their channel outputs, with per-sample state labels.
pub fn gen_fm_dataset(
    spec: &FmChannelSpec,
    block_len: usize,
    n_blocks: usize,
    rng: &mut RngStream,
) -> Result<FmDataset> {
    if block_len == 0 || n_blocks == 0 {
        return Err(Error::Domain("dataset must have at least one sample".into()));
    }
    let l = spec.memory();
    let m = spec.constellation.size();
    let mut symbols = Vec::with_capacity(block_len * n_blocks);
    let mut states = Vec::with_capacity(block_len * n_blocks);
    let mut obs = Vec::with_capacity(block_len * n_blocks);
    for _ in 0..n_blocks {
        let block: Vec<usize> = (0..block_len).map(|_| spec.constellation.draw(rng)).collect();
        let ys = spec.sample(&block, rng)?;
        let mut state = vec![PAD_SYMBOL; l];
        for (&s, y) in block.iter().zip(ys) {
            state.rotate_left(1);
            state[l - 1] = s;
            symbols.push(s);
            states.push(state_index(m, &state));
            obs.push(y);
        }
    }
    Ok(FmDataset {
        block_len,
        n_blocks,
        symbols,
        states,
        obs,
    })
}

/// Labeled i.i.d. samples from a flat MIMO channel.
#[derive(Debug, Clone)]
pub struct MimoDataset {
    pub n_users: usize,
    pub n_rx: usize,
    pub n_samples: usize,
    /// Constellation size, kept for the joint symbol index.
    pub m: usize,
    /// Symbol indices, flattened sample-major (K per sample).
    pub symbols: Vec<usize>,
    /// Channel outputs, flattened sample-major (N per sample).
    pub obs: Vec<f64>,
}

impl MimoDataset {
    pub fn sym_row(&self, t: usize) -> &[usize] {
        &self.symbols[t * self.n_users..(t + 1) * self.n_users]
    }

    pub fn obs_row(&self, t: usize) -> &[f64] {
        &self.obs[t * self.n_rx..(t + 1) * self.n_rx]
    }

    pub fn extend(&mut self, other: MimoDataset) -> Result<()> {
        if other.n_users != self.n_users || other.n_rx != self.n_rx {
            return Err(Error::Dim("MimoDataset::extend: shape mismatch".into()));
        }
        self.n_samples += other.n_samples;
        self.symbols.extend(other.symbols);
        self.obs.extend(other.obs);
        Ok(())
    }

    /// CSV with header `block,i,s_1..s_K,state_index,y_1..y_N`; each
    /// sample is its own block, `state_index` is the joint symbol index.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        write!(w, "block,i")?;
        for k in 0..self.n_users {
            write!(w, ",s_{}", k + 1)?;
        }
        write!(w, ",state_index")?;
        for j in 0..self.n_rx {
            write!(w, ",y_{}", j + 1)?;
        }
        writeln!(w)?;
        for t in 0..self.n_samples {
            write!(w, "{},1", t)?;
            let sym = self.sym_row(t);
            for s in sym {
                write!(w, ",{s}")?;
            }
            // joint index: user 1 in the lowest digit
            let joint: usize = sym.iter().rev().fold(0, |acc, &s| acc * self.m + s);
            write!(w, ",{joint}")?;
            for y in self.obs_row(t) {
                write!(w, ",{y}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

impl MimoDataset {
    /// Parse the CSV format written by [`MimoDataset::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty dataset file".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        let n_users = cols.iter().filter(|c| c.starts_with("s_")).count();
        let n_rx = cols.iter().filter(|c| c.starts_with("y_")).count();
        if n_users == 0 || n_rx == 0 || cols.first() != Some(&"block") {
            return Err(Error::Parse(format!("unexpected dataset header: {header}")));
        }
        let mut symbols = Vec::new();
        let mut obs = Vec::new();
        let mut n_samples = 0usize;
        let mut max_sym = 0usize;
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 + n_users + n_rx {
                return Err(Error::Parse(format!(
                    "line {}: expected {} columns",
                    lineno + 2,
                    3 + n_users + n_rx
                )));
            }
            for f in &fields[2..2 + n_users] {
                let s = f
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?;
                max_sym = max_sym.max(s);
                symbols.push(s);
            }
            for f in &fields[3 + n_users..] {
                obs.push(
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?,
                );
            }
            n_samples += 1;
        }
        if n_samples == 0 {
            return Err(Error::Parse("dataset file has no rows".into()));
        }
        Ok(MimoDataset {
            n_users,
            n_rx,
            n_samples,
            m: (max_sym + 1).max(2),
            symbols,
            obs,
        })
    }
}

/// Generate i.i.d. uniform symbol vectors and their channel outputs.
pub fn gen_mimo_dataset(
    spec: &MimoChannelSpec,
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<MimoDataset> {
    if n_samples == 0 {
        return Err(Error::Domain("dataset must have at least one sample".into()));
    }
    let k = spec.n_users();
    let mut symbols = Vec::with_capacity(n_samples * k);
    let mut obs = Vec::with_capacity(n_samples * spec.n_rx());
    for _ in 0..n_samples {
        let s: Vec<usize> = (0..k).map(|_| spec.constellation.draw(rng)).collect();
        let y = spec.sample(&s, rng)?;
        symbols.extend_from_slice(&s);
        obs.extend_from_slice(&y);
    }
    Ok(MimoDataset {
        n_users: k,
        n_rx: spec.n_rx(),
        n_samples,
        m: spec.constellation.size(),
        symbols,
        obs,
    })
}

/// Read a tap-vector file: one decimal real per line, blank lines and
/// `#` comments ignored.
pub fn read_tap_file<R: BufRead>(r: R) -> Result<Vec<f64>> {
    let mut taps = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        taps.push(
            t.parse::<f64>()
                .map_err(|e| Error::Parse(format!("tap file line {}: {e}", lineno + 1)))?,
        );
    }
    if taps.is_empty() {
        return Err(Error::Parse("tap file has no entries".into()));
    }
    Ok(taps)
}

/// Uniform-symbol empirical-frequency check used by tests; exposed so
/// the CLI oracle command can reuse it.
pub fn symbol_frequencies(symbols: &[usize], cons: &Constellation) -> Vec<f64> {
    let mut counts = vec![0usize; cons.size()];
    for &s in symbols {
        counts[s] += 1;
    }
    counts
        .into_iter()
        .map(|c| c as f64 / symbols.len() as f64)
        .collect()
}
