//! Sequence detection over finite-memory channels: the Viterbi recursion,
//! the BCJR forward/backward message passing, the stationary function
//! node combining likelihood and state-transition structure, and
//! exhaustive oracles for both.
//!
//! A trellis state is the tuple of the L most recent symbols,
//! [s_{i−L+1}, …, s_i]. States carry a canonical integer index that is
//! little-endian in symbol indices with the newest symbol in the lowest
//! digit. State s̄_i can follow s̄_{i−1} exactly when the first L−1
//! entries of s̄_i equal the last L−1 entries of s̄_{i−1}.
//!
//! Detection starts from the all-padding state (pre-history symbols are
//! pinned to the first constellation point), matching how the channel
//! simulators and dataset labels treat block edges. Tie-breaking is
//! uniform everywhere: the lowest state or symbol index wins.

use crate::error::Error;
use crate::numkit::PmfVec;
use crate::Result;

/// Canonical index of a state tuple given oldest → newest symbol indices.
pub fn state_index(m: usize, symbols_oldest_first: &[usize]) -> usize {
    symbols_oldest_first.iter().fold(0, |acc, &s| acc * m + s)
}

/// A length-L state over an M-ary alphabet: tuple plus canonical index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrellisState {
    pub index: usize,
    /// Symbol indices ordered oldest → newest.
    pub symbols: Vec<usize>,
}

/// Trellis geometry for an M-ary alphabet with memory L.
#[derive(Debug, Clone)]
pub struct Trellis {
    m: usize,
    memory: usize,
    n_states: usize,
    /// M^{L−1}; predecessors of s are (s / M) + j · carry for j < M.
    carry: usize,
}

impl Trellis {
    pub fn new(m: usize, memory: usize) -> Result<Self> {
        if !(2..=u16::MAX as usize).contains(&m) {
            return Err(Error::Domain("trellis: alphabet size must be in [2, 65535]".into()));
        }
        if memory < 1 {
            return Err(Error::Domain("trellis: memory must be ≥ 1".into()));
        }
        let n_states = m
            .checked_pow(memory as u32)
            .filter(|&n| n <= 1 << 24)
            .ok_or_else(|| Error::TooLarge(format!("M^L = {m}^{memory} states")))?;
        Ok(Trellis {
            m,
            memory,
            n_states,
            carry: n_states / m,
        })
    }

    pub fn alphabet(&self) -> usize {
        self.m
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// The all-padding initial state.
    pub fn pad_state(&self) -> usize {
        0
    }

    /// Newest symbol of a state.
    pub fn newest_symbol(&self, state: usize) -> usize {
        state % self.m
    }

    /// State reached from `state` when symbol `sym` is transmitted.
    pub fn shift(&self, state: usize, sym: usize) -> usize {
        sym + self.m * (state % self.carry)
    }

    /// Whether `next` can follow `prev` in one step.
    pub fn is_shift_pair(&self, prev: usize, next: usize) -> bool {
        next / self.m == prev % self.carry
    }

    /// The M predecessors of a state, in increasing index order.
    pub fn predecessors(&self, state: usize) -> impl Iterator<Item = usize> + '_ {
        let base = state / self.m;
        let carry = self.carry;
        (0..self.m).map(move |j| base + j * carry)
    }

    /// Rich view of a state index.
    pub fn state(&self, index: usize) -> TrellisState {
        let mut symbols = vec![0usize; self.memory];
        let mut rest = index;
        for j in (0..self.memory).rev() {
            symbols[j] = rest % self.m;
            rest /= self.m;
        }
        TrellisState { index, symbols }
    }
}

/// Factor-graph function node: (1/M) · p(y | s̄_next) when `next` is a
/// one-step shift of `prev`, and 0 otherwise. `loglik_next` is
/// log p(y | s̄_next).
pub fn function_node(trellis: &Trellis, loglik_next: f64, next: usize, prev: usize) -> f64 {
    if trellis.is_shift_pair(prev, next) {
        loglik_next.exp() / trellis.alphabet() as f64
    } else {
        0.0
    }
}

/// Maximum-likelihood sequence detection by the Viterbi recursion.
///
/// `loglik(i, state)` must return log p(y_i | s̄ = state) for
/// i = 0..t_len. Returns the symbol-index sequence minimizing the total
/// negative log-likelihood, starting from the all-padding state.
pub fn viterbi(
    trellis: &Trellis,
    t_len: usize,
    loglik: impl Fn(usize, usize) -> f64,
) -> Result<Vec<usize>> {
    viterbi_with_cost(trellis, t_len, loglik).map(|(seq, _)| seq)
}

/// As [`viterbi`], also returning the optimal path cost
/// Σ_i −log p(y_i | s̄_i).
pub fn viterbi_with_cost(
    trellis: &Trellis,
    t_len: usize,
    loglik: impl Fn(usize, usize) -> f64,
) -> Result<(Vec<usize>, f64)> {
    if t_len == 0 {
        return Err(Error::Domain("viterbi: empty block".into()));
    }
    let n = trellis.n_states();
    let mut cost = vec![f64::INFINITY; n];
    cost[trellis.pad_state()] = 0.0;
    let mut next_cost = vec![f64::INFINITY; n];
    // winning-predecessor ordinal (j in predecessors()) per (index, state)
    let mut backptr: Vec<u16> = Vec::with_capacity(t_len * n);

    for i in 0..t_len {
        for s in 0..n {
            let mut best = f64::INFINITY;
            let mut best_ord = 0u16;
            for (j, p) in trellis.predecessors(s).enumerate() {
                if cost[p] < best {
                    best = cost[p];
                    best_ord = j as u16;
                }
            }
            if best.is_finite() {
                let ll = loglik(i, s);
                if ll.is_nan() {
                    return Err(Error::NanLikelihood { index: i });
                }
                next_cost[s] = best - ll;
            } else {
                next_cost[s] = f64::INFINITY;
            }
            backptr.push(best_ord);
        }
        std::mem::swap(&mut cost, &mut next_cost);
    }

    let mut best_state = 0usize;
    for s in 1..n {
        if cost[s] < cost[best_state] {
            best_state = s;
        }
    }
    if !cost[best_state].is_finite() {
        return Err(Error::Domain("viterbi: no reachable final state".into()));
    }

    let carry = n / trellis.alphabet();
    let mut seq = vec![0usize; t_len];
    let mut s = best_state;
    for i in (0..t_len).rev() {
        seq[i] = trellis.newest_symbol(s);
        s = s / trellis.alphabet() + backptr[i * n + s] as usize * carry;
    }
    Ok((seq, cost[best_state]))
}

/// Output of the BCJR detector.
#[derive(Debug, Clone)]
pub struct BcjrOutput {
    /// Per-index posterior over the symbol alphabet.
    pub marginals: Vec<PmfVec>,
    /// Per-index MAP decision (argmax of the marginal, lowest index wins).
    pub decisions: Vec<usize>,
}

/// Symbol-wise MAP detection by forward/backward message passing.
///
/// Messages are kept in the linear domain and rescaled to sum to one at
/// every index; the per-index marginal is invariant to any positive
/// per-index scaling of the function-node values, so the likelihood rows
/// are shifted by their maximum before exponentiation.
pub fn bcjr(
    trellis: &Trellis,
    t_len: usize,
    loglik: impl Fn(usize, usize) -> f64,
) -> Result<BcjrOutput> {
    if t_len == 0 {
        return Err(Error::Domain("bcjr: empty block".into()));
    }
    let n = trellis.n_states();
    let m = trellis.alphabet();
    let inv_m = 1.0 / m as f64;

    // Scaled likelihood weights w_i(s) ∝ p(y_i | s̄ = s) for one index,
    // recomputed per pass into `scratch`; the max-shift is deterministic,
    // so both passes see identical rows.
    let fill_row = |i: usize, scratch: &mut Vec<f64>| -> Result<()> {
        scratch.clear();
        let mut row_max = f64::NEG_INFINITY;
        for s in 0..n {
            let ll = loglik(i, s);
            if ll.is_nan() {
                return Err(Error::NanLikelihood { index: i });
            }
            scratch.push(ll);
            row_max = row_max.max(ll);
        }
        if row_max == f64::NEG_INFINITY {
            return Err(Error::ZeroMessage { index: i });
        }
        for slot in scratch.iter_mut() {
            *slot = (*slot - row_max).exp();
        }
        Ok(())
    };

    // Backward recursion; the boundary message at the final index is
    // all-ones (scaled to a distribution). Rows are pushed newest-edge
    // first: beta_rev row r holds the message arriving at edge T−r.
    let mut beta_rev: Vec<f64> = Vec::with_capacity((t_len + 1) * n);
    beta_rev.extend(std::iter::repeat(1.0 / n as f64).take(n));
    let mut w_row: Vec<f64> = Vec::with_capacity(n);
    for i in (0..t_len).rev() {
        fill_row(i, &mut w_row)?;
        let prev_off = beta_rev.len() - n;
        let mut sum = 0.0;
        for p in 0..n {
            let mut acc = 0.0;
            for sym in 0..m {
                let succ = trellis.shift(p, sym);
                acc += w_row[succ] * beta_rev[prev_off + succ];
            }
            let v = acc * inv_m;
            sum += v;
            beta_rev.push(v);
        }
        if sum <= 0.0 {
            return Err(Error::ZeroMessage { index: i });
        }
        let new_off = beta_rev.len() - n;
        for slot in beta_rev[new_off..].iter_mut() {
            *slot /= sum;
        }
    }

    // Forward recursion from the padding state, streaming each per-index
    // marginal as soon as the forward message is available.
    let mut fwd = vec![0.0f64; n];
    let mut fwd_next = vec![0.0f64; n];
    fwd[trellis.pad_state()] = 1.0;
    let mut marginals = Vec::with_capacity(t_len);
    let mut decisions = Vec::with_capacity(t_len);
    for i in 0..t_len {
        fill_row(i, &mut w_row)?;
        let mut sum = 0.0;
        for (s, slot) in fwd_next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in trellis.predecessors(s) {
                acc += fwd[p];
            }
            *slot = acc * inv_m * w_row[s];
            sum += *slot;
        }
        if sum <= 0.0 {
            return Err(Error::ZeroMessage { index: i });
        }
        for slot in fwd_next.iter_mut() {
            *slot /= sum;
        }
        std::mem::swap(&mut fwd, &mut fwd_next);

        // message at edge i+1 sits at reversed row T−(i+1)
        let beta = &beta_rev[(t_len - i - 1) * n..(t_len - i) * n];
        let mut sym_mass = vec![0.0f64; m];
        for s in 0..n {
            sym_mass[trellis.newest_symbol(s)] += fwd[s] * beta[s];
        }
        let pmf =
            PmfVec::from_unnormalized(sym_mass).map_err(|_| Error::ZeroMessage { index: i })?;
        decisions.push(pmf.argmax());
        marginals.push(pmf);
    }
    Ok(BcjrOutput {
        marginals,
        decisions,
    })
}

const BRUTE_FORCE_LIMIT: u64 = 1 << 20;

fn check_enumeration_size(m: usize, t_len: usize) -> Result<u64> {
    let mut total: u64 = 1;
    for _ in 0..t_len {
        total = total
            .checked_mul(m as u64)
            .filter(|&v| v <= BRUTE_FORCE_LIMIT)
            .ok_or_else(|| {
                Error::TooLarge(format!("M^T = {m}^{t_len} exceeds 2^20 sequences"))
            })?;
    }
    Ok(total)
}

fn seq_symbol(seq_idx: u64, m: usize, i: usize) -> usize {
    ((seq_idx / (m as u64).pow(i as u32)) % m as u64) as usize
}

fn sequence_cost(
    trellis: &Trellis,
    seq_idx: u64,
    t_len: usize,
    loglik: &impl Fn(usize, usize) -> f64,
) -> f64 {
    let mut state = trellis.pad_state();
    let mut cost = 0.0;
    for i in 0..t_len {
        state = trellis.shift(state, seq_symbol(seq_idx, trellis.alphabet(), i));
        cost -= loglik(i, state);
    }
    cost
}

/// Exhaustive maximum-likelihood sequence search: enumerates all M^T
/// symbol sequences and returns the minimizer of Σ_i −log p(y_i | s̄_i)
/// with its cost. Refuses instances with more than 2^20 sequences.
pub fn bruteforce_seq_ml(
    trellis: &Trellis,
    t_len: usize,
    loglik: impl Fn(usize, usize) -> f64,
) -> Result<(Vec<usize>, f64)> {
    let total = check_enumeration_size(trellis.alphabet(), t_len)?;
    let mut best_idx = 0u64;
    let mut best_cost = f64::INFINITY;
    for idx in 0..total {
        let c = sequence_cost(trellis, idx, t_len, &loglik);
        if c < best_cost {
            best_cost = c;
            best_idx = idx;
        }
    }
    if !best_cost.is_finite() {
        return Err(Error::Domain("bruteforce_seq_ml: all sequences impossible".into()));
    }
    let seq = (0..t_len)
        .map(|i| seq_symbol(best_idx, trellis.alphabet(), i))
        .collect();
    Ok((seq, best_cost))
}

/// Exhaustive symbol-wise MAP: sums the joint channel factorization over
/// all M^T sequences and returns the per-index symbol posteriors.
pub fn bruteforce_symbol_map(
    trellis: &Trellis,
    t_len: usize,
    loglik: impl Fn(usize, usize) -> f64,
) -> Result<Vec<PmfVec>> {
    let total = check_enumeration_size(trellis.alphabet(), t_len)?;
    let m = trellis.alphabet();
    let mut costs = vec![0.0f64; total as usize];
    let mut min_cost = f64::INFINITY;
    for idx in 0..total {
        let c = sequence_cost(trellis, idx, t_len, &loglik);
        costs[idx as usize] = c;
        min_cost = min_cost.min(c);
    }
    if !min_cost.is_finite() {
        return Err(Error::Domain(
            "bruteforce_symbol_map: all sequences impossible".into(),
        ));
    }
    let mut mass = vec![0.0f64; t_len * m];
    for idx in 0..total {
        let wgt = (min_cost - costs[idx as usize]).exp();
        if wgt == 0.0 {
            continue;
        }
        for i in 0..t_len {
            mass[i * m + seq_symbol(idx, m, i)] += wgt;
        }
    }
    (0..t_len)
        .map(|i| {
            PmfVec::from_unnormalized(mass[i * m..(i + 1) * m].to_vec())
                .map_err(|_| Error::ZeroMessage { index: i })
        })
        .collect()
}
