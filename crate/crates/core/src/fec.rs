//! Regular LDPC code with a sum-product (belief propagation) decoder.
//!
//! The parity-check matrix is built by random socket matching from a seed,
//! then repaired until it has no repeated edges and no 4-cycles. If the
//! result is rank deficient over GF(2) the construction is retried with the
//! next derived seed, so a given `(n, k, seed)` always yields the same code.
//! Codewords are systematic: the first `k` bits are the message.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
use crate::streams::{keyed_rng, SimRng};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FecError {
    #[error("expected {expected} bits, got {got}")]
    Length { expected: usize, got: usize },
    #[error("invalid code parameters: {0}")]
    Params(String),
    #[error("could not construct a full-rank 4-cycle-free matrix after {0} attempts")]
    Construction(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LdpcParams {
    pub n: usize,
    pub k: usize,
    pub column_weight: usize,
    pub row_weight: usize,
    pub seed: u64,
    pub max_iterations: u32,
}

impl Default for LdpcParams {
    fn default() -> Self {
        Self {
            n: 1024,
            k: 512,
            column_weight: 3,
            row_weight: 6,
            seed: 1,
            max_iterations: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeOutcome {
    Decoded { message: Vec<u8>, iterations: u32 },
    Failure { iterations: u32 },
}

impl DecodeOutcome {
    pub fn message(&self) -> Option<&[u8]> {
        match self {
            DecodeOutcome::Decoded { message, .. } => Some(message),
            DecodeOutcome::Failure { .. } => None,
        }
    }
}

/// Sparse parity-check structure in edge-list form.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Tanner {
    /// `check_start[c]..check_start[c+1]` indexes `check_vars`
    check_start: Vec<usize>,
    check_vars: Vec<usize>,
    /// edges grouped by variable: edge ids into the check-major edge list
    var_start: Vec<usize>,
    var_edges: Vec<usize>,
}

impl Tanner {
    fn from_rows(n: usize, rows: &[Vec<usize>]) -> Self {
        let mut check_start = vec![0];
        let mut check_vars = Vec::new();
        for r in rows {
            check_vars.extend_from_slice(r);
            check_start.push(check_vars.len());
        }
        let mut per_var: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (e, &v) in check_vars.iter().enumerate() {
            per_var[v].push(e);
        }
        let mut var_start = vec![0];
        let mut var_edges = Vec::new();
        for es in per_var {
            var_edges.extend(es);
            var_start.push(var_edges.len());
        }
        Self {
            check_start,
            check_vars,
            var_start,
            var_edges,
        }
    }

    fn checks(&self) -> usize {
        self.check_start.len() - 1
    }

    fn row(&self, c: usize) -> &[usize] {
        &self.check_vars[self.check_start[c]..self.check_start[c + 1]]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LdpcCode {
    params: LdpcParams,
    tanner: Tanner,
    /// parity bit `i` = XOR of message bits selected by `parity_rows[i]`
    parity_rows: Vec<Vec<u64>>,
    attempts: u32,
}

const MAX_ATTEMPTS: u32 = 64;

fn words(bits: usize) -> usize {
    bits.div_ceil(64)
}

impl LdpcCode {
    pub fn new(params: LdpcParams) -> Result<Self, FecError> {
        let LdpcParams {
            n,
            k,
            column_weight: wc,
            row_weight: wr,
            ..
        } = params;
        if n == 0 || k == 0 || k >= n || wc == 0 || wr == 0 || wr > n {
            return Err(FecError::Params(format!("n={n} k={k} wc={wc} wr={wr}")));
        }
        if (n * wc) % wr != 0 || n * wc / wr != n - k {
            return Err(FecError::Params(format!(
                "n·wc/wr must equal n−k (n={n}, k={k}, wc={wc}, wr={wr})"
            )));
        }
        if params.max_iterations == 0 {
            return Err(FecError::Params("max_iterations must be positive".into()));
        }
        for attempt in 0..MAX_ATTEMPTS {
            let mut rng = keyed_rng(&[0u8; 32], &[params.seed, attempt as u64, n as u64, k as u64]);
            let Some(rows) = build_rows(n, n - k, wc, wr, &mut rng) else {
                continue;
            };
            if let Some((perm, parity_rows)) = systematize(n, &rows) {
                // relabel variables so that message bits come first
                let mut inv = vec![0; n];
                for (new, &old) in perm.iter().enumerate() {
                    inv[old] = new;
                }
                let rows: Vec<Vec<usize>> = rows
                    .iter()
                    .map(|r| r.iter().map(|&v| inv[v]).collect())
                    .collect();
                return Ok(Self {
                    params,
                    tanner: Tanner::from_rows(n, &rows),
                    parity_rows,
                    attempts: attempt + 1,
                });
            }
        }
        Err(FecError::Construction(MAX_ATTEMPTS))
    }

    /// The default rate-1/2 (3,6)-regular code of length 1024.
    pub fn default_code(seed: u64) -> Self {
        Self::new(LdpcParams {
            seed,
            ..LdpcParams::default()
        })
        .expect("default parameters are valid")
    }

    pub fn params(&self) -> &LdpcParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn k(&self) -> usize {
        self.params.k
    }

    /// Construction attempts needed (1 when the first seed worked).
    pub fn construction_attempts(&self) -> u32 {
        self.attempts
    }

    /// Rows of the parity-check matrix as variable-index lists.
    pub fn check_rows(&self) -> Vec<Vec<usize>> {
        (0..self.tanner.checks())
            .map(|c| self.tanner.row(c).to_vec())
            .collect()
    }

    pub fn fec_encode(&self, message: &[u8]) -> Result<Vec<u8>, FecError> {
        if message.len() != self.k() {
            return Err(FecError::Length {
                expected: self.k(),
                got: message.len(),
            });
        }
        let mut packed = vec![0u64; words(self.k())];
        for (i, &b) in message.iter().enumerate() {
            if b & 1 == 1 {
                packed[i / 64] |= 1 << (i % 64);
            }
        }
        let mut word = Vec::with_capacity(self.n());
        word.extend(message.iter().map(|b| b & 1));
        for row in &self.parity_rows {
            let ones: u32 = row
                .iter()
                .zip(&packed)
                .map(|(a, b)| (a & b).count_ones())
                .sum();
            word.push((ones & 1) as u8);
        }
        Ok(word)
    }

    pub fn syndrome_ok(&self, word: &[u8]) -> bool {
        word.len() == self.n()
            && (0..self.tanner.checks()).all(|c| {
                self.tanner
                    .row(c)
                    .iter()
                    .fold(0u8, |acc, &v| acc ^ (word[v] & 1))
                    == 0
            })
    }

    /// Decodes hard bits received over a binary symmetric channel with
    /// crossover `crossover`; positions flagged in `erasures` carry no
    /// channel information.
    pub fn fec_decode(
        &self,
        received: &[u8],
        erasures: Option<&[bool]>,
        crossover: f64,
    ) -> Result<DecodeOutcome, FecError> {
        let mut dec = BpDecoder::<f64>::new(self);
        dec.decode(self, received, erasures, crossover)
    }
}

fn build_rows(n: usize, m: usize, wc: usize, wr: usize, rng: &mut SimRng) -> Option<Vec<Vec<usize>>> {
    let mut sockets: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, wc)).collect();
    sockets.shuffle(rng);
    let mut rows: Vec<Vec<usize>> = sockets.chunks(wr).map(<[usize]>::to_vec).collect();
    debug_assert_eq!(rows.len(), m);

    // edge swaps until no row repeats a variable and no two rows share two
    for _ in 0..200 {
        let bad = offending_edges(n, &rows);
        if bad.is_empty() {
            return Some(rows);
        }
        for (r, slot) in bad {
            let r2 = rng.gen_range(0..m);
            let slot2 = rng.gen_range(0..wr);
            if r2 == r {
                continue;
            }
            let (a, b) = (rows[r][slot], rows[r2][slot2]);
            if rows[r].contains(&b) || rows[r2].contains(&a) {
                continue;
            }
            rows[r][slot] = b;
            rows[r2][slot2] = a;
        }
    }
    None
}

/// Edges that sit on a repeated entry or a 4-cycle, as `(row, slot)`.
fn offending_edges(n: usize, rows: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let mut bad = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            if row[..i].contains(v) {
                bad.push((r, i));
            }
        }
    }
    let mut var_rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (r, row) in rows.iter().enumerate() {
        for &v in row {
            var_rows[v].push(r);
        }
    }
    // a 4-cycle is a pair of rows sharing two variables
    let mut seen = std::collections::HashMap::<(usize, usize), usize>::new();
    for (v, rs) in var_rows.iter().enumerate() {
        for i in 0..rs.len() {
            for j in i + 1..rs.len() {
                let key = (rs[i].min(rs[j]), rs[i].max(rs[j]));
                if key.0 == key.1 {
                    continue;
                }
                if let Some(&other) = seen.get(&key) {
                    if other != v {
                        let slot = rows[key.1].iter().position(|&x| x == v).unwrap();
                        bad.push((key.1, slot));
                    }
                } else {
                    seen.insert(key, v);
                }
            }
        }
    }
    bad
}

/// Gauss–Jordan elimination over GF(2). Returns the column permutation
/// (message columns first, then pivot columns in row order) and the dense
/// parity equations over the message columns, or `None` if rank deficient.
fn systematize(n: usize, rows: &[Vec<usize>]) -> Option<(Vec<usize>, Vec<Vec<u64>>)> {
    let m = rows.len();
    let w = words(n);
    let mut h: Vec<Vec<u64>> = rows
        .iter()
        .map(|r| {
            let mut bits = vec![0u64; w];
            for &v in r {
                bits[v / 64] ^= 1 << (v % 64);
            }
            bits
        })
        .collect();
    let bit = |row: &[u64], c: usize| (row[c / 64] >> (c % 64)) & 1 == 1;

    let mut pivots = Vec::with_capacity(m);
    let mut r = 0;
    // prefer pivots at high column indices so that the parity part sits at
    // the end of the natural order; any order works after permutation
    for col in (0..n).rev() {
        if r == m {
            break;
        }
        let Some(p) = (r..m).find(|&i| bit(&h[i], col)) else {
            continue;
        };
        h.swap(r, p);
        let pivot_row = h[r].clone();
        for (i, row) in h.iter_mut().enumerate() {
            if i != r && bit(row, col) {
                for (a, b) in row.iter_mut().zip(&pivot_row) {
                    *a ^= b;
                }
            }
        }
        pivots.push(col);
        r += 1;
    }
    if r < m {
        return None;
    }
    let is_pivot = {
        let mut v = vec![false; n];
        for &p in &pivots {
            v[p] = true;
        }
        v
    };
    let message_cols: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
    let k = message_cols.len();
    let parity_rows = (0..m)
        .map(|i| {
            let mut out = vec![0u64; words(k)];
            for (j, &c) in message_cols.iter().enumerate() {
                if bit(&h[i], c) {
                    out[j / 64] |= 1 << (j % 64);
                }
            }
            out
        })
        .collect();
    let mut perm = message_cols;
    perm.extend_from_slice(&pivots);
    Some((perm, parity_rows))
}

/// Sum-product decoder with reusable message buffers.
#[derive(Debug, Clone)]
pub struct BpDecoder<T: Real> {
    v2c: Vec<T>,
    c2v: Vec<T>,
    channel: Vec<T>,
    hard: Vec<u8>,
    scratch: Vec<T>,
}

impl<T: Real> BpDecoder<T> {
    pub fn new(code: &LdpcCode) -> Self {
        let edges = code.tanner.check_vars.len();
        Self {
            v2c: vec![T::zero(); edges],
            c2v: vec![T::zero(); edges],
            channel: vec![T::zero(); code.n()],
            hard: vec![0; code.n()],
            scratch: Vec::with_capacity(code.params.row_weight + 1),
        }
    }

    pub fn decode(
        &mut self,
        code: &LdpcCode,
        received: &[u8],
        erasures: Option<&[bool]>,
        crossover: f64,
    ) -> Result<DecodeOutcome, FecError> {
        let n = code.n();
        if received.len() != n {
            return Err(FecError::Length {
                expected: n,
                got: received.len(),
            });
        }
        if let Some(e) = erasures {
            if e.len() != n {
                return Err(FecError::Length {
                    expected: n,
                    got: e.len(),
                });
            }
        }
        let p = crossover.clamp(1e-9, 0.5 - 1e-9);
        let llr = T::from_f64_lossy(((1.0 - p) / p).ln());
        let t = &code.tanner;
        for v in 0..n {
            let erased = erasures.is_some_and(|e| e[v]);
            self.channel[v] = if erased {
                T::zero()
            } else if received[v] & 1 == 0 {
                llr
            } else {
                -llr
            };
            self.hard[v] = received[v] & 1;
        }
        if erasures.is_none_or(|e| !e.iter().any(|&x| x)) && code.syndrome_ok(&self.hard) {
            return Ok(DecodeOutcome::Decoded {
                message: self.hard[..code.k()].to_vec(),
                iterations: 0,
            });
        }
        for (e, &v) in t.check_vars.iter().enumerate() {
            self.v2c[e] = self.channel[v];
        }
        let half = T::from_f64_lossy(0.5);
        let two = T::one() + T::one();
        let limit = T::one() - T::epsilon() * T::from_f64_lossy(16.0);
        for iter in 1..=code.params.max_iterations {
            // check nodes: tanh rule with leave-one-out products
            for c in 0..t.checks() {
                let (lo, hi) = (t.check_start[c], t.check_start[c + 1]);
                self.scratch.clear();
                self.scratch
                    .extend(self.v2c[lo..hi].iter().map(|&x| (x * half).tanh()));
                let deg = hi - lo;
                for i in 0..deg {
                    let prod = self
                        .scratch
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .fold(T::one(), |acc, (_, &x)| acc * x);
                    let prod = prod.max(-limit).min(limit);
                    self.c2v[lo + i] = two * atanh(prod);
                }
            }
            // variable nodes
            for v in 0..n {
                let es = &t.var_edges[t.var_start[v]..t.var_start[v + 1]];
                let total = es
                    .iter()
                    .fold(self.channel[v], |acc, &e| acc + self.c2v[e]);
                for &e in es {
                    self.v2c[e] = total - self.c2v[e];
                }
                self.hard[v] = u8::from(total < T::zero());
            }
            if code.syndrome_ok(&self.hard) {
                return Ok(DecodeOutcome::Decoded {
                    message: self.hard[..code.k()].to_vec(),
                    iterations: iter,
                });
            }
        }
        Ok(DecodeOutcome::Failure {
            iterations: code.params.max_iterations,
        })
    }
}

fn atanh<T: Real>(x: T) -> T {
    let half = T::from_f64_lossy(0.5);
    half * ((T::one() + x) / (T::one() - x)).ln()
}
