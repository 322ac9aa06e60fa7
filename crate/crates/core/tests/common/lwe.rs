//! Exact decryption-failure oracle for the ring-LWE block cipher.
//!
//! For a fixed key pair with secret `s` and key error `e`, coefficient `j` of
//! `c2 − c1·s` equals `m_j·⌊q/2⌋ + (e·r)_j − (e1·s)_j + e2_j`. With fresh
//! ternary `r`, `e1`, `e2`, `(e·r)_j` is a sum of `wt(e)` independent
//! ternaries, `(e1·s)_j` a sum of `wt(s)` of them. The two repetition slots of
//! a bit are treated as independent.

use srn_core::pqc::{LweKeypair, BLOCK_BYTES};

/// Negacyclic product in `Z[x]/(x^n + 1)`, unreduced.
pub fn negacyclic(a: &[i64], b: &[i64]) -> Vec<i64> {
    let n = a.len();
    let mut out = vec![0i64; n];
    for i in 0..n {
        if a[i] == 0 {
            continue;
        }
        for j in 0..n {
            let k = i + j;
            if k < n {
                out[k] += a[i] * b[j];
            } else {
                out[k - n] -= a[i] * b[j];
            }
        }
    }
    out
}

pub fn center(x: i64, q: i64) -> i64 {
    let x = x.rem_euclid(q);
    if x > q / 2 {
        x - q
    } else {
        x
    }
}

/// The key error `b − a·s`, centered.
pub fn key_error(pair: &LweKeypair) -> Vec<i64> {
    let q = pair.public.params().q as i64;
    let a: Vec<i64> = pair.public.a().iter().map(|&x| x as i64).collect();
    let s: Vec<i64> = pair.secret.coefficients().iter().map(|&x| x as i64).collect();
    let as_ = negacyclic(&a, &s);
    pair.public
        .b()
        .iter()
        .zip(&as_)
        .map(|(&b, &x)| center(b as i64 - x, q))
        .collect()
}

/// PMF over `[-w, w]` of the sum of `w` ternaries (1/4, 1/2, 1/4).
fn ternary_sum(w: usize) -> Vec<f64> {
    let mut pmf = vec![1.0];
    for _ in 0..w {
        let mut next = vec![0.0; pmf.len() + 2];
        for (i, &p) in pmf.iter().enumerate() {
            next[i] += 0.25 * p;
            next[i + 1] += 0.5 * p;
            next[i + 2] += 0.25 * p;
        }
        pmf = next;
    }
    pmf
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub struct FailureOracle {
    /// per-coefficient noise PMF, index `k` ↔ value `k − offset`
    pub noise: Vec<f64>,
    pub offset: i64,
    pub q: i64,
    pub bit_error_zero: f64,
    pub bit_error_one: f64,
}

impl FailureOracle {
    pub fn for_key(pair: &LweKeypair) -> Self {
        let q = pair.public.params().q as i64;
        let we = key_error(pair).iter().filter(|&&x| x != 0).count();
        let ws = pair.secret.coefficients().iter().filter(|&&x| x != 0).count();
        // e·r, e1·s and e2 are all sums of independent fresh ternaries
        let noise = ternary_sum(we + ws + 1);
        let offset = (we + ws + 1) as i64;
        let half = q / 2;
        let dist = |x: i64| center(x, q).abs();
        let (mut e0, mut e1) = (0.0, 0.0);
        for (i, &pa) in noise.iter().enumerate() {
            if pa < 1e-300 {
                continue;
            }
            let a = i as i64 - offset;
            for (j, &pb) in noise.iter().enumerate() {
                let b = j as i64 - offset;
                let p = pa * pb;
                if dist(a) + dist(b) > half {
                    e0 += p;
                }
                if dist(a + half) + dist(b + half) <= half {
                    e1 += p;
                }
            }
        }
        Self {
            noise,
            offset,
            q,
            bit_error_zero: e0,
            bit_error_one: e1,
        }
    }

    /// Noise variance per coefficient.
    pub fn variance(&self) -> f64 {
        self.noise
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let x = (i as i64 - self.offset) as f64;
                p * x * x
            })
            .sum()
    }

    /// Failure probability of a block whose bits are uniformly random.
    pub fn block_failure_random(&self) -> f64 {
        let bits = BLOCK_BYTES * 8;
        // average (1−p0)^(bits−h) (1−p1)^h over h ~ Binomial(bits, 1/2)
        let ok = ((1.0 - self.bit_error_zero) / 2.0 + (1.0 - self.bit_error_one) / 2.0).powi(bits as i32);
        1.0 - ok
    }
}

/// Same `c2 − c1·s` difference the decryptor sees, minus the message offset.
pub fn decryption_noise(pair: &LweKeypair, block: &[u8], ct: &[u8]) -> Vec<i64> {
    let q = pair.public.params().q as i64;
    let n = pair.public.params().n;
    let bits = BLOCK_BYTES * 8;
    let c1: Vec<i64> = ct[..n].iter().map(|&x| x as i64).collect();
    let c2: Vec<i64> = ct[n..].iter().map(|&x| x as i64).collect();
    let s: Vec<i64> = pair.secret.coefficients().iter().map(|&x| x as i64).collect();
    let c1s = negacyclic(&c1, &s);
    (0..n)
        .map(|j| {
            let i = j % bits;
            let m = ((block[i / 8] >> (i % 8)) & 1) as i64;
            center(c2[j] - c1s[j] - m * (q / 2), q)
        })
        .collect()
}
