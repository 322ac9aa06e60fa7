//! Test-side oracles shared by the integration tests and the acceptance run.
//! Nothing here calls into the library's own statistics code: probabilities,
//! noise distributions and reference decoders are recomputed from first
//! principles.

#![allow(dead_code)]

pub mod born;
pub mod bitflip;
pub mod lwe;
pub mod bench;

/// `p ± 3σ` band of a binomial frequency over `n` trials.
pub fn three_sigma(p: f64, n: usize) -> (f64, f64) {
    let s = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
    (p - s, p + s)
}

pub fn within(x: f64, (lo, hi): (f64, f64)) -> bool {
    x >= lo && x <= hi
}
