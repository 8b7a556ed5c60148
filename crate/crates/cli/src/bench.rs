//! Naive versus small-side entropy timing.

use std::time::Instant;

use entroprune_core::spectral_fastpath::{entropy_fast, entropy_naive, speedup_theoretical};
use entroprune_core::{DenseMatrix, Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

const AGREEMENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchParams {
    pub head_dim: usize,
    pub heads: usize,
    pub tokens: usize,
    pub iters: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub head_dim: usize,
    pub heads: usize,
    pub tokens: usize,
    pub iters: usize,
    pub seed: u64,
    /// Largest |fast - naive| over the token set, checked before timing.
    pub max_abs_diff: f64,
    pub median_naive_us: f64,
    pub median_fast_us: f64,
    pub speedup_measured: f64,
    /// `(head_dim / heads)³`; absent when head_dim < heads.
    pub speedup_theoretical: Option<f64>,
}

fn random_tokens(p: &BenchParams) -> Vec<DenseMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    (0..p.tokens)
        .map(|_| {
            let data = (0..p.heads * p.head_dim)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            DenseMatrix::from_vec(p.heads, p.head_dim, data).expect("finite gaussian samples")
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn time_each(tokens: &[DenseMatrix], iters: usize, f: fn(&DenseMatrix) -> Result<f64>) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(tokens.len() * iters);
    for _ in 0..iters {
        for m in tokens {
            let start = Instant::now();
            std::hint::black_box(f(std::hint::black_box(m))?);
            out.push(start.elapsed().as_secs_f64() * 1e6);
        }
    }
    Ok(out)
}

/// Checks agreement on every token, then records per-token wall-clock for each path.
pub fn run_bench(p: &BenchParams) -> Result<BenchReport> {
    if p.heads < 2 || p.head_dim == 0 || p.tokens == 0 || p.iters == 0 {
        return Err(Error::Parameter(format!(
            "bench needs heads >= 2 and positive head_dim, tokens, iters; got {p:?}"
        )));
    }
    let tokens = random_tokens(p);
    let mut max_abs_diff = 0.0f64;
    for (i, m) in tokens.iter().enumerate() {
        let diff = (entropy_fast(m)? - entropy_naive(m)?).abs();
        if !(diff <= AGREEMENT_TOL) {
            return Err(Error::Mismatch {
                what: format!("fast and naive entropies of token {i}"),
                diff,
            });
        }
        max_abs_diff = max_abs_diff.max(diff);
    }
    let median_naive_us = median(time_each(&tokens, p.iters, entropy_naive)?);
    let median_fast_us = median(time_each(&tokens, p.iters, entropy_fast)?);
    Ok(BenchReport {
        head_dim: p.head_dim,
        heads: p.heads,
        tokens: p.tokens,
        iters: p.iters,
        seed: p.seed,
        max_abs_diff,
        median_naive_us,
        median_fast_us,
        speedup_measured: median_naive_us / median_fast_us,
        speedup_theoretical: speedup_theoretical(p.head_dim, p.heads).ok(),
    })
}
