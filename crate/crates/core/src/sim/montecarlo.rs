use rand::Rng;
use serde::{Deserialize, Serialize};

use super::theory::{expected_time_concurrent, expected_time_sequential, shard_hit_probability};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rng::{stream, tag};

const CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSpec {
    pub shards: usize,
    pub requests: usize,
    /// Mean cost of one shard retraining pass.
    pub pass_cost: f64,
    pub trials: usize,
    /// Each pass costs `pass_cost · (1 + jitter · u)` with `u ~ U(-1, 1)`.
    pub jitter: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub spec: MonteCarloSpec,
    pub sequential_measured: f64,
    pub sequential_theory: f64,
    pub concurrent_measured: f64,
    pub concurrent_theory: f64,
    /// Fraction of trials in which shard 0 was hit `j` times by the first
    /// `K - 1` requests, for `j = 0..K`.
    pub hits_measured: Vec<f64>,
    pub hits_theory: Vec<f64>,
}

fn rel(measured: f64, theory: f64) -> f64 {
    if theory == 0.0 {
        measured.abs()
    } else {
        (measured - theory).abs() / theory.abs()
    }
}

impl MonteCarloReport {
    pub fn sequential_rel_error(&self) -> f64 {
        rel(self.sequential_measured, self.sequential_theory)
    }

    pub fn concurrent_rel_error(&self) -> f64 {
        rel(self.concurrent_measured, self.concurrent_theory)
    }

    pub fn max_hit_error(&self) -> f64 {
        self.hits_measured.iter().zip(&self.hits_theory).map(|(m, t)| (m - t).abs()).fold(0.0, f64::max)
    }
}

#[derive(Default)]
struct Partial {
    sequential: f64,
    concurrent: f64,
    hits: Vec<u64>,
}

/// Simulates `trials` workloads of uniformly assigned requests and compares
/// the mean sequential and batched costs with their closed forms.
///
/// Trials are split into fixed chunks, each with its own stream, so the
/// result does not depend on `exec`.
pub fn monte_carlo(spec: &MonteCarloSpec, exec: Exec) -> Result<MonteCarloReport> {
    let MonteCarloSpec { shards, requests: k, pass_cost, trials, jitter, seed } = *spec;
    if shards == 0 || k == 0 || trials == 0 {
        return Err(Error::invalid("Monte Carlo needs S >= 1, K >= 1 and at least one trial"));
    }
    if !(0.0..=1.0).contains(&jitter) {
        return Err(Error::invalid(format!("jitter must lie in [0, 1], got {jitter}")));
    }
    let sequential_theory = expected_time_sequential(k, pass_cost)?;
    let concurrent_theory = expected_time_concurrent(shards, k, pass_cost)?;
    let chunks = trials.div_ceil(CHUNK);
    let parts = exec.map_range(chunks, |c| {
        let mut rng = stream(&[tag::MONTE_CARLO, seed, shards as u64, k as u64, c as u64]);
        let mut p = Partial { hits: vec![0; k], ..Default::default() };
        let mut hit = vec![false; shards];
        let cost = |rng: &mut rand_chacha::ChaCha8Rng| {
            if jitter == 0.0 {
                pass_cost
            } else {
                pass_cost * (1.0 + jitter * rng.random_range(-1.0..1.0))
            }
        };
        for _ in c * CHUNK..((c + 1) * CHUNK).min(trials) {
            hit.iter_mut().for_each(|h| *h = false);
            let mut zero_hits = 0usize;
            for i in 0..k {
                let s = rng.random_range(0..shards);
                if i + 1 < k && s == 0 {
                    zero_hits += 1;
                }
                hit[s] = true;
                p.sequential += cost(&mut rng);
            }
            for &h in &hit {
                if h {
                    p.concurrent += cost(&mut rng);
                }
            }
            p.hits[zero_hits] += 1;
        }
        p
    });
    let mut total = Partial { hits: vec![0; k], ..Default::default() };
    for p in parts {
        total.sequential += p.sequential;
        total.concurrent += p.concurrent;
        for (a, b) in total.hits.iter_mut().zip(p.hits) {
            *a += b;
        }
    }
    let n = trials as f64;
    Ok(MonteCarloReport {
        spec: *spec,
        sequential_measured: total.sequential / n,
        sequential_theory,
        concurrent_measured: total.concurrent / n,
        concurrent_theory,
        hits_measured: total.hits.iter().map(|&h| h as f64 / n).collect(),
        hits_theory: (0..k).map(|j| shard_hit_probability(k, j, shards)).collect::<Result<_>>()?,
    })
}
