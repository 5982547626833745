use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability that a given shard was hit exactly `j` times by the first
/// `i - 1` of a uniformly assigned request stream over `s` shards.
pub fn shard_hit_probability(i: usize, j: usize, s: usize) -> Result<f64> {
    if s == 0 || i == 0 || j > i - 1 {
        return Err(Error::invalid(format!("need S >= 1 and 0 <= j <= i - 1, got i={i} j={j} S={s}")));
    }
    let n = i - 1;
    let p = 1.0 / s as f64;
    let binom = (0..j).fold(1.0, |acc, t| acc * (n - t) as f64 / (t + 1) as f64);
    Ok(binom * p.powi(j as i32) * (1.0 - p).powi((n - j) as i32))
}

/// Expected cost of `k` sequential requests: each pays one full pass.
pub fn expected_time_sequential(k: usize, ct: f64) -> Result<f64> {
    check_cost(ct)?;
    Ok(k as f64 * ct)
}

/// Expected cost of `k` batched requests: each distinct hit shard pays once.
pub fn expected_time_concurrent(s: usize, k: usize, ct: f64) -> Result<f64> {
    check_cost(ct)?;
    if s == 0 {
        return Err(Error::invalid("S must be at least 1"));
    }
    let miss = 1.0 - 1.0 / s as f64;
    Ok(s as f64 * ct * (1.0 - miss.powi(k as i32)))
}

fn check_cost(ct: f64) -> Result<()> {
    if !(ct.is_finite() && ct >= 0.0) {
        return Err(Error::invalid(format!("per-pass cost must be finite and non-negative, got {ct}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StorageBounds {
    /// Uncoded sharding.
    pub gamma_s: f64,
    pub gamma_c_lower: f64,
    pub gamma_c_upper: f64,
}

/// Storage efficiency of uncoded and coded sharding, for `C` clients, `S`
/// shards and a tolerated error fraction `mu` of the slices. Rejects
/// configurations with `2·mu·C > C - S`.
pub fn storage_efficiency_bounds(c: usize, s: usize, mu: f64) -> Result<StorageBounds> {
    if !(0.0..0.5).contains(&mu) {
        return Err(Error::invalid(format!("mu must lie in [0, 0.5), got {mu}")));
    }
    if s == 0 || s > c {
        return Err(Error::invalid(format!("need 1 <= S <= C, got S={s} C={c}")));
    }
    let (cf, sf) = (c as f64, s as f64);
    if 2.0 * mu * cf > cf - sf + 1e-9 {
        return Err(Error::invalid(format!(
            "2·mu·C = {} exceeds C - S = {}: too many erroneous slices to tolerate",
            2.0 * mu * cf,
            c - s
        )));
    }
    Ok(StorageBounds { gamma_s: sf, gamma_c_lower: sf, gamma_c_upper: (1.0 - 2.0 * mu) * cf })
}

/// `S / (kappa · C² · ln²C · max(ln ln C, 1))`.
pub fn coded_throughput(c: usize, s: usize, kappa: f64) -> Result<f64> {
    if s == 0 || s > c {
        return Err(Error::invalid(format!("need 1 <= S <= C, got S={s} C={c}")));
    }
    if c < 2 {
        return Err(Error::invalid("coded throughput needs C >= 2"));
    }
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::invalid(format!("kappa must be positive, got {kappa}")));
    }
    let cf = c as f64;
    let ln = cf.ln();
    let lnln = ln.ln().max(1.0);
    Ok(s as f64 / (kappa * cf * cf * ln * ln * lnln))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return Err(Error::invalid("need at least two points with positive coordinates"));
    }
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("x values must differ"));
    }
    Ok(sxy / sxx)
}
