use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, tag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    Iid,
    NonIid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub mode: PartitionMode,
    pub num_clients: usize,
    /// Share of each client's samples drawn from its primary class (NonIid).
    pub primary_fraction: f64,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn iid(num_clients: usize, seed: u64) -> Self {
        Self { mode: PartitionMode::Iid, num_clients, primary_fraction: 0.8, seed }
    }

    pub fn non_iid(num_clients: usize, seed: u64) -> Self {
        Self { mode: PartitionMode::NonIid, num_clients, primary_fraction: 0.8, seed }
    }
}

/// Near-equal sizes summing to `n`, larger parts first.
fn split_sizes(n: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|i| n / parts + usize::from(i < n % parts)).collect()
}

/// Row indices assigned to each client. Parts are pairwise disjoint and
/// jointly cover the dataset.
pub fn partition_indices(dataset: &Dataset, spec: &PartitionSpec) -> Result<Vec<Vec<usize>>> {
    let n = dataset.len();
    if spec.num_clients == 0 {
        return Err(Error::invalid("num_clients must be positive"));
    }
    if n < spec.num_clients {
        return Err(Error::invalid(format!("{n} samples cannot cover {} clients", spec.num_clients)));
    }
    let mut rng = rng::stream(&[tag::PARTITION, spec.seed]);
    let sizes = split_sizes(n, spec.num_clients);
    match spec.mode {
        PartitionMode::Iid => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut parts = Vec::with_capacity(sizes.len());
            let mut start = 0;
            for s in sizes {
                parts.push(order[start..start + s].to_vec());
                start += s;
            }
            Ok(parts)
        }
        PartitionMode::NonIid => non_iid(dataset, spec, &sizes, &mut rng),
    }
}

fn non_iid(dataset: &Dataset, spec: &PartitionSpec, sizes: &[usize], rng: &mut impl Rng) -> Result<Vec<Vec<usize>>> {
    let k = dataset.num_classes();
    if k < 2 {
        return Err(Error::invalid("non-IID partition needs at least two classes"));
    }
    let f = spec.primary_fraction;
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::invalid(format!("primary_fraction {f} outside (0, 1]")));
    }
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in dataset.labels().iter().enumerate() {
        pools[l as usize].push(i);
    }
    for pool in &mut pools {
        pool.shuffle(rng);
    }

    // Primary quotas first so that no client is starved by an earlier
    // client's remainder draws.
    let quota = |size: usize| ((f * size as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut parts: Vec<Vec<usize>> = Vec::with_capacity(sizes.len());
    for (c, &size) in sizes.iter().enumerate() {
        let primary = c % k;
        let q = quota(size).min(size);
        if pools[primary].len() < q {
            return Err(Error::InfeasiblePartition(format!(
                "class {primary} has {} samples left, client {c} needs {q}",
                pools[primary].len()
            )));
        }
        let at = pools[primary].len() - q;
        parts.push(pools[primary].split_off(at));
    }
    for (c, &size) in sizes.iter().enumerate() {
        let primary = c % k;
        while parts[c].len() < size {
            let others: Vec<usize> = (0..k).filter(|&j| j != primary && !pools[j].is_empty()).collect();
            let class = if others.is_empty() { primary } else { others[rng.random_range(0..others.len())] };
            let idx = pools[class].pop().expect("remaining samples cover remaining slots");
            parts[c].push(idx);
        }
    }
    Ok(parts)
}

pub fn partition(dataset: &Dataset, spec: &PartitionSpec) -> Result<Vec<Dataset>> {
    Ok(partition_indices(dataset, spec)?.iter().map(|ix| dataset.subset(ix)).collect())
}
