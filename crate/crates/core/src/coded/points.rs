use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::PrimeField;

/// Evaluation points: one ω per shard, one α per client slot.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EvalPoints {
    pub omegas: Vec<u64>,
    pub alphas: Vec<u64>,
}

impl EvalPoints {
    /// ω_s = s for s = 1..S and α_i = S + i for i = 1..C.
    pub fn standard(shards: usize, clients: usize) -> Self {
        let s = shards as u64;
        Self { omegas: (1..=s).collect(), alphas: (1..=clients as u64).map(|i| s + i).collect() }
    }

    pub fn new(omegas: Vec<u64>, alphas: Vec<u64>) -> Self {
        Self { omegas, alphas }
    }

    pub fn shards(&self) -> usize {
        self.omegas.len()
    }

    pub fn clients(&self) -> usize {
        self.alphas.len()
    }

    pub fn validate(&self, field: &PrimeField) -> Result<()> {
        if self.omegas.is_empty() {
            return Err(Error::invalid("need at least one shard point"));
        }
        if self.shards() > self.clients() {
            return Err(Error::invalid(format!(
                "{} shards exceed {} clients; blocks would be undecodable",
                self.shards(),
                self.clients()
            )));
        }
        let mut seen = BTreeSet::new();
        for &x in self.omegas.iter().chain(&self.alphas) {
            if x >= field.modulus() {
                return Err(Error::invalid(format!("point {x} not reduced mod {}", field.modulus())));
            }
            if !seen.insert(x) {
                return Err(Error::invalid(format!("evaluation point {x} repeated")));
            }
        }
        Ok(())
    }
}
