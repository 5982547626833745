//! Real-valued Lagrange coding, for illustration only.
//!
//! Decoding solves the overdetermined Vandermonde system by least squares.
//! It tolerates no corrupted slices and loses precision quickly as `S` grows.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

fn basis(nodes: &[f64], x: f64) -> Vec<f64> {
    nodes
        .iter()
        .enumerate()
        .map(|(s, &ws)| {
            nodes.iter().enumerate().filter(|&(j, _)| j != s).map(|(_, &wj)| (x - wj) / (ws - wj)).product()
        })
        .collect()
}

pub fn encode_real(blocks: &[Vec<f64>], omegas: &[f64], alphas: &[f64]) -> Result<Vec<Vec<f64>>> {
    if blocks.len() != omegas.len() || blocks.is_empty() {
        return Err(Error::invalid("one block per shard point required"));
    }
    let len = blocks[0].len();
    if blocks.iter().any(|b| b.len() != len) {
        return Err(Error::invalid("blocks differ in length"));
    }
    Ok(alphas
        .iter()
        .map(|&a| {
            let l = basis(omegas, a);
            (0..len).map(|k| blocks.iter().zip(&l).map(|(b, c)| b[k] * c).sum()).collect()
        })
        .collect())
}

/// Least-squares fit of the degree `< S` polynomial to all supplied slices,
/// evaluated back at each ω.
pub fn reconstruct_real(slices: &[Vec<f64>], alphas: &[f64], omegas: &[f64]) -> Result<Vec<Vec<f64>>> {
    let s = omegas.len();
    if slices.len() != alphas.len() || slices.len() < s {
        return Err(Error::invalid("need at least S slices with matching points"));
    }
    let len = slices[0].len();
    let v = DMatrix::from_fn(alphas.len(), s, |i, j| alphas[i].powi(j as i32));
    let svd = v.svd(true, true);
    let w = DMatrix::from_fn(s, s, |i, j| omegas[i].powi(j as i32));
    let mut out = vec![vec![0.0; len]; s];
    for k in 0..len {
        let y = DVector::from_iterator(slices.len(), slices.iter().map(|sl| sl[k]));
        let coeffs = svd.solve(&y, 1e-12).map_err(|e| Error::DecodeFailure(e.to_string()))?;
        let blocks = &w * coeffs;
        for (b, v) in out.iter_mut().zip(blocks.iter()) {
            b[k] = *v;
        }
    }
    Ok(out)
}
