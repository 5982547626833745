use std::collections::BTreeSet;

use super::{CodedSlice, EvalPoints, LagrangeCode, ShardBlock};
use crate::error::{Error, Result};
use crate::field::{degree, trim, PrimeField};
use crate::model::FixedPointCodec;

/// Result of error-correcting reconstruction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RobustDecode {
    pub blocks: Vec<ShardBlock>,
    /// Slots whose slice disagreed with the decoded codeword in any coordinate.
    pub corrected: Vec<u32>,
    /// Field multiplications spent decoding.
    pub field_ops: u64,
}

/// Per-point-set data shared by every coordinate.
struct GaoTables {
    xs: Vec<u64>,
    /// ∏ (x - x_i)
    g0: Vec<u64>,
    /// Coefficients of the Lagrange basis polynomial for each point.
    basis: Vec<Vec<u64>>,
}

impl GaoTables {
    fn new(f: &PrimeField, xs: Vec<u64>) -> Self {
        let g0 = f.poly_from_roots(&xs);
        let basis = xs
            .iter()
            .enumerate()
            .map(|(i, &xi)| {
                // g0 / (x - xi) by synthetic division
                let n = g0.len() - 1;
                let mut q = vec![0u64; n];
                let mut carry = 0u64;
                for k in (0..n).rev() {
                    carry = f.add(g0[k + 1], f.mul(carry, xi));
                    q[k] = carry;
                }
                let denom =
                    xs.iter().enumerate().filter(|&(j, _)| j != i).fold(1, |acc, (_, &xj)| f.mul(acc, f.sub(xi, xj)));
                let w = f.inv(denom).expect("distinct points");
                q.iter().map(|&c| f.mul(c, w)).collect()
            })
            .collect();
        Self { xs, g0, basis }
    }
}

/// Gao's decoder for one coordinate. Returns the message polynomial and the
/// positions (into `xs`) where `ys` disagrees with it.
fn gao(f: &PrimeField, t: &GaoTables, ys: &[u64], k: usize, ops: &mut u64) -> Option<(Vec<u64>, Vec<usize>)> {
    let n = t.xs.len();
    let mut g1 = vec![0u64; n];
    for (basis, &y) in t.basis.iter().zip(ys) {
        if y == 0 {
            continue;
        }
        for (c, &b) in g1.iter_mut().zip(basis) {
            *c = f.add(*c, f.mul(y, b));
        }
        *ops += n as u64;
    }
    trim(&mut g1);

    // partial extended Euclid on (g0, g1) until deg r < (n + k) / 2
    let stop = |r: &[u64]| degree(r).is_none_or(|d| 2 * d < n + k);
    let (mut r_prev, mut r) = (t.g0.clone(), g1);
    let (mut v_prev, mut v): (Vec<u64>, Vec<u64>) = (Vec::new(), vec![1]);
    while !stop(&r) {
        let (q, rem) = f.poly_divrem(&r_prev, &r, ops);
        let qv = f.poly_mul(&q, &v, ops);
        let v_next = f.poly_sub(&v_prev, &qv);
        r_prev = std::mem::replace(&mut r, rem);
        v_prev = std::mem::replace(&mut v, v_next);
    }
    let (msg, rem) = f.poly_divrem(&r, &v, ops);
    if !rem.is_empty() || degree(&msg).is_some_and(|d| d >= k) {
        return None;
    }
    let errors: Vec<usize> =
        t.xs.iter().zip(ys).enumerate().filter(|&(_, (&x, &y))| f.poly_eval(&msg, x) != y).map(|(i, _)| i).collect();
    *ops += (n * msg.len()) as u64;
    Some((msg, errors))
}

const CHUNK: usize = 64;

impl LagrangeCode {
    /// Error-correcting reconstruction from at least `S` slices (normally all
    /// `C`). Fails rather than return data when more than
    /// `⌊(n - S)/2⌋` of the `n` supplied slices are inconsistent.
    pub fn reconstruct_robust(&self, slices: &[CodedSlice]) -> Result<RobustDecode> {
        let s = self.shards();
        if slices.len() < s {
            return Err(Error::invalid(format!("need at least {s} slices, got {}", slices.len())));
        }
        let (len, round) = self.check_slices(slices)?;
        let f = *self.field();
        let n = slices.len();
        let capacity = (n - s) / 2;
        let tables = GaoTables::new(&f, slices.iter().map(|sl| self.points().alphas[sl.client_id as usize]).collect());
        let omegas = &self.points().omegas;

        let chunks = len.div_ceil(CHUNK);
        let results = self.exec().map_range(chunks, |c| {
            let mut ops = 0u64;
            let mut out: Vec<Vec<u64>> = Vec::new();
            let mut bad = BTreeSet::new();
            let mut ys = vec![0u64; n];
            for k in c * CHUNK..((c + 1) * CHUNK).min(len) {
                for (y, sl) in ys.iter_mut().zip(slices) {
                    *y = sl.values[k];
                }
                let (msg, errors) = gao(&f, &tables, &ys, s, &mut ops)
                    .ok_or_else(|| Error::DecodeFailure(format!("coordinate {k}: more than {capacity} errors")))?;
                if errors.len() > capacity {
                    return Err(Error::DecodeFailure(format!(
                        "coordinate {k}: {} errors exceed {capacity}",
                        errors.len()
                    )));
                }
                bad.extend(errors);
                out.push(omegas.iter().map(|&w| f.poly_eval(&msg, w)).collect());
                ops += (s * msg.len()) as u64;
            }
            Ok((out, bad, ops))
        });

        let mut blocks: Vec<ShardBlock> =
            (0..s).map(|shard| ShardBlock { shard_id: shard as u32, round, values: Vec::with_capacity(len) }).collect();
        let mut bad = BTreeSet::new();
        let mut field_ops = 0;
        for r in results {
            let (coords, chunk_bad, ops) = r?;
            for values in coords {
                for (b, v) in blocks.iter_mut().zip(values) {
                    b.values.push(v);
                }
            }
            bad.extend(chunk_bad);
            field_ops += ops;
        }
        if bad.len() > capacity {
            return Err(Error::DecodeFailure(format!(
                "{} slices inconsistent, at most {capacity} correctable",
                bad.len()
            )));
        }
        let corrected = bad.into_iter().map(|i| slices[i].client_id).collect();
        Ok(RobustDecode { blocks, corrected, field_ops })
    }
}

pub fn reconstruct_robust(slices: &[CodedSlice], points: &EvalPoints, codec: &FixedPointCodec) -> Result<RobustDecode> {
    LagrangeCode::for_codec(points.clone(), codec)?.reconstruct_robust(slices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::MERSENNE_31;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(
        shards: usize,
        clients: usize,
        len: usize,
        seed: u64,
    ) -> (LagrangeCode, Vec<ShardBlock>, Vec<CodedSlice>, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = PrimeField::new(MERSENNE_31).unwrap();
        let code = LagrangeCode::new(EvalPoints::standard(shards, clients), f).unwrap();
        let blocks: Vec<ShardBlock> = (0..shards)
            .map(|s| ShardBlock {
                shard_id: s as u32,
                round: 2,
                values: (0..len).map(|_| rng.random_range(0..MERSENNE_31)).collect(),
            })
            .collect();
        let slices = code.encode(&blocks).unwrap();
        (code, blocks, slices, rng)
    }

    fn corrupt(slice: &mut CodedSlice, rng: &mut impl Rng) {
        let k = rng.random_range(0..slice.values.len());
        let delta = rng.random_range(1..MERSENNE_31);
        slice.values[k] = (slice.values[k] + delta) % MERSENNE_31;
    }

    #[test]
    fn clean_matches_fast_path() {
        let (code, blocks, slices, _) = setup(3, 7, 10, 1);
        let r = code.reconstruct_robust(&slices).unwrap();
        assert_eq!(r.blocks, blocks);
        assert!(r.corrected.is_empty());
        assert_eq!(r.blocks, code.reconstruct_fast(&slices[2..5]).unwrap());
        assert!(r.field_ops > 0);
    }

    #[test]
    fn one_error_in_five_two() {
        let (code, blocks, mut slices, mut rng) = setup(2, 5, 8, 2);
        corrupt(&mut slices[3], &mut rng);
        let r = code.reconstruct_robust(&slices).unwrap();
        assert_eq!(r.blocks, blocks);
        assert_eq!(r.corrected, vec![3]);
    }

    #[test]
    fn two_errors_in_five_two_fail() {
        let (code, _, mut slices, mut rng) = setup(2, 5, 8, 3);
        corrupt(&mut slices[0], &mut rng);
        corrupt(&mut slices[4], &mut rng);
        assert!(matches!(code.reconstruct_robust(&slices), Err(Error::DecodeFailure(_))));
    }

    #[test]
    fn errors_spread_over_coordinates_count_per_slice() {
        // each coordinate sees one error, but two slices are bad in total
        let (code, _, mut slices, _) = setup(2, 5, 4, 4);
        slices[1].values[0] ^= 1;
        slices[2].values[3] ^= 1;
        assert!(code.reconstruct_robust(&slices).is_err());
    }

    #[test]
    fn zero_payload_decodes() {
        let f = PrimeField::new(MERSENNE_31).unwrap();
        let code = LagrangeCode::new(EvalPoints::standard(2, 6), f).unwrap();
        let blocks: Vec<ShardBlock> =
            (0..2).map(|s| ShardBlock { shard_id: s, round: 1, values: vec![0, 0] }).collect();
        let slices = code.encode(&blocks).unwrap();
        assert_eq!(code.reconstruct_robust(&slices).unwrap().blocks, blocks);
    }

    #[test]
    fn subset_of_slices_is_accepted() {
        let (code, blocks, mut slices, mut rng) = setup(2, 9, 6, 5);
        slices.truncate(7); // n = 7, capacity 2
        corrupt(&mut slices[0], &mut rng);
        corrupt(&mut slices[5], &mut rng);
        let r = code.reconstruct_robust(&slices).unwrap();
        assert_eq!(r.blocks, blocks);
        assert_eq!(r.corrected, vec![0, 5]);
    }
}
