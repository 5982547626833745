use std::collections::BTreeSet;

use super::{CodedSlice, EvalPoints, ShardBlock};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::field::PrimeField;
use crate::model::FixedPointCodec;

/// Encoder/decoder bound to one set of evaluation points.
#[derive(Clone, Debug)]
pub struct LagrangeCode {
    field: PrimeField,
    points: EvalPoints,
    /// `encode[i][s] = ℓ_s(α_i)`.
    encode: Vec<Vec<u64>>,
    exec: Exec,
}

impl LagrangeCode {
    pub fn new(points: EvalPoints, field: PrimeField) -> Result<Self> {
        points.validate(&field)?;
        let encode = points.alphas.iter().map(|&a| lagrange_basis(&field, &points.omegas, a)).collect();
        Ok(Self { field, points, encode, exec: Exec::default() })
    }

    pub fn for_codec(points: EvalPoints, codec: &FixedPointCodec) -> Result<Self> {
        codec.check_points(points.shards() + points.clients())?;
        Self::new(points, codec.field())
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn field(&self) -> &PrimeField {
        &self.field
    }

    pub fn points(&self) -> &EvalPoints {
        &self.points
    }

    pub fn shards(&self) -> usize {
        self.points.shards()
    }

    pub fn clients(&self) -> usize {
        self.points.clients()
    }

    /// Largest number of corrupted slices the robust path corrects when all
    /// `C` slices are present.
    pub fn error_capacity(&self) -> usize {
        (self.clients() - self.shards()) / 2
    }

    /// `u(x)` coordinatewise for an arbitrary point `x`.
    pub fn evaluate_at(&self, blocks: &[ShardBlock], x: u64) -> Result<Vec<u64>> {
        let len = check_blocks(blocks, self.shards())?;
        let basis = lagrange_basis(&self.field, &self.points.omegas, x);
        Ok(combine(&self.field, &basis, blocks, len))
    }

    /// One slice per client slot, `slice_i = Σ_s block_s · ℓ_s(α_i)`.
    pub fn encode(&self, blocks: &[ShardBlock]) -> Result<Vec<CodedSlice>> {
        let len = check_blocks(blocks, self.shards())?;
        let round = blocks[0].round;
        Ok(self.exec.map_range(self.clients(), |i| {
            CodedSlice::new(i as u32, round, combine(&self.field, &self.encode[i], blocks, len))
        }))
    }

    /// Recovers every block from exactly `S` uncorrupted slices.
    pub fn reconstruct_fast(&self, slices: &[CodedSlice]) -> Result<Vec<ShardBlock>> {
        let s = self.shards();
        if slices.len() != s {
            return Err(Error::invalid(format!("fast path needs exactly {s} slices, got {}", slices.len())));
        }
        let (len, round) = self.check_slices(slices)?;
        let xs: Vec<u64> = slices.iter().map(|sl| self.points.alphas[sl.client_id as usize]).collect();
        // coefficients = V^{-1} y, then blocks = W coefficients; fold into one S×S map
        let v_inv = vandermonde_inverse(&self.field, &xs)?;
        let f = &self.field;
        let decode: Vec<Vec<u64>> = self
            .points
            .omegas
            .iter()
            .map(|&w| {
                let powers: Vec<u64> = std::iter::successors(Some(1u64), |&p| Some(f.mul(p, w))).take(s).collect();
                (0..s).map(|j| (0..s).fold(0, |acc, c| f.add(acc, f.mul(powers[c], v_inv[c][j])))).collect()
            })
            .collect();
        Ok(self.exec.map_range(s, |shard| {
            let row = &decode[shard];
            let values = (0..len)
                .map(|k| slices.iter().zip(row).fold(0, |acc, (sl, &r)| f.add(acc, f.mul(r, sl.values[k]))))
                .collect();
            ShardBlock { shard_id: shard as u32, round, values }
        }))
    }

    /// Checks that slices name distinct valid slots, share a round and a
    /// length; returns (length, round).
    pub(crate) fn check_slices(&self, slices: &[CodedSlice]) -> Result<(usize, u32)> {
        let first = slices.first().ok_or_else(|| Error::invalid("no slices"))?;
        let mut seen = BTreeSet::new();
        for sl in slices {
            if sl.client_id as usize >= self.clients() {
                return Err(Error::invalid(format!("slice slot {} out of range", sl.client_id)));
            }
            if !seen.insert(sl.client_id) {
                return Err(Error::invalid(format!("slot {} supplied twice", sl.client_id)));
            }
            if sl.len() != first.len() {
                return Err(Error::DimensionMismatch { expected: first.len(), found: sl.len() });
            }
            if sl.round != first.round {
                return Err(Error::invalid("slices from different rounds"));
            }
        }
        Ok((first.len(), first.round))
    }
}

fn check_blocks(blocks: &[ShardBlock], shards: usize) -> Result<usize> {
    if blocks.len() != shards {
        return Err(Error::invalid(format!("expected {shards} blocks, got {}", blocks.len())));
    }
    let len = blocks[0].values.len();
    for b in blocks {
        if b.values.len() != len {
            return Err(Error::DimensionMismatch { expected: len, found: b.values.len() });
        }
        if b.round != blocks[0].round {
            return Err(Error::invalid("blocks from different rounds"));
        }
    }
    Ok(len)
}

fn combine(f: &PrimeField, coeffs: &[u64], blocks: &[ShardBlock], len: usize) -> Vec<u64> {
    (0..len).map(|k| blocks.iter().zip(coeffs).fold(0, |acc, (b, &c)| f.add(acc, f.mul(c, b.values[k])))).collect()
}

/// `[ℓ_1(x), …, ℓ_S(x)]` for the Lagrange basis on `nodes`.
pub(crate) fn lagrange_basis(f: &PrimeField, nodes: &[u64], x: u64) -> Vec<u64> {
    nodes
        .iter()
        .enumerate()
        .map(|(s, &ws)| {
            let (num, den) = nodes
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != s)
                .fold((1, 1), |(n, d), (_, &wj)| (f.mul(n, f.sub(x, wj)), f.mul(d, f.sub(ws, wj))));
            f.mul(num, f.inv(den).expect("nodes are distinct"))
        })
        .collect()
}

/// Gauss-Jordan inverse of the Vandermonde matrix with rows `[1, x, …, x^{n-1}]`.
fn vandermonde_inverse(f: &PrimeField, xs: &[u64]) -> Result<Vec<Vec<u64>>> {
    let n = xs.len();
    let mut a: Vec<Vec<u64>> = xs
        .iter()
        .map(|&x| {
            let mut row: Vec<u64> = std::iter::successors(Some(1u64), |&p| Some(f.mul(p, x))).take(n).collect();
            row.extend((0..n).map(|_| 0));
            row
        })
        .collect();
    for (i, row) in a.iter_mut().enumerate() {
        row[n + i] = 1;
    }
    for col in 0..n {
        let pivot = (col..n)
            .find(|&r| a[r][col] != 0)
            .ok_or_else(|| Error::DecodeFailure("singular Vandermonde system".into()))?;
        a.swap(col, pivot);
        let inv = f.inv(a[col][col]).unwrap();
        for v in a[col].iter_mut() {
            *v = f.mul(*v, inv);
        }
        let pivot_row = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != col && row[col] != 0 {
                let factor = row[col];
                for (v, &p) in row.iter_mut().zip(&pivot_row) {
                    *v = f.sub(*v, f.mul(factor, p));
                }
            }
        }
    }
    Ok(a.into_iter().map(|row| row[n..].to_vec()).collect())
}

/// Coefficients (lowest first) of the polynomial of degree `< n` through
/// `(xs[i], ys[i])`.
pub fn solve_vandermonde(f: &PrimeField, xs: &[u64], ys: &[u64]) -> Result<Vec<u64>> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), found: ys.len() });
    }
    let inv = vandermonde_inverse(f, xs)?;
    Ok(inv.iter().map(|row| row.iter().zip(ys).fold(0, |acc, (&a, &y)| f.add(acc, f.mul(a, y)))).collect())
}

pub fn encode_slices(blocks: &[ShardBlock], points: &EvalPoints, codec: &FixedPointCodec) -> Result<Vec<CodedSlice>> {
    LagrangeCode::for_codec(points.clone(), codec)?.encode(blocks)
}

pub fn reconstruct_fast(
    slices: &[CodedSlice],
    points: &EvalPoints,
    codec: &FixedPointCodec,
) -> Result<Vec<ShardBlock>> {
    LagrangeCode::for_codec(points.clone(), codec)?.reconstruct_fast(slices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::MERSENNE_31;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn field() -> PrimeField {
        PrimeField::new(MERSENNE_31).unwrap()
    }

    fn blocks(values: &[&[u64]]) -> Vec<ShardBlock> {
        values
            .iter()
            .enumerate()
            .map(|(s, v)| ShardBlock { shard_id: s as u32, round: 1, values: v.to_vec() })
            .collect()
    }

    #[test]
    fn single_shard_is_constant() {
        let code = LagrangeCode::new(EvalPoints::standard(1, 4), field()).unwrap();
        let b = blocks(&[&[5, 9, 0]]);
        for sl in code.encode(&b).unwrap() {
            assert_eq!(sl.values, vec![5, 9, 0]);
        }
        let back = code.reconstruct_fast(&code.encode(&b).unwrap()[2..3]).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn line_through_two_blocks() {
        // ω = (0, 1), blocks (2, 6): u(α) = 2 + 4α
        let points = EvalPoints::new(vec![0, 1], vec![2, 3, 4]);
        let code = LagrangeCode::new(points, field()).unwrap();
        let b = blocks(&[&[2], &[6]]);
        let slices = code.encode(&b).unwrap();
        assert_eq!(slices[0].values, vec![10]);
        assert_eq!(slices[1].values, vec![14]);
        assert_eq!(code.evaluate_at(&b, 0).unwrap(), vec![2]);
        assert_eq!(code.evaluate_at(&b, 1).unwrap(), vec![6]);

        assert_eq!(solve_vandermonde(&field(), &[2, 3], &[10, 14]).unwrap(), vec![2, 4]);
        assert_eq!(code.reconstruct_fast(&slices[0..2]).unwrap(), b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = field();
        assert!(LagrangeCode::new(EvalPoints::new(vec![1, 2], vec![2, 3]), f).is_err());
        assert!(LagrangeCode::new(EvalPoints::standard(3, 2), f).is_err());
        let code = LagrangeCode::new(EvalPoints::standard(2, 5), f).unwrap();
        assert!(code.encode(&blocks(&[&[1, 2], &[3]])).is_err());
        let slices = code.encode(&blocks(&[&[1], &[3]])).unwrap();
        assert!(code.reconstruct_fast(&slices[0..1]).is_err());
        assert!(code.reconstruct_fast(&[slices[0].clone(), slices[0].clone()]).is_err());
    }

    #[test]
    fn exec_modes_agree() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<Vec<u64>> =
            (0..4).map(|_| (0..100).map(|_| rng.random_range(0..MERSENNE_31)).collect()).collect();
        let refs: Vec<&[u64]> = vals.iter().map(|v| v.as_slice()).collect();
        let b = blocks(&refs);
        let seq = LagrangeCode::new(EvalPoints::standard(4, 10), field()).unwrap().with_exec(Exec::Sequential);
        let par = seq.clone().with_exec(Exec::Parallel);
        assert_eq!(seq.encode(&b).unwrap(), par.encode(&b).unwrap());
    }

    proptest! {
        #[test]
        fn any_s_slices_roundtrip(
            seed in any::<u64>(), shards in 1usize..5, extra in 0usize..6, len in 1usize..20,
        ) {
            let clients = shards + extra;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let vals: Vec<Vec<u64>> = (0..shards).map(|_| (0..len).map(|_| rng.random_range(0..MERSENNE_31)).collect()).collect();
            let refs: Vec<&[u64]> = vals.iter().map(|v| v.as_slice()).collect();
            let b = blocks(&refs);
            let code = LagrangeCode::new(EvalPoints::standard(shards, clients), field()).unwrap();
            let slices = code.encode(&b).unwrap();
            for (s, block) in b.iter().enumerate() {
                prop_assert_eq!(&code.evaluate_at(&b, code.points().omegas[s]).unwrap(), &block.values);
            }
            let mut pick: Vec<usize> = (0..clients).collect();
            rand::seq::SliceRandom::shuffle(pick.as_mut_slice(), &mut rng);
            let subset: Vec<CodedSlice> = pick[..shards].iter().map(|&i| slices[i].clone()).collect();
            prop_assert_eq!(code.reconstruct_fast(&subset).unwrap(), b);
        }
    }
}
