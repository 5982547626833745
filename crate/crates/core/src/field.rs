//! Arithmetic in a prime field F_p with p < 2^63, elements stored as `u64`.
//!
//! Polynomials are plain coefficient vectors, lowest degree first, with no
//! trailing zeros (the zero polynomial is the empty vector).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2^31 - 1.
pub const MERSENNE_31: u64 = 2_147_483_647;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrimeField {
    p: u64,
}

impl PrimeField {
    pub fn new(p: u64) -> Result<Self> {
        if p >= 1 << 63 {
            return Err(Error::invalid(format!("modulus {p} must be below 2^63")));
        }
        if !is_prime(p) {
            return Err(Error::invalid(format!("modulus {p} is not prime")));
        }
        Ok(Self { p })
    }

    #[inline]
    pub fn modulus(&self) -> u64 {
        self.p
    }

    #[inline]
    pub fn reduce(&self, x: u64) -> u64 {
        x % self.p
    }

    /// Maps a signed integer into the field (negatives become p - |v|).
    pub fn from_i64(&self, v: i64) -> u64 {
        let r = v.rem_euclid(self.p as i64);
        r as u64
    }

    /// Centered lift: values above p/2 are read as negative.
    pub fn to_i64(&self, x: u64) -> i64 {
        if x > self.p / 2 {
            -((self.p - x) as i64)
        } else {
            x as i64
        }
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.p {
            s - self.p
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.p - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.p - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.p as u128) as u64
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.p;
        base %= self.p;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inv(&self, a: u64) -> Option<u64> {
        let a = a % self.p;
        if a == 0 {
            None
        } else {
            Some(self.pow(a, self.p - 2))
        }
    }

    // Polynomial helpers. `ops` counts field multiplications.

    pub fn poly_eval(&self, coeffs: &[u64], x: u64) -> u64 {
        coeffs.iter().rev().fold(0, |acc, &c| self.add(self.mul(acc, x), c))
    }

    pub fn poly_sub(&self, a: &[u64], b: &[u64]) -> Vec<u64> {
        let n = a.len().max(b.len());
        let mut out: Vec<u64> = (0..n)
            .map(|i| {
                let x = a.get(i).copied().unwrap_or(0);
                let y = b.get(i).copied().unwrap_or(0);
                self.sub(x, y)
            })
            .collect();
        trim(&mut out);
        out
    }

    pub fn poly_mul(&self, a: &[u64], b: &[u64], ops: &mut u64) -> Vec<u64> {
        if a.is_empty() || b.is_empty() {
            return Vec::new();
        }
        let mut out = vec![0u64; a.len() + b.len() - 1];
        for (i, &x) in a.iter().enumerate() {
            if x == 0 {
                continue;
            }
            for (j, &y) in b.iter().enumerate() {
                out[i + j] = self.add(out[i + j], self.mul(x, y));
            }
            *ops += b.len() as u64;
        }
        trim(&mut out);
        out
    }

    /// Long division; returns (quotient, remainder). Panics on a zero divisor.
    pub fn poly_divrem(&self, num: &[u64], den: &[u64], ops: &mut u64) -> (Vec<u64>, Vec<u64>) {
        assert!(!den.is_empty(), "division by the zero polynomial");
        if num.len() < den.len() {
            return (Vec::new(), num.to_vec());
        }
        let lead_inv = self.inv(*den.last().unwrap()).expect("trimmed polynomial");
        let mut rem = num.to_vec();
        let mut quot = vec![0u64; num.len() - den.len() + 1];
        for k in (0..quot.len()).rev() {
            let top = rem[k + den.len() - 1];
            if top == 0 {
                continue;
            }
            let q = self.mul(top, lead_inv);
            quot[k] = q;
            for (j, &d) in den.iter().enumerate() {
                rem[k + j] = self.sub(rem[k + j], self.mul(q, d));
            }
            *ops += den.len() as u64 + 1;
        }
        trim(&mut quot);
        rem.truncate(den.len() - 1);
        trim(&mut rem);
        (quot, rem)
    }

    /// ∏ (x - r) over the given roots.
    pub fn poly_from_roots(&self, roots: &[u64]) -> Vec<u64> {
        let mut out = vec![1u64];
        for &r in roots {
            let mut next = vec![0u64; out.len() + 1];
            for (i, &c) in out.iter().enumerate() {
                next[i + 1] = self.add(next[i + 1], c);
                next[i] = self.sub(next[i], self.mul(c, r));
            }
            out = next;
        }
        out
    }
}

/// Degree of a trimmed polynomial; `None` for the zero polynomial.
pub fn degree(poly: &[u64]) -> Option<usize> {
    poly.len().checked_sub(1)
}

pub fn trim(poly: &mut Vec<u64>) {
    while poly.last() == Some(&0) {
        poly.pop();
    }
}

/// Deterministic Miller-Rabin, exact for all u64.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &w in &WITNESSES {
        if n == w {
            return true;
        }
        if n.is_multiple_of(w) {
            return false;
        }
    }
    let mulmod = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let powmod = |mut b: u64, mut e: u64| {
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = mulmod(acc, b);
            }
            b = mulmod(b, b);
            e >>= 1;
        }
        acc
    };
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'outer: for &a in &WITNESSES {
        let mut x = powmod(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x);
            if x == n - 1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}
