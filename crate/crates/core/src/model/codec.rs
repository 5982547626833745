use serde::{Deserialize, Serialize};

use super::ParamVector;
use crate::error::{Error, Result};
use crate::field::{PrimeField, MERSENNE_31};

/// Fixed-point mapping between real parameters and elements of F_p.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointCodec {
    field: PrimeField,
    scale: u64,
    clamp_range: f64,
}

impl Default for FixedPointCodec {
    fn default() -> Self {
        Self::new(MERSENNE_31, 1 << 16, 8.0).expect("default codec is valid")
    }
}

/// Output of [`FixedPointCodec::quantize`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Quantized {
    pub values: Vec<u64>,
    /// Number of inputs that were saturated at ±clamp_range.
    pub clamped: usize,
}

impl FixedPointCodec {
    pub fn new(prime: u64, scale: u64, clamp_range: f64) -> Result<Self> {
        let field = PrimeField::new(prime)?;
        if scale == 0 || !scale.is_power_of_two() {
            return Err(Error::invalid(format!("scale {scale} must be a power of two")));
        }
        if !(clamp_range.is_finite() && clamp_range > 0.0) {
            return Err(Error::invalid("clamp_range must be positive and finite"));
        }
        if (prime as f64) <= 2.0 * scale as f64 * clamp_range {
            return Err(Error::invalid(format!(
                "prime {prime} must exceed 2*scale*clamp_range = {}",
                2.0 * scale as f64 * clamp_range
            )));
        }
        Ok(Self { field, scale, clamp_range })
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    pub fn prime(&self) -> u64 {
        self.field.modulus()
    }

    pub fn scale(&self) -> u64 {
        self.scale
    }

    pub fn clamp_range(&self) -> f64 {
        self.clamp_range
    }

    /// Largest elementwise error of a quantize/dequantize round trip.
    pub fn resolution(&self) -> f64 {
        0.5 / self.scale as f64
    }

    /// Fails unless the field has room for `points` distinct evaluation points.
    pub fn check_points(&self, points: usize) -> Result<()> {
        if (points as u64) >= self.prime() {
            return Err(Error::invalid(format!("prime {} too small for {points} evaluation points", self.prime())));
        }
        Ok(())
    }

    pub fn quantize_value(&self, v: f32) -> (u64, bool) {
        let r = self.clamp_range;
        let x = v as f64;
        let clamped = x.clamp(-r, r);
        let n = (clamped * self.scale as f64).round() as i64;
        (self.field.from_i64(n), clamped != x)
    }

    pub fn quantize(&self, params: &ParamVector) -> Quantized {
        self.quantize_slice(params.values())
    }

    pub fn quantize_slice(&self, values: &[f32]) -> Quantized {
        let mut clamped = 0;
        let values = values
            .iter()
            .map(|&v| {
                let (q, c) = self.quantize_value(v);
                clamped += c as usize;
                q
            })
            .collect();
        if clamped > 0 {
            log::warn!("quantize saturated {clamped} value(s) at ±{}", self.clamp_range);
        }
        Quantized { values, clamped }
    }

    pub fn dequantize_value(&self, x: u64) -> f32 {
        (self.field.to_i64(x) as f64 / self.scale as f64) as f32
    }

    pub fn dequantize_values(&self, field_values: &[u64]) -> Vec<f32> {
        field_values.iter().map(|&x| self.dequantize_value(x)).collect()
    }

    /// Inverse of [`quantize`](Self::quantize) onto a flat layout.
    pub fn dequantize(&self, field_values: &[u64]) -> ParamVector {
        ParamVector::from_values(self.dequantize_values(field_values)).expect("dequantized values are finite")
    }
}
