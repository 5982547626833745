use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub shape: Vec<usize>,
}

impl LayerShape {
    pub fn new(name: impl Into<String>, shape: Vec<usize>) -> Self {
        Self { name: name.into(), shape }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered description of how a flat vector maps onto model tensors.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Layout {
    layers: Vec<LayerShape>,
}

impl Layout {
    pub fn new(layers: Vec<LayerShape>) -> Self {
        Self { layers }
    }

    /// A single anonymous layer of length `dim`.
    pub fn flat(dim: usize) -> Self {
        Self::new(vec![LayerShape::new("flat", vec![dim])])
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn dim(&self) -> usize {
        self.layers.iter().map(LayerShape::len).sum()
    }
}

/// Flat model parameters together with their tensor layout.
///
/// Every constructor rejects non-finite values, so a `ParamVector` in hand is
/// always finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f32>,
    layout: Arc<Layout>,
}

impl ParamVector {
    pub fn new(values: Vec<f32>, layout: Arc<Layout>) -> Result<Self> {
        if values.len() != layout.dim() {
            return Err(Error::DimensionMismatch { expected: layout.dim(), found: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite parameter at index {i}")));
        }
        Ok(Self { values, layout })
    }

    /// Untyped vector with a single flat layer.
    pub fn from_values(values: Vec<f32>) -> Result<Self> {
        let layout = Arc::new(Layout::flat(values.len()));
        Self::new(values, layout)
    }

    pub fn zeros(layout: Arc<Layout>) -> Self {
        Self { values: vec![0.0; layout.dim()], layout }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Same layout, new values.
    pub fn with_values(&self, values: Vec<f32>) -> Result<Self> {
        Self::new(values, Arc::clone(&self.layout))
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }

    pub fn ensure_same_dim(&self, other: &ParamVector) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(())
    }

    /// `self - other`, elementwise.
    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        self.ensure_same_dim(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        self.with_values(values)
    }

    /// Little-endian f32 bytes; the persisted form.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub(crate) fn values_mut_unchecked(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub(crate) fn check_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
