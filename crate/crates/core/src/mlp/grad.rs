use super::Mlp;
use crate::{Error, Result};

/// Partial derivatives laid out like the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradient {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.layers().iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers().iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.biases).flatten()
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.biases.iter_mut()).flatten()
    }

    pub fn is_congruent(&self, net: &Mlp) -> bool {
        self.weights.len() == net.layers().len()
            && net
                .layers()
                .iter()
                .zip(self.weights.iter().zip(&self.biases))
                .all(|(l, (w, b))| l.weights.len() == w.len() && l.biases.len() == b.len())
    }

    pub fn add_assign(&mut self, other: &Gradient) -> Result<()> {
        if self.weights.len() != other.weights.len() {
            return Err(Error::DimensionMismatch { expected: self.weights.len(), got: other.weights.len() });
        }
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.values_mut() {
            *v *= factor;
        }
    }

    pub fn norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    /// Rescale so the global L2 norm is at most `max_norm`; returns the norm
    /// before clipping.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
        n
    }

    /// Flattened values, weights of every layer first, then biases.
    pub fn to_flat(&self) -> Vec<f64> {
        self.values().copied().collect()
    }
}
