//! Elementwise affine normalization of network inputs.

use nalgebra::DVector;

/// Per-dimension standardization y = (x - mean) / std.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineNormalizer {
    pub mean: DVector<f64>,
    pub std: DVector<f64>,
}

impl AffineNormalizer {
    /// Identity normalizer of the given width.
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: DVector::zeros(dim),
            std: DVector::repeat(dim, 1.0),
        }
    }

    pub fn new(mean: DVector<f64>, std: DVector<f64>) -> Self {
        assert_eq!(mean.len(), std.len());
        assert!(std.iter().all(|&s| s > 0.0), "std entries must be positive");
        Self { mean, std }
    }

    /// Fit to a sample set (one sample per column slice of `dim` values),
    /// flooring the standard deviation so constant dimensions stay usable.
    pub fn fit(samples: &[Vec<f64>], dim: usize) -> Self {
        assert!(!samples.is_empty());
        let n = samples.len() as f64;
        let mut mean = DVector::zeros(dim);
        for s in samples {
            assert_eq!(s.len(), dim);
            for i in 0..dim {
                mean[i] += s[i];
            }
        }
        mean /= n;
        let mut var = DVector::zeros(dim);
        for s in samples {
            for i in 0..dim {
                let d = s[i] - mean[i];
                var[i] += d * d;
            }
        }
        var /= n;
        let std = var.map(|v| v.sqrt().max(1e-6));
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, x: &DVector<f64>) -> DVector<f64> {
        (x - &self.mean).component_div(&self.std)
    }

    pub fn denormalize(&self, y: &DVector<f64>) -> DVector<f64> {
        y.component_mul(&self.std) + &self.mean
    }
}
