//! Real-valued 1D and 2D signals and the small amount of vector algebra the
//! solvers need on them.
//!
//! 2D signals are stored row-major. All arithmetic is `f64`, and every
//! reduction runs in index order so results are reproducible bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Dimension list of a signal: `[n]` or `[height, width]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() || dims.len() > 2 {
            return Err(Error::invalid(format!(
                "signals are 1D or 2D, got {} dimensions",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::invalid(format!("zero-length dimension in {dims:?}")));
        }
        Ok(Shape(dims.to_vec()))
    }

    pub fn d1(n: usize) -> Self {
        Shape(vec![n])
    }

    pub fn d2(h: usize, w: usize) -> Self {
        Shape(vec![h, w])
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn ndim(&self) -> usize {
        self.0.len()
    }

    pub fn len(&self) -> usize {
        self.0.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(rows, cols)`; a 1D signal of length n is a single row.
    pub fn rows_cols(&self) -> (usize, usize) {
        match self.0.as_slice() {
            [n] => (1, *n),
            [h, w] => (*h, *w),
            _ => unreachable!("shape has 1 or 2 dims"),
        }
    }
}

/// Seed for the deterministic noise generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSeed(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    values: Vec<f64>,
    shape: Shape,
}

impl Signal {
    /// Builds a signal, rejecting non-finite entries and size mismatches.
    pub fn new(values: Vec<f64>, shape: Shape) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::invalid(format!(
                "{} values do not fill shape {:?}",
                values.len(),
                shape.dims()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value {} at index {i}",
                values[i]
            )));
        }
        Ok(Signal { values, shape })
    }

    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Signal::new(values, Shape::new(&[n])?)
    }

    pub fn zeros(shape: &Shape) -> Self {
        Signal {
            values: vec![0.0; shape.len()],
            shape: shape.clone(),
        }
    }

    /// Internal constructor for results of arithmetic on valid signals.
    pub(crate) fn from_parts(values: Vec<f64>, shape: Shape) -> Self {
        debug_assert_eq!(values.len(), shape.len());
        Signal { values, shape }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check_shape(&self, expected: &Shape) -> Result<()> {
        if &self.shape != expected {
            return Err(Error::ShapeMismatch {
                expected: expected.dims().to_vec(),
                actual: self.shape.dims().to_vec(),
            });
        }
        Ok(())
    }

    pub fn dot(&self, other: &Signal) -> f64 {
        dot(&self.values, &other.values)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.values, &self.values)
    }

    /// `‖self − other‖`
    pub fn dist(&self, other: &Signal) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Signal {
        Signal::from_parts(self.values.iter().map(|&v| f(v)).collect(), self.shape.clone())
    }

    pub fn zip_map(&self, other: &Signal, f: impl Fn(f64, f64) -> f64) -> Signal {
        debug_assert_eq!(self.shape, other.shape);
        Signal::from_parts(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            self.shape.clone(),
        )
    }

    pub fn add(&self, other: &Signal) -> Signal {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Signal) -> Signal {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Signal {
        self.map(|v| s * v)
    }

    /// `self + s·other`
    pub fn add_scaled(&self, s: f64, other: &Signal) -> Signal {
        self.zip_map(other, |a, b| a + s * b)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn reshape(self, shape: Shape) -> Result<Signal> {
        Signal::new(self.values, shape)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// i.i.d. N(0, σ²) samples, deterministic in `seed`.
pub fn gaussian_noise(shape: &Shape, sigma: f64, seed: RngSeed) -> Result<Signal> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(Signal::zeros(shape));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.0);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let values = (0..shape.len()).map(|_| normal.sample(&mut rng)).collect();
    Ok(Signal::from_parts(values, shape.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_bad_size() {
        assert!(Signal::from_vec(vec![1.0, f64::NAN]).is_err());
        assert!(Signal::from_vec(vec![f64::INFINITY]).is_err());
        assert!(Signal::new(vec![1.0; 5], Shape::d2(2, 3)).is_err());
        assert!(Shape::new(&[2, 2, 2]).is_err());
        assert!(Shape::new(&[0]).is_err());
    }

    #[test]
    fn zero_sigma_is_zero_signal() {
        let s = gaussian_noise(&Shape::d1(17), 0.0, RngSeed(3)).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn negative_sigma_rejected() {
        assert!(gaussian_noise(&Shape::d1(4), -0.1, RngSeed(0)).is_err());
    }

    #[test]
    fn noise_is_deterministic() {
        let shape = Shape::d2(8, 9);
        let a = gaussian_noise(&shape, 0.3, RngSeed(42)).unwrap();
        let b = gaussian_noise(&shape, 0.3, RngSeed(42)).unwrap();
        let c = gaussian_noise(&shape, 0.3, RngSeed(43)).unwrap();
        let bits = |s: &Signal| s.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn noise_statistics() {
        // n = 1e5: the sample std has relative standard error ~ 1/sqrt(2n) = 0.22%,
        // so 2% is roughly a 9-sigma band.
        let n = 100_000;
        let s = gaussian_noise(&Shape::d1(n), 0.05, RngSeed(7)).unwrap();
        let mean = s.values().iter().sum::<f64>() / n as f64;
        let var = s.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 5.0 * 0.05 / (n as f64).sqrt());
        assert!((var.sqrt() - 0.05).abs() < 0.02 * 0.05);
    }
}
