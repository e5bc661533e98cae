//! Deterministic test signals.

use crate::error::{Error, Result};
use crate::signal::{gaussian_noise, RngSeed, Shape, Signal};

/// Piecewise test signal on `n ≥ 16` samples: constant blocks, a linear ramp
/// and a smooth bump.
pub fn truth_1d(n: usize) -> Result<Signal> {
    if n < 16 {
        return Err(Error::invalid(format!("synthetic signal needs n >= 16, got {n}")));
    }
    let v = (0..n)
        .map(|i| {
            let t = (i as f64 + 0.5) / n as f64;
            if t < 0.15 {
                0.0
            } else if t < 0.35 {
                1.0
            } else if t < 0.45 {
                0.25
            } else if t < 0.65 {
                0.25 + 3.0 * (t - 0.45)
            } else if t < 0.9 {
                0.2 + 0.6 * (-((t - 0.775) / 0.05).powi(2)).exp()
            } else {
                0.5
            }
        })
        .collect();
    Signal::from_vec(v)
}

/// `(truth, truth + noise)`.
pub fn gen_synthetic_1d(n: usize, sigma: f64, seed: RngSeed) -> Result<(Signal, Signal)> {
    let truth = truth_1d(n)?;
    let noise = gaussian_noise(truth.shape(), sigma, seed)?;
    let noisy = truth.add(&noise);
    Ok((truth, noisy))
}

/// `h × w` test image: a bright disc, a rectangle and a diagonal ramp.
pub fn truth_2d(h: usize, w: usize) -> Result<Signal> {
    if h < 4 || w < 4 {
        return Err(Error::invalid(format!("synthetic image needs at least 4x4, got {h}x{w}")));
    }
    let mut v = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let (y, x) = ((i as f64 + 0.5) / h as f64, (j as f64 + 0.5) / w as f64);
            let mut p = 0.1 + 0.2 * (x + y) / 2.0;
            if (x - 0.3).powi(2) + (y - 0.35).powi(2) < 0.04 {
                p += 0.8;
            }
            if (0.55..0.85).contains(&x) && (0.5..0.8).contains(&y) {
                p += 0.5;
            }
            v.push(p);
        }
    }
    Signal::new(v, Shape::d2(h, w))
}

pub fn gen_synthetic_2d(h: usize, w: usize, sigma: f64, seed: RngSeed) -> Result<(Signal, Signal)> {
    let truth = truth_2d(h, w)?;
    let noise = gaussian_noise(truth.shape(), sigma, seed)?;
    let noisy = truth.add(&noise);
    Ok((truth, noisy))
}
