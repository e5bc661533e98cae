//! The two ADMM sub-minimizations.
//!
//! * [`ustep`]: the quadratic `u`-update, solved by conjugate gradients on the
//!   normal equations.
//! * [`vstep`]: the nonsmooth `v`-update, solved by steepest subdifferential
//!   descent with an exact piecewise-linear line search.
//! * [`mnp`]: projection onto the convex hull of a finite generator set
//!   (Wolfe's minimum-norm-point method), used by the `v`-update.

pub mod mnp;
pub mod ustep;
pub mod vstep;

pub use mnp::{min_norm_projection, project_onto_hull, DenseGenerators, HullGenerators, HullProjection, MnpOptions};
pub use ustep::{solve_u_step, UStepOptions, UStepOutcome};
pub use vstep::{
    max_step_preserving_active, solve_v_step, solve_v_step_centered, DescentStep, StepLength, StepLimit,
    VStepOptions, VStepOutcome,
};

use crate::error::{Error, Result};
use crate::linop::LinearMap;
use crate::multiscale::{eval_penalty, WindowSystem};
use crate::signal::Signal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularizerKind {
    /// `α‖u‖²`
    SquaredNorm,
    /// `α‖∇u‖²` with forward differences and no flux across the border.
    SquaredGradient,
}

impl std::str::FromStr for RegularizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared-norm" | "norm" | "l2" => Ok(RegularizerKind::SquaredNorm),
            "squared-gradient" | "gradient" | "grad" => Ok(RegularizerKind::SquaredGradient),
            other => Err(Error::Config(format!("unknown regularizer `{other}`"))),
        }
    }
}

impl std::fmt::Display for RegularizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RegularizerKind::SquaredNorm => "squared-norm",
            RegularizerKind::SquaredGradient => "squared-gradient",
        })
    }
}

/// Convex quadratic regularizer `J(u) = α⟨u, Qu⟩` with `Q = I` or `Q = ∇ᵀ∇`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticRegularizer {
    pub kind: RegularizerKind,
    pub alpha: f64,
}

impl QuadraticRegularizer {
    pub fn new(kind: RegularizerKind, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::invalid(format!("regularizer weight must be > 0, got {alpha}")));
        }
        Ok(QuadraticRegularizer { kind, alpha })
    }

    pub fn squared_norm(alpha: f64) -> Result<Self> {
        QuadraticRegularizer::new(RegularizerKind::SquaredNorm, alpha)
    }

    pub fn squared_gradient(alpha: f64) -> Result<Self> {
        QuadraticRegularizer::new(RegularizerKind::SquaredGradient, alpha)
    }

    pub fn value(&self, u: &Signal) -> f64 {
        match self.kind {
            RegularizerKind::SquaredNorm => self.alpha * u.norm_sq(),
            RegularizerKind::SquaredGradient => {
                let (rows, cols) = u.shape().rows_cols();
                let x = u.values();
                let mut acc = 0.0;
                for i in 0..rows {
                    for j in 0..cols {
                        let c = x[i * cols + j];
                        if j + 1 < cols {
                            acc += (x[i * cols + j + 1] - c).powi(2);
                        }
                        if i + 1 < rows {
                            acc += (x[(i + 1) * cols + j] - c).powi(2);
                        }
                    }
                }
                self.alpha * acc
            }
        }
    }

    /// `Q x`, so that `∇J(u) = 2α Q u`.
    pub(crate) fn apply_q(&self, x: &Signal) -> Signal {
        match self.kind {
            RegularizerKind::SquaredNorm => x.clone(),
            RegularizerKind::SquaredGradient => {
                let (rows, cols) = x.shape().rows_cols();
                let v = x.values();
                let mut out = vec![0.0; v.len()];
                for i in 0..rows {
                    for j in 0..cols {
                        let k = i * cols + j;
                        if j + 1 < cols {
                            let d = v[k + 1] - v[k];
                            out[k] -= d;
                            out[k + 1] += d;
                        }
                        if i + 1 < rows {
                            let d = v[k + cols] - v[k];
                            out[k] -= d;
                            out[k + cols] += d;
                        }
                    }
                }
                Signal::from_parts(out, x.shape().clone())
            }
        }
    }

    /// Upper bound on the spectral radius of `Q`.
    pub(crate) fn q_norm_bound(&self, ndim: usize) -> f64 {
        match self.kind {
            RegularizerKind::SquaredNorm => 1.0,
            RegularizerKind::SquaredGradient => 4.0 * ndim as f64,
        }
    }
}

/// Objective of the penalized problem and the coupling pieces for logging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParts {
    /// `J(u)`
    pub regularizer: f64,
    /// `θ(F_q(v))`
    pub theta: f64,
    /// `J(u) + ρ θ(F_q(v))`
    pub objective: f64,
    /// `‖Au − v‖`
    pub coupling_gap: f64,
}

pub fn eval_objective(
    reg: &QuadraticRegularizer,
    ws: &WindowSystem,
    y: &Signal,
    rho: f64,
    u: &Signal,
    v: &Signal,
    a: &LinearMap,
) -> Result<ObjectiveParts> {
    let au = a.apply(u)?;
    let theta = eval_penalty(ws, v, y)?.theta;
    let regularizer = reg.value(u);
    Ok(ObjectiveParts {
        regularizer,
        theta,
        objective: regularizer + rho * theta,
        coupling_gap: au.dist(v),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiscale::ScalingRule;
    use crate::signal::Shape;

    #[test]
    fn objective_at_data_is_zero() {
        let ws = WindowSystem::build_1d(5, 1, 2, 0.1, ScalingRule::default()).unwrap();
        let y = Signal::from_vec(vec![0.1, 0.4, -0.3, 0.2, 0.0]).unwrap();
        let reg = QuadraticRegularizer::squared_norm(0.01).unwrap();
        let a = LinearMap::identity(Shape::d1(5));
        let u = Signal::zeros(&Shape::d1(5));
        let p = eval_objective(&reg, &ws, &y, 3.0, &u, &y, &a).unwrap();
        assert_eq!(p.objective, 0.0);
        assert_eq!(p.theta, 0.0);
    }

    #[test]
    fn regularizer_arithmetic() {
        let reg = QuadraticRegularizer::squared_norm(0.01).unwrap();
        let u = Signal::from_vec(vec![2.0, 0.0]).unwrap();
        assert!((reg.value(&u) - 0.04).abs() < 1e-15);
        let g = QuadraticRegularizer::squared_gradient(0.5).unwrap();
        let u = Signal::new(vec![0.0, 1.0, 3.0, 1.0], Shape::d2(2, 2)).unwrap();
        // differences: (1), (-2) horizontal; (3), (0) vertical
        assert!((g.value(&u) - 0.5 * (1.0 + 4.0 + 9.0 + 0.0)).abs() < 1e-15);
    }

    #[test]
    fn gradient_q_is_symmetric_and_matches_value() {
        let reg = QuadraticRegularizer::squared_gradient(1.0).unwrap();
        let u = Signal::new((0..12).map(|i| (i as f64 * 1.3).cos()).collect(), Shape::d2(3, 4)).unwrap();
        let w = Signal::new((0..12).map(|i| (i as f64 * 0.7).sin()).collect(), Shape::d2(3, 4)).unwrap();
        assert!((reg.apply_q(&u).dot(&w) - u.dot(&reg.apply_q(&w))).abs() < 1e-12);
        assert!((reg.apply_q(&u).dot(&u) - reg.value(&u)).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_alpha_rejected() {
        assert!(QuadraticRegularizer::squared_norm(0.0).is_err());
        assert!(QuadraticRegularizer::squared_gradient(-1.0).is_err());
    }

    #[test]
    fn random_instance_recomputed() {
        let ws = WindowSystem::build_1d(6, 1, 3, 0.05, ScalingRule::default()).unwrap();
        let y = Signal::from_vec(vec![0.3, -0.1, 0.2, 0.5, 0.0, -0.4]).unwrap();
        let u = Signal::from_vec(vec![0.1, 0.2, 0.1, 0.4, 0.1, -0.2]).unwrap();
        let v = Signal::from_vec(vec![0.2, 0.0, 0.3, 0.3, 0.2, -0.1]).unwrap();
        let reg = QuadraticRegularizer::squared_gradient(0.01).unwrap();
        let a = LinearMap::identity(Shape::d1(6));
        let p = eval_objective(&reg, &ws, &y, 2.0, &u, &v, &a).unwrap();
        // from scratch
        let j: f64 = 0.01 * u.values().windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>();
        let mut theta: f64 = 0.0;
        for len in 1..=3 {
            for o in 0..=6 - len {
                let s: f64 = (o..o + len).map(|i| v.values()[i] - y.values()[i]).sum();
                theta = theta.max(s.abs() / (len as f64).sqrt() - 0.05);
            }
        }
        assert!((p.objective - (j + 2.0 * theta)).abs() < 1e-14);
    }
}
