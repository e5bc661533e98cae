//! Quadratic `u`-update.
//!
//! Minimizes `J(u) + ⟨b, Au⟩ + (η/2)‖Au − v‖² [+ ½‖u − c‖²]` by solving
//! `(2αQ + ηAᵀA [+ I]) u = ηAᵀv − Aᵀb [+ c]` with conjugate gradients.

use crate::error::{Error, Result};
use crate::linop::LinearMap;
use crate::prox::QuadraticRegularizer;
use crate::signal::{dot, Signal};

#[derive(Debug, Clone, Copy)]
pub struct UStepOptions {
    /// Stop when `‖residual‖ ≤ tol · (1 + ‖rhs‖)`.
    pub tol: f64,
    /// Overrides the default cap of `max(200, 10·√κ)`.
    pub max_iter: Option<usize>,
}

impl Default for UStepOptions {
    fn default() -> Self {
        UStepOptions {
            tol: 1e-9,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct UStepOutcome {
    pub u: Signal,
    pub iterations: usize,
    pub residual: f64,
}

struct NormalOperator<'a> {
    reg: &'a QuadraticRegularizer,
    a: &'a LinearMap,
    eta: f64,
    prox_weight: f64,
}

impl NormalOperator<'_> {
    fn apply(&self, x: &Signal) -> Result<Signal> {
        let mut out = self.a.apply_normal(x)?.scale(self.eta);
        let qx = self.reg.apply_q(x);
        let two_alpha = 2.0 * self.reg.alpha;
        for ((o, q), xi) in out.values_mut().iter_mut().zip(qx.values()).zip(x.values()) {
            *o += two_alpha * q + self.prox_weight * xi;
        }
        Ok(out)
    }

    /// Crude condition number estimate from norm bounds.
    fn condition_estimate(&self) -> f64 {
        let ndim = self.a.domain_shape().ndim();
        let two_alpha = 2.0 * self.reg.alpha;
        let upper =
            two_alpha * self.reg.q_norm_bound(ndim) + self.eta * self.a.norm_bound().powi(2) + self.prox_weight;
        let mut lower = self.prox_weight;
        if self.reg.kind == crate::prox::RegularizerKind::SquaredNorm {
            lower += two_alpha;
        }
        if self.a.is_identity() {
            lower += self.eta;
        }
        if lower <= 0.0 {
            lower = 1e-6 * upper;
        }
        upper / lower
    }
}

/// Solves the `u`-update. `center` adds the proximal term `½‖u − center‖²`;
/// `warm` is the CG starting point.
#[allow(clippy::too_many_arguments)]
pub fn solve_u_step(
    reg: &QuadraticRegularizer,
    a: &LinearMap,
    b: &Signal,
    v: &Signal,
    eta: f64,
    center: Option<&Signal>,
    warm: Option<&Signal>,
    opts: &UStepOptions,
) -> Result<UStepOutcome> {
    if !(eta > 0.0) {
        return Err(Error::invalid(format!("eta must be > 0, got {eta}")));
    }
    b.check_shape(a.codomain_shape())?;
    v.check_shape(a.codomain_shape())?;
    if let Some(c) = center {
        c.check_shape(a.domain_shape())?;
    }
    if let Some(w) = warm {
        w.check_shape(a.domain_shape())?;
    }

    // rhs = Aᵀ(ηv − b) [+ c]
    let mut rhs = a.apply_adjoint(&v.scale(eta).sub(b))?;
    if let Some(c) = center {
        rhs = rhs.add(c);
    }
    let op = NormalOperator {
        reg,
        a,
        eta,
        prox_weight: if center.is_some() { 1.0 } else { 0.0 },
    };
    let cap = opts
        .max_iter
        .unwrap_or_else(|| ((10.0 * op.condition_estimate().sqrt()).ceil() as usize).max(200));
    let threshold = opts.tol * (1.0 + rhs.norm());

    let mut x = match warm {
        Some(w) => w.clone(),
        None => Signal::zeros(a.domain_shape()),
    };
    let mut r = rhs.sub(&op.apply(&x)?);
    let mut rr = r.norm_sq();
    if rr.sqrt() <= threshold {
        return Ok(UStepOutcome {
            u: x,
            iterations: 0,
            residual: rr.sqrt(),
        });
    }
    let mut p = r.clone();
    for it in 1..=cap {
        let ap = op.apply(&p)?;
        let pap = dot(p.values(), ap.values());
        if !(pap > 0.0) {
            return Err(Error::SolverFailure {
                solver: "u-step CG (operator not positive definite)",
                iterations: it,
                residual: rr.sqrt(),
            });
        }
        let step = rr / pap;
        x = x.add_scaled(step, &p);
        r = r.add_scaled(-step, &ap);
        let rr_new = r.norm_sq();
        if rr_new.sqrt() <= threshold {
            // Recompute the true residual once to guard against drift.
            let true_res = rhs.sub(&op.apply(&x)?).norm();
            if true_res <= threshold {
                return Ok(UStepOutcome {
                    u: x,
                    iterations: it,
                    residual: true_res,
                });
            }
            r = rhs.sub(&op.apply(&x)?);
            rr = r.norm_sq();
            p = r.clone();
            continue;
        }
        p = r.add_scaled(rr_new / rr, &p);
        rr = rr_new;
    }
    Err(Error::SolverFailure {
        solver: "u-step CG",
        iterations: cap,
        residual: rr.sqrt(),
    })
}
