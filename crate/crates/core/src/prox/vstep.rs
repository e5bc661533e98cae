//! Nonsmooth `v`-update by steepest subdifferential descent.
//!
//! Minimizes `G(v) = ρ θ(F_q(v)) − ⟨b, v⟩ + (η/2)‖c − v‖²` with `c = Au`.
//! With `r = b + η(c − v)` and `z` the projection of `r` onto
//! `ρ·∂θ(F_q(v))`, the minimum-norm subgradient of `G` is `z − r`, so the
//! descent direction is `d = r − z`. Along `d` the penalty is affine until an
//! inactive window catches up with the active maximum; the step is the first
//! such breakpoint or the minimizer of the quadratic piece, whichever is
//! smaller. Every accepted step either enlarges the active set or lands on
//! the optimum of the current face, so the method terminates finitely in
//! exact arithmetic.

use log::warn;

use crate::error::{Error, Result};
use crate::linop::LinearMap;
use crate::multiscale::{eval_residual, penalty_from_inner, ActiveGenerators, PenaltyEval, WindowSystem};
use crate::prox::mnp::{project_onto_hull, MnpOptions};
use crate::signal::{dot, Signal};

#[derive(Debug, Clone, Copy)]
pub struct VStepOptions {
    /// Stop when `‖z − r‖ ≤ tol · (1 + ‖r‖)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Scale hull generators by `ρ` (consistent with the penalized objective).
    /// When false, the penalty enters the `v`-update with unit weight.
    pub rho_scaled_hull: bool,
    /// Keep a per-step log in [`VStepOutcome::steps`].
    pub record_steps: bool,
    pub mnp: MnpOptions,
}

impl Default for VStepOptions {
    fn default() -> Self {
        VStepOptions {
            tol: 1e-10,
            max_iter: 20_000,
            rho_scaled_hull: true,
            record_steps: false,
            mnp: MnpOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepLimit {
    /// An inactive window (or the zero component) joined the maximum.
    Breakpoint,
    /// The cap, normally the minimizer of the quadratic piece.
    Cap,
    /// No positive step keeps the active maximum affine.
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLength {
    pub lambda: f64,
    pub limit: StepLimit,
}

#[derive(Debug, Clone)]
pub struct DescentStep {
    pub lambda: f64,
    pub limit: StepLimit,
    pub objective_before: f64,
    pub objective_after: f64,
    pub active_before: Vec<usize>,
    /// Active windows carrying weight in the projection.
    pub support: Vec<usize>,
    pub active_after: Vec<usize>,
    pub fallback: bool,
}

#[derive(Debug, Clone)]
pub struct VStepOutcome {
    pub v: Signal,
    pub iterations: usize,
    /// `‖z̄ − r̄‖` at return.
    pub optimality: f64,
    /// `‖r̄‖` at return.
    pub residual_norm: f64,
    pub eval: PenaltyEval,
    pub fallback_steps: usize,
    pub steps: Vec<DescentStep>,
}

/// Largest step along `d` over which the active maximum stays affine and no
/// inactive window overtakes it, capped at `lambda_max`.
///
/// `eval` must be the penalty evaluation at `v`. Returns
/// [`StepLimit::Stalled`] with `λ = 0` when no positive step qualifies.
pub fn max_step_preserving_active(
    ws: &WindowSystem,
    v: &Signal,
    d: &Signal,
    y: &Signal,
    eval: &PenaltyEval,
    lambda_max: f64,
) -> Result<StepLength> {
    v.check_shape(ws.image_shape())?;
    d.check_shape(ws.image_shape())?;
    y.check_shape(ws.image_shape())?;
    if d.norm() == 0.0 {
        return Err(Error::invalid("line search along a zero direction"));
    }
    let rates = ws.inner_products(d.values());
    Ok(breakpoint_step(ws.q(), eval, &rates, lambda_max).0)
}

/// Returns the step and the growth rate of the active maximum along `d`.
fn breakpoint_step(q: f64, eval: &PenaltyEval, rates: &[f64], lambda_max: f64) -> (StepLength, f64) {
    let theta0 = eval.theta;
    // Growth of the active maximum: the fastest-rising active component.
    let mut k = if eval.zero_active { 0.0 } else { f64::NEG_INFINITY };
    for &j in &eval.active {
        k = k.max(eval.inner[j].signum() * rates[j]);
    }
    let mut active_mask = vec![false; eval.inner.len()];
    for &j in &eval.active {
        active_mask[j] = true;
    }
    let mut t_break = f64::INFINITY;
    for (j, (&a, &delta)) in eval.inner.iter().zip(rates).enumerate() {
        if active_mask[j] {
            continue;
        }
        // a + tδ − q = θ0 + kt  and  −a − tδ − q = θ0 + kt
        if delta - k > 0.0 {
            let t = (theta0 + q - a) / (delta - k);
            if t < t_break {
                t_break = t;
            }
        }
        if -delta - k > 0.0 {
            let t = (theta0 + q + a) / (-delta - k);
            if t < t_break {
                t_break = t;
            }
        }
    }
    if !eval.zero_active && k < 0.0 {
        t_break = t_break.min(theta0 / -k);
    }
    let step = if !(t_break > 0.0) {
        StepLength {
            lambda: 0.0,
            limit: StepLimit::Stalled,
        }
    } else if t_break < lambda_max {
        StepLength {
            lambda: t_break,
            limit: StepLimit::Breakpoint,
        }
    } else {
        StepLength {
            lambda: lambda_max,
            limit: StepLimit::Cap,
        }
    };
    (step, k)
}

/// `v`-update of ADMM: `argmin_v ρθ(F_q(v)) − ⟨b, v⟩ + (η/2)‖Au − v‖²`.
#[allow(clippy::too_many_arguments)]
pub fn solve_v_step(
    ws: &WindowSystem,
    y: &Signal,
    rho: f64,
    b: &Signal,
    u: &Signal,
    a: &LinearMap,
    eta: f64,
    v0: &Signal,
    opts: &VStepOptions,
) -> Result<VStepOutcome> {
    let au = a.apply(u)?;
    solve_v_step_centered(ws, y, rho, b, &au, eta, v0, opts)
}

/// Same as [`solve_v_step`] with the center `c = Au` supplied directly.
#[allow(clippy::too_many_arguments)]
pub fn solve_v_step_centered(
    ws: &WindowSystem,
    y: &Signal,
    rho: f64,
    b: &Signal,
    center: &Signal,
    eta: f64,
    v0: &Signal,
    opts: &VStepOptions,
) -> Result<VStepOutcome> {
    if !(eta > 0.0) || !(rho > 0.0) {
        return Err(Error::invalid(format!("need eta > 0 and rho > 0, got eta={eta} rho={rho}")));
    }
    let shape = ws.image_shape();
    for s in [y, b, center, v0] {
        s.check_shape(shape)?;
    }
    let mult = if opts.rho_scaled_hull { rho } else { 1.0 };
    let q = ws.q();
    let yv = y.values();
    let bv = b.values();
    let cv = center.values();
    let objective = |v: &[f64], theta: f64| -> f64 {
        let quad: f64 = cv.iter().zip(v).map(|(c, x)| (c - x) * (c - x)).sum();
        mult * theta - dot(bv, v) + 0.5 * eta * quad
    };

    let mut v = v0.values().to_vec();
    let mut fallback_steps = 0;
    let mut steps = Vec::new();
    let mut iterations = 0;
    loop {
        let residual: Vec<f64> = v.iter().zip(yv).map(|(a, b)| a - b).collect();
        let eval = eval_residual(ws, &residual);
        let r: Vec<f64> = bv.iter().zip(cv).zip(&v).map(|((b, c), x)| b + eta * (c - x)).collect();
        let r_sig = Signal::from_parts(r, shape.clone());
        let gens = ActiveGenerators::new(ws, &eval, mult)?;
        let proj = project_onto_hull(&r_sig, &gens, &opts.mnp)?;
        let d: Vec<f64> = r_sig.values().iter().zip(proj.point.values()).map(|(r, z)| r - z).collect();
        let d_norm = dot(&d, &d).sqrt();
        let r_norm = r_sig.norm();
        if d_norm <= opts.tol * (1.0 + r_norm) {
            return Ok(VStepOutcome {
                v: Signal::new(v, shape.clone())?,
                iterations,
                optimality: d_norm,
                residual_norm: r_norm,
                eval,
                fallback_steps,
                steps,
            });
        }
        if iterations >= opts.max_iter {
            return Err(Error::SolverFailure {
                solver: "v-step steepest subdifferential descent",
                iterations,
                residual: d_norm / (1.0 + r_norm),
            });
        }
        iterations += 1;

        let rates = ws.inner_products(&d);
        let (mut step, k) = breakpoint_step(q, &eval, &rates, f64::INFINITY);
        // φ(t) = G(v + t d) on the current piece: φ'(0) = ρk − ⟨r, d⟩, φ'' = η‖d‖².
        let slope = mult * k - dot(r_sig.values(), &d);
        let dd = d_norm * d_norm;
        let mut fallback = false;
        if step.limit == StepLimit::Stalled {
            // Diminishing fixed-size step; keeps the iteration moving when no
            // positive step preserves the active maximum.
            fallback_steps += 1;
            fallback = true;
            step = StepLength {
                lambda: 1.0 / (eta * (1 + fallback_steps) as f64),
                limit: StepLimit::Stalled,
            };
            warn!(
                "v-step line search stalled at iteration {iterations}; taking fallback step {:e}",
                step.lambda
            );
        } else {
            // At an exact projection the slope is −‖d‖² and the piece minimizer
            // is 1/η. Once ‖d‖² drops below the rounding level of the slope
            // the measured value carries no information, so use the exact one.
            let t_quad = if slope <= -0.5 * dd { -slope / (eta * dd) } else { 1.0 / eta };
            if t_quad <= step.lambda {
                step = StepLength {
                    lambda: t_quad,
                    limit: StepLimit::Cap,
                };
            }
        }

        let before = if opts.record_steps {
            Some((objective(&v, eval.theta), eval.active.clone(), proj.support()))
        } else {
            None
        };
        for (x, di) in v.iter_mut().zip(&d) {
            *x += step.lambda * di;
        }
        if let Some((objective_before, active_before, support_gens)) = before {
            let residual: Vec<f64> = v.iter().zip(yv).map(|(a, b)| a - b).collect();
            let after = penalty_from_inner(q, ws.inner_products(&residual));
            let support = support_gens.into_iter().filter_map(|i| gens.window_of(i)).collect();
            steps.push(DescentStep {
                lambda: step.lambda,
                limit: step.limit,
                objective_before,
                objective_after: objective(&v, after.theta),
                active_before,
                support,
                active_after: after.active,
                fallback,
            });
        }
    }
}
