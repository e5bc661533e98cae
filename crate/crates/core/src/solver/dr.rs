//! Douglas–Rachford iteration `x⁺ = J_B(2J_D x − x) + (x − J_D x)`.

use crate::error::{Error, Result};
use crate::signal::Signal;
use crate::solver::trace::{Engine, StepSummary};

/// A pair of single-valued resolvents. Methods take `&mut self` so that
/// implementations can keep warm starts between calls.
pub trait Resolvents {
    fn resolvent_b(&mut self, x: &Signal) -> Result<Signal>;
    fn resolvent_d(&mut self, x: &Signal) -> Result<Signal>;

    /// `(θ, objective, active set size)` after the most recent evaluation,
    /// if the pair knows them.
    fn diagnostics(&self) -> Option<(f64, f64, usize)> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrState {
    pub x: Signal,
    pub eta: f64,
}

impl DrState {
    pub fn new(x: Signal, eta: f64) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::invalid(format!("eta must be a positive number, got {eta}")));
        }
        Ok(DrState { x, eta })
    }
}

#[derive(Debug, Clone)]
pub struct DrStep {
    pub next: DrState,
    /// `J_D x` at the input point.
    pub resolvent_d: Signal,
    /// `J_B(2J_D x − x)`.
    pub resolvent_b: Signal,
}

pub fn dr_step<R: Resolvents + ?Sized>(state: &DrState, pair: &mut R) -> Result<DrStep> {
    let x = &state.x;
    let jd = pair.resolvent_d(x)?;
    jd.check_shape(x.shape())?;
    let reflected = jd.scale(2.0).sub(x);
    let jb = pair.resolvent_b(&reflected)?;
    jb.check_shape(x.shape())?;
    let next = jb.add(&x.sub(&jd));
    if cfg!(debug_assertions) {
        // ½(R_B R_D + I)x
        let averaged = jb.scale(2.0).sub(&reflected).add(x).scale(0.5);
        let gap = averaged.dist(&next);
        debug_assert!(
            gap <= 1e-12 * (1.0 + x.norm() + jd.norm() + jb.norm()),
            "reflector form disagrees by {gap:e}"
        );
    }
    Ok(DrStep {
        next: DrState { x: next, eta: state.eta },
        resolvent_d: jd,
        resolvent_b: jb,
    })
}

pub fn dr_iterate<R: Resolvents + ?Sized>(state: &DrState, pair: &mut R) -> Result<DrState> {
    dr_step(state, pair).map(|s| s.next)
}

#[derive(Debug)]
pub struct DrEngine<R> {
    pub pair: R,
}

impl<R: Resolvents> Engine for DrEngine<R> {
    type State = DrState;

    fn step(&mut self, state: &DrState) -> Result<(DrState, StepSummary)> {
        let next = dr_iterate(state, &mut self.pair)?;
        let step_norm = next.x.dist(&state.x);
        let summary = match self.pair.diagnostics() {
            Some((theta, objective, active_set_size)) => StepSummary {
                step_norm,
                theta,
                objective,
                active_set_size,
            },
            None => StepSummary::step_only(step_norm),
        };
        Ok((next, summary))
    }
}

/// Orthogonal projector onto `{point + t·direction}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LineProjector {
    point: Signal,
    unit: Signal,
}

impl LineProjector {
    pub fn project(&self, x: &Signal) -> Signal {
        let t = x.sub(&self.point).dot(&self.unit);
        self.point.add_scaled(t, &self.unit)
    }

    pub fn direction(&self) -> &Signal {
        &self.unit
    }
}

pub fn make_line_projector(direction: &Signal, point: &Signal) -> Result<LineProjector> {
    point.check_shape(direction.shape())?;
    let n = direction.norm();
    if n == 0.0 {
        return Err(Error::invalid("line direction must be nonzero"));
    }
    Ok(LineProjector {
        point: point.clone(),
        unit: direction.scale(1.0 / n),
    })
}

/// Two affine lines: the resolvent of the normal cone of each is its
/// projector, for every `η`.
#[derive(Debug, Clone)]
pub struct LinePair {
    pub b: LineProjector,
    pub d: LineProjector,
}

impl Resolvents for LinePair {
    fn resolvent_b(&mut self, x: &Signal) -> Result<Signal> {
        Ok(self.b.project(x))
    }
    fn resolvent_d(&mut self, x: &Signal) -> Result<Signal> {
        Ok(self.d.project(x))
    }
}
