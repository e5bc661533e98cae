//! Splitting engines.
//!
//! [`admm`] runs the three-step primal iteration; [`dr`] is a generic
//! Douglas–Rachford fixed-point engine over a pair of resolvents; [`bridge`]
//! realizes the dual resolvents of the imaging problem through primal
//! minimizations and checks that both engines produce the same sequence.

pub mod admm;
pub mod bridge;
pub mod dr;
pub mod trace;

pub use admm::{admm_iterate, admm_step, AdmmEngine, AdmmOptions, AdmmState, AdmmStep};
pub use bridge::{
    bridged_start, check_duality_correspondence, dual_resolvent_b, dual_resolvent_d, run_bridged, BridgedRun,
    DualResolvents,
};
pub use dr::{dr_iterate, dr_step, make_line_projector, DrEngine, DrState, DrStep, LinePair, LineProjector, Resolvents};
pub use trace::{run_fixed_point, Engine, SolverTrace, StopRule, TraceRecord};

use crate::error::{Error, Result};
use crate::linop::LinearMap;
use crate::multiscale::WindowSystem;
use crate::prox::QuadraticRegularizer;
use crate::signal::Signal;

/// `min_u J(u) + ρ θ(F_q(Au))` with data `y`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub reg: QuadraticRegularizer,
    pub a: LinearMap,
    pub ws: WindowSystem,
    pub y: Signal,
}

impl Problem {
    pub fn new(reg: QuadraticRegularizer, a: LinearMap, ws: WindowSystem, y: Signal) -> Result<Self> {
        y.check_shape(a.codomain_shape())?;
        if ws.image_shape() != a.codomain_shape() {
            return Err(Error::ShapeMismatch {
                expected: a.codomain_shape().dims().to_vec(),
                actual: ws.image_shape().dims().to_vec(),
            });
        }
        Ok(Problem { reg, a, ws, y })
    }
}
