//! The ADMM iteration
//!
//! ```text
//! u⁺ = argmin J(u) + ⟨b, Au⟩ + (η/2)‖Au − v‖²
//! v⁺ = argmin ρθ(F_q(v)) − ⟨b, v⟩ + (η/2)‖Au⁺ − v‖²
//! b⁺ = b + η(Au⁺ − v⁺)
//! ```

use crate::error::{Error, Result};
use crate::multiscale::PenaltyEval;
use crate::prox::{solve_u_step, solve_v_step_centered, UStepOptions, VStepOptions};
use crate::signal::Signal;
use crate::solver::trace::{Engine, StepSummary};
use crate::solver::Problem;

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub u: Signal,
    pub v: Signal,
    /// Multiplier.
    pub b: Signal,
    pub k: usize,
    pub eta: f64,
}

impl AdmmState {
    pub fn new(u: Signal, v: Signal, b: Signal, eta: f64) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::invalid(format!("eta must be a positive number, got {eta}")));
        }
        b.check_shape(v.shape())?;
        Ok(AdmmState { u, v, b, k: 0, eta })
    }

    /// `b = 0`, `v = y`, `u = Aᵀy`.
    pub fn initial(problem: &Problem, eta: f64) -> Result<Self> {
        let u = problem.a.apply_adjoint(&problem.y)?;
        AdmmState::new(u, problem.y.clone(), Signal::zeros(problem.y.shape()), eta)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdmmOptions {
    pub u: UStepOptions,
    pub v: VStepOptions,
    /// Inner tolerances become `coupling · ‖u⁺ − u‖` of the previous step
    /// (never looser than the base tolerances, never below `floor`).
    pub coupling: Option<f64>,
    pub floor: f64,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        AdmmOptions {
            u: UStepOptions {
                tol: 1e-10,
                max_iter: None,
            },
            v: VStepOptions {
                tol: 1e-10,
                ..VStepOptions::default()
            },
            coupling: Some(1e-2),
            floor: 1e-12,
        }
    }
}

impl AdmmOptions {
    /// All inner solves at a fixed tolerance.
    pub fn fixed(tol: f64) -> Self {
        let mut o = AdmmOptions::default();
        o.u.tol = tol;
        o.v.tol = tol;
        o.coupling = None;
        o
    }

    pub fn coupled_to(&self, last_step: Option<f64>) -> AdmmOptions {
        let mut o = *self;
        if let (Some(c), Some(step)) = (self.coupling, last_step) {
            let t = (c * step).max(self.floor);
            o.u.tol = o.u.tol.min(t);
            o.v.tol = o.v.tol.min(t);
        }
        o
    }
}

/// One iteration plus what the sub-solvers reported.
#[derive(Debug, Clone)]
pub struct AdmmStep {
    pub state: AdmmState,
    /// `‖u⁺ − u‖`
    pub step_norm: f64,
    pub eval: PenaltyEval,
    pub u_iterations: usize,
    pub v_iterations: usize,
    pub v_fallback_steps: usize,
}

pub fn admm_step(state: &AdmmState, problem: &Problem, rho: f64, opts: &AdmmOptions) -> Result<AdmmStep> {
    if !(rho > 0.0) {
        return Err(Error::invalid(format!("rho must be > 0, got {rho}")));
    }
    let eta = state.eta;
    let u_out = solve_u_step(&problem.reg, &problem.a, &state.b, &state.v, eta, None, Some(&state.u), &opts.u)
        .map_err(|e| e.context("ADMM u-step"))?;
    let au = problem.a.apply(&u_out.u)?;
    let v_out = solve_v_step_centered(&problem.ws, &problem.y, rho, &state.b, &au, eta, &state.v, &opts.v)
        .map_err(|e| e.context("ADMM v-step"))?;
    let b: Vec<f64> = state
        .b
        .values()
        .iter()
        .zip(au.values())
        .zip(v_out.v.values())
        .map(|((b, a), v)| b + eta * (a - v))
        .collect();
    let b = Signal::new(b, state.b.shape().clone())?;
    let step_norm = u_out.u.dist(&state.u);
    Ok(AdmmStep {
        state: AdmmState {
            u: u_out.u,
            v: v_out.v,
            b,
            k: state.k + 1,
            eta,
        },
        step_norm,
        eval: v_out.eval,
        u_iterations: u_out.iterations,
        v_iterations: v_out.iterations,
        v_fallback_steps: v_out.fallback_steps,
    })
}

pub fn admm_iterate(state: &AdmmState, problem: &Problem, rho: f64, opts: &AdmmOptions) -> Result<AdmmState> {
    admm_step(state, problem, rho, opts).map(|s| s.state)
}

/// ADMM at fixed `ρ` as a fixed-point [`Engine`] with tolerance coupling.
#[derive(Debug, Clone)]
pub struct AdmmEngine<'a> {
    pub problem: &'a Problem,
    pub rho: f64,
    pub opts: AdmmOptions,
    pub last_step: Option<f64>,
}

impl<'a> AdmmEngine<'a> {
    pub fn new(problem: &'a Problem, rho: f64, opts: AdmmOptions) -> Self {
        AdmmEngine {
            problem,
            rho,
            opts,
            last_step: None,
        }
    }
}

impl Engine for AdmmEngine<'_> {
    type State = AdmmState;

    fn step(&mut self, state: &AdmmState) -> Result<(AdmmState, StepSummary)> {
        let opts = self.opts.coupled_to(self.last_step);
        let s = admm_step(state, self.problem, self.rho, &opts)?;
        self.last_step = Some(s.step_norm);
        let objective = self.problem.reg.value(&s.state.u) + self.rho * s.eval.theta;
        let summary = StepSummary {
            step_norm: s.step_norm,
            theta: s.eval.theta,
            objective,
            active_set_size: s.eval.active_len(),
        };
        Ok((s.state, summary))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::LinearMap;
    use crate::multiscale::{ScalingRule, WindowSystem};
    use crate::prox::QuadraticRegularizer;
    use crate::signal::Shape;

    fn toy(alpha: f64, y: f64, q: f64) -> Problem {
        Problem::new(
            QuadraticRegularizer::squared_norm(alpha).unwrap(),
            LinearMap::identity(Shape::d1(1)),
            WindowSystem::build_1d(1, 1, 1, q, ScalingRule::Unit).unwrap(),
            Signal::from_vec(vec![y]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn multiplier_update_is_exact() {
        let ws = WindowSystem::build_1d(8, 1, 3, 0.05, ScalingRule::default()).unwrap();
        let y = Signal::from_vec((0..8).map(|i| (i as f64 * 0.9).sin()).collect()).unwrap();
        let p = Problem::new(
            QuadraticRegularizer::squared_gradient(0.1).unwrap(),
            LinearMap::identity(Shape::d1(8)),
            ws,
            y,
        )
        .unwrap();
        let mut s = AdmmState::initial(&p, 1.0).unwrap();
        for _ in 0..10 {
            let n = admm_iterate(&s, &p, 2.0, &AdmmOptions::default()).unwrap();
            let au = p.a.apply(&n.u).unwrap();
            for i in 0..8 {
                let expect = s.b.values()[i] + s.eta * (au.values()[i] - n.v.values()[i]);
                assert_eq!(n.b.values()[i].to_bits(), expect.to_bits());
            }
            assert_eq!(n.k, s.k + 1);
            s = n;
        }
    }

    /// 1D toy with J = α u², one window: minimize α u² + ρ max(|u − y| − q, 0).
    #[test]
    fn toy_limit_matches_grid() {
        for &(alpha, y, q, rho) in &[(1.0, 2.0, 0.5, 1.0), (0.5, -1.0, 0.2, 0.3), (2.0, 1.0, 0.1, 10.0)] {
            let p = toy(alpha, y, q);
            let mut s = AdmmState::initial(&p, 1.0).unwrap();
            for _ in 0..500 {
                s = admm_iterate(&s, &p, rho, &AdmmOptions::fixed(1e-13)).unwrap();
            }
            let f = |u: f64| alpha * u * u + rho * ((u - y).abs() - q).max(0.0);
            let grid = (0..=100_000).map(|i| -5.0 + i as f64 * 1e-4).fold((f64::INFINITY, 0.0), |acc, u| {
                if f(u) < acc.0 {
                    (f(u), u)
                } else {
                    acc
                }
            });
            assert!((s.u.values()[0] - grid.1).abs() <= 1e-4, "{alpha} {y} {q} {rho}: {} vs {}", s.u.values()[0], grid.1);
        }
    }

    #[test]
    fn optimal_triple_is_fixed() {
        // α u² + ρ max(|u − 2| − 0.5, 0), α=1, ρ=1: u* = 0.5 and 2u* = ρ = 1 on the kink face.
        let p = toy(1.0, 2.0, 0.5);
        let mut s = AdmmState::initial(&p, 1.0).unwrap();
        for _ in 0..400 {
            s = admm_iterate(&s, &p, 1.0, &AdmmOptions::fixed(1e-13)).unwrap();
        }
        let n = admm_iterate(&s, &p, 1.0, &AdmmOptions::fixed(1e-13)).unwrap();
        assert!(n.u.dist(&s.u) < 1e-9 && n.v.dist(&s.v) < 1e-9 && n.b.dist(&s.b) < 1e-9);
        // set the optimal triple by hand: u = v = 0.5, b = −2αu = −1
        let star = AdmmState::new(
            Signal::from_vec(vec![0.5]).unwrap(),
            Signal::from_vec(vec![0.5]).unwrap(),
            Signal::from_vec(vec![-1.0]).unwrap(),
            1.0,
        )
        .unwrap();
        let n = admm_iterate(&star, &p, 1.0, &AdmmOptions::fixed(1e-13)).unwrap();
        assert!(n.u.dist(&star.u) < 1e-9 && n.v.dist(&star.v) < 1e-9 && n.b.dist(&star.b) < 1e-9, "{n:?}");
    }

    #[test]
    fn rejects_nonpositive_rho() {
        let p = toy(1.0, 0.0, 0.1);
        let s = AdmmState::initial(&p, 1.0).unwrap();
        assert!(admm_iterate(&s, &p, 0.0, &AdmmOptions::default()).is_err());
    }

    #[test]
    fn coupling_tightens_but_respects_floor() {
        let o = AdmmOptions::default();
        assert_eq!(o.coupled_to(None).u.tol, o.u.tol);
        assert_eq!(o.coupled_to(Some(1e-6)).v.tol, 1e-10);
        assert_eq!(o.coupled_to(Some(1e-9)).v.tol, 1e-2 * 1e-9);
        assert_eq!(o.coupled_to(Some(1e-20)).u.tol, 1e-12);
        assert_eq!(o.coupled_to(Some(1.0)).u.tol, 1e-10);
    }
}
