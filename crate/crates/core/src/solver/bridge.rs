//! Dual resolvents of the imaging problem and the ADMM ↔ Douglas–Rachford
//! correspondence.
//!
//! With `B = ∂(J*∘(−Aᵀ))` and `D = ∂H*`, `H = ρθ∘F_q`, both resolvents are
//! evaluated through primal minimizations:
//!
//! ```text
//! J_B(p̄) = p̄ + ηAu,  u = argmin J(u) + ⟨p̄, Au⟩ + (η/2)‖Au‖²
//! J_D(p̄) = p̄ − ηv,  v = argmin H(v) − ⟨p̄, v⟩ + (η/2)‖v‖²
//! ```
//!
//! Starting DR from `x⁰` and ADMM from `b⁰ = J_D x⁰`, `v⁰ = (x⁰ − b⁰)/η`,
//! the sequences satisfy `b^k = J_D x^k` and `v^k = (x^k − b^k)/η`.

use crate::error::{Error, Result};
use crate::multiscale::PenaltyEval;
use crate::prox::{solve_u_step, solve_v_step_centered, UStepOptions, VStepOptions, VStepOutcome};
use crate::signal::Signal;
use crate::solver::admm::{admm_iterate, AdmmOptions, AdmmState};
use crate::solver::dr::{dr_step, DrState, Resolvents};
use crate::solver::Problem;

/// `J_B(p̄)`; returns `(p', u)`.
pub fn dual_resolvent_b(
    p_bar: &Signal,
    problem: &Problem,
    eta: f64,
    warm: Option<&Signal>,
    opts: &UStepOptions,
) -> Result<(Signal, Signal)> {
    let zero = Signal::zeros(p_bar.shape());
    let out = solve_u_step(&problem.reg, &problem.a, p_bar, &zero, eta, None, warm, opts)
        .map_err(|e| e.context("dual resolvent B"))?;
    let au = problem.a.apply(&out.u)?;
    Ok((p_bar.add_scaled(eta, &au), out.u))
}

/// `J_D(p̄)`; returns `(p', v-step outcome)`.
pub fn dual_resolvent_d(
    p_bar: &Signal,
    problem: &Problem,
    rho: f64,
    eta: f64,
    warm: Option<&Signal>,
    opts: &VStepOptions,
) -> Result<(Signal, VStepOutcome)> {
    let zero = Signal::zeros(p_bar.shape());
    let v0 = warm.unwrap_or(&problem.y);
    let out = solve_v_step_centered(&problem.ws, &problem.y, rho, p_bar, &zero, eta, v0, opts)
        .map_err(|e| e.context("dual resolvent D"))?;
    Ok((p_bar.add_scaled(-eta, &out.v), out))
}

/// The resolvent pair of the imaging problem at fixed `ρ`, `η`. Keeps the
/// last primal points as warm starts, mirroring what ADMM does.
#[derive(Debug, Clone)]
pub struct DualResolvents<'a> {
    pub problem: &'a Problem,
    pub rho: f64,
    pub eta: f64,
    pub u_opts: UStepOptions,
    pub v_opts: VStepOptions,
    pub last_u: Option<Signal>,
    pub last_v: Option<Signal>,
    last_eval: Option<PenaltyEval>,
}

impl<'a> DualResolvents<'a> {
    pub fn new(problem: &'a Problem, rho: f64, eta: f64, opts: &AdmmOptions) -> Self {
        DualResolvents {
            problem,
            rho,
            eta,
            u_opts: opts.u,
            v_opts: opts.v,
            last_u: None,
            last_v: None,
            last_eval: None,
        }
    }
}

impl Resolvents for DualResolvents<'_> {
    fn resolvent_b(&mut self, x: &Signal) -> Result<Signal> {
        let (p, u) = dual_resolvent_b(x, self.problem, self.eta, self.last_u.as_ref(), &self.u_opts)?;
        self.last_u = Some(u);
        Ok(p)
    }

    fn resolvent_d(&mut self, x: &Signal) -> Result<Signal> {
        let (p, out) = dual_resolvent_d(x, self.problem, self.rho, self.eta, self.last_v.as_ref(), &self.v_opts)?;
        self.last_v = Some(out.v);
        self.last_eval = Some(out.eval);
        Ok(p)
    }

    fn diagnostics(&self) -> Option<(f64, f64, usize)> {
        let eval = self.last_eval.as_ref()?;
        let reg = self.last_u.as_ref().map_or(0.0, |u| self.problem.reg.value(u));
        Some((eval.theta, reg + self.rho * eval.theta, eval.active_len()))
    }
}

/// Bridged starting points: ADMM at `(b⁰, v⁰) = (J_D x⁰, (x⁰ − J_D x⁰)/η)`
/// with `u⁰ = Aᵀy`, and DR at `x⁰`.
pub fn bridged_start(pair: &mut DualResolvents<'_>, x0: &Signal) -> Result<(AdmmState, DrState)> {
    let eta = pair.eta;
    let b0 = pair.resolvent_d(x0)?;
    let v0 = x0.sub(&b0).scale(1.0 / eta);
    let u0 = pair.problem.a.apply_adjoint(&pair.problem.y)?;
    pair.last_u = Some(u0.clone());
    let admm = AdmmState::new(u0, v0, b0, eta)?;
    Ok((admm, DrState::new(x0.clone(), eta)?))
}

/// `x^k` with `J_D x^k`, as produced by the DR run.
#[derive(Debug, Clone)]
pub struct DrRecord {
    pub x: Signal,
    pub resolvent_d: Signal,
}

#[derive(Debug, Clone)]
pub struct BridgedRun {
    pub admm: Vec<AdmmState>,
    pub dr: Vec<DrRecord>,
}

impl BridgedRun {
    pub fn discrepancy(&self) -> Result<f64> {
        let eta = self.admm.first().map_or(1.0, |s| s.eta);
        check_duality_correspondence(&self.admm, &self.dr, eta)
    }
}

/// Runs `iters` steps of both engines from bridged starting points.
pub fn run_bridged(problem: &Problem, rho: f64, eta: f64, x0: &Signal, iters: usize, opts: &AdmmOptions) -> Result<BridgedRun> {
    let mut pair = DualResolvents::new(problem, rho, eta, opts);
    let (mut admm_state, mut dr_state) = bridged_start(&mut pair, x0)?;
    let mut admm = vec![admm_state.clone()];
    let mut dr = Vec::with_capacity(iters + 1);
    for _ in 0..iters {
        admm_state = admm_iterate(&admm_state, problem, rho, opts)?;
        admm.push(admm_state.clone());
        let step = dr_step(&dr_state, &mut pair)?;
        dr.push(DrRecord {
            x: dr_state.x,
            resolvent_d: step.resolvent_d,
        });
        dr_state = step.next;
    }
    let jd = pair.resolvent_d(&dr_state.x)?;
    dr.push(DrRecord {
        x: dr_state.x,
        resolvent_d: jd,
    });
    Ok(BridgedRun { admm, dr })
}

/// `max_k ‖b^k − J_D x^k‖ + ‖v^k − (x^k − J_D x^k)/η‖`.
pub fn check_duality_correspondence(admm: &[AdmmState], dr: &[DrRecord], eta: f64) -> Result<f64> {
    if admm.len() != dr.len() {
        return Err(Error::invalid(format!(
            "trace lengths differ: {} ADMM states vs {} DR records",
            admm.len(),
            dr.len()
        )));
    }
    if !(eta > 0.0) {
        return Err(Error::invalid(format!("eta must be > 0, got {eta}")));
    }
    let mut worst: f64 = 0.0;
    for (s, r) in admm.iter().zip(dr) {
        let v_dr = r.x.sub(&r.resolvent_d).scale(1.0 / eta);
        worst = worst.max(s.b.dist(&r.resolvent_d) + s.v.dist(&v_dr));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::LinearMap;
    use crate::multiscale::{ScalingRule, WindowSystem};
    use crate::prox::QuadraticRegularizer;
    use crate::signal::Shape;
    use crate::solver::dr::dr_iterate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(rng: &mut ChaCha8Rng, n: usize, lmax: usize) -> Problem {
        let y = Signal::from_vec((0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        Problem::new(
            QuadraticRegularizer::squared_gradient(0.05).unwrap(),
            LinearMap::identity(Shape::d1(n)),
            WindowSystem::build_1d(n, 1, lmax, 0.3, ScalingRule::default()).unwrap(),
            y,
        )
        .unwrap()
    }

    #[test]
    fn resolvent_b_closed_form_and_identity() {
        // J = α‖u‖², A = I: u = −p̄/(2α + η)
        let p = Problem::new(
            QuadraticRegularizer::squared_norm(0.3).unwrap(),
            LinearMap::identity(Shape::d1(3)),
            WindowSystem::build_1d(3, 1, 1, 0.1, ScalingRule::Unit).unwrap(),
            Signal::from_vec(vec![0.0; 3]).unwrap(),
        )
        .unwrap();
        let pbar = Signal::from_vec(vec![1.0, -2.0, 0.5]).unwrap();
        let (pp, u) = dual_resolvent_b(&pbar, &p, 0.8, None, &UStepOptions { tol: 1e-14, max_iter: None }).unwrap();
        assert!(u.dist(&pbar.scale(-1.0 / 1.4)) < 1e-13);
        // p̄ = p' − ηAu
        assert!(pp.add_scaled(-0.8, &u).dist(&pbar) < 1e-15);
    }

    #[test]
    fn resolvent_d_with_slack_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = random_problem(&mut rng, 6, 3);
        p.ws = p.ws.with_q(1e6).unwrap();
        let pbar = Signal::from_vec((0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let (pp, out) = dual_resolvent_d(&pbar, &p, 1.0, 0.5, None, &VStepOptions::default()).unwrap();
        // H ≡ 0 near the solution: v = p̄/η and p' = 0
        assert!(out.v.dist(&pbar.scale(2.0)) < 1e-12);
        assert!(pp.norm() < 1e-12);
        assert!(pp.add_scaled(0.5, &out.v).dist(&pbar) < 1e-15);
    }

    #[test]
    fn resolvent_d_scalar_grid() {
        let p = Problem::new(
            QuadraticRegularizer::squared_norm(1.0).unwrap(),
            LinearMap::identity(Shape::d1(1)),
            WindowSystem::build_1d(1, 1, 1, 0.25, ScalingRule::Unit).unwrap(),
            Signal::from_vec(vec![0.4]).unwrap(),
        )
        .unwrap();
        for &(pbar, rho, eta) in &[(2.0, 1.0, 1.0), (-0.3, 0.5, 1.5), (0.9, 3.0, 0.4)] {
            let (_, out) =
                dual_resolvent_d(&Signal::from_vec(vec![pbar]).unwrap(), &p, rho, eta, None, &VStepOptions::default())
                    .unwrap();
            let h = |v: f64| rho * ((v - 0.4f64).abs() - 0.25).max(0.0) - pbar * v + 0.5 * eta * v * v;
            let best = (0..=100_000).map(|i| -5.0 + i as f64 * 1e-4).fold((f64::INFINITY, 0.0), |a, v| {
                if h(v) < a.0 {
                    (h(v), v)
                } else {
                    a
                }
            });
            assert!((out.v.values()[0] - best.1).abs() <= 1e-4);
        }
    }

    #[test]
    fn zero_and_mismatched_traces() {
        assert_eq!(check_duality_correspondence(&[], &[], 1.0).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_problem(&mut rng, 8, 2);
        let run = run_bridged(&p, 1.0, 1.0, &p.y, 0, &AdmmOptions::fixed(1e-13)).unwrap();
        assert_eq!(run.discrepancy().unwrap(), 0.0);
        assert!(check_duality_correspondence(&run.admm, &[], 1.0).is_err());
    }

    #[test]
    fn single_step_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_problem(&mut rng, 10, 3);
        let x0 = p.y.scale(1.3);
        let run = run_bridged(&p, 2.0, 1.0, &x0, 1, &AdmmOptions::fixed(1e-13)).unwrap();
        assert!(run.discrepancy().unwrap() <= 1e-10);
    }

    #[test]
    fn dual_pair_is_firmly_nonexpansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random_problem(&mut rng, 8, 3);
        let mut pair = DualResolvents::new(&p, 1.5, 1.0, &AdmmOptions::fixed(1e-13));
        let mut draw = |s: f64| Signal::from_vec((0..8).map(|_| rng.random_range(-s..s)).collect()).unwrap();
        for _ in 0..30 {
            let (x, y) = (draw(3.0), draw(3.0));
            let tx = dr_iterate(&DrState::new(x.clone(), 1.0).unwrap(), &mut pair).unwrap().x;
            let ty = dr_iterate(&DrState::new(y.clone(), 1.0).unwrap(), &mut pair).unwrap().x;
            let lhs = tx.sub(&ty).norm_sq() + x.sub(&tx).sub(&y.sub(&ty)).norm_sq();
            assert!(lhs <= x.sub(&y).norm_sq() + 1e-10);
        }
    }
}
