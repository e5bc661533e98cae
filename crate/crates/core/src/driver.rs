//! Sequential exact-penalty driver.
//!
//! Runs ADMM for an increasing sequence of penalty weights `ρ_k`, each stage
//! until the `u`-step drops below `γ_k`, warm-starting every stage from the
//! previous one. Once the penalty vanishes (θ at machine precision) the
//! penalized and constrained problems share their solutions, and a final
//! stage is run to the terminal tolerance.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiscale::eval_penalty;
use crate::prox::solve_u_step;
use crate::signal::Signal;
use crate::solver::admm::{AdmmEngine, AdmmOptions, AdmmState};
use crate::solver::trace::{Engine, SolverTrace, RATE_WINDOW};
use crate::solver::Problem;

/// `θ ≤ EXACT_TOL_REL · (1 + ‖y‖)` counts as exact penalization.
pub const EXACT_TOL_REL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Gammas {
    /// `γ_k = gamma0 · factor^k`
    Geometric { gamma0: f64, factor: f64 },
    /// Explicit list; the last entry repeats.
    List(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySchedule {
    pub rho0: f64,
    /// `ρ_{k+1} = growth · ρ_k`
    pub growth: f64,
    pub gammas: Gammas,
    pub rho_cap: f64,
}

impl PenaltySchedule {
    pub fn new(rho0: f64, growth: f64, gammas: Gammas, rho_cap: f64) -> Result<Self> {
        if !(rho0 > 0.0) || !rho0.is_finite() {
            return Err(Error::invalid(format!("rho0 must be > 0, got {rho0}")));
        }
        if !(growth > 1.0) || !growth.is_finite() {
            return Err(Error::invalid(format!("growth must be > 1, got {growth}")));
        }
        if !(rho_cap >= rho0) {
            return Err(Error::invalid(format!("rho cap {rho_cap} is below rho0 {rho0}")));
        }
        match &gammas {
            Gammas::Geometric { gamma0, factor } => {
                if !(*gamma0 > 0.0) || !(*factor > 0.0 && *factor <= 1.0) {
                    return Err(Error::invalid(format!(
                        "need gamma0 > 0 and factor in (0, 1], got {gamma0}, {factor}"
                    )));
                }
            }
            Gammas::List(g) => {
                if g.is_empty() || g.iter().any(|x| !(*x > 0.0)) {
                    return Err(Error::invalid("gamma list must be nonempty and positive"));
                }
                if g.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::invalid("gamma list must be nonincreasing"));
                }
            }
        }
        Ok(PenaltySchedule {
            rho0,
            growth,
            gammas,
            rho_cap,
        })
    }

    /// `ρ0 = 2⁻⁵`, doubling, `γ_k = 10⁻²‖y‖ · 2⁻ᵏ`, cap `2²⁰`.
    pub fn default_for(y: &Signal) -> Self {
        let gamma0 = 1e-2 * y.norm().max(f64::MIN_POSITIVE);
        PenaltySchedule::new(
            0.03125,
            2.0,
            Gammas::Geometric {
                gamma0,
                factor: 0.5,
            },
            1048576.0,
        )
        .expect("default schedule is valid")
    }

    pub fn gamma(&self, k: usize) -> f64 {
        match &self.gammas {
            Gammas::Geometric { gamma0, factor } => gamma0 * factor.powi(k as i32),
            Gammas::List(g) => g[k.min(g.len() - 1)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    #[serde(rename = "stage")]
    pub k: usize,
    pub rho: f64,
    #[serde(rename = "iters")]
    pub iterations: usize,
    #[serde(rename = "theta")]
    pub final_theta: f64,
    #[serde(rename = "step")]
    pub final_step: f64,
    /// NaN when the stage was too short to estimate a rate.
    #[serde(rename = "rate")]
    pub rate_estimate: f64,
    /// Infinite when no rate below one is available.
    #[serde(rename = "bound")]
    pub aposteriori_bound: f64,
    pub exact: bool,
}

pub fn write_stages_csv<W: Write>(reports: &[StageReport], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    if reports.is_empty() {
        wr.write_record(["stage", "rho", "iters", "theta", "step", "rate", "bound", "exact"])
            .map_err(|e| Error::invalid(format!("stage csv: {e}")))?;
    }
    for r in reports {
        wr.serialize(r).map_err(|e| Error::invalid(format!("stage csv: {e}")))?;
    }
    wr.flush().map_err(|e| Error::invalid(format!("stage csv: {e}")))
}

pub fn read_stages_csv<R: Read>(r: R) -> Result<Vec<StageReport>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|rec| rec.map_err(|e| Error::invalid(format!("stage csv: {e}"))))
        .collect()
}

pub fn save_stages(reports: &[StageReport], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_stages_csv(reports, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    /// Geometric mean of successive step ratios.
    pub rate: f64,
    /// Standard deviation of the ratios.
    pub ratio_std: f64,
}

/// Empirical linear rate from a tail of step norms (at least 10 entries).
pub fn estimate_rate(steps: &[f64]) -> Result<RateEstimate> {
    if steps.len() < 10 {
        return Err(Error::invalid(format!("need at least 10 step norms, got {}", steps.len())));
    }
    if steps.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(Error::invalid("step norms must be finite and nonnegative"));
    }
    if steps.contains(&0.0) {
        return Ok(RateEstimate {
            rate: 0.0,
            ratio_std: 0.0,
        });
    }
    let ratios: Vec<f64> = steps.windows(2).map(|w| w[1] / w[0]).collect();
    let m = ratios.len() as f64;
    let rate = (ratios.iter().map(|r| r.ln()).sum::<f64>() / m).exp();
    let mean = ratios.iter().sum::<f64>() / m;
    let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / m;
    Ok(RateEstimate {
        rate,
        ratio_std: var.sqrt(),
    })
}

/// `c/(1 − c) · last_step`, or infinity when `c ≥ 1`.
pub fn aposteriori_bound(c: f64, last_step: f64) -> Result<f64> {
    if !(c >= 0.0) || !(last_step >= 0.0) {
        return Err(Error::invalid(format!("need c >= 0 and step >= 0, got {c}, {last_step}")));
    }
    if c >= 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(c / (1.0 - c) * last_step)
}

/// `K = (1 − 2ηβμ²/(μ + η)²)^{1/2}` for a `μ`-strongly convex, `β`-inverse
/// strongly monotone splitting.
pub fn lions_mercier_rate(mu: f64, beta_ism: f64, eta: f64) -> Result<f64> {
    if !(mu > 0.0) || !(beta_ism > 0.0) || !(eta > 0.0) {
        return Err(Error::invalid(format!(
            "mu, beta and eta must be > 0, got {mu}, {beta_ism}, {eta}"
        )));
    }
    let arg = 1.0 - 2.0 * eta * beta_ism * mu * mu / ((mu + eta) * (mu + eta));
    if !(0.0..=1.0).contains(&arg) {
        return Err(Error::invalid(format!("rate argument {arg} outside [0, 1]")));
    }
    Ok(arg.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViolationReport {
    /// `(ρ_k, θ_k)` per stage.
    pub pairs: Vec<(f64, f64)>,
    /// Least-squares slope of `log θ` against `log ρ` over stages with
    /// `θ > 1e-12`; `None` with fewer than two such stages.
    pub slope: Option<f64>,
    /// First stage with `θ ≤ 1e-12`.
    pub exact_stage: Option<usize>,
    /// Stages whose θ rose above the previous stage's by more than `1e-9`.
    pub increases: Vec<usize>,
}

pub fn violation_vs_rho_report(stages: &[StageReport]) -> Result<ViolationReport> {
    if stages.len() < 2 {
        return Err(Error::invalid("need at least two stages"));
    }
    let pairs: Vec<(f64, f64)> = stages.iter().map(|s| (s.rho, s.final_theta)).collect();
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(_, t)| *t > 1e-12)
        .map(|(r, t)| (r.ln(), t.ln()))
        .collect();
    let slope = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    let exact_stage = stages.iter().position(|s| s.final_theta <= 1e-12);
    let increases = stages
        .windows(2)
        .filter(|w| w[1].final_theta > w[0].final_theta + 1e-9)
        .map(|w| w[1].k)
        .collect();
    Ok(ViolationReport {
        pairs,
        slope,
        exact_stage,
        increases,
    })
}

impl ViolationReport {
    pub fn to_table(&self) -> String {
        let mut s = String::from("rho,theta\n");
        for (r, t) in &self.pairs {
            s.push_str(&format!("{r:e},{t:e}\n"));
        }
        match self.slope {
            Some(v) => s.push_str(&format!("# log-log slope {v:.4}\n")),
            None => s.push_str("# log-log slope undefined\n"),
        }
        match self.exact_stage {
            Some(k) => s.push_str(&format!("# exact from stage {k}\n")),
            None => s.push_str("# no exact stage\n"),
        }
        s
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DriverOptions {
    pub eta: f64,
    pub admm: AdmmOptions,
    /// Step tolerance of the final stage.
    pub terminal_tol: f64,
    pub max_stage_iters: usize,
    pub max_final_iters: usize,
    pub exact_tol_rel: f64,
}

impl Default for DriverOptions {
    fn default() -> Self {
        DriverOptions {
            eta: 0.1,
            admm: AdmmOptions::default(),
            terminal_tol: 1e-10,
            max_stage_iters: 5_000,
            max_final_iters: 50_000,
            exact_tol_rel: EXACT_TOL_REL,
        }
    }
}

/// One fixed-`ρ` stage.
#[derive(Debug, Clone)]
pub struct StageRun {
    pub state: AdmmState,
    pub trace: SolverTrace,
    /// Step norm of the final iteration (`None` if no iteration ran).
    pub last_step: Option<f64>,
    pub theta: f64,
    /// The last `u` iterates, oldest first (up to `RATE_WINDOW + 1`).
    pub tail: Vec<Signal>,
    pub reached_tol: bool,
}

/// Runs ADMM at fixed `ρ` until `‖u⁺ − u‖ ≤ gamma` or `max_iters`.
/// `last_step` seeds the inner tolerance coupling.
pub fn run_stage(
    problem: &Problem,
    state: AdmmState,
    rho: f64,
    gamma: f64,
    max_iters: usize,
    last_step: Option<f64>,
    opts: &AdmmOptions,
) -> Result<StageRun> {
    let mut engine = AdmmEngine::new(problem, rho, *opts);
    engine.last_step = last_step;
    let start = std::time::Instant::now();
    let mut trace = SolverTrace::new();
    let mut tail: VecDeque<Signal> = VecDeque::with_capacity(RATE_WINDOW + 2);
    tail.push_back(state.u.clone());
    let mut state = state;
    let mut theta = eval_penalty(&problem.ws, &state.v, &problem.y)?.theta;
    let mut reached_tol = false;
    for _ in 0..max_iters {
        let (next, summary) = engine.step(&state)?;
        state = next;
        theta = summary.theta;
        trace.record(summary, start.elapsed().as_secs_f64());
        tail.push_back(state.u.clone());
        if tail.len() > RATE_WINDOW + 1 {
            tail.pop_front();
        }
        if summary.step_norm <= gamma {
            reached_tol = true;
            break;
        }
    }
    Ok(StageRun {
        state,
        trace,
        last_step: engine.last_step,
        theta,
        tail: tail.into(),
        reached_tol,
    })
}

#[derive(Debug, Clone)]
pub struct SequentialResult {
    pub u: Signal,
    pub state: AdmmState,
    pub stages: Vec<StageReport>,
    /// Every iteration of every stage, indices running across stages.
    pub trace: SolverTrace,
    pub exact: bool,
    /// Final iterates of the last stage, oldest first.
    pub tail: Vec<Signal>,
    pub final_rho: f64,
}

fn stage_report(k: usize, rho: f64, run: &StageRun, exact_tol: f64) -> StageReport {
    let steps = run.trace.step_norms();
    let window = &steps[steps.len().saturating_sub(RATE_WINDOW)..];
    let rate = estimate_rate(window).map_or(f64::NAN, |r| r.rate);
    let final_step = run.last_step.unwrap_or(0.0);
    let bound = if rate.is_nan() {
        f64::INFINITY
    } else {
        aposteriori_bound(rate, final_step).unwrap_or(f64::INFINITY)
    };
    StageReport {
        k,
        rho,
        iterations: run.trace.len(),
        final_theta: run.theta,
        final_step,
        rate_estimate: rate,
        aposteriori_bound: bound,
        exact: run.theta <= exact_tol,
    }
}

/// The `u` that starts the first stage: `argmin J(u) + ⟨b, Au⟩ + (η/2)‖Au − v‖² + ½‖u − Aᵀy‖²`
/// at `b = 0`, `v = y`.
pub fn initial_state(problem: &Problem, eta: f64, opts: &AdmmOptions) -> Result<AdmmState> {
    let mut state = AdmmState::initial(problem, eta)?;
    let u00 = state.u.clone();
    let out = solve_u_step(&problem.reg, &problem.a, &state.b, &state.v, eta, Some(&u00), Some(&u00), &opts.u)
        .map_err(|e| e.context("initial u-step"))?;
    state.u = out.u;
    Ok(state)
}

/// `θ(F_q(Au))`
fn penalty_at_u(problem: &Problem, u: &Signal) -> Result<f64> {
    let au = problem.a.apply(u)?;
    Ok(eval_penalty(&problem.ws, &au, &problem.y)?.theta)
}

pub fn run_sequential(problem: &Problem, schedule: &PenaltySchedule, opts: &DriverOptions) -> Result<SequentialResult> {
    if !(opts.eta > 0.0 && opts.eta < 2.0) {
        warn!("eta = {} lies outside (0, 2)", opts.eta);
    }
    let exact_tol = opts.exact_tol_rel * (1.0 + problem.y.norm());
    let mut state = initial_state(problem, opts.eta, &opts.admm)?;
    let mut trace = SolverTrace::new();
    let mut stages: Vec<StageReport> = Vec::new();
    let mut last_step = None;
    let mut rho = schedule.rho0;
    let mut tail = vec![state.u.clone()];
    let mut exact_seen = false;
    let mut k = 0;
    while rho <= schedule.rho_cap {
        let final_stage = exact_seen || (k > 0 && penalty_at_u(problem, &state.u)? <= exact_tol);
        let (gamma, cap) = if final_stage {
            (opts.terminal_tol, opts.max_final_iters)
        } else {
            (schedule.gamma(k), opts.max_stage_iters)
        };
        let run = run_stage(problem, state, rho, gamma, cap, last_step, &opts.admm)?;
        let report = stage_report(k, rho, &run, exact_tol);
        info!(
            "stage {k}: rho {rho:e}, {} iterations, theta {:e}, step {:e}, rate {:.4}{}",
            report.iterations,
            report.final_theta,
            report.final_step,
            report.rate_estimate,
            if report.exact { " (exact)" } else { "" }
        );
        if !run.reached_tol {
            warn!("stage {k} hit its iteration cap before step tolerance {gamma:e}");
        }
        if exact_seen && !report.exact {
            warn!("stage {k} lost exactness after an exact stage (theta {:e})", report.final_theta);
        }
        trace.extend(&run.trace);
        stages.push(report);
        state = run.state;
        last_step = run.last_step;
        tail = run.tail;
        if final_stage && report.exact {
            return Ok(SequentialResult {
                u: state.u.clone(),
                state,
                stages,
                trace,
                exact: true,
                tail,
                final_rho: rho,
            });
        }
        exact_seen = report.exact;
        rho *= schedule.growth;
        k += 1;
    }
    warn!("penalty cap {:e} reached without exact penalization", schedule.rho_cap);
    Ok(SequentialResult {
        u: state.u.clone(),
        state,
        stages,
        trace,
        exact: false,
        tail,
        final_rho: rho / schedule.growth,
    })
}
