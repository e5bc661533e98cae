//! The four experiment modes and their file output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::driver::{run_sequential, save_stages, SequentialResult};
use crate::error::{Error, Result};
use crate::experiment::config::{ExperimentConfig, Mode};
use crate::experiment::synthetic::{gen_synthetic_1d, truth_2d};
use crate::io::{read_signal, write_binary, write_csv, write_pgm};
use crate::linop::LinearMap;
use crate::multiscale::{feasibility, FeasibilityReport, WindowSystem};
use crate::signal::{gaussian_noise, RngSeed, Shape, Signal};
use crate::solver::{dr_iterate, make_line_projector, run_bridged, AdmmOptions, DrState, LinePair, Problem};

/// Process exit status of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Exact = 0,
    NotExact = 2,
    SolverFailure = 3,
    IoOrConfig = 4,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn of_error(e: &Error) -> Self {
        match e.root() {
            Error::Io { .. } | Error::Parse { .. } | Error::Config(_) => ExitStatus::IoOrConfig,
            _ => ExitStatus::SolverFailure,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub status: ExitStatus,
    /// Human-readable summary, one line each.
    pub summary: Vec<String>,
    pub files: Vec<PathBuf>,
}

/// `θ(F_q(Au))` and the violated windows.
pub fn feasibility_check(u: &Signal, problem: &Problem) -> Result<FeasibilityReport> {
    let au = problem.a.apply(u)?;
    feasibility(&problem.ws, &au, &problem.y)
}

/// Normalized `size × size` Gaussian with standard deviation `sigma` pixels.
pub fn gaussian_psf(size: usize, sigma: f64) -> Result<Signal> {
    let c = (size as f64 - 1.0) / 2.0;
    let mut v = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            let r2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            v.push((-r2 / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = v.iter().sum();
    Signal::new(v.into_iter().map(|x| x / total).collect(), Shape::d2(size, size))
}

/// A prepared inverse problem and the ground truth when synthetic.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub problem: Problem,
    pub truth: Option<Signal>,
}

fn as_2d(s: Signal) -> Result<Signal> {
    if s.shape().ndim() == 2 {
        return Ok(s);
    }
    let n = s.len();
    s.reshape(Shape::d2(n, 1))
}

pub fn prepare_denoise1d(cfg: &ExperimentConfig) -> Result<Prepared> {
    let (truth, y) = match &cfg.image {
        Some(path) => {
            let y = read_signal(path)?;
            if y.shape().ndim() != 1 {
                return Err(Error::Config(format!("{} is not a 1D signal", path.display())));
            }
            (None, y)
        }
        None => {
            let (t, y) = gen_synthetic_1d(cfg.n, cfg.sigma, RngSeed(cfg.seed))?;
            (Some(t), y)
        }
    };
    let n = y.len();
    let ws = WindowSystem::build_1d(n, cfg.lmin, cfg.lmax.min(n), cfg.q(), cfg.scaling)?;
    let problem = Problem::new(cfg.regularizer()?, LinearMap::identity(Shape::d1(n)), ws, y)?;
    Ok(Prepared { problem, truth })
}

pub fn prepare_deconv2d(cfg: &ExperimentConfig) -> Result<Prepared> {
    let psf = match &cfg.psf {
        Some(p) => as_2d(read_signal(p)?)?,
        None => gaussian_psf(cfg.psf_size, cfg.psf_sigma)?,
    };
    let (truth, y) = match &cfg.image {
        Some(p) => (None, as_2d(read_signal(p)?)?),
        None => {
            let truth = truth_2d(cfg.h, cfg.w)?;
            let a = LinearMap::convolution_centered(psf.clone(), cfg.boundary, truth.shape().clone())?;
            let noise = gaussian_noise(truth.shape(), cfg.sigma, RngSeed(cfg.seed))?;
            let y = a.apply(&truth)?.add(&noise);
            (Some(truth), y)
        }
    };
    let shape = y.shape().clone();
    let (h, w) = shape.rows_cols();
    let a = LinearMap::convolution_centered(psf, cfg.boundary, shape)?;
    let ws = WindowSystem::build_2d(h, w, &cfg.sizes, cfg.q(), cfg.scaling)?;
    let problem = Problem::new(cfg.regularizer()?, a, ws, y)?;
    Ok(Prepared { problem, truth })
}

pub fn solve(problem: &Problem, cfg: &ExperimentConfig) -> Result<SequentialResult> {
    let schedule = cfg.schedule_for(&problem.y)?;
    run_sequential(problem, &schedule, &cfg.driver_options())
}

fn manifest_text(cfg: &ExperimentConfig, notes: &[String]) -> String {
    let mut s = format!("# msadmm {}\n", env!("CARGO_PKG_VERSION"));
    s.push_str(&cfg.to_text());
    for n in notes {
        let _ = writeln!(s, "# {n}");
    }
    s
}

fn write_manifest(dir: &Path, cfg: &ExperimentConfig, notes: &[String], files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join("manifest.txt");
    std::fs::write(&path, manifest_text(cfg, notes)).map_err(|e| Error::io(&path, e))?;
    files.push(path);
    Ok(())
}

fn run_inverse(cfg: &ExperimentConfig, prep: Prepared) -> Result<RunReport> {
    let dir = &cfg.out;
    let problem = &prep.problem;
    info!("{} windows on a {:?} grid, q = {}", problem.ws.len(), problem.y.shape().dims(), cfg.q());
    let res = solve(problem, cfg)?;
    let mut files = Vec::new();
    let mut put = |name: &str| {
        let p = dir.join(name);
        files.push(p.clone());
        p
    };
    res.trace.save(&put("trace.csv"))?;
    save_stages(&res.stages, &put("stages.csv"))?;
    write_csv(&put("recon.csv"), &res.u)?;
    write_binary(&put("recon.f64"), &res.u)?;
    let map = write_pgm(&put("recon.pgm"), &res.u)?;
    if cfg.mode == Mode::Deconv2d {
        write_binary(&put("reconv.f64"), &problem.a.apply(&res.u)?)?;
    }
    let feas = feasibility_check(&res.u, problem)?;
    let last = res.stages.last().copied();
    let mut notes = vec![
        format!("windows = {}", problem.ws.len()),
        format!("q = {}", problem.ws.q()),
        format!("pgm_min = {}", map.min),
        format!("pgm_max = {}", map.max),
        format!("stages = {}", res.stages.len()),
        format!("iterations = {}", res.trace.len()),
        format!("final_rho = {}", res.final_rho),
        format!("exact = {}", res.exact),
        format!("theta = {:e}", feas.theta),
        format!("violated_windows = {}", feas.violated.len()),
    ];
    if let Some(s) = last {
        notes.push(format!("rate = {}", s.rate_estimate));
        notes.push(format!("bound = {:e}", s.aposteriori_bound));
    }
    if let Some(t) = &prep.truth {
        notes.push(format!("error_vs_truth = {:e}", res.u.dist(t)));
    }
    write_manifest(dir, cfg, &notes, &mut files)?;
    let mut summary = vec![format!(
        "{}: {} stages, {} iterations, final rho {}, exact {}",
        cfg.mode,
        res.stages.len(),
        res.trace.len(),
        res.final_rho,
        res.exact
    )];
    summary.push(format!(
        "theta(F_q(Au)) = {:e}, {} windows above q",
        feas.theta,
        feas.violated.len()
    ));
    if let Some(s) = last {
        summary.push(format!("rate c = {:.4}, a-posteriori bound {:e}", s.rate_estimate, s.aposteriori_bound));
    }
    Ok(RunReport {
        status: if res.exact { ExitStatus::Exact } else { ExitStatus::NotExact },
        summary,
        files,
    })
}

/// Residuals of the orthogonal-lines demo.
#[derive(Debug, Clone, Copy)]
pub struct LinesDemo {
    /// Worst distance of the first iterate to the intersection point, plane.
    pub plane: f64,
    /// Worst distance of the first iterate to the second iterate, plane.
    pub plane_fixed: f64,
    /// Worst distance to the predicted point on the normal axis, space.
    pub space: f64,
}

fn orthonormal_pair(rng: &mut ChaCha8Rng) -> (Vector3<f64>, Vector3<f64>) {
    loop {
        let a = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let b = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if a.norm() < 0.1 {
            continue;
        }
        let u1 = a.normalize();
        let b = b - u1 * u1.dot(&b);
        if b.norm() < 0.1 {
            continue;
        }
        return (u1, b.normalize());
    }
}

fn sig(v: &[f64]) -> Signal {
    Signal::from_vec(v.to_vec()).expect("nonempty")
}

/// One DR step on two orthogonal lines from `starts` random points, in the
/// plane and in space, with random orientations and offsets.
pub fn lines_demo(starts: usize, seed: u64) -> Result<LinesDemo> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = LinesDemo {
        plane: 0.0,
        plane_fixed: 0.0,
        space: 0.0,
    };
    for _ in 0..starts {
        let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let p = sig(&[rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]);
        let mut pair = LinePair {
            b: make_line_projector(&sig(&[t.cos(), t.sin()]), &p)?,
            d: make_line_projector(&sig(&[-t.sin(), t.cos()]), &p)?,
        };
        let x0 = sig(&[rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)]);
        let x1 = dr_iterate(&DrState::new(x0, 1.0)?, &mut pair)?;
        let x2 = dr_iterate(&x1, &mut pair)?;
        out.plane = out.plane.max(x1.x.dist(&p));
        out.plane_fixed = out.plane_fixed.max(x2.x.dist(&x1.x));

        let (u1, u2) = orthonormal_pair(&mut rng);
        let u3 = u1.cross(&u2);
        let p3 = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let x0 = Vector3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let mut pair = LinePair {
            b: make_line_projector(&sig(u1.as_slice()), &sig(p3.as_slice()))?,
            d: make_line_projector(&sig(u2.as_slice()), &sig(p3.as_slice()))?,
        };
        let predicted = p3 + u3 * u3.dot(&(x0 - p3));
        let x1 = dr_iterate(&DrState::new(sig(x0.as_slice()), 1.0)?, &mut pair)?;
        out.space = out.space.max(x1.x.dist(&sig(predicted.as_slice())));
    }
    Ok(out)
}

fn run_lines(cfg: &ExperimentConfig) -> Result<RunReport> {
    let d = lines_demo(cfg.iters, cfg.seed)?;
    let ok = d.plane <= 1e-12 && d.plane_fixed <= 1e-12 && d.space <= 1e-10;
    let summary = vec![
        format!(
            "plane: {} random starts, worst distance of the first iterate to the fixed point {:e}",
            cfg.iters, d.plane
        ),
        format!("plane: second step moves at most {:e}", d.plane_fixed),
        format!("space: worst distance to the predicted axis point {:e}", d.space),
        if ok { "converged in one step".into() } else { "one-step convergence FAILED".into() },
    ];
    let mut files = Vec::new();
    let notes: Vec<String> = summary.clone();
    write_manifest(&cfg.out, cfg, &notes, &mut files)?;
    Ok(RunReport {
        status: if ok { ExitStatus::Exact } else { ExitStatus::SolverFailure },
        summary,
        files,
    })
}

fn run_bridge(cfg: &ExperimentConfig) -> Result<RunReport> {
    let prep = prepare_denoise1d(cfg)?;
    let p = &prep.problem;
    let x0 = gaussian_noise(p.y.shape(), 1.0, RngSeed(cfg.seed.wrapping_add(1)))?;
    let run = run_bridged(p, cfg.rho0, cfg.eta, &x0, cfg.iters, &AdmmOptions::fixed(1e-13))?;
    let gap = run.discrepancy()?;
    let ok = gap <= 1e-8;
    let summary = vec![
        format!("n = {}, {} windows, rho = {}, eta = {}, {} iterations", p.y.len(), p.ws.len(), cfg.rho0, cfg.eta, cfg.iters),
        format!("max ADMM/DR discrepancy {gap:e}{}", if ok { "" } else { " (above 1e-8)" }),
    ];
    let mut files = Vec::new();
    write_manifest(&cfg.out, cfg, &summary, &mut files)?;
    Ok(RunReport {
        status: if ok { ExitStatus::Exact } else { ExitStatus::SolverFailure },
        summary,
        files,
    })
}

/// Validates `cfg`, runs its mode and writes the outputs under `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    match cfg.mode {
        Mode::Denoise1d => run_inverse(cfg, prepare_denoise1d(cfg)?),
        Mode::Deconv2d => run_inverse(cfg, prepare_deconv2d(cfg)?),
        Mode::LinesDemo => run_lines(cfg),
        Mode::BridgeTest => run_bridge(cfg),
    }
}
