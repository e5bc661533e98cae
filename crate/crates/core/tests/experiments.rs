use std::path::Path;
use std::process::Command;

use msadmm::driver::{read_stages_csv, write_stages_csv};
use msadmm::experiment::{gen_synthetic_2d, run_experiment, ExitStatus, ExperimentConfig, Mode};
use msadmm::experiment::run::{prepare_deconv2d, solve};
use msadmm::io::{read_binary, read_csv, signal_to_csv, write_binary};
use msadmm::linop::LinearMap;
use msadmm::multiscale::WindowSystem;
use msadmm::signal::{RngSeed, Shape};
use msadmm::solver::{Problem, SolverTrace};

fn small_denoise(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(Mode::Denoise1d);
    cfg.n = 48;
    cfg.lmax = 6;
    cfg.out = out.to_path_buf();
    cfg
}

#[test]
fn emitted_csvs_round_trip_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_denoise(dir.path());
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.status, ExitStatus::Exact);

    let trace_text = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let trace = SolverTrace::load(&dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.to_csv_string(), trace_text);

    let stages_text = std::fs::read(dir.path().join("stages.csv")).unwrap();
    let stages = read_stages_csv(stages_text.as_slice()).unwrap();
    let mut again = Vec::new();
    write_stages_csv(&stages, &mut again).unwrap();
    assert_eq!(again, stages_text);

    let recon_text = std::fs::read_to_string(dir.path().join("recon.csv")).unwrap();
    let recon = read_csv(&dir.path().join("recon.csv")).unwrap();
    assert_eq!(signal_to_csv(&recon), recon_text);
    assert_eq!(read_binary(&dir.path().join("recon.f64")).unwrap(), recon);
}

#[test]
fn manifest_reproduces_the_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut cfg = small_denoise(a.path());
    cfg.seed = 99;
    run_experiment(&cfg).unwrap();

    let mut again = ExperimentConfig::new(Mode::LinesDemo);
    again.apply_file(&a.path().join("manifest.txt")).unwrap();
    assert_eq!(again, cfg);
    again.out = b.path().to_path_buf();
    run_experiment(&again).unwrap();
    for f in ["recon.f64", "recon.csv", "stages.csv", "recon.pgm"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn delta_psf_reduces_to_denoising() {
    let dir = tempfile::tempdir().unwrap();
    let (_, y) = gen_synthetic_2d(10, 12, 0.05, RngSeed(5)).unwrap();
    let image = dir.path().join("y.f64");
    let psf = dir.path().join("delta.csv");
    write_binary(&image, &y).unwrap();
    std::fs::write(&psf, "1\n").unwrap();

    let mut cfg = ExperimentConfig::new(Mode::Deconv2d);
    cfg.image = Some(image);
    cfg.psf = Some(psf);
    cfg.out = dir.path().join("out");
    let prep = prepare_deconv2d(&cfg).unwrap();
    assert!(prep.truth.is_none());
    let deconv = solve(&prep.problem, &cfg).unwrap();

    let denoise = Problem::new(
        cfg.regularizer().unwrap(),
        LinearMap::identity(Shape::d2(10, 12)),
        WindowSystem::build_2d(10, 12, &cfg.sizes, cfg.q(), cfg.scaling).unwrap(),
        y,
    )
    .unwrap();
    let plain = solve(&denoise, &cfg).unwrap();
    assert_eq!(deconv.exact, plain.exact);
    let gap = deconv.u.dist(&plain.u);
    assert!(gap <= 1e-10, "delta PSF differs from denoising by {gap:e}");
}

#[test]
fn missing_psf_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(Mode::Deconv2d);
    cfg.psf = Some(dir.path().join("nope.csv"));
    cfg.out = dir.path().join("out");
    let err = run_experiment(&cfg).unwrap_err();
    assert_eq!(ExitStatus::of_error(&err), ExitStatus::IoOrConfig);
    assert!(err.to_string().contains("nope.csv"));
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_msadmm"))
}

#[test]
fn cli_flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "# small run\nn = 40\nlmax = 4\nseed = 3\n").unwrap();
    let out = dir.path().join("out");
    let status = cli()
        .args(["denoise1d", "--config"])
        .arg(&conf)
        .args(["--lmax", "5", "--out"])
        .arg(&out)
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(0));
    let mut echoed = ExperimentConfig::new(Mode::Denoise1d);
    echoed.apply_file(&out.join("manifest.txt")).unwrap();
    assert_eq!((echoed.n, echoed.lmax, echoed.seed), (40, 5, 3));
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("# windows = 190"), "{manifest}");
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let code = |args: &[&str]| cli().args(args).arg("--out").arg(&out).output().unwrap().status.code();
    assert_eq!(code(&["lines-demo"]), Some(0));
    assert_eq!(code(&["denoise1d", "--alpha", "-1"]), Some(4));
    assert_eq!(code(&["denoise1d", "--no-such-key", "1"]), Some(4));
    assert_eq!(code(&["deconv2d", "--psf", "/nonexistent/psf.csv"]), Some(4));
    // a penalty cap below the exact threshold
    assert_eq!(code(&["denoise1d", "--n", "32", "--lmax", "4", "--rho-cap", "0.0625"]), Some(2));
}

#[test]
fn cli_bridge_test_prints_discrepancy() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli().args(["bridge-test", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let line = text.lines().find(|l| l.contains("discrepancy")).unwrap();
    let gap: f64 = line.split_whitespace().last().unwrap().parse().unwrap();
    assert!(gap <= 1e-8);
}
