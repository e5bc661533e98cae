use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Arg, ArgMatches, Command};
use msadmm::experiment::{run_experiment, ExitStatus, ExperimentConfig, Mode, KEYS};

fn subcommand(mode: Mode) -> Command {
    let about = match mode {
        Mode::Denoise1d => "Denoise a 1D signal under multiscale constraints",
        Mode::Deconv2d => "Deconvolve a 2D image under multiscale constraints",
        Mode::LinesDemo => "Douglas-Rachford on two orthogonal lines",
        Mode::BridgeTest => "Check that bridged ADMM and DR sequences coincide",
    };
    let mut cmd = Command::new(mode.name()).about(about).arg(
        Arg::new("config")
            .long("config")
            .value_name("PATH")
            .value_parser(clap::value_parser!(PathBuf))
            .help("key = value file; flags override it"),
    );
    for key in KEYS.iter().filter(|k| **k != "mode") {
        cmd = cmd.arg(Arg::new(*key).long(*key).value_name("VALUE").allow_negative_numbers(true));
    }
    cmd
}

fn cli() -> Command {
    Mode::ALL.into_iter().fold(
        Command::new("msadmm")
            .version(env!("CARGO_PKG_VERSION"))
            .about("Multiscale-constrained estimation by exactly penalized ADMM")
            .subcommand_required(true),
        |c, m| c.subcommand(subcommand(m)),
    )
}

fn build_config(mode: Mode, m: &ArgMatches) -> msadmm::error::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::new(mode);
    if let Some(path) = m.get_one::<PathBuf>("config") {
        cfg.apply_file(path)?;
    }
    cfg.mode = mode;
    for key in KEYS.iter().filter(|k| **k != "mode") {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(ExitStatus::IoOrConfig.code() as u8),
            };
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let mode: Mode = name.parse().expect("subcommands are modes");
    let status = match build_config(mode, sub).and_then(|cfg| run_experiment(&cfg)) {
        Ok(report) => {
            for line in &report.summary {
                println!("{line}");
            }
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            report.status
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitStatus::of_error(&e)
        }
    };
    ExitCode::from(status.code() as u8)
}
