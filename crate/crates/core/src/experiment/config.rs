//! Experiment configuration: defaults per mode, `key = value` files and
//! per-key overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::driver::{DriverOptions, Gammas, PenaltySchedule};
use crate::error::{Error, Result};
use crate::linop::Boundary;
use crate::multiscale::ScalingRule;
use crate::prox::{QuadraticRegularizer, RegularizerKind};
use crate::signal::Signal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Denoise1d,
    Deconv2d,
    LinesDemo,
    BridgeTest,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Denoise1d, Mode::Deconv2d, Mode::LinesDemo, Mode::BridgeTest];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Denoise1d => "denoise1d",
            Mode::Deconv2d => "deconv2d",
            Mode::LinesDemo => "lines-demo",
            Mode::BridgeTest => "bridge-test",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode `{s}`")))
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How the constraint level `q` is obtained from the noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QRule {
    TwoSigma,
    ThreeSigma,
    Absolute(f64),
}

impl QRule {
    pub fn resolve(self, sigma: f64) -> f64 {
        match self {
            QRule::TwoSigma => 2.0 * sigma,
            QRule::ThreeSigma => 3.0 * sigma,
            QRule::Absolute(q) => q,
        }
    }
}

impl FromStr for QRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-sigma" | "2sigma" => Ok(QRule::TwoSigma),
            "three-sigma" | "3sigma" => Ok(QRule::ThreeSigma),
            other => other
                .parse::<f64>()
                .map(QRule::Absolute)
                .map_err(|_| Error::Config(format!("q-rule must be two-sigma, three-sigma or a number, got `{other}`"))),
        }
    }
}

impl fmt::Display for QRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QRule::TwoSigma => f.write_str("two-sigma"),
            QRule::ThreeSigma => f.write_str("three-sigma"),
            QRule::Absolute(q) => write!(f, "{q}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Length of the 1D signal.
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub sigma: f64,
    pub q_rule: QRule,
    /// 1D window lengths `lmin..=lmax`.
    pub lmin: usize,
    pub lmax: usize,
    /// 2D square window sizes.
    pub sizes: Vec<usize>,
    pub scaling: ScalingRule,
    pub regularizer: RegularizerKind,
    pub alpha: f64,
    pub eta: f64,
    pub rho0: f64,
    pub growth: f64,
    /// `None`: `10⁻²‖y‖`.
    pub gamma0: Option<f64>,
    pub gamma_factor: f64,
    pub rho_cap: f64,
    pub terminal_tol: f64,
    pub max_stage_iters: usize,
    pub max_final_iters: usize,
    pub seed: u64,
    /// Measured data; synthetic data is generated when absent.
    pub image: Option<PathBuf>,
    /// PSF file (deconv2d). Without one a Gaussian PSF is used.
    pub psf: Option<PathBuf>,
    pub psf_sigma: f64,
    pub psf_size: usize,
    pub boundary: Boundary,
    pub out: PathBuf,
    /// Random starts (lines-demo) or iterations (bridge-test).
    pub iters: usize,
}

/// Every key accepted by [`ExperimentConfig::set`], in manifest order.
pub const KEYS: &[&str] = &[
    "mode",
    "n",
    "h",
    "w",
    "sigma",
    "q-rule",
    "lmin",
    "lmax",
    "sizes",
    "scaling",
    "regularizer",
    "alpha",
    "eta",
    "rho0",
    "growth",
    "gamma0",
    "gamma-factor",
    "rho-cap",
    "terminal-tol",
    "max-stage-iters",
    "max-final-iters",
    "seed",
    "image",
    "psf",
    "psf-sigma",
    "psf-size",
    "boundary",
    "out",
    "iters",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn opt_path(value: &str) -> Option<PathBuf> {
    match value {
        "" | "none" => None,
        p => Some(PathBuf::from(p)),
    }
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(|| "none".to_string(), |p| p.display().to_string())
}

impl ExperimentConfig {
    pub fn new(mode: Mode) -> Self {
        let mut cfg = ExperimentConfig {
            mode,
            n: 128,
            h: 32,
            w: 32,
            sigma: 0.05,
            q_rule: QRule::TwoSigma,
            lmin: 1,
            lmax: 10,
            sizes: vec![1, 2],
            scaling: ScalingRule::InvSqrtSize,
            regularizer: RegularizerKind::SquaredGradient,
            alpha: 0.01,
            eta: 0.1,
            rho0: 0.03125,
            growth: 2.0,
            gamma0: None,
            gamma_factor: 0.5,
            rho_cap: 1048576.0,
            terminal_tol: 1e-10,
            max_stage_iters: 5_000,
            max_final_iters: 50_000,
            seed: 2024,
            image: None,
            psf: None,
            psf_sigma: 1.0,
            psf_size: 5,
            boundary: Boundary::Periodic,
            out: PathBuf::from("out"),
            iters: 100,
        };
        match mode {
            Mode::Deconv2d => cfg.q_rule = QRule::ThreeSigma,
            Mode::BridgeTest => {
                cfg.n = 16;
                cfg.lmax = 3;
                cfg.rho0 = 1.0;
            }
            _ => {}
        }
        cfg
    }

    /// Sets one key from its textual value. Underscores in `key` are read as
    /// hyphens.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        let k = key.as_str();
        match k {
            "mode" => self.mode = value.parse()?,
            "n" => self.n = parse_num(k, value)?,
            "h" => self.h = parse_num(k, value)?,
            "w" => self.w = parse_num(k, value)?,
            "sigma" => self.sigma = parse_num(k, value)?,
            "q-rule" | "q" => self.q_rule = value.parse()?,
            "lmin" => self.lmin = parse_num(k, value)?,
            "lmax" => self.lmax = parse_num(k, value)?,
            "sizes" => {
                self.sizes = value
                    .split(',')
                    .map(|s| parse_num(k, s.trim()))
                    .collect::<Result<Vec<usize>>>()?
            }
            "scaling" => self.scaling = value.parse()?,
            "regularizer" => self.regularizer = value.parse()?,
            "alpha" => self.alpha = parse_num(k, value)?,
            "eta" => self.eta = parse_num(k, value)?,
            "rho0" => self.rho0 = parse_num(k, value)?,
            "growth" => self.growth = parse_num(k, value)?,
            "gamma0" => {
                self.gamma0 = match value {
                    "auto" => None,
                    v => Some(parse_num(k, v)?),
                }
            }
            "gamma-factor" => self.gamma_factor = parse_num(k, value)?,
            "rho-cap" => self.rho_cap = parse_num(k, value)?,
            "terminal-tol" => self.terminal_tol = parse_num(k, value)?,
            "max-stage-iters" => self.max_stage_iters = parse_num(k, value)?,
            "max-final-iters" => self.max_final_iters = parse_num(k, value)?,
            "seed" => self.seed = parse_num(k, value)?,
            "image" => self.image = opt_path(value),
            "psf" => self.psf = opt_path(value),
            "psf-sigma" => self.psf_sigma = parse_num(k, value)?,
            "psf-size" => self.psf_size = parse_num(k, value)?,
            "boundary" => self.boundary = value.parse()?,
            "out" => self.out = PathBuf::from(value),
            "iters" => self.iters = parse_num(k, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<String> {
        Ok(match key.replace('_', "-").as_str() {
            "mode" => self.mode.to_string(),
            "n" => self.n.to_string(),
            "h" => self.h.to_string(),
            "w" => self.w.to_string(),
            "sigma" => self.sigma.to_string(),
            "q-rule" => self.q_rule.to_string(),
            "lmin" => self.lmin.to_string(),
            "lmax" => self.lmax.to_string(),
            "sizes" => self.sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
            "scaling" => self.scaling.to_string(),
            "regularizer" => self.regularizer.to_string(),
            "alpha" => self.alpha.to_string(),
            "eta" => self.eta.to_string(),
            "rho0" => self.rho0.to_string(),
            "growth" => self.growth.to_string(),
            "gamma0" => self.gamma0.map_or_else(|| "auto".to_string(), |g| g.to_string()),
            "gamma-factor" => self.gamma_factor.to_string(),
            "rho-cap" => self.rho_cap.to_string(),
            "terminal-tol" => self.terminal_tol.to_string(),
            "max-stage-iters" => self.max_stage_iters.to_string(),
            "max-final-iters" => self.max_final_iters.to_string(),
            "seed" => self.seed.to_string(),
            "image" => show_path(&self.image),
            "psf" => show_path(&self.psf),
            "psf-sigma" => self.psf_sigma.to_string(),
            "psf-size" => self.psf_size.to_string(),
            "boundary" => self.boundary.to_string(),
            "out" => self.out.display().to_string(),
            "iters" => self.iters.to_string(),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        })
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, format!("line {}: expected `key = value`", i + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::parse(origin, format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, path)
    }

    /// Every key as `key = value`, one per line; reads back through
    /// [`apply_text`](Self::apply_text).
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }

    pub fn q(&self) -> f64 {
        self.q_rule.resolve(self.sigma)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.sigma >= 0.0) {
            return bad(format!("sigma must be >= 0, got {}", self.sigma));
        }
        if !(self.q() >= 0.0) || !self.q().is_finite() {
            return bad(format!("q must be >= 0, got {}", self.q()));
        }
        if !(self.alpha > 0.0) {
            return bad(format!("alpha must be > 0, got {}", self.alpha));
        }
        if !(self.eta > 0.0) {
            return bad(format!("eta must be > 0, got {}", self.eta));
        }
        if self.lmin == 0 || self.lmax < self.lmin {
            return bad(format!("need 1 <= lmin <= lmax, got {}..{}", self.lmin, self.lmax));
        }
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return bad("sizes must be a nonempty list of positive integers".into());
        }
        if self.terminal_tol <= 0.0 || self.max_stage_iters == 0 || self.max_final_iters == 0 {
            return bad("terminal-tol and iteration caps must be positive".into());
        }
        if self.psf_size == 0 || !(self.psf_sigma > 0.0) {
            return bad("psf-size and psf-sigma must be positive".into());
        }
        if self.iters == 0 {
            return bad("iters must be positive".into());
        }
        self.schedule_for(&Signal::zeros(&crate::signal::Shape::d1(1)))?;
        Ok(())
    }

    pub fn regularizer(&self) -> Result<QuadraticRegularizer> {
        QuadraticRegularizer::new(self.regularizer, self.alpha)
    }

    /// Penalty schedule for data `y` (`γ₀` defaults to `10⁻²‖y‖`).
    pub fn schedule_for(&self, y: &Signal) -> Result<PenaltySchedule> {
        let gamma0 = self.gamma0.unwrap_or_else(|| 1e-2 * y.norm().max(f64::MIN_POSITIVE));
        PenaltySchedule::new(
            self.rho0,
            self.growth,
            Gammas::Geometric {
                gamma0,
                factor: self.gamma_factor,
            },
            self.rho_cap,
        )
        .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn driver_options(&self) -> DriverOptions {
        DriverOptions {
            eta: self.eta,
            terminal_tol: self.terminal_tol,
            max_stage_iters: self.max_stage_iters,
            max_final_iters: self.max_final_iters,
            ..DriverOptions::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = ExperimentConfig::new(Mode::Deconv2d);
        cfg.set("sizes", "1, 2,4").unwrap();
        cfg.set("q_rule", "0.3").unwrap();
        cfg.set("psf", "kernel.csv").unwrap();
        let mut back = ExperimentConfig::new(Mode::Denoise1d);
        back.apply_text(&cfg.to_text(), Path::new("<mem>")).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.q(), 0.3);
    }

    #[test]
    fn q_rules() {
        let mut cfg = ExperimentConfig::new(Mode::Denoise1d);
        assert!((cfg.q() - 0.1).abs() < 1e-15);
        cfg.set("q-rule", "three-sigma").unwrap();
        assert!((cfg.q() - 0.15).abs() < 1e-15);
        assert_eq!(ExperimentConfig::new(Mode::Deconv2d).q_rule, QRule::ThreeSigma);
    }

    #[test]
    fn comments_and_errors() {
        let mut cfg = ExperimentConfig::new(Mode::Denoise1d);
        cfg.apply_text("# header\n\nn = 64  # trailing\nalpha=0.5\n", Path::new("c")).unwrap();
        assert_eq!((cfg.n, cfg.alpha), (64, 0.5));
        assert!(cfg.apply_text("bogus = 1\n", Path::new("c")).is_err());
        assert!(cfg.apply_text("n 5\n", Path::new("c")).is_err());
        assert!(cfg.set("n", "-3").is_err());
        cfg.set("lmax", "0").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn every_key_is_settable() {
        let cfg = ExperimentConfig::new(Mode::BridgeTest);
        for k in KEYS {
            let mut c = cfg.clone();
            c.set(k, &cfg.get(k).unwrap()).unwrap();
            assert_eq!(c, cfg, "{k}");
        }
    }
}
