//! Flat TOML experiment configuration.
//!
//! Every key is top level; unknown keys are rejected. See `docs/config.md`
//! for the schema.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use mfgc::model::{lq_model, nonlinear_model, LqSpec, Model};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    FixedpointDecay,
    MonotonicityAudit,
    NashSolve,
    SdeNorms,
    MasterResidual,
    Convergence,
    MfgPicard,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::FixedpointDecay,
        Experiment::MonotonicityAudit,
        Experiment::NashSolve,
        Experiment::SdeNorms,
        Experiment::MasterResidual,
        Experiment::Convergence,
        Experiment::MfgPicard,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::FixedpointDecay => "fixedpoint-decay",
            Experiment::MonotonicityAudit => "monotonicity-audit",
            Experiment::NashSolve => "nash-solve",
            Experiment::SdeNorms => "sde-norms",
            Experiment::MasterResidual => "master-residual",
            Experiment::Convergence => "convergence",
            Experiment::MfgPicard => "mfg-picard",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
pub enum ModelName {
    #[serde(rename = "lq")]
    Lq,
    #[serde(rename = "lq-tanh")]
    LqTanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LiftKind {
    Riccati,
    Grid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayVariable {
    P,
    X,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<Experiment>,
    pub seed: Option<u64>,
    #[serde(default = "defaults::output_dir")]
    pub output_dir: PathBuf,
    #[serde(alias = "N_list")]
    pub n_list: Vec<usize>,

    pub model: ModelName,
    #[serde(default = "defaults::one_usize")]
    pub dim: usize,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub c_x: f64,
    #[serde(default)]
    pub q_x: f64,
    #[serde(default)]
    pub c_g: f64,
    #[serde(default)]
    pub q_g: f64,
    #[serde(default)]
    pub eps: f64,
    #[serde(default)]
    pub sigma0: f64,
    #[serde(default = "defaults::one")]
    pub horizon: f64,

    #[serde(default = "defaults::radius")]
    pub radius: f64,
    #[serde(default = "defaults::points")]
    pub points: usize,
    /// Time step as a fraction of the explicit stability bound.
    #[serde(default = "defaults::one")]
    pub dt_factor: f64,

    #[serde(default = "defaults::samples")]
    pub samples: usize,
    #[serde(default = "defaults::cloud_size")]
    pub cloud_size: usize,
    #[serde(default = "defaults::one")]
    pub sample_scale: f64,
    #[serde(default = "defaults::probe_players")]
    pub probe_players: usize,
    #[serde(default = "defaults::order")]
    pub order: usize,
    #[serde(default = "defaults::variable")]
    pub variable: DecayVariable,
    #[serde(default = "defaults::paths")]
    pub paths: usize,
    #[serde(default = "defaults::steps")]
    pub steps: usize,
    #[serde(default = "defaults::probes")]
    pub probes: usize,
    #[serde(default = "defaults::probe_scale")]
    pub probe_scale: f64,
    #[serde(default = "defaults::lift")]
    pub lift: LiftKind,

    #[serde(default = "defaults::picard_radius")]
    pub picard_radius: f64,
    #[serde(default = "defaults::picard_points")]
    pub picard_points: usize,
    #[serde(default = "defaults::damping")]
    pub damping: f64,
    #[serde(default = "defaults::particles")]
    pub particles: usize,
    #[serde(default = "defaults::time_intervals")]
    pub time_intervals: usize,
    #[serde(default = "defaults::max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub m0_mean: f64,
    #[serde(default = "defaults::one")]
    pub m0_std: f64,
    #[serde(default = "defaults::starts")]
    pub starts: usize,

    #[serde(default = "defaults::tol")]
    pub tol: f64,
    #[serde(default = "defaults::riccati_tol")]
    pub riccati_tol: f64,
    #[serde(default = "defaults::ll_tolerance")]
    pub ll_tolerance: f64,
    #[serde(default = "defaults::slope_band")]
    pub slope_band: [f64; 2],
    #[serde(default = "defaults::second_slope_band")]
    pub second_slope_band: [f64; 2],
    #[serde(default = "defaults::convergence_band")]
    pub convergence_band: [f64; 2],
}

mod defaults {
    use super::{DecayVariable, LiftKind};
    use std::path::PathBuf;

    pub fn output_dir() -> PathBuf {
        PathBuf::from("out")
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn one_usize() -> usize {
        1
    }
    pub fn radius() -> f64 {
        3.0
    }
    pub fn points() -> usize {
        17
    }
    pub fn samples() -> usize {
        100
    }
    pub fn cloud_size() -> usize {
        16
    }
    pub fn probe_players() -> usize {
        4
    }
    pub fn order() -> usize {
        2
    }
    pub fn variable() -> DecayVariable {
        DecayVariable::P
    }
    pub fn paths() -> usize {
        10_000
    }
    pub fn steps() -> usize {
        50
    }
    pub fn probes() -> usize {
        50
    }
    pub fn probe_scale() -> f64 {
        0.7
    }
    pub fn lift() -> LiftKind {
        LiftKind::Riccati
    }
    pub fn picard_radius() -> f64 {
        5.0
    }
    pub fn picard_points() -> usize {
        201
    }
    pub fn damping() -> f64 {
        0.5
    }
    pub fn particles() -> usize {
        64
    }
    pub fn time_intervals() -> usize {
        50
    }
    pub fn max_iter() -> usize {
        200
    }
    pub fn starts() -> usize {
        2
    }
    pub fn tol() -> f64 {
        1e-4
    }
    pub fn riccati_tol() -> f64 {
        5e-3
    }
    pub fn ll_tolerance() -> f64 {
        2e-2
    }
    pub fn slope_band() -> [f64; 2] {
        [-1.3, -0.7]
    }
    pub fn second_slope_band() -> [f64; 2] {
        [-2.5, -1.5]
    }
    pub fn convergence_band() -> [f64; 2] {
        [0.5, 1.5]
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}:{line}: field `{field}`: {message}")]
    Field {
        path: PathBuf,
        /// Line of the key, or 0 when the key is absent.
        line: usize,
        field: String,
        message: String,
    },
}

/// One-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, column)
}

/// Line on which `key` is assigned, if any.
fn key_line(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map_or(0, |p| p + 1)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Parses and validates `text`; `path` is used in diagnostics only.
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            ConfigError::Parse {
                path: path.to_path_buf(),
                line,
                column,
                message: e.message().trim().to_string(),
            }
        })?;
        config
            .validate()
            .map_err(|(field, message)| ConfigError::Field {
                path: path.to_path_buf(),
                line: key_line(text, field).max(if field == "n_list" {
                    key_line(text, "N_list")
                } else {
                    0
                }),
                field: field.to_string(),
                message,
            })?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.seed.is_none() {
            return Err(("seed", "a 64-bit seed is required".into()));
        }
        if self.n_list.is_empty() {
            return Err(("n_list", "must not be empty".into()));
        }
        if self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err((
                "n_list",
                format!("{:?} is not strictly ascending", self.n_list),
            ));
        }
        if self.n_list[0] < 2 {
            return Err(("n_list", "every N must be at least 2".into()));
        }
        let positive = [
            ("tol", self.tol),
            ("riccati_tol", self.riccati_tol),
            ("horizon", self.horizon),
            ("radius", self.radius),
            ("dt_factor", self.dt_factor),
            ("sample_scale", self.sample_scale),
            ("probe_scale", self.probe_scale),
            ("picard_radius", self.picard_radius),
            ("damping", self.damping),
            ("m0_std", self.m0_std),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err((name, format!("{v} must be positive")));
            }
        }
        if !(self.ll_tolerance.is_finite() && self.ll_tolerance >= 0.0) {
            return Err((
                "ll_tolerance",
                format!("{} must be >= 0", self.ll_tolerance),
            ));
        }
        if self.dt_factor > 1.0 {
            return Err((
                "dt_factor",
                format!("{} exceeds the stability bound", self.dt_factor),
            ));
        }
        if self.damping > 1.0 {
            return Err(("damping", format!("{} must be in (0, 1]", self.damping)));
        }
        for (name, band) in [
            ("slope_band", self.slope_band),
            ("second_slope_band", self.second_slope_band),
            ("convergence_band", self.convergence_band),
        ] {
            if !(band[0] <= band[1]) {
                return Err((name, format!("{band:?} is not an interval")));
            }
        }
        if !(1..=3).contains(&self.order) {
            return Err(("order", format!("{} not in 1..=3", self.order)));
        }
        if self.probe_players < self.order + 1 {
            return Err((
                "probe_players",
                format!("need at least {} for order {}", self.order + 1, self.order),
            ));
        }
        if self.model == ModelName::Lq && self.eps != 0.0 {
            return Err(("eps", "only the lq-tanh model takes eps".into()));
        }
        for (name, v) in [
            ("samples", self.samples),
            ("paths", self.paths),
            ("steps", self.steps),
            ("probes", self.probes),
            ("particles", self.particles),
            ("time_intervals", self.time_intervals),
            ("max_iter", self.max_iter),
            ("starts", self.starts),
        ] {
            if v == 0 {
                return Err((name, "must be at least 1".into()));
            }
        }
        if self.cloud_size < 2 {
            return Err(("cloud_size", "must be at least 2".into()));
        }
        self.build_model().map_err(|e| ("model", e.to_string()))?;
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated config has a seed")
    }

    pub fn spec(&self) -> LqSpec {
        LqSpec {
            dim: self.dim,
            lambda: self.lambda,
            c_x: self.c_x,
            q_x: self.q_x,
            c_g: self.c_g,
            q_g: self.q_g,
        }
    }

    pub fn build_model(&self) -> Result<Model, mfgc::ModelError> {
        match self.model {
            ModelName::Lq => lq_model(self.spec(), self.sigma0, self.horizon),
            ModelName::LqTanh => nonlinear_model(self.eps, self.spec(), self.sigma0, self.horizon),
        }
    }
}
