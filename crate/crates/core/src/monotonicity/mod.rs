//! Sampled audits of the monotonicity conditions on model data and on
//! computed solutions.
//!
//! Every audit draws independent Gaussian samples (one ChaCha8 stream per
//! sample), evaluates a scalar per sample and reports the minimum against a
//! threshold together with the five worst samples.

mod audits;
mod propagation;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::meanfield::MeanFieldError;
use crate::model::{ModelError, MonotonicityConstants};

pub use audits::{
    audit_discrete_m, audit_disp_g, audit_disp_l, audit_ll, compute_c_disp, fit_constants,
    fit_disp_g, fit_disp_l, remark_equivalence, LlTarget, RemarkCheck,
};
pub use propagation::{audit_ll_propagation, PropagationOptions, PropagationReport, SliceAudit};

#[derive(Debug, Error)]
pub enum MonotonicityError {
    #[error("model '{0}' declares no monotonicity constants and none were fitted")]
    MissingConstants(String),
    #[error("invalid audit input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    MeanField(#[from] MeanFieldError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AuditKind {
    DiscreteM,
    DispL,
    DispG,
    LlL,
    LlG,
    CDisp,
    LlPropagation,
}

impl AuditKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AuditKind::DiscreteM => "discrete_M",
            AuditKind::DispL => "disp_L",
            AuditKind::DispG => "disp_G",
            AuditKind::LlL => "ll_L",
            AuditKind::LlG => "ll_G",
            AuditKind::CDisp => "C_disp",
            AuditKind::LlPropagation => "ll_propagation",
        }
    }
}

impl fmt::Display for AuditKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Witness {
    pub sample: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicityReport {
    pub kind: AuditKind,
    pub samples: usize,
    pub worst_value: f64,
    pub threshold: f64,
    /// Pass requires `worst_value > threshold` rather than `>=`.
    pub strict: bool,
    pub pass: bool,
    /// Up to five samples with the smallest values, in increasing order.
    pub witnesses: Vec<Witness>,
    /// Per-sample values in sample order.
    pub values: Vec<f64>,
    /// Constants used (declared) or estimated (fitted).
    pub constants: Option<MonotonicityConstants>,
    pub fitted: bool,
}

const WITNESSES: usize = 5;

impl MonotonicityReport {
    pub(crate) fn from_values(
        kind: AuditKind,
        values: Vec<f64>,
        threshold: f64,
        strict: bool,
    ) -> Self {
        let worst_value = values.iter().copied().fold(f64::INFINITY, f64::min);
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        let witnesses = order
            .into_iter()
            .take(WITNESSES)
            .map(|k| Witness {
                sample: k,
                value: values[k],
            })
            .collect();
        let mut report = Self {
            kind,
            samples: values.len(),
            worst_value,
            threshold,
            strict,
            pass: false,
            witnesses,
            values,
            constants: None,
            fitted: false,
        };
        report.pass = report.passes(worst_value);
        report
    }

    pub(crate) fn with_worst(mut self, worst_value: f64, threshold: f64) -> Self {
        self.worst_value = worst_value;
        self.threshold = threshold;
        self.pass = self.passes(worst_value);
        self
    }

    fn passes(&self, worst: f64) -> bool {
        if worst.is_nan() {
            return false;
        }
        if self.strict {
            worst > self.threshold
        } else {
            worst >= self.threshold
        }
    }
}

/// How audit samples are drawn.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sampling {
    pub samples: usize,
    /// Atoms per cloud for measure-level audits.
    pub cloud_size: usize,
    pub seed: u64,
    /// Standard deviation of positions and actions.
    pub scale: f64,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            samples: 100,
            cloud_size: 16,
            seed: 0,
            scale: 1.0,
        }
    }
}

impl Sampling {
    pub(crate) fn rng(&self, sample: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(sample as u64);
        rng
    }

    pub(crate) fn gaussian(&self, rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        (0..len)
            .map(|_| self.scale * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    pub(crate) fn check(&self, min_cloud: usize) -> Result<(), MonotonicityError> {
        if self.samples == 0 {
            return Err(MonotonicityError::InvalidInput(
                "at least one sample is needed".into(),
            ));
        }
        if self.cloud_size < min_cloud {
            return Err(MonotonicityError::InvalidInput(format!(
                "cloud size {} below the minimum {min_cloud}",
                self.cloud_size
            )));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(MonotonicityError::InvalidInput(format!(
                "scale {} must be > 0",
                self.scale
            )));
        }
        Ok(())
    }
}
