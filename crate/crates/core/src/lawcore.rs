//! Compression-law value types and their pure evaluation.
//!
//! A compression law predicts the performance `L` of a compressed model from
//! the base-model performance `L0`, the compression ratio `r` and the size `D`
//! of the recovery fine-tuning set:
//!
//! ```text
//! L = L0^alpha * (1 + r)^beta * (1 + 1/(D + eps))^gamma
//! ```
//!
//! Every evaluation goes through the log-linear form
//! `alpha*ln L0 + beta*ln(1+r) + gamma*ln(1 + 1/(D+eps))` followed by `exp`, which
//! is the same linear model the regression module fits.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regress::FitStatistics;

pub const DEFAULT_EPSILON: f64 = 1.0;

/// What the performance numbers measure. Determines the expected exponent signs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    /// Cross-entropy loss; lower is better, so compression should raise it.
    Loss,
    /// Accuracy; higher is better, so compression should lower it.
    Accuracy,
    /// Inference runtime; compression should lower it.
    Runtime,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Loss => "loss",
            MetricKind::Accuracy => "accuracy",
            MetricKind::Runtime => "runtime",
        }
    }

    /// True when a larger value means a better model.
    pub fn higher_is_better(self) -> bool {
        matches!(self, MetricKind::Accuracy)
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "loss" => Ok(MetricKind::Loss),
            "accuracy" => Ok(MetricKind::Accuracy),
            "runtime" => Ok(MetricKind::Runtime),
            other => Err(Error::InvalidParameter(format!(
                "unknown metric `{other}` (expected loss, accuracy or runtime)"
            ))),
        }
    }
}

/// Which factors of the law are present. Ablated factors carry a zero exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawForm {
    #[default]
    Full,
    RatioOnly,
    DataOnly,
}

impl LawForm {
    pub fn has_ratio(self) -> bool {
        !matches!(self, LawForm::DataOnly)
    }

    pub fn has_data(self) -> bool {
        !matches!(self, LawForm::RatioOnly)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressionLaw {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub metric: MetricKind,
    #[serde(default)]
    pub form: LawForm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<FitStatistics>,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl CompressionLaw {
    /// Full law with `eps = 1`.
    pub fn new(alpha: f64, beta: f64, gamma: f64, metric: MetricKind) -> Result<Self> {
        Self::with_epsilon(alpha, beta, gamma, DEFAULT_EPSILON, metric)
    }

    pub fn with_epsilon(
        alpha: f64,
        beta: f64,
        gamma: f64,
        epsilon: f64,
        metric: MetricKind,
    ) -> Result<Self> {
        let law = CompressionLaw {
            alpha,
            beta,
            gamma,
            epsilon,
            metric,
            form: LawForm::Full,
            stats: None,
        };
        law.validate()?;
        Ok(law)
    }

    /// `L0^alpha (1+r)^beta`.
    pub fn ratio_only(alpha: f64, beta: f64, metric: MetricKind) -> Result<Self> {
        let mut law = Self::new(alpha, beta, 0.0, metric)?;
        law.form = LawForm::RatioOnly;
        Ok(law)
    }

    /// `L0^alpha (1 + 1/(D+eps))^gamma`.
    pub fn data_only(alpha: f64, gamma: f64, epsilon: f64, metric: MetricKind) -> Result<Self> {
        let mut law = Self::with_epsilon(alpha, 0.0, gamma, epsilon, metric)?;
        law.form = LawForm::DataOnly;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !v.is_finite() {
                return Err(Error::domain(field, v, "finite exponent"));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::domain("epsilon", self.epsilon, "epsilon > 0"));
        }
        if !self.form.has_ratio() && self.beta != 0.0 {
            return Err(Error::InvalidParameter(
                "data-only law must have beta = 0".into(),
            ));
        }
        if !self.form.has_data() && self.gamma != 0.0 {
            return Err(Error::InvalidParameter(
                "ratio-only law must have gamma = 0".into(),
            ));
        }
        Ok(())
    }

    /// Predicted compressed-model performance.
    pub fn evaluate(&self, l0: f64, r: f64, d: f64) -> Result<f64> {
        evaluate(self, l0, r, d)
    }

    /// `(1+r)^beta (1+1/(D+eps))^gamma`, i.e. `L / L0^alpha`.
    pub fn retention(&self, r: f64, d: f64) -> Result<f64> {
        check_ratio(r)?;
        check_data(d)?;
        Ok(log_linear(&[
            (self.beta, ratio_regressor(r)),
            (self.gamma, data_regressor(d, self.epsilon)),
        ])
        .exp())
    }
}

/// Inference-runtime law `S = c (1+r)^beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuntimeLaw {
    pub c: f64,
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<FitStatistics>,
}

impl RuntimeLaw {
    pub fn new(c: f64, beta: f64) -> Result<Self> {
        let law = RuntimeLaw {
            c,
            beta,
            stats: None,
        };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::domain("c", self.c, "c > 0"));
        }
        if !self.beta.is_finite() {
            return Err(Error::domain("beta", self.beta, "finite exponent"));
        }
        Ok(())
    }

    pub fn evaluate(&self, r: f64) -> Result<f64> {
        evaluate_runtime(self, r)
    }
}

/// Either kind of fitted law, as stored in registries and reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Law {
    Compression(CompressionLaw),
    Runtime(RuntimeLaw),
}

impl Law {
    pub fn validate(&self) -> Result<()> {
        match self {
            Law::Compression(l) => l.validate(),
            Law::Runtime(l) => l.validate(),
        }
    }

    pub fn metric(&self) -> MetricKind {
        match self {
            Law::Compression(l) => l.metric,
            Law::Runtime(_) => MetricKind::Runtime,
        }
    }

    pub fn stats(&self) -> Option<&FitStatistics> {
        match self {
            Law::Compression(l) => l.stats.as_ref(),
            Law::Runtime(l) => l.stats.as_ref(),
        }
    }
}

impl From<CompressionLaw> for Law {
    fn from(l: CompressionLaw) -> Self {
        Law::Compression(l)
    }
}

impl From<RuntimeLaw> for Law {
    fn from(l: RuntimeLaw) -> Self {
        Law::Runtime(l)
    }
}

pub(crate) fn check_l0(l0: f64) -> Result<()> {
    if l0.is_finite() && l0 > 0.0 {
        Ok(())
    } else {
        Err(Error::domain("l0", l0, "finite, l0 > 0"))
    }
}

pub(crate) fn check_ratio(r: f64) -> Result<()> {
    if r.is_finite() && (0.0..1.0).contains(&r) {
        Ok(())
    } else {
        Err(Error::domain("r", r, "0 <= r < 1"))
    }
}

pub(crate) fn check_data(d: f64) -> Result<()> {
    // +inf is admitted: it is the limit of unbounded fine-tuning data.
    if !d.is_nan() && d >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain("d", d, "d >= 0"))
    }
}

pub(crate) fn ratio_regressor(r: f64) -> f64 {
    r.ln_1p()
}

pub(crate) fn data_regressor(d: f64, epsilon: f64) -> f64 {
    (1.0 / (d + epsilon)).ln_1p()
}

/// Sum of `coefficient * regressor` terms in a fixed order.
pub(crate) fn log_linear(terms: &[(f64, f64)]) -> f64 {
    terms.iter().fold(0.0, |acc, &(coef, x)| acc + coef * x)
}

pub fn evaluate(law: &CompressionLaw, l0: f64, r: f64, d: f64) -> Result<f64> {
    check_l0(l0)?;
    check_ratio(r)?;
    check_data(d)?;
    Ok(law_value(law.alpha, law.beta, law.gamma, law.epsilon, l0, r, d))
}

fn law_value(alpha: f64, beta: f64, gamma: f64, epsilon: f64, l0: f64, r: f64, d: f64) -> f64 {
    log_linear(&[
        (alpha, l0.ln()),
        (beta, ratio_regressor(r)),
        (gamma, data_regressor(d, epsilon)),
    ])
    .exp()
}

/// `L0^alpha (1+r)^beta`.
pub fn evaluate_ablation_r(alpha: f64, beta: f64, l0: f64, r: f64) -> Result<f64> {
    check_exponents(&[("alpha", alpha), ("beta", beta)])?;
    check_l0(l0)?;
    check_ratio(r)?;
    Ok(law_value(alpha, beta, 0.0, DEFAULT_EPSILON, l0, r, 0.0))
}

/// `L0^alpha (1 + 1/(D+eps))^gamma`.
pub fn evaluate_ablation_d(alpha: f64, gamma: f64, epsilon: f64, l0: f64, d: f64) -> Result<f64> {
    check_exponents(&[("alpha", alpha), ("gamma", gamma)])?;
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::domain("epsilon", epsilon, "epsilon > 0"));
    }
    check_l0(l0)?;
    check_data(d)?;
    Ok(law_value(alpha, 0.0, gamma, epsilon, l0, 0.0, d))
}

fn check_exponents(exps: &[(&'static str, f64)]) -> Result<()> {
    match exps.iter().find(|(_, v)| !v.is_finite()) {
        Some(&(field, v)) => Err(Error::domain(field, v, "finite exponent")),
        None => Ok(()),
    }
}

pub fn evaluate_runtime(law: &RuntimeLaw, r: f64) -> Result<f64> {
    check_ratio(r)?;
    Ok((law.c.ln() + law.beta * ratio_regressor(r)).exp())
}

/// Exponent whose sign contradicts the metric's expected direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exponent {
    Beta,
    Gamma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignViolation {
    pub exponent: Exponent,
    pub value: f64,
    /// Human-readable form of the expected sign, e.g. `"< 0"`.
    pub expected: String,
}

impl fmt::Display for SignViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.exponent {
            Exponent::Beta => "beta",
            Exponent::Gamma => "gamma",
        };
        write!(f, "{name} = {} violates expected sign {}", self.value, self.expected)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub violations: Vec<SignViolation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violates(&self, exponent: Exponent) -> bool {
        self.violations.iter().any(|v| v.exponent == exponent)
    }
}

/// Check the exponent signs against the metric's direction.
///
/// Loss expects `beta > 0, gamma > 0`; accuracy expects `beta < 0, gamma < 0`;
/// runtime expects `beta < 0` and places no constraint on `gamma`. Exponents
/// of ablated factors are not checked.
pub fn check_feasibility(law: &CompressionLaw) -> FeasibilityReport {
    let mut report = FeasibilityReport::default();
    let (check_gamma, positive) = match law.metric {
        MetricKind::Loss => (true, true),
        MetricKind::Accuracy => (true, false),
        MetricKind::Runtime => (false, false),
    };
    let mut check = |exponent, value: f64| {
        let ok = if positive { value > 0.0 } else { value < 0.0 };
        if !ok {
            report.violations.push(SignViolation {
                exponent,
                value,
                expected: if positive { "> 0" } else { "< 0" }.to_string(),
            });
        }
    };
    if law.form.has_ratio() {
        check(Exponent::Beta, law.beta);
    }
    if check_gamma && law.form.has_data() {
        check(Exponent::Gamma, law.gamma);
    }
    report
}

/// Runtime laws are feasible when compression shortens runtime (`beta < 0`).
pub fn check_runtime_feasibility(law: &RuntimeLaw) -> FeasibilityReport {
    let mut report = FeasibilityReport::default();
    if !(law.beta < 0.0) {
        report.violations.push(SignViolation {
            exponent: Exponent::Beta,
            value: law.beta,
            expected: "< 0".to_string(),
        });
    }
    report
}
