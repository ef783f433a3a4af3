//! Budget-constrained choice of which model to compress and how hard.
//!
//! A candidate with `N` parameters meets a parameter budget `B < N` at
//! compression ratio `r = 1 - B/N`. Each feasible candidate's performance at
//! that ratio is predicted from its compression law, and candidates are ranked
//! best-first (highest accuracy or lowest loss), with ties going to the
//! smaller ratio.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lawcore::{check_ratio, evaluate, ratio_regressor, CompressionLaw, MetricKind, RuntimeLaw};

/// Largest compression ratio in the experiments the laws were fitted on.
pub const DEFAULT_MAX_RATIO: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateModel {
    pub model_id: String,
    pub param_count: f64,
    pub l0: f64,
    pub law: CompressionLaw,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_law: Option<RuntimeLaw>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    /// Target post-compression parameter count.
    pub budget: f64,
    /// Fine-tuning data size assumed available.
    pub rft_size: f64,
    pub metric: MetricKind,
    /// Ratios at or above this cap are rejected.
    #[serde(default = "default_max_ratio")]
    pub max_ratio: f64,
}

fn default_max_ratio() -> f64 {
    DEFAULT_MAX_RATIO
}

impl PlanRequest {
    pub fn new(budget: f64, rft_size: f64, metric: MetricKind) -> Self {
        PlanRequest {
            budget,
            rft_size,
            metric,
            max_ratio: DEFAULT_MAX_RATIO,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RatioRequirement {
    NoCompressionNeeded,
    Ratio(f64),
    /// The ratio that would be needed, at or past the cap.
    OverBudget(f64),
}

impl RatioRequirement {
    /// The ratio to compress at, if the budget is reachable.
    pub fn ratio(self) -> Option<f64> {
        match self {
            RatioRequirement::NoCompressionNeeded => Some(0.0),
            RatioRequirement::Ratio(r) => Some(r),
            RatioRequirement::OverBudget(_) => None,
        }
    }
}

pub fn required_ratio(param_count: f64, budget: f64, max_ratio: f64) -> Result<RatioRequirement> {
    if !(param_count.is_finite() && param_count > 0.0) {
        return Err(Error::domain("param_count", param_count, "param_count > 0"));
    }
    if !(budget.is_finite() && budget > 0.0) {
        return Err(Error::domain("budget", budget, "budget > 0"));
    }
    if !(max_ratio > 0.0 && max_ratio <= 1.0) {
        return Err(Error::domain("max_ratio", max_ratio, "0 < max_ratio <= 1"));
    }
    if budget >= param_count {
        return Ok(RatioRequirement::NoCompressionNeeded);
    }
    let r = 1.0 - budget / param_count;
    if r >= max_ratio {
        Ok(RatioRequirement::OverBudget(r))
    } else {
        Ok(RatioRequirement::Ratio(r))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub model_id: String,
    pub required_ratio: f64,
    pub predicted_performance: f64,
    /// `(1+r)^beta` of the runtime law: compressed runtime over base runtime.
    pub predicted_runtime_factor: Option<f64>,
    /// Ratio beyond the range the laws were fitted on.
    pub extrapolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCandidate {
    pub model_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub metric: MetricKind,
    pub budget: f64,
    pub rft_size: f64,
    pub ranked: Vec<PlanEntry>,
    pub skipped: Vec<SkippedCandidate>,
}

pub fn plan(candidates: &[CandidateModel], request: &PlanRequest) -> Result<PlanResult> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("no candidate models to plan over".into()));
    }
    if request.metric == MetricKind::Runtime {
        return Err(Error::InvalidParameter(
            "plans rank by loss or accuracy, not runtime".into(),
        ));
    }
    if let Some(c) = candidates.iter().find(|c| c.law.metric != request.metric) {
        return Err(Error::MixedMetrics {
            first: request.metric.to_string(),
            other: format!("{} (candidate {})", c.law.metric, c.model_id),
        });
    }
    if !(request.budget.is_finite() && request.budget > 0.0) {
        return Err(Error::domain("budget", request.budget, "budget > 0"));
    }
    if request.rft_size.is_nan() || request.rft_size < 0.0 {
        return Err(Error::domain("rft_size", request.rft_size, "rft_size >= 0"));
    }

    let mut ranked = Vec::new();
    let mut skipped = Vec::new();
    for c in candidates {
        let requirement = required_ratio(c.param_count, request.budget, request.max_ratio)?;
        let Some(r) = requirement.ratio() else {
            let RatioRequirement::OverBudget(needed) = requirement else { unreachable!() };
            skipped.push(SkippedCandidate {
                model_id: c.model_id.clone(),
                reason: format!(
                    "needs compression ratio {needed:.4}, at or above the cap {}",
                    request.max_ratio
                ),
            });
            continue;
        };
        let predicted = evaluate(&c.law, c.l0, r, request.rft_size)?;
        let runtime_factor = c
            .runtime_law
            .as_ref()
            .map(|rt| (rt.beta * ratio_regressor(r)).exp());
        ranked.push(PlanEntry {
            model_id: c.model_id.clone(),
            required_ratio: r,
            predicted_performance: predicted,
            predicted_runtime_factor: runtime_factor,
            extrapolated: r > DEFAULT_MAX_RATIO,
        });
    }

    let higher_is_better = request.metric.higher_is_better();
    ranked.sort_by(|a, b| {
        let by_perf = a.predicted_performance.total_cmp(&b.predicted_performance);
        let by_perf = if higher_is_better { by_perf.reverse() } else { by_perf };
        by_perf
            .then(a.required_ratio.total_cmp(&b.required_ratio))
            .then_with(|| a.model_id.cmp(&b.model_id))
    });
    skipped.sort_by(|a, b| a.model_id.cmp(&b.model_id));

    Ok(PlanResult {
        metric: request.metric,
        budget: request.budget,
        rft_size: request.rft_size,
        ranked,
        skipped,
    })
}

/// Fractional runtime reduction `1 - (1+r)^beta`.
///
/// A law with `beta >= 0` predicts no speedup and yields 0.
pub fn predict_speedup(runtime_law: &RuntimeLaw, r: f64) -> Result<f64> {
    check_ratio(r)?;
    if runtime_law.beta >= 0.0 {
        return Ok(0.0);
    }
    Ok(-(runtime_law.beta * ratio_regressor(r)).exp_m1())
}
