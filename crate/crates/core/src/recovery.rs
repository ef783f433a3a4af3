//! Recovery feasibility: how much fine-tuning data brings a compressed model
//! back to a target fraction of its base performance, and the compression
//! ratio past which no amount of data suffices.
//!
//! Recovery is measured against `L0^alpha`, not `L0`: an accuracy law meets
//! threshold `sigma` when `L / L0^alpha >= sigma`, a loss law when
//! `L / L0^alpha <= sigma`. For accuracy, `sigma` lies in `(0, 1)` and the
//! exponents satisfy `beta, gamma < 0`; for loss, `sigma` lies in `(1, inf)`
//! and `beta, gamma > 0`.
//!
//! Both variants reduce to the same bound on the data size:
//!
//! ```text
//! 1 / (D + eps) <= phi(r),   phi(r) = [sigma (1+r)^(-beta)]^(1/gamma) - 1
//! ```
//!
//! The regime split is at `sigma = 2^beta`. For accuracy, `sigma < 2^beta` is
//! recoverable at every ratio; otherwise recovery is possible only below
//! `r_critical = sigma^(1/beta) - 1`. The loss variant mirrors this with
//! `sigma > 2^beta` as the always-recoverable band.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lawcore::{
    check_data, data_regressor, ratio_regressor, CompressionLaw, MetricKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    AlwaysRecoverable,
    ConditionallyRecoverable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeClass {
    pub regime: Regime,
    /// `2^beta`.
    pub boundary: f64,
}

/// Minimum fine-tuning data size, or the verdict that none suffices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MinRft {
    Finite(f64),
    Unrecoverable,
}

impl MinRft {
    pub fn value(self) -> Option<f64> {
        match self {
            MinRft::Finite(d) => Some(d),
            MinRft::Unrecoverable => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, MinRft::Finite(_))
    }
}

impl Serialize for MinRft {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MinRft::Finite(d) => s.serialize_f64(*d),
            MinRft::Unrecoverable => s.serialize_str("unrecoverable"),
        }
    }
}

impl<'de> Deserialize<'de> for MinRft {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(MinRft::Finite(v)),
            Repr::Str(s) if s == "unrecoverable" => Ok(MinRft::Unrecoverable),
            Repr::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"unrecoverable\", got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryQuery {
    pub law: CompressionLaw,
    pub sigma: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryAnalysis {
    pub regime: Regime,
    /// Absent in the always-recoverable regime.
    pub r_critical: Option<f64>,
    pub boundary: f64,
    pub min_d: MinRft,
}

fn check_sigma(sigma: f64, metric: MetricKind) -> Result<()> {
    match metric {
        MetricKind::Accuracy if sigma > 0.0 && sigma < 1.0 => Ok(()),
        MetricKind::Accuracy => Err(Error::domain("sigma", sigma, "0 < sigma < 1 for accuracy")),
        MetricKind::Loss if sigma > 1.0 && sigma.is_finite() => Ok(()),
        MetricKind::Loss => Err(Error::domain("sigma", sigma, "sigma > 1 for loss")),
        MetricKind::Runtime => Err(Error::InvalidParameter(
            "recovery analysis applies to loss or accuracy laws, not runtime".into(),
        )),
    }
}

fn check_exponent_sign(name: &'static str, value: f64, metric: MetricKind) -> Result<()> {
    match metric {
        MetricKind::Accuracy if value < 0.0 => Ok(()),
        MetricKind::Accuracy => Err(Error::domain(name, value, "< 0 for accuracy")),
        MetricKind::Loss if value > 0.0 && value.is_finite() => Ok(()),
        MetricKind::Loss => Err(Error::domain(name, value, "> 0 for loss")),
        MetricKind::Runtime => Err(Error::InvalidParameter(
            "recovery analysis applies to loss or accuracy laws, not runtime".into(),
        )),
    }
}

/// Which side of `2^beta` the threshold falls on.
///
/// `sigma = 2^beta` itself is conditionally recoverable with `r_critical = 1`.
pub fn classify_regime(beta: f64, sigma: f64, metric: MetricKind) -> Result<RegimeClass> {
    check_exponent_sign("beta", beta, metric)?;
    check_sigma(sigma, metric)?;
    let boundary = beta.exp2();
    let always = match metric {
        MetricKind::Accuracy => sigma < boundary,
        _ => sigma > boundary,
    };
    Ok(RegimeClass {
        regime: if always {
            Regime::AlwaysRecoverable
        } else {
            Regime::ConditionallyRecoverable
        },
        boundary,
    })
}

/// `sigma^(1/beta) - 1`. Errors in the always-recoverable band, where no
/// ratio in `(0, 1)` is critical.
pub fn critical_ratio(beta: f64, sigma: f64, metric: MetricKind) -> Result<f64> {
    let class = classify_regime(beta, sigma, metric)?;
    if class.regime == Regime::AlwaysRecoverable {
        return Err(Error::AlwaysRecoverable {
            sigma,
            boundary: class.boundary,
        });
    }
    // exp(ln(sigma)/beta) - 1 loses precision as sigma -> 1
    Ok((sigma.ln() / beta).exp_m1())
}

fn validate_query(query: &RecoveryQuery) -> Result<()> {
    let law = &query.law;
    law.validate()?;
    check_exponent_sign("beta", law.beta, law.metric)?;
    check_exponent_sign("gamma", law.gamma, law.metric)?;
    check_sigma(query.sigma, law.metric)?;
    // r = 0 is admitted as the uncompressed case.
    if !(query.r.is_finite() && (0.0..1.0).contains(&query.r)) {
        return Err(Error::domain("r", query.r, "0 <= r < 1"));
    }
    Ok(())
}

/// `phi(r) = [sigma (1+r)^(-beta)]^(1/gamma) - 1`; recovery needs `1/(D+eps) <= phi`.
pub fn recovery_margin(beta: f64, gamma: f64, sigma: f64, r: f64) -> f64 {
    ((sigma.ln() - beta * ratio_regressor(r)) / gamma).exp_m1()
}

/// Smallest data size meeting the threshold, from the closed-form bound.
///
/// The bound is exact in real arithmetic; the returned value is nudged up by
/// a few ulps so that [`recoverable`] holds at it in floating point, except
/// when `phi` is too small for the direct check to resolve the boundary.
pub fn min_rft_size(query: &RecoveryQuery) -> Result<MinRft> {
    validate_query(query)?;
    let law = &query.law;
    let phi = recovery_margin(law.beta, law.gamma, query.sigma, query.r);
    if phi.is_nan() {
        return Err(Error::InvalidParameter("recovery bound is not finite".into()));
    }
    if phi <= 0.0 {
        return Ok(MinRft::Unrecoverable);
    }
    let bound = (1.0 / phi - law.epsilon).max(0.0);
    if !bound.is_finite() {
        return Err(Error::InvalidParameter("recovery bound is not finite".into()));
    }
    let mut d = bound;
    for _ in 0..64 {
        if recoverable_unchecked(law, query.sigma, query.r, d) {
            return Ok(MinRft::Finite(d));
        }
        d = d.next_up();
    }
    // phi is so close to 0 that the direct check cannot resolve the boundary.
    Ok(MinRft::Finite(bound))
}

/// Full analysis of a query: regime, critical ratio and minimum data size.
pub fn analyze(query: &RecoveryQuery) -> Result<RecoveryAnalysis> {
    let class = classify_regime(query.law.beta, query.sigma, query.law.metric)?;
    let r_critical = match class.regime {
        Regime::AlwaysRecoverable => None,
        Regime::ConditionallyRecoverable => {
            Some(critical_ratio(query.law.beta, query.sigma, query.law.metric)?)
        }
    };
    Ok(RecoveryAnalysis {
        regime: class.regime,
        r_critical,
        boundary: class.boundary,
        min_d: min_rft_size(query)?,
    })
}

/// Whether `(r, d)` meets the threshold, evaluated directly from the law.
pub fn recoverable(law: &CompressionLaw, sigma: f64, r: f64, d: f64) -> Result<bool> {
    law.validate()?;
    check_sigma(sigma, law.metric)?;
    if !(r.is_finite() && (0.0..1.0).contains(&r)) {
        return Err(Error::domain("r", r, "0 <= r < 1"));
    }
    check_data(d)?;
    Ok(recoverable_unchecked(law, sigma, r, d))
}

fn recoverable_unchecked(law: &CompressionLaw, sigma: f64, r: f64, d: f64) -> bool {
    let log_retention = law.beta * ratio_regressor(r) + law.gamma * data_regressor(d, law.epsilon);
    match law.metric {
        MetricKind::Loss => log_retention <= sigma.ln(),
        _ => log_retention >= sigma.ln(),
    }
}
