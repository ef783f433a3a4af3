//! Synthetic experiment records drawn from a known law.
//!
//! Records cover the Cartesian grid `l0 × r × d` in that nesting order (`l0`
//! outermost). Each observation is
//!
//! ```text
//! l = exp(alpha ln l0 + beta ln(1+r) + gamma ln(1 + 1/(d+eps)) + noise_std * z)
//! ```
//!
//! with `z` standard normal. The random stream is fully specified so fixtures
//! can be regenerated in any language:
//!
//! 1. the generator is xoshiro256++ whose 256-bit state is filled by four
//!    successive SplitMix64 outputs started from `seed`;
//! 2. a uniform is `u = (next_u64 >> 11) * 2^-53`, in `[0, 1)`;
//! 3. each record consumes two uniforms `u1, u2` and uses the Box–Muller
//!    cosine branch `z = sqrt(-2 ln(1 - u1)) cos(2 pi u2)`.
//!
//! Uniforms are drawn for every record even when `noise_std = 0`.

use rand_xoshiro::rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lawcore::{check_data, check_l0, check_ratio, data_regressor, ratio_regressor, CompressionLaw};
use crate::regress::{build_design, ols_fit, ExperimentRecord, FitForm};

pub const DEFAULT_NOISE_STD: f64 = 0.05;

pub const SYNTHETIC_MODEL_ID: &str = "synthetic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub truth: CompressionLaw,
    pub l0_values: Vec<f64>,
    pub r_values: Vec<f64>,
    pub d_values: Vec<f64>,
    /// Standard deviation of the additive noise on `ln l`.
    pub noise_std: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn len(&self) -> usize {
        self.l0_values.len() * self.r_values.len() * self.d_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<()> {
        self.truth.validate()?;
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::domain("noise_std", self.noise_std, "noise_std >= 0"));
        }
        for (name, values) in [("l0", &self.l0_values), ("r", &self.r_values), ("d", &self.d_values)] {
            if values.is_empty() {
                return Err(Error::InvalidParameter(format!("grid for `{name}` is empty")));
            }
        }
        self.l0_values.iter().try_for_each(|&v| check_l0(v))?;
        self.r_values.iter().try_for_each(|&v| check_ratio(v))?;
        for &d in &self.d_values {
            if !d.is_finite() {
                return Err(Error::domain("d", d, "finite, d >= 0"));
            }
            check_data(d)?;
        }
        Ok(())
    }
}

struct NormalStream(Xoshiro256PlusPlus);

impl NormalStream {
    fn new(seed: u64) -> Self {
        NormalStream(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn next(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

pub fn generate(config: &SyntheticConfig) -> Result<Vec<ExperimentRecord>> {
    config.validate()?;
    let truth = &config.truth;
    let mut noise = NormalStream::new(config.seed);
    let mut records = Vec::with_capacity(config.len());
    for &l0 in &config.l0_values {
        for &r in &config.r_values {
            for &d in &config.d_values {
                let z = noise.next();
                let log_l = truth.alpha * l0.ln()
                    + truth.beta * ratio_regressor(r)
                    + truth.gamma * data_regressor(d, truth.epsilon)
                    + config.noise_std * z;
                records.push(ExperimentRecord {
                    model_id: SYNTHETIC_MODEL_ID.to_string(),
                    metric: truth.metric,
                    l0,
                    r,
                    d,
                    l: log_l.exp(),
                });
            }
        }
    }
    check_rank(&records, truth.epsilon)?;
    Ok(records)
}

fn check_rank(records: &[ExperimentRecord], epsilon: f64) -> Result<()> {
    let design = build_design(records, epsilon, FitForm::Full).map_err(|e| match e {
        Error::TooFewRecords { needed, got } => Error::InvalidParameter(format!(
            "grid has {got} points; a full-law fit needs at least {needed}"
        )),
        other => other,
    })?;
    match ols_fit(&design.x, &design.y) {
        Ok(_) => Ok(()),
        Err(Error::SingularDesign { condition_number, columns }) => Err(Error::InvalidParameter(format!(
            "grid is rank-deficient for a full-law fit (condition number {condition_number:.3e}, columns {:?})",
            columns
        ))),
        Err(other) => Err(other),
    }
}
