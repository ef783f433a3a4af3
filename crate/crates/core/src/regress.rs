//! Log-space ordinary least squares for compression and runtime laws.
//!
//! Taking logs of the law turns it into a linear model without intercept:
//! `ln L = alpha ln L0 + beta ln(1+r) + gamma ln(1 + 1/(D+eps))`. The runtime law
//! `S = c (1+r)^beta` becomes `ln S = ln c + beta ln(1+r)` and keeps an intercept.
//!
//! The solver uses a Householder QR factorisation of the design matrix and
//! refuses designs whose 2-norm condition number exceeds [`MAX_CONDITION_NUMBER`].
//!
//! Goodness of fit follows the usual convention of statistics packages:
//!
//! * without intercept, R² is uncentered, `1 - SSR / Σy²`, with
//!   `adj R² = 1 - (1 - R²) n / (n - p)` and `F = (R²/p) / ((1 - R²)/(n - p))`;
//! * with intercept, R² is centered, `1 - SSR / Σ(y - ȳ)²`, with
//!   `adj R² = 1 - (1 - R²)(n - 1)/(n - p)` and
//!   `F = (R²/(p - 1)) / ((1 - R²)/(n - p))`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lawcore::{
    check_data, check_feasibility, check_l0, check_ratio, check_runtime_feasibility,
    data_regressor, ratio_regressor, CompressionLaw, Law, LawForm, MetricKind, RuntimeLaw,
};

/// Designs with a larger 2-norm condition number are rejected as singular.
pub const MAX_CONDITION_NUMBER: f64 = 1e8;

/// Right-singular-vector weight above which a column is named as collinear.
const COLLINEAR_WEIGHT: f64 = 0.1;

/// One measured observation of a compressed model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub model_id: String,
    pub metric: MetricKind,
    /// Base-model performance.
    pub l0: f64,
    /// Compression ratio.
    pub r: f64,
    /// Recovery fine-tuning set size, 0 for no fine-tuning.
    pub d: f64,
    /// Observed compressed-model performance.
    pub l: f64,
}

impl ExperimentRecord {
    pub fn validate(&self) -> Result<()> {
        check_l0(self.l0)?;
        check_ratio(self.r)?;
        if !self.d.is_finite() {
            return Err(Error::domain("d", self.d, "finite, d >= 0"));
        }
        check_data(self.d)?;
        if !(self.l.is_finite() && self.l > 0.0) {
            return Err(Error::domain("l", self.l, "finite, l > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitForm {
    Full,
    RatioOnly,
    DataOnly,
    Runtime,
}

impl FitForm {
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            FitForm::Full => &["log_l0", "log_1p_r", "log_1p_inv_d"],
            FitForm::RatioOnly => &["log_l0", "log_1p_r"],
            FitForm::DataOnly => &["log_l0", "log_1p_inv_d"],
            FitForm::Runtime => &["intercept", "log_1p_r"],
        }
    }

    pub fn has_intercept(self) -> bool {
        matches!(self, FitForm::Runtime)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FitForm::Full => "full",
            FitForm::RatioOnly => "ratio",
            FitForm::DataOnly => "data",
            FitForm::Runtime => "runtime",
        }
    }
}

impl fmt::Display for FitForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FitForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(FitForm::Full),
            "ratio" | "ratio_only" => Ok(FitForm::RatioOnly),
            "data" | "data_only" => Ok(FitForm::DataOnly),
            "runtime" => Ok(FitForm::Runtime),
            other => Err(Error::InvalidParameter(format!(
                "unknown fit form `{other}` (expected full, ratio, data or runtime)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitStatistics {
    pub n: usize,
    pub p: usize,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    /// Infinite for an exact fit; serialized as the string `"inf"`.
    #[serde(with = "extended_f64")]
    pub f_statistic: f64,
    pub residual_std: f64,
    pub condition_number: f64,
}

/// Serializes non-finite floats as the strings `"inf"`, `"-inf"` and `"nan"`.
mod extended_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("invalid number `{other}`"))),
            },
        }
    }
}

/// Design matrix and response of a log-space regression.
#[derive(Debug, Clone)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub form: FitForm,
}

impl Design {
    pub fn columns(&self) -> &'static [&'static str] {
        self.form.columns()
    }
}

pub fn build_design(records: &[ExperimentRecord], epsilon: f64, form: FitForm) -> Result<Design> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::domain("epsilon", epsilon, "epsilon > 0"));
    }
    let p = form.columns().len();
    if records.len() < p + 1 {
        return Err(Error::TooFewRecords {
            needed: p + 1,
            got: records.len(),
        });
    }
    let metric = records[0].metric;
    if let Some(other) = records.iter().find(|rec| rec.metric != metric) {
        return Err(Error::MixedMetrics {
            first: metric.to_string(),
            other: other.metric.to_string(),
        });
    }

    let n = records.len();
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    for (i, rec) in records.iter().enumerate() {
        let log_l0 = rec.l0.ln();
        let log_r = ratio_regressor(rec.r);
        let log_d = data_regressor(rec.d, epsilon);
        let row: &[f64] = match form {
            FitForm::Full => &[log_l0, log_r, log_d],
            FitForm::RatioOnly => &[log_l0, log_r],
            FitForm::DataOnly => &[log_l0, log_d],
            FitForm::Runtime => &[1.0, log_r],
        };
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: i,
                    column: form.columns()[j].to_string(),
                });
            }
            x[(i, j)] = v;
        }
        y[i] = rec.l.ln();
        if !y[i].is_finite() {
            return Err(Error::NonFinite {
                row: i,
                column: "log_l".to_string(),
            });
        }
    }
    Ok(Design { x, y, form })
}

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub stats: FitStatistics,
    /// `y - X b` in log space, one per row.
    pub residuals: Vec<f64>,
}

/// Least-squares fit of `y ≈ X b`.
///
/// A column consisting entirely of ones is treated as an intercept, which
/// switches the statistics to the centered convention.
pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let names: Vec<String> = (0..x.ncols()).map(|j| format!("x{j}")).collect();
    ols_fit_named(x, y, &names)
}

fn ols_fit_named(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<OlsFit> {
    let (n, p) = x.shape();
    if p == 0 || y.len() != n {
        return Err(Error::InvalidParameter(format!(
            "design is {n}x{p} but response has {} entries",
            y.len()
        )));
    }
    if n <= p {
        return Err(Error::TooFewRecords { needed: p + 1, got: n });
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("design or response contains non-finite values".into()));
    }

    let condition_number = condition_number(x, names)?;

    let qr = x.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * y;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::SingularDesign {
            condition_number: f64::INFINITY,
            columns: names.to_vec(),
        })?;

    let fitted = x * &coef;
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let ssr: f64 = residuals.iter().map(|e| e * e).sum();

    let intercept = (0..p).any(|j| x.column(j).iter().all(|&v| v == 1.0));
    let tss = if intercept {
        let mean = y.mean();
        y.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
    } else {
        y.iter().map(|v| v * v).sum::<f64>()
    };

    let (nf, pf) = (n as f64, p as f64);
    let r_squared = if tss > 0.0 {
        (1.0 - ssr / tss).clamp(0.0, 1.0)
    } else if ssr == 0.0 {
        1.0
    } else {
        0.0
    };
    let (adj_r_squared, model_df) = if intercept {
        (1.0 - (1.0 - r_squared) * (nf - 1.0) / (nf - pf), pf - 1.0)
    } else {
        (1.0 - (1.0 - r_squared) * nf / (nf - pf), pf)
    };
    let f_statistic = if model_df == 0.0 {
        0.0
    } else if r_squared >= 1.0 {
        f64::INFINITY
    } else {
        (r_squared / model_df) / ((1.0 - r_squared) / (nf - pf))
    };

    Ok(OlsFit {
        coefficients: coef.iter().copied().collect(),
        stats: FitStatistics {
            n,
            p,
            r_squared,
            adj_r_squared,
            f_statistic,
            residual_std: (ssr / (nf - pf)).sqrt(),
            condition_number,
        },
        residuals,
    })
}

/// Ratio of extreme singular values; errors past [`MAX_CONDITION_NUMBER`],
/// naming the columns that carry weight in the weakest singular direction.
fn condition_number(x: &DMatrix<f64>, names: &[String]) -> Result<f64> {
    let svd = x.clone().svd(false, true);
    let sv = &svd.singular_values;
    let (imin, smin) = sv.argmin();
    let smax = sv.max();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond.is_finite() && cond <= MAX_CONDITION_NUMBER {
        return Ok(cond);
    }
    let columns = match svd.v_t.as_ref() {
        Some(v_t) => v_t
            .row(imin)
            .iter()
            .enumerate()
            .filter(|(_, w)| w.abs() > COLLINEAR_WEIGHT)
            .map(|(j, _)| names[j].clone())
            .collect(),
        None => names.to_vec(),
    };
    Err(Error::SingularDesign {
        condition_number: cond,
        columns,
    })
}

/// A fitted law together with its diagnostics.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub form: FitForm,
    pub epsilon: f64,
    pub law: Law,
    pub stats: FitStatistics,
    pub warnings: Vec<String>,
    pub residuals: Vec<f64>,
}

pub fn fit_law(records: &[ExperimentRecord], epsilon: f64, form: FitForm) -> Result<FitOutcome> {
    for (i, rec) in records.iter().enumerate() {
        rec.validate().map_err(|e| Error::Row {
            row: i as u64 + 1,
            field: None,
            message: e.to_string(),
        })?;
    }
    let design = build_design(records, epsilon, form)?;
    let names: Vec<String> = form.columns().iter().map(|c| c.to_string()).collect();
    let fit = ols_fit_named(&design.x, &design.y, &names)?;
    let b = &fit.coefficients;
    let metric = records[0].metric;

    let mut warnings = Vec::new();
    let law = match form {
        FitForm::Runtime => {
            let law = RuntimeLaw {
                c: b[0].exp(),
                beta: b[1],
                stats: Some(fit.stats.clone()),
            };
            law.validate()?;
            warnings.extend(
                check_runtime_feasibility(&law)
                    .violations
                    .iter()
                    .map(|v| format!("infeasible runtime law: {v}")),
            );
            Law::Runtime(law)
        }
        _ => {
            let (beta, gamma, law_form) = match form {
                FitForm::Full => (b[1], b[2], LawForm::Full),
                FitForm::RatioOnly => (b[1], 0.0, LawForm::RatioOnly),
                FitForm::DataOnly => (0.0, b[1], LawForm::DataOnly),
                FitForm::Runtime => unreachable!(),
            };
            let law = CompressionLaw {
                alpha: b[0],
                beta,
                gamma,
                epsilon,
                metric,
                form: law_form,
                stats: Some(fit.stats.clone()),
            };
            law.validate()?;
            warnings.extend(
                check_feasibility(&law)
                    .violations
                    .iter()
                    .map(|v| format!("infeasible {metric} law: {v}")),
            );
            Law::Compression(law)
        }
    };

    Ok(FitOutcome {
        form,
        epsilon,
        law,
        stats: fit.stats,
        warnings,
        residuals: fit.residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(l0: f64, r: f64, d: f64, l: f64) -> ExperimentRecord {
        ExperimentRecord {
            model_id: "m".into(),
            metric: MetricKind::Accuracy,
            l0,
            r,
            d,
            l,
        }
    }

    #[test]
    fn design_rows() {
        let e = std::f64::consts::E;
        let recs = vec![rec(e, e - 1.0, 1e15, 2.0), rec(1.0, 0.0, 0.0, 1.0), rec(2.0, 0.5, 3.0, 1.5), rec(3.0, 0.1, 1.0, 1.0)];
        let design = build_design(&recs, 1.0, FitForm::Full).unwrap();
        assert!((design.x[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((design.x[(0, 1)] - 1.0).abs() < 1e-15);
        assert!(design.x[(0, 2)].abs() < 1e-14);
        assert!((design.y[0] - 2f64.ln()).abs() < 1e-15);
        assert_eq!(design.x[(1, 0)], 0.0);
        assert_eq!(design.x[(1, 1)], 0.0);
        assert!((design.x[(1, 2)] - 2f64.ln()).abs() < 1e-15);

        let runtime = build_design(&recs[..3], 1.0, FitForm::Runtime).unwrap();
        assert_eq!(runtime.x.shape(), (3, 2));
        assert!(runtime.x.column(0).iter().all(|&v| v == 1.0));

        assert_eq!(build_design(&recs, 1.0, FitForm::RatioOnly).unwrap().x.ncols(), 2);
        let data = build_design(&recs, 1.0, FitForm::DataOnly).unwrap();
        assert!((data.x[(1, 1)] - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn design_errors() {
        let mut recs = vec![rec(1.0, 0.1, 0.0, 1.0), rec(2.0, 0.2, 1.0, 1.0), rec(3.0, 0.3, 2.0, 1.0), rec(4.0, 0.4, 3.0, 1.0)];
        assert!(matches!(build_design(&recs[..3], 1.0, FitForm::Full), Err(Error::TooFewRecords { needed: 4, got: 3 })));
        recs[2].metric = MetricKind::Loss;
        assert!(matches!(build_design(&recs, 1.0, FitForm::Full), Err(Error::MixedMetrics { .. })));
        recs[2].metric = MetricKind::Accuracy;
        recs[1].l = 0.0;
        assert!(matches!(build_design(&recs, 1.0, FitForm::Full), Err(Error::NonFinite { row: 1, .. })));
    }

    #[test]
    fn exact_square_system() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let y = DVector::from_row_slice(&[2.0, 3.0, 5.0]);
        let fit = ols_fit(&x, &y).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 3.0).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|e| e.abs() < 1e-12));
        assert!((fit.stats.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_recovery() {
        let truth = [0.63, 1.72, 1.16];
        let mut rows = Vec::new();
        for i in 0..40 {
            let t = i as f64;
            rows.extend_from_slice(&[(1.0 + 0.1 * t).ln(), (0.05 * (t % 7.0)).ln_1p(), (1.0 / (t % 5.0 + 1.0)).ln_1p()]);
        }
        let x = DMatrix::from_row_slice(40, 3, &rows);
        let y = &x * DVector::from_row_slice(&truth);
        let fit = ols_fit(&x, &y).unwrap();
        for (b, t) in fit.coefficients.iter().zip(truth) {
            assert!((b - t).abs() < 1e-8, "{b} vs {t}");
        }
    }

    #[test]
    fn collinear_columns_are_named() {
        let x = DMatrix::from_fn(10, 3, |i, j| match j {
            0 => i as f64 + 1.0,
            1 => 2.0 * (i as f64 + 1.0),
            _ => ((i * i) % 7) as f64,
        });
        let y = DVector::from_fn(10, |i, _| i as f64);
        match ols_fit(&x, &y) {
            Err(Error::SingularDesign { columns, .. }) => {
                assert_eq!(columns, vec!["x0".to_string(), "x1".to_string()]);
            }
            other => panic!("expected singular design, got {other:?}"),
        }
    }

    #[test]
    fn statistics_conventions() {
        // Independent check against a hand-written normal-equations solve.
        let xs = [(1.0, 0.5), (2.0, 0.1), (3.0, 0.7), (4.0, 0.2), (5.0, 0.9), (6.0, 0.3)];
        let ys = [1.1, 1.9, 3.4, 3.9, 5.6, 6.0];
        let x = DMatrix::from_fn(6, 2, |i, j| if j == 0 { xs[i].0 } else { xs[i].1 });
        let y = DVector::from_row_slice(&ys);
        let fit = ols_fit(&x, &y).unwrap();

        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&(u, v), &t) in xs.iter().zip(&ys) {
            a11 += u * u;
            a12 += u * v;
            a22 += v * v;
            b1 += u * t;
            b2 += v * t;
        }
        let det = a11 * a22 - a12 * a12;
        let c0 = (a22 * b1 - a12 * b2) / det;
        let c1 = (a11 * b2 - a12 * b1) / det;
        assert!((fit.coefficients[0] - c0).abs() < 1e-12);
        assert!((fit.coefficients[1] - c1).abs() < 1e-12);

        let ssr: f64 = xs.iter().zip(&ys).map(|(&(u, v), &t)| (t - c0 * u - c1 * v).powi(2)).sum();
        let syy: f64 = ys.iter().map(|t| t * t).sum();
        let r2 = 1.0 - ssr / syy;
        let s = &fit.stats;
        assert!((s.r_squared - r2).abs() < 1e-12);
        assert!((s.adj_r_squared - (1.0 - (1.0 - r2) * 6.0 / 4.0)).abs() < 1e-12);
        assert!((s.f_statistic - (r2 / 2.0) / ((1.0 - r2) / 4.0)).abs() < 1e-6);
        assert!((s.residual_std - (ssr / 4.0).sqrt()).abs() < 1e-12);
        assert!(s.adj_r_squared <= s.r_squared);
    }

    #[test]
    fn identity_data_fits_exactly() {
        let mut recs = Vec::new();
        for (i, &l0) in [0.4, 0.55, 0.7].iter().enumerate() {
            for &r in &[0.1, 0.5, 0.9] {
                for &d in &[0.0, 4.0, 25.0] {
                    recs.push(rec(l0 + 0.01 * i as f64, r, d, l0 + 0.01 * i as f64));
                }
            }
        }
        let out = fit_law(&recs, 1.0, FitForm::Full).unwrap();
        let Law::Compression(law) = &out.law else { panic!() };
        assert!((law.alpha - 1.0).abs() < 1e-10);
        assert!(law.beta.abs() < 1e-10);
        assert!(law.gamma.abs() < 1e-10);
        assert!((out.stats.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(out.residuals.len(), recs.len());
    }

    #[test]
    fn runtime_fit() {
        let recs: Vec<_> = (0..9)
            .map(|i| {
                let r = 0.1 * i as f64;
                ExperimentRecord {
                    model_id: "m".into(),
                    metric: MetricKind::Runtime,
                    l0: 100.0,
                    r,
                    d: 0.0,
                    l: 100.0 * (1.0 + r).powf(-0.67),
                }
            })
            .collect();
        let out = fit_law(&recs, 1.0, FitForm::Runtime).unwrap();
        let Law::Runtime(law) = &out.law else { panic!() };
        assert!((law.c - 100.0).abs() < 1e-6);
        assert!((law.beta + 0.67).abs() < 1e-6);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn infeasible_fit_warns() {
        // accuracy rising with r: beta > 0
        let recs: Vec<_> = [(0.5, 0.1, 0.0), (0.6, 0.5, 4.0), (0.7, 0.9, 25.0), (0.55, 0.3, 1.0), (0.65, 0.7, 9.0)]
            .iter()
            .map(|&(l0, r, d)| rec(l0, r, d, l0 * (1.0 + r) * (1.0 + 1.0 / (d + 1.0)).powf(-0.1)))
            .collect();
        let out = fit_law(&recs, 1.0, FitForm::Full).unwrap();
        assert_eq!(out.warnings.len(), 1);
        assert!(out.warnings[0].contains("beta"), "{:?}", out.warnings);
    }

    #[test]
    fn fit_rejects_invalid_record() {
        let mut recs = vec![rec(1.0, 0.1, 0.0, 1.0); 5];
        recs[3].r = 1.2;
        match fit_law(&recs, 1.0, FitForm::Full) {
            Err(Error::Row { row: 4, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn form_parsing() {
        assert_eq!("ratio".parse::<FitForm>().unwrap(), FitForm::RatioOnly);
        assert_eq!("DATA".parse::<FitForm>().unwrap(), FitForm::DataOnly);
        assert!("cubic".parse::<FitForm>().is_err());
    }
}
