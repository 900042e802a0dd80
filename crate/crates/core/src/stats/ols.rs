//! Ordinary least squares via Householder QR, plus nested-model F tests.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::special::{f_upper, t_two_sided};
use super::{PredictorRow, StatsError};
use crate::ingest::DatasetId;

pub const INTERCEPT: &str = "(Intercept)";

/// Relative size below which a QR pivot counts as zero.
const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    Center,
    Log,
    LogCenter,
    Standardize,
}

impl Transform {
    pub fn apply(self, name: &str, values: &[f64]) -> Result<Vec<f64>, StatsError> {
        let center = |v: Vec<f64>| {
            let m = v.iter().sum::<f64>() / v.len().max(1) as f64;
            v.into_iter().map(|x| x - m).collect::<Vec<_>>()
        };
        let log = |v: &[f64]| {
            if v.iter().any(|x| *x <= 0.0) {
                Err(StatsError::NonPositiveLog(name.into()))
            } else {
                Ok(v.iter().map(|x| x.ln()).collect::<Vec<_>>())
            }
        };
        Ok(match self {
            Transform::Identity => values.to_vec(),
            Transform::Center => center(values.to_vec()),
            Transform::Log => log(values)?,
            Transform::LogCenter => center(log(values)?),
            Transform::Standardize => {
                let c = center(values.to_vec());
                let n = c.len();
                let sd = (c.iter().map(|x| x * x).sum::<f64>() / (n.max(2) - 1) as f64).sqrt();
                if sd == 0.0 {
                    return Err(StatsError::ZeroVariance(name.into()));
                }
                c.into_iter().map(|x| x / sd).collect()
            }
        })
    }
}

/// Per-variable transforms applied before fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRegistry {
    pub default_predictor: Transform,
    pub overrides: HashMap<String, Transform>,
}

impl Default for TransformRegistry {
    fn default() -> Self {
        TransformRegistry {
            default_predictor: Transform::Center,
            overrides: HashMap::new(),
        }
    }
}

impl TransformRegistry {
    /// Identity everywhere.
    pub fn raw() -> Self {
        TransformRegistry {
            default_predictor: Transform::Identity,
            overrides: HashMap::new(),
        }
    }

    /// Centered predictors; sentence length additionally log-transformed.
    pub fn for_dataset(id: DatasetId) -> Self {
        let mut r = TransformRegistry::default();
        if id == DatasetId::Degen2015 {
            r.overrides.insert("sentence_length".into(), Transform::LogCenter);
        }
        r
    }

    pub fn with(mut self, name: &str, t: Transform) -> Self {
        self.overrides.insert(name.into(), t);
        self
    }

    pub fn predictor(&self, name: &str) -> Transform {
        self.overrides.get(name).copied().unwrap_or(self.default_predictor)
    }

    /// Responses are left untransformed unless overridden.
    pub fn response(&self, name: &str) -> Transform {
        self.overrides.get(name).copied().unwrap_or(Transform::Identity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub beta: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub response: String,
    /// Predictor names, intercept excluded.
    pub predictors: Vec<String>,
    /// Intercept first, then predictors in order.
    pub terms: Vec<Term>,
    pub residual_ss: f64,
    pub df_residual: usize,
    pub n: usize,
    /// Rows dropped for missing values.
    pub excluded_rows: usize,
    /// Digest of the response vector; equal digests mean the same rows.
    pub response_digest: String,
}

impl FitResult {
    pub fn term(&self, name: &str) -> Option<&Term> {
        self.terms.iter().find(|t| t.name == name)
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.term(name).map(|t| t.beta)
    }

    pub fn p_value(&self, name: &str) -> Option<f64> {
        self.term(name).map(|t| t.p)
    }

    pub fn coefficients(&self) -> Vec<(String, f64)> {
        self.terms.iter().map(|t| (t.name.clone(), t.beta)).collect()
    }

    pub fn p_values(&self) -> Vec<(String, f64)> {
        self.terms.iter().map(|t| (t.name.clone(), t.p)).collect()
    }
}

fn digest(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_bits().to_le_bytes());
    }
    hex::encode(&h.finalize()[..16])
}

/// Fits `response ~ 1 + predictors` on rows where every variable is present.
pub fn fit_linear(
    rows: &[PredictorRow],
    response: &str,
    predictors: &[&str],
    transforms: &TransformRegistry,
) -> Result<FitResult, StatsError> {
    let mut names = vec![response];
    names.extend_from_slice(predictors);
    let used: Vec<&PredictorRow> = rows.iter().filter(|r| r.has_all(&names)).collect();
    let excluded = rows.len() - used.len();
    if excluded > 0 {
        log::info!(
            "fit {response} ~ {}: excluded {excluded} rows with missing values",
            predictors.join(" + ")
        );
    }
    let y_raw: Vec<f64> = used.iter().map(|r| r.get(response).unwrap()).collect();
    let y = transforms.response(response).apply(response, &y_raw)?;
    let mut columns = Vec::with_capacity(predictors.len());
    for p in predictors {
        let raw: Vec<f64> = used.iter().map(|r| r.get(p).unwrap()).collect();
        columns.push(transforms.predictor(p).apply(p, &raw)?);
    }
    let mut fit = fit_matrix(response, predictors, &columns, &y)?;
    fit.excluded_rows = excluded;
    Ok(fit)
}

/// Fits `y ~ 1 + columns` on already-transformed data.
pub fn fit_matrix(response: &str, names: &[&str], columns: &[Vec<f64>], y: &[f64]) -> Result<FitResult, StatsError> {
    let n = y.len();
    let p = columns.len() + 1;
    if n <= p {
        return Err(StatsError::TooFewObservations { needed: p + 1, have: n });
    }
    super::check_finite(response, y)?;
    let mut all_names = vec![INTERCEPT.to_string()];
    all_names.extend(names.iter().map(|s| s.to_string()));
    // column-major design
    let mut x: Vec<Vec<f64>> = vec![vec![1.0; n]];
    for (name, c) in names.iter().zip(columns) {
        if c.len() != n {
            return Err(StatsError::LengthMismatch(c.len(), n));
        }
        super::check_finite(name, c)?;
        x.push(c.clone());
    }
    let norms: Vec<f64> = x.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();

    // Householder QR: x becomes R in its upper triangle; qty = Q^T y.
    let mut qty = y.to_vec();
    for j in 0..p {
        let alpha_norm = x[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norms[j] == 0.0 || alpha_norm <= RANK_TOL * norms[j] {
            return Err(rank_error(&x, j, &all_names));
        }
        let alpha = if x[j][j] > 0.0 { -alpha_norm } else { alpha_norm };
        let mut v: Vec<f64> = x[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|e| e * e).sum();
        let reflect = |col: &mut [f64]| {
            let s: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum::<f64>() * 2.0 / vnorm2;
            for (c, vi) in col.iter_mut().zip(&v) {
                *c -= s * vi;
            }
        };
        for col in x.iter_mut().skip(j) {
            reflect(&mut col[j..]);
        }
        reflect(&mut qty[j..]);
    }

    // back substitution for beta and R^{-1}
    let r = |i: usize, k: usize| x[k][i];
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|k| r(i, k) * beta[k]).sum();
        beta[i] = (qty[i] - s) / r(i, i);
    }
    let mut rinv = vec![vec![0.0; p]; p];
    #[allow(clippy::needless_range_loop)]
    for c in 0..p {
        for i in (0..=c).rev() {
            let target = if i == c { 1.0 } else { 0.0 };
            let s: f64 = (i + 1..=c).map(|k| r(i, k) * rinv[k][c]).sum();
            rinv[i][c] = (target - s) / r(i, i);
        }
    }

    let design = |row: usize, col: usize| if col == 0 { 1.0 } else { columns[col - 1][row] };
    let rss: f64 = (0..n)
        .map(|i| {
            let fitted: f64 = (0..p).map(|k| design(i, k) * beta[k]).sum();
            (y[i] - fitted).powi(2)
        })
        .sum();
    let df = n - p;
    let sigma2 = rss / df as f64;
    let terms = (0..p)
        .map(|k| {
            let se = (sigma2 * rinv[k].iter().map(|v| v * v).sum::<f64>()).sqrt();
            let t = if se > 0.0 {
                beta[k] / se
            } else if beta[k] == 0.0 {
                0.0
            } else {
                beta[k].signum() * f64::INFINITY
            };
            Term {
                name: all_names[k].clone(),
                beta: beta[k],
                se,
                t,
                p: t_two_sided(t, df as f64),
            }
        })
        .collect();
    Ok(FitResult {
        response: response.into(),
        predictors: names.iter().map(|s| s.to_string()).collect(),
        terms,
        residual_ss: rss,
        df_residual: df,
        n,
        excluded_rows: 0,
        response_digest: digest(y),
    })
}

/// Names the earlier columns that column `j` is (numerically) a combination of.
fn rank_error(qr: &[Vec<f64>], j: usize, names: &[String]) -> StatsError {
    // Solve R[..j, ..j] c = R[..j, j]; nonzero c identify the partners.
    let mut c = vec![0.0; j];
    for i in (0..j).rev() {
        let s: f64 = (i + 1..j).map(|k| qr[k][i] * c[k]).sum();
        c[i] = (qr[j][i] - s) / qr[i][i];
    }
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let with = (0..j)
        .filter(|&i| scale > 0.0 && c[i].abs() > 1e-8 * scale)
        .map(|i| names[i].clone())
        .collect();
    StatsError::RankDeficient {
        column: names[j].clone(),
        with,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f_statistic: f64,
    pub p_value: f64,
    pub df_numerator: usize,
    pub df_denominator: usize,
}

/// F test of a full model against a reduced model nested in it.
pub fn anova_nested(full: &FitResult, reduced: &FitResult) -> Result<AnovaResult, StatsError> {
    if full.response != reduced.response || full.response_digest != reduced.response_digest || full.n != reduced.n {
        return Err(StatsError::NotNested(
            "models were fitted on different responses or rows".into(),
        ));
    }
    if let Some(extra) = reduced.predictors.iter().find(|p| !full.predictors.contains(p)) {
        return Err(StatsError::NotNested(format!("`{extra}` is not in the full model")));
    }
    if full.df_residual == 0 {
        return Err(StatsError::NoResidualDf);
    }
    let df_num = reduced.df_residual - full.df_residual;
    if df_num == 0 {
        return Ok(AnovaResult {
            f_statistic: 0.0,
            p_value: 1.0,
            df_numerator: 0,
            df_denominator: full.df_residual,
        });
    }
    let gain = (reduced.residual_ss - full.residual_ss).max(0.0);
    let f = (gain / df_num as f64) / (full.residual_ss / full.df_residual as f64);
    let f = if f.is_nan() { 0.0 } else { f };
    Ok(AnovaResult {
        f_statistic: f,
        p_value: f_upper(f, df_num as f64, full.df_residual as f64),
        df_numerator: df_num,
        df_denominator: full.df_residual,
    })
}
