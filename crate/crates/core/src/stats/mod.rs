//! Correlation, least squares and nested-model comparison.

pub mod ols;
pub mod special;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::DatasetId;
use crate::scale::Scale;
pub use ols::{anova_nested, fit_linear, fit_matrix, AnovaResult, FitResult, Term, Transform, TransformRegistry};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("vectors have different lengths ({0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, have {have}")]
    TooFewObservations { needed: usize, have: usize },
    #[error("`{0}` has zero variance")]
    ZeroVariance(String),
    #[error("`{0}` contains a non-finite value")]
    NonFinite(String),
    #[error("design matrix is rank deficient: `{column}` is collinear with {with:?}")]
    RankDeficient { column: String, with: Vec<String> },
    #[error("log transform of `{0}` needs strictly positive values")]
    NonPositiveLog(String),
    #[error("models are not nested: {0}")]
    NotNested(String),
    #[error("full model has no residual degrees of freedom")]
    NoResidualDf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub rho: f64,
    pub p: f64,
    pub n: usize,
}

fn check_finite(name: &str, xs: &[f64]) -> Result<(), StatsError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(StatsError::NonFinite(name.into()))
    }
}

/// Sample Pearson correlation with a two-sided t-test (df = n - 2).
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFewObservations { needed: 3, have: n });
    }
    check_finite("x", x)?;
    check_finite("y", y)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n as f64;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    for (name, v, ss) in [("x", x, sxx), ("y", y, syy)] {
        if ss == 0.0 || v.iter().all(|e| *e == v[0]) {
            return Err(StatsError::ZeroVariance(name.into()));
        }
    }
    let rho = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if 1.0 - rho.abs() < 1e-15 {
        0.0
    } else {
        special::t_two_sided(rho * (df / (1.0 - rho * rho)).sqrt(), df)
    };
    Ok(Correlation { rho, p, n })
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ItemKey {
    pub dataset_id: DatasetId,
    pub scale: Scale,
    pub context_hash: String,
}

/// One analysis unit: an item (within-scale) or a scale (cross-scale).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorRow {
    pub item_key: ItemKey,
    pub human_si: f64,
    pub string_surprisal: Option<f64>,
    pub concept_surprisal: Option<f64>,
    pub covariates: BTreeMap<String, f64>,
}

impl PredictorRow {
    /// Looks up a variable by name. `probability` is exp(-string surprisal).
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "human_si" => Some(self.human_si),
            "string_surprisal" => self.string_surprisal,
            "concept_surprisal" => self.concept_surprisal,
            "probability" => self.string_surprisal.map(|s| (-s).exp()),
            other => self.covariates.get(other).copied(),
        }
    }

    /// True when every named variable is present and finite.
    pub fn has_all(&self, names: &[&str]) -> bool {
        names.iter().all(|n| self.get(n).is_some_and(f64::is_finite))
    }
}

/// Pearson correlation of two named variables over the rows that have both.
pub fn correlate(rows: &[PredictorRow], x: &str, y: &str) -> Result<Correlation, StatsError> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.has_all(&[x, y]))
        .map(|r| (r.get(x).unwrap(), r.get(y).unwrap()))
        .unzip();
    let dropped = rows.len() - xs.len();
    if dropped > 0 {
        log::info!("correlation {x} ~ {y}: excluded {dropped} rows with missing values");
    }
    pearson(&xs, &ys).map_err(|e| match e {
        StatsError::ZeroVariance(v) => StatsError::ZeroVariance(if v == "x" { x.into() } else { y.into() }),
        StatsError::NonFinite(v) => StatsError::NonFinite(if v == "x" { x.into() } else { y.into() }),
        e => e,
    })
}
