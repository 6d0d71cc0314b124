//! Return histories, mean/covariance estimation and long-only portfolios.

use std::io::Read;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Tolerance on the budget constraint `e^T x = 1`.
pub const BUDGET_TOL: f64 = 1e-12;
/// Weights down to `-LONG_ONLY_TOL` are accepted and snapped to zero.
pub const LONG_ONLY_TOL: f64 = 1e-12;

/// Historical period returns, one row per period and one column per asset.
#[derive(Debug, Clone)]
pub struct ReturnHistory {
    returns: DMatrix<f64>,
    labels: Vec<String>,
}

impl ReturnHistory {
    /// Builds a history from row-major period returns.
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::InvalidData("no assets".into()));
        }
        if rows.len() < 2 {
            return Err(Error::InsufficientData { periods: rows.len() });
        }
        for (t, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidData(format!(
                    "period {t} has {} values, expected {n}",
                    row.len()
                )));
            }
            if let Some(j) = row.iter().position(|r| !r.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "non-finite return at period {t}, asset {j}"
                )));
            }
        }
        let returns = DMatrix::from_fn(rows.len(), n, |t, j| rows[t][j]);
        Ok(Self { returns, labels })
    }

    /// Builds a history with generated labels `A1..An`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        let labels = (1..=n).map(|j| format!("A{j}")).collect();
        Self::new(rows, labels)
    }

    /// Parses comma-separated returns with a header row of asset labels.
    ///
    /// Line numbers in errors are 1-based and count the header.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let labels: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if labels.is_empty() || labels.iter().all(String::is_empty) {
            return Err(Error::InvalidData("missing header row".into()));
        }
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                Error::Parse {
                    line,
                    column: 0,
                    message: e.to_string(),
                }
            })?;
            let line = record.position().map_or(0, |p| p.line());
            if record.len() != labels.len() {
                return Err(Error::Parse {
                    line,
                    column: record.len().min(labels.len()) + 1,
                    message: format!("expected {} fields, found {}", labels.len(), record.len()),
                });
            }
            let mut row = Vec::with_capacity(labels.len());
            for (col, cell) in record.iter().enumerate() {
                let value: f64 = cell.parse().map_err(|_| Error::Parse {
                    line,
                    column: col + 1,
                    message: format!("not a number: {cell:?}"),
                })?;
                if !value.is_finite() {
                    return Err(Error::Parse {
                        line,
                        column: col + 1,
                        message: format!("non-finite value: {cell:?}"),
                    });
                }
                row.push(value);
            }
            rows.push(row);
        }
        Self::new(rows, labels)
    }

    pub fn periods(&self) -> usize {
        self.returns.nrows()
    }

    pub fn assets(&self) -> usize {
        self.returns.ncols()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }
}

/// Estimated expected returns and covariance.
#[derive(Debug, Clone, Serialize)]
pub struct MarketEstimates {
    #[serde(serialize_with = "crate::output::vector")]
    pub mu: DVector<f64>,
    #[serde(serialize_with = "crate::output::matrix")]
    pub sigma: DMatrix<f64>,
}

impl MarketEstimates {
    /// Wraps externally supplied estimates. Asymmetry up to `1e-12` is
    /// averaged away; anything larger is rejected.
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let n = mu.len();
        if n == 0 {
            return Err(Error::Empty("expected returns"));
        }
        if sigma.nrows() != n || sigma.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "covariance",
                expected: n,
                found: sigma.nrows().max(sigma.ncols()),
            });
        }
        if mu.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("market estimates"));
        }
        let sigma = symmetrize(&sigma, 1e-12)?;
        Ok(Self { mu, sigma })
    }

    pub fn assets(&self) -> usize {
        self.mu.len()
    }
}

/// Returns `(M + M^T) / 2` if the largest asymmetry is within `tol`
/// (relative to the largest entry, floored at 1).
pub(crate) fn symmetrize(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "square matrix",
            expected: n,
            found: m.ncols(),
        });
    }
    let scale = m.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if worst > tol * scale {
        return Err(Error::Asymmetric(worst));
    }
    if worst == 0.0 {
        return Ok(m.clone());
    }
    Ok(DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)])))
}

/// Per-asset sample means `mu_i = (1/T) sum_t r_it`.
pub fn estimate_mean(history: &ReturnHistory) -> DVector<f64> {
    let t = history.periods() as f64;
    let r = history.returns();
    DVector::from_iterator(
        history.assets(),
        r.column_iter().map(|col| col.iter().sum::<f64>() / t),
    )
}

/// Population covariance with divisor `T`. The result is exactly symmetric.
pub fn estimate_covariance(history: &ReturnHistory) -> Result<DMatrix<f64>> {
    let periods = history.periods();
    if periods < 2 {
        return Err(Error::InsufficientData { periods });
    }
    let mu = estimate_mean(history);
    let r = history.returns();
    let n = history.assets();
    let centered = DMatrix::from_fn(periods, n, |t, j| r[(t, j)] - mu[j]);
    let t = periods as f64;
    let mut sigma = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let s: f64 = centered
                .column(i)
                .iter()
                .zip(centered.column(j).iter())
                .map(|(a, b)| a * b)
                .sum();
            sigma[(i, j)] = s / t;
            sigma[(j, i)] = s / t;
        }
    }
    Ok(sigma)
}

/// Mean vector and covariance matrix in one pass over the history.
pub fn estimate(history: &ReturnHistory) -> Result<MarketEstimates> {
    Ok(MarketEstimates {
        mu: estimate_mean(history),
        sigma: estimate_covariance(history)?,
    })
}

/// Long-only, fully invested portfolio weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Portfolio {
    #[serde(serialize_with = "crate::output::vector")]
    weights: DVector<f64>,
}

impl Portfolio {
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Uniform weights `1/n`.
    pub fn uniform(n: usize) -> Self {
        Self {
            weights: DVector::from_element(n, 1.0 / n as f64),
        }
    }

    /// Unit vector on asset `k`.
    pub fn vertex(n: usize, k: usize) -> Self {
        let mut weights = DVector::zeros(n);
        weights[k] = 1.0;
        Self { weights }
    }

    /// Snaps a solver iterate onto the simplex: negatives are clipped and the
    /// result is renormalized. Only used for points already feasible to
    /// working precision.
    pub(crate) fn from_iterate(x: &DVector<f64>) -> Self {
        let clipped = x.map(|v| v.max(0.0));
        let s = clipped.sum();
        let weights = if s > 0.0 {
            clipped / s
        } else {
            DVector::from_element(x.len(), 1.0 / x.len() as f64)
        };
        Self { weights }
    }
}

/// Checks the simplex invariants and builds a [`Portfolio`].
pub fn validate_portfolio(x: &[f64]) -> Result<Portfolio> {
    if x.is_empty() {
        return Err(Error::Empty("portfolio weights"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("portfolio weights"));
    }
    if let Some((index, &value)) = x.iter().enumerate().find(|(_, v)| **v < -LONG_ONLY_TOL) {
        return Err(Error::NegativeWeight { index, value });
    }
    let sum: f64 = x.iter().sum();
    if (sum - 1.0).abs() > BUDGET_TOL {
        return Err(Error::BudgetViolation { sum });
    }
    Ok(Portfolio {
        weights: DVector::from_iterator(x.len(), x.iter().map(|v| v.max(0.0))),
    })
}

/// Expected portfolio return `mu^T x`.
pub fn portfolio_return(mu: &DVector<f64>, x: &Portfolio) -> Result<f64> {
    if mu.len() != x.len() {
        return Err(Error::DimensionMismatch {
            context: "portfolio return",
            expected: mu.len(),
            found: x.len(),
        });
    }
    Ok(mu.dot(x.weights()))
}

/// Portfolio variance `x^T Sigma x`.
pub fn portfolio_variance(sigma: &DMatrix<f64>, x: &Portfolio) -> Result<f64> {
    if sigma.nrows() != x.len() || sigma.ncols() != x.len() {
        return Err(Error::DimensionMismatch {
            context: "portfolio variance",
            expected: sigma.nrows(),
            found: x.len(),
        });
    }
    let w = x.weights();
    Ok(w.dot(&(sigma * w)))
}
