use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::function::beta::beta_reg;

use super::StatsError;

/// Regressor matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    values: DMatrix<f64>,
}

impl DesignMatrix {
    /// Builds from row-major data; every row must have one value per name.
    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self, StatsError> {
        let k = names.len();
        if k == 0 {
            return Err(StatsError::InsufficientData { n: rows.len(), k });
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != k) {
            return Err(StatsError::Shape(format!(
                "row {bad} has {} values for {k} regressors",
                rows[bad].len()
            )));
        }
        let values = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
        Ok(DesignMatrix { names, values })
    }

    /// Prepends an intercept column named `const` to the given regressors.
    pub fn with_intercept(regressors: &[(&str, Vec<f64>)]) -> Result<Self, StatsError> {
        let n = regressors.first().map_or(0, |(_, c)| c.len());
        if regressors.iter().any(|(_, c)| c.len() != n) {
            return Err(StatsError::Shape("regressor columns differ in length".into()));
        }
        let mut names = vec![INTERCEPT.to_string()];
        names.extend(regressors.iter().map(|(name, _)| name.to_string()));
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                std::iter::once(1.0)
                    .chain(regressors.iter().map(|(_, c)| c[i]))
                    .collect()
            })
            .collect();
        Self::from_rows(names, &rows)
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    fn has_intercept(&self) -> bool {
        self.values
            .column_iter()
            .any(|c| c.iter().all(|&v| v == 1.0))
    }
}

pub const INTERCEPT: &str = "const";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub beta: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
}

impl Coefficient {
    /// `beta ± 1.96 se`.
    pub fn confidence_interval_95(&self) -> (f64, f64) {
        (self.beta - 1.96 * self.se, self.beta + 1.96 * self.se)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionReport {
    pub coefficients: Vec<Coefficient>,
    pub r_squared: f64,
    pub rss: f64,
    pub n: usize,
    pub df_resid: usize,
}

impl RegressionReport {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn betas(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.beta).collect()
    }
}

/// Two-sided p-value of a t statistic with `df` degrees of freedom, via the
/// regularized incomplete beta function: p = I_{df/(df+t^2)}(df/2, 1/2).
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Column `j` counts as linearly dependent on the columns before it when its
/// QR diagonal entry is this small relative to the column's norm.
const RANK_TOLERANCE: f64 = 1e-10;

/// Ordinary least squares via Householder QR.
pub fn ols_fit(x: &DesignMatrix, y: &[f64]) -> Result<RegressionReport, StatsError> {
    let n = x.n_rows();
    let k = x.n_cols();
    if y.len() != n {
        return Err(StatsError::Shape(format!("{n} design rows but {} responses", y.len())));
    }
    if n <= k {
        return Err(StatsError::InsufficientData { n, k });
    }
    let qr = x.values.clone().qr();
    let r = qr.r();
    for j in 0..k {
        let norm = x.values.column(j).norm();
        if norm == 0.0 || r[(j, j)].abs() <= RANK_TOLERANCE * norm {
            return Err(StatsError::SingularDesign(x.names[j].clone()));
        }
    }
    let yv = DVector::from_column_slice(y);
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| StatsError::SingularDesign("triangular solve".into()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| StatsError::SingularDesign("triangular inverse".into()))?;

    let residuals = &yv - &x.values * &beta;
    let rss = residuals.norm_squared();
    let df_resid = n - k;
    let sigma2 = rss / df_resid as f64;
    let mean = yv.mean();
    let tss: f64 = yv.iter().map(|v| (v - mean).powi(2)).sum();
    let mut r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    if x.has_intercept() {
        r_squared = r_squared.clamp(0.0, 1.0);
    }

    let coefficients = (0..k)
        .map(|j| {
            // [(X'X)^-1]_jj = squared norm of row j of R^-1
            let var = sigma2 * r_inv.row(j).norm_squared();
            let se = var.max(0.0).sqrt();
            let b = beta[j];
            let (t, p) = if se > 0.0 {
                let t = b / se;
                (t, student_t_two_sided_p(t, df_resid as f64))
            } else if b == 0.0 {
                (0.0, 1.0)
            } else {
                (b.signum() * f64::INFINITY, 0.0)
            };
            Coefficient {
                name: x.names[j].clone(),
                beta: b,
                se,
                t,
                p,
            }
        })
        .collect();
    Ok(RegressionReport {
        coefficients,
        r_squared,
        rss,
        n,
        df_resid,
    })
}
