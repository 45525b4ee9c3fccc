//! Least squares and the two endpoint regressions used to analyze batches:
//! path dependence of the final blue count on the initial split, and the
//! comparison of an experiment against the base run.

mod ols;
mod regression;

use thiserror::Error;

pub use ols::{ols_fit, student_t_two_sided_p, Coefficient, DesignMatrix, RegressionReport, INTERCEPT};
pub use regression::{
    build_dummies, endpoint_rows, fit_comparison, fit_path_dependence, format_cell, render_table,
    report_json, significance_stars, EndpointRow, ReportColumn,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StatsError {
    #[error("design matrix is rank deficient at regressor {0:?}")]
    SingularDesign(String),
    #[error("{n} observations are not enough for {k} regressors")]
    InsufficientData { n: usize, k: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
}
