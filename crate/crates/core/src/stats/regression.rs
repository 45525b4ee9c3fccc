use serde_json::{json, Map, Value};

use super::ols::{ols_fit, Coefficient, DesignMatrix, RegressionReport, INTERCEPT};
use super::StatsError;
use crate::experiments::Endpoints;

/// Regressors for one run: the final blue count, its distance from an even
/// split, and indicators for the initial split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EndpointRow {
    pub b0: usize,
    pub b7: usize,
    /// `|b7 - half|`
    pub d7: usize,
    pub d_gt: u8,
    pub d_eq: u8,
    pub is_experiment: u8,
    /// Half the office size (10 for twenty agents).
    pub half: usize,
}

/// `([b0 > half], [b0 == half])`
pub fn build_dummies(b0: usize, half: usize) -> (u8, u8) {
    (u8::from(b0 > half), u8::from(b0 == half))
}

impl EndpointRow {
    pub fn new(b0: usize, b7: usize, half: usize, is_experiment: bool) -> Self {
        let (d_gt, d_eq) = build_dummies(b0, half);
        EndpointRow {
            b0,
            b7,
            d7: b7.abs_diff(half),
            d_gt,
            d_eq,
            is_experiment: u8::from(is_experiment),
            half,
        }
    }
}

pub fn endpoint_rows(endpoints: &[Endpoints], half: usize, is_experiment: bool) -> Vec<EndpointRow> {
    endpoints
        .iter()
        .map(|e| EndpointRow::new(e.b0, e.b_final, half, is_experiment))
        .collect()
}

fn gt_label(half: usize) -> String {
    format!("{{B0 > {half}}}")
}

fn eq_label(half: usize) -> String {
    format!("{{B0 = {half}}}")
}

fn common_half(rows: &[EndpointRow]) -> Result<usize, StatsError> {
    let half = rows.first().map(|r| r.half).unwrap_or(10);
    if rows.iter().any(|r| r.half != half) {
        return Err(StatsError::Shape("rows disagree on office size".into()));
    }
    Ok(half)
}

fn dummies(rows: &[EndpointRow]) -> (Vec<f64>, Vec<f64>) {
    rows.iter()
        .map(|r| (f64::from(r.d_gt), f64::from(r.d_eq)))
        .unzip()
}

/// Final blue count regressed on an intercept and the two initial-split
/// indicators.
pub fn fit_path_dependence(rows: &[EndpointRow]) -> Result<RegressionReport, StatsError> {
    if rows.len() < 4 {
        return Err(StatsError::InsufficientData { n: rows.len(), k: 3 });
    }
    let half = common_half(rows)?;
    let (gt, eq) = dummies(rows);
    let x = DesignMatrix::with_intercept(&[(&gt_label(half), gt), (&eq_label(half), eq)])?;
    let y: Vec<f64> = rows.iter().map(|r| r.b7 as f64).collect();
    ols_fit(&x, &y)
}

/// Distance from an even split regressed on the split indicators, an
/// experiment indicator, and its interactions with the split indicators.
/// Rows from `experiment` get `E = 1`, rows from `base` get `E = 0`.
pub fn fit_comparison(
    experiment: &[EndpointRow],
    base: &[EndpointRow],
) -> Result<RegressionReport, StatsError> {
    if experiment.is_empty() || base.is_empty() {
        return Err(StatsError::InsufficientData {
            n: experiment.len() + base.len(),
            k: 6,
        });
    }
    let rows: Vec<EndpointRow> = experiment
        .iter()
        .map(|r| EndpointRow { is_experiment: 1, ..*r })
        .chain(base.iter().map(|r| EndpointRow { is_experiment: 0, ..*r }))
        .collect();
    let half = common_half(&rows)?;
    let (gt, eq) = dummies(&rows);
    let e: Vec<f64> = rows.iter().map(|r| f64::from(r.is_experiment)).collect();
    let e_gt = e.iter().zip(&gt).map(|(a, b)| a * b).collect();
    let e_eq = e.iter().zip(&eq).map(|(a, b)| a * b).collect();
    let x = DesignMatrix::with_intercept(&[
        (&gt_label(half), gt),
        (&eq_label(half), eq),
        ("E", e),
        (&format!("E * {}", gt_label(half)), e_gt),
        (&format!("E * {}", eq_label(half)), e_eq),
    ])?;
    let y: Vec<f64> = rows.iter().map(|r| r.d7 as f64).collect();
    ols_fit(&x, &y)
}

/// `***` for p < 0.0005 (p rounds to 0.000 at three decimals), `**` for
/// p < 0.001, `*` for p < 0.05.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.0005 {
        "***"
    } else if p < 0.001 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// Table cell such as `13.30*** (0.34)`.
pub fn format_cell(c: &Coefficient) -> String {
    format!("{:.2}{} ({:.2})", c.beta, significance_stars(c.p), c.se)
}

pub struct ReportColumn<'a> {
    pub label: String,
    pub report: &'a RegressionReport,
}

/// Plain-text table with one column per report: the non-intercept
/// regressors in order, then Constant, R-squared and N.
pub fn render_table(title: &str, columns: &[ReportColumn<'_>]) -> String {
    let mut names: Vec<String> = Vec::new();
    for col in columns {
        for c in &col.report.coefficients {
            if c.name != INTERCEPT && !names.contains(&c.name) {
                names.push(c.name.clone());
            }
        }
    }
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["Variable".to_string()];
    header.extend(columns.iter().map(|c| c.label.clone()));
    rows.push(header);
    let cell = |col: &ReportColumn<'_>, name: &str| {
        col.report
            .coefficient(name)
            .map(format_cell)
            .unwrap_or_default()
    };
    for name in &names {
        let mut row = vec![name.clone()];
        row.extend(columns.iter().map(|c| cell(c, name)));
        rows.push(row);
    }
    let mut constant = vec!["Constant".to_string()];
    constant.extend(columns.iter().map(|c| cell(c, INTERCEPT)));
    rows.push(constant);
    let mut r2 = vec!["R-squared".to_string()];
    r2.extend(columns.iter().map(|c| format!("{:.2}", c.report.r_squared)));
    rows.push(r2);
    let mut n = vec!["N".to_string()];
    n.extend(columns.iter().map(|c| c.report.n.to_string()));
    rows.push(n);

    let widths: Vec<usize> = (0..rows[0].len())
        .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = format!("{title}\n");
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(j, (text, &w))| {
                let pad = w - text.chars().count();
                if j == 0 {
                    format!("{text}{}", " ".repeat(pad))
                } else {
                    format!("{}{text}", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out.push_str("***p<0.0005; **p<0.001; *p<0.05; standard errors in parentheses\n");
    out
}

/// `{regressor: {beta, se, t, p}, ..., "r2": .., "n": ..}`
pub fn report_json(report: &RegressionReport) -> Value {
    let mut map = Map::new();
    for c in &report.coefficients {
        map.insert(
            c.name.clone(),
            json!({ "beta": c.beta, "se": c.se, "t": finite_or_null(c.t), "p": c.p }),
        );
    }
    map.insert("r2".into(), json!(report.r_squared));
    map.insert("n".into(), json!(report.n));
    Value::Object(map)
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dummies() {
        assert_eq!(build_dummies(12, 10), (1, 0));
        assert_eq!(build_dummies(10, 10), (0, 1));
        assert_eq!(build_dummies(4, 10), (0, 0));
    }

    #[test]
    fn distance_from_split() {
        assert_eq!(EndpointRow::new(9, 14, 10, false).d7, 4);
        assert_eq!(EndpointRow::new(9, 6, 10, false).d7, 4);
        assert_eq!(EndpointRow::new(9, 10, 10, false).d7, 0);
    }

    fn synthetic() -> Vec<EndpointRow> {
        (0..=20)
            .map(|b0| {
                let b7 = if b0 > 10 { 17 } else if b0 == 10 { 16 } else { 4 };
                EndpointRow::new(b0, b7, 10, false)
            })
            .collect()
    }

    #[test]
    fn exact_path_dependence() {
        let fit = fit_path_dependence(&synthetic()).unwrap();
        let names: Vec<&str> = fit.coefficients.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["const", "{B0 > 10}", "{B0 = 10}"]);
        for (b, e) in fit.betas().iter().zip([4.0, 13.0, 12.0]) {
            assert_abs_diff_eq!(*b, e, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn no_dummy_variation_is_singular() {
        let rows: Vec<EndpointRow> = (0..8).map(|i| EndpointRow::new(3, i, 10, false)).collect();
        assert!(matches!(fit_path_dependence(&rows), Err(StatsError::SingularDesign(_))));
        assert!(matches!(
            fit_path_dependence(&rows[..3]),
            Err(StatsError::InsufficientData { .. })
        ));
    }

    #[test]
    fn duplicated_base_has_no_group_effect() {
        let base: Vec<EndpointRow> = (0..40)
            .map(|i| {
                let b0 = (i * 5) % 21;
                EndpointRow::new(b0, (i * 13 + b0) % 21, 10, false)
            })
            .collect();
        let fit = fit_comparison(&base, &base).unwrap();
        assert_eq!(fit.n, 80);
        assert_eq!(fit.coefficients.len(), 6);
        for name in ["E", "E * {B0 > 10}", "E * {B0 = 10}"] {
            assert!(fit.coefficient(name).unwrap().beta.abs() < 1e-9, "{name}");
        }
        assert!(fit_comparison(&[], &base).is_err());
    }

    #[test]
    fn stars_and_cells() {
        assert_eq!(significance_stars(0.0001), "***");
        assert_eq!(significance_stars(0.0005), "**");
        assert_eq!(significance_stars(0.0009), "**");
        assert_eq!(significance_stars(0.001), "*");
        assert_eq!(significance_stars(0.049), "*");
        assert_eq!(significance_stars(0.05), "");
        let c = Coefficient {
            name: "{B0 > 10}".into(),
            beta: 13.30,
            se: 0.34,
            t: 39.1,
            p: 1e-40,
        };
        assert_eq!(format_cell(&c), "13.30*** (0.34)");
    }

    #[test]
    fn table_layout() {
        let fit = fit_path_dependence(&synthetic()).unwrap();
        let table = render_table(
            "Table",
            &[ReportColumn {
                label: "E1".into(),
                report: &fit,
            }],
        );
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0], "Table");
        assert!(lines[1].starts_with("Variable"));
        assert!(lines[2].starts_with("{B0 > 10}"));
        assert!(lines[3].starts_with("{B0 = 10}"));
        assert!(lines[4].starts_with("Constant"));
        assert!(lines[5].starts_with("R-squared") && lines[5].ends_with("1.00"));
        assert!(lines[6].starts_with("N") && lines[6].ends_with("21"));
        let json = report_json(&fit);
        assert_eq!(json["n"], 21);
        assert!(json["{B0 > 10}"]["beta"].as_f64().unwrap() > 12.9);
    }
}
