//! OLS macro regression of the PD series on macro factors, with R-squared and
//! Breusch-Pagan heteroscedasticity diagnostics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::timeseries::MonthlySeries;

/// Regressor matrix with named columns. An intercept is always present as the
/// implicit first column; callers supply only the named factors.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    names: Vec<String>,
    /// row-major, one row per observation, columns in `names` order
    rows: Vec<Vec<f64>>,
}

impl DesignMatrix {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::LengthMismatch(format!(
                "{} names vs {} columns",
                names.len(),
                columns.len()
            )));
        }
        for pair in names.iter().enumerate() {
            if names[..pair.0].contains(pair.1) {
                return Err(Error::InvalidInput(format!("duplicate column name {:?}", pair.1)));
            }
        }
        let n_rows = columns.first().map(|c| c.len()).unwrap_or(0);
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(Error::LengthMismatch("regressor columns differ in length".into()));
        }
        if n_rows <= names.len() + 1 {
            return Err(Error::InvalidInput(format!(
                "need more than {} observations for {} regressors plus intercept, got {n_rows}",
                names.len() + 1,
                names.len()
            )));
        }
        for (name, col) in names.iter().zip(&columns) {
            if let Some(v) = col.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "column {name:?} contains non-finite value {v}"
                )));
            }
        }
        let rows = (0..n_rows)
            .map(|r| columns.iter().map(|c| c[r]).collect())
            .collect();
        Ok(DesignMatrix { names, rows })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn factor_names(&self) -> &[String] {
        &self.names
    }

    /// Column names including the intercept.
    fn all_names(&self) -> Vec<String> {
        std::iter::once("intercept".to_string())
            .chain(self.names.iter().cloned())
            .collect()
    }

    /// Dense matrix including the leading intercept column.
    fn dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect())
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegressionReport {
    pub coefficients: Vec<(String, f64)>,
    pub r_squared: f64,
    pub bp_statistic: f64,
    pub bp_p_value: f64,
    pub residuals: Vec<f64>,
}

const RANK_TOLERANCE: f64 = 1e-10;

/// Least squares via Householder QR. Returns coefficients, fitted values and
/// residuals; errors on rank deficiency naming the offending column.
fn qr_least_squares(
    a: &[Vec<f64>],
    y: &[f64],
    col_names: &[String],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = a.len();
    let p = a[0].len();
    let mut r: Vec<Vec<f64>> = a.to_vec();
    let mut qty = y.to_vec();

    let mut max_pivot = 0.0f64;
    for k in 0..p {
        // Householder reflection for column k
        let norm = (k..n).map(|i| r[i][k] * r[i][k]).sum::<f64>().sqrt();
        if norm <= RANK_TOLERANCE * max_pivot.max(1.0) {
            return Err(Error::RankDeficient(col_names[k].clone()));
        }
        max_pivot = max_pivot.max(norm);
        let alpha = if r[k][k] >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..n).map(|i| r[i][k]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for c in k..p {
                let dot: f64 = (k..n).map(|i| v[i - k] * r[i][c]).sum();
                let f = 2.0 * dot / vnorm2;
                for i in k..n {
                    r[i][c] -= f * v[i - k];
                }
            }
            let dot: f64 = (k..n).map(|i| v[i - k] * qty[i]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..n {
                qty[i] -= f * v[i - k];
            }
        }
        r[k][k] = alpha;
    }

    // back substitution on the upper-triangular factor
    let mut beta = vec![0.0; p];
    for k in (0..p).rev() {
        let mut s = qty[k];
        for c in k + 1..p {
            s -= r[k][c] * beta[c];
        }
        if r[k][k].abs() <= RANK_TOLERANCE * max_pivot {
            return Err(Error::RankDeficient(col_names[k].clone()));
        }
        beta[k] = s / r[k][k];
    }

    let fitted: Vec<f64> = a
        .iter()
        .map(|row| row.iter().zip(&beta).map(|(x, b)| x * b).sum())
        .collect();
    Ok((beta, fitted))
}

fn r_squared_about_mean(y: &[f64], fitted: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sst: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let ssr: f64 = y.iter().zip(fitted).map(|(a, b)| (a - b) * (a - b)).sum();
    if sst == 0.0 {
        0.0
    } else {
        (1.0 - ssr / sst).clamp(0.0, 1.0)
    }
}

/// Fit y on the design matrix (intercept included) and attach the
/// Breusch-Pagan diagnostic for the fitted residuals.
pub fn fit_ols(x: &DesignMatrix, y: &[f64]) -> Result<RegressionReport> {
    if y.len() != x.n_rows() {
        return Err(Error::LengthMismatch(format!(
            "{} observations vs {} design rows",
            y.len(),
            x.n_rows()
        )));
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("dependent variable has non-finite value {v}")));
    }
    let a = x.dense();
    let names = x.all_names();
    let (beta, fitted) = qr_least_squares(&a, y, &names)?;
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let r_squared = r_squared_about_mean(y, &fitted);
    let (bp_statistic, bp_p_value) = breusch_pagan(x, &residuals)?;
    Ok(RegressionReport {
        coefficients: names.into_iter().zip(beta).collect(),
        r_squared,
        bp_statistic,
        bp_p_value,
        residuals,
    })
}

/// Original 1979 LM form: regress squared residuals on the design matrix and
/// take n * R-squared of that auxiliary fit; chi-square dof is the number of
/// non-intercept regressors.
pub fn breusch_pagan(x: &DesignMatrix, residuals: &[f64]) -> Result<(f64, f64)> {
    if residuals.len() != x.n_rows() {
        return Err(Error::LengthMismatch(format!(
            "{} residuals vs {} design rows",
            residuals.len(),
            x.n_rows()
        )));
    }
    let n = residuals.len();
    let sq: Vec<f64> = residuals.iter().map(|e| e * e).collect();
    let mean = sq.iter().sum::<f64>() / n as f64;
    let sst: f64 = sq.iter().map(|v| (v - mean) * (v - mean)).sum();
    // constant squared residuals (up to roundoff): nothing to explain
    if sst <= 1e-24 * mean * mean * n as f64 {
        return Ok((0.0, 1.0));
    }
    let a = x.dense();
    let names = x.all_names();
    let (_, fitted) = qr_least_squares(&a, &sq, &names)?;
    let r2_aux = r_squared_about_mean(&sq, &fitted);
    let statistic = n as f64 * r2_aux;
    let dof = x.factor_names().len();
    let p_value = chi_square_upper_tail(statistic, dof as f64)?;
    Ok((statistic, p_value))
}

/// Shift a series forward in calendar time by the given number of months.
pub fn lag(series: &MonthlySeries, months: usize) -> MonthlySeries {
    MonthlySeries::new(series.start().plus(months as i64), series.values().to_vec())
        .expect("relabeling preserves validity")
}

// ---------------------------------------------------------------------------
// chi-square tail via the regularized incomplete gamma function
// ---------------------------------------------------------------------------

/// ln Gamma(x) by the Lanczos approximation, x > 0.
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000000000190015;
    let mut yy = y;
    for c in COEFFS {
        yy += 1.0;
        ser += c / yy;
    }
    -tmp + (2.5066282746310005 * ser / x).ln()
}

/// Lower regularized incomplete gamma P(a, x) by series expansion (x < a + 1).
fn gamma_p_series(a: f64, x: f64) -> Result<f64> {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..500 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-15 {
            return Ok(sum * (-x + a * x.ln() - ln_gamma(a)).exp());
        }
    }
    Err(Error::Numerical("incomplete gamma series did not converge".into()))
}

/// Upper regularized incomplete gamma Q(a, x) by continued fraction (x >= a + 1).
fn gamma_q_continued_fraction(a: f64, x: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            return Ok((-x + a * x.ln() - ln_gamma(a)).exp() * h);
        }
    }
    Err(Error::Numerical("incomplete gamma continued fraction did not converge".into()))
}

/// P(chi2_dof > statistic).
pub fn chi_square_upper_tail(statistic: f64, dof: f64) -> Result<f64> {
    if statistic < 0.0 || dof <= 0.0 {
        return Err(Error::Domain(format!(
            "chi-square tail needs statistic >= 0 and dof > 0, got {statistic}, {dof}"
        )));
    }
    if statistic == 0.0 {
        return Ok(1.0);
    }
    let a = dof / 2.0;
    let x = statistic / 2.0;
    if x < a + 1.0 {
        Ok(1.0 - gamma_p_series(a, x)?)
    } else {
        gamma_q_continued_fraction(a, x)
    }
}
