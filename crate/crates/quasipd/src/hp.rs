//! Hodrick-Prescott trend extraction and gap filling.
//!
//! The trend solves (W + lambda * D'D) t = W y where D is the second-difference
//! operator and W a 0/1 diagonal fidelity mask (all ones for plain smoothing).
//! The system is pentadiagonal and solved by a banded LDL' factorization in O(N).

use crate::error::{Error, Result};
use crate::timeseries::MonthlySeries;

#[derive(Debug, Clone, Copy)]
pub struct HpParams {
    pub lambda_hp: f64,
}

impl HpParams {
    pub fn new(lambda_hp: f64) -> Result<Self> {
        if !(lambda_hp > 0.0) || !lambda_hp.is_finite() {
            return Err(Error::InvalidInput(format!(
                "HP lambda must be positive and finite, got {lambda_hp}"
            )));
        }
        Ok(HpParams { lambda_hp })
    }
}

impl Default for HpParams {
    /// Ravn-Uhlig convention for monthly data.
    fn default() -> Self {
        HpParams { lambda_hp: 129_600.0 }
    }
}

/// Symmetric pentadiagonal system given by bands (diag, sub1, sub2).
/// Solves A x = rhs via LDL' without pivoting; A must be positive definite.
pub(crate) fn solve_pentadiagonal(
    diag: &[f64],
    sub1: &[f64],
    sub2: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    assert!(n >= 1 && sub1.len() == n - 1 && sub2.len() == n.saturating_sub(2) && rhs.len() == n);

    // factorization: A = L D L' with unit lower-triangular L of bandwidth 2
    let mut d = vec![0.0; n]; // pivots
    let mut l1 = vec![0.0; n]; // L[i][i-1]
    let mut l2 = vec![0.0; n]; // L[i][i-2]
    for i in 0..n {
        let mut di = diag[i];
        if i >= 2 {
            l2[i] = sub2[i - 2] / d[i - 2];
            di -= l2[i] * l2[i] * d[i - 2];
        }
        if i >= 1 {
            let mut num = sub1[i - 1];
            if i >= 2 {
                num -= l2[i] * l1[i - 1] * d[i - 2];
            }
            l1[i] = num / d[i - 1];
            di -= l1[i] * l1[i] * d[i - 1];
        }
        if !(di > 0.0) || !di.is_finite() {
            return Err(Error::Numerical(format!(
                "pentadiagonal system not positive definite at row {i} (pivot {di})"
            )));
        }
        d[i] = di;
    }

    // forward solve L z = rhs
    let mut z = rhs.to_vec();
    for i in 0..n {
        if i >= 1 {
            z[i] -= l1[i] * z[i - 1];
        }
        if i >= 2 {
            z[i] -= l2[i] * z[i - 2];
        }
    }
    // diagonal
    for i in 0..n {
        z[i] /= d[i];
    }
    // backward solve L' x = z
    for i in (0..n).rev() {
        if i + 1 < n {
            z[i] -= l1[i + 1] * z[i + 1];
        }
        if i + 2 < n {
            z[i] -= l2[i + 2] * z[i + 2];
        }
    }
    Ok(z)
}

/// Bands of W + lambda * D'D for the 0/1 fidelity mask `w`.
fn hp_bands(w: &[f64], lambda: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = w.len();
    let mut diag = w.to_vec();
    let mut sub1 = vec![0.0; n - 1];
    let mut sub2 = vec![0.0; n - 2];
    for j in 0..n - 2 {
        // row j of D is (1, -2, 1) at columns j, j+1, j+2
        diag[j] += lambda;
        diag[j + 1] += 4.0 * lambda;
        diag[j + 2] += lambda;
        sub1[j] += -2.0 * lambda;
        sub1[j + 1] += -2.0 * lambda;
        sub2[j] += lambda;
    }
    (diag, sub1, sub2)
}

/// HP trend of a gap-free sample.
pub fn hp_trend(y: &[f64], params: HpParams) -> Result<Vec<f64>> {
    if y.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "HP trend needs length >= 3, got {}",
            y.len()
        )));
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite input value {v}")));
    }
    let w = vec![1.0; y.len()];
    let (diag, sub1, sub2) = hp_bands(&w, params.lambda_hp);
    solve_pentadiagonal(&diag, &sub1, &sub2, y)
}

/// Impute missing months from the HP trend fitted to the present ones.
/// Present months keep their original values; leading or trailing gaps are
/// refused rather than extrapolated.
pub fn fill_gaps(s: &MonthlySeries, params: HpParams) -> Result<MonthlySeries> {
    let vals = s.values();
    let n = vals.len();
    let present = vals.iter().filter(|v| v.is_some()).count();
    if present < 2 {
        return Err(Error::InvalidInput(format!(
            "gap fill needs >= 2 present values, got {present}"
        )));
    }
    if vals[0].is_none() || vals[n - 1].is_none() {
        return Err(Error::InvalidInput(
            "gap fill refuses leading or trailing gaps (extrapolation)".into(),
        ));
    }
    if !s.has_gaps() {
        return Ok(s.clone());
    }
    let w: Vec<f64> = vals.iter().map(|v| if v.is_some() { 1.0 } else { 0.0 }).collect();
    let rhs: Vec<f64> = vals.iter().map(|v| v.unwrap_or(0.0)).collect();
    let (diag, sub1, sub2) = hp_bands(&w, params.lambda_hp);
    let trend = solve_pentadiagonal(&diag, &sub1, &sub2, &rhs)?;
    let filled = vals
        .iter()
        .zip(&trend)
        .map(|(v, t)| Some(v.unwrap_or(*t)))
        .collect();
    MonthlySeries::new(s.start(), filled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::MonthIndex;
    use proptest::prelude::*;

    fn m(y: i32, mo: u8) -> MonthIndex {
        MonthIndex::new(y, mo).unwrap()
    }

    /// Dense Gaussian-elimination oracle for (W + lambda D'D) t = W y.
    pub(super) fn dense_hp_solve(y: &[f64], w: &[f64], lambda: f64) -> Vec<f64> {
        let n = y.len();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = w[i];
        }
        for j in 0..n - 2 {
            let row = [(j, 1.0), (j + 1, -2.0), (j + 2, 1.0)];
            for &(r, cr) in &row {
                for &(c, cc) in &row {
                    a[r][c] += lambda * cr * cc;
                }
            }
        }
        let mut b: Vec<f64> = y.iter().zip(w).map(|(y, w)| y * w).collect();
        // partial-pivot elimination
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
                .unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for r in col + 1..n {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let mut s = b[r];
            for c in r + 1..n {
                s -= a[r][c] * x[c];
            }
            x[r] = s / a[r][r];
        }
        x
    }

    #[test]
    fn constant_is_fixed_point() {
        for lambda in [0.1, 1.0, 1600.0, 129_600.0] {
            let t = hp_trend(&[5.0, 5.0, 5.0, 5.0], HpParams::new(lambda).unwrap()).unwrap();
            for v in t {
                assert!((v - 5.0).abs() < 1e-10, "lambda {lambda}: {v}");
            }
        }
    }

    #[test]
    fn linear_is_fixed_point() {
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        for lambda in [0.5, 1600.0] {
            let t = hp_trend(&y, HpParams::new(lambda).unwrap()).unwrap();
            for (a, b) in t.iter().zip(&y) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn vanishing_lambda_returns_input() {
        let y = [3.0, -1.0, 4.0, 1.0, 5.0, -9.0];
        let t = hp_trend(&y, HpParams::new(1e-12).unwrap()).unwrap();
        for (a, b) in t.iter().zip(&y) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn too_short_errors() {
        assert!(hp_trend(&[1.0, 2.0], HpParams::default()).is_err());
    }

    #[test]
    fn mean_preserved() {
        let y: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin() + 0.01 * i as f64).collect();
        let t = hp_trend(&y, HpParams::new(1600.0).unwrap()).unwrap();
        let my = y.iter().sum::<f64>() / y.len() as f64;
        let mt = t.iter().sum::<f64>() / t.len() as f64;
        assert!((my - mt).abs() < 1e-10);
    }

    #[test]
    fn gap_free_series_unchanged() {
        let s = MonthlySeries::from_values(m(2019, 1), vec![1.0, 4.0, 2.0, 8.0]).unwrap();
        let f = fill_gaps(&s, HpParams::default()).unwrap();
        assert_eq!(f, s);
    }

    #[test]
    fn single_gap_imputes_midpoint() {
        let s = MonthlySeries::new(m(2019, 1), vec![Some(10.0), None, Some(12.0)]).unwrap();
        for lambda in [0.01, 1.0, 129_600.0] {
            let f = fill_gaps(&s, HpParams::new(lambda).unwrap()).unwrap();
            assert_eq!(f.values()[0], Some(10.0));
            assert_eq!(f.values()[2], Some(12.0));
            let mid = f.values()[1].unwrap();
            assert!((mid - 11.0).abs() < 1e-6, "lambda {lambda}: {mid}");
        }
    }

    #[test]
    fn leading_gap_refused() {
        let s = MonthlySeries::new(m(2019, 1), vec![None, Some(10.0), Some(12.0), Some(13.0)]).unwrap();
        assert!(fill_gaps(&s, HpParams::default()).is_err());
    }

    #[test]
    fn present_values_kept_exactly() {
        let s = MonthlySeries::new(
            m(2019, 1),
            vec![Some(3.0), None, None, Some(9.5), None, Some(4.0)],
        )
        .unwrap();
        let f = fill_gaps(&s, HpParams::new(10.0).unwrap()).unwrap();
        assert_eq!(f.values()[0], Some(3.0));
        assert_eq!(f.values()[3], Some(9.5));
        assert_eq!(f.values()[5], Some(4.0));
        assert!(!f.has_gaps());
    }

    #[test]
    fn smoothing_twice_moves_less_than_once() {
        let y: Vec<f64> = (0..30).map(|i| ((i * 13 % 7) as f64) - 3.0).collect();
        let p = HpParams::new(100.0).unwrap();
        let t1 = hp_trend(&y, p).unwrap();
        let t2 = hp_trend(&t1, p).unwrap();
        let d1: f64 = y.iter().zip(&t1).map(|(a, b)| (a - b) * (a - b)).sum();
        let d2: f64 = t1.iter().zip(&t2).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!(d2 < d1);
    }

    proptest! {
        #[test]
        fn matches_dense_solve(
            y in proptest::collection::vec(-100.0f64..100.0, 3..50),
            lambda in 0.01f64..10_000.0,
        ) {
            let banded = hp_trend(&y, HpParams::new(lambda).unwrap()).unwrap();
            let dense = dense_hp_solve(&y, &vec![1.0; y.len()], lambda);
            let scale = dense.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
            for (a, b) in banded.iter().zip(&dense) {
                prop_assert!((a - b).abs() / scale < 1e-8);
            }
        }
    }
}
