//! Forward and inverse forms of the overdue-debt balance equation.
//!
//! One month's transition is
//!     NPL_{i+1} = NPL_i + P_i * (E_i - NPL_i) - R_i * NPL_i
//! with P_i the monthly default hazard on the performing stock and R_i the
//! share of the overdue stock that exits delinquency during the month.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::timeseries::MonthIndex;

/// Monthly hazards and recovery shares over one segment's history.
/// For N months of stocks there are N-1 transitions, so `hazards` and
/// `recoveries` both have length N-1.
#[derive(Debug, Clone, Serialize)]
pub struct FilterSolution {
    pub start: MonthIndex,
    pub hazards: Vec<f64>,
    pub recoveries: Vec<f64>,
}

impl FilterSolution {
    pub fn new(start: MonthIndex, hazards: Vec<f64>, recoveries: Vec<f64>) -> Result<Self> {
        if hazards.len() != recoveries.len() {
            return Err(Error::LengthMismatch(format!(
                "{} hazards vs {} recoveries",
                hazards.len(),
                recoveries.len()
            )));
        }
        for (i, p) in hazards.iter().enumerate() {
            if !(*p > 0.0 && *p <= 1.0) {
                return Err(Error::Domain(format!(
                    "hazard P[{i}] = {p} outside (0, 1]"
                )));
            }
        }
        if let Some(r) = recoveries.iter().find(|r| !r.is_finite()) {
            return Err(Error::Domain(format!("non-finite recovery share {r}")));
        }
        Ok(FilterSolution {
            start,
            hazards,
            recoveries,
        })
    }
}

/// Run the balance equation forward from `npl_first`, producing the full NPL
/// path (length N). `total` has N values; `hazards` and `recoveries` N-1.
/// Any month where the produced stock escapes [0, E] is an error, never a clamp.
pub fn forward_npl(
    total: &[f64],
    npl_first: f64,
    hazards: &[f64],
    recoveries: &[f64],
    start: MonthIndex,
) -> Result<Vec<f64>> {
    let n = total.len();
    if hazards.len() != n - 1 || recoveries.len() != n - 1 {
        return Err(Error::LengthMismatch(format!(
            "{n} months of E need {} hazards/recoveries, got {}/{}",
            n - 1,
            hazards.len(),
            recoveries.len()
        )));
    }
    if npl_first < 0.0 {
        return Err(Error::InvalidInput(format!("NPL_1 = {npl_first} < 0")));
    }
    let mut npl = Vec::with_capacity(n);
    npl.push(npl_first);
    for i in 0..n - 1 {
        let cur = npl[i];
        let next = cur + hazards[i] * (total[i] - cur) - recoveries[i] * cur;
        let month = start.plus(i as i64 + 1);
        if next < 0.0 {
            return Err(Error::InfeasiblePath {
                month,
                reason: format!("NPL = {next} < 0"),
            });
        }
        if next > total[i + 1] {
            return Err(Error::InfeasiblePath {
                month,
                reason: format!("NPL = {next} exceeds E = {}", total[i + 1]),
            });
        }
        npl.push(next);
    }
    Ok(npl)
}

/// Invert the balance equation for R given the observed NPL path and hazards:
///     R_i = (P_i * (E_i - NPL_i) - (NPL_{i+1} - NPL_i)) / NPL_i
pub fn implied_recoveries(
    total: &[f64],
    npl: &[f64],
    hazards: &[f64],
    start: MonthIndex,
) -> Result<Vec<f64>> {
    let n = total.len();
    if npl.len() != n || hazards.len() != n - 1 {
        return Err(Error::LengthMismatch(format!(
            "E has {n} months, NPL {}, hazards {}",
            npl.len(),
            hazards.len()
        )));
    }
    let mut recoveries = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        if npl[i] == 0.0 {
            return Err(Error::ZeroNpl {
                month: start.plus(i as i64),
            });
        }
        let delta = npl[i + 1] - npl[i];
        recoveries.push((hazards[i] * (total[i] - npl[i]) - delta) / npl[i]);
    }
    Ok(recoveries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::MonthIndex;
    use proptest::prelude::*;

    fn start() -> MonthIndex {
        MonthIndex::new(2019, 1).unwrap()
    }

    #[test]
    fn zero_dynamics_keeps_npl_constant() {
        let e = vec![100.0; 5];
        let npl = forward_npl(&e, 10.0, &[0.0; 4], &[0.0; 4], start()).unwrap();
        assert!(npl.iter().all(|v| *v == 10.0));
    }

    #[test]
    fn single_step_matches_hand_computation() {
        let npl = forward_npl(&[100.0, 100.0], 10.0, &[0.02], &[0.08], start()).unwrap();
        assert_eq!(npl[1], 10.0 + 0.02 * 90.0 - 0.08 * 10.0);
        assert!((npl[1] - 11.0).abs() < 1e-12);
    }

    #[test]
    fn full_recovery_leaves_only_new_defaults() {
        let npl = forward_npl(&[100.0, 100.0], 10.0, &[0.01], &[1.0], start()).unwrap();
        assert!((npl[1] - 0.01 * 90.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_path_reports_month() {
        // large hazard pushes NPL above E at the second month
        let err = forward_npl(&[100.0, 5.0], 0.0, &[0.5], &[0.0], start()).unwrap_err();
        match err {
            Error::InfeasiblePath { month, .. } => {
                assert_eq!(month, MonthIndex::new(2019, 2).unwrap())
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn implied_recoveries_inverts_forward_example() {
        let r = implied_recoveries(&[100.0, 100.0], &[10.0, 11.0], &[0.02], start()).unwrap();
        assert!((r[0] - 0.08).abs() < 1e-15);
    }

    #[test]
    fn implied_recoveries_steady_state() {
        // constant NPL with P*(E-NPL) = 0.5 and NPL = 10 implies R = 0.05
        let r = implied_recoveries(&[60.0, 60.0], &[10.0, 10.0], &[0.01], start()).unwrap();
        assert!((r[0] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn zero_npl_errors() {
        let err = implied_recoveries(&[100.0, 100.0], &[0.0, 1.0], &[0.02], start()).unwrap_err();
        assert!(matches!(err, Error::ZeroNpl { .. }));
    }

    proptest! {
        // implied_recoveries . forward_npl recovers R exactly
        #[test]
        fn roundtrip_recovers_recoveries(
            seed_p in proptest::collection::vec(0.001f64..0.05, 4..30),
            seed_r in proptest::collection::vec(0.0f64..0.5, 4..30),
        ) {
            let n = seed_p.len().min(seed_r.len());
            let p = &seed_p[..n];
            let r = &seed_r[..n];
            let e = vec![1000.0; n + 1];
            let npl = forward_npl(&e, 50.0, p, r, start()).unwrap();
            let r_back = implied_recoveries(&e, &npl, p, start()).unwrap();
            for (a, b) in r.iter().zip(&r_back) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        // forward_npl is weakly monotone in each hazard
        #[test]
        fn monotone_in_hazard(idx in 0usize..5, bump in 0.0f64..0.01) {
            let e = vec![1000.0; 7];
            let p = vec![0.01f64; 6];
            let r = vec![0.1f64; 6];
            let base = forward_npl(&e, 50.0, &p, &r, start()).unwrap();
            let mut p2 = p.clone();
            p2[idx] += bump;
            let bumped = forward_npl(&e, 50.0, &p2, &r, start()).unwrap();
            for (a, b) in base.iter().zip(&bumped) {
                prop_assert!(b + 1e-12 >= *a);
            }
        }
    }
}
