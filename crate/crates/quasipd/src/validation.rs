//! Comparison of filtered quasi-PD series against observed default frequencies.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::AnnualPdSeries;
use crate::ingest::ReferenceDfSeries;
use crate::timeseries::{align, subtract, SegmentSeries};

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub r_squared: f64,
    pub aligned_months: usize,
    pub mean_model: f64,
    pub mean_reference: f64,
}

/// R-squared of the model PD against the reference default frequency over the
/// overlapping months, computed as squared Pearson correlation so that affine
/// level differences (handled separately by TTC calibration) do not matter.
pub fn validate(pd: &AnnualPdSeries, reference: &ReferenceDfSeries) -> Result<ValidationReport> {
    let model = pd.to_monthly_series();
    let (model, refer) = align(&model, &reference.df)?;
    let pairs: Vec<(f64, f64)> = model
        .values()
        .iter()
        .zip(refer.values())
        .filter_map(|(a, b)| match (a, b) {
            (Some(a), Some(b)) => Some((*a, *b)),
            _ => None,
        })
        .collect();
    if pairs.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "need >= 3 overlapping months, got {}",
            pairs.len()
        )));
    }
    let n = pairs.len() as f64;
    let mean_model = pairs.iter().map(|(a, _)| a).sum::<f64>() / n;
    let mean_reference = pairs.iter().map(|(_, b)| b).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in &pairs {
        let dx = a - mean_model;
        let dy = b - mean_reference;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 {
        return Err(Error::Domain(
            "model PD series is constant over the overlap; R^2 undefined".into(),
        ));
    }
    if syy == 0.0 {
        return Err(Error::Domain(
            "reference series is constant over the overlap; R^2 undefined".into(),
        ));
    }
    Ok(ValidationReport {
        r_squared: (sxy * sxy) / (sxx * syy),
        aligned_months: pairs.len(),
        mean_model,
        mean_reference,
    })
}

/// Retail-ex-mortgage proxy: subtract the mortgage stocks from the total
/// retail stocks, month by month.
pub fn build_retail_ex_mortgage(
    total_loans: &SegmentSeries,
    mortgage: &SegmentSeries,
) -> Result<SegmentSeries> {
    let e = subtract(&total_loans.total, &mortgage.total)?;
    let npl = subtract(&total_loans.overdue, &mortgage.overdue)?;
    SegmentSeries::new(
        format!("{}-ex-{}", total_loans.segment_id, mortgage.segment_id),
        e,
        npl,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::{MonthIndex, MonthlySeries};

    fn m(y: i32, mo: u8) -> MonthIndex {
        MonthIndex::new(y, mo).unwrap()
    }

    fn pd(values: &[f64]) -> AnnualPdSeries {
        AnnualPdSeries {
            start: m(2015, 1),
            pd: values.to_vec(),
        }
    }

    fn reference(values: &[f64]) -> ReferenceDfSeries {
        ReferenceDfSeries {
            segment_id: "ref".into(),
            df: MonthlySeries::from_values(m(2015, 1), values.to_vec()).unwrap(),
        }
    }

    #[test]
    fn identical_series_give_unit_r_squared() {
        let v = [0.02, 0.03, 0.025, 0.04, 0.035];
        let rep = validate(&pd(&v), &reference(&v)).unwrap();
        assert!((rep.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(rep.aligned_months, 5);
    }

    #[test]
    fn affine_relation_gives_unit_r_squared() {
        let model = [0.02, 0.03, 0.025, 0.04];
        let refv: Vec<f64> = model.iter().map(|v| 2.0 * v + 0.01).collect();
        let rep = validate(&pd(&model), &reference(&refv)).unwrap();
        assert!((rep.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rescaling_does_not_change_r_squared() {
        let model = [0.02, 0.035, 0.025, 0.04, 0.03];
        let refv = [0.03, 0.028, 0.031, 0.05, 0.041];
        let base = validate(&pd(&model), &reference(&refv)).unwrap().r_squared;
        let scaled: Vec<f64> = model.iter().map(|v| 7.5 * v + 0.2).collect();
        let again = validate(&pd(&scaled), &reference(&refv)).unwrap().r_squared;
        assert!((base - again).abs() < 1e-12);
    }

    #[test]
    fn constant_model_errors() {
        let rep = validate(&pd(&[0.03; 5]), &reference(&[0.01, 0.02, 0.03, 0.02, 0.01]));
        assert!(rep.is_err());
    }

    #[test]
    fn short_overlap_errors() {
        let model = pd(&[0.02, 0.03]);
        assert!(validate(&model, &reference(&[0.02, 0.03])).is_err());
    }

    fn segment(id: &str, e: &[f64], npl: &[f64]) -> SegmentSeries {
        SegmentSeries::new(
            id,
            MonthlySeries::from_values(m(2015, 1), e.to_vec()).unwrap(),
            MonthlySeries::from_values(m(2015, 1), npl.to_vec()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn retail_ex_mortgage_subtracts_both_stocks() {
        let total = segment("retail", &[100.0, 110.0], &[10.0, 11.0]);
        let mortgage = segment("mortgage", &[40.0, 42.0], &[2.0, 2.5]);
        let out = build_retail_ex_mortgage(&total, &mortgage).unwrap();
        assert_eq!(out.total.values()[0], Some(60.0));
        assert_eq!(out.overdue.values()[0], Some(8.0));
    }

    #[test]
    fn degenerate_all_zero_segment_rejected() {
        let total = segment("retail", &[100.0, 110.0], &[10.0, 11.0]);
        let err = build_retail_ex_mortgage(&total, &total).unwrap_err();
        assert!(err.to_string().contains("must be > 0"));
    }

    #[test]
    fn misaligned_spans_error() {
        let total = segment("retail", &[100.0, 110.0], &[10.0, 11.0]);
        let other = SegmentSeries::new(
            "mortgage",
            MonthlySeries::from_values(m(2020, 1), vec![40.0, 42.0]).unwrap(),
            MonthlySeries::from_values(m(2020, 1), vec![2.0, 2.5]).unwrap(),
        )
        .unwrap();
        assert!(build_retail_ex_mortgage(&total, &other).is_err());
    }
}
