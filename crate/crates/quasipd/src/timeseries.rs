//! Calendar-indexed monthly series shared by every other module.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A calendar month. Ordering is chronological.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MonthIndex {
    pub year: i32,
    pub month: u8,
}

impl MonthIndex {
    pub fn new(year: i32, month: u8) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidInput(format!(
                "month must be in 1..12, got {month}"
            )));
        }
        Ok(MonthIndex { year, month })
    }

    /// Months elapsed since year 0, month 1. Internal linearization.
    fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_ordinal(ord: i64) -> Self {
        MonthIndex {
            year: ord.div_euclid(12) as i32,
            month: (ord.rem_euclid(12) + 1) as u8,
        }
    }

    pub fn next(self) -> Self {
        Self::from_ordinal(self.ordinal() + 1)
    }

    pub fn plus(self, months: i64) -> Self {
        Self::from_ordinal(self.ordinal() + months)
    }

    /// Exact difference `self - other` in months.
    pub fn months_since(self, other: MonthIndex) -> i64 {
        self.ordinal() - other.ordinal()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (y, m) = text
            .split_once('-')
            .ok_or_else(|| Error::InvalidInput(format!("bad month label {text:?}, want YYYY-MM")))?;
        let year: i32 = y
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad year in {text:?}")))?;
        let month: u8 = m
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad month in {text:?}")))?;
        MonthIndex::new(year, month)
    }
}

impl fmt::Display for MonthIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

/// Contiguous monthly series; `None` marks a missing observation.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlySeries {
    start: MonthIndex,
    values: Vec<Option<f64>>,
}

impl MonthlySeries {
    pub fn new(start: MonthIndex, values: Vec<Option<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("series must have length >= 1".into()));
        }
        for (i, v) in values.iter().enumerate() {
            if let Some(x) = v {
                if !x.is_finite() {
                    return Err(Error::InvalidValue {
                        month: start.plus(i as i64),
                        reason: format!("non-finite value {x}"),
                    });
                }
            }
        }
        Ok(MonthlySeries { start, values })
    }

    pub fn from_values(start: MonthIndex, values: Vec<f64>) -> Result<Self> {
        Self::new(start, values.into_iter().map(Some).collect())
    }

    pub fn start(&self) -> MonthIndex {
        self.start
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // length >= 1 by construction
    }

    pub fn end(&self) -> MonthIndex {
        self.start.plus(self.values.len() as i64 - 1)
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn get(&self, month: MonthIndex) -> Option<f64> {
        let off = month.months_since(self.start);
        if off < 0 || off >= self.values.len() as i64 {
            None
        } else {
            self.values[off as usize]
        }
    }

    pub fn months(&self) -> impl Iterator<Item = MonthIndex> + '_ {
        let start = self.start;
        (0..self.values.len()).map(move |i| start.plus(i as i64))
    }

    pub fn has_gaps(&self) -> bool {
        self.values.iter().any(|v| v.is_none())
    }

    /// Dense values; errors if any observation is missing.
    pub fn dense(&self) -> Result<Vec<f64>> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| Error::InvalidValue {
                    month: self.start.plus(i as i64),
                    reason: "missing observation where gap-free input required".into(),
                })
            })
            .collect()
    }

    pub fn slice(&self, from: MonthIndex, to: MonthIndex) -> Result<MonthlySeries> {
        let a = from.months_since(self.start);
        let b = to.months_since(self.start);
        if a < 0 || b >= self.values.len() as i64 || a > b {
            return Err(Error::InvalidInput(format!(
                "slice {from}..{to} out of range {}..{}",
                self.start,
                self.end()
            )));
        }
        MonthlySeries::new(from, self.values[a as usize..=b as usize].to_vec())
    }
}

/// Restrict both series to their common calendar span. Values are copied as-is.
pub fn align(a: &MonthlySeries, b: &MonthlySeries) -> Result<(MonthlySeries, MonthlySeries)> {
    let start = a.start().max(b.start());
    let end = a.end().min(b.end());
    if end.months_since(start) < 0 {
        return Err(Error::DisjointSpans);
    }
    Ok((a.slice(start, end)?, b.slice(start, end)?))
}

/// Elementwise a - b over the common span; missing propagates.
pub fn subtract(a: &MonthlySeries, b: &MonthlySeries) -> Result<MonthlySeries> {
    let (a, b) = align(a, b)?;
    let values = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => Some(x - y),
            _ => None,
        })
        .collect();
    MonthlySeries::new(a.start(), values)
}

/// Elementwise a + b over the common span; missing propagates.
pub fn add(a: &MonthlySeries, b: &MonthlySeries) -> Result<MonthlySeries> {
    let (a, b) = align(a, b)?;
    let values = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => Some(x + y),
            _ => None,
        })
        .collect();
    MonthlySeries::new(a.start(), values)
}

/// Elementwise weighted sum over the common span of all inputs. Weights are
/// used as given; normalization is the caller's business.
pub fn weighted_sum(series: &[MonthlySeries], weights: &[f64]) -> Result<MonthlySeries> {
    if series.len() != weights.len() {
        return Err(Error::LengthMismatch(format!(
            "{} series vs {} weights",
            series.len(),
            weights.len()
        )));
    }
    if series.is_empty() {
        return Err(Error::InvalidInput("weighted_sum needs at least one series".into()));
    }
    if let Some(w) = weights.iter().find(|w| **w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidInput(format!("weight {w} must be finite and >= 0")));
    }
    let start = series.iter().map(|s| s.start()).max().unwrap();
    let end = series.iter().map(|s| s.end()).min().unwrap();
    if end.months_since(start) < 0 {
        return Err(Error::DisjointSpans);
    }
    let n = (end.months_since(start) + 1) as usize;
    let mut values: Vec<Option<f64>> = vec![Some(0.0); n];
    for (s, &w) in series.iter().zip(weights) {
        let s = s.slice(start, end)?;
        for (acc, v) in values.iter_mut().zip(s.values()) {
            *acc = match (*acc, v) {
                (Some(a), Some(v)) => Some(a + w * v),
                _ => None,
            };
        }
    }
    MonthlySeries::new(start, values)
}

/// Arithmetic mean over present values and CV = sample (n-1) std / mean.
pub fn mean_and_cv(s: &MonthlySeries) -> Result<(f64, f64)> {
    let present: Vec<f64> = s.values().iter().filter_map(|v| *v).collect();
    if present.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need >= 2 present values, got {}",
            present.len()
        )));
    }
    let n = present.len() as f64;
    let mean = present.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(Error::Domain("coefficient of variation undefined: mean is zero".into()));
    }
    let ss: f64 = present.iter().map(|x| (x - mean) * (x - mean)).sum();
    let std = (ss / (n - 1.0)).sqrt();
    Ok((mean, std / mean))
}

/// Total and overdue debt for one credit segment, on a shared calendar.
#[derive(Debug, Clone)]
pub struct SegmentSeries {
    pub segment_id: String,
    pub total: MonthlySeries,
    pub overdue: MonthlySeries,
}

impl SegmentSeries {
    pub fn new(segment_id: impl Into<String>, total: MonthlySeries, overdue: MonthlySeries) -> Result<Self> {
        if total.start() != overdue.start() || total.len() != overdue.len() {
            return Err(Error::LengthMismatch(
                "total and overdue series must share start and length".into(),
            ));
        }
        for (i, (e, npl)) in total.values().iter().zip(overdue.values()).enumerate() {
            if let (Some(e), Some(npl)) = (e, npl) {
                let month = total.start().plus(i as i64);
                if *npl < 0.0 {
                    return Err(Error::InvalidValue {
                        month,
                        reason: format!("overdue debt {npl} < 0"),
                    });
                }
                if *e <= 0.0 {
                    return Err(Error::InvalidValue {
                        month,
                        reason: format!("total debt {e} must be > 0"),
                    });
                }
                if npl > e {
                    return Err(Error::InvalidValue {
                        month,
                        reason: format!("overdue debt {npl} exceeds total debt {e}"),
                    });
                }
            }
        }
        Ok(SegmentSeries {
            segment_id: segment_id.into(),
            total,
            overdue,
        })
    }

    pub fn start(&self) -> MonthIndex {
        self.total.start()
    }

    pub fn len(&self) -> usize {
        self.total.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn has_gaps(&self) -> bool {
        self.total.has_gaps() || self.overdue.has_gaps()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(y: i32, mo: u8) -> MonthIndex {
        MonthIndex::new(y, mo).unwrap()
    }

    fn series(y: i32, mo: u8, vals: &[f64]) -> MonthlySeries {
        MonthlySeries::from_values(m(y, mo), vals.to_vec()).unwrap()
    }

    #[test]
    fn month_successor_wraps_year() {
        assert_eq!(m(2019, 12).next(), m(2020, 1));
        assert_eq!(m(2020, 1).months_since(m(2019, 1)), 12);
    }

    #[test]
    fn month_parse_display_roundtrip() {
        let idx = MonthIndex::parse("2019-07").unwrap();
        assert_eq!(idx, m(2019, 7));
        assert_eq!(idx.to_string(), "2019-07");
        assert!(MonthIndex::parse("2019-13").is_err());
        assert!(MonthIndex::parse("201907").is_err());
    }

    #[test]
    fn align_intersects_spans() {
        let a = series(2019, 1, &(1..=12).map(|v| v as f64).collect::<Vec<_>>());
        let b = series(2019, 6, &(1..=13).map(|v| v as f64).collect::<Vec<_>>());
        let (x, y) = align(&a, &b).unwrap();
        assert_eq!(x.start(), m(2019, 6));
        assert_eq!(x.end(), m(2019, 12));
        assert_eq!(y.start(), m(2019, 6));
        assert_eq!(x.len(), 7);
    }

    #[test]
    fn align_identity() {
        let a = series(2019, 1, &[1.0, 2.0]);
        let (x, y) = align(&a, &a).unwrap();
        assert_eq!(x, a);
        assert_eq!(y, a);
    }

    #[test]
    fn align_disjoint_errors() {
        let a = series(2010, 1, &[1.0; 24]);
        let b = series(2015, 1, &[1.0; 24]);
        assert!(matches!(align(&a, &b), Err(Error::DisjointSpans)));
    }

    #[test]
    fn subtract_elementwise() {
        let a = series(2019, 1, &[100.0, 110.0, 120.0]);
        let b = series(2019, 1, &[40.0, 40.0, 40.0]);
        let d = subtract(&a, &b).unwrap();
        assert_eq!(d.values(), &[Some(60.0), Some(70.0), Some(80.0)]);
    }

    #[test]
    fn subtract_self_is_zero() {
        let a = series(2019, 1, &[3.0, 5.0, 7.0]);
        let d = subtract(&a, &a).unwrap();
        assert!(d.values().iter().all(|v| *v == Some(0.0)));
    }

    #[test]
    fn subtract_propagates_missing() {
        let a = MonthlySeries::new(m(2019, 1), vec![Some(100.0), None, Some(120.0)]).unwrap();
        let b = series(2019, 1, &[40.0, 40.0, 40.0]);
        let d = subtract(&a, &b).unwrap();
        assert_eq!(d.values(), &[Some(60.0), None, Some(80.0)]);
    }

    #[test]
    fn subtract_then_add_recovers() {
        let a = MonthlySeries::new(m(2019, 1), vec![Some(100.0), None, Some(120.0)]).unwrap();
        let b = series(2019, 1, &[40.0, 41.5, 42.0]);
        let back = add(&subtract(&a, &b).unwrap(), &b).unwrap();
        for (orig, rec) in a.values().iter().zip(back.values()) {
            match orig {
                Some(v) => assert_eq!(rec.unwrap(), *v),
                None => assert!(rec.is_none()),
            }
        }
    }

    #[test]
    fn weighted_sum_midpoint() {
        let a = series(2019, 1, &[100.0, 100.0]);
        let b = series(2019, 1, &[200.0, 200.0]);
        let s = weighted_sum(&[a, b], &[0.5, 0.5]).unwrap();
        assert_eq!(s.values(), &[Some(150.0), Some(150.0)]);
    }

    #[test]
    fn weighted_sum_single_identity() {
        let a = series(2019, 1, &[7.0, 8.0]);
        let s = weighted_sum(std::slice::from_ref(&a), &[1.0]).unwrap();
        assert_eq!(s, a);
    }

    #[test]
    fn weighted_sum_unnormalized_weights() {
        let a = series(2019, 1, &[1.0, 1.0]);
        let b = series(2019, 1, &[1.0, 1.0]);
        let s = weighted_sum(&[a, b], &[2.0, 3.0]).unwrap();
        assert_eq!(s.values(), &[Some(5.0), Some(5.0)]);
    }

    #[test]
    fn weighted_sum_count_mismatch() {
        let a = series(2019, 1, &[1.0]);
        assert!(weighted_sum(&[a], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mean_cv_constant() {
        let s = series(2019, 1, &[2.0, 2.0, 2.0, 2.0]);
        let (mean, cv) = mean_and_cv(&s).unwrap();
        assert_eq!(mean, 2.0);
        assert_eq!(cv, 0.0);
    }

    #[test]
    fn mean_cv_two_points() {
        let s = series(2019, 1, &[1.0, 3.0]);
        let (mean, cv) = mean_and_cv(&s).unwrap();
        assert_eq!(mean, 2.0);
        assert!((cv - std::f64::consts::SQRT_2 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn mean_cv_zero_mean_errors() {
        let s = series(2019, 1, &[-1.0, 1.0]);
        assert!(mean_and_cv(&s).is_err());
    }

    #[test]
    fn segment_rejects_npl_above_e() {
        let e = series(2019, 1, &[100.0, 100.0]);
        let npl = series(2019, 1, &[10.0, 120.0]);
        let err = SegmentSeries::new("s", e, npl).unwrap_err();
        assert!(err.to_string().contains("2019-02"));
    }
}
