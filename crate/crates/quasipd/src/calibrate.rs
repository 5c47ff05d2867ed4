//! Determine the two free parameters (RR, lambda): RR matches the long-run
//! anchor PD over an averaging window, and among the lambdas that reproduce
//! the observed count of PD extrema the largest is chosen.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::filter::{annualize, solve, AnnualPdSeries, FilterParams, SolverSettings};
use crate::timeseries::{MonthIndex, SegmentSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremumKind {
    Min,
    Max,
}

/// Which extrema enter the count matched against the target m.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    #[default]
    Both,
    MinOnly,
    MaxOnly,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtremaReport {
    pub extrema_months: Vec<MonthIndex>,
    pub kinds: Vec<ExtremumKind>,
}

impl ExtremaReport {
    pub fn count(&self, mode: CountMode) -> usize {
        match mode {
            CountMode::Both => self.kinds.len(),
            CountMode::MinOnly => self.kinds.iter().filter(|k| **k == ExtremumKind::Min).count(),
            CountMode::MaxOnly => self.kinds.iter().filter(|k| **k == ExtremumKind::Max).count(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationSpec {
    /// Through-the-cycle anchor for the mean annual PD.
    pub pd_ttc: f64,
    /// 1-based month number where the averaging window starts; must be > 11
    /// because the first annualized PD exists at month 12.
    pub window_start_n: usize,
    pub target_extrema_m: usize,
    pub lambda_grid: Vec<f64>,
    pub rr_tolerance: f64,
    /// Minimum height of an extremum relative to its neighbors; suppresses
    /// numerical-noise wiggles.
    pub prominence: f64,
    pub count_mode: CountMode,
}

impl CalibrationSpec {
    pub fn validate(&self) -> crate::error::Result<()> {
        if !(self.pd_ttc > 0.0 && self.pd_ttc < 1.0) {
            return Err(Error::InvalidInput(format!(
                "pd_ttc must be in (0,1), got {}",
                self.pd_ttc
            )));
        }
        if self.window_start_n <= 11 {
            return Err(Error::InvalidInput(format!(
                "window_start_n must be > 11, got {}",
                self.window_start_n
            )));
        }
        if self.lambda_grid.is_empty() {
            return Err(Error::InvalidInput("lambda_grid is empty".into()));
        }
        if !self.lambda_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidInput("lambda_grid must be strictly increasing".into()));
        }
        if !(self.rr_tolerance > 0.0) {
            return Err(Error::InvalidInput("rr_tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Dyadic default grid 2^-12 .. 2^4 (17 points).
pub fn default_lambda_grid() -> Vec<f64> {
    (-12..=4).map(|e| 2f64.powi(e)).collect()
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        CalibrationSpec {
            pd_ttc: 0.035,
            window_start_n: 12,
            target_extrema_m: 3,
            lambda_grid: default_lambda_grid(),
            rr_tolerance: 1e-5,
            prominence: 0.001,
            count_mode: CountMode::Both,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LambdaTrace {
    pub lambda: f64,
    pub fitted_rr: Option<f64>,
    pub extrema_count: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationResult {
    pub params: FilterParams,
    pub achieved_mean_pd: f64,
    pub achieved_extrema: usize,
    pub per_lambda_trace: Vec<LambdaTrace>,
}

#[derive(Debug)]
pub struct CalibrationFailure {
    pub reason: Error,
    pub per_lambda_trace: Vec<LambdaTrace>,
}

impl From<CalibrationFailure> for Error {
    fn from(f: CalibrationFailure) -> Error {
        f.reason
    }
}

/// Interior extrema of the annual PD path, with plateaus collapsed to their
/// midpoint and shallow wiggles below `prominence` pruned.
pub fn count_extrema(pd: &AnnualPdSeries, prominence: f64) -> ExtremaReport {
    let y = &pd.pd;
    let n = y.len();
    let mut idx: Vec<usize> = Vec::new();
    let mut kinds: Vec<ExtremumKind> = Vec::new();
    if n >= 3 {
        // collapse equal runs, then compare each run to its distinct neighbors
        let mut runs: Vec<(usize, usize, f64)> = Vec::new(); // (first, last, value)
        for (i, &v) in y.iter().enumerate() {
            match runs.last_mut() {
                Some((_, last, rv)) if *rv == v => *last = i,
                _ => runs.push((i, i, v)),
            }
        }
        for w in runs.windows(3) {
            let (_, _, prev) = w[0];
            let (first, last, v) = w[1];
            let (_, _, next) = w[2];
            let kind = if v < prev && v < next {
                Some(ExtremumKind::Min)
            } else if v > prev && v > next {
                Some(ExtremumKind::Max)
            } else {
                None
            };
            if let Some(kind) = kind {
                idx.push((first + last) / 2);
                kinds.push(kind);
            }
        }
    }

    // prune by prominence: values augmented with the series endpoints
    if prominence > 0.0 && !idx.is_empty() {
        loop {
            let vals: Vec<f64> = std::iter::once(y[0])
                .chain(idx.iter().map(|&i| y[i]))
                .chain(std::iter::once(y[n - 1]))
                .collect();
            let mut weakest: Option<(usize, f64)> = None; // gap index into vals
            for (g, pair) in vals.windows(2).enumerate() {
                let diff = (pair[0] - pair[1]).abs();
                if weakest.map_or(true, |(_, d)| diff < d) {
                    weakest = Some((g, diff));
                }
            }
            match weakest {
                Some((g, diff)) if diff < prominence => {
                    // gap g sits between vals[g] and vals[g+1]; entries 1..=idx.len()
                    // are extrema, 0 and len+1 the endpoints
                    if g == 0 {
                        idx.remove(0);
                        kinds.remove(0);
                    } else if g == idx.len() {
                        idx.pop();
                        kinds.pop();
                    } else {
                        // interior pair: drop both to keep alternation
                        idx.drain(g - 1..=g);
                        kinds.drain(g - 1..=g);
                    }
                    if idx.is_empty() {
                        break;
                    }
                }
                _ => break,
            }
        }
    }

    ExtremaReport {
        extrema_months: idx.iter().map(|&i| pd.start.plus(i as i64)).collect(),
        kinds,
    }
}

fn windowed_mean_pd(pd: &AnnualPdSeries, window_start_n: usize) -> crate::error::Result<f64> {
    // PD entry j corresponds to 1-based month number 12 + j
    let skip = window_start_n.saturating_sub(12);
    if skip >= pd.pd.len() {
        return Err(Error::InvalidInput(format!(
            "averaging window starts at month {window_start_n} but the PD series ends at month {}",
            11 + pd.pd.len()
        )));
    }
    let window = &pd.pd[skip..];
    Ok(window.iter().sum::<f64>() / window.len() as f64)
}

/// Repeated solves across nearby RR values; each solve warm-starts from the
/// previous solution's hazards.
struct RrEvaluator<'a> {
    segment: &'a SegmentSeries,
    lambda: f64,
    window_start_n: usize,
    settings: SolverSettings,
    warm: Option<Vec<f64>>,
}

impl<'a> RrEvaluator<'a> {
    fn new(
        segment: &'a SegmentSeries,
        lambda: f64,
        spec: &CalibrationSpec,
        settings: &SolverSettings,
    ) -> Self {
        RrEvaluator {
            segment,
            lambda,
            window_start_n: spec.window_start_n,
            settings: settings.clone(),
            warm: None,
        }
    }

    fn mean_pd(&mut self, rr: f64) -> crate::error::Result<f64> {
        let mut settings = self.settings.clone();
        if let Some(warm) = &self.warm {
            settings.initial_hazards = crate::filter::InitialHazards::Given(warm.clone());
        }
        let report = solve(self.segment, FilterParams::new(rr, self.lambda)?, &settings)?;
        let pd = annualize(&report.solution.hazards, report.solution.start)?;
        self.warm = Some(report.solution.hazards);
        windowed_mean_pd(&pd, self.window_start_n)
    }
}

const RR_LO: f64 = 0.001;
const RR_HI: f64 = 0.999;

/// Find RR such that the windowed mean annual PD hits the anchor, for a fixed
/// lambda. Bisection on the bracket; if the means at the bracket ends do not
/// straddle the anchor, a grid scan reports the best attainable point.
pub fn fit_rr(
    segment: &SegmentSeries,
    lambda: f64,
    spec: &CalibrationSpec,
    settings: &SolverSettings,
) -> crate::error::Result<(f64, f64)> {
    spec.validate()?;
    let mut eval = RrEvaluator::new(segment, lambda, spec, settings);
    let mut lo = RR_LO;
    let mut hi = RR_HI;
    let m_lo = eval.mean_pd(lo)?;
    let mut m_hi = eval.mean_pd(hi)?;
    let g_lo = m_lo - spec.pd_ttc;
    let g_hi = m_hi - spec.pd_ttc;
    if g_lo.abs() <= spec.rr_tolerance {
        return Ok((lo, m_lo));
    }
    if g_hi.abs() <= spec.rr_tolerance {
        return Ok((hi, m_hi));
    }
    if g_lo * g_hi > 0.0 {
        // anchor not bracketed; scan for the closest attainable mean
        let mut best = (f64::INFINITY, lo, m_lo);
        let mut attained = (m_lo.min(m_hi), m_lo.max(m_hi));
        for k in 0..=50 {
            let rr = RR_LO + (RR_HI - RR_LO) * k as f64 / 50.0;
            let m = eval.mean_pd(rr)?;
            attained = (attained.0.min(m), attained.1.max(m));
            let gap = (m - spec.pd_ttc).abs();
            if gap < best.0 {
                best = (gap, rr, m);
            }
        }
        if best.0 <= spec.rr_tolerance {
            return Ok((best.1, best.2));
        }
        return Err(Error::CalibrationInfeasible(format!(
            "no RR in ({RR_LO}, {RR_HI}) attains mean PD {} at lambda {lambda}; attained range [{:.6}, {:.6}]",
            spec.pd_ttc, attained.0, attained.1
        )));
    }
    // bisection
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let m_mid = eval.mean_pd(mid)?;
        let g_mid = m_mid - spec.pd_ttc;
        if g_mid.abs() <= spec.rr_tolerance || (hi - lo) < 1e-12 {
            return Ok((mid, m_mid));
        }
        if (g_mid > 0.0) == (m_hi - spec.pd_ttc > 0.0) {
            hi = mid;
            m_hi = m_mid;
        } else {
            lo = mid;
        }
    }
    Err(Error::CalibrationInfeasible(format!(
        "bisection on RR did not reach tolerance {} at lambda {lambda}",
        spec.rr_tolerance
    )))
}

/// Full calibration: fit RR for every lambda on the grid, count PD extrema,
/// and pick the largest lambda whose count matches the target.
pub fn calibrate(
    segment: &SegmentSeries,
    spec: &CalibrationSpec,
    settings: &SolverSettings,
) -> std::result::Result<CalibrationResult, CalibrationFailure> {
    if let Err(e) = spec.validate() {
        return Err(CalibrationFailure {
            reason: e,
            per_lambda_trace: Vec::new(),
        });
    }
    let mut trace = Vec::with_capacity(spec.lambda_grid.len());
    let mut selected: Option<(FilterParams, f64, usize)> = None;
    for &lambda in &spec.lambda_grid {
        match fit_rr(segment, lambda, spec, settings) {
            Ok((rr, mean_pd)) => {
                let count = match solve(segment, FilterParams { rr, lambda }, settings)
                    .and_then(|rep| annualize(&rep.solution.hazards, rep.solution.start))
                {
                    Ok(pd) => count_extrema(&pd, spec.prominence).count(spec.count_mode),
                    Err(e) => {
                        trace.push(LambdaTrace {
                            lambda,
                            fitted_rr: Some(rr),
                            extrema_count: None,
                            error: Some(e.to_string()),
                        });
                        continue;
                    }
                };
                trace.push(LambdaTrace {
                    lambda,
                    fitted_rr: Some(rr),
                    extrema_count: Some(count),
                    error: None,
                });
                if count == spec.target_extrema_m {
                    // grid is ascending, so the last match is the largest lambda
                    selected = Some((FilterParams { rr, lambda }, mean_pd, count));
                }
            }
            Err(e) => {
                trace.push(LambdaTrace {
                    lambda,
                    fitted_rr: None,
                    extrema_count: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    match selected {
        Some((params, achieved_mean_pd, achieved_extrema)) => Ok(CalibrationResult {
            params,
            achieved_mean_pd,
            achieved_extrema,
            per_lambda_trace: trace,
        }),
        None => Err(CalibrationFailure {
            reason: Error::CalibrationInfeasible(format!(
                "no lambda on the grid yields {} extrema",
                spec.target_extrema_m
            )),
            per_lambda_trace: trace,
        }),
    }
}
