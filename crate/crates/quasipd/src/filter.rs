//! The core estimator: minimize the smoothing functional over monthly hazards.
//!
//! Hazards are optimized through the logit transform x = ln(1/P - 1), which
//! keeps P inside (0, 1) without explicit constraints. Recovery shares are not
//! free variables: each month's balance equation pins R given P, so the solver
//! searches over x alone and derives R by exact inversion.
//!
//! Objective, for x of length M = N - 1 and R = implied recoveries:
//!     sum over interior i of (x_{i+1} + x_{i-1} - 2 x_i)^2
//!   + lambda * sum over i of (R_i - RR)^2

use serde::{Deserialize, Serialize};

use crate::balance::{implied_recoveries, FilterSolution};
use crate::error::{Error, Result};
use crate::timeseries::{MonthIndex, MonthlySeries, SegmentSeries};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FilterParams {
    /// Long-run recovery share anchor, in (0, 1).
    pub rr: f64,
    /// Penalty weight on deviations of R from the anchor.
    pub lambda: f64,
}

impl FilterParams {
    pub fn new(rr: f64, lambda: f64) -> Result<Self> {
        if !(rr > 0.0 && rr < 1.0) {
            return Err(Error::InvalidInput(format!("RR must be in (0,1), got {rr}")));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidInput(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        Ok(FilterParams { rr, lambda })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum InitialHazards {
    /// Start every hazard at the given value.
    Flat(f64),
    /// Zero-recovery explanation of each month's NPL delta.
    FromDelta,
    /// Explicit starting hazards, one per transition.
    Given(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSettings {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub initial_hazards: InitialHazards,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_iterations: 50_000,
            gradient_tolerance: 1e-8,
            initial_hazards: InitialHazards::FromDelta,
        }
    }
}

/// Annualized PD, one value per month that has 12 trailing hazards.
#[derive(Debug, Clone, Serialize)]
pub struct AnnualPdSeries {
    pub start: MonthIndex,
    pub pd: Vec<f64>,
}

impl AnnualPdSeries {
    pub fn to_monthly_series(&self) -> MonthlySeries {
        MonthlySeries::from_values(self.start, self.pd.clone()).expect("PD values are finite")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub solution: FilterSolution,
    pub objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
}

pub fn logit_hazard(p: f64) -> f64 {
    (1.0 / p - 1.0).ln()
}

pub fn hazard_from_logit(x: f64) -> f64 {
    1.0 / (1.0 + x.exp())
}

struct Problem {
    total: Vec<f64>,
    npl: Vec<f64>,
    start: MonthIndex,
    rr: f64,
    lambda: f64,
    /// (E_i - NPL_i) / NPL_i, the sensitivity of R_i to P_i
    r_slope: Vec<f64>,
}

impl Problem {
    fn new(segment: &SegmentSeries, params: FilterParams) -> Result<Self> {
        if segment.has_gaps() {
            return Err(Error::InvalidInput(format!(
                "segment {} has gaps; run gap filling first",
                segment.segment_id
            )));
        }
        let total = segment.total.dense()?;
        let npl = segment.overdue.dense()?;
        if total.len() < 2 {
            return Err(Error::InvalidInput("segment needs >= 2 months".into()));
        }
        let start = segment.start();
        for (i, v) in npl[..npl.len() - 1].iter().enumerate() {
            if *v <= 0.0 {
                return Err(Error::ZeroNpl {
                    month: start.plus(i as i64),
                });
            }
        }
        let r_slope = (0..total.len() - 1)
            .map(|i| (total[i] - npl[i]) / npl[i])
            .collect();
        Ok(Problem {
            total,
            npl,
            start,
            rr: params.rr,
            lambda: params.lambda,
            r_slope,
        })
    }

    fn n_hazards(&self) -> usize {
        self.total.len() - 1
    }

    fn recoveries(&self, hazards: &[f64]) -> Result<Vec<f64>> {
        implied_recoveries(&self.total, &self.npl, hazards, self.start)
    }

    fn objective_x(&self, x: &[f64]) -> f64 {
        let hazards: Vec<f64> = x.iter().map(|&v| hazard_from_logit(v)).collect();
        let r = self
            .recoveries(&hazards)
            .expect("interior NPL checked at construction");
        let mut f = 0.0;
        for i in 1..x.len().saturating_sub(1) {
            let d = x[i + 1] + x[i - 1] - 2.0 * x[i];
            f += d * d;
        }
        for ri in &r {
            let d = ri - self.rr;
            f += self.lambda * d * d;
        }
        f
    }

    fn gradient_x(&self, x: &[f64]) -> Vec<f64> {
        let m = x.len();
        let mut g = vec![0.0; m];
        for i in 1..m.saturating_sub(1) {
            let d = x[i + 1] + x[i - 1] - 2.0 * x[i];
            g[i + 1] += 2.0 * d;
            g[i - 1] += 2.0 * d;
            g[i] += -4.0 * d;
        }
        for i in 0..m {
            let p = hazard_from_logit(x[i]);
            let delta = self.npl[i + 1] - self.npl[i];
            let r = (p * (self.total[i] - self.npl[i]) - delta) / self.npl[i];
            // dR/dx = r_slope * dP/dx, dP/dx = -P(1-P)
            let dr_dx = self.r_slope[i] * (-p * (1.0 - p));
            g[i] += 2.0 * self.lambda * (r - self.rr) * dr_dx;
        }
        g
    }

    fn initial_x(&self, init: &InitialHazards) -> Result<Vec<f64>> {
        const EPS: f64 = 1e-6;
        match init {
            InitialHazards::Given(hazards) => {
                if hazards.len() != self.n_hazards() {
                    return Err(Error::LengthMismatch(format!(
                        "initial hazards: expected {}, got {}",
                        self.n_hazards(),
                        hazards.len()
                    )));
                }
                check_hazards_open_interval(hazards)?;
                Ok(hazards.iter().map(|&p| logit_hazard(p)).collect())
            }
            InitialHazards::Flat(v) => {
                Ok(vec![logit_hazard(v.clamp(EPS, 1.0 - EPS)); self.n_hazards()])
            }
            InitialHazards::FromDelta => Ok((0..self.n_hazards())
                .map(|i| {
                    let delta = self.npl[i + 1] - self.npl[i];
                    let denom = (self.total[i] - self.npl[i]).max(EPS);
                    let p = (delta.max(EPS) / denom).clamp(EPS, 1.0 - EPS);
                    logit_hazard(p)
                })
                .collect()),
        }
    }
}

fn check_hazards_open_interval(hazards: &[f64]) -> Result<()> {
    for (i, p) in hazards.iter().enumerate() {
        if !(*p > 0.0 && *p < 1.0) {
            return Err(Error::Domain(format!("P[{i}] = {p} outside (0, 1)")));
        }
    }
    Ok(())
}

/// Value of the filtering functional at the given hazards.
pub fn objective(hazards: &[f64], segment: &SegmentSeries, params: FilterParams) -> Result<f64> {
    check_hazards_open_interval(hazards)?;
    let prob = Problem::new(segment, params)?;
    if hazards.len() != prob.n_hazards() {
        return Err(Error::LengthMismatch(format!(
            "expected {} hazards, got {}",
            prob.n_hazards(),
            hazards.len()
        )));
    }
    let x: Vec<f64> = hazards.iter().map(|&p| logit_hazard(p)).collect();
    Ok(prob.objective_x(&x))
}

/// Analytic gradient of the functional with respect to the logit variables x.
pub fn gradient(hazards: &[f64], segment: &SegmentSeries, params: FilterParams) -> Result<Vec<f64>> {
    check_hazards_open_interval(hazards)?;
    let prob = Problem::new(segment, params)?;
    if hazards.len() != prob.n_hazards() {
        return Err(Error::LengthMismatch(format!(
            "expected {} hazards, got {}",
            prob.n_hazards(),
            hazards.len()
        )));
    }
    let x: Vec<f64> = hazards.iter().map(|&p| logit_hazard(p)).collect();
    Ok(prob.gradient_x(&x))
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimize the functional by L-BFGS with backtracking line search.
pub fn solve(
    segment: &SegmentSeries,
    params: FilterParams,
    settings: &SolverSettings,
) -> Result<SolveReport> {
    const MEMORY: usize = 10;
    const ARMIJO_C1: f64 = 1e-4;
    const REL_DECREASE_TOL: f64 = 1e-12;

    let prob = Problem::new(segment, params)?;
    let mut x = prob.initial_x(&settings.initial_hazards)?;
    let mut f = prob.objective_x(&x);
    let mut g = prob.gradient_x(&x);

    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();

    let mut iterations = 0;
    let mut converged = inf_norm(&g) < settings.gradient_tolerance;

    while !converged && iterations < settings.max_iterations {
        iterations += 1;

        // two-loop recursion
        let mut q = g.clone();
        let k = s_hist.len();
        let mut alpha = vec![0.0; k];
        for j in (0..k).rev() {
            alpha[j] = rho_hist[j] * dot(&s_hist[j], &q);
            for (qi, yi) in q.iter_mut().zip(&y_hist[j]) {
                *qi -= alpha[j] * yi;
            }
        }
        let gamma = if k > 0 {
            let j = k - 1;
            dot(&s_hist[j], &y_hist[j]) / dot(&y_hist[j], &y_hist[j])
        } else {
            1.0
        };
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
        for j in 0..k {
            let beta = rho_hist[j] * dot(&y_hist[j], &q);
            for (qi, si) in q.iter_mut().zip(&s_hist[j]) {
                *qi += (alpha[j] - beta) * si;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            // not a descent direction, fall back to steepest descent
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        // backtracking line search
        let mut step = 1.0;
        let mut x_new;
        let mut f_new;
        loop {
            x_new = x
                .iter()
                .zip(&dir)
                .map(|(xi, di)| xi + step * di)
                .collect::<Vec<f64>>();
            f_new = prob.objective_x(&x_new);
            if f_new <= f + ARMIJO_C1 * step * slope {
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                // no further progress possible along any descent direction
                x_new = x.clone();
                f_new = f;
                break;
            }
        }

        let g_new = prob.gradient_x(&x_new);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 {
            if s_hist.len() == MEMORY {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
            rho_hist.push(1.0 / sy);
        }

        let rel_decrease = (f - f_new) / f.abs().max(1.0);
        x = x_new;
        g = g_new;
        let stalled = rel_decrease < REL_DECREASE_TOL;
        f = f_new;
        if inf_norm(&g) < settings.gradient_tolerance || stalled {
            converged = true;
        }
    }

    let gradient_norm = inf_norm(&g);
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            gradient_norm,
            objective: f,
        });
    }

    let hazards: Vec<f64> = x.iter().map(|&v| hazard_from_logit(v)).collect();
    check_hazards_open_interval(&hazards)?;
    let recoveries = prob.recoveries(&hazards)?;
    Ok(SolveReport {
        solution: FilterSolution::new(prob.start, hazards, recoveries)?,
        objective: f,
        gradient_norm,
        iterations,
    })
}

/// Rolling 12-month compounding of monthly hazards:
///     PD_i = 1 - prod_{k=i-11..i} (1 - P_k)
/// `start` labels the first hazard; the output starts 11 months later.
pub fn annualize(hazards: &[f64], start: MonthIndex) -> Result<AnnualPdSeries> {
    if hazards.len() < 12 {
        return Err(Error::InvalidInput(format!(
            "annualization needs >= 12 hazards, got {}",
            hazards.len()
        )));
    }
    for (i, p) in hazards.iter().enumerate() {
        if !(*p >= 0.0 && *p <= 1.0) {
            return Err(Error::Domain(format!("P[{i}] = {p} outside [0, 1]")));
        }
    }
    let pd = (11..hazards.len())
        .map(|i| {
            let survive: f64 = hazards[i - 11..=i].iter().map(|p| 1.0 - p).product();
            1.0 - survive
        })
        .collect();
    Ok(AnnualPdSeries {
        start: start.plus(11),
        pd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balance::forward_npl;
    use crate::timeseries::MonthlySeries;

    fn start() -> MonthIndex {
        MonthIndex::new(2015, 1).unwrap()
    }

    fn segment(total: Vec<f64>, npl: Vec<f64>) -> SegmentSeries {
        SegmentSeries::new(
            "test",
            MonthlySeries::from_values(start(), total).unwrap(),
            MonthlySeries::from_values(start(), npl).unwrap(),
        )
        .unwrap()
    }

    /// Segment whose logit-hazard truth is affine and recoveries constant.
    fn affine_segment(n: usize, rr: f64) -> (SegmentSeries, Vec<f64>) {
        let hazards: Vec<f64> = (0..n - 1)
            .map(|i| hazard_from_logit(4.0 + 0.01 * i as f64))
            .collect();
        let total = vec![1000.0; n];
        let npl = forward_npl(&total, 30.0, &hazards, &vec![rr; n - 1], start()).unwrap();
        (segment(total, npl), hazards)
    }

    #[test]
    fn objective_zero_on_affine_logit_and_anchor_recoveries() {
        let rr = 0.3;
        let (seg, hazards) = affine_segment(20, rr);
        let params = FilterParams::new(rr, 2.0).unwrap();
        let f = objective(&hazards, &seg, params).unwrap();
        assert!(f < 1e-18, "objective {f}");
    }

    #[test]
    fn objective_ignores_recoveries_when_lambda_zero() {
        // lambda > 0 is required by FilterParams; use a tiny lambda and a
        // directly constructed Problem-free check through the public objective
        let (seg, hazards) = affine_segment(12, 0.3);
        let params = FilterParams::new(0.9, 1e-300).unwrap();
        let f = objective(&hazards, &seg, params).unwrap();
        assert!(f < 1e-18, "objective {f}");
    }

    #[test]
    fn interior_perturbation_costs_six_delta_squared() {
        let rr = 0.25;
        let (seg, hazards) = affine_segment(30, rr);
        let params = FilterParams::new(rr, 1e-300).unwrap();
        let base = objective(&hazards, &seg, params).unwrap();
        let delta = 0.05;
        let k = 10; // two interior neighbors on each side
        let mut x: Vec<f64> = hazards.iter().map(|&p| logit_hazard(p)).collect();
        x[k] += delta;
        let bumped: Vec<f64> = x.iter().map(|&v| hazard_from_logit(v)).collect();
        let f = objective(&bumped, &seg, params).unwrap();
        assert!((f - base - 6.0 * delta * delta).abs() < 1e-10, "got {}", f - base);
    }

    #[test]
    fn objective_rejects_boundary_hazards() {
        let (seg, mut hazards) = affine_segment(10, 0.3);
        hazards[0] = 1.0;
        assert!(objective(&hazards, &seg, FilterParams::new(0.3, 1.0).unwrap()).is_err());
    }

    #[test]
    fn gradient_zero_at_global_minimum() {
        let rr = 0.3;
        let (seg, hazards) = affine_segment(15, rr);
        let g = gradient(&hazards, &seg, FilterParams::new(rr, 2.0).unwrap()).unwrap();
        assert!(inf_norm(&g) < 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let seg = {
            let total = vec![500.0; 10];
            let hazards: Vec<f64> = (0..9).map(|i| 0.01 + 0.002 * (i as f64 * 1.3).sin()).collect();
            let recov: Vec<f64> = (0..9).map(|i| 0.2 + 0.05 * (i as f64).cos()).collect();
            let npl = forward_npl(&total, 20.0, &hazards, &recov, start()).unwrap();
            segment(total, npl)
        };
        let params = FilterParams::new(0.3, 3.0).unwrap();
        let prob = Problem::new(&seg, params).unwrap();
        let x: Vec<f64> = (0..9).map(|i| 3.5 + 0.3 * (i as f64 * 0.7).sin()).collect();
        let g = prob.gradient_x(&x);
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (prob.objective_x(&xp) - prob.objective_x(&xm)) / (2.0 * h);
            let denom = fd.abs().max(1e-8);
            assert!(
                (g[i] - fd).abs() / denom < 1e-5,
                "component {i}: analytic {} vs fd {fd}",
                g[i]
            );
        }
    }

    #[test]
    fn gradient_independent_of_rr_at_tiny_lambda() {
        let (seg, hazards) = affine_segment(10, 0.3);
        let g1 = gradient(&hazards, &seg, FilterParams::new(0.1, 1e-300).unwrap()).unwrap();
        let g2 = gradient(&hazards, &seg, FilterParams::new(0.9, 1e-300).unwrap()).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn solve_terminates_immediately_at_minimum() {
        let rr = 0.3;
        let (seg, hazards) = affine_segment(20, rr);
        let params = FilterParams::new(rr, 2.0).unwrap();
        let settings = SolverSettings {
            initial_hazards: InitialHazards::Given(hazards),
            ..Default::default()
        };
        let report = solve(&seg, params, &settings).unwrap();
        assert!(report.iterations <= 2, "iterations {}", report.iterations);
        assert!(report.objective < 1e-16);
    }

    #[test]
    fn solve_descends_from_flat_start() {
        let rr = 0.35;
        let (seg, truth) = affine_segment(40, rr);
        let params = FilterParams::new(rr, 4.0).unwrap();
        let settings = SolverSettings {
            initial_hazards: InitialHazards::Flat(0.05),
            ..Default::default()
        };
        let init_obj = objective(&vec![0.05; 39], &seg, params).unwrap();
        let report = solve(&seg, params, &settings).unwrap();
        assert!(report.objective <= init_obj);
        assert!(report.objective < 1e-8, "objective {}", report.objective);
        for (est, tru) in report.solution.hazards.iter().zip(&truth) {
            assert!((est - tru).abs() < 1e-4, "est {est} vs truth {tru}");
        }
        // parametrization guarantees the open interval; asserted anyway
        assert!(report.solution.hazards.iter().all(|p| *p > 0.0 && *p < 1.0));
    }

    #[test]
    fn two_month_segment_recovers_anchor() {
        // N = 2: no smoothness term, single hazard; minimum drives R_1 to RR
        let total = vec![100.0, 100.0];
        let npl = vec![10.0, 10.5];
        let seg = segment(total.clone(), npl.clone());
        let params = FilterParams::new(0.3, 1.0).unwrap();
        let report = solve(&seg, params, &SolverSettings::default()).unwrap();
        assert!((report.solution.recoveries[0] - 0.3).abs() < 1e-6);
        // grid-search oracle over P_1
        let mut best = (f64::INFINITY, 0.0);
        for k in 1..10000 {
            let p = k as f64 / 10000.0 * 0.999;
            let f = objective(&[p], &seg, params).unwrap();
            if f < best.0 {
                best = (f, p);
            }
        }
        assert!((report.solution.hazards[0] - best.1).abs() < 1e-3);
    }

    #[test]
    fn large_lambda_pulls_recoveries_to_anchor() {
        // noisy recoveries in the data; increasing lambda must shrink the
        // worst deviation of fitted R from the anchor
        let n = 30;
        let total = vec![1000.0; n];
        let hazards: Vec<f64> = (0..n - 1).map(|i| 0.01 + 0.003 * (i as f64 * 0.9).sin()).collect();
        let recov: Vec<f64> = (0..n - 1).map(|i| 0.3 + 0.1 * (i as f64 * 1.7).sin()).collect();
        let npl = forward_npl(&total, 25.0, &hazards, &recov, start()).unwrap();
        let seg = segment(total, npl);
        let mut prev = f64::INFINITY;
        let mut lambda = 1.0;
        for _ in 0..6 {
            let report = solve(
                &seg,
                FilterParams::new(0.3, lambda).unwrap(),
                &SolverSettings::default(),
            )
            .unwrap();
            let worst = report
                .solution
                .recoveries
                .iter()
                .fold(0.0f64, |a, r| a.max((r - 0.3).abs()));
            assert!(worst <= prev + 1e-9, "lambda {lambda}: {worst} vs {prev}");
            prev = worst;
            lambda *= 2.0;
        }
    }

    #[test]
    fn annualize_closed_form_constant_hazard() {
        let pd = annualize(&[0.01; 24], start()).unwrap();
        let expected = 1.0 - 0.99f64.powi(12);
        for v in &pd.pd {
            assert!((v - expected).abs() < 1e-12);
        }
        assert_eq!(pd.start, MonthIndex::new(2015, 12).unwrap());
        assert_eq!(pd.pd.len(), 24 - 11);
    }

    #[test]
    fn annualize_zero_hazards_gives_zero_pd() {
        let pd = annualize(&[0.0; 12], start()).unwrap();
        assert_eq!(pd.pd, vec![0.0]);
    }

    #[test]
    fn annualize_absorbing_default() {
        let mut hazards = vec![0.01; 12];
        hazards[5] = 1.0;
        let pd = annualize(&hazards, start()).unwrap();
        assert_eq!(pd.pd, vec![1.0]);
    }

    #[test]
    fn annualize_too_short_errors() {
        assert!(annualize(&[0.01; 11], start()).is_err());
    }

    #[test]
    fn annualize_monotone_in_each_hazard() {
        let base = vec![0.02; 20];
        let pd0 = annualize(&base, start()).unwrap();
        for k in 0..20 {
            let mut h = base.clone();
            h[k] += 0.01;
            let pd1 = annualize(&h, start()).unwrap();
            for (a, b) in pd0.pd.iter().zip(&pd1.pd) {
                assert!(b + 1e-15 >= *a);
            }
        }
    }
}
