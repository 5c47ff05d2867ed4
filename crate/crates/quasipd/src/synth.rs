//! Synthetic segments with known ground truth, built by running the balance
//! equation forward. Every estimation claim in the test suite checks against
//! bundles produced here.

use serde::{Deserialize, Serialize};

use crate::balance::{forward_npl, FilterSolution};
use crate::error::{Error, Result};
use crate::filter::{annualize, hazard_from_logit, logit_hazard, AnnualPdSeries};
use crate::timeseries::{MonthIndex, MonthlySeries, SegmentSeries};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum DebtPath {
    Constant { level: f64 },
    Geometric { level: f64, monthly_growth: f64 },
}

/// A Gaussian bump in logit space; positive height raises the hazard.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Hump {
    pub center_month: f64,
    pub height: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum HazardTruth {
    Constant { p: f64 },
    /// Affine base in logit space plus Gaussian bumps.
    Humped { base: f64, slope: f64, humps: Vec<Hump> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum RecoveryTruth {
    Constant { rr: f64 },
    /// rr plus uniform noise in [-amplitude, amplitude] from a seeded
    /// xorshift64* generator (portable across implementations).
    Noisy { rr: f64, amplitude: f64, seed: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub months: usize,
    pub start: MonthIndex,
    pub debt_path: DebtPath,
    pub hazard_truth: HazardTruth,
    pub recovery_truth: RecoveryTruth,
    pub npl_first: f64,
}

#[derive(Debug, Clone)]
pub struct SynthBundle {
    pub segment: SegmentSeries,
    pub truth: FilterSolution,
    pub true_annual_pd: AnnualPdSeries,
}

/// xorshift64* with the canonical multiplier; output mapped to [-1, 1].
pub(crate) struct Xorshift64Star {
    state: u64,
}

impl Xorshift64Star {
    pub fn new(seed: u64) -> Self {
        Xorshift64Star {
            state: if seed == 0 { 0x9E3779B97F4A7C15 } else { seed },
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut s = self.state;
        s ^= s >> 12;
        s ^= s << 25;
        s ^= s >> 27;
        self.state = s;
        s.wrapping_mul(0x2545F4914F6CDD1D)
    }

    /// Uniform in [-1, 1) with 53-bit resolution.
    pub fn next_symmetric(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    }
}

fn debt_values(path: &DebtPath, n: usize) -> Result<Vec<f64>> {
    match path {
        DebtPath::Constant { level } => {
            if *level <= 0.0 {
                return Err(Error::InvalidInput(format!("debt level {level} must be > 0")));
            }
            Ok(vec![*level; n])
        }
        DebtPath::Geometric { level, monthly_growth } => {
            if *level <= 0.0 {
                return Err(Error::InvalidInput(format!("debt level {level} must be > 0")));
            }
            Ok((0..n)
                .map(|i| level * (1.0 + monthly_growth).powi(i as i32))
                .collect())
        }
    }
}

fn hazard_values(truth: &HazardTruth, count: usize) -> Result<Vec<f64>> {
    let hazards: Vec<f64> = match truth {
        HazardTruth::Constant { p } => vec![*p; count],
        HazardTruth::Humped { base, slope, humps } => {
            if !(*base > 0.0 && *base < 1.0) {
                return Err(Error::InvalidInput(format!("base hazard {base} outside (0,1)")));
            }
            let x0 = logit_hazard(*base);
            (0..count)
                .map(|i| {
                    let mut x = x0 + slope * i as f64;
                    for h in humps {
                        let z = (i as f64 - h.center_month) / h.width;
                        // higher hazard means lower logit
                        x -= h.height * (-0.5 * z * z).exp();
                    }
                    hazard_from_logit(x)
                })
                .collect()
        }
    };
    for (i, p) in hazards.iter().enumerate() {
        if !(*p > 0.0 && *p < 1.0) {
            return Err(Error::InvalidInput(format!(
                "generated hazard P[{i}] = {p} outside (0,1); adjust the spec"
            )));
        }
    }
    Ok(hazards)
}

fn recovery_values(truth: &RecoveryTruth, count: usize) -> Vec<f64> {
    match truth {
        RecoveryTruth::Constant { rr } => vec![*rr; count],
        RecoveryTruth::Noisy { rr, amplitude, seed } => {
            let mut rng = Xorshift64Star::new(*seed);
            (0..count).map(|_| rr + amplitude * rng.next_symmetric()).collect()
        }
    }
}

/// Deterministically build a segment plus its ground truth.
pub fn generate(spec: &SynthSpec) -> Result<SynthBundle> {
    if spec.months < 13 {
        return Err(Error::InvalidInput(format!(
            "need >= 13 months for an annualized truth, got {}",
            spec.months
        )));
    }
    let n = spec.months;
    let total = debt_values(&spec.debt_path, n)?;
    let hazards = hazard_values(&spec.hazard_truth, n - 1)?;
    let recoveries = recovery_values(&spec.recovery_truth, n - 1);
    let npl = forward_npl(&total, spec.npl_first, &hazards, &recoveries, spec.start).map_err(
        |e| match e {
            Error::InfeasiblePath { month, reason } => Error::InfeasiblePath {
                month,
                reason: format!("{reason}; lower the hazard or raise the recovery in the spec"),
            },
            other => other,
        },
    )?;
    let segment = SegmentSeries::new(
        "synthetic",
        MonthlySeries::from_values(spec.start, total)?,
        MonthlySeries::from_values(spec.start, npl)?,
    )?;
    let true_annual_pd = annualize(&hazards, spec.start)?;
    let truth = FilterSolution::new(spec.start, hazards, recoveries)?;
    Ok(SynthBundle {
        segment,
        truth,
        true_annual_pd,
    })
}

/// Steady-state NPL level for constant inputs: p * E / (p + rr).
pub fn steady_state_npl(p: f64, rr: f64, level: f64) -> f64 {
    p * level / (p + rr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balance::implied_recoveries;

    fn start() -> MonthIndex {
        MonthIndex::new(2010, 1).unwrap()
    }

    #[test]
    fn steady_state_spec_keeps_npl_flat() {
        let p = 0.003;
        let rr = 0.3442; // long-run recovery anchor used throughout the fixtures
        let level = 1000.0;
        let npl1 = steady_state_npl(p, rr, level);
        assert!((npl1 - 8.637).abs() < 5e-3);
        let spec = SynthSpec {
            months: 36,
            start: start(),
            debt_path: DebtPath::Constant { level },
            hazard_truth: HazardTruth::Constant { p },
            recovery_truth: RecoveryTruth::Constant { rr },
            npl_first: npl1,
        };
        let bundle = generate(&spec).unwrap();
        let npl = bundle.segment.overdue.dense().unwrap();
        for v in &npl {
            assert!((v - npl1).abs() < 1e-12);
        }
    }

    #[test]
    fn bundle_is_internally_consistent() {
        let spec = SynthSpec {
            months: 60,
            start: start(),
            debt_path: DebtPath::Geometric { level: 500.0, monthly_growth: 0.005 },
            hazard_truth: HazardTruth::Humped {
                base: 0.004,
                slope: 0.002,
                humps: vec![Hump { center_month: 25.0, height: 0.8, width: 5.0 }],
            },
            recovery_truth: RecoveryTruth::Noisy { rr: 0.3, amplitude: 0.05, seed: 42 },
            npl_first: 10.0,
        };
        let bundle = generate(&spec).unwrap();
        let total = bundle.segment.total.dense().unwrap();
        let npl = bundle.segment.overdue.dense().unwrap();
        let r = implied_recoveries(&total, &npl, &bundle.truth.hazards, start()).unwrap();
        for (a, b) in r.iter().zip(&bundle.truth.recoveries) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let spec = SynthSpec {
            months: 40,
            start: start(),
            debt_path: DebtPath::Constant { level: 1000.0 },
            hazard_truth: HazardTruth::Constant { p: 0.005 },
            recovery_truth: RecoveryTruth::Noisy { rr: 0.35, amplitude: 0.1, seed: 7 },
            npl_first: 12.0,
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.truth.recoveries, b.truth.recoveries);
        assert_eq!(a.segment.overdue.dense().unwrap(), b.segment.overdue.dense().unwrap());
    }

    #[test]
    fn infeasible_spec_errors() {
        // shrinking debt stock with a large hazard pushes NPL above E
        let spec = SynthSpec {
            months: 24,
            start: start(),
            debt_path: DebtPath::Geometric { level: 100.0, monthly_growth: -0.5 },
            hazard_truth: HazardTruth::Constant { p: 0.5 },
            recovery_truth: RecoveryTruth::Constant { rr: 0.001 },
            npl_first: 50.0,
        };
        let err = generate(&spec).unwrap_err();
        assert!(matches!(err, Error::InfeasiblePath { .. }));
    }

    #[test]
    fn humped_truth_has_controlled_extrema() {
        let spec = SynthSpec {
            months: 120,
            start: start(),
            debt_path: DebtPath::Constant { level: 1000.0 },
            hazard_truth: HazardTruth::Humped {
                base: 0.003,
                slope: 0.0,
                humps: vec![
                    Hump { center_month: 25.0, height: 1.0, width: 4.0 },
                    Hump { center_month: 60.0, height: 1.2, width: 4.0 },
                    Hump { center_month: 95.0, height: 0.9, width: 4.0 },
                ],
            },
            recovery_truth: RecoveryTruth::Constant { rr: 0.3 },
            npl_first: 9.0,
        };
        let bundle = generate(&spec).unwrap();
        // three bumps -> three local maxima in the annual PD
        let pd = &bundle.true_annual_pd.pd;
        let maxima = (1..pd.len() - 1)
            .filter(|&i| pd[i] > pd[i - 1] && pd[i] > pd[i + 1])
            .count();
        assert_eq!(maxima, 3);
    }
}
