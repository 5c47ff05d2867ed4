//! Command-line front door: ingestion -> gap fill -> solve -> calibrate ->
//! validate -> batch -> regress, plus simulation and plotting.
//!
//! Exit codes: 0 ok, 2 input error, 3 io error, 4 infeasible, 5 numerical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::calibrate::{self, CalibrationSpec, CountMode};
use crate::error::{Error, Result};
use crate::filter::{annualize, solve, AnnualPdSeries, FilterParams, SolverSettings};
use crate::hp::{fill_gaps, HpParams};
use crate::ingest::{
    self, load_factors_csv, load_reference_df_csv, load_weights_csv, DatasetManifest,
    DependentTransform,
};
use crate::macromodel::{fit_ols, lag, DesignMatrix};
use crate::numfmt::fmt_sig;
use crate::synth::{self, SynthSpec};
use crate::timeseries::{mean_and_cv, weighted_sum, MonthIndex, MonthlySeries, SegmentSeries};
use crate::validation;

#[derive(Parser)]
#[command(name = "quasipd", version, about = "Indirect default-probability estimation from debt and overdue-debt series")]
struct Cli {
    /// Dataset manifest (JSON)
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Log level (error, warn, info, debug, trace)
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate monthly hazards and recoveries for one segment
    Fit(FitArgs),
    /// Determine (RR, lambda) from the anchor PD and extrema count
    Calibrate(CalibrateArgs),
    /// Compound a monthly hazard CSV into annual PD
    Annualize(AnnualizeArgs),
    /// Compare a PD series against the reference default frequencies
    Validate(ValidateArgs),
    /// Mean PD and coefficient of variation for every manifest segment
    IndustryBatch(IndustryBatchArgs),
    /// Portfolio-weighted aggregate of the manifest segments
    Aggregate,
    /// OLS macro regression of a PD series on configured factors
    Regress(RegressArgs),
    /// Generate a synthetic segment with known ground truth
    Simulate(SimulateArgs),
    /// Emit an SVG line chart and a gnuplot-compatible data file
    Plot(PlotArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Segment id from the manifest
    #[arg(long)]
    segment: String,
    /// Long-run recovery share (falls back to manifest config)
    #[arg(long)]
    rr: Option<f64>,
    /// Penalty weight (falls back to manifest config)
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    segment: String,
    #[arg(long)]
    pd_ttc: Option<f64>,
    #[arg(long)]
    window_start_n: Option<usize>,
    #[arg(long)]
    target_extrema: Option<usize>,
    /// Comma-separated ascending lambda grid
    #[arg(long)]
    lambda_grid: Option<String>,
    #[arg(long)]
    rr_tolerance: Option<f64>,
    #[arg(long)]
    prominence: Option<f64>,
    /// both, min-only, or max-only
    #[arg(long)]
    count_mode: Option<String>,
}

#[derive(Args)]
struct AnnualizeArgs {
    /// Monthly hazard CSV with header `month,P`
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Annual PD CSV with header `month,PD`
    #[arg(long)]
    pd: PathBuf,
    /// Reference DF CSV; falls back to the manifest's reference_df
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Args)]
struct IndustryBatchArgs {
    #[arg(long)]
    rr: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// 1-based month number where the statistics window starts
    #[arg(long)]
    window_start_n: Option<usize>,
}

#[derive(Args)]
struct RegressArgs {
    /// Annual PD CSV with header `month,PD`
    #[arg(long)]
    pd: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Synthetic spec JSON; a built-in default bundle is used when absent
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Monthly value CSV (e.g. a PD.csv from `fit`)
    #[arg(long)]
    input: PathBuf,
    /// Optional overlay series (e.g. a reference DF CSV)
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Base name for <name>.svg and <name>.dat
    #[arg(long, default_value = "plot")]
    name: String,
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .init();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    fs::create_dir_all(&cli.out).map_err(|e| Error::Io {
        path: cli.out.display().to_string(),
        source: e,
    })?;
    match &cli.command {
        Command::Fit(args) => cmd_fit(cli, args),
        Command::Calibrate(args) => cmd_calibrate(cli, args),
        Command::Annualize(args) => cmd_annualize(cli, args),
        Command::Validate(args) => cmd_validate(cli, args),
        Command::IndustryBatch(args) => cmd_industry_batch(cli, args),
        Command::Aggregate => cmd_aggregate(cli),
        Command::Regress(args) => cmd_regress(cli, args),
        Command::Simulate(args) => cmd_simulate(cli, args),
        Command::Plot(args) => cmd_plot(cli, args),
    }
}

fn manifest(cli: &Cli) -> Result<DatasetManifest> {
    let path = cli
        .manifest
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("this command requires --manifest".into()))?;
    DatasetManifest::load(path)
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numerical(format!("json serialization failed: {e}")))?;
    text.push('\n');
    write_text(path, &text)
}

/// Gap-fill both stocks of a segment with the configured HP lambda.
fn prepared_segment(m: &DatasetManifest, segment_id: &str) -> Result<SegmentSeries> {
    let seg = m.load_segment(segment_id)?;
    if !seg.has_gaps() {
        return Ok(seg);
    }
    let hp = HpParams::new(m.config.hp_lambda.unwrap_or(HpParams::default().lambda_hp))?;
    SegmentSeries::new(
        seg.segment_id.clone(),
        fill_gaps(&seg.total, hp)?,
        fill_gaps(&seg.overdue, hp)?,
    )
}

fn filter_params(m: &DatasetManifest, rr: Option<f64>, lambda: Option<f64>) -> Result<FilterParams> {
    match (rr, lambda, m.config.filter) {
        (Some(rr), Some(lambda), _) => FilterParams::new(rr, lambda),
        (None, None, Some(p)) => Ok(p),
        (rr, lambda, cfg) => {
            let base = cfg.ok_or_else(|| {
                Error::InvalidInput(
                    "filter parameters missing: pass --rr and --lambda or set config.filter".into(),
                )
            })?;
            FilterParams::new(rr.unwrap_or(base.rr), lambda.unwrap_or(base.lambda))
        }
    }
}

fn solver_settings(m: &DatasetManifest) -> SolverSettings {
    m.config.solver.clone().unwrap_or_default()
}

fn hazard_series(solution_start: MonthIndex, values: &[f64]) -> MonthlySeries {
    MonthlySeries::from_values(solution_start, values.to_vec()).expect("finite by construction")
}

fn cmd_fit(cli: &Cli, args: &FitArgs) -> Result<()> {
    let m = manifest(cli)?;
    let seg = prepared_segment(&m, &args.segment)?;
    let params = filter_params(&m, args.rr, args.lambda)?;
    let report = solve(&seg, params, &solver_settings(&m))?;
    let pd = annualize(&report.solution.hazards, report.solution.start)?;

    ingest::write_series_csv(
        &cli.out.join("P.csv"),
        &hazard_series(report.solution.start, &report.solution.hazards),
        "P",
    )?;
    ingest::write_series_csv(
        &cli.out.join("R.csv"),
        &hazard_series(report.solution.start, &report.solution.recoveries),
        "R",
    )?;
    ingest::write_series_csv(&cli.out.join("PD.csv"), &pd.to_monthly_series(), "PD")?;
    write_json(
        &cli.out.join("fit_report.json"),
        &json!({
            "segment": args.segment,
            "rr": params.rr,
            "lambda": params.lambda,
            "objective": report.objective,
            "gradient_norm": report.gradient_norm,
            "iterations": report.iterations,
            "months": seg.len(),
        }),
    )
}

fn parse_count_mode(text: &str) -> Result<CountMode> {
    match text {
        "both" => Ok(CountMode::Both),
        "min-only" => Ok(CountMode::MinOnly),
        "max-only" => Ok(CountMode::MaxOnly),
        other => Err(Error::InvalidInput(format!(
            "count mode {other:?}; expected both, min-only, or max-only"
        ))),
    }
}

fn calibration_spec(m: &DatasetManifest, args: &CalibrateArgs) -> Result<CalibrationSpec> {
    let mut spec = m.config.calibration.clone().unwrap_or_default();
    if let Some(v) = args.pd_ttc {
        spec.pd_ttc = v;
    }
    if let Some(v) = args.window_start_n {
        spec.window_start_n = v;
    }
    if let Some(v) = args.target_extrema {
        spec.target_extrema_m = v;
    }
    if let Some(text) = &args.lambda_grid {
        spec.lambda_grid = text
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidInput(format!("bad lambda {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
    }
    if let Some(v) = args.rr_tolerance {
        spec.rr_tolerance = v;
    }
    if let Some(v) = args.prominence {
        spec.prominence = v;
    }
    if let Some(text) = &args.count_mode {
        spec.count_mode = parse_count_mode(text)?;
    }
    spec.validate()?;
    Ok(spec)
}

fn cmd_calibrate(cli: &Cli, args: &CalibrateArgs) -> Result<()> {
    let m = manifest(cli)?;
    let seg = prepared_segment(&m, &args.segment)?;
    let spec = calibration_spec(&m, args)?;
    let settings = solver_settings(&m);
    let out = cli.out.join("calibration.json");
    match calibrate::calibrate(&seg, &spec, &settings) {
        Ok(result) => write_json(
            &out,
            &json!({
                "segment": args.segment,
                "rr": result.params.rr,
                "lambda": result.params.lambda,
                "achieved_mean_pd": result.achieved_mean_pd,
                "achieved_extrema": result.achieved_extrema,
                "pd_ttc": spec.pd_ttc,
                "trace": result.per_lambda_trace,
            }),
        ),
        Err(failure) => {
            // trace file is written even on failure
            write_json(
                &out,
                &json!({
                    "segment": args.segment,
                    "error": failure.reason.to_string(),
                    "pd_ttc": spec.pd_ttc,
                    "trace": failure.per_lambda_trace,
                }),
            )?;
            Err(failure.reason)
        }
    }
}

/// Read a single-column monthly CSV (`month,<header>`).
fn load_value_csv(path: &Path, header: &str) -> Result<MonthlySeries> {
    let content = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut values = Vec::new();
    let mut start: Option<MonthIndex> = None;
    for (idx, line) in content.lines().enumerate() {
        if idx == 0 {
            let expected = format!("month,{header}");
            if line.trim() != expected {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: 1,
                    reason: format!("expected header {expected:?}, found {:?}", line.trim()),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (month_text, value_text) = line.split_once(',').ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            reason: "expected 2 fields".into(),
        })?;
        let month = MonthIndex::parse(month_text.trim())?;
        if start.is_none() {
            start = Some(month);
        }
        let expected = start.unwrap().plus(values.len() as i64);
        if month != expected {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                reason: format!("expected month {expected}, found {month}"),
            });
        }
        let value_text = value_text.trim();
        if value_text.is_empty() {
            values.push(None);
        } else {
            let v: f64 = value_text.parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                reason: format!("bad value {value_text:?}"),
            })?;
            values.push(Some(v));
        }
    }
    let start = start.ok_or_else(|| Error::Parse {
        path: path.display().to_string(),
        line: 1,
        reason: "no data rows".into(),
    })?;
    MonthlySeries::new(start, values)
}

fn cmd_annualize(cli: &Cli, args: &AnnualizeArgs) -> Result<()> {
    let hazards = load_value_csv(&args.input, "P")?;
    let dense = hazards.dense()?;
    let pd = annualize(&dense, hazards.start())?;
    ingest::write_series_csv(&cli.out.join("PD.csv"), &pd.to_monthly_series(), "PD")
}

fn cmd_validate(cli: &Cli, args: &ValidateArgs) -> Result<()> {
    let pd_series = load_value_csv(&args.pd, "PD")?;
    let pd = AnnualPdSeries {
        start: pd_series.start(),
        pd: pd_series.dense()?,
    };
    let reference = match &args.reference {
        Some(path) => load_reference_df_csv(path, "reference")?,
        None => {
            let m = manifest(cli)?;
            let path = m.reference_df.clone().ok_or_else(|| {
                Error::InvalidInput("no --reference given and manifest has no reference_df".into())
            })?;
            load_reference_df_csv(&path, "reference")?
        }
    };
    let report = validation::validate(&pd, &reference)?;
    println!("R2 = {}", fmt_sig(report.r_squared));
    write_json(
        &cli.out.join("validation.json"),
        &json!({
            "r_squared": report.r_squared,
            "aligned_months": report.aligned_months,
            "mean_model": report.mean_model,
            "mean_reference": report.mean_reference,
        }),
    )
}

fn cmd_industry_batch(cli: &Cli, args: &IndustryBatchArgs) -> Result<()> {
    let m = manifest(cli)?;
    if m.segments.is_empty() {
        return Err(Error::InvalidInput("manifest has no segments".into()));
    }
    // (RR, lambda) are calibrated once on the aggregate segment and frozen here
    let params = filter_params(&m, args.rr, args.lambda)?;
    let settings = solver_settings(&m);
    let window_start_n = args
        .window_start_n
        .or(m.config.stats_window_start_n)
        .unwrap_or(12);
    let mut out = String::from("segment_id,mean_pd,cv,error\n");
    for segment_id in m.segments.keys() {
        let row = batch_row(&m, segment_id, params, &settings, window_start_n);
        match row {
            Ok((mean, cv)) => {
                out.push_str(&format!("{segment_id},{},{},\n", fmt_sig(mean), fmt_sig(cv)))
            }
            Err(e) => out.push_str(&format!("{segment_id},,,{}\n", e.to_string().replace(',', ";"))),
        }
    }
    write_text(&cli.out.join("table.csv"), &out)
}

fn batch_row(
    m: &DatasetManifest,
    segment_id: &str,
    params: FilterParams,
    settings: &SolverSettings,
    window_start_n: usize,
) -> Result<(f64, f64)> {
    let seg = prepared_segment(m, segment_id)?;
    let report = solve(&seg, params, settings)?;
    let pd = annualize(&report.solution.hazards, report.solution.start)?;
    let skip = window_start_n.saturating_sub(12).min(pd.pd.len().saturating_sub(2));
    let windowed = MonthlySeries::from_values(pd.start.plus(skip as i64), pd.pd[skip..].to_vec())?;
    mean_and_cv(&windowed)
}

fn cmd_aggregate(cli: &Cli) -> Result<()> {
    let m = manifest(cli)?;
    let weights_path = m
        .weights
        .clone()
        .ok_or_else(|| Error::InvalidInput("manifest has no weights file".into()))?;
    let weights = load_weights_csv(&weights_path)?;
    let total_weight: f64 = weights.iter().map(|(_, w)| w).sum();
    let mut totals = Vec::new();
    let mut overdues = Vec::new();
    let mut normalized = Vec::new();
    for (segment_id, w) in &weights {
        let seg = prepared_segment(&m, segment_id)?;
        totals.push(seg.total);
        overdues.push(seg.overdue);
        normalized.push(w / total_weight);
    }
    let e = weighted_sum(&totals, &normalized)?;
    let npl = weighted_sum(&overdues, &normalized)?;
    let aggregate = SegmentSeries::new("aggregate", e, npl)?;
    ingest::write_segment_csv(&cli.out.join("aggregate.csv"), &aggregate)?;
    write_json(
        &cli.out.join("aggregate_meta.json"),
        &json!({
            "weights_raw": weights.iter().map(|(id, w)| json!({"segment_id": id, "weight": w})).collect::<Vec<_>>(),
            "weights_normalized": weights
                .iter()
                .zip(&normalized)
                .map(|((id, _), w)| json!({"segment_id": id, "weight": w}))
                .collect::<Vec<_>>(),
            "normalization_divisor": total_weight,
        }),
    )
}

fn cmd_regress(cli: &Cli, args: &RegressArgs) -> Result<()> {
    let m = manifest(cli)?;
    let cfg = m.config.regression.clone().ok_or_else(|| {
        Error::InvalidInput("manifest config has no regression section".into())
    })?;
    let pd_series = load_value_csv(&args.pd, "PD")?;
    let factors = load_factors_csv(&cfg.factors)?;
    if factors.is_empty() {
        return Err(Error::InvalidInput("factor file has no factor columns".into()));
    }

    // apply configured lags, then restrict to months where everything is present
    let lagged: Vec<(String, MonthlySeries)> = factors
        .into_iter()
        .map(|(name, series)| {
            let shift = cfg.lags.get(&name).copied().unwrap_or(0);
            let label = if shift > 0 { format!("{name}_lag{shift}") } else { name.clone() };
            (label, lag(&series, shift))
        })
        .collect();

    let start = lagged
        .iter()
        .map(|(_, s)| s.start())
        .chain(std::iter::once(pd_series.start()))
        .max()
        .unwrap();
    let end = lagged
        .iter()
        .map(|(_, s)| s.end())
        .chain(std::iter::once(pd_series.end()))
        .min()
        .unwrap();
    if end.months_since(start) < 0 {
        return Err(Error::DisjointSpans);
    }

    let mut months = Vec::new();
    let mut y = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); lagged.len()];
    let n_span = (end.months_since(start) + 1) as usize;
    'months: for k in 0..n_span {
        let month = start.plus(k as i64);
        let Some(pd) = pd_series.get(month) else { continue };
        let mut row = Vec::with_capacity(lagged.len());
        for (_, s) in &lagged {
            match s.get(month) {
                Some(v) => row.push(v),
                None => continue 'months,
            }
        }
        let dep = match cfg.dependent {
            DependentTransform::Level => pd,
            DependentTransform::Logit => {
                if !(pd > 0.0 && pd < 1.0) {
                    return Err(Error::Domain(format!(
                        "logit transform needs PD in (0,1), got {pd} at {month}"
                    )));
                }
                (pd / (1.0 - pd)).ln()
            }
        };
        months.push(month);
        y.push(dep);
        for (c, v) in columns.iter_mut().zip(row) {
            c.push(v);
        }
    }

    let names: Vec<String> = lagged.iter().map(|(n, _)| n.clone()).collect();
    let design = DesignMatrix::new(names, columns)?;
    let report = fit_ols(&design, &y)?;

    let mut coef_csv = String::from("variable,coefficient\n");
    for (name, value) in &report.coefficients {
        coef_csv.push_str(&format!("{name},{}\n", fmt_sig(*value)));
    }
    write_text(&cli.out.join("coefficients.csv"), &coef_csv)?;
    write_json(
        &cli.out.join("regression.json"),
        &json!({
            "dependent": match cfg.dependent {
                DependentTransform::Level => "level",
                DependentTransform::Logit => "logit",
            },
            "observations": y.len(),
            "first_month": months.first().map(|m| m.to_string()),
            "last_month": months.last().map(|m| m.to_string()),
            "coefficients": report
                .coefficients
                .iter()
                .map(|(n, v)| json!({"variable": n, "coefficient": v}))
                .collect::<Vec<_>>(),
            "r_squared": report.r_squared,
            "bp_statistic": report.bp_statistic,
            "bp_p_value": report.bp_p_value,
        }),
    )
}

/// Built-in bundle used when `simulate` is run without a spec: three hazard
/// humps over ~11 years, constant recoveries near the long-run anchor.
pub fn default_synth_spec() -> SynthSpec {
    SynthSpec {
        months: 130,
        start: MonthIndex::new(2009, 1).expect("valid"),
        debt_path: synth::DebtPath::Geometric {
            level: 10_000.0,
            monthly_growth: 0.004,
        },
        hazard_truth: synth::HazardTruth::Humped {
            base: 0.0025,
            slope: 0.0,
            humps: vec![
                synth::Hump { center_month: 18.0, height: 0.9, width: 5.0 },
                synth::Hump { center_month: 65.0, height: 1.1, width: 6.0 },
                synth::Hump { center_month: 105.0, height: 0.8, width: 5.0 },
            ],
        },
        recovery_truth: synth::RecoveryTruth::Constant { rr: 0.3442 },
        npl_first: 80.0,
    }
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let spec = match &args.spec {
        Some(path) => {
            let content = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            serde_json::from_str(&content).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: e.line(),
                reason: format!("bad synth spec: {e}"),
            })?
        }
        None => default_synth_spec(),
    };
    let bundle = synth::generate(&spec)?;
    ingest::write_segment_csv(&cli.out.join("segment.csv"), &bundle.segment)?;

    // truth CSV: month,P,R,PD (PD empty for the first 11 hazard months)
    let mut truth = String::from("month,P,R,PD\n");
    for (i, p) in bundle.truth.hazards.iter().enumerate() {
        let month = bundle.truth.start.plus(i as i64);
        let pd = if i >= 11 {
            fmt_sig(bundle.true_annual_pd.pd[i - 11])
        } else {
            String::new()
        };
        truth.push_str(&format!(
            "{month},{},{},{pd}\n",
            fmt_sig(*p),
            fmt_sig(bundle.truth.recoveries[i])
        ));
    }
    write_text(&cli.out.join("truth.csv"), &truth)?;
    // the true annual PD doubles as an observed default-frequency series
    ingest::write_series_csv(
        &cli.out.join("reference_df.csv"),
        &bundle.true_annual_pd.to_monthly_series(),
        "DF",
    )
}

fn cmd_plot(cli: &Cli, args: &PlotArgs) -> Result<()> {
    let main = load_value_csv_any_header(&args.input)?;
    let reference = match &args.reference {
        Some(path) => Some(load_value_csv_any_header(path)?),
        None => None,
    };
    let mut series = vec![main];
    if let Some(r) = reference {
        series.push(r);
    }
    let svg = render_svg(&series);
    write_text(&cli.out.join(format!("{}.svg", args.name)), &svg)?;

    let start = series.iter().map(|(_, s)| s.start()).min().unwrap();
    let end = series.iter().map(|(_, s)| s.end()).max().unwrap();
    let mut dat = format!(
        "# month {}\n",
        series.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>().join(" ")
    );
    let n_span = (end.months_since(start) + 1) as usize;
    for k in 0..n_span {
        let month = start.plus(k as i64);
        let mut row = month.to_string();
        for (_, s) in &series {
            match s.get(month) {
                Some(v) => row.push_str(&format!(" {}", fmt_sig(v))),
                None => row.push_str(" ?"),
            }
        }
        dat.push_str(&row);
        dat.push('\n');
    }
    write_text(&cli.out.join(format!("{}.dat", args.name)), &dat)
}

/// Like `load_value_csv` but takes whatever single value column the header
/// declares, returning (column name, series).
fn load_value_csv_any_header(path: &Path) -> Result<(String, MonthlySeries)> {
    let content = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let header = content.lines().next().unwrap_or("").trim();
    let name = match header.split_once(',') {
        Some(("month", name)) if !name.is_empty() && !name.contains(',') => name.to_string(),
        _ => {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: 1,
                reason: format!("expected header month,<name>, found {header:?}"),
            })
        }
    };
    let series = load_value_csv(path, &name)?;
    Ok((name, series))
}

fn render_svg(series: &[(String, MonthlySeries)]) -> String {
    const WIDTH: f64 = 800.0;
    const HEIGHT: f64 = 400.0;
    const MARGIN: f64 = 50.0;
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

    let start = series.iter().map(|(_, s)| s.start()).min().unwrap();
    let end = series.iter().map(|(_, s)| s.end()).max().unwrap();
    let span = end.months_since(start).max(1) as f64;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, s) in series {
        for v in s.values().iter().flatten() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }

    let x = |month: MonthIndex| {
        MARGIN + (WIDTH - 2.0 * MARGIN) * month.months_since(start) as f64 / span
    };
    let y = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);

    let mut svg = format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
        ),
        w = WIDTH,
        h = HEIGHT
    );
    // axes
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    ));
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN
    ));
    // axis labels: first/last month, min/max value
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\">{}</text>\n",
        MARGIN,
        HEIGHT - MARGIN + 20.0,
        start
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">{}</text>\n",
        WIDTH - MARGIN,
        HEIGHT - MARGIN + 20.0,
        end
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">{}</text>\n",
        MARGIN - 5.0,
        HEIGHT - MARGIN,
        fmt_sig(lo)
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">{}</text>\n",
        MARGIN - 5.0,
        MARGIN + 5.0,
        fmt_sig(hi)
    ));

    for (idx, (name, s)) in series.iter().enumerate() {
        let color = COLORS[idx % COLORS.len()];
        let mut points = Vec::new();
        for (i, v) in s.values().iter().enumerate() {
            if let Some(v) = v {
                let month = s.start().plus(i as i64);
                points.push(format!("{:.2},{:.2}", x(month), y(*v)));
            }
        }
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            points.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{name}</text>\n",
            WIDTH - MARGIN + 5.0,
            MARGIN + 15.0 * idx as f64
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Normalized weight map helper shared by tests.
pub fn normalize_weights(weights: &[(String, f64)]) -> BTreeMap<String, f64> {
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    weights
        .iter()
        .map(|(id, w)| (id.clone(), w / total))
        .collect()
}
