//! End-to-end runs behind the command-line subcommands. Every run writes its
//! resolved configuration next to its outputs, and outputs depend only on
//! the configuration and seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::baselines::{cross_validate_baseline, fit_baseline, BaselineKind};
use crate::calibrate::{optimize_params, Calibration, CalibrationSettings};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::evaluate::{self, mean_lead, EvaluationReport, LeadTime};
use crate::events::{build_windows, detect_events, DetectionWindowSet, EventSet};
use crate::mewma::{estimate_null, run_scan, scan_statistic, AlarmTrace, DetectorConfig};
use crate::panel::{generate_synthetic, AlignedPanel, PanelManifest, SyntheticPanelSpec};
use crate::select::{
    aggregate_replicates, forward_select, make_folds_with, replicate_seed, trace_rows, CrossValidator, FoldPlan,
    ReplicateAggregate, SelectionStep, SelectionTrace, StopReason, TRACE_HEADER,
};

pub const RESOLVED_CONFIG: &str = "config.resolved";

/// Writes through a temporary file so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn echo_config(config: &ExperimentConfig) -> Result<()> {
    create_dir(&config.output)?;
    write_atomic(&config.output.join(RESOLVED_CONFIG), &config.resolved_text())
}

/// Panel with its events and detection windows.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub panel: AlignedPanel,
    pub events: EventSet,
    pub windows: DetectionWindowSet,
}

impl Prepared {
    pub fn load(config: &ExperimentConfig) -> Result<Self> {
        let manifest = config
            .panel
            .as_ref()
            .ok_or_else(|| Error::Config("no panel manifest given (`panel = ...`)".into()))?;
        Self::from_panel(config, PanelManifest::read(manifest)?.load()?)
    }

    pub fn from_panel(config: &ExperimentConfig, panel: AlignedPanel) -> Result<Self> {
        let events = detect_events(&panel.gold().values, config.epsilon, config.min_duration)?;
        let windows = build_windows(&events, &config.window_options(), &panel.gold().values)?;
        Ok(Prepared { panel, events, windows })
    }

    pub fn fold_plan(&self, config: &ExperimentConfig, held_out: usize) -> Result<FoldPlan> {
        make_folds_with(&self.windows, self.panel.len(), held_out, config.fold_options())
    }

    pub fn candidates(&self, config: &ExperimentConfig) -> Result<Vec<String>> {
        let names = if config.candidates.is_empty() {
            self.panel.candidate_names()
        } else {
            config.candidates.clone()
        };
        check_names(&self.panel, &names)?;
        Ok(names)
    }
}

fn check_names(panel: &AlignedPanel, names: &[String]) -> Result<()> {
    for n in names {
        panel.series(n)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum DetectorSpec {
    /// MEWMA on `subset`; λ and `h` are calibrated when not given.
    Mewma {
        subset: Vec<String>,
        lambda: Option<f64>,
        threshold: Option<f64>,
    },
    WeekTrigger(u32),
    RiseTrigger(u32),
}

#[derive(Debug, Clone)]
pub struct DetectOutput {
    pub trace: AlarmTrace,
    pub report: EvaluationReport,
    pub leads: Vec<LeadTime>,
    pub calibration: Option<Calibration>,
}

/// Runs one detector over the whole panel and writes `trace.csv`,
/// `windows.csv`, `events.csv` and `summary.csv` (plus `calibration.csv`
/// when λ or `h` were calibrated).
pub fn run_detect(config: &ExperimentConfig, prepared: &Prepared, spec: &DetectorSpec) -> Result<DetectOutput> {
    let panel = &prepared.panel;
    let gold = &panel.gold().values;
    let mut calibration = None;
    let trace = match spec {
        DetectorSpec::Mewma {
            subset,
            lambda,
            threshold,
        } => {
            if subset.is_empty() {
                return Err(Error::Config("detector subset is empty".into()));
            }
            check_names(panel, subset)?;
            match (lambda, threshold) {
                (Some(l), Some(h)) => {
                    let null = estimate_null(panel, &prepared.events, subset)?;
                    run_scan(panel, &null, &DetectorConfig::new(subset.clone(), *l, *h)?)?
                }
                _ => {
                    let mut settings = config.calibration();
                    if let Some(l) = lambda {
                        settings.lambdas = vec![*l];
                    }
                    let cal = match threshold {
                        None => optimize_params(panel, &prepared.events, &prepared.windows, subset, &settings, config.seed)?,
                        Some(h) => fixed_threshold_curve(prepared, subset, &settings, *h)?,
                    };
                    let null = estimate_null(panel, &prepared.events, subset)?;
                    let cfg = DetectorConfig::new(subset.clone(), cal.best.lambda, cal.best.threshold)?;
                    calibration = Some(cal);
                    run_scan(panel, &null, &cfg)?
                }
            }
        }
        DetectorSpec::WeekTrigger(w) => BaselineKind::WeekTrigger.trace(panel.axis(), gold, *w)?,
        DetectorSpec::RiseTrigger(n) => BaselineKind::RiseTrigger.trace(panel.axis(), gold, *n)?,
    };
    let report = evaluate::score(&trace, &prepared.windows);
    let leads = evaluate::lead_vs_threshold(&trace, &prepared.windows, gold, config.reporting_epsilon);

    echo_config(config)?;
    let out = &config.output;
    trace.write_csv(&out.join("trace.csv"), panel.axis())?;
    prepared.windows.write_csv(&out.join("windows.csv"), panel.axis())?;
    report.write_events_csv(&out.join("events.csv"), panel.axis(), Some(&leads))?;
    report.write_summary_csv(&out.join("summary.csv"))?;
    if let Some(cal) = &calibration {
        cal.write_csv(&out.join("calibration.csv"))?;
    }
    Ok(DetectOutput {
        trace,
        report,
        leads,
        calibration,
    })
}

/// Best λ for a fixed `h`: every λ is scored without solving.
fn fixed_threshold_curve(prepared: &Prepared, subset: &[String], settings: &CalibrationSettings, h: f64) -> Result<Calibration> {
    let panel = &prepared.panel;
    let null = estimate_null(panel, &prepared.events, subset)?;
    let mut curve = Vec::new();
    for &lambda in &settings.lambdas {
        let (weeks, stat) = scan_statistic(panel, &null, lambda, &[0..panel.len()])?;
        let perf = evaluate::score(&AlarmTrace::from_statistic(weeks, stat, h), &prepared.windows).performance;
        curve.push(crate::calibrate::ConstraintCurvePoint {
            lambda,
            threshold: h,
            atfs: f64::NAN,
            performance: perf,
        });
    }
    let best = *curve
        .iter()
        .reduce(|a, b| if b.performance > a.performance { b } else { a })
        .ok_or_else(|| Error::Config("λ grid is empty".into()))?;
    Ok(Calibration {
        best,
        curve,
        failures: Vec::new(),
    })
}

const CHECKPOINT_DIR: &str = "replicates";

/// Stable 64-bit FNV-1a hash of the settings that affect selection.
fn fingerprint(config: &ExperimentConfig) -> u64 {
    let text: String = config
        .resolved_text()
        .lines()
        .filter(|l| !l.starts_with("output ") && !l.starts_with("replicates "))
        .collect();
    text.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn checkpoint_path(dir: &Path, replicate: usize) -> PathBuf {
    dir.join(format!("replicate_{replicate:03}.csv"))
}

fn write_checkpoint(path: &Path, fp: u64, trace: &SelectionTrace) -> Result<()> {
    let mut s = format!("# config {fp:016x}\n# stop {}\nstep,chosen,score\n", trace.stop);
    for (i, st) in trace.steps.iter().enumerate() {
        let _ = writeln!(s, "{},{},{}", i + 1, st.chosen, st.score);
    }
    write_atomic(path, &s)
}

/// A checkpoint written under the same settings, or `None`. Restored steps
/// carry no per-candidate scores.
fn read_checkpoint(path: &Path, fp: u64) -> Option<SelectionTrace> {
    let text = std::fs::read_to_string(path).ok()?;
    let mut lines = text.lines();
    if lines.next()? != format!("# config {fp:016x}") {
        return None;
    }
    let stop = match lines.next()?.strip_prefix("# stop ")? {
        "reached-k" => StopReason::ReachedK,
        "leveled-off" => StopReason::LeveledOff,
        "exhausted" => StopReason::Exhausted,
        _ => return None,
    };
    if lines.next()? != "step,chosen,score" {
        return None;
    }
    let mut steps = Vec::new();
    for line in lines {
        let mut f = line.split(',');
        let (_, chosen, score) = (f.next()?, f.next()?, f.next()?.parse().ok()?);
        steps.push(SelectionStep {
            chosen: chosen.to_string(),
            score,
            tried: Vec::new(),
        });
    }
    Some(SelectionTrace { steps, stop })
}

#[derive(Debug, Clone)]
pub struct SelectOutput {
    pub traces: Vec<SelectionTrace>,
    pub aggregate: ReplicateAggregate,
    /// Replicates restored from checkpoints rather than recomputed.
    pub resumed: usize,
}

/// Forward selection replicates in memory, without checkpoints.
pub fn select_replicates(config: &ExperimentConfig, prepared: &Prepared) -> Result<Vec<SelectionTrace>> {
    let cv = selection_validator(config, prepared)?;
    let candidates = prepared.candidates(config)?;
    (0..config.replicates)
        .into_par_iter()
        .map(|r| forward_select(&cv, &candidates, &config.selection(), replicate_seed(config.seed, r)))
        .collect()
}

fn selection_validator(config: &ExperimentConfig, prepared: &Prepared) -> Result<CrossValidator> {
    let plan = prepared.fold_plan(config, config.folds.held_out())?;
    CrossValidator::new(
        &prepared.panel,
        &prepared.windows,
        plan,
        &prepared.candidates(config)?,
        config.cv_settings(),
    )
}

/// Runs the selection replicates, resuming from any checkpoint files, and
/// writes `selection_traces.csv` and `aggregate.csv`.
pub fn run_select(config: &ExperimentConfig, prepared: &Prepared) -> Result<SelectOutput> {
    echo_config(config)?;
    let dir = config.output.join(CHECKPOINT_DIR);
    create_dir(&dir)?;
    let fp = fingerprint(config);
    let restored: Vec<Option<SelectionTrace>> = (0..config.replicates)
        .map(|r| read_checkpoint(&checkpoint_path(&dir, r), fp))
        .collect();
    let resumed = restored.iter().filter(|t| t.is_some()).count();

    let cv = if resumed < config.replicates {
        Some(selection_validator(config, prepared)?)
    } else {
        None
    };
    let candidates = prepared.candidates(config)?;
    let traces = restored
        .into_par_iter()
        .enumerate()
        .map(|(r, restored)| match restored {
            Some(t) => Ok(t),
            None => {
                let cv = cv.as_ref().expect("validator built when replicates are missing");
                let t = forward_select(cv, &candidates, &config.selection(), replicate_seed(config.seed, r))?;
                write_checkpoint(&checkpoint_path(&dir, r), fp, &t)?;
                Ok(t)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = String::from(TRACE_HEADER);
    for (r, t) in traces.iter().enumerate() {
        rows.push_str(&trace_rows(r, t));
    }
    write_atomic(&config.output.join("selection_traces.csv"), &rows)?;
    let aggregate = aggregate_replicates(&traces, config.k_max)?;
    aggregate.write_csv(&config.output.join("aggregate.csv"))?;
    Ok(SelectOutput {
        traces,
        aggregate,
        resumed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Optimized,
    WeekTrigger,
    RiseTrigger,
    UnivariateGold,
}

impl Model {
    pub const ALL: [Model; 4] = [Model::Optimized, Model::WeekTrigger, Model::RiseTrigger, Model::UnivariateGold];

    pub fn name(self) -> &'static str {
        match self {
            Model::Optimized => "optimized",
            Model::WeekTrigger => "week-trigger",
            Model::RiseTrigger => "rise-trigger",
            Model::UnivariateGold => "univariate-gold",
        }
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Model::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown model `{s}` (expected optimized, week-trigger, rise-trigger or univariate-gold)"
                ))
            })
    }
}

/// Held-out results of one model, fold by fold.
#[derive(Debug, Clone)]
pub struct ModelResult {
    pub model: Model,
    /// Per-fold parameters, e.g. `λ/h` pairs or trigger values.
    pub parameters: Vec<String>,
    pub fold_reports: Vec<EvaluationReport>,
    pub pooled: EvaluationReport,
    pub leads: Vec<LeadTime>,
    /// Mean of the per-fold timeliness scores.
    pub performance: f64,
}

impl ModelResult {
    fn new(model: Model, parameters: Vec<String>, folds: Vec<(AlarmTrace, DetectionWindowSet, EvaluationReport)>, gold: &[f64], reporting: f64) -> Self {
        let leads = folds
            .iter()
            .flat_map(|(t, w, _)| evaluate::lead_vs_threshold(t, w, gold, reporting))
            .collect();
        let fold_reports: Vec<EvaluationReport> = folds.into_iter().map(|f| f.2).collect();
        let performance = fold_reports.iter().map(|r| r.performance).sum::<f64>() / fold_reports.len() as f64;
        ModelResult {
            model,
            parameters,
            pooled: EvaluationReport::pool(&fold_reports),
            fold_reports,
            leads,
            performance,
        }
    }

    pub fn mean_lead(&self) -> Option<f64> {
        mean_lead(&self.leads)
    }
}

/// The predictor set evaluated as `optimized`: the configured subset, or
/// the selection recorded in `aggregate.csv` under the output directory.
pub fn optimized_subset(config: &ExperimentConfig) -> Result<Vec<String>> {
    if !config.subset.is_empty() {
        return Ok(config.subset.clone());
    }
    let path = config.output.join("aggregate.csv");
    let text = std::fs::read_to_string(&path).map_err(|_| {
        Error::Config(format!(
            "no subset configured and no selection found at {}; run `select` first or set `subset`",
            path.display()
        ))
    })?;
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        let mut f = line.split(',');
        if let (Some(name), Some(rank)) = (f.next(), f.next()) {
            let rank: f64 = rank.parse().map_err(|_| Error::Config(format!("{}: bad median rank `{rank}`", path.display())))?;
            if rank <= config.k_max as f64 {
                out.push(name.to_string());
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Config(format!("{} holds no selected predictors", path.display())));
    }
    Ok(out)
}

fn mewma_folds(
    cv: &CrossValidator,
    subset: &[String],
    seed: u64,
) -> Result<(Vec<String>, Vec<(AlarmTrace, DetectionWindowSet, EvaluationReport)>)> {
    let indices = cv.indices_of(subset)?;
    let score = cv.score_subset(&indices, seed)?;
    let mut params = Vec::new();
    let mut folds = Vec::new();
    for f in score.folds {
        let trace = cv.test_trace(f.fold, &indices, &f.null, f.chosen.lambda, f.chosen.threshold)?;
        params.push(format!("{}/{}", f.chosen.lambda, f.chosen.threshold));
        folds.push((trace, cv.contexts[f.fold].test_windows.clone(), f.report));
    }
    Ok((params, folds))
}

fn baseline_folds(
    kind: BaselineKind,
    prepared: &Prepared,
    plan: &FoldPlan,
    grid: &[u32],
) -> Result<(Vec<String>, Vec<(AlarmTrace, DetectionWindowSet, EvaluationReport)>)> {
    let gold = &prepared.panel.gold().values;
    let axis = prepared.panel.axis();
    let folds = cross_validate_baseline(kind, axis, gold, &prepared.windows, plan, grid)?;
    let mut params = Vec::new();
    let mut out = Vec::new();
    for (bf, fold) in folds.into_iter().zip(&plan.folds) {
        let test = fold.test.clone();
        let trace = kind.trace(axis, gold, bf.parameter)?.restrict(|w| test.contains(&w));
        params.push(bf.parameter.to_string());
        out.push((trace, prepared.windows.restrict(|s| test.contains(&s)), bf.report));
    }
    Ok((params, out))
}

/// Cross-validated comparison of `models` under the comparison fold preset.
pub fn compare_models(config: &ExperimentConfig, prepared: &Prepared, models: &[Model], subset: &[String]) -> Result<Vec<ModelResult>> {
    let plan = prepared.fold_plan(config, config.compare_folds.held_out())?;
    let gold = &prepared.panel.gold().values;
    let gold_name = prepared.panel.gold().name.clone();
    let mut names: Vec<String> = Vec::new();
    if models.contains(&Model::Optimized) {
        check_names(&prepared.panel, subset)?;
        names.extend(subset.iter().cloned());
    }
    if models.contains(&Model::UnivariateGold) && !names.contains(&gold_name) {
        names.push(gold_name.clone());
    }
    let cv = if names.is_empty() {
        None
    } else {
        Some(CrossValidator::new(&prepared.panel, &prepared.windows, plan.clone(), &names, config.cv_settings())?)
    };
    models
        .iter()
        .map(|&m| {
            let (params, folds) = match m {
                Model::Optimized => mewma_folds(cv.as_ref().unwrap(), subset, config.seed)?,
                Model::UnivariateGold => mewma_folds(cv.as_ref().unwrap(), std::slice::from_ref(&gold_name), config.seed)?,
                Model::WeekTrigger => baseline_folds(BaselineKind::WeekTrigger, prepared, &plan, &config.week_grid)?,
                Model::RiseTrigger => baseline_folds(BaselineKind::RiseTrigger, prepared, &plan, &config.rise_grid)?,
            };
            Ok(ModelResult::new(m, params, folds, gold, config.reporting_epsilon))
        })
        .collect()
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `comparison.csv`, `events_<model>.csv` and `baseline_fit.csv`.
pub fn run_evaluate(config: &ExperimentConfig, prepared: &Prepared, models: &[Model]) -> Result<Vec<ModelResult>> {
    if models.is_empty() {
        return Err(Error::Config("no models to evaluate".into()));
    }
    let subset = if models.contains(&Model::Optimized) {
        optimized_subset(config)?
    } else {
        Vec::new()
    };
    let results = compare_models(config, prepared, models, &subset)?;
    echo_config(config)?;
    let out = &config.output;
    let mut table = String::from("model,performance,precision,recall,mean_onset_offset,mean_lead,missed,parameters\n");
    for r in &results {
        let _ = writeln!(
            table,
            "{},{},{},{},{},{},{},{}",
            r.model.name(),
            r.performance,
            r.pooled.precision,
            r.pooled.recall,
            opt_cell(r.pooled.mean_onset_offset()),
            opt_cell(r.mean_lead()),
            r.pooled.missed().len(),
            r.parameters.join(";")
        );
        r.pooled
            .write_events_csv(&out.join(format!("events_{}.csv", r.model.name())), prepared.panel.axis(), Some(&r.leads))?;
    }
    write_atomic(&out.join("comparison.csv"), &table)?;

    let plan = prepared.fold_plan(config, config.compare_folds.held_out())?;
    let gold = &prepared.panel.gold().values;
    let mut fits = String::from("model,parameter,score\n");
    for (kind, grid) in [
        (BaselineKind::WeekTrigger, &config.week_grid),
        (BaselineKind::RiseTrigger, &config.rise_grid),
    ] {
        if models.iter().any(|m| m.name() == kind.name()) {
            let fit = fit_baseline(kind, prepared.panel.axis(), gold, &prepared.windows, &plan, grid)?;
            let _ = writeln!(fits, "{},{},{}", kind.name(), fit.parameter, fit.score);
        }
    }
    write_atomic(&out.join("baseline_fit.csv"), &fits)?;
    Ok(results)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSummary {
    pub selection: Vec<String>,
    pub performance: f64,
    pub precision: f64,
    pub recall: f64,
    pub mean_lead: Option<f64>,
    pub events: usize,
}

/// Selection followed by the held-out evaluation of the selected model,
/// all in memory.
pub fn run_pipeline(config: &ExperimentConfig, panel: &AlignedPanel) -> Result<PipelineSummary> {
    let prepared = Prepared::from_panel(config, panel.clone())?;
    let traces = select_replicates(config, &prepared)?;
    let aggregate = aggregate_replicates(&traces, config.k_max)?;
    let results = compare_models(config, &prepared, &[Model::Optimized], &aggregate.selection)?;
    let r = &results[0];
    Ok(PipelineSummary {
        selection: aggregate.selection,
        performance: r.performance,
        precision: r.pooled.precision,
        recall: r.pooled.recall,
        mean_lead: r.mean_lead(),
        events: prepared.events.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Epsilon,
    /// Window length; the lead follows as half the length.
    WindowLength,
    Atfs,
    TrainSeasons,
    GapWeeks,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::WindowLength => "window_length",
            SweepAxis::Atfs => "atfs",
            SweepAxis::TrainSeasons => "max_train_seasons",
            SweepAxis::GapWeeks => "gap_weeks",
        }
    }

    /// Configuration for one grid point.
    pub fn apply(self, base: &ExperimentConfig, value: &str) -> Result<ExperimentConfig> {
        let mut c = base.clone();
        c.subset.clear();
        let bad = |_| Error::Config(format!("{}: cannot parse `{value}`", self.name()));
        match self {
            SweepAxis::Epsilon => c.epsilon = value.parse().map_err(|_| bad(()))?,
            SweepAxis::WindowLength => {
                c.window_length = value.parse().map_err(|_| bad(()))?;
                c.window_lead = c.window_length / 2;
            }
            SweepAxis::Atfs => c.atfs = value.parse().map_err(|_| bad(()))?,
            SweepAxis::TrainSeasons => c.max_train_seasons = Some(value.parse().map_err(|_| bad(()))?),
            SweepAxis::GapWeeks => c.gap_weeks = value.parse().map_err(|_| bad(()))?,
        }
        c.reporting_epsilon = c.reporting_epsilon.max(c.epsilon);
        c.validate()?;
        Ok(c)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epsilon" => Ok(SweepAxis::Epsilon),
            "window" | "window_length" => Ok(SweepAxis::WindowLength),
            "atfs" => Ok(SweepAxis::Atfs),
            "train" | "train_seasons" | "max_train_seasons" => Ok(SweepAxis::TrainSeasons),
            "gap" | "gap_weeks" => Ok(SweepAxis::GapWeeks),
            _ => Err(Error::Config(format!(
                "unknown sweep axis `{s}` (expected epsilon, window, atfs, train or gap)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    /// The pipeline result, or why this point failed.
    pub outcome: std::result::Result<PipelineSummary, String>,
}

/// Runs the pipeline at every grid value and writes `sweep_<axis>.csv`.
/// A failing point is recorded and does not stop the sweep.
pub fn run_sweep(config: &ExperimentConfig, panel: &AlignedPanel, axis: SweepAxis, values: &[String]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let points = values
        .iter()
        .map(|v| axis.apply(config, v))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<SweepRow> = points
        .par_iter()
        .zip(values)
        .map(|(c, v)| SweepRow {
            value: v.clone(),
            outcome: run_pipeline(c, panel).map_err(|e| e.to_string()),
        })
        .collect();

    echo_config(config)?;
    let mut s = String::from("axis,value,performance,precision,recall,mean_lead,events,selected,status\n");
    for r in &rows {
        match &r.outcome {
            Ok(p) => {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},ok",
                    axis.name(),
                    r.value,
                    p.performance,
                    p.precision,
                    p.recall,
                    opt_cell(p.mean_lead),
                    p.events,
                    p.selection.join(";")
                );
            }
            Err(e) => {
                let _ = writeln!(s, "{},{},,,,,,,\"{}\"", axis.name(), r.value, e.replace('"', "'"));
            }
        }
    }
    write_atomic(&config.output.join(format!("sweep_{}.csv", axis.name())), &s)?;
    Ok(rows)
}

/// Writes a synthetic panel and returns its manifest path.
pub fn run_synth(spec: &SyntheticPanelSpec, dir: &Path) -> Result<PathBuf> {
    create_dir(dir)?;
    generate_synthetic(spec)?.write_dir(dir)
}
