//! Season-wise cross-validation and greedy forward selection of predictors.
//!
//! A season is the stretch of weeks around one event. Folds hold out one or
//! more consecutive seasons; the null model and `(λ, h)` of a fold are fitted
//! on its training weeks only and the held-out seasons are scored with
//! timeliness.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;

use crate::calibrate::{calibrate_curve, CalibrationSettings, ConstraintCurvePoint};
use crate::error::{Error, Result};
use crate::events::DetectionWindowSet;
use crate::evaluate::{self, EvaluationReport};
use crate::mewma::{AlarmTrace, BaselineMoments, NullModel, SharedStates};
use crate::panel::AlignedPanel;
use crate::seed;

/// Seasons held out per fold in the selection protocol.
pub const SELECT_HELD_OUT: usize = 1;
/// Seasons held out per fold in the model comparison protocol.
pub const COMPARE_HELD_OUT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FoldOptions {
    /// Use at most this many training seasons, nearest to the test seasons
    /// first.
    pub max_train_seasons: Option<usize>,
    /// Drop training weeks closer than this to the test range.
    pub gap_weeks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub index: usize,
    pub test_seasons: Vec<usize>,
    pub train_seasons: Vec<usize>,
    /// Weeks of the held-out seasons.
    pub test: Range<usize>,
    /// Weeks available for fitting.
    pub train_mask: Vec<bool>,
}

impl Fold {
    /// Maximal runs of consecutive training weeks.
    pub fn train_segments(&self) -> Vec<Range<usize>> {
        runs(&self.train_mask)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub seasons: Vec<Range<usize>>,
    pub held_out: usize,
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    /// Fold that tests season `s`.
    pub fn fold_of(&self, season: usize) -> Option<usize> {
        self.folds.iter().position(|f| f.test_seasons.contains(&season))
    }
}

fn runs(mask: &[bool]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &m) in mask.iter().enumerate() {
        match (m, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push(s..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(s..mask.len());
    }
    out
}

/// Splits `0..weeks` into one season per event. The boundary between two
/// events sits halfway between the end of one and the start of the next,
/// moved if needed so each detection window stays in its own season.
pub fn seasons(windows: &DetectionWindowSet, weeks: usize) -> Vec<Range<usize>> {
    let ws = &windows.windows;
    let mut bounds = vec![0];
    for i in 1..ws.len() {
        let mid = (ws[i - 1].event.end + ws[i].event.start + 1) / 2;
        bounds.push(mid.clamp(ws[i - 1].end + 1, ws[i].start));
    }
    bounds.push(weeks);
    bounds.windows(2).map(|b| b[0]..b[1]).collect()
}

pub fn make_folds(windows: &DetectionWindowSet, weeks: usize, held_out: usize) -> Result<FoldPlan> {
    make_folds_with(windows, weeks, held_out, FoldOptions::default())
}

/// Groups consecutive seasons into folds of `held_out` seasons; when the
/// count does not divide evenly the last fold takes the remainder.
pub fn make_folds_with(
    windows: &DetectionWindowSet,
    weeks: usize,
    held_out: usize,
    options: FoldOptions,
) -> Result<FoldPlan> {
    let n = windows.len();
    if n < 2 {
        return Err(Error::Validation(format!(
            "cross-validation needs at least 2 events, found {n}"
        )));
    }
    if held_out == 0 || held_out >= n {
        return Err(Error::Validation(format!(
            "cannot hold out {held_out} of {n} seasons and keep a training set"
        )));
    }
    if options.max_train_seasons == Some(0) {
        return Err(Error::Validation("training length must be at least one season".into()));
    }
    let seasons = seasons(windows, weeks);
    let count = n / held_out;
    let folds = (0..count)
        .map(|f| {
            let first = f * held_out;
            let last = if f + 1 == count { n } else { first + held_out };
            let test_seasons: Vec<usize> = (first..last).collect();
            let test = seasons[first].start..seasons[last - 1].end;

            let mut train_seasons: Vec<usize> = (0..n).filter(|s| !test_seasons.contains(s)).collect();
            if let Some(max) = options.max_train_seasons {
                let distance = |s: usize| if s < first { first - s } else { s + 1 - last };
                train_seasons.sort_by_key(|&s| (distance(s), s));
                train_seasons.truncate(max);
                train_seasons.sort_unstable();
            }
            let mut train_mask = vec![false; weeks];
            for &s in &train_seasons {
                for w in seasons[s].clone() {
                    let near = w + options.gap_weeks >= test.start && w < test.end + options.gap_weeks;
                    train_mask[w] = !near;
                }
            }
            Fold {
                index: f,
                test_seasons,
                train_seasons,
                test,
                train_mask,
            }
        })
        .collect();
    Ok(FoldPlan {
        seasons,
        held_out,
        folds,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvSettings {
    pub calibration: CalibrationSettings,
    /// Restart the scan at the start of the held-out range instead of
    /// carrying the state over from the first panel week.
    pub reset_test_scan: bool,
}

impl Default for CvSettings {
    fn default() -> Self {
        CvSettings {
            calibration: CalibrationSettings::default(),
            reset_test_scan: false,
        }
    }
}

/// Everything a fold needs that does not depend on the predictor subset.
#[derive(Debug, Clone)]
pub struct FoldContext {
    pub fold: Fold,
    /// Training weeks outside events: the rows behind μ and Σ.
    pub baseline_mask: Vec<bool>,
    pub moments: BaselineMoments,
    pub train_windows: DetectionWindowSet,
    pub test_windows: DetectionWindowSet,
    pub train_states: SharedStates,
    pub test_states: SharedStates,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub null: NullModel,
    /// Chosen pair with its in-sample performance.
    pub chosen: ConstraintCurvePoint,
    pub curve: Vec<ConstraintCurvePoint>,
    pub report: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetScore {
    /// Mean out-of-sample timeliness over folds.
    pub score: f64,
    pub folds: Vec<FoldResult>,
}

impl SubsetScore {
    pub fn pooled(&self) -> EvaluationReport {
        EvaluationReport::pool(&self.folds.iter().map(|f| f.report.clone()).collect::<Vec<_>>())
    }
}

/// Cross-validated scoring of predictor subsets drawn from a fixed list of
/// series, with per-fold smoothed states shared across subsets.
#[derive(Debug, Clone)]
pub struct CrossValidator {
    pub names: Vec<String>,
    pub plan: FoldPlan,
    pub settings: CvSettings,
    pub contexts: Vec<FoldContext>,
}

impl CrossValidator {
    pub fn new(
        panel: &AlignedPanel,
        windows: &DetectionWindowSet,
        plan: FoldPlan,
        names: &[String],
        settings: CvSettings,
    ) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Config("no candidate predictors".into()));
        }
        if plan.seasons.last().map(|s| s.end) != Some(panel.len()) {
            return Err(Error::Config("fold plan does not cover the panel".into()));
        }
        let lambdas = &settings.calibration.lambdas;
        let contexts = plan
            .folds
            .par_iter()
            .map(|fold| {
                let in_event = |w: usize| windows.windows.iter().any(|x| x.event.contains(w));
                let baseline_mask: Vec<bool> = (0..panel.len()).map(|w| fold.train_mask[w] && !in_event(w)).collect();
                let moments = BaselineMoments::estimate(panel, &baseline_mask, names).map_err(|e| e.in_fold(fold.index))?;
                let train_windows = windows.restrict(|s| fold.train_mask[s]);
                let test_windows = windows.restrict(|s| fold.test.contains(&s));
                let train_states =
                    SharedStates::compute(panel, names, &moments.mean, lambdas, &fold.train_segments())?;
                let test_from = if settings.reset_test_scan { fold.test.start } else { 0 };
                let test_states = SharedStates::compute(panel, names, &moments.mean, lambdas, &[test_from..fold.test.end])?;
                Ok(FoldContext {
                    fold: fold.clone(),
                    baseline_mask,
                    moments,
                    train_windows,
                    test_windows,
                    train_states,
                    test_states,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CrossValidator {
            names: names.to_vec(),
            plan,
            settings,
            contexts,
        })
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownSeries(name.to_string()))
    }

    pub fn indices_of(&self, names: &[String]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.index_of(n)).collect()
    }

    /// Seed of a fold's calibration; depends on the subset as a set.
    pub fn fold_seed(seed: u64, fold: usize, indices: &[usize]) -> u64 {
        let mut keys: Vec<u64> = indices.iter().map(|&i| i as u64).collect();
        keys.sort_unstable();
        keys.insert(0, fold as u64);
        seed::derive_all(seed, &keys)
    }

    /// Fits the null model and `(λ, h)` of one fold from its training weeks
    /// and returns the in-sample constraint curve.
    pub fn calibrate_fold(&self, fold: usize, indices: &[usize], seed: u64) -> Result<(NullModel, crate::calibrate::Calibration)> {
        let ctx = &self.contexts[fold];
        let tag = |e: Error| e.in_fold(fold);
        let null = ctx.moments.null_for(indices).map_err(tag)?;
        let states = &ctx.train_states;
        let cal = calibrate_curve(&null, &self.settings.calibration, Self::fold_seed(seed, fold, indices), |k, _, h| {
            let trace = states.subset_trace(k, indices, &null, h)?;
            Ok(evaluate::score(&trace, &ctx.train_windows).performance)
        })
        .map_err(tag)?;
        Ok((null, cal))
    }

    /// Scan of the held-out range of `fold` with the given parameters.
    pub fn test_trace(&self, fold: usize, indices: &[usize], null: &NullModel, lambda: f64, threshold: f64) -> Result<AlarmTrace> {
        let ctx = &self.contexts[fold];
        let k = ctx
            .test_states
            .lambda_index(lambda)
            .ok_or_else(|| Error::Config(format!("λ={lambda} is not on the grid")))?;
        let trace = ctx.test_states.subset_trace(k, indices, null, threshold)?;
        let test = ctx.fold.test.clone();
        Ok(trace.restrict(|w| test.contains(&w)))
    }

    pub fn score_fold(&self, fold: usize, indices: &[usize], seed: u64) -> Result<FoldResult> {
        let (null, cal) = self.calibrate_fold(fold, indices, seed)?;
        let trace = self.test_trace(fold, indices, &null, cal.best.lambda, cal.best.threshold)?;
        let report = evaluate::score(&trace, &self.contexts[fold].test_windows);
        Ok(FoldResult {
            fold,
            null,
            chosen: cal.best,
            curve: cal.curve,
            report,
        })
    }

    /// Mean out-of-sample timeliness of a subset over all folds.
    pub fn score_subset(&self, indices: &[usize], seed: u64) -> Result<SubsetScore> {
        if indices.is_empty() {
            return Err(Error::Config("predictor subset is empty".into()));
        }
        let folds = (0..self.contexts.len())
            .into_par_iter()
            .map(|f| self.score_fold(f, indices, seed))
            .collect::<Result<Vec<_>>>()?;
        let score = folds.iter().map(|f| f.report.performance).sum::<f64>() / folds.len() as f64;
        Ok(SubsetScore { score, folds })
    }

    pub fn score_names(&self, names: &[String], seed: u64) -> Result<SubsetScore> {
        self.score_subset(&self.indices_of(names)?, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionSettings {
    pub k_max: usize,
    /// A step is taken only if it improves the score by more than this.
    pub min_improvement: f64,
}

impl Default for SelectionSettings {
    fn default() -> Self {
        SelectionSettings {
            k_max: 8,
            min_improvement: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ReachedK,
    LeveledOff,
    Exhausted,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::ReachedK => "reached-k",
            StopReason::LeveledOff => "leveled-off",
            StopReason::Exhausted => "exhausted",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionStep {
    pub chosen: String,
    pub score: f64,
    /// Score of every candidate tried at this step, in candidate order.
    pub tried: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTrace {
    pub steps: Vec<SelectionStep>,
    pub stop: StopReason,
}

impl SelectionTrace {
    pub fn selected(&self) -> Vec<String> {
        self.steps.iter().map(|s| s.chosen.clone()).collect()
    }

    pub fn score(&self) -> Option<f64> {
        self.steps.last().map(|s| s.score)
    }
}

/// Greedy forward selection over `candidates` (names known to `cv`).
/// Each step adds the candidate with the best cross-validated score; ties
/// go to the earlier candidate. The first step is always taken.
pub fn forward_select(
    cv: &CrossValidator,
    candidates: &[String],
    settings: &SelectionSettings,
    seed: u64,
) -> Result<SelectionTrace> {
    if candidates.is_empty() {
        return Err(Error::Config("candidate set is empty".into()));
    }
    if settings.k_max == 0 {
        return Err(Error::Config("k_max must be at least 1".into()));
    }
    let pool = cv.indices_of(candidates)?;
    let mut chosen: Vec<usize> = Vec::new();
    let mut steps: Vec<SelectionStep> = Vec::new();
    loop {
        if steps.len() == settings.k_max {
            return Ok(SelectionTrace {
                steps,
                stop: StopReason::ReachedK,
            });
        }
        let remaining: Vec<usize> = pool.iter().copied().filter(|c| !chosen.contains(c)).collect();
        if remaining.is_empty() {
            return Ok(SelectionTrace {
                steps,
                stop: StopReason::Exhausted,
            });
        }
        let scores = remaining
            .par_iter()
            .map(|&c| {
                let mut subset = chosen.clone();
                subset.push(c);
                cv.score_subset(&subset, seed).map(|s| s.score)
            })
            .collect::<Result<Vec<f64>>>()?;
        let (best, best_score) = scores
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
        if let Some(prev) = steps.last() {
            if best_score - prev.score <= settings.min_improvement {
                return Ok(SelectionTrace {
                    steps,
                    stop: StopReason::LeveledOff,
                });
            }
        }
        chosen.push(remaining[best]);
        steps.push(SelectionStep {
            chosen: cv.names[remaining[best]].clone(),
            score: best_score,
            tried: remaining.iter().map(|&c| cv.names[c].clone()).zip(scores).collect(),
        });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateEntry {
    pub name: String,
    pub median_rank: f64,
    /// Replicates that selected this predictor.
    pub frequency: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateAggregate {
    pub replicates: usize,
    pub k_max: usize,
    /// Every predictor selected at least once, ordered by median rank.
    pub entries: Vec<AggregateEntry>,
    /// Predictors whose median rank is within `k_max`.
    pub selection: Vec<String>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Median selection rank per predictor across replicate traces, counting an
/// absent predictor as rank `k_max + 1`.
pub fn aggregate_replicates(traces: &[SelectionTrace], k_max: usize) -> Result<ReplicateAggregate> {
    if traces.is_empty() {
        return Err(Error::Config("no selection traces to aggregate".into()));
    }
    let mut ranks: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for t in traces {
        for (i, s) in t.steps.iter().enumerate() {
            ranks.entry(s.chosen.clone()).or_default().push((i + 1) as f64);
        }
    }
    let mut entries: Vec<AggregateEntry> = ranks
        .into_iter()
        .map(|(name, mut r)| {
            let frequency = r.len();
            r.resize(traces.len(), (k_max + 1) as f64);
            r.sort_by(f64::total_cmp);
            AggregateEntry {
                name,
                median_rank: median(&r),
                frequency,
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        a.median_rank
            .total_cmp(&b.median_rank)
            .then(b.frequency.cmp(&a.frequency))
            .then(a.name.cmp(&b.name))
    });
    let mut selection: Vec<String> = entries
        .iter()
        .filter(|e| e.median_rank <= k_max as f64)
        .map(|e| e.name.clone())
        .collect();
    if selection.is_empty() {
        selection.extend(entries.first().map(|e| e.name.clone()));
    }
    Ok(ReplicateAggregate {
        replicates: traces.len(),
        k_max,
        entries,
        selection,
    })
}

impl ReplicateAggregate {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("predictor,median_rank,frequency\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", e.name, e.median_rank, e.frequency));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Rows `replicate,step,chosen,score` for one trace.
pub fn trace_rows(replicate: usize, trace: &SelectionTrace) -> String {
    trace
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{},{},{},{}\n", replicate, i + 1, s.chosen, s.score))
        .collect()
}

pub const TRACE_HEADER: &str = "replicate,step,chosen,score\n";

/// Seed of replicate `r`.
pub fn replicate_seed(master: u64, replicate: usize) -> u64 {
    master.wrapping_add(replicate as u64)
}

/// Week-level audit of a fold: held-out weeks that reached the null
/// estimate or the training scans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeakageReport {
    pub fold: usize,
    pub held_out_in_baseline: usize,
    pub held_out_in_train_scan: usize,
    pub held_out_train_windows: usize,
}

impl LeakageReport {
    pub fn clean(&self) -> bool {
        self.held_out_in_baseline == 0 && self.held_out_in_train_scan == 0 && self.held_out_train_windows == 0
    }
}

impl CrossValidator {
    pub fn leakage_audit(&self) -> Vec<LeakageReport> {
        self.contexts
            .iter()
            .map(|ctx| {
                let test = &ctx.fold.test;
                let held_out_in_baseline = test.clone().filter(|&w| ctx.baseline_mask[w]).count();
                let held_out_in_train_scan = ctx
                    .train_states
                    .tables
                    .iter()
                    .flat_map(|t| t.weeks.iter())
                    .filter(|w| test.contains(w))
                    .count();
                let held_out_train_windows = ctx
                    .train_windows
                    .windows
                    .iter()
                    .filter(|w| test.contains(&w.start) || test.contains(&w.end) || test.contains(&w.event.start))
                    .count();
                LeakageReport {
                    fold: ctx.fold.index,
                    held_out_in_baseline,
                    held_out_in_train_scan,
                    held_out_train_windows,
                }
            })
            .collect()
    }
}
