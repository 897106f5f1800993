//! Simple reference detectors: a fixed week of the year, and a run of
//! consecutive increases in the gold standard.
//!
//! A univariate detector on the gold standard alone is the MEWMA scan with
//! the subset `{gold}`.

use crate::error::{Error, Result};
use crate::evaluate;
use crate::events::DetectionWindowSet;
use crate::mewma::AlarmTrace;
use crate::panel::WeekAxis;
use crate::select::FoldPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeekTriggerConfig {
    pub trigger_week: u32,
}

impl WeekTriggerConfig {
    pub fn new(trigger_week: u32) -> Result<Self> {
        if !(1..=53).contains(&trigger_week) {
            return Err(Error::Validation(format!(
                "trigger week {trigger_week} is outside 1..=53"
            )));
        }
        Ok(WeekTriggerConfig { trigger_week })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RiseTriggerConfig {
    pub consecutive: usize,
}

impl RiseTriggerConfig {
    pub fn new(consecutive: usize) -> Result<Self> {
        if consecutive < 2 {
            return Err(Error::Validation(format!(
                "rise trigger needs at least 2 consecutive increases, got {consecutive}"
            )));
        }
        Ok(RiseTriggerConfig { consecutive })
    }
}

/// Alarms in the given ISO week of every year on the axis. The statistic
/// column is 1 on alarm weeks and 0 elsewhere.
pub fn week_trigger(axis: &WeekAxis, config: WeekTriggerConfig) -> AlarmTrace {
    let alarms: Vec<bool> = (0..axis.len).map(|i| axis.week(i).week == config.trigger_week).collect();
    let statistic = alarms.iter().map(|&a| a as u8 as f64).collect();
    AlarmTrace::from_alarms((0..axis.len).collect(), statistic, alarms)
}

/// Alarms at week `t` when each of the `n` steps ending at `t` is a strict
/// increase. The statistic column is the current run of increases.
pub fn rise_trigger(gold: &[f64], config: RiseTriggerConfig) -> AlarmTrace {
    let mut run = 0usize;
    let mut statistic = Vec::with_capacity(gold.len());
    let mut alarms = Vec::with_capacity(gold.len());
    for t in 0..gold.len() {
        run = if t > 0 && gold[t] > gold[t - 1] { run + 1 } else { 0 };
        statistic.push(run as f64);
        alarms.push(run >= config.consecutive);
    }
    AlarmTrace::from_alarms((0..gold.len()).collect(), statistic, alarms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    WeekTrigger,
    RiseTrigger,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::WeekTrigger => "week-trigger",
            BaselineKind::RiseTrigger => "rise-trigger",
        }
    }

    /// Parameter grid: weeks 1–53, or 2–20 consecutive increases.
    pub fn default_grid(self) -> Vec<u32> {
        match self {
            BaselineKind::WeekTrigger => (1..=53).collect(),
            BaselineKind::RiseTrigger => (2..=20).collect(),
        }
    }

    pub fn trace(self, axis: &WeekAxis, gold: &[f64], parameter: u32) -> Result<AlarmTrace> {
        Ok(match self {
            BaselineKind::WeekTrigger => week_trigger(axis, WeekTriggerConfig::new(parameter)?),
            BaselineKind::RiseTrigger => rise_trigger(gold, RiseTriggerConfig::new(parameter as usize)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineFit {
    pub parameter: u32,
    pub score: f64,
    /// Mean out-of-sample score of every grid value.
    pub grid: Vec<(u32, f64)>,
}

fn fold_score(trace: &AlarmTrace, windows: &DetectionWindowSet, keep: impl Fn(usize) -> bool) -> f64 {
    let w = windows.restrict(&keep);
    evaluate::score(&trace.restrict(keep), &w).performance
}

/// Grid value with the best mean held-out timeliness over the folds; ties
/// go to the smaller value.
pub fn fit_baseline(
    kind: BaselineKind,
    axis: &WeekAxis,
    gold: &[f64],
    windows: &DetectionWindowSet,
    plan: &FoldPlan,
    grid: &[u32],
) -> Result<BaselineFit> {
    if grid.is_empty() {
        return Err(Error::Config(format!("{} grid is empty", kind.name())));
    }
    let mut scored = Vec::with_capacity(grid.len());
    for &p in grid {
        let trace = kind.trace(axis, gold, p)?;
        let total: f64 = plan
            .folds
            .iter()
            .map(|f| fold_score(&trace, windows, |w| f.test.contains(&w)))
            .sum();
        scored.push((p, total / plan.folds.len() as f64));
    }
    let mut sorted = scored.clone();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(BaselineFit {
        parameter: sorted[0].0,
        score: sorted[0].1,
        grid: scored,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineFold {
    pub fold: usize,
    pub parameter: u32,
    pub train_score: f64,
    pub report: evaluate::EvaluationReport,
}

/// Cross-validates a baseline: each fold picks its parameter by training
/// timeliness and is scored on its held-out range.
pub fn cross_validate_baseline(
    kind: BaselineKind,
    axis: &WeekAxis,
    gold: &[f64],
    windows: &DetectionWindowSet,
    plan: &FoldPlan,
    grid: &[u32],
) -> Result<Vec<BaselineFold>> {
    if grid.is_empty() {
        return Err(Error::Config(format!("{} grid is empty", kind.name())));
    }
    let traces = grid
        .iter()
        .map(|&p| kind.trace(axis, gold, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(plan
        .folds
        .iter()
        .map(|f| {
            let (best, train_score) = traces
                .iter()
                .map(|t| fold_score(t, windows, |w| f.train_mask[w]))
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, s)| if s > acc.1 { (i, s) } else { acc });
            let test_windows = windows.restrict(|s| f.test.contains(&s));
            let report = evaluate::score(&traces[best].restrict(|w| f.test.contains(&w)), &test_windows);
            BaselineFold {
                fold: f.index,
                parameter: grid[best],
                train_score,
                report,
            }
        })
        .collect())
}
