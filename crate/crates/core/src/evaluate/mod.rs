//! Scoring alarm traces against outbreak events.
//!
//! Timeliness of a trace over `N` events with window length `T_w`:
//!
//! ```text
//! P = (1/N) Σ_n (1 − ΔT_n / T_w)
//! ```
//!
//! where `ΔT_n` is the number of weeks from the (unclipped) start of window
//! `n` to the first cluster onset inside it, or `T_w` if there is none.

use std::path::Path;

use crate::error::{Error, Result};
use crate::events::{DetectionWindowSet, WeekClass};
use crate::mewma::AlarmTrace;
use crate::panel::WeekAxis;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScoreOptions {
    /// Count raw alarm weeks instead of cluster onsets for precision.
    pub precision_on_alarm_weeks: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventOutcome {
    /// Index into the scored window set.
    pub event: usize,
    pub event_start: usize,
    /// First cluster onset inside the window.
    pub onset: Option<usize>,
    pub delta_t: f64,
}

impl EventOutcome {
    pub fn detected(&self) -> bool {
        self.onset.is_some()
    }

    /// Onset relative to the event start (negative = early).
    pub fn onset_offset(&self) -> Option<i64> {
        self.onset.map(|o| o as i64 - self.event_start as i64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub performance: f64,
    pub precision: f64,
    pub recall: f64,
    /// No onsets were counted, so precision is the conventional 1.
    pub precision_undefined: bool,
    pub true_alarms: usize,
    pub false_alarms: usize,
    /// Onsets inside an event but after its window; excluded from precision.
    pub late_alarms: usize,
    pub window_length: usize,
    pub events: Vec<EventOutcome>,
}

impl EvaluationReport {
    pub fn missed(&self) -> Vec<usize> {
        self.events.iter().filter(|e| !e.detected()).map(|e| e.event).collect()
    }

    /// Mean onset relative to event start over detected events.
    pub fn mean_onset_offset(&self) -> Option<f64> {
        let offs: Vec<i64> = self.events.iter().filter_map(EventOutcome::onset_offset).collect();
        (!offs.is_empty()).then(|| offs.iter().sum::<i64>() as f64 / offs.len() as f64)
    }

    /// Pools reports from disjoint evaluation periods (e.g. CV test folds).
    pub fn pool(reports: &[EvaluationReport]) -> EvaluationReport {
        let window_length = reports.first().map_or(0, |r| r.window_length);
        let mut events = Vec::new();
        for r in reports {
            for e in &r.events {
                events.push(EventOutcome {
                    event: events.len(),
                    ..e.clone()
                });
            }
        }
        let true_alarms = reports.iter().map(|r| r.true_alarms).sum();
        let false_alarms = reports.iter().map(|r| r.false_alarms).sum();
        let late_alarms = reports.iter().map(|r| r.late_alarms).sum();
        summarize(events, window_length, true_alarms, false_alarms, late_alarms)
    }

    pub fn write_events_csv(&self, path: &Path, axis: &WeekAxis, leads: Option<&[LeadTime]>) -> Result<()> {
        let mut out = String::from("event,onset_week,delta_t,lead_weeks,detected\n");
        for e in &self.events {
            let onset = e.onset.map(|w| axis.week(w).to_string()).unwrap_or_default();
            let lead = leads
                .and_then(|l| l.get(e.event))
                .and_then(|l| l.lead)
                .map(|l| l.to_string())
                .unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{}\n", e.event, onset, e.delta_t, lead, e.detected() as u8));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let out = format!(
            "performance,precision,recall\n{},{},{}\n",
            self.performance, self.precision, self.recall
        );
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn summarize(
    events: Vec<EventOutcome>,
    window_length: usize,
    true_alarms: usize,
    false_alarms: usize,
    late_alarms: usize,
) -> EvaluationReport {
    let n = events.len();
    let performance = if n == 0 {
        0.0
    } else {
        events
            .iter()
            .map(|e| 1.0 - e.delta_t / window_length as f64)
            .sum::<f64>()
            / n as f64
    };
    let recall = if n == 0 {
        0.0
    } else {
        events.iter().filter(|e| e.detected()).count() as f64 / n as f64
    };
    let counted = true_alarms + false_alarms;
    let (precision, precision_undefined) = if counted == 0 {
        (1.0, true)
    } else {
        (true_alarms as f64 / counted as f64, false)
    };
    EvaluationReport {
        performance,
        precision,
        recall,
        precision_undefined,
        true_alarms,
        false_alarms,
        late_alarms,
        window_length,
        events,
    }
}

pub fn score(trace: &AlarmTrace, windows: &DetectionWindowSet) -> EvaluationReport {
    score_with(trace, windows, ScoreOptions::default())
}

pub fn score_with(trace: &AlarmTrace, windows: &DetectionWindowSet, options: ScoreOptions) -> EvaluationReport {
    let tw = windows.length as f64;
    let events = windows
        .windows
        .iter()
        .enumerate()
        .map(|(n, w)| {
            let onset = trace.onsets.iter().copied().find(|&o| w.contains(o));
            let delta_t = match onset {
                Some(o) => (o as i64 - w.nominal_start) as f64,
                None => tw,
            };
            EventOutcome {
                event: n,
                event_start: w.event.start,
                onset,
                delta_t,
            }
        })
        .collect();

    let counted: Vec<usize> = if options.precision_on_alarm_weeks {
        trace.alarm_weeks()
    } else {
        trace.onsets.clone()
    };
    let (mut t, mut f, mut late) = (0, 0, 0);
    for w in counted {
        match windows.classify(w) {
            WeekClass::InWindow(_) => t += 1,
            WeekClass::InEventAfterWindow(_) => late += 1,
            WeekClass::Baseline => f += 1,
        }
    }
    summarize(events, windows.length, t, f, late)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeadStatus {
    Detected,
    Missed,
    /// The gold standard never reached the reporting threshold during the
    /// event; excluded from lead statistics.
    NeverReached,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeadTime {
    pub event: usize,
    /// First event week with gold at or above the reporting threshold.
    pub crossing: Option<usize>,
    pub onset: Option<usize>,
    /// `crossing − onset` in weeks; positive means the alarm came first.
    pub lead: Option<i64>,
    pub status: LeadStatus,
}

/// Weeks between each event's first in-window onset and the gold standard
/// first reaching `reporting_threshold` within the event.
pub fn lead_vs_threshold(
    trace: &AlarmTrace,
    windows: &DetectionWindowSet,
    gold: &[f64],
    reporting_threshold: f64,
) -> Vec<LeadTime> {
    windows
        .windows
        .iter()
        .enumerate()
        .map(|(n, w)| {
            let crossing = (w.event.start..=w.event.end).find(|&t| gold[t] >= reporting_threshold);
            let onset = trace.onsets.iter().copied().find(|&o| w.contains(o));
            let (lead, status) = match (crossing, onset) {
                (None, _) => (None, LeadStatus::NeverReached),
                (Some(_), None) => (None, LeadStatus::Missed),
                (Some(c), Some(o)) => (Some(c as i64 - o as i64), LeadStatus::Detected),
            };
            LeadTime {
                event: n,
                crossing,
                onset,
                lead,
                status,
            }
        })
        .collect()
}

/// Mean lead over detected events.
pub fn mean_lead(leads: &[LeadTime]) -> Option<f64> {
    let v: Vec<i64> = leads.iter().filter_map(|l| l.lead).collect();
    (!v.is_empty()).then(|| v.iter().sum::<i64>() as f64 / v.len() as f64)
}
