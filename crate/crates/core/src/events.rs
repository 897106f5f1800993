//! Outbreak events derived from the gold standard and the detection windows
//! used to score alarms against them.

use std::path::Path;

use crate::error::{Error, Result};
use crate::panel::WeekAxis;

/// Inclusive week-index range where the gold standard stays at or above the
/// event threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub start: usize,
    pub end: usize,
}

impl Event {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, week: usize) -> bool {
        (self.start..=self.end).contains(&week)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventSet {
    pub threshold: f64,
    pub min_duration: usize,
    pub events: Vec<Event>,
    /// Set when the threshold lies outside the observed gold range, so no
    /// event could possibly be found.
    pub threshold_out_of_range: bool,
}

impl EventSet {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// `true` for weeks outside every event interval (the null-model weeks).
    pub fn baseline_mask(&self, weeks: usize) -> Vec<bool> {
        let mut mask = vec![true; weeks];
        for e in &self.events {
            for m in &mut mask[e.start..=e.end.min(weeks - 1)] {
                *m = false;
            }
        }
        mask
    }

    pub fn event_at(&self, week: usize) -> Option<usize> {
        self.events.iter().position(|e| e.contains(week))
    }
}

/// Finds maximal runs of `gold >= threshold` lasting at least `min_duration`
/// weeks.
pub fn detect_events(gold: &[f64], threshold: f64, min_duration: usize) -> Result<EventSet> {
    if min_duration == 0 {
        return Err(Error::Validation("minimum event duration must be at least 1".into()));
    }
    if !threshold.is_finite() {
        return Err(Error::Validation("event threshold must be finite".into()));
    }
    let (lo, hi) = gold
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let threshold_out_of_range = threshold > hi || threshold < lo;

    let mut events = Vec::new();
    let mut run_start = None;
    for (t, &v) in gold.iter().enumerate() {
        match (v >= threshold, run_start) {
            (true, None) => run_start = Some(t),
            (false, Some(s)) => {
                if t - s >= min_duration {
                    events.push(Event { start: s, end: t - 1 });
                }
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = run_start {
        if gold.len() - s >= min_duration {
            events.push(Event {
                start: s,
                end: gold.len() - 1,
            });
        }
    }
    Ok(EventSet {
        threshold,
        min_duration,
        events,
        threshold_out_of_range,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowOptions {
    /// Window length in weeks.
    pub length: usize,
    /// Weeks the window opens before the event start.
    pub lead: usize,
    /// Shrink the lead so the window never opens before the lowest gold
    /// observation preceding the event.
    pub clamp_to_onset_minimum: bool,
}

impl WindowOptions {
    pub fn new(length: usize) -> Self {
        WindowOptions {
            length,
            lead: length / 2,
            clamp_to_onset_minimum: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub event: Event,
    /// Unclipped window start; may be negative near the panel start.
    pub nominal_start: i64,
    pub start: usize,
    pub end: usize,
    /// The window was cut at a panel boundary.
    pub clipped: bool,
    /// The lead was shortened to the onset minimum.
    pub clamped: bool,
}

impl Window {
    pub fn contains(&self, week: usize) -> bool {
        (self.start..=self.end).contains(&week)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeekClass {
    InWindow(usize),
    InEventAfterWindow(usize),
    Baseline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionWindowSet {
    pub length: usize,
    pub lead: usize,
    pub windows: Vec<Window>,
}

impl DetectionWindowSet {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn classify(&self, week: usize) -> WeekClass {
        if let Some(n) = self.windows.iter().position(|w| w.contains(week)) {
            return WeekClass::InWindow(n);
        }
        match self.windows.iter().position(|w| w.event.contains(week)) {
            Some(n) => WeekClass::InEventAfterWindow(n),
            None => WeekClass::Baseline,
        }
    }

    /// Windows whose events start inside `weeks` (sorted week indices).
    pub fn restrict<F: Fn(usize) -> bool>(&self, keep: F) -> Self {
        DetectionWindowSet {
            length: self.length,
            lead: self.lead,
            windows: self.windows.iter().copied().filter(|w| keep(w.event.start)).collect(),
        }
    }

    pub fn write_csv(&self, path: &Path, axis: &WeekAxis) -> Result<()> {
        let mut out = String::from("event_index,start_week,end_week,window_start,window_end\n");
        for (i, w) in self.windows.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                i,
                axis.week(w.event.start),
                axis.week(w.event.end),
                axis.week(w.start),
                axis.week(w.end)
            ));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Builds one detection window per event.
pub fn build_windows(
    events: &EventSet,
    options: &WindowOptions,
    gold: &[f64],
) -> Result<DetectionWindowSet> {
    if options.length == 0 {
        return Err(Error::Config("detection window length must be positive".into()));
    }
    if options.lead > options.length {
        return Err(Error::Config(format!(
            "window lead {} exceeds window length {}",
            options.lead, options.length
        )));
    }
    let weeks = gold.len();
    let mut windows: Vec<Window> = Vec::with_capacity(events.len());
    for (n, &event) in events.events.iter().enumerate() {
        let mut nominal_start = event.start as i64 - options.lead as i64;
        let mut clamped = false;
        if options.clamp_to_onset_minimum && event.start > 0 {
            let from = nominal_start.max(0) as usize;
            if from < event.start {
                let argmin = (from..event.start)
                    .min_by(|&a, &b| gold[a].total_cmp(&gold[b]).then(a.cmp(&b)))
                    .unwrap();
                if argmin as i64 > nominal_start {
                    nominal_start = argmin as i64;
                    clamped = true;
                }
            }
        }
        let nominal_end = nominal_start + options.length as i64 - 1;
        let start = nominal_start.max(0) as usize;
        let end = nominal_end.min(weeks as i64 - 1).max(0) as usize;
        let clipped = nominal_start < 0 || nominal_end > weeks as i64 - 1;

        if let Some(prev) = windows.last() {
            if start <= prev.end || start <= prev.event.end {
                return Err(Error::Config(format!(
                    "detection windows for events {} and {} overlap; use a smaller window length",
                    n - 1,
                    n
                )));
            }
        }
        windows.push(Window {
            event,
            nominal_start,
            start,
            end,
            clipped,
            clamped,
        });
    }
    Ok(DetectionWindowSet {
        length: options.length,
        lead: options.lead,
        windows,
    })
}
