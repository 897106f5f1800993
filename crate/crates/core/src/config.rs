//! Experiment configuration: a flat `key = value` file with defaults for
//! every key.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::calibrate::{default_lambda_grid, CalibrationSettings, SimulationSettings, SolverSettings, Spacing};
use crate::error::{Error, Result};
use crate::events::WindowOptions;
use crate::kv::KeyValues;
use crate::select::{CvSettings, FoldOptions, SelectionSettings, COMPARE_HELD_OUT, SELECT_HELD_OUT};

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "EWARN_OUT";
pub const DEFAULT_OUTPUT: &str = "ewarn-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldPreset {
    /// One season held out per fold.
    Select,
    /// Two seasons held out per fold.
    Compare,
}

impl FoldPreset {
    pub fn held_out(self) -> usize {
        match self {
            FoldPreset::Select => SELECT_HELD_OUT,
            FoldPreset::Compare => COMPARE_HELD_OUT,
        }
    }
}

impl FromStr for FoldPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "select-6fold" | "select" => Ok(FoldPreset::Select),
            "compare-3fold" | "compare" => Ok(FoldPreset::Compare),
            _ => Err(Error::Config(format!(
                "unknown fold preset `{s}` (expected select-6fold or compare-3fold)"
            ))),
        }
    }
}

impl std::fmt::Display for FoldPreset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FoldPreset::Select => "select-6fold",
            FoldPreset::Compare => "compare-3fold",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Panel manifest.
    pub panel: Option<PathBuf>,
    pub epsilon: f64,
    pub min_duration: usize,
    pub window_length: usize,
    pub window_lead: usize,
    pub window_clamp: bool,
    pub atfs: f64,
    pub simulations: usize,
    pub sequence_length: Option<usize>,
    pub spacing: Spacing,
    pub solver_tolerance: f64,
    pub solver_max_iterations: usize,
    pub lambdas: Vec<f64>,
    pub k_max: usize,
    pub min_improvement: f64,
    pub replicates: usize,
    /// Folds used by `select`; `evaluate` always uses the comparison preset.
    pub folds: FoldPreset,
    pub compare_folds: FoldPreset,
    pub max_train_seasons: Option<usize>,
    pub gap_weeks: usize,
    pub reset_test_scan: bool,
    /// Candidate predictors; empty means every candidate in the panel.
    pub candidates: Vec<String>,
    /// Model evaluated as `optimized`; empty means the aggregate selection.
    pub subset: Vec<String>,
    pub reporting_epsilon: f64,
    pub week_grid: Vec<u32>,
    pub rise_grid: Vec<u32>,
    pub seed: u64,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            panel: None,
            epsilon: 1.25,
            min_duration: 3,
            window_length: 16,
            window_lead: 8,
            window_clamp: false,
            atfs: crate::calibrate::DEFAULT_ATFS,
            simulations: crate::calibrate::DEFAULT_SIMULATIONS,
            sequence_length: None,
            spacing: Spacing::AllAlarms,
            solver_tolerance: 0.5,
            solver_max_iterations: 100,
            lambdas: default_lambda_grid(),
            k_max: 8,
            min_improvement: 0.0,
            replicates: 40,
            folds: FoldPreset::Select,
            compare_folds: FoldPreset::Compare,
            max_train_seasons: None,
            gap_weeks: 0,
            reset_test_scan: false,
            candidates: Vec::new(),
            subset: Vec::new(),
            reporting_epsilon: 2.0,
            week_grid: (1..=53).collect(),
            rise_grid: (2..=20).collect(),
            seed: 1,
            output: default_output(),
        }
    }
}

/// `$EWARN_OUT` if set, else `ewarn-out`.
pub fn default_output() -> PathBuf {
    std::env::var_os(OUTPUT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT))
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("`{key}`: cannot parse `{value}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn parse_range_list(key: &str, value: &str) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    for part in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => {
                let (a, b): (u32, u32) = (parse_value(key, a.trim())?, parse_value(key, b.trim())?);
                out.extend(a..=b);
            }
            None => out.push(parse_value(key, part)?),
        }
    }
    Ok(out)
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let kv = KeyValues::read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut c = ExperimentConfig::default();
        c.apply(&kv, base)?;
        Ok(c)
    }

    /// Overrides fields from `kv`; relative paths resolve against `base`.
    pub fn apply(&mut self, kv: &KeyValues, base: &Path) -> Result<()> {
        let path = |v: &str| {
            let p = Path::new(v);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        for (key, value) in &kv.entries {
            let (k, v) = (key.as_str(), value.as_str());
            match k {
                "panel" => self.panel = (!v.is_empty()).then(|| path(v)),
                "epsilon" => self.epsilon = parse_value(k, v)?,
                "min_duration" => self.min_duration = parse_value(k, v)?,
                "window_length" => self.window_length = parse_value(k, v)?,
                "window_lead" => self.window_lead = parse_value(k, v)?,
                "window_clamp" => self.window_clamp = parse_value(k, v)?,
                "atfs" => self.atfs = parse_value(k, v)?,
                "simulations" => self.simulations = parse_value(k, v)?,
                "sequence_length" => {
                    self.sequence_length = if v == "auto" { None } else { Some(parse_value(k, v)?) }
                }
                "spacing" => self.spacing = parse_value(k, v)?,
                "solver_tolerance" => self.solver_tolerance = parse_value(k, v)?,
                "solver_max_iterations" => self.solver_max_iterations = parse_value(k, v)?,
                "lambdas" => self.lambdas = parse_list(k, v)?,
                "k_max" => self.k_max = parse_value(k, v)?,
                "min_improvement" => self.min_improvement = parse_value(k, v)?,
                "replicates" => self.replicates = parse_value(k, v)?,
                "folds" => self.folds = v.parse()?,
                "compare_folds" => self.compare_folds = v.parse()?,
                "max_train_seasons" => {
                    self.max_train_seasons = if v == "all" { None } else { Some(parse_value(k, v)?) }
                }
                "gap_weeks" => self.gap_weeks = parse_value(k, v)?,
                "reset_test_scan" => self.reset_test_scan = parse_value(k, v)?,
                "candidates" => self.candidates = parse_list(k, v)?,
                "subset" => self.subset = parse_list(k, v)?,
                "reporting_epsilon" => self.reporting_epsilon = parse_value(k, v)?,
                "week_grid" => self.week_grid = parse_range_list(k, v)?,
                "rise_grid" => self.rise_grid = parse_range_list(k, v)?,
                "seed" => self.seed = parse_value(k, v)?,
                "output" => self.output = path(v),
                _ => return Err(Error::Config(format!("unknown config key `{k}`"))),
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.epsilon.is_finite()) {
            return bad(format!("epsilon {} is not finite", self.epsilon));
        }
        if self.min_duration == 0 {
            return bad("min_duration must be at least 1".into());
        }
        if self.window_length == 0 || self.window_lead > self.window_length {
            return bad(format!(
                "window lead {} must be within the window length {}",
                self.window_lead, self.window_length
            ));
        }
        if !(self.atfs >= 2.0) || !self.atfs.is_finite() {
            return bad(format!("atfs {} must be at least 2 weeks", self.atfs));
        }
        if self.simulations == 0 {
            return bad("simulations must be at least 1".into());
        }
        if self.lambdas.is_empty() {
            return bad("lambdas is empty".into());
        }
        for &l in &self.lambdas {
            crate::mewma::validate_lambda(l)?;
        }
        if self.k_max == 0 {
            return bad("k_max must be at least 1".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.week_grid.is_empty() || self.rise_grid.is_empty() {
            return bad("baseline grids must be nonempty".into());
        }
        if self.reporting_epsilon < self.epsilon {
            return bad(format!(
                "reporting_epsilon {} is below the event threshold {}",
                self.reporting_epsilon, self.epsilon
            ));
        }
        Ok(())
    }

    pub fn window_options(&self) -> WindowOptions {
        WindowOptions {
            length: self.window_length,
            lead: self.window_lead,
            clamp_to_onset_minimum: self.window_clamp,
        }
    }

    pub fn calibration(&self) -> CalibrationSettings {
        CalibrationSettings {
            target_atfs: self.atfs,
            lambdas: self.lambdas.clone(),
            simulation: SimulationSettings {
                simulations: self.simulations,
                length: self.sequence_length,
                spacing: self.spacing,
            },
            solver: SolverSettings {
                tolerance: self.solver_tolerance,
                max_iterations: self.solver_max_iterations,
            },
        }
    }

    pub fn cv_settings(&self) -> CvSettings {
        CvSettings {
            calibration: self.calibration(),
            reset_test_scan: self.reset_test_scan,
        }
    }

    pub fn fold_options(&self) -> FoldOptions {
        FoldOptions {
            max_train_seasons: self.max_train_seasons,
            gap_weeks: self.gap_weeks,
        }
    }

    pub fn selection(&self) -> SelectionSettings {
        SelectionSettings {
            k_max: self.k_max,
            min_improvement: self.min_improvement,
        }
    }

    /// Every key with its value, defaults included, in a stable order.
    pub fn resolved_text(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<usize>, none: &str| v.map_or(none.to_string(), |x| x.to_string());
        let _ = writeln!(s, "panel = {}", self.panel.as_ref().map_or(String::new(), |p| p.display().to_string()));
        let _ = writeln!(s, "epsilon = {}", self.epsilon);
        let _ = writeln!(s, "min_duration = {}", self.min_duration);
        let _ = writeln!(s, "window_length = {}", self.window_length);
        let _ = writeln!(s, "window_lead = {}", self.window_lead);
        let _ = writeln!(s, "window_clamp = {}", self.window_clamp);
        let _ = writeln!(s, "atfs = {}", self.atfs);
        let _ = writeln!(s, "simulations = {}", self.simulations);
        let _ = writeln!(s, "sequence_length = {}", opt(self.sequence_length, "auto"));
        let _ = writeln!(s, "spacing = {}", self.spacing);
        let _ = writeln!(s, "solver_tolerance = {}", self.solver_tolerance);
        let _ = writeln!(s, "solver_max_iterations = {}", self.solver_max_iterations);
        let _ = writeln!(s, "lambdas = {}", join(&self.lambdas));
        let _ = writeln!(s, "k_max = {}", self.k_max);
        let _ = writeln!(s, "min_improvement = {}", self.min_improvement);
        let _ = writeln!(s, "replicates = {}", self.replicates);
        let _ = writeln!(s, "folds = {}", self.folds);
        let _ = writeln!(s, "compare_folds = {}", self.compare_folds);
        let _ = writeln!(s, "max_train_seasons = {}", opt(self.max_train_seasons, "all"));
        let _ = writeln!(s, "gap_weeks = {}", self.gap_weeks);
        let _ = writeln!(s, "reset_test_scan = {}", self.reset_test_scan);
        let _ = writeln!(s, "candidates = {}", self.candidates.join(","));
        let _ = writeln!(s, "subset = {}", self.subset.join(","));
        let _ = writeln!(s, "reporting_epsilon = {}", self.reporting_epsilon);
        let _ = writeln!(s, "week_grid = {}", join(&self.week_grid));
        let _ = writeln!(s, "rise_grid = {}", join(&self.rise_grid));
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "output = {}", self.output.display());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_operating_point() {
        let c = ExperimentConfig::default();
        assert_eq!((c.epsilon, c.window_length, c.window_lead), (1.25, 16, 8));
        assert_eq!((c.atfs, c.simulations, c.replicates, c.k_max), (20.0, 1000, 40, 8));
        assert_eq!(c.lambdas.len(), 9);
        assert_eq!(c.folds.held_out(), 1);
        assert_eq!(c.compare_folds.held_out(), 2);
    }

    #[test]
    fn resolved_text_round_trips() {
        let mut c = ExperimentConfig::default();
        c.candidates = vec!["a".into(), "b".into()];
        c.max_train_seasons = Some(3);
        c.panel = Some(PathBuf::from("/x/panel.manifest"));
        c.output = PathBuf::from("/tmp/out");
        let kv = KeyValues::parse(&c.resolved_text(), Path::new("c")).unwrap();
        let mut back = ExperimentConfig::default();
        back.apply(&kv, Path::new("/")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_key_and_bad_value_are_config_errors() {
        let mut c = ExperimentConfig::default();
        let kv = KeyValues::parse("windw_length = 3", Path::new("c")).unwrap();
        assert!(matches!(c.apply(&kv, Path::new(".")), Err(Error::Config(_))));
        let kv = KeyValues::parse("atfs = twenty", Path::new("c")).unwrap();
        assert!(matches!(c.apply(&kv, Path::new(".")), Err(Error::Config(_))));
    }

    #[test]
    fn grid_ranges() {
        assert_eq!(parse_range_list("g", "30..33, 40").unwrap(), vec![30, 31, 32, 33, 40]);
    }
}
