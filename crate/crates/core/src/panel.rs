//! Weekly time-series panels: a gold-standard series plus candidate
//! predictors on a shared, gap-free ISO-week axis.
//!
//! Series files follow a two-column CSV contract (`week,value`, weeks written
//! as `YYYY-Www`). Loading trims every file to the common overlap; nothing is
//! imputed, rescaled or detrended.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::Rng;

use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::seed;

/// A calendar week in ISO-8601 week numbering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IsoWeek {
    pub year: i32,
    pub week: u32,
}

impl IsoWeek {
    pub fn new(year: i32, week: u32) -> Result<Self> {
        NaiveDate::from_isoywd_opt(year, week, Weekday::Mon)
            .map(|_| IsoWeek { year, week })
            .ok_or_else(|| Error::Validation(format!("{year}-W{week:02} is not an ISO week")))
    }

    fn monday(self) -> NaiveDate {
        NaiveDate::from_isoywd_opt(self.year, self.week, Weekday::Mon)
            .expect("IsoWeek is validated on construction")
    }

    /// Dense week number; consecutive weeks differ by exactly one.
    pub fn ordinal(self) -> i64 {
        i64::from(self.monday().num_days_from_ce()).div_euclid(7)
    }

    pub fn from_ordinal(ordinal: i64) -> Self {
        // Ordinal weeks start on the Monday of the proleptic calendar week.
        let days = ordinal * 7 + 1;
        let date = NaiveDate::from_num_days_from_ce_opt(days as i32)
            .expect("week ordinal within chrono's range");
        let iso = date.iso_week();
        IsoWeek {
            year: iso.year(),
            week: iso.week(),
        }
    }

    pub fn offset(self, weeks: i64) -> Self {
        Self::from_ordinal(self.ordinal() + weeks)
    }
}

impl fmt::Display for IsoWeek {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-W{:02}", self.year, self.week)
    }
}

impl FromStr for IsoWeek {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Validation(format!("`{s}` is not a YYYY-Www week"));
        let (year, week) = s.trim().split_once("-W").ok_or_else(bad)?;
        if year.len() != 4 || week.len() != 2 {
            return Err(bad());
        }
        let year = year.parse::<i32>().map_err(|_| bad())?;
        let week = week.parse::<u32>().map_err(|_| bad())?;
        IsoWeek::new(year, week)
    }
}

/// Consecutive weeks starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WeekAxis {
    pub start: IsoWeek,
    pub len: usize,
}

impl WeekAxis {
    pub fn new(start: IsoWeek, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Validation("week axis must cover at least one week".into()));
        }
        Ok(WeekAxis { start, len })
    }

    pub fn week(&self, index: usize) -> IsoWeek {
        self.start.offset(index as i64)
    }

    pub fn index_of(&self, week: IsoWeek) -> Option<usize> {
        let d = week.ordinal() - self.start.ordinal();
        (d >= 0 && (d as usize) < self.len).then_some(d as usize)
    }

    pub fn end(&self) -> IsoWeek {
        self.week(self.len - 1)
    }

    /// Sub-axis covering `[from, from + len)`.
    pub fn slice(&self, from: usize, len: usize) -> Result<Self> {
        if from + len > self.len {
            return Err(Error::Validation("axis slice out of range".into()));
        }
        WeekAxis::new(self.week(from), len)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
    pub unit: String,
}

impl Series {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Series {
            name: name.into(),
            values,
            unit: String::new(),
        }
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = unit.into();
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Gold standard plus ordered candidate predictors on one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPanel {
    axis: WeekAxis,
    gold: Series,
    candidates: Vec<Series>,
}

impl AlignedPanel {
    pub fn new(axis: WeekAxis, gold: Series, candidates: Vec<Series>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in std::iter::once(&gold).chain(&candidates) {
            if s.values.len() != axis.len {
                return Err(Error::Validation(format!(
                    "series `{}` has {} values but the axis has {} weeks",
                    s.name,
                    s.values.len(),
                    axis.len
                )));
            }
            if let Some(i) = s.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "series `{}` has a non-finite value at week {}",
                    s.name,
                    axis.week(i)
                )));
            }
        }
        for c in &candidates {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::DuplicateSeries(c.name.clone()));
            }
        }
        Ok(AlignedPanel {
            axis,
            gold,
            candidates,
        })
    }

    pub fn axis(&self) -> &WeekAxis {
        &self.axis
    }

    pub fn len(&self) -> usize {
        self.axis.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn gold(&self) -> &Series {
        &self.gold
    }

    pub fn candidates(&self) -> &[Series] {
        &self.candidates
    }

    pub fn candidate_names(&self) -> Vec<String> {
        self.candidates.iter().map(|s| s.name.clone()).collect()
    }

    pub fn candidate_index(&self, name: &str) -> Option<usize> {
        self.candidates.iter().position(|s| s.name == name)
    }

    /// Looks a predictor up among the candidates, falling back to the gold
    /// standard so the gold series can act as its own predictor.
    pub fn series(&self, name: &str) -> Result<&Series> {
        self.candidates
            .iter()
            .find(|s| s.name == name)
            .or_else(|| (self.gold.name == name).then_some(&self.gold))
            .ok_or_else(|| Error::UnknownSeries(name.to_string()))
    }

    /// Panel restricted to weeks `[from, from + len)`.
    pub fn slice(&self, from: usize, len: usize) -> Result<Self> {
        let axis = self.axis.slice(from, len)?;
        let cut = |s: &Series| Series {
            name: s.name.clone(),
            values: s.values[from..from + len].to_vec(),
            unit: s.unit.clone(),
        };
        AlignedPanel::new(axis, cut(&self.gold), self.candidates.iter().map(cut).collect())
    }

    /// Returns a copy with `extra` appended to the candidate list.
    pub fn with_candidates(&self, extra: Vec<Series>) -> Result<Self> {
        let mut candidates = self.candidates.clone();
        candidates.extend(extra);
        AlignedPanel::new(self.axis, self.gold.clone(), candidates)
    }

    /// Writes one CSV per series plus a manifest into `dir`; returns the
    /// manifest path.
    pub fn write_dir(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = String::new();
        let gold_file = format!("{}.csv", self.gold.name);
        write_series_csv(&dir.join(&gold_file), &self.axis, &self.gold)?;
        manifest.push_str(&format!("gold = {gold_file}\n"));
        for c in &self.candidates {
            let file = format!("{}.csv", c.name);
            if c.name != self.gold.name {
                write_series_csv(&dir.join(&file), &self.axis, c)?;
            }
            manifest.push_str(&format!("candidate = {file}\n"));
        }
        let path = dir.join("panel.manifest");
        std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Raw contents of one series file before alignment.
#[derive(Debug, Clone)]
struct WeeklyFile {
    name: String,
    first: i64,
    values: Vec<f64>,
}

fn series_name(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| Error::Validation(format!("cannot derive a series name from {}", path.display())))
}

fn read_weekly_file(path: &Path) -> Result<WeeklyFile> {
    let parse_err = |line: u64, message: String| Error::Parse {
        file: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_err(1, format!("{other:?}")),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "week" || &headers[1] != "value" {
        return Err(parse_err(1, "header must be `week,value`".into()));
    }

    let mut by_week: BTreeMap<i64, Option<f64>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(parse_err(line, format!("expected 2 fields, found {}", record.len())));
        }
        let week: IsoWeek = record[0]
            .parse()
            .map_err(|e: Error| parse_err(line, e.to_string()))?;
        let value = match &record[1] {
            "" | "NA" | "NaN" | "nan" => None,
            text => {
                let v: f64 = text
                    .parse()
                    .map_err(|_| parse_err(line, format!("`{text}` is not a number")))?;
                if !v.is_finite() {
                    return Err(parse_err(line, format!("`{text}` is not finite")));
                }
                Some(v)
            }
        };
        if by_week.insert(week.ordinal(), value).is_some() {
            return Err(Error::DuplicateWeek {
                file: path.to_path_buf(),
                week: week.to_string(),
            });
        }
    }

    let Some((&first, _)) = by_week.first_key_value() else {
        return Err(parse_err(1, "file has no data rows".into()));
    };
    let last = *by_week.last_key_value().unwrap().0;
    let mut values = Vec::with_capacity((last - first + 1) as usize);
    for ord in first..=last {
        match by_week.get(&ord) {
            Some(Some(v)) => values.push(*v),
            _ => {
                return Err(Error::MissingData {
                    file: path.to_path_buf(),
                    week: IsoWeek::from_ordinal(ord).to_string(),
                })
            }
        }
    }
    Ok(WeeklyFile {
        name: series_name(path)?,
        first,
        values,
    })
}

/// Minimum number of shared weeks for a loadable panel.
pub const MIN_OVERLAP_WEEKS: usize = 3;

/// Loads and aligns a gold-standard file with candidate files, trimming all
/// series to the intersection of their week ranges.
pub fn load_panel(gold: &Path, candidates: &[PathBuf]) -> Result<AlignedPanel> {
    let gold_file = read_weekly_file(gold)?;
    let mut seen = HashSet::new();
    let mut files = Vec::with_capacity(candidates.len());
    for path in candidates {
        let f = read_weekly_file(path)?;
        if !seen.insert(f.name.clone()) {
            return Err(Error::DuplicateSeries(f.name));
        }
        files.push(f);
    }

    let all = || std::iter::once(&gold_file).chain(&files);
    let start = all().map(|f| f.first).max().unwrap();
    let end = all()
        .map(|f| f.first + f.values.len() as i64 - 1)
        .min()
        .unwrap();
    if end < start {
        return Err(Error::Alignment("week ranges do not overlap".into()));
    }
    let len = (end - start + 1) as usize;
    if len < MIN_OVERLAP_WEEKS {
        return Err(Error::Alignment(format!(
            "week ranges overlap in only {len} weeks (need at least {MIN_OVERLAP_WEEKS})"
        )));
    }

    let trim = |f: &WeeklyFile| {
        let from = (start - f.first) as usize;
        Series::new(f.name.clone(), f.values[from..from + len].to_vec())
    };
    let axis = WeekAxis::new(IsoWeek::from_ordinal(start), len)?;
    AlignedPanel::new(axis, trim(&gold_file), files.iter().map(trim).collect())
}

/// Ordered list of series files making up a panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelManifest {
    pub gold: PathBuf,
    pub candidates: Vec<PathBuf>,
}

impl PanelManifest {
    /// Reads `gold = ...` and repeated `candidate = ...` lines. Relative
    /// paths are resolved against the manifest's directory.
    pub fn read(path: &Path) -> Result<Self> {
        let kv = KeyValues::read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &str| {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let gold = kv
            .get("gold")
            .map(resolve)
            .ok_or_else(|| Error::Config(format!("{}: manifest has no `gold` entry", path.display())))?;
        let candidates = kv.get_all("candidate").map(resolve).collect();
        Ok(PanelManifest { gold, candidates })
    }

    pub fn load(&self) -> Result<AlignedPanel> {
        load_panel(&self.gold, &self.candidates)
    }
}

pub fn write_series_csv(path: &Path, axis: &WeekAxis, series: &Series) -> Result<()> {
    let mut out = String::with_capacity(series.values.len() * 16 + 12);
    out.push_str("week,value\n");
    for (i, v) in series.values.iter().enumerate() {
        out.push_str(&format!("{},{}\n", axis.week(i), v));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Parameters of a synthetic seasonal-epidemic panel.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPanelSpec {
    pub seasons: usize,
    pub weeks_per_season: usize,
    pub baseline_level: f64,
    pub peak_height: f64,
    pub peak_week_jitter: usize,
    pub noise_scale: f64,
    pub predictor_count: usize,
    /// Weeks by which each predictor anticipates the gold standard.
    pub predictor_lead: usize,
    /// Extra pure-noise candidates with no epidemic signal.
    pub decoy_count: usize,
    pub start: IsoWeek,
    pub rng_seed: u64,
}

impl Default for SyntheticPanelSpec {
    fn default() -> Self {
        SyntheticPanelSpec {
            seasons: 6,
            weeks_per_season: 52,
            baseline_level: 0.8,
            peak_height: 4.0,
            peak_week_jitter: 2,
            noise_scale: 0.05,
            predictor_count: 5,
            predictor_lead: 3,
            decoy_count: 0,
            start: IsoWeek { year: 2010, week: 27 },
            rng_seed: 7,
        }
    }
}

impl SyntheticPanelSpec {
    fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Validation(format!("synthetic panel: {m}")));
        if self.seasons == 0 {
            return fail("seasons must be at least 1");
        }
        if self.predictor_count == 0 {
            return fail("predictor count must be at least 1");
        }
        if self.weeks_per_season < 8 {
            return fail("weeks per season must be at least 8");
        }
        if !(self.peak_height > 0.0) || !self.peak_height.is_finite() {
            return fail("peak height must be positive");
        }
        if !(self.baseline_level >= 0.0) || !self.baseline_level.is_finite() {
            return fail("baseline level must be nonnegative");
        }
        if !(self.noise_scale >= 0.0) || !self.noise_scale.is_finite() {
            return fail("noise scale must be nonnegative");
        }
        if 4 * self.peak_week_jitter >= self.weeks_per_season {
            return fail("peak-week jitter must be below a quarter season");
        }
        if self.predictor_lead >= self.weeks_per_season {
            return fail("predictor lead must be shorter than a season");
        }
        Ok(())
    }

    /// Half-width of the epidemic pulse in weeks.
    pub fn pulse_half_width(&self) -> f64 {
        self.weeks_per_season as f64 / 4.0
    }

    /// Index of the week each season peaks, given the drawn jitters.
    fn peak_weeks(&self, jitters: &[i64]) -> Vec<i64> {
        jitters
            .iter()
            .enumerate()
            .map(|(s, j)| (s * self.weeks_per_season + self.weeks_per_season / 2) as i64 + j)
            .collect()
    }
}

/// Raised-cosine bump: 1 at the centre, 0 beyond `half_width`.
fn pulse(offset: f64, half_width: f64) -> f64 {
    if offset.abs() >= half_width {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * offset / half_width).cos())
    }
}

/// Generates a seeded synthetic panel: the gold standard is a train of
/// raised-cosine seasonal pulses over a flat baseline plus bounded uniform
/// noise; each predictor is the gold standard shifted earlier by
/// `predictor_lead` weeks plus its own noise, truncated at zero.
pub fn generate_synthetic(spec: &SyntheticPanelSpec) -> Result<AlignedPanel> {
    spec.validate()?;
    let len = spec.seasons * spec.weeks_per_season;
    let ext = len + spec.predictor_lead;
    let half_width = spec.pulse_half_width();
    let jitter = spec.peak_week_jitter as i64;

    let mut gold_rng = seed::rng(seed::derive(spec.rng_seed, 0));
    // One extra season so shifted predictors can look past the last week.
    let jitters: Vec<i64> = (0..=spec.seasons)
        .map(|_| {
            if jitter == 0 {
                0
            } else {
                gold_rng.random_range(-jitter..=jitter)
            }
        })
        .collect();
    let peaks = spec.peak_weeks(&jitters);

    let noise = |rng: &mut rand_chacha::ChaCha8Rng| {
        if spec.noise_scale == 0.0 {
            0.0
        } else {
            spec.noise_scale * rng.random_range(-1.0..=1.0)
        }
    };
    let gold_ext: Vec<f64> = (0..ext)
        .map(|t| {
            let season = t / spec.weeks_per_season;
            let offset = t as f64 - peaks[season] as f64;
            let clean = spec.baseline_level + spec.peak_height * pulse(offset, half_width);
            (clean + noise(&mut gold_rng)).max(0.0)
        })
        .collect();

    let mut candidates = Vec::with_capacity(spec.predictor_count + spec.decoy_count);
    for j in 0..spec.predictor_count {
        let mut rng = seed::rng(seed::derive(spec.rng_seed, 1 + j as u64));
        let values = (0..len)
            .map(|t| (gold_ext[t + spec.predictor_lead] + noise(&mut rng)).max(0.0))
            .collect();
        candidates.push(Series::new(format!("pred_{}", j + 1), values).with_unit("synthetic"));
    }
    for j in 0..spec.decoy_count {
        let mut rng = seed::rng(seed::derive(spec.rng_seed, 10_000 + j as u64));
        let values = (0..len)
            .map(|_| (spec.baseline_level + noise(&mut rng)).max(0.0))
            .collect();
        candidates.push(Series::new(format!("decoy_{}", j + 1), values).with_unit("synthetic"));
    }

    let gold = Series::new("gold", gold_ext[..len].to_vec()).with_unit("synthetic percent");
    AlignedPanel::new(WeekAxis::new(spec.start, len)?, gold, candidates)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn weekly_csv(first: IsoWeek, values: &[f64]) -> String {
        let mut s = String::from("week,value\n");
        for (i, v) in values.iter().enumerate() {
            s.push_str(&format!("{},{}\n", first.offset(i as i64), v));
        }
        s
    }

    #[test]
    fn iso_week_round_trips_through_ordinals() {
        let w: IsoWeek = "2015-W53".parse().unwrap();
        assert_eq!(w.offset(1).to_string(), "2016-W01");
        assert_eq!(IsoWeek::from_ordinal(w.ordinal()), w);
        assert!("2014-W53".parse::<IsoWeek>().is_err());
        assert!("2014-53".parse::<IsoWeek>().is_err());
    }

    #[test]
    fn load_trims_to_intersection() {
        let dir = tempfile::tempdir().unwrap();
        let base: IsoWeek = "2010-W01".parse().unwrap();
        let gold = write(dir.path(), "gold.csv", &weekly_csv(base, &vec![1.0; 100]));
        let cand = write(
            dir.path(),
            "c1.csv",
            &weekly_csv(base.offset(4), &(0..116).map(f64::from).collect::<Vec<_>>()),
        );
        let panel = load_panel(&gold, &[cand]).unwrap();
        assert_eq!(panel.len(), 96);
        assert_eq!(panel.axis().start, base.offset(4));
        assert_eq!(panel.candidates()[0].values[0], 0.0);
    }

    #[test]
    fn duplicate_series_names_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let base: IsoWeek = "2010-W01".parse().unwrap();
        let gold = write(dir.path(), "gold.csv", &weekly_csv(base, &[1.0; 5]));
        std::fs::create_dir(dir.path().join("sub")).unwrap();
        let a = write(dir.path(), "x.csv", &weekly_csv(base, &[1.0; 5]));
        let b = write(&dir.path().join("sub"), "x.csv", &weekly_csv(base, &[1.0; 5]));
        let err = load_panel(&gold, &[a, b]).unwrap_err();
        assert!(err.to_string().contains("duplicate series name"), "{err}");
    }

    #[test]
    fn gap_is_missing_data_naming_week() {
        let dir = tempfile::tempdir().unwrap();
        let base: IsoWeek = "2010-W01".parse().unwrap();
        let gold = write(dir.path(), "gold.csv", &weekly_csv(base, &[1.0; 40]));
        let mut body = String::from("week,value\n");
        for i in 0..40 {
            if i != 29 {
                body.push_str(&format!("{},1.0\n", base.offset(i)));
            }
        }
        let cand = write(dir.path(), "c.csv", &body);
        let err = load_panel(&gold, &[cand]).unwrap_err();
        match err {
            Error::MissingData { week, .. } => assert_eq!(week, "2010-W30"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn empty_value_is_missing_data() {
        let dir = tempfile::tempdir().unwrap();
        let gold = write(dir.path(), "gold.csv", "week,value\n2010-W01,1\n2010-W02,\n2010-W03,2\n");
        assert!(matches!(load_panel(&gold, &[]), Err(Error::MissingData { .. })));
    }

    #[test]
    fn duplicate_week_and_malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let dup = write(dir.path(), "d.csv", "week,value\n2010-W01,1\n2010-W01,2\n2010-W02,2\n");
        assert!(matches!(load_panel(&dup, &[]), Err(Error::DuplicateWeek { .. })));
        let bad = write(dir.path(), "b.csv", "week,value\n2010-W01,1\n2010-W02,abc\n");
        match load_panel(&bad, &[]).unwrap_err() {
            Error::Parse { line, file, .. } => {
                assert_eq!(line, 3);
                assert!(file.ends_with("b.csv"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn disjoint_ranges_fail_alignment() {
        let dir = tempfile::tempdir().unwrap();
        let base: IsoWeek = "2010-W01".parse().unwrap();
        let gold = write(dir.path(), "gold.csv", &weekly_csv(base, &[1.0; 10]));
        let far = write(dir.path(), "c.csv", &weekly_csv(base.offset(20), &[1.0; 10]));
        let short = write(dir.path(), "s.csv", &weekly_csv(base.offset(8), &[1.0; 10]));
        assert!(matches!(load_panel(&gold, &[far]), Err(Error::Alignment(_))));
        assert!(matches!(load_panel(&gold, &[short]), Err(Error::Alignment(_))));
    }

    #[test]
    fn gold_may_double_as_candidate() {
        let axis = WeekAxis::new("2010-W01".parse().unwrap(), 3).unwrap();
        let g = Series::new("ili", vec![1.0, 2.0, 3.0]);
        let p = AlignedPanel::new(axis, g.clone(), vec![g]).unwrap();
        assert_eq!(p.series("ili").unwrap().values, vec![1.0, 2.0, 3.0]);
        assert!(matches!(p.series("nope"), Err(Error::UnknownSeries(_))));
    }

    #[test]
    fn synthetic_is_seeded() {
        let spec = SyntheticPanelSpec::default();
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        let bits = |p: &AlignedPanel| {
            p.candidates()
                .iter()
                .flat_map(|s| s.values.iter().map(|v| v.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
        let c = generate_synthetic(&SyntheticPanelSpec { rng_seed: 8, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noiseless_unshifted_predictors_equal_gold() {
        let spec = SyntheticPanelSpec {
            noise_scale: 0.0,
            peak_week_jitter: 0,
            predictor_lead: 0,
            ..SyntheticPanelSpec::default()
        };
        let p = generate_synthetic(&spec).unwrap();
        for c in p.candidates() {
            assert_eq!(c.values, p.gold().values);
        }
    }

    #[test]
    fn synthetic_spec_validation() {
        let bad = SyntheticPanelSpec {
            peak_height: 0.0,
            ..SyntheticPanelSpec::default()
        };
        assert!(matches!(generate_synthetic(&bad), Err(Error::Validation(_))));
        let bad = SyntheticPanelSpec {
            seasons: 0,
            ..SyntheticPanelSpec::default()
        };
        assert!(generate_synthetic(&bad).is_err());
    }
}
