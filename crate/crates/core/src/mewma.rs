//! One-sided multivariate EWMA scan.
//!
//! ```text
//! S_0 = 0
//! S_t = max(0, λ (X_t − μ) + (1 − λ) S_{t−1})        (elementwise)
//! E_t = S_tᵀ Σ_S∞⁻¹ S_t,    Σ_S∞ = λ / (2 − λ) · Σ
//! ```
//!
//! μ and Σ come from the baseline (non-event) weeks. `S` is never reset after
//! an alarm, so alarms arrive in runs; only the first week of each run (the
//! cluster onset) is used for scoring.
//!
//! Because the recursion for `S` is elementwise, the state trajectory of any
//! predictor subset is the coordinate projection of the full trajectory.
//! [`SharedStates`] exploits this: it runs the recursion once per smoothing
//! value over every candidate and evaluates subsets by projection, which is
//! bit-identical to scanning the subset directly.

use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::events::EventSet;
use crate::panel::{AlignedPanel, WeekAxis};

/// Largest condition number accepted for Σ before ridge regularization.
pub const MAX_CONDITION: f64 = 1e12;
/// Initial ridge, relative to the mean variance.
pub const RIDGE_START: f64 = 1e-8;

/// Baseline mean and covariance of a predictor set.
#[derive(Debug, Clone, PartialEq)]
pub struct NullModel {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    /// Unbiased sample covariance before conditioning.
    pub raw_covariance: DMatrix<f64>,
    /// Symmetric positive-definite covariance used by the scan.
    pub covariance: DMatrix<f64>,
    /// Absolute ridge added to the diagonal (0 when none was needed).
    pub ridge: f64,
    pub baseline_weeks: usize,
}

impl NullModel {
    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn ridge_applied(&self) -> bool {
        self.ridge > 0.0
    }

    /// Builds a null model from a mean and covariance given directly.
    pub fn from_moments(names: Vec<String>, mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = names.len();
        if d == 0 || mean.len() != d || covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::Config("null model dimensions do not match".into()));
        }
        let (conditioned, ridge) = condition(&covariance)?;
        Ok(NullModel {
            names,
            mean,
            raw_covariance: covariance,
            covariance: conditioned,
            ridge,
            baseline_weeks: 0,
        })
    }

    /// Null model of the coordinates `indices`, conditioned afresh.
    pub fn project(&self, indices: &[usize]) -> Result<NullModel> {
        let raw = DMatrix::from_fn(indices.len(), indices.len(), |r, c| {
            self.raw_covariance[(indices[r], indices[c])]
        });
        let (covariance, ridge) = condition(&raw)?;
        Ok(NullModel {
            names: indices.iter().map(|&i| self.names[i].clone()).collect(),
            mean: indices.iter().map(|&i| self.mean[i]).collect(),
            raw_covariance: raw,
            covariance,
            ridge,
            baseline_weeks: self.baseline_weeks,
        })
    }
}

fn well_posed(m: &DMatrix<f64>) -> bool {
    if m.clone().cholesky().is_none() {
        return false;
    }
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    lo > 0.0 && hi / lo <= MAX_CONDITION
}

/// Returns an SPD version of `cov` and the absolute ridge that was added.
///
/// A singular or ill-conditioned matrix gets `δ · mean(diag)` on its
/// diagonal, starting at δ = 1e−8 and doubling until it is well posed.
pub fn condition(cov: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::Estimation("covariance has non-finite entries".into()));
    }
    if well_posed(cov) {
        return Ok((cov.clone(), 0.0));
    }
    let d = cov.nrows();
    let mut scale = cov.diagonal().mean();
    if !(scale > 0.0) {
        // Every predictor is constant; any positive scale works.
        scale = 1.0;
    }
    let mut delta = RIDGE_START;
    for _ in 0..200 {
        let ridge = delta * scale;
        let m = cov + DMatrix::<f64>::identity(d, d) * ridge;
        if well_posed(&m) {
            return Ok((m, ridge));
        }
        delta *= 2.0;
    }
    Err(Error::Estimation("covariance could not be regularized".into()))
}

/// Sample mean and unbiased covariance of `columns` over weeks where `mask`
/// is set. Each entry depends only on its own pair of columns, so the result
/// for a subset equals the sub-block of the result for a superset.
pub fn sample_moments(columns: &[&[f64]], mask: &[bool]) -> (Vec<f64>, DMatrix<f64>, usize) {
    let n = mask.iter().filter(|&&m| m).count();
    let d = columns.len();
    let mean: Vec<f64> = columns
        .iter()
        .map(|col| {
            let sum: f64 = col.iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| v).sum();
            sum / n as f64
        })
        .collect();
    let mut cov = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            let mut acc = 0.0;
            for t in 0..mask.len() {
                if mask[t] {
                    acc += (columns[i][t] - mean[i]) * (columns[j][t] - mean[j]);
                }
            }
            let v = acc / (n as f64 - 1.0);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    (mean, cov, n)
}

/// Unconditioned baseline moments of a (possibly large) predictor set.
///
/// With hundreds of candidates the full covariance is usually singular; it
/// is only ever used through sub-blocks, each conditioned on its own.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineMoments {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub weeks: usize,
}

impl BaselineMoments {
    pub fn estimate(panel: &AlignedPanel, mask: &[bool], names: &[String]) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Config("predictor subset is empty".into()));
        }
        if mask.len() != panel.len() {
            return Err(Error::Config("baseline mask length does not match the panel".into()));
        }
        let columns = columns_for(panel, names)?;
        let (mean, covariance, weeks) = sample_moments(&columns, mask);
        Ok(BaselineMoments {
            names: names.to_vec(),
            mean,
            covariance,
            weeks,
        })
    }

    /// Conditioned null model of the coordinates `indices`.
    pub fn null_for(&self, indices: &[usize]) -> Result<NullModel> {
        let d = indices.len();
        if d == 0 {
            return Err(Error::Config("predictor subset is empty".into()));
        }
        if self.weeks < d + 2 {
            return Err(Error::Estimation(format!(
                "{} baseline weeks is too few for {d} predictors (need at least {})",
                self.weeks,
                d + 2
            )));
        }
        let raw = DMatrix::from_fn(d, d, |r, c| self.covariance[(indices[r], indices[c])]);
        let (covariance, ridge) = condition(&raw)?;
        Ok(NullModel {
            names: indices.iter().map(|&i| self.names[i].clone()).collect(),
            mean: indices.iter().map(|&i| self.mean[i]).collect(),
            raw_covariance: raw,
            covariance,
            ridge,
            baseline_weeks: self.weeks,
        })
    }
}

/// Estimates μ and Σ for `subset` over weeks where `mask` is true.
pub fn estimate_null_masked(panel: &AlignedPanel, mask: &[bool], subset: &[String]) -> Result<NullModel> {
    let moments = BaselineMoments::estimate(panel, mask, subset)?;
    moments.null_for(&(0..subset.len()).collect::<Vec<_>>())
}

/// Estimates the null model from every week outside an event interval.
pub fn estimate_null(panel: &AlignedPanel, events: &EventSet, subset: &[String]) -> Result<NullModel> {
    estimate_null_masked(panel, &events.baseline_mask(panel.len()), subset)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub predictors: Vec<String>,
    pub lambda: f64,
    pub threshold: f64,
}

impl DetectorConfig {
    pub fn new(predictors: Vec<String>, lambda: f64, threshold: f64) -> Result<Self> {
        let cfg = DetectorConfig {
            predictors,
            lambda,
            threshold,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        validate_lambda(self.lambda)?;
        if !(self.threshold > 0.0) || !self.threshold.is_finite() {
            return Err(Error::Config(format!("threshold h = {} must be positive", self.threshold)));
        }
        if self.predictors.is_empty() {
            return Err(Error::Config("predictor subset is empty".into()));
        }
        Ok(())
    }
}

pub fn validate_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("smoothing λ = {lambda} must lie in (0, 1)")))
    }
}

/// Alarm rule. A zero threshold is the degenerate "alarm every week" limit.
#[inline]
pub fn fires(statistic: f64, threshold: f64) -> bool {
    threshold <= 0.0 || statistic > threshold
}

/// Quadratic form `sᵀ (c Σ)⁻¹ s` through the Cholesky factor of `c Σ`.
#[derive(Debug, Clone)]
pub struct StatisticForm {
    dim: usize,
    /// Row-major lower-triangular factor of Σ_S∞.
    lower: Vec<f64>,
}

impl StatisticForm {
    pub fn new(covariance: &DMatrix<f64>, lambda: f64) -> Result<Self> {
        let scaled = covariance * (lambda / (2.0 - lambda));
        let dim = scaled.nrows();
        let chol = scaled
            .cholesky()
            .ok_or_else(|| Error::Estimation("Σ_S∞ is not positive definite".into()))?;
        let l = chol.l();
        let mut lower = vec![0.0; dim * dim];
        for r in 0..dim {
            for c in 0..=r {
                lower[r * dim + c] = l[(r, c)];
            }
        }
        Ok(StatisticForm { dim, lower })
    }

    pub fn for_null(null: &NullModel, lambda: f64) -> Result<Self> {
        Self::new(&null.covariance, lambda)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Evaluates the form; `scratch` must hold at least `dim` values.
    #[inline]
    pub fn eval_with(&self, s: &[f64], scratch: &mut [f64]) -> f64 {
        let d = self.dim;
        let mut total = 0.0;
        for r in 0..d {
            let row = &self.lower[r * d..r * d + r];
            let mut acc = s[r];
            for (l, y) in row.iter().zip(scratch.iter()) {
                acc -= l * y;
            }
            let y = acc / self.lower[r * d + r];
            scratch[r] = y;
            total += y * y;
        }
        total
    }

    pub fn eval(&self, s: &[f64]) -> f64 {
        let mut scratch = vec![0.0; self.dim];
        self.eval_with(s, &mut scratch)
    }
}

/// Smoothed state trajectory over a list of week segments, with `S` reset to
/// zero at the start of every segment.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTable {
    pub weeks: Vec<usize>,
    pub dim: usize,
    /// Row-major `weeks.len() × dim`.
    pub values: Vec<f64>,
}

impl StateTable {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Coordinate projection onto `indices`.
    pub fn project(&self, indices: &[usize]) -> StateTable {
        let mut values = Vec::with_capacity(self.weeks.len() * indices.len());
        for i in 0..self.weeks.len() {
            let row = self.row(i);
            values.extend(indices.iter().map(|&k| row[k]));
        }
        StateTable {
            weeks: self.weeks.clone(),
            dim: indices.len(),
            values,
        }
    }

    pub fn statistic(&self, form: &StatisticForm) -> Vec<f64> {
        let mut scratch = vec![0.0; self.dim];
        (0..self.weeks.len())
            .map(|i| form.eval_with(self.row(i), &mut scratch))
            .collect()
    }

    /// Statistic for the coordinates `indices` without materializing the
    /// projected table.
    pub fn projected_statistic(&self, indices: &[usize], form: &StatisticForm) -> Vec<f64> {
        let mut s = vec![0.0; indices.len()];
        let mut scratch = vec![0.0; indices.len()];
        (0..self.weeks.len())
            .map(|i| {
                let row = self.row(i);
                for (dst, &k) in s.iter_mut().zip(indices) {
                    *dst = row[k];
                }
                form.eval_with(&s, &mut scratch)
            })
            .collect()
    }
}

/// Runs the smoothing recursion of `columns` around `mean`.
pub fn smoothed_states(columns: &[&[f64]], mean: &[f64], lambda: f64, segments: &[Range<usize>]) -> StateTable {
    let dim = columns.len();
    let total: usize = segments.iter().map(|r| r.len()).sum();
    let mut weeks = Vec::with_capacity(total);
    let mut values = Vec::with_capacity(total * dim);
    let mut s = vec![0.0; dim];
    for seg in segments {
        s.iter_mut().for_each(|v| *v = 0.0);
        for t in seg.clone() {
            for (j, state) in s.iter_mut().enumerate() {
                *state = (lambda * (columns[j][t] - mean[j]) + (1.0 - lambda) * *state).max(0.0);
            }
            weeks.push(t);
            values.extend_from_slice(&s);
        }
    }
    StateTable { weeks, dim, values }
}

/// Per-week statistic, alarm flags, and cluster onsets of one detector run.
#[derive(Debug, Clone, PartialEq)]
pub struct AlarmTrace {
    /// Panel week index of each entry (strictly increasing).
    pub weeks: Vec<usize>,
    pub statistic: Vec<f64>,
    pub alarms: Vec<bool>,
    /// Panel week of the first alarm in each run of consecutive alarm weeks.
    pub onsets: Vec<usize>,
}

impl AlarmTrace {
    pub fn from_alarms(weeks: Vec<usize>, statistic: Vec<f64>, alarms: Vec<bool>) -> Self {
        let onsets = cluster_onsets(&weeks, &alarms);
        AlarmTrace {
            weeks,
            statistic,
            alarms,
            onsets,
        }
    }

    pub fn from_statistic(weeks: Vec<usize>, statistic: Vec<f64>, threshold: f64) -> Self {
        let alarms = statistic.iter().map(|&e| fires(e, threshold)).collect();
        Self::from_alarms(weeks, statistic, alarms)
    }

    pub fn alarm_weeks(&self) -> Vec<usize> {
        self.weeks
            .iter()
            .zip(&self.alarms)
            .filter(|(_, &a)| a)
            .map(|(&w, _)| w)
            .collect()
    }

    /// Keeps only entries whose week satisfies `keep`; onsets are kept as
    /// computed on the full trace.
    pub fn restrict<F: Fn(usize) -> bool>(&self, keep: F) -> AlarmTrace {
        let idx: Vec<usize> = (0..self.weeks.len()).filter(|&i| keep(self.weeks[i])).collect();
        AlarmTrace {
            weeks: idx.iter().map(|&i| self.weeks[i]).collect(),
            statistic: idx.iter().map(|&i| self.statistic[i]).collect(),
            alarms: idx.iter().map(|&i| self.alarms[i]).collect(),
            onsets: self.onsets.iter().copied().filter(|&w| keep(w)).collect(),
        }
    }

    pub fn write_csv(&self, path: &Path, axis: &WeekAxis) -> Result<()> {
        let mut out = String::from("week,E,alarm,cluster_onset\n");
        let mut onsets = self.onsets.iter().peekable();
        for ((&w, &e), &a) in self.weeks.iter().zip(&self.statistic).zip(&self.alarms) {
            let onset = onsets.next_if_eq(&&w).is_some();
            out.push_str(&format!("{},{},{},{}\n", axis.week(w), e, a as u8, onset as u8));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// First week of every maximal run of alarms over consecutive weeks.
pub fn cluster_onsets(weeks: &[usize], alarms: &[bool]) -> Vec<usize> {
    let mut onsets = Vec::new();
    for i in 0..weeks.len() {
        if alarms[i] && (i == 0 || !alarms[i - 1] || weeks[i - 1] + 1 != weeks[i]) {
            onsets.push(weeks[i]);
        }
    }
    onsets
}

fn columns_for<'a>(panel: &'a AlignedPanel, names: &[String]) -> Result<Vec<&'a [f64]>> {
    names
        .iter()
        .map(|n| panel.series(n).map(|s| s.values.as_slice()))
        .collect()
}

fn check_subset(null: &NullModel, config: &DetectorConfig) -> Result<()> {
    config.validate()?;
    if null.names != config.predictors {
        return Err(Error::Config(format!(
            "null model covers {:?} but the detector uses {:?}",
            null.names, config.predictors
        )));
    }
    Ok(())
}

/// Scans the panel over `segments`, resetting `S` at each segment start.
pub fn run_scan_segments(
    panel: &AlignedPanel,
    null: &NullModel,
    config: &DetectorConfig,
    segments: &[Range<usize>],
) -> Result<AlarmTrace> {
    check_subset(null, config)?;
    let (weeks, statistic) = scan_statistic(panel, null, config.lambda, segments)?;
    Ok(AlarmTrace::from_statistic(weeks, statistic, config.threshold))
}

/// Week indices and statistic of the null model's predictors over
/// `segments`, independent of any threshold.
pub fn scan_statistic(
    panel: &AlignedPanel,
    null: &NullModel,
    lambda: f64,
    segments: &[Range<usize>],
) -> Result<(Vec<usize>, Vec<f64>)> {
    validate_lambda(lambda)?;
    let columns = columns_for(panel, &null.names)?;
    if segments.iter().any(|r| r.end > panel.len()) {
        return Err(Error::Config("scan segment extends past the panel".into()));
    }
    let states = smoothed_states(&columns, &null.mean, lambda, segments);
    let form = StatisticForm::for_null(null, lambda)?;
    let statistic = states.statistic(&form);
    Ok((states.weeks, statistic))
}

/// Scans the whole panel from `S_0 = 0` with no resets.
pub fn run_scan(panel: &AlignedPanel, null: &NullModel, config: &DetectorConfig) -> Result<AlarmTrace> {
    run_scan_segments(panel, null, config, &[0..panel.len()])
}

/// Stored state trajectories of every candidate for each smoothing value.
#[derive(Debug, Clone)]
pub struct SharedStates {
    pub lambdas: Vec<f64>,
    pub names: Vec<String>,
    pub tables: Vec<StateTable>,
}

impl SharedStates {
    /// Runs the recursion for every λ over `segments`, centring each
    /// predictor on `mean`.
    pub fn compute(
        panel: &AlignedPanel,
        names: &[String],
        mean: &[f64],
        lambdas: &[f64],
        segments: &[Range<usize>],
    ) -> Result<Self> {
        for &l in lambdas {
            validate_lambda(l)?;
        }
        if segments.iter().any(|r| r.end > panel.len()) {
            return Err(Error::Config("scan segment extends past the panel".into()));
        }
        let columns = columns_for(panel, names)?;
        let tables = lambdas
            .iter()
            .map(|&l| smoothed_states(&columns, mean, l, segments))
            .collect();
        Ok(SharedStates {
            lambdas: lambdas.to_vec(),
            names: names.to_vec(),
            tables,
        })
    }

    pub fn lambda_index(&self, lambda: f64) -> Option<usize> {
        self.lambdas.iter().position(|&l| l == lambda)
    }

    /// Statistic of the subset `indices` at the `k`-th λ, using the subset
    /// null model for Σ_S∞.
    pub fn subset_statistic(&self, k: usize, indices: &[usize], subset_null: &NullModel) -> Result<Vec<f64>> {
        let form = StatisticForm::for_null(subset_null, self.lambdas[k])?;
        Ok(self.tables[k].projected_statistic(indices, &form))
    }

    pub fn subset_trace(&self, k: usize, indices: &[usize], subset_null: &NullModel, threshold: f64) -> Result<AlarmTrace> {
        let stat = self.subset_statistic(k, indices, subset_null)?;
        Ok(AlarmTrace::from_statistic(self.tables[k].weeks.clone(), stat, threshold))
    }

    pub fn storage_shape(&self) -> (usize, usize, usize) {
        let weeks = self.tables.first().map_or(0, |t| t.weeks.len());
        (self.lambdas.len(), self.names.len(), weeks)
    }
}

/// Convenience: the `precompute` entry point over the whole panel.
pub fn precompute_shared_states(panel: &AlignedPanel, full_null: &NullModel, lambdas: &[f64]) -> Result<SharedStates> {
    SharedStates::compute(panel, &full_null.names, &full_null.mean, lambdas, &[0..panel.len()])
}
