//! Alarm-threshold calibration against a false-alarm budget.
//!
//! The average time between false signals (ATFS) of a detector is estimated
//! by simulating sequences from its null model, running the scan, and
//! measuring the mean spacing of the resulting alarms. For a target ATFS φ the
//! threshold `h` is found with a bracketed secant iteration; repeating that
//! over a grid of λ values traces the constraint curve, and the point with
//! the best in-sample timeliness is kept.
//!
//! Within one solve every evaluation reuses the same simulated statistic
//! paths (common random numbers), so the objective is a deterministic step
//! function of `h`.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::events::{DetectionWindowSet, EventSet};
use crate::evaluate;
use crate::mewma::{fires, scan_statistic, validate_lambda, AlarmTrace, NullModel, StatisticForm};
use crate::panel::AlignedPanel;
use crate::seed;

/// Default target ATFS in weeks.
pub const DEFAULT_ATFS: f64 = 20.0;
/// Default number of simulated sequences per ATFS evaluation.
pub const DEFAULT_SIMULATIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Spacing {
    /// Spacing between consecutive alarm weeks.
    #[default]
    AllAlarms,
    /// Spacing between consecutive cluster onsets.
    ClusterOnsets,
}

impl std::str::FromStr for Spacing {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" | "alarms" => Ok(Spacing::AllAlarms),
            "onsets" | "clusters" => Ok(Spacing::ClusterOnsets),
            _ => Err(Error::Config(format!("unknown spacing mode `{s}` (use `all` or `onsets`)"))),
        }
    }
}

impl std::fmt::Display for Spacing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Spacing::AllAlarms => "all",
            Spacing::ClusterOnsets => "onsets",
        })
    }
}

/// Simulated null statistic paths for one (null model, λ) pair.
#[derive(Debug, Clone)]
pub struct NullSimulation {
    pub lambda: f64,
    pub sequences: usize,
    pub length: usize,
    pub seed: u64,
    /// Row-major `sequences × length`.
    statistic: Vec<f64>,
}

impl NullSimulation {
    /// Draws `sequences` independent i.i.d. multivariate-normal sequences
    /// from the null model and records the scan statistic of each. Sequence
    /// `i` uses its own RNG derived from `(seed, i)`.
    pub fn run(null: &NullModel, lambda: f64, sequences: usize, length: usize, seed: u64) -> Result<Self> {
        validate_lambda(lambda)?;
        if sequences == 0 || length == 0 {
            return Err(Error::Config("simulation needs at least one sequence of one week".into()));
        }
        let d = null.dim();
        let chol = null
            .covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Estimation("null covariance is not positive definite".into()))?;
        let l = chol.l();
        let lower: Vec<f64> = (0..d).flat_map(|r| (0..d).map(move |c| (r, c))).map(|rc| l[rc]).collect();
        let form = StatisticForm::for_null(null, lambda)?;

        let statistic: Vec<f64> = (0..sequences)
            .into_par_iter()
            .flat_map_iter(|i| {
                let mut rng = seed::rng(seed::derive(seed, i as u64));
                let mut z = vec![0.0; d];
                let mut s = vec![0.0; d];
                let mut scratch = vec![0.0; d];
                let mut out = Vec::with_capacity(length);
                for _ in 0..length {
                    for zj in z.iter_mut() {
                        *zj = StandardNormal.sample(&mut rng);
                    }
                    for r in 0..d {
                        let dev: f64 = (0..=r).map(|c| lower[r * d + c] * z[c]).sum();
                        s[r] = (lambda * dev + (1.0 - lambda) * s[r]).max(0.0);
                    }
                    out.push(form.eval_with(&s, &mut scratch));
                }
                out
            })
            .collect();
        Ok(NullSimulation {
            lambda,
            sequences,
            length,
            seed,
            statistic,
        })
    }

    pub fn sequence(&self, i: usize) -> &[f64] {
        &self.statistic[i * self.length..(i + 1) * self.length]
    }

    /// Mean spacing between signals, estimated as simulated weeks per
    /// signal pooled over all sequences; `+∞` when nothing signals.
    ///
    /// Counting signals rather than averaging the observed gaps keeps the
    /// estimate free of the truncation bias of finite sequences (gaps longer
    /// than a sequence are never observed) and makes it nondecreasing in
    /// `h`, since the alarm weeks at a higher threshold are a subset.
    pub fn atfs(&self, threshold: f64, spacing: Spacing) -> f64 {
        let signals: usize = (0..self.sequences)
            .map(|i| {
                let mut prev_alarm = false;
                let mut count = 0;
                for &e in self.sequence(i) {
                    let alarm = fires(e, threshold);
                    count += match spacing {
                        Spacing::AllAlarms => alarm,
                        Spacing::ClusterOnsets => alarm && !prev_alarm,
                    } as usize;
                    prev_alarm = alarm;
                }
                count
            })
            .sum();
        if signals == 0 {
            f64::INFINITY
        } else {
            (self.sequences * self.length) as f64 / signals as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtfsEstimate {
    pub lambda: f64,
    pub threshold: f64,
    /// Estimated ATFS in weeks (`+∞` if no spacing was observed).
    pub atfs: f64,
    pub simulations: usize,
    pub sequence_length: usize,
    pub seed: u64,
}

pub fn simulate_atfs(
    null: &NullModel,
    lambda: f64,
    threshold: f64,
    simulations: usize,
    length: usize,
    seed: u64,
) -> Result<AtfsEstimate> {
    simulate_atfs_with(null, lambda, threshold, simulations, length, seed, Spacing::AllAlarms)
}

pub fn simulate_atfs_with(
    null: &NullModel,
    lambda: f64,
    threshold: f64,
    simulations: usize,
    length: usize,
    seed: u64,
    spacing: Spacing,
) -> Result<AtfsEstimate> {
    let sim = NullSimulation::run(null, lambda, simulations, length, seed)?;
    Ok(AtfsEstimate {
        lambda,
        threshold,
        atfs: sim.atfs(threshold, spacing),
        simulations,
        sequence_length: length,
        seed,
    })
}

/// Monte-Carlo settings shared by every ATFS evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSettings {
    pub simulations: usize,
    /// Sequence length; `None` means ten times the target ATFS.
    pub length: Option<usize>,
    pub spacing: Spacing,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        SimulationSettings {
            simulations: DEFAULT_SIMULATIONS,
            length: None,
            spacing: Spacing::AllAlarms,
        }
    }
}

impl SimulationSettings {
    pub fn length_for(&self, target: f64) -> usize {
        self.length.unwrap_or_else(|| (10.0 * target).ceil().max(2.0) as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Accepted |ATFS − φ| in weeks.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tolerance: 0.5,
            max_iterations: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSolution {
    pub lambda: f64,
    pub target: f64,
    pub threshold: f64,
    pub atfs: f64,
    pub iterations: usize,
    /// Every `(h, ATFS(h))` the solver evaluated, in order.
    pub history: Vec<(f64, f64)>,
}

/// Solves `ATFS(h) = target` on a fixed simulation.
pub fn solve_on(sim: &NullSimulation, target: f64, spacing: Spacing, solver: &SolverSettings) -> Result<ThresholdSolution> {
    if !(target >= 1.0) || !target.is_finite() {
        return Err(Error::Config(format!("target ATFS {target} must be at least one week")));
    }
    let tol = solver.tolerance;
    let mut history = Vec::new();
    let eval = |h: f64, history: &mut Vec<(f64, f64)>| {
        let a = sim.atfs(h, spacing);
        history.push((h, a));
        a
    };
    let done = |h: f64, a: f64, history: Vec<(f64, f64)>| ThresholdSolution {
        lambda: sim.lambda,
        target,
        threshold: h,
        atfs: a,
        iterations: history.len(),
        history,
    };
    let fail = |lo: f64, hi: f64, a: f64, n: usize| Error::Solver {
        iterations: n,
        lower: lo,
        upper: hi,
        last_atfs: a,
    };

    let a0 = eval(0.0, &mut history);
    if (a0 - target).abs() <= tol {
        return Ok(done(0.0, a0, history));
    }
    if a0 > target {
        return Err(fail(0.0, 0.0, a0, history.len()));
    }

    // Expand upward until the target is bracketed; ATFS grows with h.
    let (mut lo, mut f_lo) = (0.0, a0 - target);
    let mut hi = 1.0;
    let mut f_hi;
    loop {
        let a = eval(hi, &mut history);
        if (a - target).abs() <= tol {
            return Ok(done(hi, a, history));
        }
        f_hi = a - target;
        if f_hi > 0.0 {
            break;
        }
        if history.len() >= solver.max_iterations {
            return Err(fail(lo, hi, a, history.len()));
        }
        lo = hi;
        f_lo = f_hi;
        hi *= 2.0;
    }

    // Secant steps inside the bracket; fall back to bisection when the
    // secant point leaves it or the upper value is infinite. The retained
    // endpoint's value is halved after two same-side steps (Illinois).
    let mut side = 0i8;
    while history.len() < solver.max_iterations {
        let secant = if f_hi.is_finite() {
            hi - f_hi * (hi - lo) / (f_hi - f_lo)
        } else {
            f64::NAN
        };
        let h = if secant > lo && secant < hi {
            secant
        } else {
            0.5 * (lo + hi)
        };
        if !(h > lo && h < hi) {
            break;
        }
        let a = eval(h, &mut history);
        if (a - target).abs() <= tol {
            return Ok(done(h, a, history));
        }
        let f = a - target;
        if f < 0.0 {
            lo = h;
            f_lo = f;
            if side == -1 && f_hi.is_finite() {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = h;
            f_hi = f;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
    }
    let last = history.last().map_or(f64::NAN, |p| p.1);
    Err(fail(lo, hi, last, history.len()))
}

/// Finds the threshold whose simulated ATFS is within tolerance of `target`.
pub fn solve_threshold(
    null: &NullModel,
    lambda: f64,
    target: f64,
    simulation: &SimulationSettings,
    solver: &SolverSettings,
    seed: u64,
) -> Result<ThresholdSolution> {
    let length = simulation.length_for(target);
    let sim = NullSimulation::run(null, lambda, simulation.simulations, length, seed)?;
    solve_on(&sim, target, simulation.spacing, solver)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSettings {
    pub target_atfs: f64,
    pub lambdas: Vec<f64>,
    pub simulation: SimulationSettings,
    pub solver: SolverSettings,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        CalibrationSettings {
            target_atfs: DEFAULT_ATFS,
            lambdas: default_lambda_grid(),
            simulation: SimulationSettings::default(),
            solver: SolverSettings::default(),
        }
    }
}

/// λ = 0.1, 0.2, …, 0.9.
pub fn default_lambda_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintCurvePoint {
    pub lambda: f64,
    pub threshold: f64,
    pub atfs: f64,
    pub performance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub best: ConstraintCurvePoint,
    pub curve: Vec<ConstraintCurvePoint>,
    /// λ values whose threshold solve failed, with the reason.
    pub failures: Vec<(f64, String)>,
}

impl Calibration {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_curve_csv(path, &self.curve)
    }
}

pub fn write_curve_csv(path: &Path, curve: &[ConstraintCurvePoint]) -> Result<()> {
    let mut out = String::from("lambda,h,atfs_est,performance\n");
    for p in curve {
        out.push_str(&format!("{},{},{},{}\n", p.lambda, p.threshold, p.atfs, p.performance));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Seed for the solve at a given λ, independent of the grid it sits in.
pub fn lambda_seed(seed: u64, lambda: f64) -> u64 {
    seed::derive(seed, lambda.to_bits())
}

/// Solves `h` for every λ in the grid and keeps the pair maximizing
/// `performance(k, λ, h)`. Ties go to the smaller λ, then the smaller `h`.
pub fn calibrate_curve<F>(null: &NullModel, settings: &CalibrationSettings, seed: u64, performance: F) -> Result<Calibration>
where
    F: Fn(usize, f64, f64) -> Result<f64> + Sync,
{
    if settings.lambdas.is_empty() {
        return Err(Error::Config("λ grid is empty".into()));
    }
    let outcomes: Vec<Result<ConstraintCurvePoint>> = settings
        .lambdas
        .par_iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let sol = solve_threshold(
                null,
                lambda,
                settings.target_atfs,
                &settings.simulation,
                &settings.solver,
                lambda_seed(seed, lambda),
            )?;
            let perf = performance(k, lambda, sol.threshold)?;
            Ok(ConstraintCurvePoint {
                lambda,
                threshold: sol.threshold,
                atfs: sol.atfs,
                performance: perf,
            })
        })
        .collect();

    let mut curve = Vec::new();
    let mut failures = Vec::new();
    for (outcome, &lambda) in outcomes.into_iter().zip(&settings.lambdas) {
        match outcome {
            Ok(p) => curve.push(p),
            Err(e @ (Error::Solver { .. } | Error::Estimation(_))) => failures.push((lambda, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    let best = curve
        .iter()
        .copied()
        .reduce(|best, p| {
            let better = p.performance > best.performance
                || (p.performance == best.performance
                    && (p.lambda < best.lambda || (p.lambda == best.lambda && p.threshold < best.threshold)));
            if better {
                p
            } else {
                best
            }
        })
        .ok_or_else(|| {
            Error::Calibration(format!(
                "threshold solving failed for every λ: {}",
                failures.iter().map(|(l, e)| format!("λ={l}: {e}")).collect::<Vec<_>>().join("; ")
            ))
        })?;
    Ok(Calibration { best, curve, failures })
}

/// In-sample calibration over the whole panel: estimates the null from the
/// baseline weeks, solves `h` per λ, and scores each scan against `windows`.
pub fn optimize_params(
    panel: &AlignedPanel,
    events: &EventSet,
    windows: &DetectionWindowSet,
    subset: &[String],
    settings: &CalibrationSettings,
    seed: u64,
) -> Result<Calibration> {
    if events.is_empty() {
        return Err(Error::Calibration("no events to calibrate against".into()));
    }
    let null = crate::mewma::estimate_null(panel, events, subset)?;
    calibrate_curve(&null, settings, seed, |_, lambda, h| {
        let (weeks, stat) = scan_statistic(panel, &null, lambda, &[0..panel.len()])?;
        let trace = AlarmTrace::from_statistic(weeks, stat, h);
        Ok(evaluate::score(&trace, windows).performance)
    })
}
