//! Acceptance suite: one PASS/FAIL/SKIP line per criterion. Exits nonzero if
//! any criterion fails.
//!
//! Criterion 9 needs real ILINet 2010–2016 data: set `EWARN_ILINET_MANIFEST`
//! to a panel manifest whose gold series is the weighted ILI percentage.

mod common;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use ewarn_core::baselines::{fit_baseline, rise_trigger, week_trigger, BaselineKind, RiseTriggerConfig, WeekTriggerConfig};
use ewarn_core::calibrate::{simulate_atfs, solve_threshold, SimulationSettings, SolverSettings};
use ewarn_core::config::ExperimentConfig;
use ewarn_core::evaluate::score;
use ewarn_core::events::{build_windows, detect_events, DetectionWindowSet, Event, EventSet, WindowOptions};
use ewarn_core::experiment::{compare_models, run_select, select_replicates, Model, Prepared};
use ewarn_core::mewma::{
    estimate_null_masked, run_scan, scan_statistic, smoothed_states, AlarmTrace, BaselineMoments, DetectorConfig, NullModel,
    SharedStates,
};
use ewarn_core::panel::{AlignedPanel, IsoWeek, PanelManifest, Series, SyntheticPanelSpec, WeekAxis};
use ewarn_core::seed;
use ewarn_core::select::{
    aggregate_replicates, forward_select, make_folds, make_folds_with, CrossValidator, FoldOptions, SelectionSettings,
};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed <= limit
}

fn correlated_panel(rng: &mut impl Rng, len: usize) -> AlignedPanel {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mix = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
    let raw: Vec<[f64; 3]> = (0..len)
        .map(|_| [normal.sample(rng), normal.sample(rng), normal.sample(rng)])
        .collect();
    let cols: Vec<Series> = (0..3)
        .map(|j| {
            let shift = rng.random_range(-2.0..2.0);
            let v = raw
                .iter()
                .map(|z| shift + (0..3).map(|k| mix[(j, k)] * z[k]).sum::<f64>() + 0.2 * z[j])
                .collect();
            Series::new(format!("x{j}"), v)
        })
        .collect();
    let axis = WeekAxis::new(IsoWeek::new(2012, 1).unwrap(), len).unwrap();
    AlignedPanel::new(axis, Series::new("gold", vec![0.0; len]), cols).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = seed::rng(101);
    let mut worst: f64 = 0.0;
    let mut alarms_match = true;
    let mut projection_exact = true;
    for trial in 0..50 {
        // Redraw until the baseline covariance is well conditioned; beyond
        // that f64 cannot hold 1e-10 in the quadratic form whatever the method.
        let mask: Vec<bool> = (0..200).map(|t| t % 7 != 3).collect();
        let (panel, names, null) = loop {
            let panel = correlated_panel(&mut rng, 200);
            let names = panel.candidate_names();
            let null = estimate_null_masked(&panel, &mask, &names).unwrap();
            let sv = null.covariance.singular_values();
            if sv.max() / sv.min() <= 1e4 {
                break (panel, names, null);
            }
        };
        let lambda = [0.1, 0.3, 0.5, 0.9][trial % 4];
        let cols: Vec<Vec<f64>> = names.iter().map(|n| panel.series(n).unwrap().values.clone()).collect();
        let (states, stat) = oracle_scan(&cols, &null.mean, &null.covariance, lambda);

        let col_refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        let table = smoothed_states(&col_refs, &null.mean, lambda, &[0..200]);
        for (t, s) in states.iter().enumerate() {
            for (a, b) in table.row(t).iter().zip(s) {
                worst = worst.max(rel_err(*a, *b));
            }
        }
        let h = stat.iter().copied().fold(0.0, f64::max) * 0.5;
        let trace = run_scan(&panel, &null, &DetectorConfig::new(names.clone(), lambda, h).unwrap()).unwrap();
        for (a, b) in trace.statistic.iter().zip(&stat) {
            worst = worst.max(rel_err(*a, *b));
        }
        let oracle_alarms: Vec<bool> = stat.iter().map(|&e| e > h).collect();
        alarms_match &= trace.alarms == oracle_alarms;

        // Every subset through the shared-state projection equals a direct
        // estimate and scan of that subset, bit for bit.
        let moments = BaselineMoments::estimate(&panel, &mask, &names).unwrap();
        let shared = SharedStates::compute(&panel, &names, &moments.mean, &[lambda], &[0..200]).unwrap();
        for subset in [vec![0], vec![2], vec![0, 2], vec![2, 1], vec![0, 1, 2]] {
            let sub_names: Vec<String> = subset.iter().map(|&i| names[i].clone()).collect();
            let sub_null = moments.null_for(&subset).unwrap();
            let projected = shared.subset_statistic(0, &subset, &sub_null).unwrap();
            let direct_null = estimate_null_masked(&panel, &mask, &sub_names).unwrap();
            let (_, direct) = scan_statistic(&panel, &direct_null, lambda, &[0..200]).unwrap();
            projection_exact &= sub_null == direct_null;
            projection_exact &= projected.iter().zip(&direct).all(|(a, b)| a.to_bits() == b.to_bits());
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-10 && alarms_match && projection_exact && within(elapsed, Duration::from_secs(10)),
        format!(
            "50 panels: max relative error {worst:.2e} (≤ 1e-10), alarms match {alarms_match}, projection exact {projection_exact}, {:.2?} (< 10 s)",
            elapsed
        ),
    )
}

fn unit_null() -> NullModel {
    NullModel::from_moments(vec!["z".into()], vec![0.0], DMatrix::from_element(1, 1, 1.0)).unwrap()
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let null = unit_null();
    let sim = SimulationSettings::default();
    let solver = SolverSettings::default();
    let mut details = Vec::new();
    let mut ok = true;
    for lambda in [0.1, 0.5, 0.9] {
        let sol = match solve_threshold(&null, lambda, 20.0, &sim, &solver, 2024) {
            Ok(s) => s,
            Err(e) => return Outcome::Fail(format!("λ={lambda}: {e}")),
        };
        let re = simulate_atfs(&null, lambda, sol.threshold, 5000, sim.length_for(20.0), 777_777).unwrap();
        ok &= (re.atfs - 20.0).abs() <= 1.0;
        let mut hs = Vec::new();
        for phi in [10.0, 20.0, 40.0] {
            match solve_threshold(&null, lambda, phi, &sim, &solver, 2024) {
                Ok(s) => hs.push(s.threshold),
                Err(e) => return Outcome::Fail(format!("λ={lambda}, φ={phi}: {e}")),
            }
        }
        let monotone = hs[0] < hs[1] && hs[1] < hs[2];
        ok &= monotone;
        details.push(format!("λ={lambda}: h={:.3} re-sim ATFS {:.2}, h(10,20,40) increasing {monotone}", sol.threshold, re.atfs));
    }
    let elapsed = start.elapsed();
    ok &= within(elapsed, Duration::from_secs(120));
    check(ok, format!("{}; {:.2?} (< 2 min)", details.join("; "), elapsed))
}

fn windows_at(starts: &[usize], len: usize, weeks: usize, tw: usize) -> DetectionWindowSet {
    let events = EventSet {
        threshold: 1.0,
        min_duration: 1,
        events: starts.iter().map(|&s| Event { start: s, end: s + len - 1 }).collect(),
        threshold_out_of_range: false,
    };
    build_windows(&events, &WindowOptions::new(tw), &vec![0.0; weeks]).unwrap()
}

fn trace_with(weeks: usize, alarm_weeks: &[usize]) -> AlarmTrace {
    AlarmTrace::from_alarms(
        (0..weeks).collect(),
        vec![0.0; weeks],
        (0..weeks).map(|t| alarm_weeks.contains(&t)).collect(),
    )
}

fn criterion_3() -> Outcome {
    // Windows open 8 weeks before events at 40 and 100 (T_w = 16) unless
    // noted; expected values worked out by hand.
    let w = windows_at(&[40, 100], 5, 200, 16);
    let cases: Vec<(&str, AlarmTrace, DetectionWindowSet, f64)> = vec![
        ("onsets at both window starts", trace_with(200, &[32, 92]), w.clone(), 1.0),
        ("no alarms", trace_with(200, &[]), w.clone(), 0.0),
        ("ΔT = 0 and 8", trace_with(200, &[32, 100]), w.clone(), 0.75),
        ("only first event, ΔT = 4", trace_with(200, &[36]), w.clone(), (1.0 - 4.0 / 16.0) / 2.0),
        ("last window week, both", trace_with(200, &[47, 107]), w.clone(), 1.0 / 16.0),
        ("alarm run counts its onset only", trace_with(200, &[30, 31, 32, 33, 94]), w.clone(), (0.0 + (1.0 - 2.0 / 16.0)) / 2.0),
        ("false alarms only", trace_with(200, &[5, 70, 150]), w.clone(), 0.0),
        ("late onsets inside long events", trace_with(200, &[43, 48, 110]), windows_at(&[40, 100], 15, 200, 16), (1.0 - 11.0 / 16.0) / 2.0),
        ("three events, mixed", trace_with(300, &[32, 104]), windows_at(&[40, 100, 200], 5, 300, 16), (1.0 + (1.0 - 12.0 / 16.0) + 0.0) / 3.0),
        ("clipped window at panel start", trace_with(100, &[0]), windows_at(&[3, 60], 5, 100, 16), (1.0 - 5.0 / 16.0) / 2.0),
    ];
    let mut bad = Vec::new();
    for (name, trace, windows, expected) in &cases {
        let got = score(trace, windows).performance;
        if got != *expected {
            bad.push(format!("{name}: got {got}, expected {expected}"));
        }
    }
    check(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{} constructed traces match exactly", cases.len())
        } else {
            bad.join("; ")
        },
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let trials = 100;
    let mut first_ok = 0;
    let mut top3 = 0;
    let mut misses = Vec::new();
    for trial in 0..trials {
        let mut rng = seed::rng(seed::derive(4040, trial));
        let predictors = rng.random_range(1..=3usize);
        let decoys = rng.random_range(1..=(5 - predictors));
        let (panel, _, windows) = synthetic(SyntheticPanelSpec {
            seasons: 4,
            predictor_count: predictors,
            decoy_count: decoys,
            predictor_lead: rng.random_range(1..=4),
            noise_scale: rng.random_range(0.05..0.4),
            peak_week_jitter: rng.random_range(0..=4),
            rng_seed: trial,
            ..SyntheticPanelSpec::default()
        });
        let cand = panel.candidate_names();
        let cv = validator(&panel, &windows, 1, &cand, quick_settings());
        let settings = SelectionSettings {
            k_max: 2,
            min_improvement: f64::NEG_INFINITY,
        };
        let rep_seed = 500 + trial;
        let trace = match forward_select(&cv, &cand, &settings, rep_seed) {
            Ok(t) => t,
            Err(e) => return Outcome::Fail(format!("trial {trial}: {e}")),
        };

        let singles: Vec<f64> = (0..cand.len()).map(|i| cv.score_subset(&[i], rep_seed).unwrap().score).collect();
        let best = singles.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exhaustive_first = cand[singles.iter().position(|&s| s == best).unwrap()].clone();
        if trace.steps[0].chosen == exhaustive_first {
            first_ok += 1;
        }

        let mut pairs = Vec::new();
        for a in 0..cand.len() {
            for b in a + 1..cand.len() {
                pairs.push(cv.score_subset(&[a, b], rep_seed).unwrap().score);
            }
        }
        let greedy = trace.steps[1].score;
        let rank = 1 + pairs.iter().filter(|&&s| s > greedy).count();
        if rank <= 3 {
            top3 += 1;
        } else {
            misses.push(format!("trial {trial} rank {rank}"));
        }
    }
    let detail = format!(
        "first pick = exhaustive best singleton {first_ok}/{trials} (need {trials}); greedy pair in exhaustive top 3 {top3}/{trials} (need ≥ 95){}; {:.2?}",
        if misses.is_empty() {
            String::new()
        } else {
            format!(" misses: {}", misses.join(", "))
        },
        start.elapsed()
    );
    check(first_ok == trials && top3 >= 95, detail)
}

fn criterion_5() -> Outcome {
    let (panel, events, windows) = synthetic(SyntheticPanelSpec {
        decoy_count: 2,
        ..SyntheticPanelSpec::default()
    });
    let cand = panel.candidate_names();
    let presets = [
        ("select-6fold", 1, FoldOptions::default()),
        ("compare-3fold", 2, FoldOptions::default()),
        (
            "select-6fold, 3 training seasons, 6-week gap",
            1,
            FoldOptions {
                max_train_seasons: Some(3),
                gap_weeks: 6,
            },
        ),
    ];
    let mut checked = 0;
    for (label, held, options) in presets {
        let plan = make_folds_with(&windows, panel.len(), held, options).unwrap();
        let cv = CrossValidator::new(&panel, &windows, plan.clone(), &cand, quick_settings()).unwrap();
        if let Some(r) = cv.leakage_audit().into_iter().find(|r| !r.clean()) {
            return Outcome::Fail(format!("{label}: {r:?}"));
        }
        for fold in &plan.folds {
            // Overwrite every held-out candidate value; the fold's null model
            // and calibrated (λ, h) must not move.
            let scrambled: Vec<Series> = panel
                .candidates()
                .iter()
                .map(|s| {
                    let v = s
                        .values
                        .iter()
                        .enumerate()
                        .map(|(t, &x)| if fold.test.contains(&t) { 1e3 + t as f64 } else { x })
                        .collect();
                    Series::new(s.name.clone(), v)
                })
                .collect();
            let altered = AlignedPanel::new(*panel.axis(), panel.gold().clone(), scrambled).unwrap();
            let cv2 = CrossValidator::new(&altered, &windows, plan.clone(), &cand, quick_settings()).unwrap();
            let f = fold.index;
            if cv.contexts[f].moments != cv2.contexts[f].moments {
                return Outcome::Fail(format!("{label}, fold {f}: held-out weeks changed the null moments"));
            }
            for subset in [vec![0], vec![1, cand.len() - 1]] {
                let (n1, c1) = cv.calibrate_fold(f, &subset, 17).unwrap();
                let (n2, c2) = cv2.calibrate_fold(f, &subset, 17).unwrap();
                if n1 != n2 || c1 != c2 {
                    return Outcome::Fail(format!("{label}, fold {f}: held-out weeks changed the calibration"));
                }
            }
            // Independent mask oracle for the rows behind μ and Σ.
            let mask: Vec<bool> = (0..panel.len())
                .map(|w| fold.train_mask[w] && !fold.test.contains(&w) && !events.events.iter().any(|e| e.start <= w && w <= e.end))
                .collect();
            if mask != cv.contexts[f].baseline_mask || fold.test.clone().any(|w| mask[w]) {
                return Outcome::Fail(format!("{label}, fold {f}: baseline mask disagrees with the oracle"));
            }
            checked += 1;
        }
    }
    Outcome::Pass(format!("{checked} folds over 3 presets: no held-out week reaches μ, Σ or (λ, h)"))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let spec = SyntheticPanelSpec {
        decoy_count: 2,
        ..SyntheticPanelSpec::default()
    };
    let (panel, _, _) = synthetic(spec);
    let config = ExperimentConfig {
        replicates: 5,
        output: std::env::temp_dir(),
        ..ExperimentConfig::default()
    };
    let prepared = Prepared::from_panel(&config, panel).unwrap();
    let traces = match select_replicates(&config, &prepared) {
        Ok(t) => t,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let agg = aggregate_replicates(&traces, config.k_max).unwrap();

    let plan = make_folds(&prepared.windows, prepared.panel.len(), 1).unwrap();
    let mut names = agg.selection.clone();
    names.push("gold".into());
    let cv = CrossValidator::new(&prepared.panel, &prepared.windows, plan, &names, config.cv_settings()).unwrap();
    let selected = cv.score_names(&agg.selection, config.seed).unwrap();
    let gold = cv.score_names(&["gold".to_string()], config.seed).unwrap();

    let offsets: Vec<Option<f64>> = selected.folds.iter().map(|f| f.report.mean_onset_offset()).collect();
    let early = offsets.iter().filter(|o| matches!(o, Some(x) if *x < 0.0)).count();
    let mean_sel = selected.pooled().mean_onset_offset();
    let mean_gold = gold.pooled().mean_onset_offset();
    let beats_gold = match (mean_sel, mean_gold) {
        (Some(s), Some(g)) => s < g,
        (Some(_), None) => true,
        _ => false,
    };
    let elapsed = start.elapsed();
    check(
        early >= 5 && beats_gold && within(elapsed, Duration::from_secs(600)),
        format!(
            "selected {:?}; onset before event start in {early}/6 folds (need ≥ 5); mean onset {:?} vs univariate gold {:?} weeks from event start; {:.2?} (< 10 min)",
            agg.selection, mean_sel, mean_gold, elapsed
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut week_ok = true;
    let mut checked_axes = 0;
    for (year, week, years) in [(2010, 1, 7), (2010, 27, 6), (2014, 40, 3), (2003, 1, 12)] {
        let start = IsoWeek::new(year, week).unwrap();
        let end_year_start = IsoWeek::new(year + years, week).unwrap();
        let len = (end_year_start.ordinal() - start.ordinal()) as usize;
        let axis = WeekAxis::new(start, len).unwrap();
        for trigger in 1..=52 {
            let t = week_trigger(&axis, WeekTriggerConfig::new(trigger).unwrap());
            week_ok &= t.alarm_weeks().len() == years as usize && t.onsets == t.alarm_weeks();
        }
        let with_53 = (0..len).filter(|&i| axis.week(i).week == 53).count();
        week_ok &= week_trigger(&axis, WeekTriggerConfig::new(53).unwrap()).alarm_weeks().len() == with_53;
        checked_axes += 1;
    }

    let mut rng = seed::rng(7007);
    let mut rise_ok = 0;
    for _ in 0..1000 {
        let len = rng.random_range(1..80);
        // Coarse values so ties and plateaus are common.
        let gold: Vec<f64> = (0..len).map(|_| rng.random_range(0..6) as f64).collect();
        let n = rng.random_range(2..6usize);
        let oracle: Vec<bool> = (0..len)
            .map(|t| t >= n && (1..=n).all(|i| gold[t - i + 1] > gold[t - i]))
            .collect();
        let trace = rise_trigger(&gold, RiseTriggerConfig::new(n).unwrap());
        let oracle_onsets: Vec<usize> = (0..len).filter(|&t| oracle[t] && (t == 0 || !oracle[t - 1])).collect();
        if trace.alarms == oracle && trace.onsets == oracle_onsets {
            rise_ok += 1;
        }
    }
    check(
        week_ok && rise_ok == 1000,
        format!("week trigger one alarm per year on {checked_axes} axes × 52 weeks: {week_ok}; rise trigger matches oracle {rise_ok}/1000"),
    )
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn criterion_8() -> Outcome {
    let (panel, _, _) = synthetic(SyntheticPanelSpec {
        predictor_count: 2,
        decoy_count: 2,
        noise_scale: 0.15,
        ..SyntheticPanelSpec::default()
    });
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("run");
    let config = ExperimentConfig {
        simulations: 300,
        lambdas: vec![0.2, 0.5, 0.8],
        replicates: 3,
        k_max: 3,
        output: out.clone(),
        ..ExperimentConfig::default()
    };
    let prepared = Prepared::from_panel(&config, panel).unwrap();
    if let Err(e) = run_select(&config, &prepared) {
        return Outcome::Fail(e.to_string());
    }
    let first = root.path().join("first");
    std::fs::rename(&out, &first).unwrap();
    run_select(&config, &prepared).unwrap();
    let (a, b) = (tree(&first), tree(&out));
    let files = a.len();
    check(
        a == b && files > 0,
        format!("two runs wrote {files} files each; byte-identical: {}", a == b),
    )
}

fn criterion_9() -> Outcome {
    let Some(manifest) = std::env::var_os("EWARN_ILINET_MANIFEST") else {
        return Outcome::Skip("set EWARN_ILINET_MANIFEST to an ILINet 2010–2016 panel manifest to run".into());
    };
    let panel = match PanelManifest::read(Path::new(&manifest)).and_then(|m| m.load()) {
        Ok(p) => p,
        Err(e) => return Outcome::Fail(format!("cannot load {}: {e}", manifest.to_string_lossy())),
    };
    let gold = panel.gold().values.clone();
    let events = detect_events(&gold, 1.25, 3).unwrap();
    let n_events = events.len();
    let windows = match build_windows(&events, &WindowOptions::new(16), &gold) {
        Ok(w) => w,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let plan = match make_folds(&windows, panel.len(), 2) {
        Ok(p) => p,
        Err(e) => return Outcome::Fail(format!("{n_events} events: {e}")),
    };
    let week = fit_baseline(BaselineKind::WeekTrigger, panel.axis(), &gold, &windows, &plan, &BaselineKind::WeekTrigger.default_grid())
        .unwrap()
        .parameter;
    let rise = fit_baseline(BaselineKind::RiseTrigger, panel.axis(), &gold, &windows, &plan, &BaselineKind::RiseTrigger.default_grid())
        .unwrap()
        .parameter;
    let config = ExperimentConfig {
        output: std::env::temp_dir(),
        ..ExperimentConfig::default()
    };
    let prepared = Prepared::from_panel(&config, panel).unwrap();
    let lead = compare_models(&config, &prepared, &[Model::UnivariateGold], &[])
        .map(|r| r[0].mean_lead())
        .unwrap_or(None);
    let lead_ok = matches!(lead, Some(l) if (l - 11.7).abs() <= 2.0);
    check(
        n_events == 6 && week == 34 && rise == 4 && lead_ok,
        format!("events {n_events} (6), week trigger {week} (34), rise trigger n={rise} (4), univariate gold mean lead {lead:?} (11.7 ± 2)"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("MEWMA oracle equivalence", criterion_1),
        ("calibration contract", criterion_2),
        ("timeliness arithmetic", criterion_3),
        ("greedy vs exhaustive", criterion_4),
        ("leakage guard", criterion_5),
        ("synthetic end-to-end", criterion_6),
        ("baseline behavior", criterion_7),
        ("determinism", criterion_8),
        ("ILINet data checks", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (tag, detail) = match run() {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("criterion {} [{tag}] {name}: {detail}", i + 1);
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
