#![allow(dead_code)]

use ewarn_core::calibrate::{CalibrationSettings, SimulationSettings};
use ewarn_core::events::{build_windows, detect_events, DetectionWindowSet, EventSet, WindowOptions};
use ewarn_core::panel::{generate_synthetic, AlignedPanel, SyntheticPanelSpec};
use ewarn_core::select::{make_folds, CrossValidator, CvSettings};
use nalgebra::DMatrix;

pub fn synthetic(spec: SyntheticPanelSpec) -> (AlignedPanel, EventSet, DetectionWindowSet) {
    let panel = generate_synthetic(&spec).unwrap();
    let events = detect_events(&panel.gold().values, 1.25, 3).unwrap();
    let windows = build_windows(&events, &WindowOptions::new(16), &panel.gold().values).unwrap();
    (panel, events, windows)
}

/// Small simulation budget and λ grid for tests that only need a working
/// calibration, not an accurate one.
pub fn quick_settings() -> CvSettings {
    CvSettings {
        calibration: CalibrationSettings {
            lambdas: vec![0.3, 0.7],
            simulation: SimulationSettings {
                simulations: 200,
                ..SimulationSettings::default()
            },
            ..CalibrationSettings::default()
        },
        reset_test_scan: false,
    }
}

pub fn validator(
    panel: &AlignedPanel,
    windows: &DetectionWindowSet,
    held_out: usize,
    names: &[String],
    settings: CvSettings,
) -> CrossValidator {
    let plan = make_folds(windows, panel.len(), held_out).unwrap();
    CrossValidator::new(panel, windows, plan, names, settings).unwrap()
}

pub fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Mean and unbiased covariance of the rows where `mask` holds, with plain
/// loops.
pub fn oracle_moments(columns: &[Vec<f64>], mask: &[bool]) -> (Vec<f64>, DMatrix<f64>) {
    let rows: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let n = rows.len() as f64;
    let d = columns.len();
    let mean: Vec<f64> = columns.iter().map(|c| rows.iter().map(|&r| c[r]).sum::<f64>() / n).collect();
    let mut cov = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            let s: f64 = rows
                .iter()
                .map(|&r| (columns[a][r] - mean[a]) * (columns[b][r] - mean[b]))
                .sum();
            cov[(a, b)] = s / (n - 1.0);
        }
    }
    (mean, cov)
}

/// Straight-line MEWMA: truncated smoothing from zero, then the quadratic
/// form through an explicit inverse of `λ/(2−λ)·Σ`.
pub fn oracle_scan(columns: &[Vec<f64>], mean: &[f64], cov: &DMatrix<f64>, lambda: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let d = columns.len();
    let len = columns[0].len();
    let inv = (cov * (lambda / (2.0 - lambda))).try_inverse().unwrap();
    let mut s = vec![0.0; d];
    let mut states = Vec::with_capacity(len);
    let mut stat = Vec::with_capacity(len);
    for t in 0..len {
        for j in 0..d {
            let v = lambda * (columns[j][t] - mean[j]) + (1.0 - lambda) * s[j];
            s[j] = if v > 0.0 { v } else { 0.0 };
        }
        let mut e = 0.0;
        for a in 0..d {
            for b in 0..d {
                e += s[a] * inv[(a, b)] * s[b];
            }
        }
        states.push(s.clone());
        stat.push(e);
    }
    (states, stat)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(1e-300);
    if a == b {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
