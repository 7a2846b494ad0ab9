//! Evaluation metrics and the per-frame throughput benchmark.
//!
//! Explained variance is reported in both printed conventions: the
//! error-ratio form Var[y_true - y_pred]/Var[y_true] (lower is better)
//! and the standard one-minus form. Variances are population
//! variances (divide by n) throughout.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvaForm {
    /// Var[err]/Var[true]: 0 is perfect.
    Paper,
    /// 1 - Var[err]/Var[true]: 1 is perfect.
    Standard,
}

fn population_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Explained-variance score of a regressor.
pub fn eva(y_true: &[f64], y_pred: &[f64], form: EvaForm) -> Result<f64> {
    if y_true.len() != y_pred.len() || y_true.len() < 2 {
        return Err(Error::InvalidInput("eva needs two equal-length series of >= 2".into()));
    }
    let var_true = population_variance(y_true);
    if var_true <= 0.0 {
        return Err(Error::UndefinedMetric("eva undefined when Var[y_true] = 0".into()));
    }
    let err: Vec<f64> = y_true.iter().zip(y_pred).map(|(t, p)| t - p).collect();
    let ratio = population_variance(&err) / var_true;
    Ok(match form {
        EvaForm::Paper => ratio,
        EvaForm::Standard => 1.0 - ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Binary confusion counts from parallel flag series.
pub fn confusion(pred: &[bool], truth: &[bool]) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::InvalidInput("confusion needs equal nonempty series".into()));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// F-measure with precision/recall weighting `beta` (0.9 by default
/// in this evaluation protocol).
///
/// Zero-denominator policy: tp = 0 with any predicted or actual
/// positives scores 0; no positives anywhere is undefined.
pub fn f_measure(c: &ConfusionCounts, beta: f64) -> Result<f64> {
    if c.tp == 0 {
        if c.fp == 0 && c.fn_ == 0 {
            return Err(Error::UndefinedMetric(
                "f-measure undefined without any positives".into(),
            ));
        }
        return Ok(0.0);
    }
    let p = c.tp as f64 / (c.tp + c.fp) as f64;
    let r = c.tp as f64 / (c.tp + c.fn_) as f64;
    let b2 = beta * beta;
    Ok((1.0 + b2) * p * r / (b2 * p + r))
}

pub fn accuracy(c: &ConfusionCounts) -> Result<f64> {
    let total = c.total();
    if total == 0 {
        return Err(Error::InvalidInput("accuracy needs at least one sample".into()));
    }
    Ok((c.tp + c.tn) as f64 / total as f64)
}

/// Sample Pearson correlation coefficient.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput("pearson needs two equal-length series of >= 2".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::UndefinedMetric("pearson undefined for constant series".into()));
    }
    Ok((cov / (vx.sqrt() * vy.sqrt())).clamp(-1.0, 1.0))
}

pub fn rmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() || y_true.is_empty() {
        return Err(Error::InvalidInput("rmse needs equal nonempty series".into()));
    }
    let mse = y_true
        .iter()
        .zip(y_pred)
        .map(|(t, p)| (t - p) * (t - p))
        .sum::<f64>()
        / y_true.len() as f64;
    Ok(mse.sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatencyStats {
    pub frames: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub fps: f64,
}

/// Wall-clock per-frame latency of `pipeline` over `frames`, skipping
/// the first `warmup` iterations. At least 30 measured frames are
/// required for the stats to mean anything.
pub fn fps_benchmark(
    pipeline: &mut dyn FnMut(&Image) -> Result<()>,
    frames: &[Image],
    warmup: usize,
) -> Result<LatencyStats> {
    if frames.is_empty() {
        return Err(Error::InvalidInput("fps benchmark needs at least one frame".into()));
    }
    if frames.len() < warmup + 30 {
        return Err(Error::InvalidInput(format!(
            "fps benchmark needs >= {} frames ({} warmup + 30 measured), got {}",
            warmup + 30,
            warmup,
            frames.len()
        )));
    }
    let mut samples_ms = Vec::with_capacity(frames.len() - warmup);
    for (i, frame) in frames.iter().enumerate() {
        let t0 = Instant::now();
        pipeline(frame)?;
        let dt = t0.elapsed().as_secs_f64() * 1e3;
        if i >= warmup {
            samples_ms.push(dt);
        }
    }
    let mut sorted = samples_ms.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = samples_ms.iter().sum::<f64>() / samples_ms.len() as f64;
    let pct = |q: f64| sorted[((sorted.len() - 1) as f64 * q).round() as usize];
    Ok(LatencyStats {
        frames: samples_ms.len(),
        mean_ms: mean,
        p50_ms: pct(0.50),
        p95_ms: pct(0.95),
        fps: 1e3 / mean,
    })
}

/// Aggregate evaluation report; serializes to JSON and prints as a
/// fixed-column table row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f_measure: f64,
    /// Junction-head accuracy (the headline classification task).
    pub accuracy: f64,
    /// Agreement across all five heads simultaneously.
    pub exact_match_accuracy: f64,
    pub rmse: f64,
    pub eva_paper: f64,
    pub eva_standard: f64,
    /// Per-head correlation of predicted vs expert command series:
    /// [forward, yaw_left, yaw_right, halt, junction]; NaN-free, heads
    /// with undefined correlation are omitted.
    pub pearson_r: Vec<Option<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latency: Option<LatencyStats>,
    pub layers: usize,
    pub parameters: usize,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics report serializes")
    }

    /// Table header and row matching the evaluation-table column order.
    pub fn table(&self) -> String {
        let fps = self.latency.as_ref().map(|l| format!("{:.0}", l.fps)).unwrap_or_else(|| "-".into());
        format!(
            "{:<12} {:>9} {:>9} {:>8} {:>8} {:>6} {:>7} {:>11}\n{:<12} {:>9.3} {:>8.2}% {:>8.3} {:>8.3} {:>6} {:>7} {:>11}",
            "Model", "F-Measure", "Accuracy", "RMSE", "EVA", "FPS", "Layers", "Parameters",
            "tomonav", self.f_measure, self.accuracy * 100.0, self.rmse, self.eva_paper,
            fps, self.layers, self.parameters,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eva_perfect_and_constant_predictions() {
        let t = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(eva(&t, &t, EvaForm::Paper).unwrap(), 0.0);
        assert_eq!(eva(&t, &t, EvaForm::Standard).unwrap(), 1.0);
        let mean = [2.5; 4];
        assert!((eva(&t, &mean, EvaForm::Paper).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eva_hand_example() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let p = [0.0, 1.0, 2.0, 4.0];
        // Var([0,0,0,-1]) / Var([0,1,2,3]) = (3/16)/(5/4) = 0.15.
        let v = eva(&t, &p, EvaForm::Paper).unwrap();
        assert!((v - 0.15).abs() < 1e-12);
        let s = eva(&t, &p, EvaForm::Standard).unwrap();
        assert!((v + s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eva_rejects_constant_truth() {
        let t = [2.0; 5];
        let p = [1.0, 2.0, 3.0, 2.0, 2.0];
        assert!(matches!(eva(&t, &p, EvaForm::Paper), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn f_measure_identities() {
        // P = R = p gives F = p for any beta.
        let c = ConfusionCounts { tp: 90, fp: 10, tn: 0, fn_: 10 };
        let f = f_measure(&c, 0.9).unwrap();
        assert!((f - 0.9).abs() < 1e-12);
        for p10 in 1..=9u64 {
            let c = ConfusionCounts { tp: p10, fp: 10 - p10, tn: 0, fn_: 10 - p10 };
            let f = f_measure(&c, 0.9).unwrap();
            assert!((f - p10 as f64 / 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn f_measure_zero_and_undefined_cases() {
        let zero_tp = ConfusionCounts { tp: 0, fp: 0, tn: 5, fn_: 3 };
        assert_eq!(f_measure(&zero_tp, 0.9).unwrap(), 0.0);
        let no_positives = ConfusionCounts { tp: 0, fp: 0, tn: 9, fn_: 0 };
        assert!(matches!(f_measure(&no_positives, 0.9), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn f_measure_asymmetric_for_beta_not_one() {
        let a = ConfusionCounts { tp: 8, fp: 2, tn: 0, fn_: 4 }; // P=0.8, R=2/3
        let b = ConfusionCounts { tp: 8, fp: 4, tn: 0, fn_: 2 }; // P=2/3, R=0.8
        let fa = f_measure(&a, 0.9).unwrap();
        let fb = f_measure(&b, 0.9).unwrap();
        assert!((fa - fb).abs() > 1e-6, "beta != 1 must weight P and R asymmetrically");
    }

    #[test]
    fn pearson_basics_and_hand_example() {
        let x = [1.0, 2.0, 3.0];
        assert!((pearson_r(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_r(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        let y = [1.0, 2.0, 4.0];
        assert!((pearson_r(&x, &y).unwrap() - 0.98198).abs() < 1e-5);
        assert!(matches!(pearson_r(&x, &[1.0; 3]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn pearson_affine_invariance() {
        let x = [0.3, -1.2, 2.5, 0.9, -0.4];
        let y = [1.0, 0.2, -0.7, 1.9, 0.8];
        let base = pearson_r(&x, &y).unwrap();
        let xa: Vec<f64> = x.iter().map(|v| 3.5 * v + 11.0).collect();
        let yb: Vec<f64> = y.iter().map(|v| 0.25 * v - 2.0).collect();
        assert!((pearson_r(&xa, &yb).unwrap() - base).abs() < 1e-12);
        let yneg: Vec<f64> = y.iter().map(|v| -2.0 * v).collect();
        assert!((pearson_r(&x, &yneg).unwrap() + base).abs() < 1e-12);
    }

    #[test]
    fn rmse_and_accuracy() {
        let t = [1.0, 2.0];
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        let r = rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert!((r - (12.5f64).sqrt()).abs() < 1e-12);
        assert!(rmse(&[], &[]).is_err());

        let all_wrong = confusion(&[true, false], &[false, true]).unwrap();
        assert_eq!(accuracy(&all_wrong).unwrap(), 0.0);
        let c = confusion(&[true, true, false], &[true, false, false]).unwrap();
        let a = accuracy(&c).unwrap();
        assert!((a - 2.0 / 3.0).abs() < 1e-15);
        assert!((a + (1.0 - a) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fps_benchmark_contract() {
        let frames: Vec<Image> = (0..64).map(|_| Image::zeros(8, 8)).collect();
        let mut calls = 0usize;
        let stats = fps_benchmark(
            &mut |_| {
                calls += 1;
                Ok(())
            },
            &frames,
            10,
        )
        .unwrap();
        assert_eq!(calls, 64);
        assert_eq!(stats.frames, 54);
        assert!(stats.fps > 0.0 && stats.fps.is_finite());
        assert!(stats.p50_ms <= stats.p95_ms);

        assert!(fps_benchmark(&mut |_| Ok(()), &[], 0).is_err());
        let few: Vec<Image> = (0..20).map(|_| Image::zeros(4, 4)).collect();
        assert!(fps_benchmark(&mut |_| Ok(()), &few, 10).is_err());
    }

    #[test]
    fn fps_benchmark_is_roughly_stationary() {
        let work = |img: &Image| -> Result<()> {
            let mut acc = 0.0;
            for _ in 0..50 {
                acc += img.data().iter().sum::<f64>();
            }
            std::hint::black_box(acc);
            Ok(())
        };
        let small: Vec<Image> = (0..60).map(|_| Image::zeros(64, 64)).collect();
        let large: Vec<Image> = (0..120).map(|_| Image::zeros(64, 64)).collect();
        let a = fps_benchmark(&mut { work }, &small, 10).unwrap();
        let b = fps_benchmark(&mut { work }, &large, 10).unwrap();
        let rel = (a.mean_ms - b.mean_ms).abs() / a.mean_ms.max(b.mean_ms);
        assert!(rel < 0.5, "latency should be roughly independent of list length, rel {rel}");
    }

    #[test]
    fn report_serializes_and_tables() {
        let report = MetricsReport {
            f_measure: 0.91,
            accuracy: 0.97,
            exact_match_accuracy: 0.9,
            rmse: 0.1,
            eva_paper: 0.2,
            eva_standard: 0.8,
            pearson_r: vec![Some(0.99), None, Some(0.5), Some(0.4), Some(0.9)],
            latency: None,
            layers: 8,
            parameters: 10_361,
        };
        let json = report.to_json();
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.layers, 8);
        let table = report.table();
        assert!(table.contains("F-Measure"));
        assert!(table.contains("0.910"));
    }
}
