//! Aggregate metrics per method and CSV reporting.

use std::fmt::Write as _;

use serde::Serialize;

use super::basic::{mse, nmse, nmse_complex, psnr_from_mse};
use super::features::FeatureExtractor;
use super::fid::fid;
use super::msi::msi_one;
use super::ssim::ssim;
use crate::error::{Error, Result};
use crate::flow_engine::Reconstruction;
use crate::scene_sim::{CovarianceMap, Task};
use crate::tensor::Grid;

pub const CSV_HEADER: &str = "method,task,nmse,psnr,ssim,fid,msi,time_ms_per_sample,n_samples";

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SampleMetrics {
    pub mse: f64,
    pub rmse: f64,
    pub nmse: f64,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub msi: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MetricsReport {
    pub method: String,
    pub task: Task,
    pub per_sample: Vec<SampleMetrics>,
    pub mse: f64,
    pub rmse: f64,
    pub nmse: f64,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub fid: Option<f64>,
    pub fid_regularized: bool,
    pub msi: Option<f64>,
    pub wall_time_ms: Option<f64>,
    pub n_samples: usize,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Gain map scaled to `[0, 1]` for feature extraction.
fn unit_gain(g: &Grid) -> Grid {
    Grid {
        height: g.height,
        width: g.width,
        data: g.data.iter().map(|v| v / 255.0).collect(),
    }
}

/// Entry magnitudes as an image; entries of a unit-diagonal covariance are
/// bounded by 1.
fn unit_magnitude(r: &CovarianceMap) -> Grid {
    Grid {
        height: r.n,
        width: r.n,
        data: r.magnitude(),
    }
}

fn sample_a(x: &Grid, y: &Grid) -> Result<SampleMetrics> {
    let m = mse(&x.data, &y.data)?;
    Ok(SampleMetrics {
        mse: m,
        rmse: m.sqrt(),
        nmse: nmse(&x.data, &y.data)?,
        psnr: Some(psnr_from_mse(m, 255.0)),
        ssim: Some(ssim(x, y)?),
        msi: None,
    })
}

fn sample_b(x: &CovarianceMap, y: &CovarianceMap) -> Result<SampleMetrics> {
    let m = (mse(&x.real, &y.real)? + mse(&x.imag, &y.imag)?) / 2.0;
    Ok(SampleMetrics {
        mse: m,
        rmse: m.sqrt(),
        nmse: nmse_complex(&x.real, &x.imag, &y.real, &y.imag)?,
        psnr: None,
        ssim: None,
        msi: Some(msi_one(x, y)?),
    })
}

/// Compare predictions with ground truth. `times_ms` holds per-sample wall
/// times when they were measured.
pub fn evaluate(
    method: &str,
    task: Task,
    predictions: &[Reconstruction],
    truth: &[Reconstruction],
    times_ms: Option<&[f64]>,
) -> Result<MetricsReport> {
    if predictions.len() != truth.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} ground-truth records",
            predictions.len(),
            truth.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::config("nothing to evaluate"));
    }
    let fx = FeatureExtractor::new();
    let mut per_sample = Vec::with_capacity(truth.len());
    let mut feats_real = Vec::with_capacity(truth.len());
    let mut feats_gen = Vec::with_capacity(truth.len());
    for (p, t) in predictions.iter().zip(truth) {
        match (t, p) {
            (Reconstruction::A(x), Reconstruction::A(y)) if task == Task::A => {
                per_sample.push(sample_a(x, y)?);
                feats_real.push(fx.extract(&unit_gain(x)));
                feats_gen.push(fx.extract(&unit_gain(y)));
            }
            (Reconstruction::B(x), Reconstruction::B(y)) if task == Task::B => {
                per_sample.push(sample_b(x, y)?);
                feats_real.push(fx.extract(&unit_magnitude(x)));
                feats_gen.push(fx.extract(&unit_magnitude(y)));
            }
            _ => return Err(Error::shape("prediction and truth belong to different tasks")),
        }
    }
    let (fid_v, fid_reg) = if truth.len() >= 2 {
        let r = fid(&feats_real, &feats_gen)?;
        (Some(r.value), r.regularized)
    } else {
        (None, false)
    };
    let opt_mean = |f: fn(&SampleMetrics) -> Option<f64>| -> Option<f64> {
        let v: Vec<f64> = per_sample.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| mean(v.into_iter()))
    };
    let m = mean(per_sample.iter().map(|s| s.mse));
    Ok(MetricsReport {
        method: method.to_string(),
        task,
        mse: m,
        rmse: m.sqrt(),
        nmse: mean(per_sample.iter().map(|s| s.nmse)),
        psnr: opt_mean(|s| s.psnr),
        ssim: opt_mean(|s| s.ssim),
        msi: opt_mean(|s| s.msi),
        fid: fid_v,
        fid_regularized: fid_reg,
        wall_time_ms: times_ms.map(|t| mean(t.iter().copied())),
        n_samples: truth.len(),
        per_sample,
    })
}

fn cell(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(x) if x == f64::INFINITY => "inf".into(),
        Some(x) => format!("{x:.8}"),
    }
}

impl MetricsReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.method,
            self.task.name(),
            cell(Some(self.nmse)),
            cell(self.psnr),
            cell(self.ssim),
            cell(self.fid),
            cell(self.msi),
            cell(self.wall_time_ms),
            self.n_samples
        )
    }
}

/// Header plus one row per report, in the order given.
pub fn reports_to_csv(reports: &[MetricsReport]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in reports {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Fixed-width table for terminals.
pub fn reports_to_table(reports: &[MetricsReport]) -> String {
    let f = |v: Option<f64>, p: usize| match v {
        None => "-".to_string(),
        Some(x) if x.is_infinite() => "inf".to_string(),
        Some(x) => format!("{x:.p$}"),
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<11} {:>4} {:>10} {:>8} {:>7} {:>10} {:>7} {:>10} {:>5}",
        "method", "task", "nmse", "psnr", "ssim", "fid", "msi", "ms/sample", "n"
    );
    for r in reports {
        let _ = writeln!(
            s,
            "{:<11} {:>4} {:>10} {:>8} {:>7} {:>10} {:>7} {:>10} {:>5}",
            r.method,
            r.task.name(),
            f(Some(r.nmse), 5),
            f(r.psnr, 2),
            f(r.ssim, 4),
            f(r.fid, 4),
            f(r.msi, 4),
            f(r.wall_time_ms, 2),
            r.n_samples
        );
    }
    if reports.iter().any(|r| r.fid.is_some()) {
        s.push_str("fid uses a frozen random feature extractor; compare values within this table only\n");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use rand::Rng as _;

    fn maps(seed: u64, n: usize) -> Vec<Reconstruction> {
        let mut rng = rng_for(seed, &[]);
        (0..n)
            .map(|_| Reconstruction::A(Grid::new(16, 16, (0..256).map(|_| rng.random_range(1.0..255.0)).collect()).unwrap()))
            .collect()
    }

    #[test]
    fn perfect_task_a() {
        let t = maps(1, 6);
        let r = evaluate("gfm", Task::A, &t, &t, None).unwrap();
        assert_eq!(r.nmse, 0.0);
        assert!((r.ssim.unwrap() - 1.0).abs() < 1e-12);
        assert!(r.fid.unwrap().abs() < 1e-6);
        assert_eq!(r.psnr, Some(f64::INFINITY));
        assert!(r.msi.is_none());
    }

    #[test]
    fn zero_predictor_has_unit_nmse() {
        let t = maps(2, 3);
        let z: Vec<Reconstruction> = (0..3).map(|_| Reconstruction::A(Grid::filled(16, 16, 0.0))).collect();
        let r = evaluate("zero", Task::A, &z, &t, None).unwrap();
        assert_eq!(r.nmse, 1.0);
    }

    #[test]
    fn perfect_task_b() {
        let t: Vec<Reconstruction> = (0..4)
            .map(|i| {
                let mut r = CovarianceMap::identity(8, (i, i));
                r.real[1] = 0.1 * i as f32;
                r.real[8] = 0.1 * i as f32;
                Reconstruction::B(r)
            })
            .collect();
        let r = evaluate("knn", Task::B, &t, &t, None).unwrap();
        assert!((r.msi.unwrap() - 1.0).abs() < 1e-9);
        assert!(r.fid.unwrap().abs() < 1e-6);
        assert!(r.ssim.is_none() && r.psnr.is_none());
    }

    #[test]
    fn csv_rows_in_order() {
        let t = maps(3, 3);
        let a = evaluate("bicubic", Task::A, &t, &t, None).unwrap();
        let b = evaluate("gfm", Task::A, &t, &t, Some(&[1.0, 2.0, 3.0])).unwrap();
        let csv = reports_to_csv(&[a, b]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[1].starts_with("bicubic,a,0.00000000,inf,1.00000000,"));
        assert!(lines[1].ends_with(",,,3"));
        assert!(lines[2].starts_with("gfm,a,"));
        assert!(lines[2].ends_with(",,2.00000000,3"));
    }

    #[test]
    fn mismatched_counts_rejected() {
        assert!(evaluate("x", Task::A, &maps(4, 2), &maps(4, 3), None).is_err());
    }
}
