use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ckmflow::baselines::Method;
use ckmflow::metrics::{evaluate, reports_to_table, MetricsReport, CSV_HEADER};
use ckmflow::scene_sim::Task;

use super::infer::TIMING_CSV;
use super::{load_dataset, run_dir, select, truth_of, write_config_echo};
use crate::error::{CliError, CliResult};
use crate::io::{pred_file_name, read_json, read_prediction, PredManifest, Split, MANIFEST_FILE};
use crate::Context;

pub const METRICS_CSV: &str = "metrics.csv";

struct Row {
    order: (usize, PathBuf),
    method: String,
    report: Option<MetricsReport>,
    errors: Vec<String>,
}

fn read_times(dir: &Path) -> HashMap<usize, f64> {
    let Ok(text) = std::fs::read_to_string(dir.join(TIMING_CSV)) else {
        return HashMap::new();
    };
    text.lines()
        .skip(1)
        .filter_map(|l| {
            let (a, b) = l.split_once(',')?;
            Some((a.parse().ok()?, b.parse().ok()?))
        })
        .collect()
}

fn score_dir(
    dir: &Path,
    ds: &ckmflow::scene_sim::Dataset,
    sha: &str,
    task: Task,
    timing: bool,
) -> CliResult<Row> {
    let manifest: PredManifest = read_json(&dir.join(MANIFEST_FILE))?;
    if manifest.task != task {
        return Err(CliError::Data(format!(
            "{} holds task {} predictions",
            dir.display(),
            manifest.task.name()
        )));
    }
    if manifest.dataset_sha256 != sha {
        log::warn!("{} was produced from a different dataset file", dir.display());
    }
    let times = read_times(dir);
    let mut errors = Vec::new();
    let (mut preds, mut truth, mut ts) = (Vec::new(), Vec::new(), Vec::new());
    for &i in &manifest.indices {
        let name = pred_file_name(i);
        if i >= ds.len() {
            errors.push(format!("{name}:no such record"));
            continue;
        }
        let path = dir.join(&name);
        if !path.is_file() {
            errors.push(format!("{name}:missing"));
            continue;
        }
        match read_prediction(&path) {
            Ok((idx, p)) if idx == i && p.task() == task => {
                preds.push(p);
                truth.push(truth_of(ds, i));
                ts.push(times.get(&i).copied().unwrap_or(f64::NAN));
            }
            Ok(_) => errors.push(format!("{name}:wrong record")),
            Err(e) => errors.push(format!("{name}:{e}")),
        }
    }
    let times = (timing && ts.iter().all(|t| t.is_finite())).then_some(ts.as_slice());
    let report = if preds.is_empty() {
        None
    } else {
        Some(evaluate(&manifest.method, task, &preds, &truth, times)?)
    };
    let rank = manifest
        .method
        .parse::<Method>()
        .map(|m| Method::ALL.iter().position(|x| *x == m).unwrap_or(usize::MAX))
        .unwrap_or(usize::MAX);
    Ok(Row {
        order: (rank, dir.to_path_buf()),
        method: manifest.method,
        report,
        errors,
    })
}

fn csv(rows: &[Row], task: Task) -> String {
    let mut s = format!("{CSV_HEADER},errors\n");
    for r in rows {
        match &r.report {
            Some(rep) => s.push_str(&rep.csv_row()),
            None => s.push_str(&format!("{},{},,,,,,,0", r.method, task.name())),
        }
        s.push(',');
        s.push_str(&r.errors.join(";"));
        s.push('\n');
    }
    s
}

pub fn run(ctx: &Context, pred: &[PathBuf], truth: &Path, task: Option<Task>, split: Split) -> CliResult<()> {
    let cfg = &ctx.config;
    let (ds, sha) = load_dataset(truth, task)?;
    let task = ds.task();
    let mut rows = Vec::new();
    if pred.is_empty() {
        let idx = select(&ds, split, None)?;
        let t: Vec<_> = idx.iter().map(|&i| truth_of(&ds, i)).collect();
        rows.push(Row {
            order: (0, PathBuf::new()),
            method: "truth".into(),
            report: Some(evaluate("truth", task, &t, &t, None)?),
            errors: Vec::new(),
        });
    }
    for dir in pred {
        if !dir.join(MANIFEST_FILE).is_file() {
            return Err(CliError::Data(format!("{} has no {MANIFEST_FILE}", dir.display())));
        }
        rows.push(score_dir(dir, &ds, &sha, task, cfg.metrics.timing)?);
    }
    rows.sort_by(|a, b| a.order.cmp(&b.order));

    let dir = run_dir(ctx, "eval")?;
    write_config_echo(&dir, cfg)?;
    std::fs::write(dir.join(METRICS_CSV), csv(&rows, task))?;
    let reports: Vec<MetricsReport> = rows.iter().filter_map(|r| r.report.clone()).collect();
    print!("{}", reports_to_table(&reports));
    println!("metrics {}", dir.join(METRICS_CSV).display());
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.errors.is_empty())
        .map(|r| format!("{}: {}", r.order.1.display(), r.errors.join(", ")))
        .collect();
    if !failed.is_empty() {
        return Err(CliError::Data(format!("unreadable predictions: {}", failed.join("; "))));
    }
    Ok(())
}
