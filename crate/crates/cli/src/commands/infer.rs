use std::fmt::Write as _;
use std::path::Path;

use ckmflow::baselines::Method;
use ckmflow::scene_sim::Task;

use super::{examples, load_dataset, load_model, mean_std, reconstructor, run_dir, run_timed, select, write_config_echo};
use crate::error::{CliError, CliResult};
use crate::io::{pred_file_name, write_json, write_pgm, write_prediction, PredManifest, Split, MANIFEST_FILE};
use crate::Context;

pub const TIMING_CSV: &str = "timing.csv";

pub fn run_dir_name(method: Method, task: Task, steps: Option<usize>) -> String {
    match steps {
        Some(n) => format!("pred_{}_{}_n{n}", method.name(), task.name()),
        None => format!("pred_{}_{}", method.name(), task.name()),
    }
}

pub fn timing_csv(indices: &[usize], times: &[f64]) -> String {
    let mut s = String::from("record,time_ms\n");
    for (i, t) in indices.iter().zip(times) {
        let _ = writeln!(s, "{i},{t:.4}");
    }
    let (m, sd) = mean_std(times);
    let _ = writeln!(s, "mean,{m:.4}");
    let _ = writeln!(s, "std,{sd:.4}");
    s
}

pub fn run(
    ctx: &Context,
    checkpoint: Option<&Path>,
    data: &Path,
    method: Option<Method>,
    split: Split,
    limit: Option<usize>,
) -> CliResult<()> {
    let cfg = &ctx.config;
    cfg.inference.validate()?;
    let loaded = checkpoint.map(load_model).transpose()?;
    let method = match (method, &loaded) {
        (Some(m), _) => m,
        (None, Some((model, _, _))) => model.method,
        (None, None) => return Err(CliError::Usage("give --method or --checkpoint".into())),
    };
    let task_hint = loaded.as_ref().map(|(_, meta, _)| meta.task);
    let (ds, sha) = load_dataset(data, task_hint)?;
    let task = ds.task();
    if !method.supports(task) {
        return Err(CliError::Usage(format!("method '{method}' does not apply to task {}", task.name())));
    }
    let (model, cond) = match loaded {
        Some((model, _, _)) if method.is_learned() => {
            let cond = model.cond.clone();
            (Some(model), cond)
        }
        _ => (None, cfg.condition_config()),
    };
    let rec = reconstructor(cfg, method, model)?;
    let indices = select(&ds, split, limit)?;
    let ex = examples(&ds, &indices, &cond)?;

    let steps = (method == Method::Gfm).then_some(cfg.inference.steps);
    let dir = run_dir(ctx, &run_dir_name(method, task, steps))?;
    write_config_echo(&dir, cfg)?;
    let (preds, times) = run_timed(&rec, &ex)?;
    for (i, p) in indices.iter().zip(&preds) {
        let path = dir.join(pred_file_name(*i));
        write_prediction(&path, *i, p)?;
        write_pgm(&path.with_extension("pgm"), p)?;
    }
    write_json(
        &dir.join(MANIFEST_FILE),
        &PredManifest {
            method: method.name().to_string(),
            task,
            dataset_sha256: sha,
            indices: indices.clone(),
            steps,
        },
    )?;
    std::fs::write(dir.join(TIMING_CSV), timing_csv(&indices, &times))?;
    let (m, sd) = mean_std(&times);
    println!("records {}", preds.len());
    println!("time_ms mean {m:.3} std {sd:.3}");
    println!("pred_dir {}", dir.display());
    Ok(())
}
