use std::fmt::Write as _;
use std::path::Path;

use ckmflow::baselines::Method;
use ckmflow::metrics::evaluate;
use ckmflow::scene_sim::Task;

use super::{examples, linear_r2, load_dataset, load_model, mean_std, reconstructor, run_dir, run_timed, select, truth_of, write_config_echo};
use crate::error::{CliError, CliResult};
use crate::io::Split;
use crate::Context;

pub const ABLATION_CSV: &str = "ablation.csv";

pub fn run(
    ctx: &Context,
    checkpoint: &Path,
    data: &Path,
    steps_list: &[usize],
    split: Split,
    limit: Option<usize>,
) -> CliResult<()> {
    if steps_list.is_empty() || steps_list.contains(&0) {
        return Err(CliError::Usage("--steps-list needs positive step counts".into()));
    }
    let (model, meta, _) = load_model(checkpoint)?;
    if meta.method != Method::Gfm {
        return Err(CliError::Usage(format!("step ablation needs a gfm checkpoint, got {}", meta.method)));
    }
    let (ds, _) = load_dataset(data, Some(meta.task))?;
    let task = ds.task();
    let indices = select(&ds, split, limit)?;
    let ex = examples(&ds, &indices, &model.cond)?;
    let truth: Vec<_> = indices.iter().map(|&i| truth_of(&ds, i)).collect();

    let dir = run_dir(ctx, "ablate_steps")?;
    write_config_echo(&dir, &ctx.config)?;
    let quality = if task == Task::A { "ssim" } else { "msi" };
    let mut csv = format!("steps,{quality},time_ms\n");
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &n in steps_list {
        let mut cfg = ctx.config.clone();
        cfg.inference.steps = n;
        let rec = reconstructor(&cfg, Method::Gfm, Some(model.clone()))?;
        let (preds, times) = run_timed(&rec, &ex)?;
        let rep = evaluate("gfm", task, &preds, &truth, Some(&times))?;
        let q = if task == Task::A { rep.ssim } else { rep.msi }.unwrap_or(f64::NAN);
        let (t, _) = mean_std(&times);
        let _ = writeln!(csv, "{n},{q:.8},{t:.4}");
        println!("steps {n:>4}  {quality} {q:.4}  time_ms {t:.3}");
        xs.push(n as f64);
        ys.push(t);
    }
    std::fs::write(dir.join(ABLATION_CSV), &csv)?;
    if xs.len() >= 2 {
        println!("time_linear_r2 {:.4}", linear_r2(&xs, &ys));
    }
    println!("ablation {}", dir.join(ABLATION_CSV).display());
    Ok(())
}
