use std::path::Path;

use ckmflow::autodiff_net::{Checkpoint, VelocityNet};
use ckmflow::baselines::{LearnedModel, Method};
use ckmflow::flow_engine::{train_with, Normalizer, TrainState};
use ckmflow::metrics::{evaluate, reports_to_csv, reports_to_table};
use ckmflow::scene_sim::{generate_dataset, Dataset, Task};
use serde_json::json;

use super::train::{run_dir_name, BEST};
use super::{examples, load_dataset, load_model, mean_std, reconstructor, run_dir, run_timed, truth_of, write_config_echo, ModelMeta};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::{sha256_file, split_indices, write_json, Split};
use crate::Context;

fn fit(cfg: &RunConfig, ds: &Dataset, sha: &str, method: Method, save_to: &Path) -> CliResult<LearnedModel> {
    let cond = cfg.condition_config();
    let ex = examples(ds, &split_indices(ds.len(), Split::Train), &cond)?;
    if ex.is_empty() {
        return Err(CliError::Data("training split is empty".into()));
    }
    let norm = Normalizer::fit(&ex)?;
    let net = VelocityNet::new(method.net_config(
        ex[0].condition.channels,
        ex[0].target.channels,
        cfg.net.base_width,
        cfg.net.depth,
        cfg.net.time_embed_dim,
    ))?;
    let pairs = norm.pairs(&ex)?;
    let state = TrainState::fresh(net.init_params(cfg.train.seed));
    let out = train_with(&net, &pairs, &cfg.train, method.objective(&cfg.ddpm)?.as_ref(), state, &mut |_| Ok(()))?;
    let meta = ModelMeta {
        method,
        task: ds.task(),
        norm: norm.clone(),
        cond: cond.clone(),
        ddpm: cfg.ddpm.clone(),
        epoch: out.state.epoch,
        losses: out.state.losses.clone(),
        dataset_sha256: sha.to_string(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    Checkpoint {
        net: net.config().clone(),
        meta: serde_json::to_value(meta)?,
        params: out.best_params.clone(),
        adam: None,
    }
    .save(save_to)?;
    Ok(LearnedModel {
        method,
        net,
        params: out.best_params,
        norm,
        cond,
    })
}

pub fn run(ctx: &Context, task: Task, data: Option<&Path>, from: Option<&Path>) -> CliResult<()> {
    let cfg = &ctx.config;
    let dir = run_dir(ctx, "bench")?;
    write_config_echo(&dir, cfg)?;
    let (ds, sha) = match data {
        Some(p) => load_dataset(p, Some(task))?,
        None => {
            if cfg.bench.records == 0 {
                return Err(CliError::Usage("bench.records must be >= 1".into()));
            }
            let ds = generate_dataset(task, cfg.bench.records, cfg.seed, &cfg.generate_config())?;
            let p = dir.join(format!("dataset_{}.ckmd", task.name()));
            ds.save(&p)?;
            let sha = sha256_file(&p)?;
            (ds, sha)
        }
    };
    let test_idx = split_indices(ds.len(), Split::Test);
    if test_idx.is_empty() {
        return Err(CliError::Data("test split is empty".into()));
    }
    let truth: Vec<_> = test_idx.iter().map(|&i| truth_of(&ds, i)).collect();

    let mut methods = Vec::new();
    for &m in &cfg.bench.methods {
        if !m.supports(task) {
            log::warn!("skipping {m}: not applicable to task {}", task.name());
        } else if !methods.contains(&m) {
            methods.push(m);
        }
    }
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| CliError::Data(format!("thread pool: {e}")))?;

    let mut accuracy = Vec::new();
    let mut timed = Vec::new();
    for &m in &methods {
        let model = if m.is_learned() {
            let reuse = from.map(|f| f.join(run_dir_name(m, task)).join(BEST));
            Some(match reuse.filter(|p| p.is_file()) {
                Some(p) => load_model(&p)?.0,
                None => fit(cfg, &ds, &sha, m, &dir.join(format!("{}_{}.ckmw", m.name(), task.name())))?,
            })
        } else {
            None
        };
        let cond = model.as_ref().map(|x| x.cond.clone()).unwrap_or_else(|| cfg.condition_config());
        let rec = reconstructor(cfg, m, model)?;
        let ex = examples(&ds, &test_idx, &cond)?;
        let preds = ex
            .iter()
            .map(|e| rec.reconstruct(&e.observation, e.index as u64))
            .collect::<ckmflow::Result<Vec<_>>>()?;
        let n_time = cfg.bench.timing_samples.min(ex.len()).max(1);
        let (_, times) = single.install(|| run_timed(&rec, &ex[..n_time]))?;
        let metric_times = cfg.metrics.timing.then_some(times.as_slice());
        accuracy.push(evaluate(m.name(), task, &preds, &truth, metric_times)?);
        let mut with_time = accuracy.last().cloned().expect("just pushed");
        with_time.wall_time_ms = Some(mean_std(&times).0);
        log::info!("{m}: {:.3} ms/sample", with_time.wall_time_ms.unwrap_or(0.0));
        timed.push(with_time);
    }

    std::fs::write(dir.join("bench_metrics.csv"), reports_to_csv(&accuracy))?;
    std::fs::write(dir.join("bench.csv"), reports_to_csv(&timed))?;
    let time_of = |m: Method| timed.iter().find(|r| r.method == m.name()).and_then(|r| r.wall_time_ms);
    let ratio = match (time_of(Method::Ddpm), time_of(Method::Gfm)) {
        (Some(d), Some(g)) if g > 0.0 => Some(d / g),
        _ => None,
    };
    write_json(
        &dir.join("bench_summary.json"),
        &json!({
            "task": task.name(),
            "methods": methods.iter().map(|m| m.name()).collect::<Vec<_>>(),
            "test_records": test_idx.len(),
            "ddpm_steps": cfg.ddpm.t_steps,
            "gfm_steps": cfg.inference.steps,
            "ddpm_over_gfm_time": ratio,
        }),
    )?;
    print!("{}", reports_to_table(&timed));
    if let Some(r) = ratio {
        println!(
            "ddpm(T={}) / gfm(N={}) time ratio {r:.2}",
            cfg.ddpm.t_steps, cfg.inference.steps
        );
    }
    println!("bench_dir {}", dir.display());
    Ok(())
}
