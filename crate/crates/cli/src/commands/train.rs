use std::fmt::Write as _;
use std::path::Path;

use ckmflow::autodiff_net::{Checkpoint, VelocityNet};
use ckmflow::baselines::Method;
use ckmflow::flow_engine::{train_until, Normalizer, TrainState};
use ckmflow::scene_sim::Task;
use serde_json::json;

use super::{examples, load_dataset, load_model, run_dir, write_config_echo, ModelMeta};
use crate::error::{CliError, CliResult};
use crate::io::{split_indices, write_json, Split};
use crate::Context;

pub const BEST: &str = "best.ckmw";
pub const LAST: &str = "last.ckmw";
pub const LOSS_CSV: &str = "loss.csv";

pub fn run_dir_name(method: Method, task: Task) -> String {
    format!("train_{}_{}", method.name(), task.name())
}

fn loss_csv(losses: &[f64]) -> String {
    let mut s = String::from("epoch,mean_loss\n");
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(s, "{},{l:.10e}", i + 1);
    }
    s
}

pub fn run(
    ctx: &Context,
    task: Task,
    data: &Path,
    method: Method,
    resume: Option<&Path>,
    stop_after: Option<usize>,
) -> CliResult<()> {
    if !method.is_learned() {
        return Err(CliError::Usage(format!("method '{method}' has nothing to train")));
    }
    let cfg = &ctx.config;
    cfg.train.validate()?;
    let (ds, sha) = load_dataset(data, Some(task))?;
    let dir = run_dir(ctx, &run_dir_name(method, task))?;
    write_config_echo(&dir, cfg)?;

    let train_idx = split_indices(ds.len(), Split::Train);
    if train_idx.is_empty() {
        return Err(CliError::Data("training split is empty".into()));
    }
    write_json(
        &dir.join("split.json"),
        &json!({
            "dataset_sha256": sha,
            "train": train_idx,
            "test": split_indices(ds.len(), Split::Test),
        }),
    )?;

    let (net, state, norm, cond) = match resume {
        Some(p) => {
            let (model, meta, ck) = load_model(p)?;
            if meta.task != task || meta.method != method {
                return Err(CliError::Data(format!(
                    "checkpoint is a {} model for task {}",
                    meta.method,
                    meta.task.name()
                )));
            }
            let adam = ck
                .adam
                .ok_or_else(|| CliError::Data(format!("{} carries no optimizer state", p.display())))?;
            let state = TrainState {
                params: model.params,
                adam,
                epoch: meta.epoch,
                losses: meta.losses,
            };
            (model.net, state, meta.norm, meta.cond)
        }
        None => {
            let cond = cfg.condition_config();
            let ex = examples(&ds, &train_idx, &cond)?;
            let norm = Normalizer::fit(&ex)?;
            let first = &ex[0];
            let net_cfg = method.net_config(
                first.condition.channels,
                first.target.channels,
                cfg.net.base_width,
                cfg.net.depth,
                cfg.net.time_embed_dim,
            );
            let net = VelocityNet::new(net_cfg)?;
            let state = TrainState::fresh(net.init_params(cfg.train.seed));
            (net, state, norm, cond)
        }
    };
    write_json(&dir.join("norm.json"), &norm)?;

    let ex = examples(&ds, &train_idx, &cond)?;
    let pairs = norm.pairs(&ex)?;
    let objective = method.objective(&cfg.ddpm)?;
    let meta_for = |state: &TrainState| ModelMeta {
        method,
        task,
        norm: norm.clone(),
        cond: cond.clone(),
        ddpm: cfg.ddpm.clone(),
        epoch: state.epoch,
        losses: state.losses.clone(),
        dataset_sha256: sha.clone(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let save = |state: &TrainState, name: &str, with_adam: bool| -> ckmflow::Result<()> {
        Checkpoint {
            net: net.config().clone(),
            meta: serde_json::to_value(meta_for(state)).expect("metadata serializes"),
            params: state.params.clone(),
            adam: with_adam.then(|| state.adam.clone()),
        }
        .save(&dir.join(name))
    };

    let until = stop_after.unwrap_or(cfg.train.epochs);
    log::info!(
        "training {method} on {} pairs, {} parameters",
        pairs.len(),
        net.param_count()
    );
    let outcome = train_until(&net, &pairs, &cfg.train, objective.as_ref(), state, until, &mut |e| {
        std::fs::write(dir.join(LOSS_CSV), loss_csv(&e.state.losses))?;
        save(e.state, LAST, true)?;
        if e.is_best {
            save(e.state, BEST, false)?;
        }
        Ok(())
    })?;
    let st = &outcome.state;
    std::fs::write(dir.join(LOSS_CSV), loss_csv(&st.losses))?;
    println!("epochs {}", st.epoch);
    if let Some(l) = st.losses.last() {
        println!("final_loss {l:.6e}");
    }
    println!("run_dir {}", dir.display());
    Ok(())
}
