//! Subcommand implementations and the plumbing they share.

pub mod ablate;
pub mod bench;
pub mod eval;
pub mod gen;
pub mod infer;
pub mod train;

use std::path::{Path, PathBuf};
use std::time::Instant;

use ckmflow::autodiff_net::{Checkpoint, VelocityNet};
use ckmflow::baselines::{DdpmConfig, LearnedModel, Method, Reconstructor};
use ckmflow::flow_engine::{
    build_examples, ConditionConfig, Example, Normalizer, Reconstruction,
};
use ckmflow::scene_sim::{Dataset, Records, Task};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::{self, Split};
use crate::Context;

pub const CONFIG_ECHO: &str = "config.json";

/// Run metadata stored in every checkpoint header.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub method: Method,
    pub task: Task,
    pub norm: Normalizer,
    pub cond: ConditionConfig,
    pub ddpm: DdpmConfig,
    /// Completed epochs.
    pub epoch: usize,
    pub losses: Vec<f64>,
    pub dataset_sha256: String,
    pub crate_version: String,
}

pub fn load_dataset(path: &Path, task: Option<Task>) -> CliResult<(Dataset, String)> {
    if !path.is_file() {
        return Err(CliError::Data(format!("dataset {} not found", path.display())));
    }
    let ds = Dataset::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if let Some(t) = task {
        if ds.task() != t {
            return Err(CliError::Data(format!(
                "{} holds task {} records, expected task {}",
                path.display(),
                ds.task().name(),
                t.name()
            )));
        }
    }
    let sha = io::sha256_file(path)?;
    Ok((ds, sha))
}

pub fn write_config_echo(dir: &Path, cfg: &RunConfig) -> CliResult<()> {
    std::fs::write(dir.join(CONFIG_ECHO), cfg.to_json())?;
    Ok(())
}

pub fn run_dir(ctx: &Context, name: &str) -> CliResult<PathBuf> {
    io::ensure_dir(&ctx.out_root.join(name))
}

pub fn load_model(path: &Path) -> CliResult<(LearnedModel, ModelMeta, Checkpoint)> {
    if !path.is_file() {
        return Err(CliError::Data(format!("checkpoint {} not found", path.display())));
    }
    let ck = Checkpoint::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let meta: ModelMeta = serde_json::from_value(ck.meta.clone())
        .map_err(|e| CliError::Data(format!("{}: bad metadata: {e}", path.display())))?;
    let net = VelocityNet::new(ck.net.clone())?;
    net.check_store(&ck.params)?;
    let model = LearnedModel {
        method: meta.method,
        net,
        params: ck.params.clone(),
        norm: meta.norm.clone(),
        cond: meta.cond.clone(),
    };
    Ok((model, meta, ck))
}

pub fn reconstructor(cfg: &RunConfig, method: Method, model: Option<LearnedModel>) -> CliResult<Reconstructor> {
    Ok(match method {
        Method::Knn => Reconstructor::Knn { k: cfg.metrics.knn_k },
        Method::Bilinear => Reconstructor::Bilinear,
        Method::Bicubic => Reconstructor::Bicubic,
        m => {
            let model = model.ok_or_else(|| CliError::Usage(format!("method '{m}' needs --checkpoint")))?;
            if model.method != m {
                return Err(CliError::Usage(format!(
                    "checkpoint holds a '{}' model, not '{m}'",
                    model.method
                )));
            }
            Reconstructor::Learned {
                model: Box::new(model),
                infer: cfg.inference.clone(),
                ddpm: cfg.ddpm.clone(),
            }
        }
    })
}

pub fn truth_of(ds: &Dataset, index: usize) -> Reconstruction {
    match &ds.records {
        Records::A(r) => Reconstruction::A(r[index].target.clone()),
        Records::B(r) => Reconstruction::B(r[index].target.clone()),
    }
}

pub fn select(ds: &Dataset, split: Split, limit: Option<usize>) -> CliResult<Vec<usize>> {
    let mut idx = io::split_indices(ds.len(), split);
    if let Some(l) = limit {
        idx.truncate(l);
    }
    if idx.is_empty() {
        return Err(CliError::Data("the selected split is empty".into()));
    }
    Ok(idx)
}

pub fn examples(ds: &Dataset, indices: &[usize], cond: &ConditionConfig) -> CliResult<Vec<Example>> {
    Ok(build_examples(ds, indices, cond)?)
}

/// Reconstruct every example, timing each call. The first two examples are
/// run once beforehand as warm-up.
pub fn run_timed(r: &Reconstructor, ex: &[Example]) -> CliResult<(Vec<Reconstruction>, Vec<f64>)> {
    for e in ex.iter().take(2) {
        r.reconstruct(&e.observation, e.index as u64)?;
    }
    let mut out = Vec::with_capacity(ex.len());
    let mut times = Vec::with_capacity(ex.len());
    for e in ex {
        let t0 = Instant::now();
        let rec = r.reconstruct(&e.observation, e.index as u64)?;
        times.push(t0.elapsed().as_secs_f64() * 1e3);
        out.push(rec);
    }
    Ok((out, times))
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len().max(1) as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Coefficient of determination of the least-squares line through `(x, y)`.
pub fn linear_r2(x: &[f64], y: &[f64]) -> f64 {
    let (mx, _) = mean_std(x);
    let (my, _) = mean_std(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return 1.0;
    }
    sxy * sxy / (sxx * syy)
}
