use ckmflow::scene_sim::{generate_dataset, Task};

use crate::error::{CliError, CliResult};
use crate::io::{ensure_dir, sha256_file};
use crate::Context;

pub fn run(ctx: &Context, task: Task, count: usize, name: Option<String>) -> CliResult<()> {
    if count == 0 {
        return Err(CliError::Usage("--count must be >= 1".into()));
    }
    let dir = ensure_dir(&ctx.out_root)?;
    let name = name.unwrap_or_else(|| format!("dataset_{}.ckmd", task.name()));
    let path = dir.join(&name);
    let ds = generate_dataset(task, count, ctx.config.seed, &ctx.config.generate_config())?;
    ds.save(&path)?;
    std::fs::write(dir.join(format!("{name}.config.json")), ctx.config.to_json())?;
    let sha = sha256_file(&path)?;
    println!("records {}", ds.len());
    println!("sha256 {sha}");
    println!("path {}", path.display());
    Ok(())
}
