//! Dataset and checkpoint files on disk.

use ckmflow::autodiff_net::{AdamState, Checkpoint, VelocityNet, VelocityNetConfig};
use ckmflow::scene_sim::{generate_dataset, Dataset, GenerateConfig, Task};
use serde_json::json;

#[test]
fn datasets_survive_a_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for task in [Task::A, Task::B] {
        let ds = generate_dataset(task, 3, 21, &GenerateConfig::default()).unwrap();
        let path = dir.path().join(format!("{}.ckmd", task.name()));
        ds.save(&path).unwrap();
        let back = Dataset::load(&path).unwrap();
        assert_eq!(back, ds);
        assert_eq!(std::fs::read(&path).unwrap(), ds.to_bytes());
    }
}

#[test]
fn truncated_or_missing_dataset_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate_dataset(Task::A, 2, 3, &GenerateConfig::default()).unwrap();
    let bytes = ds.to_bytes();
    let path = dir.path().join("cut.ckmd");
    std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
    assert!(Dataset::load(&path).is_err());
    assert!(Dataset::load(&dir.path().join("absent.ckmd")).is_err());
}

#[test]
fn checkpoints_keep_params_optimizer_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let config = VelocityNetConfig {
        in_channels: 4,
        out_channels: 1,
        base_width: 4,
        depth: 1,
        time_embed_dim: 8,
    };
    let net = VelocityNet::new(config.clone()).unwrap();
    let params = net.init_params(8);
    let mut adam = AdamState::new(params.len());
    adam.step = 12;
    adam.m[3] = 0.25;
    let ckpt = Checkpoint {
        net: config,
        meta: json!({"epoch": 4, "note": "x"}),
        params,
        adam: Some(adam),
    };
    let path = dir.path().join("w.ckmw");
    ckpt.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.net, ckpt.net);
    assert_eq!(back.meta, ckpt.meta);
    assert_eq!(back.params.values(), ckpt.params.values());
    assert_eq!(back.params.layout(), ckpt.params.layout());
    let (a, b) = (back.adam.unwrap(), ckpt.adam.unwrap());
    assert_eq!((a.step, a.m, a.v), (b.step, b.m, b.v));

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] ^= 0xFF;
    std::fs::write(&path, &bytes).unwrap();
    assert!(Checkpoint::load(&path).is_err());
}
