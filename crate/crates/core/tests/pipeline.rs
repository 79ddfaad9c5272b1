use salab::diagnostics::{error_table, frequency_grid, probe_frequency_response, ProbeOptions};
use salab::frl::{identity_validation_mse, predict_rollout, train, FrlConfig, TrainConfig, TrainMode, TrainedForecaster};
use salab::nn::{load_checkpoint, save_checkpoint};
use salab::{generate_dataset, read_dataset, write_dataset, SolverConfig};

fn reference() -> salab::TrajectoryDataset {
    let cfg = SolverConfig { resolution: (32, 32), n_snapshots: 6, ..SolverConfig::default() }.with_stable_dt();
    generate_dataset(&cfg, 20).unwrap()
}

fn train_cfg(epochs: usize) -> TrainConfig {
    TrainConfig { train_res: 16, max_epochs: epochs, patience: None, hidden_channels: 8, n_blocks: 2, ..TrainConfig::default() }
}

#[test]
fn dataset_file_round_trip() {
    let ds = reference();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("data.salb");
    write_dataset(&ds, &p).unwrap();
    assert_eq!(read_dataset(&p).unwrap(), ds.quantized());
}

#[test]
fn training_beats_identity_and_checkpoint_reloads() {
    let ds = reference().quantized();
    let frl = FrlConfig { levels: 2, n_freq: 2, ..FrlConfig::default() };
    for mode in [TrainMode::Baseline, TrainMode::Frl] {
        let ckpt = train(&ds, mode, &frl, &train_cfg(15)).unwrap();
        let best = ckpt.meta.history[ckpt.meta.best_epoch].val_space;
        let identity = identity_validation_mse(&ds, 16).unwrap();
        assert!(best < identity, "{mode}: {best} vs identity {identity}");

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.sack");
        save_checkpoint(&ckpt, &p).unwrap();
        let loaded = load_checkpoint(&p).unwrap();
        assert_eq!(loaded, ckpt);

        let a = TrainedForecaster::new(ckpt);
        let b = TrainedForecaster::new(loaded);
        let u0 = &ds.trajectory(19)[0];
        assert_eq!(predict_rollout(&a, u0, 3).unwrap(), predict_rollout(&b, u0, 3).unwrap());

        let rep = error_table(&a, &ds, &[16, 32], 4, None).unwrap();
        assert!(rep.rows.iter().all(|r| r.rmse.is_finite() && r.rmse >= 0.0 && r.mae <= r.rmse));
        let curve = probe_frequency_response(&a, 32, &frequency_grid(0.0, 15.0, 1.0).unwrap(), &ProbeOptions::default())
            .unwrap();
        assert_eq!(curve.samples.len(), 16);
        assert!(curve.samples.iter().all(|s| s.h_mag.is_finite()));
    }
}

#[test]
fn training_is_deterministic() {
    let ds = reference().quantized();
    let frl = FrlConfig { levels: 2, n_freq: 2, ..FrlConfig::default() };
    let a = train(&ds, TrainMode::Frl, &frl, &train_cfg(2)).unwrap();
    let b = train(&ds, TrainMode::Frl, &frl, &train_cfg(2)).unwrap();
    assert_eq!(a, b);
}
