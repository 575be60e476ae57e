use adasecant::harness::{
    read_csv, ExperimentConfig, HarnessError, OptimizerSpec, Run, TerminalStatus, CHECKPOINT_SCHEMA_VERSION,
};
use adasecant::problems::{LogRegSpec, MlpSpec};
use adasecant::{BaselineKind, ProblemSpec};

fn small_logreg() -> ExperimentConfig {
    ExperimentConfig {
        problem: ProblemSpec::Logreg(LogRegSpec {
            n_samples: 128,
            ..Default::default()
        }),
        max_steps: 60,
        record_every: 7,
        ..Default::default()
    }
}

#[test]
fn checkpoint_file_resumes_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ckpt");
    for optimizer in [OptimizerSpec::default(), OptimizerSpec::baseline(BaselineKind::Adadelta)] {
        let cfg = ExperimentConfig {
            optimizer,
            ..small_logreg()
        };
        let full = Run::new(cfg.clone()).unwrap().finish();
        let mut run = Run::new(cfg).unwrap();
        run.advance(23);
        run.save_checkpoint(&path).unwrap();
        let resumed = Run::load_checkpoint(&path).unwrap();
        assert_eq!(resumed.step_count(), 23);
        assert_eq!(resumed.finish(), full);
    }
}

#[test]
fn checkpoint_with_other_schema_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ckpt");
    let mut run = Run::new(small_logreg()).unwrap();
    run.advance(5);
    run.save_checkpoint(&path).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    doc["schema_version"] = (CHECKPOINT_SCHEMA_VERSION + 1).into();
    std::fs::write(&path, doc.to_string()).unwrap();
    match Run::load_checkpoint(&path) {
        Err(HarnessError::Schema { found, expected }) => {
            assert_eq!((found, expected), (CHECKPOINT_SCHEMA_VERSION + 1, CHECKPOINT_SCHEMA_VERSION));
        }
        other => panic!("expected schema error, got {:?}", other.map(|r| r.step_count())),
    }
}

#[test]
fn truncated_checkpoint_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ckpt");
    Run::new(small_logreg()).unwrap().save_checkpoint(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, &text[..text.len() / 2]).unwrap();
    assert!(Run::load_checkpoint(&path).is_err());
}

#[test]
fn config_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    let cfg = ExperimentConfig {
        problem: ProblemSpec::Mlp(MlpSpec::default()),
        optimizer: OptimizerSpec::baseline(BaselineKind::Rmsprop),
        seed: 9,
        ..Default::default()
    };
    std::fs::write(&path, cfg.to_toml()).unwrap();
    let back = ExperimentConfig::load(&path).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.digest(), cfg.digest());
}

#[test]
fn diverging_run_keeps_its_curve() {
    let cfg = ExperimentConfig {
        problem: ProblemSpec::Rosenbrock,
        optimizer: OptimizerSpec::Baseline {
            algorithm: BaselineKind::SgdMomentum,
            hyper: Some(adasecant::BaselineHyper {
                lr: 10.0,
                ..adasecant::BaselineHyper::defaults(BaselineKind::SgdMomentum, 100)
            }),
        },
        max_steps: 100,
        record_every: 50,
        ..Default::default()
    };
    let rec = adasecant::harness::run_experiment(&cfg).unwrap();
    assert_eq!(rec.terminal_status, TerminalStatus::Diverged);
    let last = rec.rows.last().unwrap();
    assert!(last.step < 50);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    adasecant::harness::write_csv(&rec.rows, &path).unwrap();
    assert_eq!(read_csv(&path).unwrap().len(), rec.rows.len());
}

#[test]
fn shipped_configs_are_valid() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ExperimentConfig::load(&path).unwrap().validate().unwrap();
            n += 1;
        }
    }
    assert!(n >= 2);
}
