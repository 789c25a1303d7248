use tlcm::{
    checkpoint::{Checkpoint, StageTag},
    config::RunConfig,
    pipeline,
};
use tlcm_core::MlpModel;

fn small() -> RunConfig {
    RunConfig::resolve(
        None,
        &["model.hidden=[6, 5]".into(), "model.time_dim=4".into()],
        Some(2),
    )
    .unwrap()
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

#[test]
fn file_round_trip_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small();
    let teacher = MlpModel::init(cfg.model_spec(), 5).unwrap();
    let mut student = pipeline::student_from(&cfg, &teacher).unwrap();
    for (i, v) in student.net.params_mut().iter_mut().enumerate() {
        *v += (i as f64).sin() * 1e-3;
    }
    for stage in StageTag::ALL {
        let ck = if stage == StageTag::Teacher {
            pipeline::teacher_checkpoint(&cfg, &teacher).unwrap()
        } else {
            pipeline::student_checkpoint(&cfg, stage, &student)
        };
        let path = dir.path().join(format!("{}.ckpt", stage.name()));
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.stage, stage);
        assert_eq!(std::fs::read(&path).unwrap(), back.to_bytes());
        let snapshot = RunConfig::resolve(Some(&back.config), &[], None).unwrap();
        assert_eq!(snapshot, cfg);
        let loaded = pipeline::load_student(&back, &snapshot).unwrap();
        let want = if stage == StageTag::Teacher {
            teacher.params()
        } else {
            student.net.params()
        };
        assert!(same_bits(loaded.net.params(), want), "{stage:?}");
    }
}

#[test]
fn stage_and_schedule_guards() {
    let cfg = small();
    let teacher = MlpModel::init(cfg.model_spec(), 5).unwrap();
    let student = pipeline::student_from(&cfg, &teacher).unwrap();
    let ck = pipeline::student_checkpoint(&cfg, StageTag::Mlcd, &student);
    assert!(pipeline::load_teacher(&ck, &cfg).is_err());
    let other = RunConfig::resolve(Some(&cfg.to_toml()), &["schedule.T=2000".into()], None).unwrap();
    assert!(pipeline::load_student(&ck, &other).is_err());
}
