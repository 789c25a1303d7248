//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 5 to 10 share one teacher and one set of distillation runs; the
//! runtime printed for those is the time spent on the criterion's own work.

use std::{
    cell::Cell,
    process::{Command, ExitCode},
    time::Instant,
};

use tlcm::{
    config::RunConfig,
    diagnostics::{gradient_suite, GRAD_TOL},
    io,
    pipeline::{self, Student},
};
use tlcm_core::{
    diffusion::{ddim_multi, mds_sample},
    distill::cm_predict,
    enhance::held_out_reward,
    eval::{sliced_w2, sweep_steps, ClassPolicy, EvalTarget, NoClock, Sampler, TeacherSampler},
    rng::{self, stream},
    teacher::AnalyticGaussian,
    trace::NullSink,
    ConditionLabel, LatentBatch, Matrix, MlpModel, NoiseModel, SegmentPlan,
};

const SEED: u64 = 7;
const SEEDS: [u64; 3] = [7, 8, 9];
const EVAL_N: usize = 8192;
const CLASS_N: usize = 2048;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn config(seed: u64) -> RunConfig {
    RunConfig::resolve(None, &[], Some(seed)).expect("default config")
}

/// Pooled and per-class sliced W2 of `sampler` at `steps`, on noise fixed by the
/// acceptance seed.
struct Scorer {
    cfg: RunConfig,
}

impl Scorer {
    fn run(&self, sampler: &dyn Sampler, steps: usize, policy: ClassPolicy, n: usize) -> f64 {
        let ds = self.cfg.dataset().unwrap();
        let reward = pipeline::reward(&self.cfg, &ds).unwrap();
        let target = EvalTarget {
            data: &ds,
            reward: &reward,
            projections: self.cfg.eval.projections,
            energy_rows: 1024,
        };
        sweep_steps("acceptance", sampler, &[steps], n, policy, &target, SEED, &mut NoClock).unwrap()[0].w2
    }

    fn pooled(&self, sampler: &dyn Sampler, steps: usize) -> f64 {
        self.run(sampler, steps, ClassPolicy::Balanced, EVAL_N)
    }

    fn per_class(&self, sampler: &dyn Sampler, steps: usize) -> Vec<f64> {
        (0..self.cfg.data.k)
            .map(|k| self.run(sampler, steps, ClassPolicy::Fixed(k), CLASS_N))
            .collect()
    }
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/")
}

fn majority(flags: &[bool]) -> bool {
    2 * flags.iter().filter(|&&f| f).count() > flags.len()
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let cfg = config(SEED);
    let student = pipeline::student_with(&cfg, MlpModel::init(cfg.model_spec(), SEED).unwrap()).unwrap();
    let mut r = rng::stream_rng(SEED, stream::EVAL, 100);
    let z = rng::normal_matrix(&mut r, 1000, 2).scale(5.0);
    let labels: Vec<ConditionLabel> = (0..1000)
        .map(|i| {
            if i % 5 == 4 {
                ConditionLabel::Null
            } else {
                ConditionLabel::Class((i % 4) as u32)
            }
        })
        .collect();
    let out = cm_predict(&student, &LatentBatch::at(z.clone(), 0.0, labels).unwrap()).unwrap();
    let err = out
        .as_slice()
        .iter()
        .zip(z.as_slice())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let secs = started.elapsed().as_secs_f64();
    outcome(
        err < 1e-12 && secs < 1.0,
        format!("max abs err {err:.1e} over 1000 points in {secs:.3} s"),
    )
}

fn criterion_2() -> Outcome {
    let started = Instant::now();
    let cfg = config(SEED);
    let teacher = MlpModel::init(cfg.model_spec(), SEED).unwrap();
    let suite = gradient_suite(&cfg, &teacher, 8, 64).unwrap();
    let worst = suite.iter().map(|e| e.report.max_rel_err).fold(0.0, f64::max);
    let parts: Vec<String> = suite
        .iter()
        .map(|e| format!("{}={:.1e}", e.name, e.report.max_rel_err))
        .collect();
    let secs = started.elapsed().as_secs_f64();
    outcome(
        worst < GRAD_TOL && secs < 120.0,
        format!("{} in {secs:.1} s", parts.join(" ")),
    )
}

fn criterion_3() -> Outcome {
    let started = Instant::now();
    let schedule = config(SEED).schedule().unwrap();
    let (mu, sigma, n) = (vec![2.0, -1.0], 0.5, 10_000);
    let oracle = AnalyticGaussian {
        mu: mu.clone(),
        sigma,
        schedule: schedule.clone(),
    };
    let eps = rng::normal_matrix(&mut rng::stream_rng(SEED, stream::EVAL, 200), n, 2);
    let unit = rng::normal_matrix(&mut rng::stream_rng(SEED, stream::TRUTH, 200), n, 2);
    let truth = Matrix::from_vec(
        n,
        2,
        unit.as_slice()
            .iter()
            .enumerate()
            .map(|(i, v)| mu[i % 2] + sigma * v)
            .collect(),
    );
    let start = LatentBatch::at(eps, schedule.t_max(), vec![ConditionLabel::Null; n]).unwrap();
    let ladder: Vec<f64> = [1, 2, 4, 8, 16, 32, 64]
        .iter()
        .map(|&k| {
            let x = ddim_multi(&schedule, &oracle, &start, &vec![0.0; n], k, 1.0).unwrap().z;
            sliced_w2(&x, &truth, 128, SEED).unwrap()
        })
        .collect();
    let decreasing = ladder.windows(2).all(|w| w[1] < w[0]);
    let last = *ladder.last().unwrap();
    let secs = started.elapsed().as_secs_f64();
    outcome(
        decreasing && last < 0.05 && secs < 60.0,
        format!(
            "W2 at 1..64 steps {} (64 steps {last:.4} < 0.05) in {secs:.1} s",
            fmt(&ladder)
        ),
    )
}

/// Records every `predict` call of a zero noise model.
struct Counting {
    calls: Cell<usize>,
    times: std::cell::RefCell<Vec<f64>>,
}

impl NoiseModel for Counting {
    fn data_dim(&self) -> usize {
        2
    }

    fn predict(&self, z: &Matrix, t: &[f64], _labels: &[ConditionLabel]) -> tlcm_core::Result<Matrix> {
        self.calls.set(self.calls.get() + 1);
        self.times.borrow_mut().push(t[0]);
        Ok(Matrix::zeros(z.rows(), z.cols()))
    }
}

fn criterion_4() -> Outcome {
    let cfg = config(SEED);
    let schedule = cfg.schedule().unwrap();
    let plan = SegmentPlan::uniform(8, 1000).unwrap();
    let mut counts = Vec::new();
    let mut ok = true;
    for s in 0..plan.segments() {
        let t_m = 0.5 * (plan.floor(s) + plan.ceil(s));
        let model = Counting {
            calls: Cell::new(0),
            times: Default::default(),
        };
        let eps = Matrix::zeros(1, 2);
        mds_sample(
            &schedule,
            &model,
            &eps,
            &[t_m],
            &[s],
            &plan,
            &[ConditionLabel::Class(0)],
            cfg.distill.w,
        )
        .unwrap();
        let calls = model.calls.get();
        let times = model.times.borrow();
        let distinct = times.windows(2).all(|w| w[1] < w[0]);
        ok &= calls == plan.segments() - s && distinct && times.first() == Some(&schedule.t_max());
        counts.push(calls.to_string());
    }
    outcome(ok, format!("steps for s=0..7: {} (expected 8..1)", counts.join(",")))
}

/// Runs shared by criteria 5 to 10.
struct Shared {
    cfg: RunConfig,
    teacher: MlpModel,
    teacher_secs: f64,
    seeds: Vec<SeedRuns>,
}

struct SeedRuns {
    seed: u64,
    secs_mds: f64,
    secs_single: f64,
    secs_p3: f64,
    secs_p1: f64,
    mlcd_mds: Student,
    mlcd_single: Student,
    ilcd_p3: Student,
    ilcd_p1: Student,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64())
}

fn shared_runs() -> Shared {
    let cfg = config(SEED);
    let (teacher, teacher_secs) = timed(|| pipeline::teacher(&cfg, &mut NullSink).unwrap());
    eprintln!("[acceptance] teacher trained in {teacher_secs:.0} s");
    let mut seeds = Vec::new();
    for &seed in &SEEDS {
        let c = config(seed);
        let (mlcd_mds, secs_mds) = timed(|| {
            let mut s = pipeline::student_from(&c, &teacher).unwrap();
            pipeline::mlcd(&c, &teacher, &mut s, &mut NullSink).unwrap();
            s
        });
        let single_cfg = RunConfig::resolve(None, &["distill.mds=false".into()], Some(seed)).unwrap();
        let (mlcd_single, secs_single) = timed(|| {
            let mut s = pipeline::student_from(&single_cfg, &teacher).unwrap();
            pipeline::mlcd(&single_cfg, &teacher, &mut s, &mut NullSink).unwrap();
            s
        });
        let ilcd_with = |p: usize| {
            let cp = RunConfig::resolve(None, &[format!("distill.p={p}")], Some(seed)).unwrap();
            timed(|| {
                let mut s = mlcd_mds.clone();
                pipeline::ilcd(&cp, &teacher, &mut s, &mut NullSink).unwrap();
                s
            })
        };
        let (ilcd_p3, secs_p3) = ilcd_with(3);
        let (ilcd_p1, secs_p1) = ilcd_with(1);
        eprintln!("[acceptance] seed {seed} distillation runs done");
        seeds.push(SeedRuns {
            seed,
            secs_mds,
            secs_single,
            secs_p3,
            secs_p1,
            mlcd_mds,
            mlcd_single,
            ilcd_p3,
            ilcd_p1,
        });
    }
    Shared {
        cfg,
        teacher,
        teacher_secs,
        seeds,
    }
}

fn criterion_5(sh: &Shared, sc: &Scorer) -> Outcome {
    let started = Instant::now();
    let schedule = sh.cfg.schedule().unwrap();
    let teacher = TeacherSampler {
        teacher: &sh.teacher,
        schedule: &schedule,
        w: sh.cfg.distill.w,
    };
    let run = &sh.seeds[0];
    let t_pooled = sc.pooled(&teacher, 64);
    let t_class = sc.per_class(&teacher, 64);
    let s_pooled = sc.pooled(&run.ilcd_p3, 4);
    let s_class = sc.per_class(&run.ilcd_p3, 4);
    let bound = |t: f64| 1.5 * t + 0.05;
    let pass = s_pooled <= bound(t_pooled) && s_class.iter().zip(&t_class).all(|(s, t)| *s <= bound(*t));
    let secs = sh.teacher_secs + run.secs_mds + run.secs_p3 + started.elapsed().as_secs_f64();
    outcome(
        pass && secs < 900.0,
        format!(
            "4-step student pooled {s_pooled:.3} per class {} vs teacher-64 pooled {t_pooled:.3} per class {} (bound 1.5x+0.05) in {secs:.0} s",
            fmt(&s_class),
            fmt(&t_class)
        ),
    )
}

fn criterion_6(sh: &Shared, sc: &Scorer) -> Outcome {
    let started = Instant::now();
    let mut flags = Vec::new();
    let mut parts = Vec::new();
    let mut secs = 0.0;
    for run in &sh.seeds {
        let (m, s) = (sc.pooled(&run.mlcd_mds, 4), sc.pooled(&run.mlcd_single, 4));
        flags.push(m <= s);
        parts.push(format!("seed {}: {m:.3} vs {s:.3}", run.seed));
        secs += run.secs_mds + run.secs_single;
    }
    let secs = secs + started.elapsed().as_secs_f64();
    outcome(
        majority(&flags) && secs < 1800.0,
        format!(
            "4-step pooled W2 multistep vs single-step init: {} in {secs:.0} s",
            parts.join(", ")
        ),
    )
}

fn criterion_7(sh: &Shared, sc: &Scorer) -> Outcome {
    let started = Instant::now();
    let mut flags = Vec::new();
    let mut parts = Vec::new();
    let mut secs = 0.0;
    for run in &sh.seeds {
        let (after, before) = (sc.pooled(&run.ilcd_p3, 2), sc.pooled(&run.mlcd_mds, 2));
        flags.push(after <= before);
        parts.push(format!("seed {}: {after:.3} vs {before:.3}", run.seed));
        secs += run.secs_mds + run.secs_p3;
    }
    let secs = secs + started.elapsed().as_secs_f64();
    outcome(
        majority(&flags) && secs < 1200.0,
        format!(
            "2-step pooled W2 after stage 2 vs stage 1 only: {} in {secs:.0} s",
            parts.join(", ")
        ),
    )
}

fn criterion_8(sh: &Shared, sc: &Scorer) -> Outcome {
    let started = Instant::now();
    let mut flags = Vec::new();
    let mut parts = Vec::new();
    let mut secs = 0.0;
    for run in &sh.seeds {
        let (p3, p1) = (sc.pooled(&run.ilcd_p3, 4), sc.pooled(&run.ilcd_p1, 4));
        flags.push(p3 <= p1);
        parts.push(format!("seed {}: {p3:.3} vs {p1:.3}", run.seed));
        secs += run.secs_p3 + run.secs_p1;
    }
    let secs = secs + started.elapsed().as_secs_f64();
    outcome(
        majority(&flags) && secs < 1800.0,
        format!("4-step pooled W2 with p=3 vs p=1: {} in {secs:.0} s", parts.join(", ")),
    )
}

fn criterion_9(sh: &Shared, sc: &Scorer) -> Outcome {
    let started = Instant::now();
    let cfg = RunConfig::resolve(None, &["enhance.stages=[\"reward\"]".into()], Some(SEED)).unwrap();
    let reward = pipeline::reward(&cfg, &cfg.dataset().unwrap()).unwrap();
    let before = &sh.seeds[0].ilcd_p3;
    let q = cfg.distill.q;
    let r0 = held_out_reward(before, &reward, 2048, q, SEED).unwrap();
    let w0 = sc.pooled(before, q);
    let mut after = before.clone();
    pipeline::enhance(&cfg, &sh.teacher, &mut after, &mut NullSink).unwrap();
    let r1 = held_out_reward(&after, &reward, 2048, q, SEED).unwrap();
    let w1 = sc.pooled(&after, q);
    let gain = r1 - r0;
    let need = 0.05 * reward.scale;
    let secs = started.elapsed().as_secs_f64();
    outcome(
        gain >= need && w1 <= 1.25 * w0 && secs < 300.0,
        format!(
            "reward {r0:.2} -> {r1:.2} (gain {gain:.2} >= {need:.2}), pooled W2 {w0:.3} -> {w1:.3} (limit {:.3}) after {} iterations in {secs:.1} s",
            1.25 * w0,
            cfg.enhance.reward_iters
        ),
    )
}

fn criterion_10(sh: &Shared) -> Outcome {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg_path = d.join("run.toml");
    std::fs::write(&cfg_path, sh.cfg.to_toml()).unwrap();
    let cfg = RunConfig::load(Some(&cfg_path), &[], None).unwrap();

    let mut student = sh.seeds[0].ilcd_p3.clone();
    pipeline::enhance(&cfg, &sh.teacher, &mut student, &mut NullSink).unwrap();
    let reports = pipeline::evaluate(&cfg, &student, &mut NoClock).unwrap();
    let lib_csv = d.join("library.csv");
    io::append_reports(&lib_csv, &reports).unwrap();

    let bin = env!("CARGO_BIN_EXE_tlcm");
    let p = |name: &str| d.join(name).to_str().unwrap().to_string();
    let cfg_arg = cfg_path.to_str().unwrap().to_string();
    let steps: [Vec<String>; 5] = [
        vec!["train-teacher".into(), "--out".into(), p("teacher.ckpt")],
        vec![
            "distill".into(),
            "--stage".into(),
            "mlcd".into(),
            "--teacher".into(),
            p("teacher.ckpt"),
            "--out".into(),
            p("mlcd.ckpt"),
        ],
        vec![
            "distill".into(),
            "--stage".into(),
            "ilcd".into(),
            "--teacher".into(),
            p("teacher.ckpt"),
            "--student".into(),
            p("mlcd.ckpt"),
            "--out".into(),
            p("ilcd.ckpt"),
        ],
        vec![
            "enhance".into(),
            "--student".into(),
            p("ilcd.ckpt"),
            "--teacher".into(),
            p("teacher.ckpt"),
            "--out".into(),
            p("enhanced.ckpt"),
        ],
        vec![
            "eval".into(),
            "--student".into(),
            p("enhanced.ckpt"),
            "--out".into(),
            p("cli.csv"),
        ],
    ];
    for args in &steps {
        let out = Command::new(bin)
            .args(args)
            .arg("--config")
            .arg(&cfg_arg)
            .output()
            .unwrap();
        if !out.status.success() {
            return outcome(
                false,
                format!(
                    "`tlcm {}` failed: {}",
                    args[0],
                    String::from_utf8_lossy(&out.stderr).trim()
                ),
            );
        }
    }
    let a = std::fs::read(&lib_csv).unwrap();
    let b = std::fs::read(d.join("cli.csv")).unwrap();
    let secs = started.elapsed().as_secs_f64();
    outcome(
        a == b && !a.is_empty(),
        format!(
            "second full run (teacher, mlcd, ilcd, enhance, eval) through the CLI: {} rows, CSVs {} ({} bytes) in {secs:.0} s",
            reports.len(),
            if a == b { "byte-identical" } else { "differ" },
            a.len()
        ),
    )
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |id, name, o: Outcome| {
        println!(
            "{} criterion {id:>2} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((id, name, o));
    };
    report(1, "boundary identity", criterion_1());
    report(2, "gradient suite", criterion_2());
    report(3, "solver exactness ladder", criterion_3());
    report(4, "multistep sampling step count", criterion_4());
    let sh = shared_runs();
    let sc = Scorer { cfg: sh.cfg.clone() };
    report(5, "distillation efficacy", criterion_5(&sh, &sc));
    report(6, "multistep state ablation", criterion_6(&sh, &sc));
    report(7, "stage-2 benefit", criterion_7(&sh, &sc));
    report(8, "teacher sub-steps", criterion_8(&sh, &sc));
    report(9, "reward stage", criterion_9(&sh, &sc));
    report(10, "determinism", criterion_10(&sh));
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
