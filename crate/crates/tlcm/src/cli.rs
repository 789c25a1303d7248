//! Subcommands of the `tlcm` binary.

use std::{
    path::{Path, PathBuf},
    time::Instant,
};

use clap::{Args, Parser, Subcommand, ValueEnum};
use tlcm_core::{
    eval::{sweep_inputs, ClassPolicy, Clock, NoClock, Sampler},
    rng::{self, stream},
    MlpModel,
};

use crate::{
    checkpoint::{Checkpoint, StageTag},
    config::RunConfig,
    diagnostics::{gradient_suite, GRAD_TOL},
    error::{AppError, AppResult},
    io::{self, JsonlTrace, Manifest},
    pipeline,
};

/// Two-stage latent consistency distillation on 2-D mixtures.
#[derive(Debug, Parser)]
#[command(name = "tlcm", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML config; defaults to the snapshot inside the input checkpoint.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides one config key, e.g. `--set distill.p=1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DistillStage {
    Mlcd,
    Ilcd,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the conditional noise-prediction teacher.
    TrainTeacher {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one distillation stage.
    Distill {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        stage: DistillStage,
        #[arg(long)]
        teacher: PathBuf,
        /// Student to continue from; the teacher weights when omitted.
        #[arg(long)]
        student: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Data-free enhancement of a distilled student.
    Enhance {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        student: PathBuf,
        #[arg(long)]
        teacher: PathBuf,
        /// Comma-separated subset of `reward,dm,gan`.
        #[arg(long, value_delimiter = ',')]
        stages: Option<Vec<String>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write `n` student samples as CSV.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        student: PathBuf,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        n: usize,
        /// Class for every row; rows cycle through the classes when omitted.
        #[arg(long)]
        class: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Step-count sweep of a student, appended to a CSV report.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        student: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of every loss gradient.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Teacher checkpoint; a freshly initialized network when omitted.
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        batch: usize,
        #[arg(long, default_value_t = 64)]
        probes: usize,
    },
}

struct WallClock(Instant);

impl Clock for WallClock {
    fn now_ms(&mut self) -> u64 {
        self.0.elapsed().as_millis() as u64
    }
}

/// Resolves the config from `--config`, else the checkpoint snapshot, else defaults.
fn config(common: &Common, snapshot: Option<&Checkpoint>) -> AppResult<RunConfig> {
    match (&common.config, snapshot) {
        (Some(p), _) => RunConfig::load(Some(p), &common.set, common.seed),
        (None, Some(ck)) => RunConfig::resolve(Some(&ck.config), &common.set, common.seed),
        (None, None) => RunConfig::resolve(None, &common.set, common.seed),
    }
}

fn finish(cfg: &RunConfig, out: &Path, stage: &str, started: Instant) -> AppResult<()> {
    let hash = cfg.hash();
    io::write_manifest(
        out,
        &Manifest {
            config_hash: &hash,
            seed: cfg.seed,
            stage,
            wall_ms: started.elapsed().as_millis() as u64,
        },
    )?;
    Ok(())
}

fn trace(out: &Path) -> AppResult<JsonlTrace> {
    JsonlTrace::create(io::sidecar(out, ".trace.jsonl"))
}

pub fn run(cli: Cli) -> AppResult<()> {
    let started = Instant::now();
    match cli.command {
        Command::TrainTeacher { common, out } => {
            let cfg = config(&common, None)?;
            let mut sink = trace(&out)?;
            let teacher = pipeline::teacher(&cfg, &mut sink)?;
            sink.finish()?;
            pipeline::teacher_checkpoint(&cfg, &teacher)?.save(&out)?;
            finish(&cfg, &out, StageTag::Teacher.name(), started)
        }
        Command::Distill {
            common,
            stage,
            teacher,
            student,
            out,
        } => {
            let tck = Checkpoint::load(&teacher)?;
            let sck = student.as_deref().map(Checkpoint::load).transpose()?;
            let cfg = config(&common, Some(sck.as_ref().unwrap_or(&tck)))?;
            let teacher = pipeline::load_teacher(&tck, &cfg)?;
            let mut student = match &sck {
                Some(ck) => {
                    ck.require(&[StageTag::Mlcd, StageTag::Ilcd, StageTag::Enhanced], "a student")?;
                    pipeline::load_student(ck, &cfg)?
                }
                None => pipeline::student_from(&cfg, &teacher)?,
            };
            let mut sink = trace(&out)?;
            let tag = match stage {
                DistillStage::Mlcd => {
                    pipeline::mlcd(&cfg, &teacher, &mut student, &mut sink)?;
                    StageTag::Mlcd
                }
                DistillStage::Ilcd => {
                    pipeline::ilcd(&cfg, &teacher, &mut student, &mut sink)?;
                    StageTag::Ilcd
                }
            };
            sink.finish()?;
            pipeline::student_checkpoint(&cfg, tag, &student).save(&out)?;
            finish(&cfg, &out, tag.name(), started)
        }
        Command::Enhance {
            mut common,
            student,
            teacher,
            stages,
            out,
        } => {
            let tck = Checkpoint::load(&teacher)?;
            let sck = Checkpoint::load(&student)?;
            sck.require(&[StageTag::Mlcd, StageTag::Ilcd, StageTag::Enhanced], "a student")?;
            if let Some(stages) = stages {
                let list: Vec<String> = stages.iter().map(|s| format!("{:?}", s.trim())).collect();
                common.set.push(format!("enhance.stages=[{}]", list.join(",")));
            }
            let cfg = config(&common, Some(&sck))?;
            let teacher = pipeline::load_teacher(&tck, &cfg)?;
            let mut student = pipeline::load_student(&sck, &cfg)?;
            let mut sink = trace(&out)?;
            pipeline::enhance(&cfg, &teacher, &mut student, &mut sink)?;
            sink.finish()?;
            pipeline::student_checkpoint(&cfg, StageTag::Enhanced, &student).save(&out)?;
            finish(&cfg, &out, StageTag::Enhanced.name(), started)
        }
        Command::Sample {
            common,
            student,
            steps,
            n,
            class,
            out,
        } => {
            let ck = Checkpoint::load(&student)?;
            let cfg = config(&common, Some(&ck))?;
            let student = pipeline::load_student(&ck, &cfg)?;
            if steps == 0 || n == 0 {
                return Err(AppError::Config("steps and n must be positive".into()));
            }
            let policy = match class {
                Some(k) if k >= cfg.data.k => {
                    return Err(AppError::Config(format!(
                        "class {k} out of range for {} classes",
                        cfg.data.k
                    )))
                }
                Some(k) => ClassPolicy::Fixed(k),
                None => ClassPolicy::Balanced,
            };
            let (eps, labels) = sweep_inputs(n, student.net.spec().data_dim, cfg.data.k, policy, cfg.seed);
            let mut r = rng::stream_rng(cfg.seed, stream::EVAL, rng::sub_counter(3, steps as u64));
            let x = student.sample(&eps, &labels, steps, &mut r)?;
            io::write_samples(&out, &x, &labels)?;
            finish(&cfg, &out, "sample", started)
        }
        Command::Eval { common, student, out } => {
            let ck = Checkpoint::load(&student)?;
            let cfg = config(&common, Some(&ck))?;
            let student = pipeline::load_student(&ck, &cfg)?;
            let reports = if cfg.eval.timing {
                pipeline::evaluate(&cfg, &student, &mut WallClock(Instant::now()))?
            } else {
                pipeline::evaluate(&cfg, &student, &mut NoClock)?
            };
            io::append_reports(&out, &reports)?;
            finish(&cfg, &out, "eval", started)
        }
        Command::Gradcheck {
            common,
            teacher,
            batch,
            probes,
        } => {
            let tck = teacher.as_deref().map(Checkpoint::load).transpose()?;
            let cfg = config(&common, tck.as_ref())?;
            let net = match &tck {
                Some(ck) => pipeline::load_teacher(ck, &cfg)?,
                None => MlpModel::init(cfg.model_spec(), cfg.seed)?,
            };
            let suite = gradient_suite(&cfg, &net, batch, probes)?;
            let mut worst: f64 = 0.0;
            for e in &suite {
                println!(
                    "gradcheck loss={} params={} max_rel_err={:.3e} worst_index={}",
                    e.name, e.params, e.report.max_rel_err, e.report.param_index_worst
                );
                worst = worst.max(e.report.max_rel_err);
            }
            println!("max_rel_err={worst:.3e}");
            if worst < GRAD_TOL {
                Ok(())
            } else {
                Err(AppError::Check(format!("max_rel_err {worst:.3e} exceeds {GRAD_TOL:e}")))
            }
        }
    }
}
