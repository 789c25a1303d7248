//! Run configuration: a TOML tree where every key has a default.
//!
//! Resolution order is defaults, then the file, then `--set key=value`
//! overrides, then `--seed`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tlcm_core::{
    distill::{DistanceKind, DistillConfig, Parameterization, StateInit},
    enhance::{EnhanceConfig, Stage},
    teacher::{MixtureDataset, TeacherConfig},
    MlpSpec, Schedule, SegmentPlan,
};

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct RunConfig {
    pub seed: u64,
    pub schedule: ScheduleSection,
    pub data: DataSection,
    pub model: ModelSection,
    pub teacher: TeacherSection,
    pub distill: DistillSection,
    pub enhance: EnhanceSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(rename = "T")]
    pub t: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            t: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    #[serde(rename = "K")]
    pub k: usize,
    pub sigma_c: f64,
    pub radius: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            k: 4,
            sigma_c: 0.3,
            radius: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub time_dim: usize,
    pub sigma_data: f64,
    /// `"blend"` or `"raw_epsilon"`.
    pub parameterization: String,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128, 128],
            time_dim: 16,
            sigma_data: 0.5,
            parameterization: "blend".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherSection {
    pub iters: usize,
    pub batch: usize,
    pub lr: f64,
    pub dropout: f64,
    pub cosine_decay: bool,
}

impl Default for TeacherSection {
    fn default() -> Self {
        Self {
            iters: 20_000,
            batch: 256,
            lr: 1e-3,
            dropout: 0.1,
            cosine_decay: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillSection {
    #[serde(rename = "M")]
    pub m: usize,
    pub skip: usize,
    pub w: f64,
    pub p: usize,
    pub q: usize,
    pub iters_mlcd: usize,
    pub iters_ilcd: usize,
    pub batch: usize,
    pub lr: f64,
    pub lr_ilcd: f64,
    /// `"mse"` or `"feature"`.
    pub distance: String,
    /// Stage-1 states from multistep teacher denoising; `false` uses one jump.
    pub mds: bool,
}

impl Default for DistillSection {
    fn default() -> Self {
        Self {
            m: 8,
            skip: 20,
            w: 8.0,
            p: 3,
            q: 4,
            iters_mlcd: 1500,
            iters_ilcd: 1000,
            batch: 64,
            lr: 1e-4,
            lr_ilcd: 1e-5,
            distance: "mse".into(),
            mds: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnhanceSection {
    pub stages: Vec<String>,
    pub s0: f64,
    pub iters: usize,
    pub batch: usize,
    pub lr: f64,
    pub d_lr: f64,
    pub reward_iters: usize,
    pub reward_batch: usize,
    pub reward_scale: f64,
    pub reward_radius: f64,
    pub disc_hidden: Vec<usize>,
}

impl Default for EnhanceSection {
    fn default() -> Self {
        Self {
            stages: vec!["reward".into(), "dm".into(), "gan".into()],
            s0: 16.0,
            iters: 1000,
            batch: 4,
            lr: 1e-5,
            d_lr: 1e-4,
            reward_iters: 500,
            reward_batch: 8,
            reward_scale: 100.0,
            reward_radius: 2.0,
            disc_hidden: vec![64, 64],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub steps: Vec<usize>,
    pub n: usize,
    pub projections: usize,
    /// Rows per side for the quadratic-cost energy distance.
    pub energy_rows: usize,
    /// Record wall-clock time; off makes report files byte-reproducible.
    pub timing: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            steps: vec![2, 3, 4, 5, 6, 8],
            n: 8192,
            projections: 128,
            energy_rows: 2048,
            timing: false,
        }
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses the right-hand side of `--set`; anything that is not a TOML value
/// is taken as a bare string.
fn parse_scalar(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(root: &mut toml::Value, key: &str, value: toml::Value) -> AppResult<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| AppError::Config(format!("empty key in {key:?}")))?;
    let mut node = root;
    for p in parts {
        node = node
            .as_table_mut()
            .and_then(|t| t.get_mut(p))
            .ok_or_else(|| AppError::Config(format!("unknown config section {p:?} in {key:?}")))?;
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| AppError::Config(format!("{key:?} is not inside a table")))?;
    if !table.contains_key(last) {
        return Err(AppError::Config(format!("unknown config key {key:?}")));
    }
    table.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Defaults, overlaid by `text`, then by `key=value` overrides and the seed.
    pub fn resolve(text: Option<&str>, overrides: &[String], seed: Option<u64>) -> AppResult<Self> {
        let mut tree = toml::Value::try_from(RunConfig::default()).map_err(|e| AppError::Config(e.to_string()))?;
        if let Some(text) = text {
            let file: toml::Table = toml::from_str(text).map_err(|e| AppError::Config(format!("config parse: {e}")))?;
            merge(&mut tree, toml::Value::Table(file));
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| AppError::Config(format!("override {o:?} is not key=value")))?;
            set_path(&mut tree, k.trim(), parse_scalar(v.trim()))?;
        }
        let mut cfg: RunConfig = tree
            .try_into()
            .map_err(|e: toml::de::Error| AppError::Config(e.to_string()))?;
        if let Some(seed) = seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> AppResult<Self> {
        let text = path
            .map(|p| std::fs::read_to_string(p).map_err(|e| AppError::io(p, e)))
            .transpose()?;
        Self::resolve(text.as_deref(), overrides, seed)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> AppResult<()> {
        self.schedule()?;
        self.dataset()?;
        self.plan()?;
        self.teacher_config().validate()?;
        self.distill_config(false)?.validate()?;
        self.enhance_config()?.validate()?;
        self.parameterization()?;
        self.model_spec().validate()?;
        if self.eval.steps.contains(&0) || self.eval.n == 0 || self.eval.projections == 0 {
            return Err(AppError::Config(
                "eval steps, n and projections must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn schedule(&self) -> AppResult<Schedule> {
        Ok(Schedule::linear(
            self.schedule.t,
            self.schedule.beta_start,
            self.schedule.beta_end,
        )?)
    }

    pub fn dataset(&self) -> AppResult<MixtureDataset> {
        Ok(MixtureDataset::circle(
            self.data.k,
            self.data.radius,
            self.data.sigma_c,
        )?)
    }

    pub fn plan(&self) -> AppResult<SegmentPlan> {
        Ok(SegmentPlan::uniform(self.distill.m, self.schedule.t)?.with_skip(self.distill.skip)?)
    }

    pub fn model_spec(&self) -> MlpSpec {
        MlpSpec::denoiser(
            2,
            self.model.time_dim,
            self.data.k,
            &self.model.hidden,
            self.schedule.t as f64,
        )
    }

    pub fn parameterization(&self) -> AppResult<Parameterization> {
        match self.model.parameterization.as_str() {
            "blend" => Ok(Parameterization::Blend),
            "raw_epsilon" => Ok(Parameterization::RawEpsilon),
            other => Err(AppError::Config(format!("unknown parameterization {other:?}"))),
        }
    }

    pub fn teacher_config(&self) -> TeacherConfig {
        TeacherConfig {
            iterations: self.teacher.iters,
            batch: self.teacher.batch,
            lr: self.teacher.lr,
            dropout: self.teacher.dropout,
            cosine_decay: self.teacher.cosine_decay,
            seed: self.seed,
        }
    }

    /// Stage-1 settings, or stage-2 ones when `ilcd`.
    pub fn distill_config(&self, ilcd: bool) -> AppResult<DistillConfig> {
        let d = &self.distill;
        let mut cfg = DistillConfig::new(self.plan()?, self.data.k);
        cfg.w = d.w;
        cfg.p = d.p;
        cfg.q = d.q;
        cfg.batch = d.batch;
        cfg.iterations = if ilcd { d.iters_ilcd } else { d.iters_mlcd };
        cfg.lr = if ilcd { d.lr_ilcd } else { d.lr };
        cfg.init = if d.mds {
            StateInit::Multistep
        } else {
            StateInit::SingleStep
        };
        cfg.distance = match d.distance.as_str() {
            "mse" => DistanceKind::Mse,
            "feature" => DistanceKind::Feature,
            other => return Err(AppError::Config(format!("unknown distance {other:?}"))),
        };
        Ok(cfg)
    }

    pub fn stages(&self) -> AppResult<Vec<Stage>> {
        Ok(self
            .enhance
            .stages
            .iter()
            .map(|s| Stage::parse(s))
            .collect::<Result<_, _>>()?)
    }

    pub fn enhance_config(&self) -> AppResult<EnhanceConfig> {
        let e = &self.enhance;
        let mut cfg = EnhanceConfig::new(self.plan()?, self.data.k);
        cfg.stages = self.stages()?;
        cfg.s0 = e.s0;
        cfg.iters = e.iters;
        cfg.batch = e.batch;
        cfg.lr = e.lr;
        cfg.d_lr = e.d_lr;
        cfg.reward_iters = e.reward_iters;
        cfg.reward_batch = e.reward_batch;
        cfg.w = self.distill.w;
        cfg.q = self.distill.q;
        cfg.disc_hidden = e.disc_hidden.clone();
        Ok(cfg)
    }
}

/// Every leaf key of the default configuration as a dotted path.
pub fn leaf_keys() -> Vec<String> {
    fn walk(prefix: &str, v: &toml::Value, out: &mut Vec<String>) {
        match v {
            toml::Value::Table(t) => {
                for (k, v) in t {
                    let key = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(&key, v, out);
                }
            }
            _ => out.push(prefix.to_string()),
        }
    }
    let mut out = Vec::new();
    walk(
        "",
        &toml::Value::try_from(RunConfig::default()).expect("defaults serialize"),
        &mut out,
    );
    out
}
