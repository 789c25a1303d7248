//! Binary checkpoint format.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "TLCM"  u32 version  u8 stage
//! u64 T  f64 beta_start  f64 beta_end  u64 n  f64[n] alpha_bar
//! u64 len  config TOML bytes
//! u64 count  { u64 len  name bytes  u64 ndim  u64[ndim] shape  f64[prod] values }*
//! ```

use std::path::Path;

use tlcm_core::{MlpModel, MlpSpec, Schedule};

use crate::error::{AppError, AppResult};

pub const MAGIC: &[u8; 4] = b"TLCM";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint version {found}, this build reads version {expected}")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes after checkpoint")]
    Trailing(usize),
    #[error("unknown stage tag {0}")]
    StageTag(u8),
    #[error("missing array {0:?}")]
    Missing(String),
    #[error("array {name:?} has shape {found:?}, expected {expected:?}")]
    Shape {
        name: String,
        found: Vec<u64>,
        expected: Vec<u64>,
    },
    #[error("checkpoint schedule differs from the configured schedule")]
    Schedule,
    #[error("stage {found} checkpoint where {expected} was required")]
    WrongStage {
        found: &'static str,
        expected: &'static str,
    },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageTag {
    Teacher,
    Mlcd,
    Ilcd,
    Enhanced,
}

impl StageTag {
    pub const ALL: [StageTag; 4] = [StageTag::Teacher, StageTag::Mlcd, StageTag::Ilcd, StageTag::Enhanced];

    pub fn name(self) -> &'static str {
        match self {
            StageTag::Teacher => "teacher",
            StageTag::Mlcd => "mlcd",
            StageTag::Ilcd => "ilcd",
            StageTag::Enhanced => "enhanced",
        }
    }

    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(c: u8) -> Result<Self, CheckpointError> {
        Self::ALL.get(c as usize).copied().ok_or(CheckpointError::StageTag(c))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleBlock {
    pub steps: u64,
    pub beta_start: f64,
    pub beta_end: f64,
    pub alpha_bar: Vec<f64>,
}

impl ScheduleBlock {
    pub fn of(s: &Schedule) -> Self {
        Self {
            steps: s.steps() as u64,
            beta_start: s.beta_start(),
            beta_end: s.beta_end(),
            alpha_bar: s.alpha_bar_table().to_vec(),
        }
    }

    /// Errors unless `s` reproduces this block bit for bit.
    pub fn check(&self, s: &Schedule) -> Result<(), CheckpointError> {
        let other = Self::of(s);
        let same = self.steps == other.steps
            && self.beta_start.to_bits() == other.beta_start.to_bits()
            && self.beta_end.to_bits() == other.beta_end.to_bits()
            && self.alpha_bar.len() == other.alpha_bar.len()
            && self
                .alpha_bar
                .iter()
                .zip(&other.alpha_bar)
                .all(|(a, b)| a.to_bits() == b.to_bits());
        if same {
            Ok(())
        } else {
            Err(CheckpointError::Schedule)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<u64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub stage: StageTag,
    pub schedule: ScheduleBlock,
    pub config: String,
    pub arrays: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn new(stage: StageTag, schedule: &Schedule, config: String) -> Self {
        Self {
            stage,
            schedule: ScheduleBlock::of(schedule),
            config,
            arrays: Vec::new(),
        }
    }

    /// Stores each layer of `model` as `<prefix>.<l>.weight` (out x in) and
    /// `<prefix>.<l>.bias`.
    pub fn push_model(&mut self, prefix: &str, model: &MlpModel) {
        let sizes = model.spec().layer_sizes();
        for (l, w) in sizes.windows(2).enumerate() {
            let (weight, bias) = model.layer(l);
            self.arrays.push(NamedArray {
                name: format!("{prefix}.{l}.weight"),
                shape: vec![w[1] as u64, w[0] as u64],
                values: weight.to_vec(),
            });
            self.arrays.push(NamedArray {
                name: format!("{prefix}.{l}.bias"),
                shape: vec![w[1] as u64],
                values: bias.to_vec(),
            });
        }
    }

    pub fn array(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub fn has_model(&self, prefix: &str) -> bool {
        self.array(&format!("{prefix}.0.weight")).is_some()
    }

    /// Rebuilds the model stored under `prefix`, checking every shape against `spec`.
    pub fn model(&self, prefix: &str, spec: &MlpSpec) -> AppResult<MlpModel> {
        let mut params = Vec::with_capacity(spec.param_count());
        for (l, w) in spec.layer_sizes().windows(2).enumerate() {
            for (suffix, shape) in [("weight", vec![w[1] as u64, w[0] as u64]), ("bias", vec![w[1] as u64])] {
                let name = format!("{prefix}.{l}.{suffix}");
                let a = self
                    .array(&name)
                    .ok_or_else(|| CheckpointError::Missing(name.clone()))?;
                if a.shape != shape {
                    return Err(CheckpointError::Shape {
                        name,
                        found: a.shape.clone(),
                        expected: shape,
                    }
                    .into());
                }
                params.extend_from_slice(&a.values);
            }
        }
        if self
            .array(&format!("{prefix}.{}.weight", spec.hidden.len() + 1))
            .is_some()
        {
            return Err(
                CheckpointError::Malformed(format!("{prefix} has more layers than the configured model")).into(),
            );
        }
        Ok(MlpModel::from_params(spec.clone(), params)?)
    }

    pub fn require(&self, allowed: &[StageTag], expected: &'static str) -> Result<(), CheckpointError> {
        if allowed.contains(&self.stage) {
            Ok(())
        } else {
            Err(CheckpointError::WrongStage {
                found: self.stage.name(),
                expected,
            })
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.stage.code());
        let s = &self.schedule;
        put_u64(&mut out, s.steps);
        put_f64s(&mut out, &[s.beta_start, s.beta_end]);
        put_u64(&mut out, s.alpha_bar.len() as u64);
        put_f64s(&mut out, &s.alpha_bar);
        put_bytes(&mut out, self.config.as_bytes());
        put_u64(&mut out, self.arrays.len() as u64);
        for a in &self.arrays {
            put_bytes(&mut out, a.name.as_bytes());
            put_u64(&mut out, a.shape.len() as u64);
            for &d in &a.shape {
                put_u64(&mut out, d);
            }
            put_f64s(&mut out, &a.values);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(CheckpointError::Version {
                found: version,
                expected: VERSION,
            });
        }
        let stage = StageTag::from_code(r.take(1)?[0])?;
        let steps = r.u64()?;
        let beta_start = r.f64()?;
        let beta_end = r.f64()?;
        let n = r.len()?;
        let alpha_bar = r.f64s(n)?;
        let config = String::from_utf8(r.bytes()?.to_vec())
            .map_err(|_| CheckpointError::Malformed("config is not UTF-8".into()))?;
        let count = r.len()?;
        let mut arrays = Vec::new();
        for _ in 0..count {
            let name = String::from_utf8(r.bytes()?.to_vec())
                .map_err(|_| CheckpointError::Malformed("array name is not UTF-8".into()))?;
            let ndim = r.len()?;
            let shape = (0..ndim).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
            let total = shape
                .iter()
                .try_fold(1u64, |acc, &d| acc.checked_mul(d))
                .and_then(|t| usize::try_from(t).ok())
                .ok_or_else(|| CheckpointError::Malformed(format!("array {name:?} shape overflows")))?;
            let values = r.f64s(total)?;
            arrays.push(NamedArray { name, shape, values });
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Trailing(bytes.len() - r.pos));
        }
        Ok(Self {
            stage,
            schedule: ScheduleBlock {
                steps,
                beta_start,
                beta_end,
                alpha_bar,
            },
            config,
            arrays,
        })
    }

    pub fn save(&self, path: &Path) -> AppResult<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| AppError::io(path, e))
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
        Ok(Self::from_bytes(&bytes)?)
    }
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    put_u64(out, b.len() as u64);
    out.extend_from_slice(b);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(CheckpointError::Truncated(self.bytes.len()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn len(&mut self) -> Result<usize, CheckpointError> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| CheckpointError::Malformed(format!("length {v} too large")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, CheckpointError> {
        let raw = self.take(n.checked_mul(8).ok_or(CheckpointError::Truncated(self.bytes.len()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn bytes(&mut self) -> Result<&'a [u8], CheckpointError> {
        let n = self.len()?;
        self.take(n)
    }
}
