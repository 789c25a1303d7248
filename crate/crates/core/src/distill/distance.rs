use crate::{nets::Activation, rng::stream, Error, Matrix, MlpModel, MlpSpec, Result};

/// Output width of the frozen feature projector.
pub const FEATURE_DIM: usize = 32;

/// Frozen random network mapping points to features; distance is MSE in
/// feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDistance {
    projector: MlpModel,
}

impl FeatureDistance {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        let spec = MlpSpec::plain(dim, &[64], FEATURE_DIM, Activation::Tanh);
        Ok(Self {
            projector: MlpModel::init_on_stream(spec, seed, stream::PROJECTOR)?,
        })
    }

    pub fn from_projector(projector: MlpModel) -> Self {
        Self { projector }
    }

    pub fn projector(&self) -> &MlpModel {
        &self.projector
    }
}

/// Distance between a prediction and its (detached) target.
#[derive(Debug, Clone, PartialEq)]
pub enum Distance {
    Mse,
    Feature(FeatureDistance),
}

fn mse_with_grad(a: &Matrix, b: &Matrix) -> (f64, Matrix) {
    let diff = a.sub(b);
    let count = diff.as_slice().len().max(1) as f64;
    let loss = diff.as_slice().iter().map(|d| d * d).sum::<f64>() / count;
    (loss, diff.scale(2.0 / count))
}

impl Distance {
    /// Value and gradient with respect to `a`.
    pub fn eval_grad(&self, a: &Matrix, b: &Matrix) -> Result<(f64, Matrix)> {
        a.check_same_shape(b, "consistency distance")?;
        if a.rows() == 0 {
            return Err(Error::Empty("consistency distance batch"));
        }
        match self {
            Distance::Mse => Ok(mse_with_grad(a, b)),
            Distance::Feature(f) => {
                let (fa, tape) = f.projector.forward_raw(a.clone())?;
                let (fb, _) = f.projector.forward_raw(b.clone())?;
                let (loss, up) = mse_with_grad(&fa, &fb);
                let g = f.projector.backward(&tape, &up)?;
                Ok((loss, g.z()))
            }
        }
    }

    pub fn eval(&self, a: &Matrix, b: &Matrix) -> Result<f64> {
        Ok(self.eval_grad(a, b)?.0)
    }
}

/// `d(a, b)` for the given distance.
pub fn consistency_distance(d: &Distance, a: &Matrix, b: &Matrix) -> Result<f64> {
    d.eval(a, b)
}
