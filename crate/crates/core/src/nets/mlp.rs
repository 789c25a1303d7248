use alloc::{format, vec, vec::Vec};

use super::{condition_embedding, time_embedding, NoiseModel};
use crate::{
    rng::{self, stream},
    tensor::{gemm_ab, gemm_abt, gemm_atb},
    ConditionLabel, Error, Matrix, Result,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => libm::tanh(x),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Architecture of an MLP whose input is `[z | time features | condition one-hot]`.
///
/// `time_dim == 0` or `classes == 0` switches the corresponding embedding off.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub data_dim: usize,
    pub time_dim: usize,
    pub classes: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    /// One tag per hidden layer.
    pub activations: Vec<Activation>,
    /// Divisor applied to `t` before the sinusoidal features.
    pub t_scale: f64,
}

impl MlpSpec {
    /// Noise predictor: output has the data dimension.
    pub fn denoiser(data_dim: usize, time_dim: usize, classes: usize, hidden: &[usize], t_scale: f64) -> Self {
        Self {
            data_dim,
            time_dim,
            classes,
            hidden: hidden.to_vec(),
            output_dim: data_dim,
            activations: vec![Activation::Tanh; hidden.len()],
            t_scale,
        }
    }

    /// Plain MLP on points with no embeddings.
    pub fn plain(input: usize, hidden: &[usize], output: usize, act: Activation) -> Self {
        Self {
            data_dim: input,
            time_dim: 0,
            classes: 0,
            hidden: hidden.to_vec(),
            output_dim: output,
            activations: vec![act; hidden.len()],
            t_scale: 1.0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.data_dim + self.time_dim + self.classes
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(self.input_dim());
        sizes.extend_from_slice(&self.hidden);
        sizes.push(self.output_dim);
        sizes
    }

    /// `sum (in_i + 1) * out_i` over layers.
    pub fn param_count(&self) -> usize {
        self.layer_sizes().windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.activations.len() != self.hidden.len() {
            return Err(Error::Config(format!(
                "{} activation tags for {} hidden layers",
                self.activations.len(),
                self.hidden.len()
            )));
        }
        if !self.time_dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "time embedding dimension {} must be even",
                self.time_dim
            )));
        }
        if self.layer_sizes().contains(&0) {
            return Err(Error::Config(format!("zero-width layer in {:?}", self.layer_sizes())));
        }
        if !(self.t_scale > 0.0) {
            return Err(Error::Config("t_scale must be positive".to_string()));
        }
        Ok(())
    }
}

/// Activations recorded by a forward pass, consumed by [`MlpModel::backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    param_count: usize,
    /// Input followed by each layer's (post-activation) output.
    layers: Vec<Matrix>,
}

impl Tape {
    pub fn output(&self) -> &Matrix {
        self.layers.last().expect("tape has at least input and output")
    }

    pub fn batch(&self) -> usize {
        self.layers[0].rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    /// Gradient with respect to the full network input.
    pub input: Matrix,
    data_dim: usize,
}

impl Gradients {
    /// Gradient with respect to the point `z` (the leading input columns).
    pub fn z(&self) -> Matrix {
        self.input.columns(0, self.data_dim)
    }
}

/// Dense MLP with a flat parameter vector; per layer `W (out x in)` row-major
/// followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    spec: MlpSpec,
    params: Vec<f64>,
}

impl MlpModel {
    /// Glorot-uniform weights and zero biases from the counter-based RNG.
    pub fn init(spec: MlpSpec, seed: u64) -> Result<Self> {
        Self::init_on_stream(spec, seed, stream::INIT)
    }

    /// [`Self::init`] drawing from another RNG stream.
    pub fn init_on_stream(spec: MlpSpec, seed: u64, stream_id: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng::stream_rng(seed, stream_id, 0);
        let mut params = Vec::with_capacity(spec.param_count());
        for w in spec.layer_sizes().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            for _ in 0..fan_in * fan_out {
                params.push(rng::uniform(&mut rng, -bound, bound));
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self { spec, params })
    }

    pub fn from_params(spec: MlpSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.param_count() {
            return Err(Error::shape("MlpModel::from_params", spec.param_count(), params.len()));
        }
        Ok(Self { spec, params })
    }

    /// Same architecture, different parameters.
    pub fn with_params(&self, params: Vec<f64>) -> Result<Self> {
        Self::from_params(self.spec.clone(), params)
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Weight matrix and bias of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let sizes = self.spec.layer_sizes();
        let mut off = 0;
        for (i, w) in sizes.windows(2).enumerate() {
            let nw = w[0] * w[1];
            if i == l {
                return (&self.params[off..off + nw], &self.params[off + nw..off + nw + w[1]]);
            }
            off += nw + w[1];
        }
        panic!("layer {l} out of range");
    }

    /// Builds `[z | time | condition]`.
    pub fn assemble_input(&self, z: &Matrix, t: &[f64], labels: &[ConditionLabel]) -> Result<Matrix> {
        let n = z.rows();
        if z.cols() != self.spec.data_dim {
            return Err(Error::shape("mlp input width", self.spec.data_dim, z.cols()));
        }
        if (self.spec.time_dim > 0 && t.len() != n) || (self.spec.classes > 0 && labels.len() != n) {
            return Err(Error::shape(
                "mlp timesteps/labels",
                n,
                format!("{}/{}", t.len(), labels.len()),
            ));
        }
        if self.spec.time_dim == 0 && self.spec.classes == 0 {
            return Ok(z.clone());
        }
        let te = time_embedding(t, self.spec.t_scale, self.spec.time_dim);
        let ce = condition_embedding(labels, self.spec.classes)?;
        Ok(Matrix::hcat(&[z, &te, &ce]))
    }

    pub fn forward(&self, z: &Matrix, t: &[f64], labels: &[ConditionLabel]) -> Result<Matrix> {
        let input = self.assemble_input(z, t, labels)?;
        Ok(self.run(input, false).0)
    }

    /// Forward pass that keeps the activations needed by [`Self::backward`].
    pub fn forward_tape(&self, z: &Matrix, t: &[f64], labels: &[ConditionLabel]) -> Result<(Matrix, Tape)> {
        let input = self.assemble_input(z, t, labels)?;
        let (out, tape) = self.run(input, true);
        Ok((out, tape.expect("tape requested")))
    }

    /// Forward on an already-assembled input matrix.
    pub fn forward_raw(&self, input: Matrix) -> Result<(Matrix, Tape)> {
        if input.cols() != self.spec.input_dim() {
            return Err(Error::shape("mlp raw input width", self.spec.input_dim(), input.cols()));
        }
        let (out, tape) = self.run(input, true);
        Ok((out, tape.expect("tape requested")))
    }

    fn run(&self, input: Matrix, keep: bool) -> (Matrix, Option<Tape>) {
        let sizes = self.spec.layer_sizes();
        let n = input.rows();
        let layer_count = sizes.len() - 1;
        let mut layers = Vec::with_capacity(if keep { sizes.len() } else { 0 });
        let mut x = input;
        let mut off = 0;
        for l in 0..layer_count {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let nw = fan_in * fan_out;
            let weights = &self.params[off..off + nw];
            let bias = &self.params[off + nw..off + nw + fan_out];
            off += nw + fan_out;

            let mut y = Matrix::zeros(n, fan_out);
            for r in 0..n {
                y.row_mut(r).copy_from_slice(bias);
            }
            gemm_abt(x.as_slice(), weights, y.as_mut_slice(), n, fan_in, fan_out, true);
            if l + 1 < layer_count {
                let act = self.spec.activations[l];
                y.as_mut_slice().iter_mut().for_each(|v| *v = act.apply(*v));
            }
            let prev = core::mem::replace(&mut x, y);
            if keep {
                layers.push(prev);
            }
        }
        if keep {
            layers.push(x.clone());
            let tape = Tape {
                param_count: self.params.len(),
                layers,
            };
            (x, Some(tape))
        } else {
            (x, None)
        }
    }

    /// Exact gradients of `sum(upstream * output)` with respect to the
    /// parameters and the network input.
    pub fn backward(&self, tape: &Tape, upstream: &Matrix) -> Result<Gradients> {
        let sizes = self.spec.layer_sizes();
        if tape.param_count != self.params.len() || tape.layers.len() != sizes.len() {
            return Err(Error::CallOrder(format!(
                "tape recorded for {} params / {} layers, model has {} / {}",
                tape.param_count,
                tape.layers.len(),
                self.params.len(),
                sizes.len()
            )));
        }
        let n = tape.batch();
        if upstream.rows() != n || upstream.cols() != self.spec.output_dim {
            return Err(Error::shape(
                "mlp backward upstream",
                format!("{}x{}", n, self.spec.output_dim),
                format!("{}x{}", upstream.rows(), upstream.cols()),
            ));
        }
        let layer_count = sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layer_count);
        let mut off = 0;
        for w in sizes.windows(2) {
            offsets.push(off);
            off += (w[0] + 1) * w[1];
        }

        let mut grads = vec![0.0; self.params.len()];
        let mut delta = upstream.clone();
        for l in (0..layer_count).rev() {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            if l + 1 < layer_count {
                let act = self.spec.activations[l];
                let out = &tape.layers[l + 1];
                for (d, &y) in delta.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    *d *= act.derivative_from_output(y);
                }
            }
            let o = offsets[l];
            let nw = fan_in * fan_out;
            let x = &tape.layers[l];
            gemm_atb(
                delta.as_slice(),
                x.as_slice(),
                &mut grads[o..o + nw],
                fan_out,
                n,
                fan_in,
                false,
            );
            let gb = &mut grads[o + nw..o + nw + fan_out];
            for r in 0..n {
                for (g, d) in gb.iter_mut().zip(delta.row(r)) {
                    *g += d;
                }
            }
            let weights = &self.params[o..o + nw];
            let mut next = Matrix::zeros(n, fan_in);
            gemm_ab(delta.as_slice(), weights, next.as_mut_slice(), n, fan_out, fan_in);
            delta = next;
        }
        Ok(Gradients {
            params: grads,
            input: delta,
            data_dim: self.spec.data_dim,
        })
    }
}

impl NoiseModel for MlpModel {
    fn data_dim(&self) -> usize {
        self.spec.data_dim
    }

    fn predict(&self, z: &Matrix, t: &[f64], labels: &[ConditionLabel]) -> Result<Matrix> {
        self.forward(z, t, labels)
    }
}
