//! Small differentiable core: a layer stack with hand-written reverse-mode
//! gradients, the two training losses, and Adam.
//!
//! Values flowing between layers are either a sequence (`steps x dim`) or a
//! single vector. Recurrent and pooling layers consume sequences; dense
//! layers apply row-wise to either.

mod layers;
pub mod loss;
pub mod optim;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub use loss::{ranking_loss, ranking_loss_grad, triplet_margin_loss, triplet_margin_loss_grad};
pub use optim::{Adam, AdamConfig};

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::ShapeMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Mat {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => libm::tanh(x),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
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
            Activation::Identity => 1.0,
        }
    }
}

/// Layer kind and sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Gated recurrent cell over a sequence; emits the hidden state at every step.
    Recurrent { input: usize, hidden: usize },
    /// Affine map plus activation, row-wise on sequences.
    Dense {
        input: usize,
        output: usize,
        activation: Activation,
    },
    /// Single-head attention pooling with a learned CLS query.
    SelfAttentionCls { dim: usize },
    /// Concatenate a fixed number of steps into one vector.
    Flatten { steps: usize, dim: usize },
}

impl LayerSpec {
    fn param_shapes(&self) -> Vec<(Vec<usize>, usize)> {
        // (shape, fan_in)
        match *self {
            LayerSpec::Recurrent { input, hidden } => vec![
                (vec![3 * hidden, input], input),
                (vec![3 * hidden, hidden], hidden),
                (vec![3 * hidden], hidden),
            ],
            LayerSpec::Dense { input, output, .. } => {
                vec![(vec![output, input], input), (vec![output], input)]
            }
            LayerSpec::SelfAttentionCls { dim } => vec![
                (vec![dim], dim),
                (vec![dim, dim], dim),
                (vec![dim, dim], dim),
            ],
            LayerSpec::Flatten { .. } => Vec::new(),
        }
    }
}

/// Shape of a value entering or leaving a layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Port {
    Sequence(usize),
    Vector(usize),
}

impl Port {
    pub fn dim(self) -> usize {
        match self {
            Port::Sequence(d) | Port::Vector(d) => d,
        }
    }
}

fn propagate(port: Port, spec: &LayerSpec) -> Result<Port> {
    let bad = |expected: usize| Error::ShapeMismatch {
        expected,
        got: port.dim(),
    };
    match (*spec, port) {
        (LayerSpec::Recurrent { input, hidden }, Port::Sequence(d)) if d == input => {
            Ok(Port::Sequence(hidden))
        }
        (LayerSpec::Dense { input, output, .. }, Port::Sequence(d)) if d == input => {
            Ok(Port::Sequence(output))
        }
        (LayerSpec::Dense { input, output, .. }, Port::Vector(d)) if d == input => {
            Ok(Port::Vector(output))
        }
        (LayerSpec::SelfAttentionCls { dim }, Port::Sequence(d)) if d == dim => Ok(Port::Vector(dim)),
        (LayerSpec::Flatten { steps, dim }, Port::Sequence(d)) if d == dim => {
            Ok(Port::Vector(steps * dim))
        }
        (LayerSpec::Recurrent { input, .. }, _) => Err(bad(input)),
        (LayerSpec::Dense { input, .. }, _) => Err(bad(input)),
        (LayerSpec::SelfAttentionCls { dim }, _) => Err(bad(dim)),
        (LayerSpec::Flatten { dim, .. }, _) => Err(bad(dim)),
    }
}

/// Parameter array with its accumulated gradient. Equality and
/// serialization cover shape and values only.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(from = "ParamRepr", into = "ParamRepr")]
pub struct ParamTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamRepr {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl PartialEq for ParamTensor {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.values == other.values
    }
}

impl From<ParamRepr> for ParamTensor {
    fn from(r: ParamRepr) -> Self {
        let n = r.values.len();
        ParamTensor {
            shape: r.shape,
            values: r.values,
            grad: vec![0.0; n],
        }
    }
}

impl From<ParamTensor> for ParamRepr {
    fn from(p: ParamTensor) -> Self {
        ParamRepr {
            shape: p.shape,
            values: p.values,
        }
    }
}

impl ParamTensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(Error::ShapeMismatch {
                expected: n,
                got: values.len(),
            });
        }
        Ok(ParamTensor {
            shape,
            grad: vec![0.0; n],
            values,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check(&self) -> Result<()> {
        let n: usize = self.shape.iter().product();
        if n != self.values.len() {
            return Err(Error::ShapeMismatch {
                expected: n,
                got: self.values.len(),
            });
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite parameter".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub spec: LayerSpec,
    pub params: Vec<ParamTensor>,
}

/// A stack of layers with a declared input port.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    input: Port,
    layers: Vec<Layer>,
}

/// Network input or output.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Sequence(Mat),
    Vector(Vec<f64>),
}

impl Value {
    fn port(&self) -> Port {
        match self {
            Value::Sequence(m) => Port::Sequence(m.cols()),
            Value::Vector(v) => Port::Vector(v.len()),
        }
    }

    pub fn into_vector(self) -> Option<Vec<f64>> {
        match self {
            Value::Vector(v) => Some(v),
            Value::Sequence(_) => None,
        }
    }
}

/// Forward caches needed by [`Network::backward`].
pub struct Tape {
    caches: Vec<layers::Cache>,
}

impl Network {
    /// Build with uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
    pub fn new(input: Port, specs: Vec<LayerSpec>, rng: &mut Rng) -> Result<Self> {
        let layers = specs
            .into_iter()
            .map(|spec| {
                let params = spec
                    .param_shapes()
                    .into_iter()
                    .map(|(shape, fan_in)| {
                        let bound = 1.0 / libm::sqrt(fan_in.max(1) as f64);
                        let n: usize = shape.iter().product();
                        let values = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
                        ParamTensor::new(shape, values)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Layer { spec, params })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(input, layers)
    }

    /// Assemble from stored layers, checking shapes and adjacency.
    pub fn from_layers(input: Port, layers: Vec<Layer>) -> Result<Self> {
        let mut port = input;
        for layer in &layers {
            port = propagate(port, &layer.spec)?;
            let shapes = layer.spec.param_shapes();
            if shapes.len() != layer.params.len() {
                return Err(Error::ShapeMismatch {
                    expected: shapes.len(),
                    got: layer.params.len(),
                });
            }
            for ((shape, _), p) in shapes.iter().zip(&layer.params) {
                p.check()?;
                if shape != &p.shape {
                    return Err(Error::ShapeMismatch {
                        expected: shape.iter().product(),
                        got: p.values.len(),
                    });
                }
            }
        }
        Ok(Network { input, layers })
    }

    /// Re-run shape validation, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        Self::from_layers(self.input, self.layers.clone()).map(|_| ())
    }

    pub fn input(&self) -> Port {
        self.input
    }

    pub fn output(&self) -> Port {
        self.layers
            .iter()
            .try_fold(self.input, |p, l| propagate(p, &l.spec))
            .expect("validated at construction")
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn params(&self) -> impl Iterator<Item = &ParamTensor> {
        self.layers.iter().flat_map(|l| l.params.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor> {
        self.layers.iter_mut().flat_map(|l| l.params.iter_mut())
    }

    pub fn param_count(&self) -> usize {
        self.params().map(ParamTensor::len).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn scale_grad(&mut self, factor: f64) {
        for p in self.params_mut() {
            p.grad.iter_mut().for_each(|g| *g *= factor);
        }
    }

    fn check_input(&self, input: &Value) -> Result<()> {
        let ok = match (self.input, input) {
            (Port::Sequence(d), Value::Sequence(m)) => d == m.cols() && m.rows() > 0,
            (Port::Vector(d), Value::Vector(v)) => d == v.len(),
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: self.input.dim(),
                got: input.port().dim(),
            })
        }
    }

    /// Forward pass keeping the caches for a later backward pass.
    pub fn forward_train(&self, input: Value) -> Result<(Value, Tape)> {
        self.check_input(&input)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input;
        for layer in &self.layers {
            let (y, cache) = layers::forward(layer, x)?;
            caches.push(cache);
            x = y;
        }
        Ok((x, Tape { caches }))
    }

    pub fn forward(&self, input: Value) -> Result<Value> {
        self.forward_train(input).map(|(y, _)| y)
    }

    /// Sequence in, vector out.
    pub fn forward_seq(&self, input: &Mat) -> Result<Vec<f64>> {
        self.forward(Value::Sequence(input.clone()))?
            .into_vector()
            .ok_or_else(|| Error::Config(format!("network output is not a vector")))
    }

    pub fn forward_vec(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward(Value::Vector(input.to_vec()))?
            .into_vector()
            .ok_or_else(|| Error::Config(format!("network output is not a vector")))
    }

    /// Accumulate parameter gradients for `d_output` into each
    /// [`ParamTensor`]'s grad and return the gradient w.r.t. the input.
    pub fn backward(&mut self, tape: Tape, d_output: Value) -> Value {
        let mut g = d_output;
        for (layer, cache) in self.layers.iter_mut().zip(tape.caches).rev() {
            g = layers::backward(layer, cache, g);
        }
        g
    }
}

#[cfg(test)]
mod tests;
