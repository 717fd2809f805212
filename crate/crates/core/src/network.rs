//! The two small networks of the model: `f` maps latents to observations and
//! `g` maps observations to latents.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndmath::{Matrix, Primitive, Tape, Var};

/// Number of past inputs the attention variant attends over, current included.
pub const ATTENTION_CONTEXT: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkKind {
    Mlp,
    Attention,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub kind: NetworkKind,
    /// Number of dense layers after the input (or attention) stage.
    pub layers: usize,
    pub hidden: usize,
    pub activation: Activation,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            kind: NetworkKind::Mlp,
            layers: 2,
            hidden: 10,
            activation: Activation::Tanh,
        }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 || self.hidden < 1 {
            return Err(Error::Config(format!(
                "network needs layers >= 1 and hidden >= 1, got {} and {}",
                self.layers, self.hidden
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `in x out`
    pub weight: Matrix,
    /// `1 x out`
    pub bias: Matrix,
}

impl Dense {
    fn init(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: glorot(fan_in, fan_out, rng),
            bias: Matrix::zeros(1, fan_out),
        }
    }
}

/// Single-head scaled dot-product self-attention over a buffer of recent
/// embedded inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionBlock {
    pub embed: Dense,
    pub query: Matrix,
    pub key: Matrix,
    pub value: Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: NetworkSpec,
    pub input_dim: usize,
    pub output_dim: usize,
    pub attention: Option<AttentionBlock>,
    pub layers: Vec<Dense>,
}

fn glorot(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Matrix::from_raw(fan_in, fan_out, data)
}

impl Network {
    pub fn init(
        spec: NetworkSpec,
        input_dim: usize,
        output_dim: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        spec.validate()?;
        let h = spec.hidden;
        let (attention, first_in) = match spec.kind {
            NetworkKind::Mlp => (None, input_dim),
            NetworkKind::Attention => (
                Some(AttentionBlock {
                    embed: Dense::init(input_dim, h, rng),
                    query: glorot(h, h, rng),
                    key: glorot(h, h, rng),
                    value: glorot(h, h, rng),
                }),
                h,
            ),
        };
        let mut dims = vec![first_in];
        dims.extend(std::iter::repeat_n(h, spec.layers - 1));
        dims.push(output_dim);
        let layers = dims
            .windows(2)
            .map(|w| Dense::init(w[0], w[1], rng))
            .collect();
        Ok(Self {
            spec,
            input_dim,
            output_dim,
            attention,
            layers,
        })
    }

    /// Every weight array in a fixed order.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        if let Some(a) = &self.attention {
            out.extend([&a.embed.weight, &a.embed.bias, &a.query, &a.key, &a.value]);
        }
        for l in &self.layers {
            out.extend([&l.weight, &l.bias]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        if let Some(a) = &mut self.attention {
            out.extend([
                &mut a.embed.weight,
                &mut a.embed.bias,
                &mut a.query,
                &mut a.key,
                &mut a.value,
            ]);
        }
        for l in &mut self.layers {
            out.extend([&mut l.weight, &mut l.bias]);
        }
        out
    }

    pub fn tensor_names(&self, prefix: &str) -> Vec<String> {
        let mut out = Vec::new();
        if self.attention.is_some() {
            for n in ["embed.weight", "embed.bias", "query", "key", "value"] {
                out.push(format!("{prefix}.attention.{n}"));
            }
        }
        for i in 0..self.layers.len() {
            out.push(format!("{prefix}.{i}.weight"));
            out.push(format!("{prefix}.{i}.bias"));
        }
        out
    }

    /// Puts every tensor on the tape.
    pub fn bind(&self, tape: &mut Tape, learnable: bool) -> BoundNetwork {
        let vars = self
            .tensors()
            .into_iter()
            .map(|m| {
                if learnable {
                    tape.param(m.clone())
                } else {
                    tape.constant(m.clone())
                }
            })
            .collect();
        BoundNetwork {
            vars,
            has_attention: self.attention.is_some(),
            activation: self.spec.activation,
            hidden: self.spec.hidden,
        }
    }
}

/// Tape handles for one network's tensors, in [`Network::tensors`] order.
#[derive(Clone, Debug)]
pub struct BoundNetwork {
    pub vars: Vec<Var>,
    has_attention: bool,
    activation: Activation,
    hidden: usize,
}

/// Keys and values of recent inputs, per sequence row, for the attention
/// variant. Unused by the MLP.
#[derive(Clone, Debug, Default)]
pub struct AttentionMemory {
    entries: VecDeque<(Var, Var)>,
}

impl BoundNetwork {
    fn activate(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self.activation {
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }

    fn dense(&self, tape: &mut Tape, x: Var, k: usize) -> Result<Var> {
        let xw = tape.matmul(x, self.vars[k])?;
        tape.add(xw, self.vars[k + 1])
    }

    /// Applies the network to `input` (`n x in`), one row per sequence.
    pub fn forward(&self, tape: &mut Tape, input: Var, memory: &mut AttentionMemory) -> Result<Var> {
        let mut h = input;
        let mut k = 0;
        if self.has_attention {
            let embed = self.dense(tape, input, 0)?;
            let q = tape.matmul(embed, self.vars[2])?;
            let key = tape.matmul(embed, self.vars[3])?;
            let value = tape.matmul(embed, self.vars[4])?;
            memory.entries.push_back((key, value));
            if memory.entries.len() > ATTENTION_CONTEXT {
                memory.entries.pop_front();
            }
            let inv_sqrt = 1.0 / (self.hidden as f64).sqrt();
            let mut scores = Vec::with_capacity(memory.entries.len());
            for &(kj, _) in &memory.entries {
                let prod = tape.mul(q, kj)?;
                let dot = tape.row_sum(prod)?;
                scores.push(tape.scale(dot, inv_sqrt)?);
            }
            let stacked = tape.apply(Primitive::ConcatCols, &scores)?;
            let weights = tape.apply(Primitive::SoftmaxRows, &[stacked])?;
            let mut ctx = None;
            for (j, &(_, vj)) in memory.entries.iter().enumerate() {
                let wj = tape.apply(Primitive::Column(j), &[weights])?;
                let term = tape.mul(wj, vj)?;
                ctx = Some(match ctx {
                    None => term,
                    Some(acc) => tape.add(acc, term)?,
                });
            }
            let mixed = tape.add(embed, ctx.expect("memory holds the current input"))?;
            h = self.activate(tape, mixed)?;
            k = 5;
        }
        let n_dense = (self.vars.len() - k) / 2;
        for layer in 0..n_dense {
            h = self.dense(tape, h, k + 2 * layer)?;
            if layer + 1 < n_dense {
                h = self.activate(tape, h)?;
            }
        }
        Ok(h)
    }
}
