//! Flat key-value TOML run configuration.
//!
//! Every key is a field name of [`TrainConfig`], [`ModelConfig`],
//! [`NetworkSpec`] or [`VendiConfig`]. The RBF bandwidth is either a number
//! or `"median"`; `grad_clip = 0` (or `false`) turns clipping off.

use serde::{Deserialize, Serialize};
use toml::Value;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::network::{Activation, NetworkKind};
use crate::training::{TrainConfig, TrainMode};
use crate::vendi::Kernel;

pub const CONFIG_KEYS: &[&str] = &[
    "epochs",
    "batch_size",
    "lr_init",
    "lr_min",
    "warmup_epochs",
    "p_mask",
    "seed",
    "mode",
    "adaptive_alpha",
    "masking",
    "grad_clip",
    "alpha_const",
    "latent_dim",
    "sigma_x2",
    "sigma_z2",
    "eps0",
    "kind",
    "layers",
    "hidden",
    "activation",
    "kernel",
    "bandwidth",
    "q",
    "window",
];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub model: ModelConfig,
}

fn type_err(key: &str, want: &str, got: &Value) -> Error {
    Error::Config(format!("`{key}` expects {want}, got {got}"))
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(type_err(key, "a number", other)),
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        other => Err(type_err(key, "a non-negative integer", other)),
    }
}

fn as_bool(key: &str, v: &Value) -> Result<bool> {
    v.as_bool().ok_or_else(|| type_err(key, "true or false", v))
}

fn as_str<'v>(key: &str, v: &'v Value) -> Result<&'v str> {
    v.as_str().ok_or_else(|| type_err(key, "a string", v))
}

fn choice<T: Copy>(key: &str, v: &Value, options: &[(&str, T)]) -> Result<T> {
    let s = as_str(key, v)?;
    options
        .iter()
        .find(|(name, _)| *name == s)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            Error::Config(format!("`{key}` must be one of {}, got `{s}`", names.join(", ")))
        })
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table =
            text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut cfg = Self::default();
        for (key, value) in &table {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.model.validate()
    }

    /// Sets one key. Unknown keys are rejected with the list of valid ones.
    pub fn set(&mut self, key: &str, v: &Value) -> Result<()> {
        let t = &mut self.train;
        let m = &mut self.model;
        match key {
            "epochs" => t.epochs = as_usize(key, v)?,
            "batch_size" => t.batch_size = as_usize(key, v)?,
            "lr_init" => t.lr_init = as_f64(key, v)?,
            "lr_min" => t.lr_min = as_f64(key, v)?,
            "warmup_epochs" => t.warmup_epochs = as_usize(key, v)?,
            "p_mask" => t.p_mask = as_f64(key, v)?,
            "seed" => t.seed = as_usize(key, v)? as u64,
            "mode" => {
                t.mode = choice(
                    key,
                    v,
                    &[("supervised", TrainMode::Supervised), ("unsupervised", TrainMode::Unsupervised)],
                )?
            }
            "adaptive_alpha" => t.adaptive_alpha = as_bool(key, v)?,
            "masking" => t.masking = as_bool(key, v)?,
            "grad_clip" => {
                t.grad_clip = match v {
                    Value::Boolean(false) => None,
                    other => Some(as_f64(key, other)?).filter(|c| *c != 0.0),
                }
            }
            "alpha_const" => t.alpha_const = Some(as_f64(key, v)?),
            "latent_dim" => m.latent_dim = as_usize(key, v)?,
            "sigma_x2" => m.sigma_x2 = as_f64(key, v)?,
            "sigma_z2" => m.sigma_z2 = as_f64(key, v)?,
            "eps0" => m.eps0 = as_f64(key, v)?,
            "kind" => {
                m.network.kind = choice(
                    key,
                    v,
                    &[("mlp", NetworkKind::Mlp), ("attention", NetworkKind::Attention)],
                )?
            }
            "layers" => m.network.layers = as_usize(key, v)?,
            "hidden" => m.network.hidden = as_usize(key, v)?,
            "activation" => {
                m.network.activation = choice(
                    key,
                    v,
                    &[
                        ("tanh", Activation::Tanh),
                        ("relu", Activation::Relu),
                        ("sigmoid", Activation::Sigmoid),
                    ],
                )?
            }
            "kernel" => {
                let bandwidth = match m.vendi.kernel {
                    Kernel::Rbf { bandwidth } => bandwidth,
                    Kernel::LinearCosine => 1.0,
                };
                m.vendi.kernel = choice(
                    key,
                    v,
                    &[("rbf", Kernel::Rbf { bandwidth }), ("linear-cosine", Kernel::LinearCosine)],
                )?
            }
            "bandwidth" => match v {
                Value::String(s) if s == "median" => t.median_bandwidth = true,
                other => {
                    let h = as_f64(key, other)?;
                    t.median_bandwidth = false;
                    m.vendi.kernel = Kernel::Rbf { bandwidth: h };
                }
            },
            "q" => m.vendi.q = as_f64(key, v)?,
            "window" => m.vendi.window = as_usize(key, v)?,
            other => {
                return Err(Error::Config(format!(
                    "unknown config key `{other}`; valid keys: {}",
                    CONFIG_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// The resolved configuration in the same flat format.
    pub fn to_toml_string(&self) -> String {
        let t = &self.train;
        let m = &self.model;
        let mut table = toml::Table::new();
        let mut put = |k: &str, v: Value| {
            table.insert(k.to_string(), v);
        };
        put("epochs", Value::Integer(t.epochs as i64));
        put("batch_size", Value::Integer(t.batch_size as i64));
        put("lr_init", Value::Float(t.lr_init));
        put("lr_min", Value::Float(t.lr_min));
        put("warmup_epochs", Value::Integer(t.warmup_epochs as i64));
        put("p_mask", Value::Float(t.p_mask));
        put("seed", Value::Integer(t.seed as i64));
        put(
            "mode",
            Value::String(match t.mode {
                TrainMode::Supervised => "supervised".into(),
                TrainMode::Unsupervised => "unsupervised".into(),
            }),
        );
        put("adaptive_alpha", Value::Boolean(t.adaptive_alpha));
        put("masking", Value::Boolean(t.masking));
        put("grad_clip", Value::Float(t.grad_clip.unwrap_or(0.0)));
        if let Some(a) = t.alpha_const {
            put("alpha_const", Value::Float(a));
        }
        put("latent_dim", Value::Integer(m.latent_dim as i64));
        put("sigma_x2", Value::Float(m.sigma_x2));
        put("sigma_z2", Value::Float(m.sigma_z2));
        put("eps0", Value::Float(m.eps0));
        put(
            "kind",
            Value::String(match m.network.kind {
                NetworkKind::Mlp => "mlp".into(),
                NetworkKind::Attention => "attention".into(),
            }),
        );
        put("layers", Value::Integer(m.network.layers as i64));
        put("hidden", Value::Integer(m.network.hidden as i64));
        put(
            "activation",
            Value::String(
                match m.network.activation {
                    Activation::Tanh => "tanh",
                    Activation::Relu => "relu",
                    Activation::Sigmoid => "sigmoid",
                }
                .into(),
            ),
        );
        match m.vendi.kernel {
            Kernel::Rbf { bandwidth } => {
                put("kernel", Value::String("rbf".into()));
                put(
                    "bandwidth",
                    if t.median_bandwidth {
                        Value::String("median".into())
                    } else {
                        Value::Float(bandwidth)
                    },
                );
            }
            Kernel::LinearCosine => put("kernel", Value::String("linear-cosine".into())),
        }
        put("q", Value::Float(m.vendi.q));
        put("window", Value::Integer(m.vendi.window as i64));
        toml::to_string(&table).expect("flat table serializes")
    }
}
