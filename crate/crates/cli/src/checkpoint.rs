//! Binary readout checkpoints.
//!
//! Layout: the magic `QRCCKPT\0`, a little-endian `u32` format version, a
//! `u64` header length, a JSON header, then every array listed in the header
//! as raw little-endian `f64` values in header order.

use std::path::Path;

use ndarray::{Array1, Array2};
use qrc_core::bench::{FittedReadout, Readout, ReadoutModel, Task};
use qrc_core::features::Standardizer;
use qrc_core::learn::{HiddenActivation, LinearKind, LinearModel, Mlp, OutputActivation};
use serde::{Deserialize, Serialize};

use crate::artifacts::{require, write_bytes};
use crate::error::CliError;

pub const MAGIC: &[u8; 8] = b"QRCCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
enum ModelHeader {
    Network {
        layer_sizes: Vec<usize>,
        hidden_activation: HiddenActivation,
        output_activation: OutputActivation,
    },
    Linear {
        kind: LinearKind,
        regularization: f64,
        converged: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArraySpec {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    task: Task,
    readout: Readout,
    model: ModelHeader,
    arrays: Vec<ArraySpec>,
}

struct Payload {
    specs: Vec<ArraySpec>,
    data: Vec<u8>,
}

impl Payload {
    fn push(&mut self, name: String, shape: Vec<usize>, values: impl IntoIterator<Item = f64>) {
        let before = self.data.len();
        for v in values {
            self.data.extend_from_slice(&v.to_le_bytes());
        }
        debug_assert_eq!(
            (self.data.len() - before) / 8,
            shape.iter().product::<usize>()
        );
        self.specs.push(ArraySpec { name, shape });
    }

    fn push_scaler(&mut self, prefix: &str, s: &Standardizer<f64>) {
        self.push(
            format!("{prefix}_mean"),
            vec![s.mean.len()],
            s.mean.iter().copied(),
        );
        self.push(
            format!("{prefix}_scale"),
            vec![s.scale.len()],
            s.scale.iter().copied(),
        );
    }
}

pub fn encode(fitted: &FittedReadout) -> Vec<u8> {
    let mut p = Payload {
        specs: Vec::new(),
        data: Vec::new(),
    };
    p.push_scaler("feature", &fitted.scaler);
    if let Some(t) = &fitted.target_scaler {
        p.push_scaler("target", t);
    }
    let model = match &fitted.model {
        ReadoutModel::Network(m) => {
            for (l, (w, b)) in m.weights.iter().zip(&m.biases).enumerate() {
                p.push(
                    format!("weights_{}", l + 1),
                    w.shape().to_vec(),
                    w.iter().copied(),
                );
                p.push(
                    format!("biases_{}", l + 1),
                    vec![b.len()],
                    b.iter().copied(),
                );
            }
            ModelHeader::Network {
                layer_sizes: m.layer_sizes.clone(),
                hidden_activation: m.hidden_activation,
                output_activation: m.output_activation,
            }
        }
        ReadoutModel::Linear(m) => {
            p.push(
                "weights".into(),
                m.weights.shape().to_vec(),
                m.weights.iter().copied(),
            );
            p.push("bias".into(), vec![m.bias.len()], m.bias.iter().copied());
            ModelHeader::Linear {
                kind: m.kind,
                regularization: m.regularization,
                converged: m.converged,
            }
        }
    };
    let header = Header {
        task: fitted.task,
        readout: fitted.readout,
        model,
        arrays: p.specs,
    };
    let json = serde_json::to_vec(&header).expect("serialisable header");
    let mut out = Vec::with_capacity(20 + json.len() + p.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&p.data);
    out
}

struct Reader<'a> {
    specs: std::slice::Iter<'a, ArraySpec>,
    data: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, name: &str) -> Result<(Vec<usize>, Vec<f64>), String> {
        let spec = self
            .specs
            .next()
            .ok_or_else(|| format!("missing array {name}"))?;
        if spec.name != name {
            return Err(format!("expected array {name}, found {}", spec.name));
        }
        let n: usize = spec.shape.iter().product();
        if self.data.len() < 8 * n {
            return Err(format!("array {name} is truncated"));
        }
        let (head, rest) = self.data.split_at(8 * n);
        self.data = rest;
        let values = head
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok((spec.shape.clone(), values))
    }

    fn vector(&mut self, name: &str) -> Result<Vec<f64>, String> {
        let (shape, v) = self.take(name)?;
        if shape.len() != 1 {
            return Err(format!("array {name} must be one-dimensional"));
        }
        Ok(v)
    }

    fn matrix(&mut self, name: &str) -> Result<Array2<f64>, String> {
        let (shape, v) = self.take(name)?;
        match shape[..] {
            [r, c] => Ok(Array2::from_shape_vec((r, c), v).expect("shape checked")),
            _ => Err(format!("array {name} must be two-dimensional")),
        }
    }

    fn scaler(&mut self, prefix: &str) -> Result<Standardizer<f64>, String> {
        Ok(Standardizer {
            mean: self.vector(&format!("{prefix}_mean"))?,
            scale: self.vector(&format!("{prefix}_scale"))?,
        })
    }
}

pub fn decode(bytes: &[u8]) -> Result<FittedReadout, String> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err("not a readout checkpoint".into());
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = &bytes[20..];
    if body.len() < len {
        return Err("truncated header".into());
    }
    let header: Header = serde_json::from_slice(&body[..len]).map_err(|e| e.to_string())?;
    let mut r = Reader {
        specs: header.arrays.iter(),
        data: &body[len..],
    };
    let scaler = r.scaler("feature")?;
    let target_scaler = match header.task {
        Task::Classification => None,
        Task::Regression | Task::Tomography => Some(r.scaler("target")?),
    };
    let model = match header.model {
        ModelHeader::Network {
            layer_sizes,
            hidden_activation,
            output_activation,
        } => {
            let mut weights = Vec::new();
            let mut biases = Vec::new();
            for l in 1..layer_sizes.len() {
                weights.push(r.matrix(&format!("weights_{l}"))?);
                biases.push(Array1::from(r.vector(&format!("biases_{l}"))?));
            }
            let mlp = Mlp::from_parts(weights, biases, hidden_activation, output_activation)
                .map_err(|e| e.to_string())?;
            if mlp.layer_sizes != layer_sizes {
                return Err("layer sizes disagree with the stored weights".into());
            }
            ReadoutModel::Network(mlp)
        }
        ModelHeader::Linear {
            kind,
            regularization,
            converged,
        } => ReadoutModel::Linear(LinearModel {
            weights: r.matrix("weights")?,
            bias: Array1::from(r.vector("bias")?),
            regularization,
            kind,
            converged,
        }),
    };
    if r.specs.next().is_some() || !r.data.is_empty() {
        return Err("trailing data after the last array".into());
    }
    Ok(FittedReadout {
        task: header.task,
        readout: header.readout,
        scaler,
        target_scaler,
        model,
    })
}

pub fn save(path: &Path, fitted: &FittedReadout) -> Result<(), CliError> {
    write_bytes(path, &encode(fitted))
}

pub fn load(path: &Path) -> Result<FittedReadout, CliError> {
    require(path, "train")?;
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes).map_err(|m| CliError::artifact(path, m))
}
