use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::matrix::Matrix;
use super::NnError;
use crate::rng::SplitMix64;

pub const CHECKPOINT_VERSION: &str = "1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
}

/// Named trainable tensors, in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelParams {
    params: Vec<Param>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Matrix) -> Result<ParamId, NnError> {
        if self.id(name).is_some() {
            return Err(NnError::Shape(format!("duplicate parameter name `{name}`")));
        }
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.params.push(Param { name: name.to_string(), value, grad });
        Ok(ParamId(self.params.len() - 1))
    }

    /// Weight initialized uniformly in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn add_glorot(&mut self, name: &str, fan_in: usize, fan_out: usize, rng: &mut SplitMix64) -> Result<ParamId, NnError> {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.uniform(-a, a)).collect();
        self.add(name, Matrix::from_vec(fan_in, fan_out, data)?)
    }

    pub fn add_zeros(&mut self, name: &str, rows: usize, cols: usize) -> Result<ParamId, NnError> {
        self.add(name, Matrix::zeros(rows, cols))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    /// Zero matrices shaped like every parameter.
    pub fn zeros_like(&self) -> Vec<Matrix> {
        self.params.iter().map(|p| Matrix::zeros(p.value.rows(), p.value.cols())).collect()
    }

    /// Checks names and shapes against `other`, which is typically a freshly
    /// initialized model of the expected architecture.
    pub fn check_compatible(&self, other: &ModelParams) -> Result<(), NnError> {
        if self.len() != other.len() {
            return Err(NnError::Shape(format!("{} parameters, expected {}", self.len(), other.len())));
        }
        for (a, b) in self.params.iter().zip(&other.params) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(NnError::Shape(format!(
                    "parameter `{}` {:?} does not match expected `{}` {:?}",
                    a.name,
                    a.value.shape(),
                    b.name,
                    b.value.shape()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamRecord {
    name: String,
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    format_version: String,
    arch_config: Value,
    #[serde(default)]
    provenance: Value,
    params: Vec<ParamRecord>,
}

/// A loaded checkpoint. `arch_config` is interpreted by the model that owns it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub arch_config: Value,
    pub provenance: Value,
    pub params: ModelParams,
}

pub fn checkpoint_to_string(arch_config: &Value, provenance: &Value, params: &ModelParams) -> Result<String, NnError> {
    let mut records = Vec::with_capacity(params.len());
    for p in &params.params {
        if !p.value.is_finite() {
            return Err(NnError::Shape(format!("parameter `{}` has non-finite values", p.name)));
        }
        records.push(ParamRecord {
            name: p.name.clone(),
            shape: [p.value.rows(), p.value.cols()],
            data: p.value.data().to_vec(),
        });
    }
    let doc = CheckpointDoc {
        format_version: CHECKPOINT_VERSION.to_string(),
        arch_config: arch_config.clone(),
        provenance: provenance.clone(),
        params: records,
    };
    let mut s = serde_json::to_string_pretty(&doc).map_err(|e| NnError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn checkpoint_from_str(text: &str) -> Result<Checkpoint, NnError> {
    let header: Value = serde_json::from_str(text).map_err(|e| NnError::Version(format!("unreadable checkpoint header: {e}")))?;
    match header.get("format_version").and_then(Value::as_str) {
        Some(CHECKPOINT_VERSION) => {}
        Some(v) => return Err(NnError::Version(format!("checkpoint format_version `{v}`, expected `{CHECKPOINT_VERSION}`"))),
        None => return Err(NnError::Version("checkpoint has no format_version".into())),
    }
    let doc: CheckpointDoc = serde_json::from_value(header).map_err(|e| NnError::Shape(format!("malformed checkpoint: {e}")))?;
    let mut params = ModelParams::new();
    for r in doc.params {
        let m = Matrix::from_vec(r.shape[0], r.shape[1], r.data)?;
        params.add(&r.name, m)?;
    }
    Ok(Checkpoint { arch_config: doc.arch_config, provenance: doc.provenance, params })
}

pub fn save_params(path: &Path, arch_config: &Value, provenance: &Value, params: &ModelParams) -> Result<(), NnError> {
    let s = checkpoint_to_string(arch_config, provenance, params)?;
    std::fs::write(path, s).map_err(|e| NnError::Io(format!("{}: {e}", path.display())))
}

pub fn load_params(path: &Path) -> Result<Checkpoint, NnError> {
    let text = std::fs::read_to_string(path).map_err(|e| NnError::Io(format!("{}: {e}", path.display())))?;
    checkpoint_from_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModelParams {
        let mut rng = SplitMix64::new(3);
        let mut p = ModelParams::new();
        p.add_glorot("w", 5, 3, &mut rng).unwrap();
        p.add_zeros("b", 1, 3).unwrap();
        p.get_mut(ParamId(1)).value.set(0, 1, 1.0 / 3.0);
        p
    }

    #[test]
    fn round_trip_is_bitwise() {
        let p = sample();
        let s = checkpoint_to_string(&serde_json::json!({"k": 1}), &Value::Null, &p).unwrap();
        let c = checkpoint_from_str(&s).unwrap();
        assert_eq!(c.params, p);
        for (a, b) in c.params.iter().zip(p.iter()) {
            for (x, y) in a.1.value.data().iter().zip(b.1.value.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(c.arch_config, serde_json::json!({"k": 1}));
    }

    #[test]
    fn corrupted_header_is_a_version_error() {
        let p = sample();
        let s = checkpoint_to_string(&Value::Null, &Value::Null, &p).unwrap();
        let broken = s.replacen('{', "#", 1);
        assert!(matches!(checkpoint_from_str(&broken), Err(NnError::Version(_))));
        let wrong = s.replace("\"format_version\": \"1\"", "\"format_version\": \"9\"");
        assert!(matches!(checkpoint_from_str(&wrong), Err(NnError::Version(_))));
    }

    #[test]
    fn mismatched_architecture_is_a_shape_error() {
        let p = sample();
        let mut rng = SplitMix64::new(3);
        let mut q = ModelParams::new();
        q.add_glorot("w", 5, 4, &mut rng).unwrap();
        q.add_zeros("b", 1, 4).unwrap();
        assert!(matches!(p.check_compatible(&q), Err(NnError::Shape(_))));
        assert!(p.check_compatible(&sample()).is_ok());
    }
}
