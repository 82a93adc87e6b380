//! The full network: backbone, step head and type head, with losses,
//! prediction and checkpoints.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::backbone::{Backbone, BackboneConfig, Topology};
use crate::brep::BRep;
use crate::features::{face_dim, featurize, FeatureError, FeatureMatrices, COEDGE_DIM, EDGE_DIM};
use crate::heads::{self, Aggregation};
use crate::nn::{self, Linear, Matrix, ModelParams, NnError, Tape, Var};
use crate::rng::SplitMix64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("topology error: {0}")]
    Topology(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("architecture error: {0}")]
    Arch(String),
    #[error("label error: {0}")]
    Labels(String),
}

/// Everything needed to rebuild the parameter layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub d_emb: usize,
    pub n_layers: usize,
    pub hidden: usize,
    pub grid_resolution: usize,
    pub k_t: usize,
    pub k_s: usize,
    pub aggregation: Aggregation,
    /// Type class names, in output column order.
    pub vocabulary: Vec<String>,
}

impl ArchConfig {
    pub fn backbone(&self) -> BackboneConfig {
        BackboneConfig { d_emb: self.d_emb, n_layers: self.n_layers, hidden: self.hidden }
    }

    pub fn input_dims(&self) -> (usize, usize, usize) {
        (face_dim(self.grid_resolution), EDGE_DIM, COEDGE_DIM)
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.k_s == 0 || self.k_t == 0 || self.grid_resolution == 0 {
            return Err(ModelError::Arch("k_s, k_t and grid_resolution must be positive".into()));
        }
        if self.vocabulary.len() != self.k_t {
            return Err(ModelError::Arch(format!("k_t = {} but the vocabulary has {} names", self.k_t, self.vocabulary.len())));
        }
        Ok(())
    }
}

/// Ground truth of one model in network label space.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    /// Type index into the network vocabulary, per face.
    pub types: Vec<usize>,
    /// Steps renumbered to `0..k` in ascending id order, per face.
    pub steps: Vec<usize>,
    pub k: usize,
}

/// A featurized model ready for the network.
#[derive(Clone, Debug)]
pub struct Sample {
    pub name: String,
    pub fm: FeatureMatrices,
    pub topo: Topology,
    pub gt: Option<GroundTruth>,
}

impl Sample {
    /// Featurizes `b`. Labels are mapped into `vocabulary` by class name; a
    /// model without labels gets no ground truth.
    pub fn new(b: &BRep, grid_resolution: usize, vocabulary: &[String]) -> Result<Sample, ModelError> {
        let fm = featurize(b, grid_resolution)?;
        let topo = Topology::new(b)?;
        let gt = match (b.labels(), b.dense_steps()) {
            (Some(labels), Some((steps, k))) => {
                let types = labels
                    .iter()
                    .map(|l| {
                        let name = b
                            .vocabulary
                            .name(l.op_type)
                            .ok_or_else(|| ModelError::Labels(format!("op_type index {} out of range", l.op_type)))?;
                        vocabulary
                            .iter()
                            .position(|v| v == name)
                            .ok_or_else(|| ModelError::Labels(format!("class `{name}` is not in the network vocabulary")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Some(GroundTruth { types, steps, k })
            }
            _ => None,
        };
        Ok(Sample { name: b.name.clone(), fm, topo, gt })
    }

    pub fn num_faces(&self) -> usize {
        self.topo.num_faces()
    }
}

/// Selections taken from a forward pass, reused to keep the graph fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct Frozen {
    pub perm: Vec<usize>,
    pub membership: Vec<usize>,
}

/// Tape handles of one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    pub f_delta: Var,
    pub s_hat: Var,
    pub t_hat: Var,
    pub membership: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct LossOutput {
    pub total: Var,
    pub step: f64,
    pub type_: f64,
    pub frozen: Frozen,
}

/// Loss weights; training uses `(1, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub step: f64,
    pub type_: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { step: 1.0, type_: 1.0 }
    }
}

#[derive(Clone, Debug)]
pub struct Network {
    pub arch: ArchConfig,
    backbone: Backbone,
    step_head: Linear,
    type_head: Linear,
}

impl Network {
    /// Registers all parameters in `p`, initialized from `rng`.
    pub fn new(arch: ArchConfig, p: &mut ModelParams, rng: &mut SplitMix64) -> Result<Network, ModelError> {
        arch.validate()?;
        let backbone = Backbone::new(arch.backbone(), arch.input_dims(), p, rng)?;
        let step_head = Linear::new(p, "step_head", arch.d_emb, arch.k_s, rng)?;
        let width = arch.aggregation.type_input_width(arch.d_emb, arch.k_s);
        let type_head = Linear::new(p, "type_head", width, arch.k_t, rng)?;
        Ok(Network { arch, backbone, step_head, type_head })
    }

    /// Forward pass. With `membership` given, the type head aggregates by it
    /// instead of the argmax of this pass.
    pub fn forward(
        &self,
        t: &mut Tape,
        p: &ModelParams,
        sample: &Sample,
        membership: Option<&[usize]>,
    ) -> Result<Forward, ModelError> {
        let f_delta = self.backbone.forward(t, p, &sample.fm, &sample.topo)?;
        let s_hat = heads::step_head(t, p, self.step_head, f_delta)?;
        let membership = match membership {
            Some(m) => m.to_vec(),
            None => heads::row_argmax(t.value(s_hat)),
        };
        let t_hat = heads::type_head(t, p, self.type_head, f_delta, s_hat, &membership, self.arch.aggregation)?;
        Ok(Forward { f_delta, s_hat, t_hat, membership })
    }

    /// Weighted `L_step + L_type` on the tape.
    pub fn loss(
        &self,
        t: &mut Tape,
        p: &ModelParams,
        sample: &Sample,
        frozen: Option<&Frozen>,
        weights: LossWeights,
    ) -> Result<LossOutput, ModelError> {
        let gt = sample.gt.as_ref().ok_or_else(|| ModelError::Labels(format!("{} has no labels", sample.name)))?;
        if gt.k > self.arch.k_s {
            return Err(ModelError::Arch(format!("{} has {} steps but k_s = {}", sample.name, gt.k, self.arch.k_s)));
        }
        let fw = self.forward(t, p, sample, frozen.map(|f| f.membership.as_slice()))?;
        let (ls, perm) = heads::step_loss(t, fw.s_hat, &gt.steps, frozen.map(|f| f.perm.as_slice()))?;
        let lt = heads::type_loss(t, fw.t_hat, &gt.types)?;
        let (step, type_) = (t.value(ls).item(), t.value(lt).item());
        let total = if weights == LossWeights::default() {
            t.add(ls, lt)?
        } else {
            let a = t.scale(ls, weights.step)?;
            let b = t.scale(lt, weights.type_)?;
            t.add(a, b)?
        };
        Ok(LossOutput { total, step, type_, frozen: Frozen { perm, membership: fw.membership } })
    }

    /// Per-face argmax labels and probabilities.
    pub fn predict(&self, p: &ModelParams, sample: &Sample) -> Result<Prediction, ModelError> {
        let mut t = Tape::new();
        let fw = self.forward(&mut t, p, sample, None)?;
        let s = t.value(fw.s_hat);
        let ty = t.value(fw.t_hat);
        let types = heads::row_argmax(ty);
        let faces = (0..sample.num_faces())
            .map(|j| FacePrediction {
                id: j,
                op_type: self.arch.vocabulary[types[j]].clone(),
                op_step: fw.membership[j],
                type_probs: ty.row(j).to_vec(),
                step_probs: s.row(j).to_vec(),
            })
            .collect();
        Ok(Prediction { model: sample.name.clone(), faces, provenance: None })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacePrediction {
    pub id: usize,
    pub op_type: String,
    pub op_step: usize,
    pub type_probs: Vec<f64>,
    pub step_probs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub model: String,
    pub faces: Vec<FacePrediction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Value>,
}

impl Prediction {
    pub fn step_labels(&self) -> Vec<usize> {
        self.faces.iter().map(|f| f.op_step).collect()
    }

    pub fn type_labels(&self) -> Vec<&str> {
        self.faces.iter().map(|f| f.op_type.as_str()).collect()
    }
}

/// The ground-truth labels of `b` in prediction form, steps renumbered to
/// `0..k` and probabilities one-hot. `None` if any face is unlabeled.
pub fn ground_truth_prediction(b: &BRep) -> Option<Prediction> {
    let labels = b.labels()?;
    let (steps, k) = b.dense_steps()?;
    let faces = labels
        .iter()
        .zip(steps)
        .enumerate()
        .map(|(id, (l, step))| {
            let mut type_probs = vec![0.0; b.vocabulary.len()];
            let mut step_probs = vec![0.0; k];
            type_probs[l.op_type] = 1.0;
            step_probs[step] = 1.0;
            Some(FacePrediction {
                id,
                op_type: b.vocabulary.name(l.op_type)?.to_string(),
                op_step: step,
                type_probs,
                step_probs,
            })
        })
        .collect::<Option<Vec<_>>>()?;
    Some(Prediction { model: b.name.clone(), faces, provenance: None })
}

/// A network together with its parameter values.
#[derive(Clone, Debug)]
pub struct Model {
    pub net: Network,
    pub params: ModelParams,
}

impl Model {
    pub fn init(arch: ArchConfig, seed: u64) -> Result<Model, ModelError> {
        let mut params = ModelParams::new();
        let mut rng = SplitMix64::new(seed);
        let net = Network::new(arch, &mut params, &mut rng)?;
        Ok(Model { net, params })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.net.arch
    }

    pub fn predict(&self, sample: &Sample) -> Result<Prediction, ModelError> {
        self.net.predict(&self.params, sample)
    }

    pub fn sample(&self, b: &BRep) -> Result<Sample, ModelError> {
        Sample::new(b, self.net.arch.grid_resolution, &self.net.arch.vocabulary)
    }

    pub fn to_checkpoint_string(&self, provenance: &Value) -> Result<String, ModelError> {
        let arch = serde_json::to_value(&self.net.arch).map_err(|e| ModelError::Arch(e.to_string()))?;
        Ok(nn::params::checkpoint_to_string(&arch, provenance, &self.params)?)
    }

    pub fn save(&self, path: &Path, provenance: &Value) -> Result<(), ModelError> {
        let text = self.to_checkpoint_string(provenance)?;
        std::fs::write(path, text).map_err(|e| NnError::Io(format!("{}: {e}", path.display())))?;
        Ok(())
    }

    /// Rebuilds the layout from the stored architecture and checks the stored
    /// parameters against it.
    pub fn from_checkpoint_str(text: &str) -> Result<(Model, Value), ModelError> {
        let ck = nn::params::checkpoint_from_str(text)?;
        let arch: ArchConfig = serde_json::from_value(ck.arch_config)
            .map_err(|e| NnError::Shape(format!("arch_config: {e}")))?;
        let layout = Model::init(arch, 0)?;
        layout.params.check_compatible(&ck.params)?;
        Ok((Model { net: layout.net, params: ck.params }, ck.provenance))
    }

    pub fn load(path: &Path) -> Result<(Model, Value), ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| NnError::Io(format!("{}: {e}", path.display())))?;
        Model::from_checkpoint_str(&text)
    }
}

/// `1 × n` copy of a slice, handy for probability rows.
pub fn row_matrix(v: &[f64]) -> Matrix {
    Matrix::from_vec(1, v.len(), v.to_vec()).expect("length matches")
}
