//! Glue between the generator, the network and the metrics.

use rayon::prelude::*;
use thiserror::Error;

use crate::brep::{BRep, TypeVocabulary};
use crate::heads::Aggregation;
use crate::metrics::{evaluate, EvalReport, MetricsError, ModelEval};
use crate::model::{ArchConfig, Model, ModelError, Prediction, Sample};
use crate::synth::{generate_model, GenError, GenParams};
use crate::train::{max_steps, train, EpochLog, TrainConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Gen(#[from] GenError),
}

/// Network shape before `k_s` is known.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchSpec {
    pub d_emb: usize,
    pub n_layers: usize,
    pub hidden: usize,
    pub grid_resolution: usize,
    /// `None` = largest step count in the training set.
    pub k_s: Option<usize>,
    pub aggregation: Aggregation,
    pub vocabulary: TypeVocabulary,
}

impl Default for ArchSpec {
    fn default() -> Self {
        ArchSpec {
            d_emb: 64,
            n_layers: 2,
            hidden: 64,
            grid_resolution: 5,
            k_s: None,
            aggregation: Aggregation::Avg,
            vocabulary: TypeVocabulary::extrude_family(),
        }
    }
}

impl ArchSpec {
    pub fn resolve(&self, k_s: usize) -> ArchConfig {
        ArchConfig {
            d_emb: self.d_emb,
            n_layers: self.n_layers,
            hidden: self.hidden,
            grid_resolution: self.grid_resolution,
            k_t: self.vocabulary.len(),
            k_s: self.k_s.unwrap_or(k_s),
            aggregation: self.aggregation,
            vocabulary: self.vocabulary.names().to_vec(),
        }
    }
}

/// Featurizes models in parallel, keeping input order.
pub fn samples(breps: &[BRep], grid_resolution: usize, vocabulary: &TypeVocabulary) -> Result<Vec<Sample>, ModelError> {
    breps.par_iter().map(|b| Sample::new(b, grid_resolution, vocabulary.names())).collect()
}

/// Models `range` of a generator configuration.
pub fn generate_range(params: &GenParams, range: std::ops::Range<usize>) -> Result<Vec<BRep>, GenError> {
    params.validate()?;
    range
        .into_par_iter()
        .map(|i| generate_model(params.model_seed(i), params).map(|g| g.brep))
        .collect()
}

/// Initializes from `init_seed`, resolves `k_s` from the data and trains.
pub fn fit(
    arch: &ArchSpec,
    train_set: &[Sample],
    cfg: &TrainConfig,
    init_seed: u64,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<(Model, Vec<EpochLog>), ModelError> {
    let mut model = Model::init(arch.resolve(max_steps(train_set)), init_seed)?;
    let logs = train(&mut model, train_set, cfg, on_epoch)?;
    Ok((model, logs))
}

pub fn predict_all(model: &Model, samples: &[Sample]) -> Result<Vec<Prediction>, ModelError> {
    samples.par_iter().map(|s| model.predict(s)).collect()
}

/// Metrics of `preds` against the labels of `breps`.
pub fn evaluate_predictions(
    breps: &[BRep],
    preds: &[Prediction],
    vocab: &TypeVocabulary,
) -> Result<EvalReport, MetricsError> {
    let evals: Vec<ModelEval> = breps
        .iter()
        .zip(preds)
        .map(|(b, p)| ModelEval::from_prediction(b, p, vocab))
        .collect::<Result<_, _>>()?;
    evaluate(&evals, vocab)
}

/// Predicts every model and scores the predictions.
pub fn evaluate_model(model: &Model, breps: &[BRep]) -> Result<EvalReport, PipelineError> {
    let vocab = TypeVocabulary::new(&model.arch().vocabulary);
    let s = samples(breps, model.arch().grid_resolution, &vocab)?;
    let preds = predict_all(model, &s)?;
    Ok(evaluate_predictions(breps, &preds, &vocab)?)
}
