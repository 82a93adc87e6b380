//! Type accuracy and IoU, step accuracy, and step consistency scores.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::brep::{BRep, TypeVocabulary};
use crate::heads::{hungarian, one_hot};
use crate::model::Prediction;
use crate::nn::{riou, Matrix, NnError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("nothing to evaluate")]
    Empty,
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Ground truth and prediction of one model, types as vocabulary indices.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelEval {
    pub name: String,
    pub gt_types: Vec<usize>,
    pub gt_steps: Vec<u64>,
    pub pred_types: Vec<usize>,
    pub pred_steps: Vec<u64>,
}

impl ModelEval {
    pub fn num_faces(&self) -> usize {
        self.gt_types.len()
    }

    fn check(&self) -> Result<(), MetricsError> {
        let n = self.gt_types.len();
        if [self.gt_steps.len(), self.pred_types.len(), self.pred_steps.len()].iter().any(|&l| l != n) {
            return Err(MetricsError::Shape(format!("{}: label vectors differ in length", self.name)));
        }
        if n == 0 {
            return Err(MetricsError::Shape(format!("{}: no faces", self.name)));
        }
        Ok(())
    }

    /// Pairs a labeled model with a prediction, mapping class names into `vocab`.
    pub fn from_prediction(b: &BRep, pred: &Prediction, vocab: &TypeVocabulary) -> Result<ModelEval, MetricsError> {
        let labels = b.labels().ok_or_else(|| MetricsError::Shape(format!("{} has unlabeled faces", b.name)))?;
        if pred.faces.len() != labels.len() {
            return Err(MetricsError::Shape(format!(
                "{}: {} predicted faces for {} faces",
                b.name,
                pred.faces.len(),
                labels.len()
            )));
        }
        let index = |name: &str| {
            vocab
                .index_of(name)
                .ok_or_else(|| MetricsError::VocabularyMismatch(format!("class `{name}` is not in the vocabulary")))
        };
        let mut gt_types = Vec::with_capacity(labels.len());
        for l in &labels {
            let name = b.vocabulary.name(l.op_type).ok_or_else(|| MetricsError::UnknownLabel(l.op_type.to_string()))?;
            gt_types.push(index(name)?);
        }
        let mut faces: Vec<_> = pred.faces.iter().collect();
        faces.sort_by_key(|f| f.id);
        if faces.iter().enumerate().any(|(i, f)| f.id != i) {
            return Err(MetricsError::Shape(format!("{}: prediction face ids are not 0..{}", b.name, labels.len())));
        }
        Ok(ModelEval {
            name: b.name.clone(),
            gt_types,
            gt_steps: labels.iter().map(|l| l.op_step).collect(),
            pred_types: faces.iter().map(|f| index(&f.op_type)).collect::<Result<_, _>>()?,
            pred_steps: faces.iter().map(|f| f.op_step as u64).collect(),
        })
    }
}

/// Renumbers arbitrary ids to `0..k` in ascending order.
pub fn dense_labels(ids: &[u64]) -> (Vec<usize>, usize) {
    let mut distinct = ids.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    (ids.iter().map(|i| distinct.binary_search(i).unwrap()).collect(), distinct.len())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassIou {
    pub class: String,
    /// `None` when the class occurs neither in ground truth nor in predictions.
    pub iou: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeMetrics {
    pub macc: f64,
    pub face_acc_pooled: f64,
    pub miou: f64,
    pub per_class_iou: Vec<ClassIou>,
}

fn accuracy(a: &[usize], b: &[usize]) -> f64 {
    a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
}

pub fn type_metrics(models: &[ModelEval], vocab: &TypeVocabulary) -> Result<TypeMetrics, MetricsError> {
    if models.is_empty() {
        return Err(MetricsError::Empty);
    }
    let k = vocab.len();
    let (mut tp, mut fp, mut fn_) = (vec![0usize; k], vec![0usize; k], vec![0usize; k]);
    let (mut correct, mut faces) = (0usize, 0usize);
    let mut acc_sum = 0.0;
    for m in models {
        m.check()?;
        for (&g, &p) in m.gt_types.iter().zip(&m.pred_types) {
            if g >= k || p >= k {
                return Err(MetricsError::VocabularyMismatch(format!("{}: class index {} out of range", m.name, g.max(p))));
            }
            if g == p {
                tp[g] += 1;
                correct += 1;
            } else {
                fn_[g] += 1;
                fp[p] += 1;
            }
        }
        faces += m.num_faces();
        acc_sum += accuracy(&m.gt_types, &m.pred_types);
    }
    let per_class_iou: Vec<ClassIou> = (0..k)
        .map(|c| {
            let denom = tp[c] + fp[c] + fn_[c];
            ClassIou {
                class: vocab.names()[c].clone(),
                iou: (denom > 0).then(|| tp[c] as f64 / denom as f64),
            }
        })
        .collect();
    let present: Vec<f64> = per_class_iou.iter().filter_map(|c| c.iou).collect();
    Ok(TypeMetrics {
        macc: acc_sum / models.len() as f64,
        face_acc_pooled: correct as f64 / faces as f64,
        miou: present.iter().sum::<f64>() / present.len() as f64,
        per_class_iou,
    })
}

/// Face accuracy after matching predicted steps to ground-truth steps by hard
/// membership IoU.
pub fn step_accuracy(gt_steps: &[u64], pred_steps: &[u64]) -> Result<f64, MetricsError> {
    if gt_steps.len() != pred_steps.len() || gt_steps.is_empty() {
        return Err(MetricsError::Shape("step label vectors must be nonempty and of equal length".into()));
    }
    let (gt, n_gt) = dense_labels(gt_steps);
    let (pred, n_pred) = dense_labels(pred_steps);
    let m = n_gt.max(n_pred);
    let s = one_hot(&gt, n_gt);
    let p = one_hot(&pred, m);
    let column = |x: &Matrix, c: usize| (0..x.rows()).map(|r| x.get(r, c)).collect::<Vec<f64>>();
    let mut cost = Matrix::zeros(n_gt, m);
    for a in 0..n_gt {
        let sa = column(&s, a);
        for b in 0..m {
            cost.set(a, b, 1.0 - riou(&sa, &column(&p, b))?);
        }
    }
    let perm = hungarian(&cost)?.perm;
    let hits = gt.iter().zip(&pred).filter(|(&g, &q)| perm[g] == q).count();
    Ok(hits as f64 / gt.len() as f64)
}

pub fn step_macc(models: &[ModelEval]) -> Result<f64, MetricsError> {
    if models.is_empty() {
        return Err(MetricsError::Empty);
    }
    let accs: Vec<f64> = models.iter().map(|m| step_accuracy(&m.gt_steps, &m.pred_steps)).collect::<Result<_, _>>()?;
    Ok(accs.iter().sum::<f64>() / accs.len() as f64)
}

/// Maps class names to their group names.
pub fn group_types<S: AsRef<str>>(labels: &[S], vocab: &TypeVocabulary) -> Result<Vec<String>, MetricsError> {
    labels
        .iter()
        .map(|l| {
            vocab
                .grouped(l.as_ref())
                .map(str::to_string)
                .ok_or_else(|| MetricsError::UnknownLabel(l.as_ref().to_string()))
        })
        .collect()
}

/// Consistency terms of one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    pub consistent_steps: usize,
    pub steps: usize,
    /// Mean over predicted steps of the majority grouped-type fraction.
    pub s_c: f64,
}

/// `steps` and `groups` are per-face predicted step ids and grouped type ids.
pub fn consistency<G: Ord + Clone>(steps: &[u64], groups: &[G]) -> Result<Consistency, MetricsError> {
    if steps.len() != groups.len() || steps.is_empty() {
        return Err(MetricsError::Shape("step and type vectors must be nonempty and of equal length".into()));
    }
    let mut by_step: BTreeMap<u64, BTreeMap<G, usize>> = BTreeMap::new();
    for (s, g) in steps.iter().zip(groups) {
        *by_step.entry(*s).or_default().entry(g.clone()).or_default() += 1;
    }
    let mut consistent = 0;
    let mut fracs = Vec::with_capacity(by_step.len());
    for counts in by_step.values() {
        let n: usize = counts.values().sum();
        let max = *counts.values().max().unwrap();
        consistent += usize::from(counts.len() == 1);
        fracs.push(max as f64 / n as f64);
    }
    // Summed in sorted order so renumbering steps cannot change the rounding.
    fracs.sort_by(f64::total_cmp);
    let s_c = fracs.iter().sum::<f64>() / fracs.len() as f64;
    Ok(Consistency { consistent_steps: consistent, steps: by_step.len(), s_c })
}

fn model_consistency(m: &ModelEval, vocab: &TypeVocabulary) -> Result<Consistency, MetricsError> {
    let groups = m
        .pred_types
        .iter()
        .map(|&t| vocab.group_index(t).ok_or_else(|| MetricsError::UnknownLabel(t.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    consistency(&m.pred_steps, &groups)
}

/// `(R_C, mS_C)` over a dataset.
pub fn consistency_scores(models: &[ModelEval], vocab: &TypeVocabulary) -> Result<(f64, f64), MetricsError> {
    if models.is_empty() {
        return Err(MetricsError::Empty);
    }
    let cs: Vec<Consistency> = models.iter().map(|m| model_consistency(m, vocab)).collect::<Result<_, _>>()?;
    let num: usize = cs.iter().map(|c| c.consistent_steps).sum();
    let den: usize = cs.iter().map(|c| c.steps).sum();
    Ok((num as f64 / den as f64, cs.iter().map(|c| c.s_c).sum::<f64>() / cs.len() as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub model: String,
    pub faces: usize,
    pub k_gt: usize,
    pub k_pred: usize,
    pub type_acc: f64,
    pub step_acc: f64,
    pub consistent_steps: usize,
    pub s_c: f64,
}

/// Mean accuracies of the models with a given ground-truth step count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepCountRow {
    pub k: usize,
    pub models: usize,
    pub type_macc: f64,
    pub step_macc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub models: usize,
    pub faces: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub type_macc: f64,
    pub face_acc_pooled: f64,
    pub type_miou: f64,
    pub per_class_iou: Vec<ClassIou>,
    pub grouped_type_macc: f64,
    pub step_macc: f64,
    pub r_c: f64,
    pub ms_c: f64,
    pub counts: Counts,
    pub by_step_count: Vec<StepCountRow>,
    pub per_model: Vec<ModelRow>,
}

/// All metrics of a dataset. Per-model terms run in parallel and are reduced in
/// input order.
pub fn evaluate(models: &[ModelEval], vocab: &TypeVocabulary) -> Result<EvalReport, MetricsError> {
    let tm = type_metrics(models, vocab)?;
    let rows: Vec<ModelRow> = models
        .par_iter()
        .map(|m| {
            let c = model_consistency(m, vocab)?;
            Ok(ModelRow {
                model: m.name.clone(),
                faces: m.num_faces(),
                k_gt: dense_labels(&m.gt_steps).1,
                k_pred: c.steps,
                type_acc: accuracy(&m.gt_types, &m.pred_types),
                step_acc: step_accuracy(&m.gt_steps, &m.pred_steps)?,
                consistent_steps: c.consistent_steps,
                s_c: c.s_c,
            })
        })
        .collect::<Result<_, MetricsError>>()?;
    let n = rows.len() as f64;
    let group = |t: &usize| vocab.group_index(*t);
    let grouped_type_macc = models
        .iter()
        .map(|m| {
            let g: Vec<_> = m.gt_types.iter().map(group).collect();
            let p: Vec<_> = m.pred_types.iter().map(group).collect();
            g.iter().zip(&p).filter(|(a, b)| a == b).count() as f64 / g.len() as f64
        })
        .sum::<f64>()
        / n;
    let mut by_k: BTreeMap<usize, (usize, f64, f64)> = BTreeMap::new();
    for r in &rows {
        let e = by_k.entry(r.k_gt).or_default();
        e.0 += 1;
        e.1 += r.type_acc;
        e.2 += r.step_acc;
    }
    let consistent: usize = rows.iter().map(|r| r.consistent_steps).sum();
    let steps: usize = rows.iter().map(|r| r.k_pred).sum();
    Ok(EvalReport {
        type_macc: tm.macc,
        face_acc_pooled: tm.face_acc_pooled,
        type_miou: tm.miou,
        per_class_iou: tm.per_class_iou,
        grouped_type_macc,
        step_macc: rows.iter().map(|r| r.step_acc).sum::<f64>() / n,
        r_c: consistent as f64 / steps as f64,
        ms_c: rows.iter().map(|r| r.s_c).sum::<f64>() / n,
        counts: Counts { models: rows.len(), faces: rows.iter().map(|r| r.faces).sum() },
        by_step_count: by_k
            .into_iter()
            .map(|(k, (c, t, s))| StepCountRow { k, models: c, type_macc: t / c as f64, step_macc: s / c as f64 })
            .collect(),
        per_model: rows,
    })
}

/// `0.8765` → `"87.7"`.
pub fn percent(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

impl EvalReport {
    /// Per-model rows, percentages with one decimal.
    pub fn per_model_csv(&self) -> String {
        let mut s = String::from("model,faces,k_gt,k_pred,type_acc,step_acc,consistent_steps,s_c\n");
        for r in &self.per_model {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.model,
                r.faces,
                r.k_gt,
                r.k_pred,
                percent(r.type_acc),
                percent(r.step_acc),
                r.consistent_steps,
                percent(r.s_c)
            );
        }
        s
    }

    /// Accuracy against ground-truth step count.
    pub fn by_step_count_csv(&self) -> String {
        let mut s = String::from("k,models,type_macc,step_macc\n");
        for r in &self.by_step_count {
            let _ = writeln!(s, "{},{},{},{}", r.k, r.models, percent(r.type_macc), percent(r.step_macc));
        }
        s
    }

    /// Headline numbers as a small table.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "models            {}", self.counts.models);
        let _ = writeln!(s, "faces             {}", self.counts.faces);
        let _ = writeln!(s, "op.type  mAcc     {}", percent(self.type_macc));
        let _ = writeln!(s, "op.type  mIoU     {}", percent(self.type_miou));
        let _ = writeln!(s, "op.step  mAcc     {}", percent(self.step_macc));
        let _ = writeln!(s, "R_C               {}", percent(self.r_c));
        let _ = writeln!(s, "mS_C              {}", percent(self.ms_c));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> TypeVocabulary {
        TypeVocabulary::full()
    }

    fn me(gt_t: &[usize], gt_s: &[u64], p_t: &[usize], p_s: &[u64]) -> ModelEval {
        ModelEval {
            name: "m".into(),
            gt_types: gt_t.to_vec(),
            gt_steps: gt_s.to_vec(),
            pred_types: p_t.to_vec(),
            pred_steps: p_s.to_vec(),
        }
    }

    #[test]
    fn perfect_predictions_score_one() {
        let m = me(&[0, 1, 8], &[3, 3, 9], &[0, 1, 8], &[1, 1, 0]);
        let r = evaluate(&[m.clone(), m], &vocab()).unwrap();
        assert_eq!((r.type_macc, r.type_miou, r.step_macc), (1.0, 1.0, 1.0));
        assert_eq!((r.r_c, r.ms_c), (1.0, 1.0));
        assert_eq!(r.per_class_iou.iter().filter(|c| c.iou.is_some()).count(), 3);
    }

    #[test]
    fn macc_is_mean_of_model_accuracies() {
        let a = me(&[0, 0], &[0, 0], &[0, 0], &[0, 0]);
        let b = me(&[0, 0, 1, 1], &[0; 4], &[0, 0, 0, 0], &[0; 4]);
        let t = type_metrics(&[a, b], &vocab()).unwrap();
        assert_eq!(t.macc, 0.75);
        assert_eq!(t.face_acc_pooled, 4.0 / 6.0);
        // extrude_side: tp 4, fp 2; extrude_end: fn 2.
        assert_eq!(t.miou, (4.0 / 6.0 + 0.0) / 2.0);
    }

    #[test]
    fn single_model_macc_equals_pooled() {
        let m = me(&[0, 1, 2, 3], &[0; 4], &[0, 1, 3, 3], &[0; 4]);
        let t = type_metrics(&[m], &vocab()).unwrap();
        assert_eq!(t.macc, t.face_acc_pooled);
    }

    #[test]
    fn step_accuracy_examples() {
        assert_eq!(step_accuracy(&[0, 0, 1, 2], &[5, 5, 2, 0]).unwrap(), 1.0);
        assert_eq!(step_accuracy(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 1, 1]).unwrap(), 5.0 / 6.0);
        assert_eq!(step_accuracy(&[0, 0, 0, 1, 1, 1], &[0; 6]).unwrap(), 0.5);
    }

    #[test]
    fn grouping_examples() {
        let g = group_types(&["extrude_side", "fillet", "cut_revolve_end"], &vocab()).unwrap();
        assert_eq!(g, vec!["extrude", "fillet", "cut_revolve"]);
        assert_eq!(group_types(&["spline"], &vocab()), Err(MetricsError::UnknownLabel("spline".into())));
    }

    #[test]
    fn consistency_examples() {
        let c = consistency(&[0, 0, 1, 1], &["extrude", "extrude", "extrude", "fillet"]).unwrap();
        assert_eq!((c.consistent_steps, c.steps, c.s_c), (1, 2, 0.75));
        let c = consistency(&[0, 1, 2], &["a", "b", "a"]).unwrap();
        assert_eq!((c.consistent_steps, c.s_c), (3, 1.0));
        let c = consistency(&[4, 4, 4], &["a", "b", "b"]).unwrap();
        assert_eq!(c.consistent_steps, 0);
    }

    #[test]
    fn side_and_end_share_a_group() {
        // extrude_side and extrude_end within one step are consistent.
        let m = me(&[0, 1], &[0, 0], &[0, 1], &[0, 0]);
        assert_eq!(consistency_scores(&[m], &vocab()).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn metrics_ignore_step_relabeling() {
        let a = me(&[0, 1, 0, 4], &[0, 0, 1, 2], &[0, 0, 1, 4], &[2, 2, 0, 0]);
        let b = me(&[0, 1, 0, 4], &[7, 7, 3, 1], &[0, 0, 1, 4], &[9, 9, 4, 4]);
        let (ra, rb) = (evaluate(&[a], &vocab()).unwrap(), evaluate(&[b], &vocab()).unwrap());
        assert_eq!((ra.step_macc, ra.r_c, ra.ms_c), (rb.step_macc, rb.r_c, rb.ms_c));
    }

    #[test]
    fn csv_uses_one_decimal_percentages() {
        let m = me(&[0, 0, 1], &[0, 0, 0], &[0, 1, 1], &[0, 0, 0]);
        let r = evaluate(&[m], &vocab()).unwrap();
        let csv = r.per_model_csv();
        assert!(csv.lines().nth(1).unwrap().contains(",66.7,100.0,"), "{csv}");
        assert_eq!(percent(0.97449), "97.4");
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let m = me(&[0, 0], &[0], &[0, 0], &[0, 0]);
        assert!(matches!(evaluate(&[m], &vocab()), Err(MetricsError::Shape(_))));
        assert_eq!(evaluate(&[], &vocab()), Err(MetricsError::Empty));
    }
}
