//! Step and type heads, step alignment and the training losses.

pub mod hungarian;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use hungarian::{hungarian, Assignment};

use crate::nn::{riou, Linear, Matrix, ModelParams, NnError, Tape, Var};

/// How the type head sees the step prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Avg,
    Max,
    SumSoftmax,
    SoftLabels,
    None,
}

impl Aggregation {
    pub const ALL: [Aggregation; 5] =
        [Aggregation::Avg, Aggregation::Max, Aggregation::SumSoftmax, Aggregation::SoftLabels, Aggregation::None];

    pub fn name(self) -> &'static str {
        match self {
            Aggregation::Avg => "avg",
            Aggregation::Max => "max",
            Aggregation::SumSoftmax => "sum_softmax",
            Aggregation::SoftLabels => "soft_labels",
            Aggregation::None => "none",
        }
    }

    /// Input width of the type head.
    pub fn type_input_width(self, d_emb: usize, k_s: usize) -> usize {
        match self {
            Aggregation::Avg | Aggregation::Max | Aggregation::SumSoftmax => 2 * d_emb,
            Aggregation::SoftLabels => d_emb + k_s,
            Aggregation::None => d_emb,
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Aggregation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown aggregation `{s}` (expected avg, max, sum_softmax, soft_labels or none)"))
    }
}

/// Index of the largest entry of each row; ties go to the lowest index.
pub fn row_argmax(m: &Matrix) -> Vec<usize> {
    (0..m.rows())
        .map(|r| {
            let row = m.row(r);
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// `N × k` one-hot rows.
pub fn one_hot(labels: &[usize], k: usize) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), k);
    for (j, &l) in labels.iter().enumerate() {
        m.set(j, l, 1.0);
    }
    m
}

fn column(m: &Matrix, c: usize) -> Vec<f64> {
    (0..m.rows()).map(|r| m.get(r, c)).collect()
}

/// Matches ground-truth steps `0..k` (dense labels per face) to predicted columns
/// by minimizing `1 − RIoU` between membership columns.
pub fn align_steps(gt: &[usize], s_hat: &Matrix) -> Result<Assignment, NnError> {
    if gt.len() != s_hat.rows() {
        return Err(NnError::Shape(format!("{} labels for {} prediction rows", gt.len(), s_hat.rows())));
    }
    let k = gt.iter().max().map_or(0, |&m| m + 1);
    let s = one_hot(gt, k);
    let pred_cols: Vec<Vec<f64>> = (0..s_hat.cols()).map(|b| column(s_hat, b)).collect();
    let mut cost = Matrix::zeros(k, s_hat.cols());
    for a in 0..k {
        let sa = column(&s, a);
        if sa.iter().all(|&x| x == 0.0) {
            return Err(NnError::Shape(format!("step {a} has no faces; labels must be dense")));
        }
        for (b, col) in pred_cols.iter().enumerate() {
            cost.set(a, b, 1.0 - riou(&sa, col)?);
        }
    }
    hungarian(&cost)
}

/// Targets with face `j` assigned to predicted column `perm[gt[j]]`.
pub fn aligned_targets(gt: &[usize], perm: &[usize], k_s: usize) -> Matrix {
    let cols: Vec<usize> = gt.iter().map(|&g| perm[g]).collect();
    one_hot(&cols, k_s)
}

/// Step loss computed directly from matrices.
pub fn step_loss_value(gt: &[usize], s_hat: &Matrix) -> Result<f64, NnError> {
    let a = align_steps(gt, s_hat)?;
    let s = aligned_targets(gt, &a.perm, s_hat.cols());
    let mut total = 0.0;
    for j in 0..s_hat.rows() {
        total += 1.0 - riou(s.row(j), s_hat.row(j))?;
    }
    Ok(total / s_hat.rows() as f64)
}

/// Step loss on the tape. The permutation is a constant of the graph; pass the
/// one from an earlier evaluation to keep it fixed.
pub fn step_loss(t: &mut Tape, s_hat: Var, gt: &[usize], frozen: Option<&[usize]>) -> Result<(Var, Vec<usize>), NnError> {
    let perm = match frozen {
        Some(p) => p.to_vec(),
        None => align_steps(gt, t.value(s_hat))?.perm,
    };
    let targets = aligned_targets(gt, &perm, t.value(s_hat).cols());
    Ok((t.riou_loss(s_hat, targets)?, perm))
}

/// Mean cross-entropy of the type prediction.
pub fn type_loss(t: &mut Tape, t_hat: Var, gt: &[usize]) -> Result<Var, NnError> {
    t.cross_entropy(t_hat, gt.to_vec())
}

/// `softmax(F · W + b)`.
pub fn step_head(t: &mut Tape, p: &ModelParams, head: Linear, f_delta: Var) -> Result<Var, NnError> {
    let z = head.apply(t, p, f_delta)?;
    t.softmax_rows(z)
}

/// Faces grouped by predicted step, steps ascending, plus each face's group index.
pub fn step_segments(membership: &[usize]) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut steps: Vec<usize> = membership.to_vec();
    steps.sort_unstable();
    steps.dedup();
    let mut segments = vec![Vec::new(); steps.len()];
    let mut of_face = Vec::with_capacity(membership.len());
    for (j, m) in membership.iter().enumerate() {
        let s = steps.binary_search(m).unwrap();
        segments[s].push(j);
        of_face.push(s);
    }
    (segments, of_face)
}

/// Per-face embedding of its predicted step (`avg`, `max`, `sum_softmax`), or
/// `None` for modes that do not aggregate. Membership carries no gradient.
pub fn aggregate_step_embeddings(
    t: &mut Tape,
    f_delta: Var,
    membership: &[usize],
    mode: Aggregation,
) -> Result<Option<Var>, NnError> {
    if membership.len() != t.value(f_delta).rows() {
        return Err(NnError::Shape(format!("{} memberships for {} faces", membership.len(), t.value(f_delta).rows())));
    }
    let (segments, of_face) = step_segments(membership);
    let pooled = match mode {
        Aggregation::Avg => t.segment_mean(f_delta, &segments)?,
        Aggregation::Max => t.segment_max(f_delta, &segments)?,
        Aggregation::SumSoftmax => {
            let s = t.segment_sum(f_delta, &segments)?;
            t.softmax_rows(s)?
        }
        Aggregation::SoftLabels | Aggregation::None => return Ok(None),
    };
    Ok(Some(t.gather(pooled, of_face)?))
}

/// `softmax(affine(F ⊕ X))` where `X` depends on the aggregation mode.
pub fn type_head(
    t: &mut Tape,
    p: &ModelParams,
    head: Linear,
    f_delta: Var,
    s_hat: Var,
    membership: &[usize],
    mode: Aggregation,
) -> Result<Var, NnError> {
    let input = match mode {
        Aggregation::None => f_delta,
        Aggregation::SoftLabels => t.concat_cols(&[f_delta, s_hat])?,
        _ => {
            let agg = aggregate_step_embeddings(t, f_delta, membership, mode)?.expect("aggregating mode");
            t.concat_cols(&[f_delta, agg])?
        }
    };
    let z = head.apply(t, p, input)?;
    t.softmax_rows(z)
}
