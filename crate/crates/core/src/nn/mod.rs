//! Dense numerical substrate: matrices, a small reverse-mode tape, Adam and
//! checkpoints.

pub mod adam;
pub mod gradcheck;
pub mod matrix;
pub mod params;
pub mod tape;

pub use adam::{AdamConfig, AdamState};
pub use matrix::Matrix;
pub use params::{load_params, save_params, Checkpoint, ModelParams, Param, ParamId};
pub use tape::{Gradients, Selections, Tape, Var, LOG_EPS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("graph error: {0}")]
    Graph(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("version error: {0}")]
    Version(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

/// Parameter handles of one affine layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    /// Registers `{name}.w` (Glorot uniform) and `{name}.b` (zeros).
    pub fn new(
        p: &mut ModelParams,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut crate::rng::SplitMix64,
    ) -> Result<Self, NnError> {
        let w = p.add_glorot(&format!("{name}.w"), fan_in, fan_out, rng)?;
        let b = p.add_zeros(&format!("{name}.b"), 1, fan_out)?;
        Ok(Linear { w, b })
    }

    pub fn apply(self, t: &mut Tape, p: &ModelParams, x: Var) -> Result<Var, NnError> {
        let w = t.param(p, self.w);
        let b = t.param(p, self.b);
        t.affine(x, w, b)
    }
}

/// `X · W + b`, with `b` a bias of length `n` broadcast over rows.
pub fn affine(w: &Matrix, b: &Matrix, x: &Matrix) -> Result<Matrix, NnError> {
    if x.cols() != w.rows() || b.len() != w.cols() {
        return Err(NnError::Shape(format!(
            "affine: X {:?}, W {:?}, b {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let mut out = x.matmul(w);
    for r in 0..out.rows() {
        for (o, &bv) in out.row_mut(r).iter_mut().zip(b.data()) {
            *o += bv;
        }
    }
    Ok(out)
}

pub fn relu(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for v in out.data_mut() {
        if !(*v > 0.0) {
            *v = 0.0;
        }
    }
    out
}

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    out
}

/// `-Σ t_i ln(max(p_i, ε))`.
pub fn cross_entropy_row(p: &[f64], t: &[f64]) -> Result<f64, NnError> {
    if p.len() != t.len() {
        return Err(NnError::Shape(format!("cross entropy: {} probabilities vs {} targets", p.len(), t.len())));
    }
    Ok(-p.iter().zip(t).map(|(&pi, &ti)| if ti == 0.0 { 0.0 } else { ti * pi.max(LOG_EPS).ln() }).sum::<f64>())
}

/// Relaxed IoU `sᵀŝ / (‖s‖₁ + ‖ŝ‖₁ − sᵀŝ)`.
pub fn riou(s: &[f64], p: &[f64]) -> Result<f64, NnError> {
    if s.len() != p.len() {
        return Err(NnError::Shape(format!("riou: {} vs {}", s.len(), p.len())));
    }
    let inter: f64 = s.iter().zip(p).map(|(a, b)| a * b).sum();
    let l1 = |v: &[f64]| v.iter().map(|a| a.abs()).sum::<f64>();
    let denom = l1(s) + l1(p) - inter;
    if !(denom > 0.0) {
        return Err(NnError::DegenerateInput("both vectors are zero".into()));
    }
    Ok(inter / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn softmax_examples() {
        let m = Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert_eq!(softmax_rows(&m).data(), &[0.5, 0.5]);
        let m = Matrix::from_rows(&[vec![1000.0, 1000.0]]).unwrap();
        assert_eq!(softmax_rows(&m).data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = SplitMix64::new(11);
        for _ in 0..200 {
            let (r, c) = (1 + rng.below(6) as usize, 1 + rng.below(9) as usize);
            let data = (0..r * c).map(|_| rng.uniform(-50.0, 50.0)).collect();
            let s = softmax_rows(&Matrix::from_vec(r, c, data).unwrap());
            for i in 0..r {
                assert!(close(s.row(i).iter().sum(), 1.0, 1e-12));
                assert!(s.row(i).iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn affine_identity() {
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.5], vec![0.0, 4.0, -1.0]]).unwrap();
        let y = affine(&Matrix::identity(3), &Matrix::zeros(1, 3), &x).unwrap();
        assert_eq!(y, x);
        assert!(matches!(affine(&Matrix::identity(2), &Matrix::zeros(1, 2), &x), Err(NnError::Shape(_))));
    }

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(cross_entropy_row(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!(close(cross_entropy_row(&[0.5, 0.5], &[0.0, 1.0]).unwrap(), std::f64::consts::LN_2, 1e-12));
        assert!(close(cross_entropy_row(&[0.9, 0.1], &[0.0, 1.0]).unwrap(), 2.302585092994046, 1e-12));
        assert!(cross_entropy_row(&[0.0, 1.0], &[1.0, 0.0]).unwrap() > 27.0);
        assert!(matches!(cross_entropy_row(&[1.0], &[1.0, 0.0]), Err(NnError::Shape(_))));
    }

    #[test]
    fn riou_examples() {
        assert_eq!(riou(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(riou(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        // 0.5 / (1 + 1 - 0.5)
        assert!(close(riou(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), 1.0 / 3.0, 1e-15));
        assert!(matches!(riou(&[0.0, 0.0], &[0.0, 0.0]), Err(NnError::DegenerateInput(_))));
    }
}
