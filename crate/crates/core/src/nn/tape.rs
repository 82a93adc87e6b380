//! Reverse-mode differentiation over a fixed set of matrix operations.
//!
//! A [`Tape`] records every operation of one forward computation. Selection
//! decisions (ReLU masks and max-pool winners) are recorded as they are made and
//! can be replayed on a later tape, which freezes them while parameters are
//! perturbed for finite-difference checks.

use super::matrix::Matrix;
use super::params::{ModelParams, ParamId};
use super::NnError;

pub const LOG_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param(ParamId),
    Affine { x: Var, w: Var, b: Var },
    Relu { x: Var, mask: Vec<bool> },
    SoftmaxRows { x: Var },
    Gather { x: Var, rows: Vec<usize> },
    ConcatCols { parts: Vec<Var> },
    SegmentMax { x: Var, argmax: Vec<usize> },
    SegmentMean { x: Var, segments: Vec<Vec<usize>> },
    SegmentSum { x: Var, segments: Vec<Vec<usize>> },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, s: f64 },
    SumAll { x: Var },
    CrossEntropy { p: Var, targets: Vec<usize> },
    RiouLoss { p: Var, targets: Matrix },
}

#[derive(Clone, Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

/// Recorded selection decisions, in the order they were made.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Selections {
    relu_masks: Vec<Vec<bool>>,
    pool_argmax: Vec<Vec<usize>>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    recorded: Selections,
    replay: Option<(Selections, usize, usize)>,
}

/// Gradients of a scalar with respect to every node of a tape.
#[derive(Debug)]
pub struct Gradients {
    per_var: Vec<Option<Matrix>>,
    params: Vec<(ParamId, Matrix)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.per_var.get(v.0).and_then(Option::as_ref)
    }

    /// Parameter gradients sorted by parameter id, summed over every use.
    pub fn params(&self) -> &[(ParamId, Matrix)] {
        &self.params
    }

    pub fn into_params(self) -> Vec<(ParamId, Matrix)> {
        self.params
    }
}

fn shape_err(msg: String) -> NnError {
    NnError::Shape(msg)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape that reuses the selection decisions of an earlier forward pass.
    pub fn replaying(selections: Selections) -> Self {
        Tape { replay: Some((selections, 0, 0)), ..Self::default() }
    }

    pub fn selections(&self) -> &Selections {
        &self.recorded
    }

    pub fn into_selections(self) -> Selections {
        self.recorded
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, v: Var) -> Result<&Matrix, NnError> {
        self.nodes
            .get(v.0)
            .map(|n| &n.value)
            .ok_or_else(|| NnError::Graph(format!("variable {} is not on this tape", v.0)))
    }

    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, params: &ModelParams, id: ParamId) -> Var {
        self.push(params.get(id).value.clone(), Op::Param(id))
    }

    /// `x · w + b` with `b` a `1 × n` row broadcast over the rows of `x`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
        let out = super::affine(self.check(w)?, b_row(self.check(b)?)?, self.check(x)?)?;
        Ok(self.push(out, Op::Affine { x, w, b }))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, NnError> {
        self.check(x)?;
        let xv = &self.nodes[x.0].value;
        let mask: Vec<bool> = match &mut self.replay {
            Some((sel, cursor, _)) => {
                let m = sel
                    .relu_masks
                    .get(*cursor)
                    .cloned()
                    .ok_or_else(|| NnError::Graph("replayed tape has no more ReLU masks".into()))?;
                *cursor += 1;
                if m.len() != xv.len() {
                    return Err(NnError::Graph("replayed ReLU mask has the wrong size".into()));
                }
                m
            }
            None => xv.data().iter().map(|&a| a > 0.0).collect(),
        };
        let mut out = xv.clone();
        for (o, &on) in out.data_mut().iter_mut().zip(&mask) {
            if !on {
                *o = 0.0;
            }
        }
        self.recorded.relu_masks.push(mask.clone());
        Ok(self.push(out, Op::Relu { x, mask }))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var, NnError> {
        let out = super::softmax_rows(self.check(x)?);
        Ok(self.push(out, Op::SoftmaxRows { x }))
    }

    /// Rows `x[rows[0]], x[rows[1]], …`.
    pub fn gather(&mut self, x: Var, rows: Vec<usize>) -> Result<Var, NnError> {
        let xv = self.check(x)?;
        let cols = xv.cols();
        let mut out = Matrix::zeros(rows.len(), cols);
        for (k, &r) in rows.iter().enumerate() {
            if r >= xv.rows() {
                return Err(shape_err(format!("gather row {r} out of {}", xv.rows())));
            }
            out.row_mut(k).copy_from_slice(xv.row(r));
        }
        Ok(self.push(out, Op::Gather { x, rows }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let first = self.check(*parts.first().ok_or_else(|| shape_err("empty concatenation".into()))?)?;
        let rows = first.rows();
        let mut total = 0;
        for &p in parts {
            let v = self.check(p)?;
            if v.rows() != rows {
                return Err(shape_err(format!("concat rows {} vs {rows}", v.rows())));
            }
            total += v.cols();
        }
        let mut out = Matrix::zeros(rows, total);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let v = &self.nodes[p.0].value;
                out.row_mut(r)[off..off + v.cols()].copy_from_slice(v.row(r));
                off += v.cols();
            }
        }
        Ok(self.push(out, Op::ConcatCols { parts: parts.to_vec() }))
    }

    /// Column-wise maximum over each segment of rows. Ties go to the first row listed.
    pub fn segment_max(&mut self, x: Var, segments: &[Vec<usize>]) -> Result<Var, NnError> {
        self.check(x)?;
        let xv = &self.nodes[x.0].value;
        let cols = xv.cols();
        check_segments(segments, xv.rows())?;
        let argmax: Vec<usize> = match &mut self.replay {
            Some((sel, _, cursor)) => {
                let a = sel
                    .pool_argmax
                    .get(*cursor)
                    .cloned()
                    .ok_or_else(|| NnError::Graph("replayed tape has no more pooling decisions".into()))?;
                *cursor += 1;
                if a.len() != segments.len() * cols {
                    return Err(NnError::Graph("replayed pooling decision has the wrong size".into()));
                }
                a
            }
            None => {
                let mut a = Vec::with_capacity(segments.len() * cols);
                for seg in segments {
                    for c in 0..cols {
                        let mut best = seg[0];
                        for &r in &seg[1..] {
                            if xv.get(r, c) > xv.get(best, c) {
                                best = r;
                            }
                        }
                        a.push(best);
                    }
                }
                a
            }
        };
        let mut out = Matrix::zeros(segments.len(), cols);
        for s in 0..segments.len() {
            for c in 0..cols {
                out.set(s, c, xv.get(argmax[s * cols + c], c));
            }
        }
        self.recorded.pool_argmax.push(argmax.clone());
        Ok(self.push(out, Op::SegmentMax { x, argmax }))
    }

    pub fn segment_mean(&mut self, x: Var, segments: &[Vec<usize>]) -> Result<Var, NnError> {
        let out = segment_reduce(self.check(x)?, segments, true)?;
        Ok(self.push(out, Op::SegmentMean { x, segments: segments.to_vec() }))
    }

    pub fn segment_sum(&mut self, x: Var, segments: &[Vec<usize>]) -> Result<Var, NnError> {
        let out = segment_reduce(self.check(x)?, segments, false)?;
        Ok(self.push(out, Op::SegmentSum { x, segments: segments.to_vec() }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (av, bv) = (self.check(a)?, self.check(b)?);
        if av.shape() != bv.shape() {
            return Err(shape_err(format!("add {:?} vs {:?}", av.shape(), bv.shape())));
        }
        let mut out = av.clone();
        out.add_assign(bv);
        Ok(self.push(out, Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (av, bv) = (self.check(a)?, self.check(b)?);
        if av.shape() != bv.shape() {
            return Err(shape_err(format!("mul {:?} vs {:?}", av.shape(), bv.shape())));
        }
        let mut out = av.clone();
        for (o, &y) in out.data_mut().iter_mut().zip(bv.data()) {
            *o *= y;
        }
        Ok(self.push(out, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var, NnError> {
        let mut out = self.check(x)?.clone();
        out.scale(s);
        Ok(self.push(out, Op::Scale { x, s }))
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var, NnError> {
        let s = self.check(x)?.sum();
        Ok(self.push(Matrix::scalar(s), Op::SumAll { x }))
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var, NnError> {
        let n = self.check(x)?.len().max(1) as f64;
        let s = self.sum_all(x)?;
        self.scale(s, 1.0 / n)
    }

    /// Mean over rows of `-ln(max(p[j, targets[j]], ε))`.
    pub fn cross_entropy(&mut self, p: Var, targets: Vec<usize>) -> Result<Var, NnError> {
        let pv = self.check(p)?;
        if targets.len() != pv.rows() || pv.rows() == 0 {
            return Err(shape_err(format!("{} targets for {} rows", targets.len(), pv.rows())));
        }
        let mut total = 0.0;
        for (j, &t) in targets.iter().enumerate() {
            if t >= pv.cols() {
                return Err(shape_err(format!("target class {t} out of {}", pv.cols())));
            }
            total -= pv.get(j, t).max(LOG_EPS).ln();
        }
        let v = total / targets.len() as f64;
        Ok(self.push(Matrix::scalar(v), Op::CrossEntropy { p, targets }))
    }

    /// Mean over rows of `1 - RIoU(targets[j], p[j])`.
    pub fn riou_loss(&mut self, p: Var, targets: Matrix) -> Result<Var, NnError> {
        let pv = self.check(p)?;
        if targets.shape() != pv.shape() || pv.rows() == 0 {
            return Err(shape_err(format!("riou targets {:?} vs {:?}", targets.shape(), pv.shape())));
        }
        let mut total = 0.0;
        for j in 0..pv.rows() {
            total += 1.0 - super::riou(targets.row(j), pv.row(j))?;
        }
        let v = total / pv.rows() as f64;
        Ok(self.push(Matrix::scalar(v), Op::RiouLoss { p, targets }))
    }

    /// Reverse pass from the scalar `loss`.
    pub fn gradients(&self, loss: Var) -> Result<Gradients, NnError> {
        let lv = self.check(loss)?;
        if lv.shape() != (1, 1) {
            return Err(NnError::Graph(format!("loss must be 1x1, got {:?}", lv.shape())));
        }
        let mut g: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        g[loss.0] = Some(Matrix::scalar(1.0));

        fn acc(g: &mut [Option<Matrix>], v: Var, d: Matrix) {
            match &mut g[v.0] {
                Some(m) => m.add_assign(&d),
                slot => *slot = Some(d),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(dy) = g[i].clone() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input | Op::Param(_) => {}
                Op::Affine { x, w, b } => {
                    let xv = &self.nodes[x.0].value;
                    let wv = &self.nodes[w.0].value;
                    acc(&mut g, *x, dy.matmul_t(wv));
                    acc(&mut g, *w, xv.t_matmul(&dy));
                    let mut db = Matrix::zeros(1, dy.cols());
                    for r in 0..dy.rows() {
                        for (d, &v) in db.data_mut().iter_mut().zip(dy.row(r)) {
                            *d += v;
                        }
                    }
                    let bshape = self.nodes[b.0].value.shape();
                    acc(&mut g, *b, Matrix::from_vec(bshape.0, bshape.1, db.into_data()).unwrap());
                }
                Op::Relu { x, mask } => {
                    let mut dx = dy;
                    for (d, &on) in dx.data_mut().iter_mut().zip(mask) {
                        if !on {
                            *d = 0.0;
                        }
                    }
                    acc(&mut g, *x, dx);
                }
                Op::SoftmaxRows { x } => {
                    let y = &node.value;
                    let mut dx = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, dr) = (y.row(r), dy.row(r));
                        let dot: f64 = yr.iter().zip(dr).map(|(a, b)| a * b).sum();
                        for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
                            *o = yr[c] * (dr[c] - dot);
                        }
                    }
                    acc(&mut g, *x, dx);
                }
                Op::Gather { x, rows } => {
                    let xs = self.nodes[x.0].value.shape();
                    let mut dx = Matrix::zeros(xs.0, xs.1);
                    for (k, &r) in rows.iter().enumerate() {
                        for (d, &v) in dx.row_mut(r).iter_mut().zip(dy.row(k)) {
                            *d += v;
                        }
                    }
                    acc(&mut g, *x, dx);
                }
                Op::ConcatCols { parts } => {
                    let mut off = 0;
                    for p in parts {
                        let cols = self.nodes[p.0].value.cols();
                        let mut dp = Matrix::zeros(dy.rows(), cols);
                        for r in 0..dy.rows() {
                            dp.row_mut(r).copy_from_slice(&dy.row(r)[off..off + cols]);
                        }
                        off += cols;
                        acc(&mut g, *p, dp);
                    }
                }
                Op::SegmentMax { x, argmax } => {
                    let xs = self.nodes[x.0].value.shape();
                    let cols = xs.1;
                    let mut dx = Matrix::zeros(xs.0, xs.1);
                    for s in 0..dy.rows() {
                        for c in 0..cols {
                            let r = argmax[s * cols + c];
                            dx.set(r, c, dx.get(r, c) + dy.get(s, c));
                        }
                    }
                    acc(&mut g, *x, dx);
                }
                Op::SegmentMean { x, segments } | Op::SegmentSum { x, segments } => {
                    let mean = matches!(node.op, Op::SegmentMean { .. });
                    let xs = self.nodes[x.0].value.shape();
                    let mut dx = Matrix::zeros(xs.0, xs.1);
                    for (s, seg) in segments.iter().enumerate() {
                        let w = if mean { 1.0 / seg.len() as f64 } else { 1.0 };
                        for &r in seg {
                            for (d, &v) in dx.row_mut(r).iter_mut().zip(dy.row(s)) {
                                *d += w * v;
                            }
                        }
                    }
                    acc(&mut g, *x, dx);
                }
                Op::Add { a, b } => {
                    acc(&mut g, *a, dy.clone());
                    acc(&mut g, *b, dy);
                }
                Op::Mul { a, b } => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let mut da = dy.clone();
                    for (d, &y) in da.data_mut().iter_mut().zip(bv.data()) {
                        *d *= y;
                    }
                    let mut db = dy;
                    for (d, &y) in db.data_mut().iter_mut().zip(av.data()) {
                        *d *= y;
                    }
                    acc(&mut g, *a, da);
                    acc(&mut g, *b, db);
                }
                Op::Scale { x, s } => {
                    let mut dx = dy;
                    dx.scale(*s);
                    acc(&mut g, *x, dx);
                }
                Op::SumAll { x } => {
                    let xs = self.nodes[x.0].value.shape();
                    acc(&mut g, *x, Matrix::filled(xs.0, xs.1, dy.item()));
                }
                Op::CrossEntropy { p, targets } => {
                    let pv = &self.nodes[p.0].value;
                    let n = targets.len() as f64;
                    let mut dp = Matrix::zeros(pv.rows(), pv.cols());
                    for (j, &t) in targets.iter().enumerate() {
                        let q = pv.get(j, t);
                        if q > LOG_EPS {
                            dp.set(j, t, -dy.item() / (n * q));
                        }
                    }
                    acc(&mut g, *p, dp);
                }
                Op::RiouLoss { p, targets } => {
                    let pv = &self.nodes[p.0].value;
                    let n = pv.rows() as f64;
                    let mut dp = Matrix::zeros(pv.rows(), pv.cols());
                    for j in 0..pv.rows() {
                        let (s, q) = (targets.row(j), pv.row(j));
                        let inter: f64 = s.iter().zip(q).map(|(a, b)| a * b).sum();
                        let ns: f64 = s.iter().map(|a| a.abs()).sum();
                        let nq: f64 = q.iter().map(|a| a.abs()).sum();
                        let d = ns + nq - inter;
                        for (k, o) in dp.row_mut(j).iter_mut().enumerate() {
                            let sign = if q[k] > 0.0 {
                                1.0
                            } else if q[k] < 0.0 {
                                -1.0
                            } else {
                                0.0
                            };
                            let dr = (s[k] * d - inter * (sign - s[k])) / (d * d);
                            *o = -dy.item() * dr / n;
                        }
                    }
                    acc(&mut g, *p, dp);
                }
            }
        }

        let mut params: Vec<(ParamId, Matrix)> = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(d)) = (&node.op, &g[i]) {
                match params.iter_mut().find(|(p, _)| p == id) {
                    Some((_, m)) => m.add_assign(d),
                    None => params.push((*id, d.clone())),
                }
            }
        }
        params.sort_by_key(|(id, _)| *id);
        Ok(Gradients { per_var: g, params })
    }
}

fn b_row(b: &Matrix) -> Result<&Matrix, NnError> {
    if b.rows() != 1 {
        return Err(shape_err(format!("bias must be a row vector, got {:?}", b.shape())));
    }
    Ok(b)
}

fn check_segments(segments: &[Vec<usize>], rows: usize) -> Result<(), NnError> {
    for (s, seg) in segments.iter().enumerate() {
        if seg.is_empty() {
            return Err(shape_err(format!("segment {s} is empty")));
        }
        if let Some(&r) = seg.iter().find(|&&r| r >= rows) {
            return Err(shape_err(format!("segment row {r} out of {rows}")));
        }
    }
    Ok(())
}

fn segment_reduce(x: &Matrix, segments: &[Vec<usize>], mean: bool) -> Result<Matrix, NnError> {
    check_segments(segments, x.rows())?;
    let mut out = Matrix::zeros(segments.len(), x.cols());
    for (s, seg) in segments.iter().enumerate() {
        let w = if mean { 1.0 / seg.len() as f64 } else { 1.0 };
        for &r in seg {
            for (o, &v) in out.row_mut(s).iter_mut().zip(x.row(r)) {
                *o += w * v;
            }
        }
    }
    Ok(out)
}
