//! Recovers 2D extrusion profiles from predicted side faces: estimate the
//! extrusion axis from the side normals, then project the face boundaries onto
//! the plane orthogonal to it.

pub mod svg;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::brep::geometry::face_area;
use crate::brep::{BRep, Curve, Surface};
use crate::features::{sample_uv_grid, FeatureError, DEFAULT_GRID_RESOLUTION};
use crate::geom::Vec3;
use crate::model::Prediction;

pub use svg::export_svg;

/// Points sampled along each curved edge.
pub const CURVE_SAMPLES: usize = 16;
/// Cross products shorter than this count as parallel normals.
pub const PARALLEL_EPS: f64 = 1e-8;
const MERGE_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SketchError {
    #[error("all normals are parallel; no extrusion axis")]
    DegenerateAxis,
    #[error("sketch has no segments")]
    EmptySketch,
    #[error("prediction does not match the model: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SketchStatus {
    Ok,
    Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisSource {
    Normals,
    SharedEdge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SketchOptions {
    /// Also group faces predicted `cut_extrude_side`.
    pub include_cuts: bool,
    /// Also project the faces' UV-grid samples.
    pub project_grid: bool,
    pub grid_resolution: usize,
}

impl Default for SketchOptions {
    fn default() -> Self {
        SketchOptions { include_cuts: false, project_grid: false, grid_resolution: DEFAULT_GRID_RESOLUTION }
    }
}

pub type Point2 = [f64; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sketch {
    pub step_id: usize,
    pub status: SketchStatus,
    pub axis: Option<Vec3>,
    pub axis_source: Option<AxisSource>,
    pub origin: Vec3,
    /// In-plane basis `(u, v)`.
    pub basis: Option<(Vec3, Vec3)>,
    pub segments: Vec<[Point2; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grid_points: Vec<Point2>,
    pub source_faces: Vec<usize>,
}

impl Sketch {
    /// Maps a 3D point into sketch coordinates.
    pub fn project(&self, p: Vec3) -> Option<Point2> {
        let (u, v) = self.basis?;
        let d = p - self.origin;
        Some([d.dot(u), d.dot(v)])
    }
}

/// Faces predicted as extrusion sides, keyed by predicted step.
pub fn group_extrude_sides(pred: &Prediction, include_cuts: bool) -> BTreeMap<usize, Vec<usize>> {
    let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for f in &pred.faces {
        if f.op_type == "extrude_side" || (include_cuts && f.op_type == "cut_extrude_side") {
            out.entry(f.op_step).or_default().push(f.id);
        }
    }
    for faces in out.values_mut() {
        faces.sort_unstable();
    }
    out
}

/// Normalized sum of the pairwise normalized cross products, each flipped to
/// agree with the first one so symmetric prisms do not cancel.
pub fn extrusion_axis(normals: &[Vec3]) -> Result<Vec3, SketchError> {
    let mut sum = Vec3::ZERO;
    let mut reference: Option<Vec3> = None;
    for i in 0..normals.len() {
        for j in i + 1..normals.len() {
            let c = normals[i].cross(normals[j]);
            let len = c.norm();
            if !(len > PARALLEL_EPS) {
                continue;
            }
            let c = c / len;
            let r = *reference.get_or_insert(c);
            sum += if c.dot(r) < 0.0 { -c } else { c };
        }
    }
    if reference.is_none() {
        return Err(SketchError::DegenerateAxis);
    }
    sum.normalized().ok_or(SketchError::DegenerateAxis)
}

/// Area-weighted centroid of the faces' UV-grid samples.
pub fn projection_origin(b: &BRep, faces: &[usize], r: usize) -> Result<Vec3, SketchError> {
    let mut acc = Vec3::ZERO;
    let mut total = 0.0;
    for &f in faces {
        let face = &b.faces[f];
        let grid = sample_uv_grid(face, r)?;
        let w = face_area(b, face) / grid.points.len() as f64;
        for &p in &grid.points {
            acc += p * w;
        }
        total += face_area(b, face);
    }
    if total > 0.0 {
        Ok(acc / total)
    } else {
        // Zero-area faces: fall back to the plain mean.
        let mut n = 0.0;
        let mut acc = Vec3::ZERO;
        for &f in faces {
            for p in sample_uv_grid(&b.faces[f], r)?.points {
                acc += p;
                n += 1.0;
            }
        }
        Ok(if n > 0.0 { acc / n } else { Vec3::ZERO })
    }
}

fn face_normal(b: &BRep, f: usize) -> Result<Vec3, SketchError> {
    let face = &b.faces[f];
    Ok(match face.surface.surface {
        Surface::Plane { normal, .. } => normal,
        _ => sample_uv_grid(face, 1)?.normals[0],
    })
}

/// Direction of the longest straight edge whose two sides both lie in `faces`.
fn shared_edge_axis(b: &BRep, faces: &[usize]) -> Option<Vec3> {
    let mut best: Option<(f64, Vec3)> = None;
    for e in &b.edges {
        let [c0, c1] = e.coedges;
        if !faces.contains(&b.coedges[c0].face) || !faces.contains(&b.coedges[c1].face) {
            continue;
        }
        if let Curve::Line { start, end } = e.curve {
            let len = start.distance(end);
            if len > PARALLEL_EPS && best.is_none_or(|(l, _)| len > l) {
                best = Some((len, (end - start) / len));
            }
        }
    }
    best.map(|(_, d)| d)
}

fn same_segment(a: &[Point2; 2], b: &[Point2; 2]) -> bool {
    let close = |p: Point2, q: Point2| (p[0] - q[0]).abs() <= MERGE_EPS && (p[1] - q[1]).abs() <= MERGE_EPS;
    (close(a[0], b[0]) && close(a[1], b[1])) || (close(a[0], b[1]) && close(a[1], b[0]))
}

/// One sketch for one group of side faces.
pub fn recover_group(b: &BRep, step_id: usize, faces: &[usize], opts: &SketchOptions) -> Result<Sketch, SketchError> {
    let normals: Vec<Vec3> = faces.iter().map(|&f| face_normal(b, f)).collect::<Result<_, _>>()?;
    let origin = projection_origin(b, faces, opts.grid_resolution)?;
    let (axis, source) = match extrusion_axis(&normals) {
        Ok(a) => (Some(a), Some(AxisSource::Normals)),
        Err(_) => match shared_edge_axis(b, faces) {
            Some(a) => (Some(a), Some(AxisSource::SharedEdge)),
            None => (None, None),
        },
    };
    let mut sketch = Sketch {
        step_id,
        status: SketchStatus::Degenerate,
        axis,
        axis_source: source,
        origin,
        basis: None,
        segments: Vec::new(),
        grid_points: Vec::new(),
        source_faces: faces.to_vec(),
    };
    let Some(axis) = axis else {
        return Ok(sketch);
    };
    sketch.basis = Some(axis.orthonormal_frame());
    sketch.status = SketchStatus::Ok;
    let mut edges: Vec<usize> =
        faces.iter().flat_map(|&f| b.faces[f].coedges().map(|c| b.coedges[c].edge)).collect();
    edges.sort_unstable();
    edges.dedup();
    for e in edges {
        let curve = &b.edges[e].curve;
        let pts = match curve {
            Curve::Line { start, end } => vec![*start, *end],
            _ => curve.samples(CURVE_SAMPLES),
        };
        let pts: Vec<Point2> = pts.iter().map(|&p| sketch.project(p).unwrap()).collect();
        for w in pts.windows(2) {
            let seg = [w[0], w[1]];
            // Edges running along the axis collapse to a point.
            if (seg[0][0] - seg[1][0]).hypot(seg[0][1] - seg[1][1]) <= MERGE_EPS {
                continue;
            }
            if !sketch.segments.iter().any(|s| same_segment(s, &seg)) {
                sketch.segments.push(seg);
            }
        }
    }
    if opts.project_grid {
        for &f in faces {
            for p in sample_uv_grid(&b.faces[f], opts.grid_resolution)?.points {
                sketch.grid_points.push(sketch.project(p).unwrap());
            }
        }
    }
    Ok(sketch)
}

/// Sketches for every predicted step with extrusion side faces, ascending by step.
pub fn recover_sketches(b: &BRep, pred: &Prediction, opts: &SketchOptions) -> Result<Vec<Sketch>, SketchError> {
    if pred.faces.len() != b.num_faces() || pred.faces.iter().any(|f| f.id >= b.num_faces()) {
        return Err(SketchError::Mismatch(format!(
            "{} predicted faces for {} faces",
            pred.faces.len(),
            b.num_faces()
        )));
    }
    group_extrude_sides(pred, opts.include_cuts)
        .iter()
        .map(|(&step, faces)| recover_group(b, step, faces, opts))
        .collect()
}

/// Distance from `p` to the segment `ab`.
pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}

/// Symmetric Hausdorff distance between two segment sets, evaluated on
/// `samples` points per segment (endpoints included).
pub fn hausdorff(a: &[[Point2; 2]], b: &[[Point2; 2]], samples: usize) -> f64 {
    let directed = |from: &[[Point2; 2]], to: &[[Point2; 2]]| {
        let mut worst: f64 = 0.0;
        for s in from {
            for i in 0..samples.max(2) {
                let t = i as f64 / (samples.max(2) - 1) as f64;
                let p = [s[0][0] + t * (s[1][0] - s[0][0]), s[0][1] + t * (s[1][1] - s[0][1])];
                let d = to.iter().map(|q| point_segment_distance(p, q[0], q[1])).fold(f64::INFINITY, f64::min);
                worst = worst.max(d);
            }
        }
        worst
    };
    directed(a, b).max(directed(b, a))
}

/// Closed polygon as segments.
pub fn polygon_segments(points: &[Point2]) -> Vec<[Point2; 2]> {
    (0..points.len()).map(|i| [points[i], points[(i + 1) % points.len()]]).collect()
}
