//! Input feature matrices for faces, edges and coedges.
//!
//! Face rows are `[surface one-hot (6) | area | grid points (3r²) | grid normals (3r²)]`,
//! grid entries in row-major `(u, v)` order. Edge rows are
//! `[curve one-hot (3) | convexity one-hot (3) | closed | length | 5 samples (15)]`
//! and coedge rows hold the single `reversed` flag.

use serde_json::{json, Value};
use thiserror::Error;

use crate::brep::geometry::{face_area, GeometryError, Similarity};
use crate::brep::{BRep, Face, SurfaceKind};
use crate::geom::Vec3;
use crate::nn::Matrix;

pub const DEFAULT_GRID_RESOLUTION: usize = 5;
pub const EDGE_SAMPLES: usize = 5;
pub const EDGE_DIM: usize = 3 + 3 + 1 + 1 + 3 * EDGE_SAMPLES;
pub const COEDGE_DIM: usize = 1;

pub fn face_dim(r: usize) -> usize {
    SurfaceKind::ALL.len() + 1 + 6 * r * r
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("model has a degenerate bounding box (max extent {0})")]
    DegenerateModel(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("grid resolution must be at least 1")]
    BadResolution,
}

/// Translates and scales `b` so its bounding box is centered at the origin with
/// maximum extent 2. Returns the normalized model, the scale divided out and the
/// original center.
pub fn normalize_model(b: &BRep) -> Result<(BRep, f64, Vec3), FeatureError> {
    let bb = b.geometry_bbox();
    let extent = if bb.is_empty() { 0.0 } else { bb.max_extent() };
    if !(extent > 1e-12) || !extent.is_finite() {
        return Err(FeatureError::DegenerateModel(extent));
    }
    let scale = extent / 2.0;
    let center = bb.center();
    let t = Similarity::scale_translate(1.0 / scale, -center / scale);
    let mut out = b.transformed(&t)?;
    out.scale_info = b.scale_info;
    Ok((out, scale, center))
}

#[derive(Clone, Debug, PartialEq)]
pub struct UvGrid {
    pub resolution: usize,
    /// `r × r` points, index `i·r + j` for the i-th u step and j-th v step.
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
}

fn steps(lo: f64, hi: f64, r: usize) -> Vec<f64> {
    if r == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..r).map(|i| lo + (hi - lo) * i as f64 / (r - 1) as f64).collect()
}

/// Samples the face surface on a uniform grid over its uv domain, endpoints included.
pub fn sample_uv_grid(face: &Face, r: usize) -> Result<UvGrid, FeatureError> {
    if r == 0 {
        return Err(FeatureError::BadResolution);
    }
    let [u0, u1, v0, v1] = face.surface.uv_domain;
    let (us, vs) = (steps(u0, u1, r), steps(v0, v1, r));
    let mut points = Vec::with_capacity(r * r);
    let mut normals = Vec::with_capacity(r * r);
    for &u in &us {
        for &v in &vs {
            let (p, n) = face
                .surface
                .surface
                .eval(u, v)
                .ok_or(GeometryError::UnsupportedSurface(face.surface.surface.kind().name(), face.id))?;
            points.push(p);
            normals.push(n);
        }
    }
    Ok(UvGrid { resolution: r, points, normals })
}

pub fn face_feature_row(b: &BRep, face: usize, r: usize) -> Result<Vec<f64>, FeatureError> {
    let f = &b.faces[face];
    let mut row = vec![0.0; face_dim(r)];
    row[f.surface.surface.kind().index()] = 1.0;
    row[6] = face_area(b, f);
    let grid = sample_uv_grid(f, r)?;
    let n = r * r;
    for (k, (p, q)) in grid.points.iter().zip(&grid.normals).enumerate() {
        row[7 + 3 * k..10 + 3 * k].copy_from_slice(&p.to_array());
        row[7 + 3 * (n + k)..10 + 3 * (n + k)].copy_from_slice(&q.to_array());
    }
    Ok(row)
}

pub fn edge_feature_row(b: &BRep, edge: usize) -> Vec<f64> {
    let e = &b.edges[edge];
    let mut row = vec![0.0; EDGE_DIM];
    row[e.curve.kind().index()] = 1.0;
    row[3 + e.convexity.index()] = 1.0;
    row[6] = if e.closed { 1.0 } else { 0.0 };
    row[7] = e.curve.length();
    for (k, p) in e.curve.samples(EDGE_SAMPLES).iter().enumerate() {
        row[8 + 3 * k..11 + 3 * k].copy_from_slice(&p.to_array());
    }
    row
}

pub fn coedge_feature_row(b: &BRep, coedge: usize) -> Vec<f64> {
    vec![if b.coedges[coedge].reversed { 1.0 } else { 0.0 }]
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrices {
    pub f: Matrix,
    pub e: Matrix,
    pub c: Matrix,
    pub grid_resolution: usize,
}

impl FeatureMatrices {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.f.cols(), self.e.cols(), self.c.cols())
    }

    /// `{F, E, C, dims}` as nested arrays.
    pub fn to_json(&self) -> Value {
        let (df, de, dc) = self.dims();
        json!({
            "F": self.f.to_rows(),
            "E": self.e.to_rows(),
            "C": self.c.to_rows(),
            "dims": {"d_f": df, "d_e": de, "d_c": dc, "grid_resolution": self.grid_resolution},
        })
    }
}

/// Feature rows of an already normalized model, ordered by entity id.
pub fn build_feature_matrices(b: &BRep, r: usize) -> Result<FeatureMatrices, FeatureError> {
    let mut f = Vec::with_capacity(b.num_faces() * face_dim(r));
    for i in 0..b.num_faces() {
        f.extend(face_feature_row(b, i, r)?);
    }
    let e: Vec<f64> = (0..b.num_edges()).flat_map(|i| edge_feature_row(b, i)).collect();
    let c: Vec<f64> = (0..b.num_coedges()).flat_map(|i| coedge_feature_row(b, i)).collect();
    let mat = |rows, cols, data| Matrix::from_vec(rows, cols, data).expect("row widths are fixed");
    Ok(FeatureMatrices {
        f: mat(b.num_faces(), face_dim(r), f),
        e: mat(b.num_edges(), EDGE_DIM, e),
        c: mat(b.num_coedges(), COEDGE_DIM, c),
        grid_resolution: r,
    })
}

/// Normalizes `b` and builds its feature matrices.
pub fn featurize(b: &BRep, r: usize) -> Result<FeatureMatrices, FeatureError> {
    let (n, _, _) = normalize_model(b)?;
    build_feature_matrices(&n, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brep::builder::box_solid;
    use crate::brep::{Surface, SurfaceGeom};

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    #[test]
    fn normalization_examples() {
        let (n, s, c) = normalize_model(&box_solid(Vec3::ZERO, v(2.0, 2.0, 2.0))).unwrap();
        assert_eq!(s, 1.0);
        assert_eq!(c, v(1.0, 1.0, 1.0));
        let bb = n.geometry_bbox();
        assert!((bb.min - v(-1.0, -1.0, -1.0)).norm() < 1e-12 && (bb.max - v(1.0, 1.0, 1.0)).norm() < 1e-12);

        let (again, s2, c2) = normalize_model(&n).unwrap();
        assert!((s2 - 1.0).abs() < 1e-12 && c2.norm() < 1e-12);
        assert!((again.geometry_bbox().min - bb.min).norm() < 1e-12);

        let (n, s, _) = normalize_model(&box_solid(Vec3::ZERO, v(4.0, 2.0, 2.0))).unwrap();
        assert_eq!(s, 2.0);
        let bb = n.geometry_bbox();
        assert!((bb.min - v(-1.0, -0.5, -0.5)).norm() < 1e-12 && (bb.max - v(1.0, 0.5, 0.5)).norm() < 1e-12);
    }

    #[test]
    fn degenerate_model_is_rejected() {
        let b = box_solid(Vec3::ZERO, v(1.0, 1.0, 1.0));
        let flat = b.transformed(&Similarity::scale_translate(0.0, Vec3::ZERO)).unwrap();
        assert!(matches!(normalize_model(&flat), Err(FeatureError::DegenerateModel(_))));
    }

    fn unit_square_face() -> Face {
        // Top face of the unit cube, whose loop spans [0,1]² in the plane frame.
        box_solid(Vec3::ZERO, v(1.0, 1.0, 1.0)).faces[1].clone()
    }

    #[test]
    fn plane_grid_corners_and_midpoint() {
        let f = unit_square_face();
        let g = sample_uv_grid(&f, 2).unwrap();
        let mut corners: Vec<[i64; 3]> =
            g.points.iter().map(|p| p.to_array().map(|x| (x * 1e9).round() as i64)).collect();
        corners.sort();
        let one = 1_000_000_000;
        assert_eq!(corners, vec![[0, 0, one], [0, one, one], [one, 0, one], [one, one, one]]);
        assert!(g.normals.iter().all(|&n| n == Vec3::Z));

        let g = sample_uv_grid(&f, 3).unwrap();
        let Surface::Plane { origin, normal } = f.surface.surface else { unreachable!() };
        let (x, y) = normal.orthonormal_frame();
        let [u0, u1, v0, v1] = f.surface.uv_domain;
        let mid = origin + x * (u0 + 0.5 * (u1 - u0)) + y * (v0 + 0.5 * (v1 - v0));
        assert!((g.points[4] - mid).norm() < 1e-12);
        assert!((g.points[4] - v(0.5, 0.5, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn cylinder_grid_lies_on_the_barrel() {
        let mut f = unit_square_face();
        f.surface = SurfaceGeom {
            surface: Surface::Cylinder { origin: Vec3::ZERO, axis: Vec3::Z, radius: 1.0, reversed: false },
            uv_domain: [0.0, std::f64::consts::TAU, 0.0, 2.0],
        };
        let g = sample_uv_grid(&f, 3).unwrap();
        for (p, n) in g.points.iter().zip(&g.normals) {
            assert!(((p.x * p.x + p.y * p.y).sqrt() - 1.0).abs() < 1e-12);
            assert!((n.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn other_surface_is_unsupported() {
        let mut f = unit_square_face();
        f.surface.surface = Surface::Other;
        assert!(matches!(
            sample_uv_grid(&f, 5),
            Err(FeatureError::Geometry(GeometryError::UnsupportedSurface("other", 1)))
        ));
    }

    #[test]
    fn unit_square_face_row() {
        let b = box_solid(Vec3::ZERO, v(1.0, 1.0, 1.0));
        let row = face_feature_row(&b, 1, 5).unwrap();
        assert_eq!(row.len(), 157);
        assert_eq!(&row[..6], &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((row[6] - 1.0).abs() < 1e-12);
        assert_eq!(row[7..].len(), 150);
    }

    #[test]
    fn straight_edge_row() {
        let b = box_solid(Vec3::ZERO, v(1.0, 1.0, 1.0));
        let e = (0..b.num_edges())
            .find(|&e| {
                let c = &b.edges[e].curve;
                c.start() == Vec3::ZERO && c.end() == Vec3::Z || c.end() == Vec3::ZERO && c.start() == Vec3::Z
            })
            .unwrap();
        let row = edge_feature_row(&b, e);
        assert_eq!(row.len(), 23);
        assert_eq!(&row[..3], &[1.0, 0.0, 0.0]);
        assert_eq!(row[7], 1.0);
        for k in 0..5 {
            let p = &row[8 + 3 * k..11 + 3 * k];
            assert_eq!((p[0], p[1]), (0.0, 0.0));
        }
    }

    #[test]
    fn coedge_rows_encode_direction() {
        let b = box_solid(Vec3::ZERO, v(1.0, 1.0, 1.0));
        for c in 0..b.num_coedges() {
            let want = if b.coedges[c].reversed { 1.0 } else { 0.0 };
            assert_eq!(coedge_feature_row(&b, c), vec![want]);
        }
    }

    #[test]
    fn box_dimensions_and_onehots() {
        let fm = featurize(&box_solid(Vec3::ZERO, v(1.0, 2.0, 3.0)), 5).unwrap();
        assert_eq!(fm.f.shape(), (6, 157));
        assert_eq!(fm.e.shape(), (12, 23));
        assert_eq!(fm.c.shape(), (24, 1));
        assert!(fm.f.is_finite() && fm.e.is_finite() && fm.c.is_finite());
        for i in 0..6 {
            assert_eq!(fm.f.row(i)[..6].iter().sum::<f64>(), 1.0);
        }
        for i in 0..12 {
            assert_eq!(fm.e.row(i)[..3].iter().sum::<f64>(), 1.0);
            assert_eq!(fm.e.row(i)[3..6].iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn normalized_box_area_sum() {
        let fm = featurize(&box_solid(Vec3::ZERO, v(4.0, 2.0, 1.0)), 5).unwrap();
        // Normalized extents 2 × 1 × 0.5.
        let expected = 2.0 * (2.0 * 1.0 + 2.0 * 0.5 + 1.0 * 0.5);
        let total: f64 = (0..6).map(|i| fm.f.get(i, 6)).sum();
        assert!((total - expected).abs() < 1e-9);
    }

    #[test]
    fn invariant_under_translation_and_uniform_scale() {
        let b = box_solid(v(-0.3, 0.2, 1.0), v(1.0, 2.0, 1.7));
        let moved = b.transformed(&Similarity::scale_translate(3.7, v(10.0, -4.0, 2.5))).unwrap();
        let (a, m) = (featurize(&b, 4).unwrap(), featurize(&moved, 4).unwrap());
        for (x, y) in [(&a.f, &m.f), (&a.e, &m.e), (&a.c, &m.c)] {
            for (p, q) in x.data().iter().zip(y.data()) {
                assert!((p - q).abs() < 1e-9, "{p} vs {q}");
            }
        }
    }

    #[test]
    fn dump_has_declared_dims() {
        let fm = featurize(&box_solid(Vec3::ZERO, v(1.0, 1.0, 1.0)), 2).unwrap();
        let j = fm.to_json();
        assert_eq!(j["dims"]["d_f"], 7 + 6 * 4);
        assert_eq!(j["F"].as_array().unwrap().len(), 6);
    }
}
