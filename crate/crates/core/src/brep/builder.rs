//! Construction of planar polyhedral B-Reps from vertex loops.
//!
//! Each face is given as an outward normal and a list of vertex-id loops (outer
//! loop counter-clockwise about the normal, inner loops clockwise). Coedges are
//! the directed loop segments; a segment `a → b` is mated with the segment
//! `b → a` of another face.

use std::collections::HashMap;

use thiserror::Error;

use super::geometry::plane_domain_from_loops;
use super::types::*;
use crate::geom::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BuildError {
    #[error("segment {0} -> {1} has no opposing segment (open shell)")]
    Unmated(usize, usize),
    #[error("segment {0} -> {1} is used more than once (non-manifold)")]
    Duplicate(usize, usize),
    #[error("face {0} has an empty loop")]
    EmptyLoop(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolyFace {
    pub normal: Vec3,
    pub loops: Vec<Vec<usize>>,
    pub labels: Option<FaceLabels>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PolyhedronBuilder {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<PolyFace>,
}

const SMOOTH_TOL: f64 = 1e-9;

impl PolyhedronBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vertex(&mut self, p: Vec3) -> usize {
        self.vertices.push(p);
        self.vertices.len() - 1
    }

    pub fn add_face(&mut self, normal: Vec3, outer: Vec<usize>, labels: Option<FaceLabels>) -> usize {
        self.faces.push(PolyFace { normal, loops: vec![outer], labels });
        self.faces.len() - 1
    }

    pub fn build(&self, name: &str, vocabulary: TypeVocabulary) -> Result<BRep, BuildError> {
        let mut coedges: Vec<Coedge> = Vec::new();
        let mut segs: Vec<(usize, usize)> = Vec::new();
        let mut by_seg: HashMap<(usize, usize), usize> = HashMap::new();
        let mut face_loops: Vec<Vec<Vec<usize>>> = Vec::with_capacity(self.faces.len());

        for (fi, f) in self.faces.iter().enumerate() {
            let mut loops = Vec::with_capacity(f.loops.len());
            for lp in &f.loops {
                if lp.is_empty() {
                    return Err(BuildError::EmptyLoop(fi));
                }
                let first = coedges.len();
                let n = lp.len();
                let mut ids = Vec::with_capacity(n);
                for i in 0..n {
                    let id = first + i;
                    let seg = (lp[i], lp[(i + 1) % n]);
                    if by_seg.insert(seg, id).is_some() {
                        return Err(BuildError::Duplicate(seg.0, seg.1));
                    }
                    segs.push(seg);
                    coedges.push(Coedge {
                        id,
                        edge: usize::MAX,
                        face: fi,
                        next: first + (i + 1) % n,
                        prev: first + (i + n - 1) % n,
                        mate: usize::MAX,
                        reversed: false,
                    });
                    ids.push(id);
                }
                loops.push(ids);
            }
            face_loops.push(loops);
        }

        let mut edges: Vec<Edge> = Vec::new();
        for c in 0..coedges.len() {
            if coedges[c].mate != usize::MAX {
                continue;
            }
            let (a, b) = segs[c];
            let m = *by_seg.get(&(b, a)).ok_or(BuildError::Unmated(a, b))?;
            let eid = edges.len();
            coedges[c].mate = m;
            coedges[m].mate = c;
            coedges[c].edge = eid;
            coedges[m].edge = eid;
            coedges[m].reversed = true;

            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            let na = self.faces[coedges[c].face].normal;
            let nb = self.faces[coedges[m].face].normal;
            let cr = na.cross(nb);
            let convexity = if cr.norm() < SMOOTH_TOL {
                Convexity::Smooth
            } else if cr.dot(pb - pa) > 0.0 {
                Convexity::Convex
            } else {
                Convexity::Concave
            };
            edges.push(Edge {
                id: eid,
                curve: Curve::Line { start: pa, end: pb },
                coedges: [c, m],
                convexity,
                closed: false,
            });
        }

        let mut brep = BRep {
            name: name.to_string(),
            vocabulary,
            faces: Vec::with_capacity(self.faces.len()),
            edges,
            coedges,
            scale_info: crate::geom::BBox::empty(),
        };
        for (fi, f) in self.faces.iter().enumerate() {
            let origin = self.vertices[f.loops[0][0]];
            brep.faces.push(Face {
                id: fi,
                surface: SurfaceGeom {
                    surface: Surface::Plane { origin, normal: f.normal },
                    uv_domain: [0.0; 4],
                },
                loops: face_loops[fi].clone(),
                labels: f.labels,
            });
        }
        for fi in 0..brep.faces.len() {
            let f = &brep.faces[fi];
            let origin = self.vertices[self.faces[fi].loops[0][0]];
            let d = plane_domain_from_loops(&brep, f, origin, self.faces[fi].normal);
            brep.faces[fi].surface.uv_domain = d;
        }
        brep.scale_info = brep.geometry_bbox();
        Ok(brep)
    }
}

/// Adds a right prism over a counter-clockwise (seen from `+z`) polygon between
/// heights `z0 < z1`. Returns `(bottom, top, sides)` face indices; side `i` spans
/// polygon edge `i → i+1`.
pub fn add_prism(
    b: &mut PolyhedronBuilder,
    polygon: &[(f64, f64)],
    z0: f64,
    z1: f64,
    end_labels: Option<FaceLabels>,
    side_labels: Option<FaceLabels>,
) -> (usize, usize, Vec<usize>) {
    let bottom_v: Vec<usize> = polygon.iter().map(|&(x, y)| b.add_vertex(Vec3::new(x, y, z0))).collect();
    let top_v: Vec<usize> = polygon.iter().map(|&(x, y)| b.add_vertex(Vec3::new(x, y, z1))).collect();
    let bottom = b.add_face(-Vec3::Z, bottom_v.iter().rev().copied().collect(), end_labels);
    let top = b.add_face(Vec3::Z, top_v.clone(), end_labels);
    let sides = extrude_sides(b, &bottom_v, &top_v, Vec3::Z, side_labels);
    (bottom, top, sides)
}

/// Side faces between a base loop (counter-clockwise about `axis`) and its translated
/// copy. The side normals are `edge × axis` when the copy lies along `+axis` and the
/// opposite when it lies along `-axis` (a cut), which is what the loop winding implies.
pub fn extrude_sides(
    b: &mut PolyhedronBuilder,
    base: &[usize],
    offset: &[usize],
    axis: Vec3,
    labels: Option<FaceLabels>,
) -> Vec<usize> {
    let n = base.len();
    let outward = {
        let d = b.vertices[offset[0]] - b.vertices[base[0]];
        d.dot(axis) >= 0.0
    };
    (0..n)
        .map(|i| {
            let j = (i + 1) % n;
            let e = b.vertices[base[j]] - b.vertices[base[i]];
            let mut normal = e.cross(axis).normalized().expect("degenerate polygon edge");
            if !outward {
                normal = -normal;
            }
            b.add_face(normal, vec![base[i], base[j], offset[j], offset[i]], labels)
        })
        .collect()
}

/// Axis-aligned box; the two `±z` faces are labeled `extrude_end`, the rest `extrude_side`.
pub fn box_solid(min: Vec3, max: Vec3) -> BRep {
    let mut b = PolyhedronBuilder::new();
    let vocab = TypeVocabulary::extrude_family();
    let end = FaceLabels { op_type: 1, op_step: 0 };
    let side = FaceLabels { op_type: 0, op_step: 0 };
    let poly = [(min.x, min.y), (max.x, min.y), (max.x, max.y), (min.x, max.y)];
    add_prism(&mut b, &poly, min.z, max.z, Some(end), Some(side));
    b.build("box", vocab).expect("box is a closed manifold")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brep::validate::validate_topology;

    #[test]
    fn box_has_cube_counts_and_is_valid() {
        let b = box_solid(Vec3::ZERO, Vec3::new(1.0, 2.0, 3.0));
        assert_eq!((b.num_faces(), b.num_edges(), b.num_coedges()), (6, 12, 24));
        assert!(validate_topology(&b).is_valid());
        assert!(b.edges.iter().all(|e| e.convexity == Convexity::Convex));
    }

    #[test]
    fn open_shell_is_rejected() {
        let mut b = PolyhedronBuilder::new();
        let v: Vec<usize> = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]
            .iter()
            .map(|&(x, y)| b.add_vertex(Vec3::new(x, y, 0.0)))
            .collect();
        b.add_face(Vec3::Z, v, None);
        assert!(matches!(b.build("t", TypeVocabulary::extrude_family()), Err(BuildError::Unmated(..))));
    }
}
