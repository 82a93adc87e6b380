use std::collections::BTreeMap;

use crate::geom::{BBox, Vec3};

pub type FaceId = usize;
pub type EdgeId = usize;
pub type CoedgeId = usize;

/// Surface families, in one-hot feature order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SurfaceKind {
    Plane,
    Cylinder,
    Cone,
    Sphere,
    Torus,
    Other,
}

impl SurfaceKind {
    pub const ALL: [SurfaceKind; 6] = [
        SurfaceKind::Plane,
        SurfaceKind::Cylinder,
        SurfaceKind::Cone,
        SurfaceKind::Sphere,
        SurfaceKind::Torus,
        SurfaceKind::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SurfaceKind::Plane => "plane",
            SurfaceKind::Cylinder => "cylinder",
            SurfaceKind::Cone => "cone",
            SurfaceKind::Sphere => "sphere",
            SurfaceKind::Torus => "torus",
            SurfaceKind::Other => "other",
        }
    }
}

/// Analytic surface geometry.
///
/// Angular parameters are radians measured from the `u` axis of
/// [`Vec3::orthonormal_frame`] of the surface axis. `reversed` flips the natural
/// normal (away from the axis / center) so that it points out of the solid.
#[derive(Clone, Debug, PartialEq)]
pub enum Surface {
    /// `p(u, v) = origin + u·x + v·y` where `(x, y)` is the frame of `normal`.
    /// `normal` is the outward face normal.
    Plane { origin: Vec3, normal: Vec3 },
    /// `u` angle, `v` height along `axis`.
    Cylinder { origin: Vec3, axis: Vec3, radius: f64, reversed: bool },
    /// `u` angle, `v` height along `axis`; radius at height `v` is `radius + v·tan(semi_angle)`.
    Cone { origin: Vec3, axis: Vec3, radius: f64, semi_angle: f64, reversed: bool },
    /// `u` longitude, `v` latitude in `[-π/2, π/2]`.
    Sphere { center: Vec3, axis: Vec3, radius: f64, reversed: bool },
    /// `u` around the axis, `v` around the tube.
    Torus { center: Vec3, axis: Vec3, major_radius: f64, minor_radius: f64, reversed: bool },
    Other,
}

impl Surface {
    pub fn kind(&self) -> SurfaceKind {
        match self {
            Surface::Plane { .. } => SurfaceKind::Plane,
            Surface::Cylinder { .. } => SurfaceKind::Cylinder,
            Surface::Cone { .. } => SurfaceKind::Cone,
            Surface::Sphere { .. } => SurfaceKind::Sphere,
            Surface::Torus { .. } => SurfaceKind::Torus,
            Surface::Other => SurfaceKind::Other,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceGeom {
    pub surface: Surface,
    /// `(u_min, u_max, v_min, v_max)`.
    pub uv_domain: [f64; 4],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CurveKind {
    Line,
    Arc,
    Other,
}

impl CurveKind {
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Curve {
    Line { start: Vec3, end: Vec3 },
    /// Counter-clockwise about `normal` from `start` to `end`; `start == end` is a full circle.
    Arc { center: Vec3, normal: Vec3, radius: f64, start: Vec3, end: Vec3 },
    /// Polyline through the given points.
    Other { points: Vec<Vec3> },
}

impl Curve {
    pub fn kind(&self) -> CurveKind {
        match self {
            Curve::Line { .. } => CurveKind::Line,
            Curve::Arc { .. } => CurveKind::Arc,
            Curve::Other { .. } => CurveKind::Other,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Convexity {
    Convex,
    Concave,
    Smooth,
}

impl Convexity {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Convexity::Convex => "convex",
            Convexity::Concave => "concave",
            Convexity::Smooth => "smooth",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FaceLabels {
    pub op_type: usize,
    pub op_step: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Face {
    pub id: FaceId,
    pub surface: SurfaceGeom,
    /// Ordered coedge cycles; the first loop is the outer loop.
    pub loops: Vec<Vec<CoedgeId>>,
    pub labels: Option<FaceLabels>,
}

impl Face {
    pub fn coedges(&self) -> impl Iterator<Item = CoedgeId> + '_ {
        self.loops.iter().flatten().copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub curve: Curve,
    pub coedges: [CoedgeId; 2],
    pub convexity: Convexity,
    pub closed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Coedge {
    pub id: CoedgeId,
    pub edge: EdgeId,
    pub face: FaceId,
    pub next: CoedgeId,
    pub prev: CoedgeId,
    pub mate: CoedgeId,
    /// Whether this coedge runs against its edge's curve direction.
    pub reversed: bool,
}

/// Ordered op.type class names plus the grouping used by the consistency metrics.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeVocabulary {
    names: Vec<String>,
    grouping: BTreeMap<String, String>,
}

impl TypeVocabulary {
    /// The eleven classes of the CC3D-Ops annotation scheme.
    pub const FULL: [&'static str; 11] = [
        "extrude_side",
        "extrude_end",
        "revolve_side",
        "revolve_end",
        "cut_extrude_side",
        "cut_extrude_end",
        "cut_revolve_side",
        "cut_revolve_end",
        "fillet",
        "chamfer",
        "other",
    ];

    /// The classes emitted by the synthetic generator.
    pub const EXTRUDE_FAMILY: [&'static str; 4] =
        ["extrude_side", "extrude_end", "cut_extrude_side", "cut_extrude_end"];

    /// Builds a vocabulary whose grouping strips a trailing `_side` / `_end`.
    pub fn new<S: AsRef<str>>(names: &[S]) -> Self {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        let grouping = names
            .iter()
            .map(|n| (n.clone(), group_name(n).to_string()))
            .collect();
        TypeVocabulary { names, grouping }
    }

    pub fn extrude_family() -> Self {
        Self::new(&Self::EXTRUDE_FAMILY)
    }

    pub fn full() -> Self {
        Self::new(&Self::FULL)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, idx: usize) -> Option<&str> {
        self.names.get(idx).map(String::as_str)
    }

    pub fn grouped(&self, name: &str) -> Option<&str> {
        self.grouping.get(name).map(String::as_str)
    }

    /// Distinct group names in first-appearance order.
    pub fn groups(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for n in &self.names {
            let g = &self.grouping[n];
            if !out.contains(g) {
                out.push(g.clone());
            }
        }
        out
    }

    /// Class index → group index (into [`Self::groups`]).
    pub fn group_index(&self, idx: usize) -> Option<usize> {
        let name = self.names.get(idx)?;
        let g = &self.grouping[name];
        self.groups().iter().position(|x| x == g)
    }
}

fn group_name(name: &str) -> &str {
    name.strip_suffix("_side")
        .or_else(|| name.strip_suffix("_end"))
        .unwrap_or(name)
}

/// A boundary-representation solid.
#[derive(Clone, Debug, PartialEq)]
pub struct BRep {
    pub name: String,
    pub vocabulary: TypeVocabulary,
    pub faces: Vec<Face>,
    pub edges: Vec<Edge>,
    pub coedges: Vec<Coedge>,
    /// Bounding box before any normalization, in model units.
    pub scale_info: BBox,
}

impl BRep {
    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_coedges(&self) -> usize {
        self.coedges.len()
    }

    pub fn mate(&self, c: CoedgeId) -> CoedgeId {
        self.coedges[c].mate
    }

    pub fn next(&self, c: CoedgeId) -> CoedgeId {
        self.coedges[c].next
    }

    pub fn prev(&self, c: CoedgeId) -> CoedgeId {
        self.coedges[c].prev
    }

    /// Coedges of every face, sorted by id.
    pub fn face_coedges(&self) -> Vec<Vec<CoedgeId>> {
        let mut out = vec![Vec::new(); self.faces.len()];
        for c in &self.coedges {
            if c.face < out.len() {
                out[c.face].push(c.id);
            }
        }
        out
    }

    /// Per-face labels, or `None` if any face is unlabeled.
    pub fn labels(&self) -> Option<Vec<FaceLabels>> {
        self.faces.iter().map(|f| f.labels).collect()
    }

    /// Distinct step ids mapped to `0..k` in ascending order, per face.
    pub fn dense_steps(&self) -> Option<(Vec<usize>, usize)> {
        let labels = self.labels()?;
        let mut ids: Vec<u64> = labels.iter().map(|l| l.op_step).collect();
        ids.sort_unstable();
        ids.dedup();
        let dense = labels
            .iter()
            .map(|l| ids.binary_search(&l.op_step).unwrap())
            .collect();
        Some((dense, ids.len()))
    }

    /// Bounding box of the edge geometry.
    pub fn geometry_bbox(&self) -> BBox {
        let mut bb = BBox::empty();
        for e in &self.edges {
            for p in crate::brep::geometry::curve_bbox_points(&e.curve) {
                bb.include(p);
            }
        }
        bb
    }
}
