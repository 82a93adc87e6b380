//! Canonical `.brep.json` reader and writer (format version "1").
//!
//! The writer emits keys in schema order, entities sorted by id and every float
//! with 17 significant digits, so two serializations of the same model are
//! byte-identical and parsing the output reproduces the model bit for bit.

use std::fmt::Write as _;

use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use super::types::*;
use super::validate::{validate_topology, Violation};
use crate::geom::Vec3;

pub const FORMAT_VERSION: &str = "1";
pub const FILE_EXTENSION: &str = ".brep.json";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("topology error: {} at {} ({})", .0.kind, .0.entity, .0.detail)]
    Topology(Violation),
    #[error("value error: {0}")]
    Value(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDoc {
    format_version: String,
    name: String,
    vocabulary: Vec<String>,
    faces: Vec<RawFace>,
    edges: Vec<RawEdge>,
    coedges: Vec<RawCoedge>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFace {
    id: usize,
    surface: RawGeom,
    loops: Vec<Vec<usize>>,
    labels: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLabels {
    op_type: usize,
    op_step: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeom {
    kind: String,
    params: Value,
    #[serde(default)]
    uv_domain: Option<[f64; 4]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdge {
    id: usize,
    curve: RawGeom,
    coedges: [usize; 2],
    convexity: String,
    closed: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoedge {
    id: usize,
    edge: usize,
    face: usize,
    next: usize,
    prev: usize,
    mate: usize,
    reversed: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlaneParams {
    origin: Vec3,
    normal: Vec3,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CylinderParams {
    origin: Vec3,
    axis: Vec3,
    radius: f64,
    reversed: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConeParams {
    origin: Vec3,
    axis: Vec3,
    radius: f64,
    semi_angle: f64,
    reversed: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SphereParams {
    center: Vec3,
    axis: Vec3,
    radius: f64,
    reversed: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TorusParams {
    center: Vec3,
    axis: Vec3,
    major_radius: f64,
    minor_radius: f64,
    reversed: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EmptyParams {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LineParams {
    start: Vec3,
    end: Vec3,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ArcParams {
    center: Vec3,
    normal: Vec3,
    radius: f64,
    start: Vec3,
    end: Vec3,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PolylineParams {
    points: Vec<Vec3>,
}

fn params<T: for<'de> Deserialize<'de>>(v: Value, ctx: &str) -> Result<T, FormatError> {
    serde_json::from_value(v).map_err(|e| FormatError::Schema(format!("{ctx}: {e}")))
}

fn surface_from_raw(raw: RawGeom, face: usize) -> Result<SurfaceGeom, FormatError> {
    let ctx = format!("face {face} surface");
    let uv_domain = raw
        .uv_domain
        .ok_or_else(|| FormatError::Schema(format!("{ctx}: missing field `uv_domain`")))?;
    let surface = match raw.kind.as_str() {
        "plane" => {
            let p: PlaneParams = params(raw.params, &ctx)?;
            Surface::Plane { origin: p.origin, normal: p.normal }
        }
        "cylinder" => {
            let p: CylinderParams = params(raw.params, &ctx)?;
            Surface::Cylinder { origin: p.origin, axis: p.axis, radius: p.radius, reversed: p.reversed }
        }
        "cone" => {
            let p: ConeParams = params(raw.params, &ctx)?;
            Surface::Cone {
                origin: p.origin,
                axis: p.axis,
                radius: p.radius,
                semi_angle: p.semi_angle,
                reversed: p.reversed,
            }
        }
        "sphere" => {
            let p: SphereParams = params(raw.params, &ctx)?;
            Surface::Sphere { center: p.center, axis: p.axis, radius: p.radius, reversed: p.reversed }
        }
        "torus" => {
            let p: TorusParams = params(raw.params, &ctx)?;
            Surface::Torus {
                center: p.center,
                axis: p.axis,
                major_radius: p.major_radius,
                minor_radius: p.minor_radius,
                reversed: p.reversed,
            }
        }
        "other" => {
            let _: EmptyParams = params(raw.params, &ctx)?;
            Surface::Other
        }
        k => return Err(FormatError::Schema(format!("{ctx}: unknown surface kind `{k}`"))),
    };
    Ok(SurfaceGeom { surface, uv_domain })
}

fn curve_from_raw(raw: RawGeom, edge: usize) -> Result<Curve, FormatError> {
    let ctx = format!("edge {edge} curve");
    if raw.uv_domain.is_some() {
        return Err(FormatError::Schema(format!("{ctx}: unknown field `uv_domain`")));
    }
    Ok(match raw.kind.as_str() {
        "line" => {
            let p: LineParams = params(raw.params, &ctx)?;
            Curve::Line { start: p.start, end: p.end }
        }
        "arc" => {
            let p: ArcParams = params(raw.params, &ctx)?;
            Curve::Arc { center: p.center, normal: p.normal, radius: p.radius, start: p.start, end: p.end }
        }
        "other" => {
            let p: PolylineParams = params(raw.params, &ctx)?;
            Curve::Other { points: p.points }
        }
        k => return Err(FormatError::Schema(format!("{ctx}: unknown curve kind `{k}`"))),
    })
}

fn convexity_from_str(s: &str, edge: usize) -> Result<Convexity, FormatError> {
    match s {
        "convex" => Ok(Convexity::Convex),
        "concave" => Ok(Convexity::Concave),
        "smooth" => Ok(Convexity::Smooth),
        other => Err(FormatError::Schema(format!("edge {edge}: unknown convexity `{other}`"))),
    }
}

/// Places entities at their id, rejecting duplicate or non-dense ids.
fn dense<T>(items: Vec<(usize, T)>, what: &str) -> Result<Vec<T>, FormatError> {
    let n = items.len();
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    for (id, item) in items {
        if id >= n {
            return Err(FormatError::Schema(format!("{what} id {id} is not in 0..{n}")));
        }
        if slots[id].is_some() {
            return Err(FormatError::Schema(format!("duplicate {what} id {id}")));
        }
        slots[id] = Some(item);
    }
    Ok(slots.into_iter().map(|s| s.unwrap()).collect())
}

/// Parses a canonical B-Rep document and checks every topological invariant.
pub fn parse_brep(text: &str) -> Result<BRep, FormatError> {
    let raw: RawDoc = serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => FormatError::Schema(e.to_string()),
        _ => FormatError::Syntax { line: e.line(), column: e.column(), message: e.to_string() },
    })?;
    if raw.format_version != FORMAT_VERSION {
        return Err(FormatError::Schema(format!(
            "unsupported format_version `{}` (expected `{FORMAT_VERSION}`)",
            raw.format_version
        )));
    }
    let vocabulary = TypeVocabulary::new(&raw.vocabulary);

    let mut faces = Vec::with_capacity(raw.faces.len());
    for f in raw.faces {
        let labels = match f.labels {
            Value::Null => None,
            v => {
                let l: RawLabels = params(v, &format!("face {} labels", f.id))?;
                Some(FaceLabels { op_type: l.op_type, op_step: l.op_step })
            }
        };
        let surface = surface_from_raw(f.surface, f.id)?;
        faces.push((f.id, Face { id: f.id, surface, loops: f.loops, labels }));
    }
    let mut edges = Vec::with_capacity(raw.edges.len());
    for e in raw.edges {
        let curve = curve_from_raw(e.curve, e.id)?;
        let convexity = convexity_from_str(&e.convexity, e.id)?;
        edges.push((e.id, Edge { id: e.id, curve, coedges: e.coedges, convexity, closed: e.closed }));
    }
    let coedges = raw
        .coedges
        .into_iter()
        .map(|c| {
            (
                c.id,
                Coedge {
                    id: c.id,
                    edge: c.edge,
                    face: c.face,
                    next: c.next,
                    prev: c.prev,
                    mate: c.mate,
                    reversed: c.reversed,
                },
            )
        })
        .collect();

    let mut b = BRep {
        name: raw.name,
        vocabulary,
        faces: dense(faces, "face")?,
        edges: dense(edges, "edge")?,
        coedges: dense(coedges, "coedge")?,
        scale_info: crate::geom::BBox::empty(),
    };
    let report = validate_topology(&b);
    if let Some(v) = report.violations.into_iter().next() {
        return Err(FormatError::Topology(v));
    }
    b.scale_info = b.geometry_bbox();
    Ok(b)
}

struct Writer {
    out: String,
}

impl Writer {
    fn float(&mut self, x: f64) -> Result<(), FormatError> {
        if !x.is_finite() {
            return Err(FormatError::Value(format!("non-finite number {x} is not representable")));
        }
        write!(self.out, "{x:.16e}").unwrap();
        Ok(())
    }

    fn floats(&mut self, xs: &[f64]) -> Result<(), FormatError> {
        self.out.push('[');
        for (i, &x) in xs.iter().enumerate() {
            if i > 0 {
                self.out.push_str(", ");
            }
            self.float(x)?;
        }
        self.out.push(']');
        Ok(())
    }

    fn vec3(&mut self, v: Vec3) -> Result<(), FormatError> {
        self.floats(&v.to_array())
    }

    fn string(&mut self, s: &str) {
        self.out.push_str(&serde_json::to_string(s).unwrap());
    }

    fn key(&mut self, k: &str) {
        self.string(k);
        self.out.push_str(": ");
    }

    fn ints(&mut self, xs: &[usize]) {
        self.out.push('[');
        for (i, x) in xs.iter().enumerate() {
            if i > 0 {
                self.out.push_str(", ");
            }
            write!(self.out, "{x}").unwrap();
        }
        self.out.push(']');
    }

    fn bool(&mut self, b: bool) {
        self.out.push_str(if b { "true" } else { "false" });
    }

    fn field_vec3(&mut self, k: &str, v: Vec3) -> Result<(), FormatError> {
        self.key(k);
        self.vec3(v)
    }

    fn field_float(&mut self, k: &str, x: f64) -> Result<(), FormatError> {
        self.key(k);
        self.float(x)
    }

    fn field_bool(&mut self, k: &str, b: bool) {
        self.key(k);
        self.bool(b);
    }

    fn sep(&mut self) {
        self.out.push_str(", ");
    }

    fn surface(&mut self, s: &SurfaceGeom) -> Result<(), FormatError> {
        self.out.push('{');
        self.key("kind");
        self.string(s.surface.kind().name());
        self.sep();
        self.key("params");
        self.out.push('{');
        match s.surface {
            Surface::Plane { origin, normal } => {
                self.field_vec3("origin", origin)?;
                self.sep();
                self.field_vec3("normal", normal)?;
            }
            Surface::Cylinder { origin, axis, radius, reversed } => {
                self.field_vec3("origin", origin)?;
                self.sep();
                self.field_vec3("axis", axis)?;
                self.sep();
                self.field_float("radius", radius)?;
                self.sep();
                self.field_bool("reversed", reversed);
            }
            Surface::Cone { origin, axis, radius, semi_angle, reversed } => {
                self.field_vec3("origin", origin)?;
                self.sep();
                self.field_vec3("axis", axis)?;
                self.sep();
                self.field_float("radius", radius)?;
                self.sep();
                self.field_float("semi_angle", semi_angle)?;
                self.sep();
                self.field_bool("reversed", reversed);
            }
            Surface::Sphere { center, axis, radius, reversed } => {
                self.field_vec3("center", center)?;
                self.sep();
                self.field_vec3("axis", axis)?;
                self.sep();
                self.field_float("radius", radius)?;
                self.sep();
                self.field_bool("reversed", reversed);
            }
            Surface::Torus { center, axis, major_radius, minor_radius, reversed } => {
                self.field_vec3("center", center)?;
                self.sep();
                self.field_vec3("axis", axis)?;
                self.sep();
                self.field_float("major_radius", major_radius)?;
                self.sep();
                self.field_float("minor_radius", minor_radius)?;
                self.sep();
                self.field_bool("reversed", reversed);
            }
            Surface::Other => {}
        }
        self.out.push('}');
        self.sep();
        self.key("uv_domain");
        self.floats(&s.uv_domain)?;
        self.out.push('}');
        Ok(())
    }

    fn curve(&mut self, c: &Curve) -> Result<(), FormatError> {
        self.out.push('{');
        self.key("kind");
        self.string(match c.kind() {
            CurveKind::Line => "line",
            CurveKind::Arc => "arc",
            CurveKind::Other => "other",
        });
        self.sep();
        self.key("params");
        self.out.push('{');
        match c {
            Curve::Line { start, end } => {
                self.field_vec3("start", *start)?;
                self.sep();
                self.field_vec3("end", *end)?;
            }
            Curve::Arc { center, normal, radius, start, end } => {
                self.field_vec3("center", *center)?;
                self.sep();
                self.field_vec3("normal", *normal)?;
                self.sep();
                self.field_float("radius", *radius)?;
                self.sep();
                self.field_vec3("start", *start)?;
                self.sep();
                self.field_vec3("end", *end)?;
            }
            Curve::Other { points } => {
                self.key("points");
                self.out.push('[');
                for (i, p) in points.iter().enumerate() {
                    if i > 0 {
                        self.sep();
                    }
                    self.vec3(*p)?;
                }
                self.out.push(']');
            }
        }
        self.out.push_str("}}");
        Ok(())
    }
}

/// Serializes a model in canonical form.
pub fn serialize_brep(b: &BRep) -> Result<String, FormatError> {
    let mut w = Writer { out: String::with_capacity(256 * (b.faces.len() + b.edges.len() + b.coedges.len())) };
    w.out.push_str("{\n  ");
    w.key("format_version");
    w.string(FORMAT_VERSION);
    w.out.push_str(",\n  ");
    w.key("name");
    w.string(&b.name);
    w.out.push_str(",\n  ");
    w.key("vocabulary");
    w.out.push('[');
    for (i, n) in b.vocabulary.names().iter().enumerate() {
        if i > 0 {
            w.sep();
        }
        w.string(n);
    }
    w.out.push_str("],\n  ");

    let mut faces: Vec<&Face> = b.faces.iter().collect();
    faces.sort_by_key(|f| f.id);
    w.key("faces");
    w.out.push_str("[\n");
    for (i, f) in faces.iter().enumerate() {
        w.out.push_str("    {");
        w.key("id");
        write!(w.out, "{}", f.id).unwrap();
        w.sep();
        w.key("surface");
        w.surface(&f.surface)?;
        w.sep();
        w.key("loops");
        w.out.push('[');
        for (li, lp) in f.loops.iter().enumerate() {
            if li > 0 {
                w.sep();
            }
            w.ints(lp);
        }
        w.out.push(']');
        w.sep();
        w.key("labels");
        match f.labels {
            Some(l) => write!(w.out, "{{\"op_type\": {}, \"op_step\": {}}}", l.op_type, l.op_step).unwrap(),
            None => w.out.push_str("null"),
        }
        w.out.push('}');
        w.out.push_str(if i + 1 < faces.len() { ",\n" } else { "\n" });
    }
    w.out.push_str("  ],\n  ");

    let mut edges: Vec<&Edge> = b.edges.iter().collect();
    edges.sort_by_key(|e| e.id);
    w.key("edges");
    w.out.push_str("[\n");
    for (i, e) in edges.iter().enumerate() {
        w.out.push_str("    {");
        w.key("id");
        write!(w.out, "{}", e.id).unwrap();
        w.sep();
        w.key("curve");
        w.curve(&e.curve)?;
        w.sep();
        w.key("coedges");
        w.ints(&e.coedges);
        w.sep();
        w.key("convexity");
        w.string(e.convexity.name());
        w.sep();
        w.field_bool("closed", e.closed);
        w.out.push('}');
        w.out.push_str(if i + 1 < edges.len() { ",\n" } else { "\n" });
    }
    w.out.push_str("  ],\n  ");

    let mut coedges: Vec<&Coedge> = b.coedges.iter().collect();
    coedges.sort_by_key(|c| c.id);
    w.key("coedges");
    w.out.push_str("[\n");
    for (i, c) in coedges.iter().enumerate() {
        write!(
            w.out,
            "    {{\"id\": {}, \"edge\": {}, \"face\": {}, \"next\": {}, \"prev\": {}, \"mate\": {}, \"reversed\": {}}}",
            c.id, c.edge, c.face, c.next, c.prev, c.mate, c.reversed
        )
        .unwrap();
        w.out.push_str(if i + 1 < coedges.len() { ",\n" } else { "\n" });
    }
    w.out.push_str("  ]\n}\n");
    Ok(w.out)
}
