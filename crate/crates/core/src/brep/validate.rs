//! Structural validation of B-Rep topology.
//!
//! Violations are returned as data. The checks never index out of range, so they
//! can be run on arbitrarily corrupted models.

use std::fmt;

use super::types::{BRep, Curve, Surface};
use crate::geom::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    IdMismatch,
    DanglingReference,
    MateInvolution,
    EdgeRegistration,
    SameFaceMate,
    ReversedFlags,
    EmptyFace,
    EmptyLoop,
    LoopMembership,
    LoopClosure,
    LabelRange,
    Geometry,
}

impl ViolationKind {
    pub fn name(self) -> &'static str {
        match self {
            ViolationKind::IdMismatch => "id mismatch",
            ViolationKind::DanglingReference => "dangling reference",
            ViolationKind::MateInvolution => "mate involution",
            ViolationKind::EdgeRegistration => "edge registration",
            ViolationKind::SameFaceMate => "same-face mate",
            ViolationKind::ReversedFlags => "reversed flags",
            ViolationKind::EmptyFace => "empty face",
            ViolationKind::EmptyLoop => "empty loop",
            ViolationKind::LoopMembership => "loop membership",
            ViolationKind::LoopClosure => "loop closure",
            ViolationKind::LabelRange => "label range",
            ViolationKind::Geometry => "geometry",
        }
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Entity {
    Face(usize),
    Edge(usize),
    Coedge(usize),
    Loop { face: usize, index: usize },
}

impl Entity {
    pub fn id(self) -> usize {
        match self {
            Entity::Face(i) | Entity::Edge(i) | Entity::Coedge(i) => i,
            Entity::Loop { face, .. } => face,
        }
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Entity::Face(i) => write!(f, "face {i}"),
            Entity::Edge(i) => write!(f, "edge {i}"),
            Entity::Coedge(i) => write!(f, "coedge {i}"),
            Entity::Loop { face, index } => write!(f, "loop {index} of face {face}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub entity: Entity,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({}): {}", self.kind, self.entity, self.detail)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }

    fn push(&mut self, kind: ViolationKind, entity: Entity, detail: impl Into<String>) {
        self.violations.push(Violation { kind, entity, detail: detail.into() });
    }
}

const UNIT_TOL: f64 = 1e-9;

fn is_unit(v: Vec3) -> bool {
    v.is_finite() && (v.norm() - 1.0).abs() <= UNIT_TOL
}

pub fn validate_topology(b: &BRep) -> ValidationReport {
    let mut r = ValidationReport::default();
    let (nf, ne, nc) = (b.faces.len(), b.edges.len(), b.coedges.len());

    for (i, f) in b.faces.iter().enumerate() {
        if f.id != i {
            r.push(ViolationKind::IdMismatch, Entity::Face(i), format!("stored id {}", f.id));
        }
    }
    for (i, e) in b.edges.iter().enumerate() {
        if e.id != i {
            r.push(ViolationKind::IdMismatch, Entity::Edge(i), format!("stored id {}", e.id));
        }
    }
    for (i, c) in b.coedges.iter().enumerate() {
        if c.id != i {
            r.push(ViolationKind::IdMismatch, Entity::Coedge(i), format!("stored id {}", c.id));
        }
    }

    // Coedges whose references all resolve; the remaining checks only touch these.
    let mut sound = vec![true; nc];
    for (i, c) in b.coedges.iter().enumerate() {
        let refs = [
            ("edge", c.edge, ne),
            ("face", c.face, nf),
            ("next", c.next, nc),
            ("prev", c.prev, nc),
            ("mate", c.mate, nc),
        ];
        for (what, id, n) in refs {
            if id >= n {
                sound[i] = false;
                r.push(ViolationKind::DanglingReference, Entity::Coedge(i), format!("{what} {id} out of range"));
            }
        }
    }
    for (i, e) in b.edges.iter().enumerate() {
        for &c in &e.coedges {
            if c >= nc {
                r.push(ViolationKind::DanglingReference, Entity::Edge(i), format!("coedge {c} out of range"));
            }
        }
    }
    let mut loops_sound = true;
    for (i, f) in b.faces.iter().enumerate() {
        for c in f.coedges() {
            if c >= nc {
                loops_sound = false;
                r.push(ViolationKind::DanglingReference, Entity::Face(i), format!("loop coedge {c} out of range"));
            }
        }
    }

    let ok = |c: usize| c < nc && sound[c];
    for (i, c) in b.coedges.iter().enumerate() {
        if !sound[i] {
            continue;
        }
        if c.mate == i {
            r.push(ViolationKind::MateInvolution, Entity::Coedge(i), "coedge is its own mate");
            continue;
        }
        if ok(c.mate) {
            let m = &b.coedges[c.mate];
            if m.mate != i {
                r.push(ViolationKind::MateInvolution, Entity::Coedge(i), format!("mate {} has mate {}", c.mate, m.mate));
                continue;
            }
            if m.face == c.face {
                r.push(ViolationKind::SameFaceMate, Entity::Coedge(i), format!("mate {} on the same face {}", c.mate, c.face));
            }
            if m.reversed == c.reversed && i < c.mate {
                r.push(ViolationKind::ReversedFlags, Entity::Coedge(i), format!("mate {} has the same direction flag", c.mate));
            }
        }
        let e = &b.edges[c.edge];
        if !e.coedges.contains(&i) {
            r.push(ViolationKind::EdgeRegistration, Entity::Coedge(i), format!("edge {} does not list it", c.edge));
        }
    }
    for (i, e) in b.edges.iter().enumerate() {
        let [a, c] = e.coedges;
        if !(ok(a) && ok(c)) {
            continue;
        }
        if a == c || b.coedges[a].edge != i || b.coedges[c].edge != i || b.coedges[a].mate != c {
            r.push(ViolationKind::EdgeRegistration, Entity::Edge(i), format!("coedges {a}, {c} are not a mate pair on this edge"));
        }
    }

    let mut owner: Vec<Option<usize>> = vec![None; nc];
    for (fi, f) in b.faces.iter().enumerate() {
        if f.loops.is_empty() {
            r.push(ViolationKind::EmptyFace, Entity::Face(fi), "face has no loops");
        }
        for (li, lp) in f.loops.iter().enumerate() {
            if lp.is_empty() {
                r.push(ViolationKind::EmptyLoop, Entity::Loop { face: fi, index: li }, "loop has no coedges");
            }
            for &c in lp {
                if c >= nc {
                    continue;
                }
                if let Some(prev_owner) = owner[c] {
                    r.push(ViolationKind::LoopMembership, Entity::Coedge(c), format!("listed in more than one loop (face {prev_owner} and face {fi})"));
                } else {
                    owner[c] = Some(fi);
                }
                if b.coedges[c].face != fi {
                    r.push(ViolationKind::LoopMembership, Entity::Coedge(c), format!("listed in face {fi} but belongs to face {}", b.coedges[c].face));
                }
            }
        }
    }
    if loops_sound {
        for (c, o) in owner.iter().enumerate() {
            if o.is_none() {
                r.push(ViolationKind::LoopMembership, Entity::Coedge(c), "not listed in any loop");
            }
        }
    }

    for (fi, f) in b.faces.iter().enumerate() {
        for (li, lp) in f.loops.iter().enumerate() {
            if lp.is_empty() || lp.iter().any(|&c| !ok(c)) {
                continue;
            }
            if let Some(detail) = loop_closure_defect(b, lp) {
                r.push(ViolationKind::LoopClosure, Entity::Loop { face: fi, index: li }, detail);
            }
        }
    }

    let k_t = b.vocabulary.len();
    for (fi, f) in b.faces.iter().enumerate() {
        if let Some(l) = f.labels {
            if l.op_type >= k_t {
                r.push(ViolationKind::LabelRange, Entity::Face(fi), format!("op_type {} outside vocabulary of {k_t}", l.op_type));
            }
        }
        if let Some(detail) = surface_defect(&f.surface.surface, f.surface.uv_domain) {
            r.push(ViolationKind::Geometry, Entity::Face(fi), detail);
        }
    }
    for (ei, e) in b.edges.iter().enumerate() {
        if let Some(detail) = curve_defect(&e.curve) {
            r.push(ViolationKind::Geometry, Entity::Edge(ei), detail);
        }
    }
    r
}

fn loop_closure_defect(b: &BRep, lp: &[usize]) -> Option<String> {
    let n = lp.len();
    let mut cur = lp[0];
    for step in 0..n {
        if cur != lp[step] {
            return Some(format!("next chain reaches coedge {cur} where {} is listed", lp[step]));
        }
        let nx = b.coedges[cur].next;
        if nx >= b.coedges.len() {
            return Some(format!("coedge {cur} has dangling next"));
        }
        if b.coedges[nx].prev != cur {
            return Some(format!("prev(next({cur})) = {} ≠ {cur}", b.coedges[nx].prev));
        }
        cur = nx;
    }
    if cur != lp[0] {
        return Some(format!("next chain does not return to coedge {} after {n} steps", lp[0]));
    }
    None
}

fn surface_defect(s: &Surface, domain: [f64; 4]) -> Option<String> {
    if domain.iter().any(|d| !d.is_finite()) {
        return Some("non-finite uv domain".into());
    }
    let check = |points: &[Vec3], dirs: &[Vec3], radii: &[f64]| -> Option<String> {
        if points.iter().any(|p| !p.is_finite()) {
            return Some("non-finite point".into());
        }
        if dirs.iter().any(|d| !is_unit(*d)) {
            return Some("direction is not unit length".into());
        }
        if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Some("radius must be positive".into());
        }
        None
    };
    match *s {
        Surface::Plane { origin, normal } => check(&[origin], &[normal], &[]),
        Surface::Cylinder { origin, axis, radius, .. } => check(&[origin], &[axis], &[radius]),
        Surface::Cone { origin, axis, radius, semi_angle, .. } => {
            if !(semi_angle.is_finite() && semi_angle.abs() < std::f64::consts::FRAC_PI_2) {
                return Some("cone semi-angle outside (-π/2, π/2)".into());
            }
            check(&[origin], &[axis], &[radius])
        }
        Surface::Sphere { center, axis, radius, .. } => check(&[center], &[axis], &[radius]),
        Surface::Torus { center, axis, major_radius, minor_radius, .. } => {
            check(&[center], &[axis], &[major_radius, minor_radius])
        }
        Surface::Other => None,
    }
}

fn curve_defect(c: &Curve) -> Option<String> {
    match c {
        Curve::Line { start, end } => (!start.is_finite() || !end.is_finite()).then(|| "non-finite point".into()),
        Curve::Arc { center, normal, radius, start, end } => {
            if ![center, start, end].iter().all(|p| p.is_finite()) {
                Some("non-finite point".into())
            } else if !is_unit(*normal) {
                Some("arc normal is not unit length".into())
            } else if !(radius.is_finite() && *radius > 0.0) {
                Some("radius must be positive".into())
            } else {
                None
            }
        }
        Curve::Other { points } => {
            if points.is_empty() {
                Some("polyline has no points".into())
            } else if points.iter().any(|p| !p.is_finite()) {
                Some("non-finite point".into())
            } else {
                None
            }
        }
    }
}
