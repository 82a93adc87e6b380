//! Procedural labeled solids built from a sequence of extrusions and pockets.
//!
//! Step 0 extrudes a convex base profile along `+z`. Every later step either
//! extrudes a boss out of a planar `extrude_end` face or sinks a rectangular blind
//! pocket into one. The footprint of a step sits strictly inside its parent face
//! and clear of the footprints already placed there, so the parent only gains an
//! inner loop and no face is ever split.

mod dataset;

pub use dataset::{generate_dataset, split_sizes, Manifest, ManifestEntry, Split, MANIFEST_FILE, SPLIT_RATIOS};

use std::collections::HashMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::brep::builder::{extrude_sides, PolyhedronBuilder};
use crate::brep::{BRep, FaceLabels, TypeVocabulary};
use crate::geom::Vec3;
use crate::rng::SplitMix64;

/// Largest number of steps a generated model may have.
pub const MAX_STEPS: usize = 16;
pub const PLACEMENT_RETRIES: usize = 100;

const EXTRUDE_SIDE: usize = 0;
const EXTRUDE_END: usize = 1;
const CUT_SIDE: usize = 2;
const CUT_END: usize = 3;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("no valid placement for step {step} after {PLACEMENT_RETRIES} attempts")]
    GenerationRetryExceeded { step: usize },
    #[error("io error: {0}")]
    Io(String),
    #[error("generated model is not a closed solid: {0}")]
    Build(#[from] crate::brep::builder::BuildError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Rect,
    ConvexPolygon,
    /// Rectangles and polygons with equal probability, per step.
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenParams {
    pub seed: u64,
    pub n_models: usize,
    pub steps_min: usize,
    pub steps_max: usize,
    pub profile: ProfileKind,
    pub allow_cut: bool,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { seed: 0, n_models: 100, steps_min: 1, steps_max: 4, profile: ProfileKind::Mixed, allow_cut: true }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<(), GenError> {
        if self.steps_min < 1 || self.steps_min > self.steps_max || self.steps_max > MAX_STEPS {
            return Err(GenError::InvalidParams(format!(
                "steps must satisfy 1 <= {} <= {} <= {MAX_STEPS}",
                self.steps_min, self.steps_max
            )));
        }
        Ok(())
    }

    /// Seed of the i-th model of a dataset.
    pub fn model_seed(&self, i: usize) -> u64 {
        SplitMix64::derive(self.seed, i as u64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Extrude,
    Cut,
}

/// Ground truth of one construction step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub kind: StepKind,
    /// Profile polygon on the sketch plane, counter-clockwise about `axis` for
    /// extrusions and about `-axis` for cuts.
    pub profile: Vec<Vec3>,
    /// Direction in which the profile was swept.
    pub axis: Vec3,
    pub distance: f64,
    pub parent_face: Option<usize>,
    pub faces: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedModel {
    pub brep: BRep,
    pub steps: Vec<StepRecord>,
}

impl GeneratedModel {
    pub fn k(&self) -> usize {
        self.steps.len()
    }
}

/// Disk in the xy plane.
#[derive(Clone, Copy, Debug)]
struct Disk {
    c: (f64, f64),
    r: f64,
}

struct Work {
    b: PolyhedronBuilder,
    /// Height of the extrusion that created each eligible end face.
    eligible: Vec<(usize, f64)>,
    footprints: HashMap<usize, Vec<Disk>>,
    steps: Vec<StepRecord>,
}

fn labels(op_type: usize, step: usize) -> Option<FaceLabels> {
    Some(FaceLabels { op_type, op_step: step as u64 })
}

/// Convex polygon counter-clockwise in the xy plane, inscribed in the disk.
fn sample_profile(rng: &mut SplitMix64, kind: ProfileKind, d: Disk, min_vertices: u64) -> Vec<(f64, f64)> {
    let rect = match kind {
        ProfileKind::Rect => true,
        ProfileKind::ConvexPolygon => false,
        ProfileKind::Mixed => rng.next_f64() < 0.5,
    };
    let theta = rng.uniform(0.0, TAU);
    let angles: Vec<f64> = if rect {
        let a = rng.uniform(0.35, 1.2);
        vec![-a, a, std::f64::consts::PI - a, std::f64::consts::PI + a]
    } else {
        // Jittered angles keep every gap in (0, π), so the polygon is convex and
        // contains the disk center.
        let n = rng.range_inclusive(min_vertices, 8) as usize;
        (0..n).map(|i| TAU * (i as f64 + 0.6 * rng.next_f64()) / n as f64).collect()
    };
    angles.iter().map(|&a| (d.c.0 + d.r * (a + theta).cos(), d.c.1 + d.r * (a + theta).sin())).collect()
}

fn sample_rect(rng: &mut SplitMix64, d: Disk) -> Vec<(f64, f64)> {
    sample_profile(rng, ProfileKind::Rect, d, 4)
}

/// Distance from `p` to the nearest edge line of the convex polygon, or `None`
/// if `p` is outside it.
fn inside_distance(poly: &[(f64, f64)], p: (f64, f64)) -> Option<f64> {
    let n = poly.len();
    // Orientation-independent: the signed area decides which side is inside.
    let area: f64 = (0..n).map(|i| poly[i].0 * poly[(i + 1) % n].1 - poly[(i + 1) % n].0 * poly[i].1).sum();
    let sign = area.signum();
    let mut best = f64::INFINITY;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let (ex, ey) = (b.0 - a.0, b.1 - a.1);
        let len = (ex * ex + ey * ey).sqrt();
        let s = sign * (ex * (p.1 - a.1) - ey * (p.0 - a.0)) / len;
        if s <= 0.0 {
            return None;
        }
        best = best.min(s);
    }
    Some(best)
}

impl Work {
    fn face_polygon(&self, f: usize) -> (Vec<(f64, f64)>, f64) {
        let lp = &self.b.faces[f].loops[0];
        let pts: Vec<(f64, f64)> = lp.iter().map(|&v| (self.b.vertices[v].x, self.b.vertices[v].y)).collect();
        (pts, self.b.vertices[lp[0]].z)
    }

    /// A footprint disk strictly inside face `f` and clear of its existing footprints.
    fn place(&self, rng: &mut SplitMix64, f: usize) -> Option<Disk> {
        const MARGIN: f64 = 0.03;
        const R_MIN: f64 = 0.05;
        let (poly, _) = self.face_polygon(f);
        let (mut lo, mut hi) = ((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY));
        for &(x, y) in &poly {
            lo = (lo.0.min(x), lo.1.min(y));
            hi = (hi.0.max(x), hi.1.max(y));
        }
        let c = (rng.uniform(lo.0, hi.0), rng.uniform(lo.1, hi.1));
        let mut room = inside_distance(&poly, c)?;
        for d in self.footprints.get(&f).into_iter().flatten() {
            room = room.min(((c.0 - d.c.0).powi(2) + (c.1 - d.c.1).powi(2)).sqrt() - d.r);
        }
        let room = room - MARGIN;
        if room < R_MIN {
            return None;
        }
        let r = room * rng.uniform(0.5, 0.85);
        (r >= R_MIN).then_some(Disk { c, r })
    }

    fn extrude_step(&mut self, rng: &mut SplitMix64, step: usize, profile: ProfileKind) -> bool {
        let (fi, _) = self.eligible[rng.below(self.eligible.len() as u64) as usize];
        let Some(disk) = self.place(rng, fi) else { return false };
        let n = self.b.faces[fi].normal;
        let (_, z) = self.face_polygon(fi);
        let h = rng.uniform(0.2, 0.8);
        let mut poly = sample_profile(rng, profile, disk, 3);
        if n.z < 0.0 {
            poly.reverse();
        }
        let base: Vec<usize> = poly.iter().map(|&(x, y)| self.b.add_vertex(Vec3::new(x, y, z))).collect();
        let top: Vec<usize> = poly.iter().map(|&(x, y)| self.b.add_vertex(Vec3::new(x, y, z + h * n.z))).collect();
        self.b.faces[fi].loops.push(base.iter().rev().copied().collect());
        let cap = self.b.add_face(n, top.clone(), labels(EXTRUDE_END, step));
        let sides = extrude_sides(&mut self.b, &base, &top, n, labels(EXTRUDE_SIDE, step));
        self.footprints.entry(fi).or_default().push(disk);
        self.eligible.push((cap, h));
        let mut faces = sides;
        faces.push(cap);
        faces.sort_unstable();
        self.steps.push(StepRecord {
            step,
            kind: StepKind::Extrude,
            profile: base.iter().map(|&v| self.b.vertices[v]).collect(),
            axis: n,
            distance: h,
            parent_face: Some(fi),
            faces,
        });
        true
    }

    fn pocket_step(&mut self, rng: &mut SplitMix64, step: usize) -> bool {
        let (fi, height) = self.eligible[rng.below(self.eligible.len() as u64) as usize];
        let Some(disk) = self.place(rng, fi) else { return false };
        let n = self.b.faces[fi].normal;
        let (_, z) = self.face_polygon(fi);
        let depth = height * rng.uniform(0.2, 0.45);
        let mut poly = sample_rect(rng, disk);
        if n.z < 0.0 {
            poly.reverse();
        }
        let rim: Vec<usize> = poly.iter().map(|&(x, y)| self.b.add_vertex(Vec3::new(x, y, z))).collect();
        let floor: Vec<usize> =
            poly.iter().map(|&(x, y)| self.b.add_vertex(Vec3::new(x, y, z - depth * n.z))).collect();
        self.b.faces[fi].loops.push(rim.iter().rev().copied().collect());
        let walls = extrude_sides(&mut self.b, &rim, &floor, n, labels(CUT_SIDE, step));
        let bottom = self.b.add_face(n, floor.clone(), labels(CUT_END, step));
        self.footprints.entry(fi).or_default().push(disk);
        let mut faces = walls;
        faces.push(bottom);
        faces.sort_unstable();
        self.steps.push(StepRecord {
            step,
            kind: StepKind::Cut,
            profile: rim.iter().map(|&v| self.b.vertices[v]).collect(),
            axis: -n,
            distance: depth,
            parent_face: Some(fi),
            faces,
        });
        true
    }
}

/// Number of steps drawn uniformly from `[steps_min, steps_max]`.
pub fn sample_step_count(rng: &mut SplitMix64, params: &GenParams) -> usize {
    rng.range_inclusive(params.steps_min as u64, params.steps_max as u64) as usize
}

/// Generates one fully labeled model. The same seed and parameters always give the
/// same model.
pub fn generate_model(seed: u64, params: &GenParams) -> Result<GeneratedModel, GenError> {
    params.validate()?;
    let mut rng = SplitMix64::new(seed);
    let k = sample_step_count(&mut rng, params);

    let mut w = Work { b: PolyhedronBuilder::new(), eligible: Vec::new(), footprints: HashMap::new(), steps: Vec::new() };

    let radius = rng.uniform(1.5, 2.5);
    let aspect = rng.uniform(0.6, 1.0);
    let mut base = sample_profile(&mut rng, params.profile, Disk { c: (0.0, 0.0), r: radius }, 4);
    for p in &mut base {
        p.1 *= aspect;
    }
    let height = rng.uniform(0.8, 2.0);
    let bottom_v: Vec<usize> = base.iter().map(|&(x, y)| w.b.add_vertex(Vec3::new(x, y, 0.0))).collect();
    let top_v: Vec<usize> = base.iter().map(|&(x, y)| w.b.add_vertex(Vec3::new(x, y, height))).collect();
    let bottom = w.b.add_face(-Vec3::Z, bottom_v.iter().rev().copied().collect(), labels(EXTRUDE_END, 0));
    let top = w.b.add_face(Vec3::Z, top_v.clone(), labels(EXTRUDE_END, 0));
    let sides = extrude_sides(&mut w.b, &bottom_v, &top_v, Vec3::Z, labels(EXTRUDE_SIDE, 0));
    let mut faces = vec![bottom, top];
    faces.extend(sides);
    w.steps.push(StepRecord {
        step: 0,
        kind: StepKind::Extrude,
        profile: bottom_v.iter().map(|&v| w.b.vertices[v]).collect(),
        axis: Vec3::Z,
        distance: height,
        parent_face: None,
        faces,
    });
    w.eligible = vec![(bottom, height), (top, height)];

    for step in 1..k {
        let mut placed = false;
        for _ in 0..PLACEMENT_RETRIES {
            let cut = params.allow_cut && rng.next_f64() < 0.5;
            placed = if cut { w.pocket_step(&mut rng, step) } else { w.extrude_step(&mut rng, step, params.profile) };
            if placed {
                break;
            }
        }
        if !placed {
            return Err(GenError::GenerationRetryExceeded { step });
        }
    }

    let brep = w.b.build(&format!("synth_{seed:016x}"), TypeVocabulary::extrude_family())?;
    Ok(GeneratedModel { brep, steps: w.steps })
}

/// The models of a dataset, in index order.
pub fn generate_models(params: &GenParams) -> Result<Vec<GeneratedModel>, GenError> {
    (0..params.n_models).map(|i| generate_model(params.model_seed(i), params)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brep::{serialize_brep, validate_topology};

    fn params(min: usize, max: usize) -> GenParams {
        GenParams { steps_min: min, steps_max: max, ..Default::default() }
    }

    #[test]
    fn single_rect_extrusion_is_a_labeled_box() {
        let p = GenParams { profile: ProfileKind::Rect, ..params(1, 1) };
        let m = generate_model(3, &p).unwrap();
        let b = &m.brep;
        assert_eq!(b.num_faces(), 6);
        let labels = b.labels().unwrap();
        let end = b.vocabulary.index_of("extrude_end").unwrap();
        let side = b.vocabulary.index_of("extrude_side").unwrap();
        assert_eq!(labels.iter().filter(|l| l.op_type == end).count(), 2);
        assert_eq!(labels.iter().filter(|l| l.op_type == side).count(), 4);
        assert!(labels.iter().all(|l| l.op_step == 0));
    }

    #[test]
    fn pocket_adds_inner_loop_and_five_faces() {
        let p = GenParams { profile: ProfileKind::Rect, ..params(2, 2) };
        let m = (0..200u64)
            .map(|s| generate_model(s, &p).unwrap())
            .find(|m| m.steps[1].kind == StepKind::Cut)
            .unwrap();
        let b = &m.brep;
        assert_eq!(b.num_faces(), 11);
        let parent = m.steps[1].parent_face.unwrap();
        assert_eq!(b.faces[parent].loops.len(), 2);
        let labels = b.labels().unwrap();
        let by = |name: &str| {
            let t = b.vocabulary.index_of(name).unwrap();
            labels.iter().filter(|l| l.op_type == t && l.op_step == 1).count()
        };
        assert_eq!((by("cut_extrude_side"), by("cut_extrude_end")), (4, 1));
        assert!(validate_topology(b).is_valid());
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let p = params(1, 6);
        for s in 0..5 {
            let a = serialize_brep(&generate_model(s, &p).unwrap().brep).unwrap();
            let b = serialize_brep(&generate_model(s, &p).unwrap().brep).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn generated_models_are_valid_and_consistently_labeled() {
        let p = GenParams { n_models: 100, ..params(1, 6) };
        for m in generate_models(&p).unwrap() {
            let b = &m.brep;
            let report = validate_topology(b);
            assert!(report.is_valid(), "{}: {:?}", b.name, report.violations);
            let labels = b.labels().unwrap();
            let mut steps: Vec<u64> = labels.iter().map(|l| l.op_step).collect();
            steps.sort_unstable();
            steps.dedup();
            assert_eq!(steps, (0..m.k() as u64).collect::<Vec<_>>());
            for s in 0..m.k() as u64 {
                let groups: Vec<&str> = labels
                    .iter()
                    .filter(|l| l.op_step == s)
                    .map(|l| b.vocabulary.grouped(b.vocabulary.name(l.op_type).unwrap()).unwrap())
                    .collect();
                assert!(groups.windows(2).all(|w| w[0] == w[1]));
            }
            for r in &m.steps {
                for &f in &r.faces {
                    assert_eq!(labels[f].op_step, r.step as u64);
                }
            }
        }
    }

    #[test]
    fn deep_models_find_placements() {
        let p = GenParams { n_models: 500, ..params(8, 10) };
        let failed = (0..p.n_models).filter(|&i| generate_model(p.model_seed(i), &p).is_err()).count();
        assert_eq!(failed, 0);
    }

    #[test]
    fn step_counts_are_uniform() {
        let p = GenParams { n_models: 1000, ..params(1, 4) };
        let mut hist = [0usize; 4];
        for m in generate_models(&p).unwrap() {
            hist[m.k() - 1] += 1;
        }
        let chi2: f64 = hist.iter().map(|&o| (o as f64 - 250.0).powi(2) / 250.0).sum();
        // 99th percentile of chi-square with 3 degrees of freedom.
        assert!(chi2 < 11.345, "{hist:?} chi2 {chi2}");
    }

    #[test]
    fn invalid_step_range_is_rejected() {
        assert!(matches!(generate_model(0, &params(3, 2)), Err(GenError::InvalidParams(_))));
        assert!(matches!(generate_model(0, &params(0, 2)), Err(GenError::InvalidParams(_))));
    }
}
