//! Evaluation of the analytic surface and curve types.

use std::f64::consts::TAU;

use thiserror::Error;

use super::types::{BRep, Curve, Face, Surface, SurfaceGeom};
use crate::geom::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("unsupported surface kind `{0}` on face {1}")]
    UnsupportedSurface(&'static str, usize),
    #[error("rotation of non-planar face {0} is not supported")]
    RotationUnsupported(usize),
}

fn radial(x: Vec3, y: Vec3, u: f64) -> Vec3 {
    x * u.cos() + y * u.sin()
}

impl Surface {
    /// Point and outward unit normal at `(u, v)`. `None` for [`Surface::Other`].
    pub fn eval(&self, u: f64, v: f64) -> Option<(Vec3, Vec3)> {
        let flip = |n: Vec3, reversed: bool| if reversed { -n } else { n };
        match *self {
            Surface::Plane { origin, normal } => {
                let (x, y) = normal.orthonormal_frame();
                Some((origin + x * u + y * v, normal))
            }
            Surface::Cylinder { origin, axis, radius, reversed } => {
                let (x, y) = axis.orthonormal_frame();
                let r = radial(x, y, u);
                Some((origin + axis * v + r * radius, flip(r, reversed)))
            }
            Surface::Cone { origin, axis, radius, semi_angle, reversed } => {
                let (x, y) = axis.orthonormal_frame();
                let r = radial(x, y, u);
                let rho = radius + v * semi_angle.tan();
                let n = (r - axis * semi_angle.tan()).normalized()?;
                Some((origin + axis * v + r * rho, flip(n, reversed)))
            }
            Surface::Sphere { center, axis, radius, reversed } => {
                let (x, y) = axis.orthonormal_frame();
                let n = radial(x, y, u) * v.cos() + axis * v.sin();
                Some((center + n * radius, flip(n, reversed)))
            }
            Surface::Torus { center, axis, major_radius, minor_radius, reversed } => {
                let (x, y) = axis.orthonormal_frame();
                let r = radial(x, y, u);
                let n = r * v.cos() + axis * v.sin();
                Some((center + r * major_radius + n * minor_radius, flip(n, reversed)))
            }
            Surface::Other => None,
        }
    }
}

impl SurfaceGeom {
    pub fn domain_center(&self) -> (f64, f64) {
        let [u0, u1, v0, v1] = self.uv_domain;
        (0.5 * (u0 + u1), 0.5 * (v0 + v1))
    }
}

impl Curve {
    /// Signed sweep angle of an arc in `(0, 2π]`; 0 for other kinds.
    pub fn sweep(&self) -> f64 {
        match *self {
            Curve::Arc { center, normal, radius, start, end } => {
                let (e1, e2) = arc_frame(center, normal, start);
                let d = end - center;
                let mut theta = (d.dot(e2) / radius).atan2(d.dot(e1) / radius);
                if theta < 0.0 {
                    theta += TAU;
                }
                if theta < 1e-12 || start.distance(end) < 1e-12 * radius.max(1.0) {
                    TAU
                } else {
                    theta
                }
            }
            _ => 0.0,
        }
    }

    /// Point at normalized parameter `t ∈ [0, 1]` along the curve direction.
    pub fn point_at(&self, t: f64) -> Vec3 {
        match self {
            Curve::Line { start, end } => start.lerp(*end, t),
            Curve::Arc { center, normal, radius, start, end } => {
                if t <= 0.0 {
                    return *start;
                }
                if t >= 1.0 {
                    return *end;
                }
                let (e1, e2) = arc_frame(*center, *normal, *start);
                let theta = t * self.sweep();
                *center + radial(e1, e2, theta) * *radius
            }
            Curve::Other { points } => {
                if points.len() == 1 {
                    return points[0];
                }
                let s = t.clamp(0.0, 1.0) * (points.len() - 1) as f64;
                let i = (s.floor() as usize).min(points.len() - 2);
                points[i].lerp(points[i + 1], s - i as f64)
            }
        }
    }

    pub fn start(&self) -> Vec3 {
        self.point_at(0.0)
    }

    pub fn end(&self) -> Vec3 {
        self.point_at(1.0)
    }

    pub fn length(&self) -> f64 {
        match self {
            Curve::Line { start, end } => start.distance(*end),
            Curve::Arc { radius, .. } => radius * self.sweep(),
            Curve::Other { points } => points.windows(2).map(|w| w[0].distance(w[1])).sum(),
        }
    }

    /// `n` points at uniform parameter steps, endpoints included.
    pub fn samples(&self, n: usize) -> Vec<Vec3> {
        match n {
            0 => Vec::new(),
            1 => vec![self.point_at(0.5)],
            _ => (0..n)
                .map(|i| self.point_at(i as f64 / (n - 1) as f64))
                .collect(),
        }
    }

    /// Contribution `½∮ p × dp` of this curve (forward direction) to a loop's area vector.
    pub fn area_moment(&self) -> Vec3 {
        match *self {
            Curve::Line { start, end } => start.cross(end) * 0.5,
            Curve::Arc { center, normal, radius, start, end } => {
                let sweep = self.sweep();
                let end_pt = if sweep >= TAU { start } else { end };
                (center.cross(end_pt - start) + normal * (radius * radius * sweep)) * 0.5
            }
            Curve::Other { ref points } => points
                .windows(2)
                .map(|w| w[0].cross(w[1]) * 0.5)
                .fold(Vec3::ZERO, |a, b| a + b),
        }
    }
}

fn arc_frame(center: Vec3, normal: Vec3, start: Vec3) -> (Vec3, Vec3) {
    let e1 = (start - center).normalized().unwrap_or_else(|| normal.orthonormal_frame().0);
    (e1, normal.cross(e1))
}

/// Points whose bounding box is used as the curve's bounding box.
pub fn curve_bbox_points(c: &Curve) -> Vec<Vec3> {
    match c {
        Curve::Line { start, end } => vec![*start, *end],
        Curve::Arc { .. } => c.samples(65),
        Curve::Other { points } => points.clone(),
    }
}

/// Analytic face area. Planar faces integrate their loops exactly; curved faces
/// integrate the untrimmed uv domain.
pub fn face_area(b: &BRep, face: &Face) -> f64 {
    let [u0, u1, v0, v1] = face.surface.uv_domain;
    let (du, dv) = (u1 - u0, v1 - v0);
    match face.surface.surface {
        Surface::Plane { normal, .. } => {
            let mut area = Vec3::ZERO;
            for c in face.coedges() {
                let co = &b.coedges[c];
                let m = b.edges[co.edge].curve.area_moment();
                area += if co.reversed { -m } else { m };
            }
            area.dot(normal).abs()
        }
        Surface::Cylinder { radius, .. } => radius * du.abs() * dv.abs(),
        Surface::Cone { radius, semi_angle, .. } => {
            let t = semi_angle.tan();
            let ring = radius * dv + t * (v1 * v1 - v0 * v0) * 0.5;
            (du * ring / semi_angle.cos()).abs()
        }
        Surface::Sphere { radius, .. } => (radius * radius * du * (v1.sin() - v0.sin())).abs(),
        Surface::Torus { major_radius, minor_radius, .. } => {
            (minor_radius * du * (major_radius * dv + minor_radius * (v1.sin() - v0.sin()))).abs()
        }
        Surface::Other => 0.0,
    }
}

/// A similarity transform `p ↦ scale · R p + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Similarity {
    pub rotation: [[f64; 3]; 3],
    pub scale: f64,
    pub translation: Vec3,
}

impl Similarity {
    pub const IDENTITY_ROTATION: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    pub fn scale_translate(scale: f64, translation: Vec3) -> Self {
        Similarity { rotation: Self::IDENTITY_ROTATION, scale, translation }
    }

    /// Rotation by `angle` radians about the unit `axis` (Rodrigues).
    pub fn rotation(axis: Vec3, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let k = axis;
        let t = 1.0 - c;
        let rotation = [
            [c + k.x * k.x * t, k.x * k.y * t - k.z * s, k.x * k.z * t + k.y * s],
            [k.y * k.x * t + k.z * s, c + k.y * k.y * t, k.y * k.z * t - k.x * s],
            [k.z * k.x * t - k.y * s, k.z * k.y * t + k.x * s, c + k.z * k.z * t],
        ];
        Similarity { rotation, scale: 1.0, translation: Vec3::ZERO }
    }

    pub fn is_pure_scale_translate(&self) -> bool {
        self.rotation == Self::IDENTITY_ROTATION
    }

    pub fn dir(&self, d: Vec3) -> Vec3 {
        let r = &self.rotation;
        Vec3::new(
            r[0][0] * d.x + r[0][1] * d.y + r[0][2] * d.z,
            r[1][0] * d.x + r[1][1] * d.y + r[1][2] * d.z,
            r[2][0] * d.x + r[2][1] * d.y + r[2][2] * d.z,
        )
    }

    pub fn point(&self, p: Vec3) -> Vec3 {
        self.dir(p) * self.scale + self.translation
    }

    fn curve(&self, c: &Curve) -> Curve {
        match c {
            Curve::Line { start, end } => Curve::Line { start: self.point(*start), end: self.point(*end) },
            Curve::Arc { center, normal, radius, start, end } => Curve::Arc {
                center: self.point(*center),
                normal: self.dir(*normal),
                radius: radius * self.scale,
                start: self.point(*start),
                end: self.point(*end),
            },
            Curve::Other { points } => Curve::Other { points: points.iter().map(|p| self.point(*p)).collect() },
        }
    }

    fn surface(&self, s: &Surface) -> Surface {
        let sc = self.scale;
        match *s {
            Surface::Plane { origin, normal } => Surface::Plane { origin: self.point(origin), normal: self.dir(normal) },
            Surface::Cylinder { origin, axis, radius, reversed } => Surface::Cylinder {
                origin: self.point(origin),
                axis: self.dir(axis),
                radius: radius * sc,
                reversed,
            },
            Surface::Cone { origin, axis, radius, semi_angle, reversed } => Surface::Cone {
                origin: self.point(origin),
                axis: self.dir(axis),
                radius: radius * sc,
                semi_angle,
                reversed,
            },
            Surface::Sphere { center, axis, radius, reversed } => Surface::Sphere {
                center: self.point(center),
                axis: self.dir(axis),
                radius: radius * sc,
                reversed,
            },
            Surface::Torus { center, axis, major_radius, minor_radius, reversed } => Surface::Torus {
                center: self.point(center),
                axis: self.dir(axis),
                major_radius: major_radius * sc,
                minor_radius: minor_radius * sc,
                reversed,
            },
            Surface::Other => Surface::Other,
        }
    }

    fn domain(&self, s: &Surface, d: [f64; 4]) -> [f64; 4] {
        let sc = self.scale;
        match s {
            Surface::Plane { .. } => [d[0] * sc, d[1] * sc, d[2] * sc, d[3] * sc],
            Surface::Cylinder { .. } | Surface::Cone { .. } => [d[0], d[1], d[2] * sc, d[3] * sc],
            _ => d,
        }
    }
}

impl BRep {
    /// Applies a similarity transform to all geometry; topology and labels are unchanged.
    ///
    /// Rotations re-derive plane uv domains from the face loops and are rejected for
    /// curved faces, whose angular parameters are tied to the axis frame.
    pub fn transformed(&self, t: &Similarity) -> Result<BRep, GeometryError> {
        let mut out = self.clone();
        for e in &mut out.edges {
            e.curve = t.curve(&e.curve);
        }
        let pure = t.is_pure_scale_translate();
        for i in 0..out.faces.len() {
            let old = &self.faces[i].surface;
            let surface = t.surface(&old.surface);
            let uv_domain = if pure {
                t.domain(&old.surface, old.uv_domain)
            } else if let Surface::Plane { origin, normal } = surface {
                plane_domain_from_loops(&out, &out.faces[i], origin, normal)
            } else {
                return Err(GeometryError::RotationUnsupported(i));
            };
            out.faces[i].surface = SurfaceGeom { surface, uv_domain };
        }
        Ok(out)
    }
}

/// Bounding rectangle, in the plane frame, of a face's outer loop edge samples.
pub fn plane_domain_from_loops(b: &BRep, face: &Face, origin: Vec3, normal: Vec3) -> [f64; 4] {
    let (x, y) = normal.orthonormal_frame();
    let mut d = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
    for &c in face.loops.first().into_iter().flatten() {
        for p in curve_bbox_points(&b.edges[b.coedges[c].edge].curve) {
            let (u, v) = ((p - origin).dot(x), (p - origin).dot(y));
            d[0] = d[0].min(u);
            d[1] = d[1].max(u);
            d[2] = d[2].min(v);
            d[3] = d[3].max(v);
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn quarter_arc_length_and_midpoint() {
        let arc = Curve::Arc {
            center: Vec3::ZERO,
            normal: Vec3::Z,
            radius: 2.0,
            start: Vec3::new(2.0, 0.0, 0.0),
            end: Vec3::new(0.0, 2.0, 0.0),
        };
        assert!((arc.sweep() - PI / 2.0).abs() < 1e-14);
        assert!((arc.length() - PI).abs() < 1e-14);
        let m = arc.point_at(0.5);
        assert!((m - Vec3::new(2.0f64.sqrt(), 2.0f64.sqrt(), 0.0)).norm() < 1e-14);
    }

    #[test]
    fn full_circle_area_moment_is_disc_area() {
        let c = Curve::Arc {
            center: Vec3::new(3.0, 1.0, 0.0),
            normal: Vec3::Z,
            radius: 1.5,
            start: Vec3::new(4.5, 1.0, 0.0),
            end: Vec3::new(4.5, 1.0, 0.0),
        };
        let a = c.area_moment();
        assert!((a.z - PI * 1.5 * 1.5).abs() < 1e-12);
    }

    #[test]
    fn cone_and_torus_normals_are_unit_and_orthogonal() {
        let cone = Surface::Cone {
            origin: Vec3::ZERO,
            axis: Vec3::Z,
            radius: 1.0,
            semi_angle: 0.3,
            reversed: false,
        };
        let eps = 1e-6;
        let (p, n) = cone.eval(0.4, 0.2).unwrap();
        let (pu, _) = cone.eval(0.4 + eps, 0.2).unwrap();
        let (pv, _) = cone.eval(0.4, 0.2 + eps).unwrap();
        assert!((n.norm() - 1.0).abs() < 1e-12);
        assert!(n.dot((pu - p) / eps).abs() < 1e-5);
        assert!(n.dot((pv - p) / eps).abs() < 1e-5);
        let torus = Surface::Torus {
            center: Vec3::ZERO,
            axis: Vec3::Z,
            major_radius: 2.0,
            minor_radius: 0.5,
            reversed: false,
        };
        let (p, n) = torus.eval(1.0, 0.7).unwrap();
        let (pu, _) = torus.eval(1.0 + eps, 0.7).unwrap();
        assert!(n.dot((pu - p) / eps).abs() < 1e-5);
    }

    #[test]
    fn rotation_preserves_lengths() {
        let r = Similarity::rotation(Vec3::new(1.0, 2.0, 2.0) / 3.0, 0.7);
        let a = Vec3::new(0.3, -1.0, 2.0);
        assert!((r.dir(a).norm() - a.norm()).abs() < 1e-14);
    }
}
