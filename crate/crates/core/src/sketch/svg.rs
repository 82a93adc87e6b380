use std::fmt::Write as _;

use super::{Point2, Sketch, SketchError};

const MARGIN: f64 = 0.05;
const JOIN_EPS: f64 = 1e-9;

fn same(p: Point2, q: Point2) -> bool {
    (p[0] - q[0]).abs() <= JOIN_EPS && (p[1] - q[1]).abs() <= JOIN_EPS
}

/// Links segments that share endpoints into polylines, in first-segment order.
/// Returns each chain's points and whether it closes on itself.
pub fn chains(segments: &[[Point2; 2]]) -> Vec<(Vec<Point2>, bool)> {
    let mut used = vec![false; segments.len()];
    let mut out = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let mut pts = vec![segments[start][0], segments[start][1]];
        // Grow forward, then backward.
        for forward in [true, false] {
            loop {
                let end = if forward { *pts.last().unwrap() } else { pts[0] };
                let next = (0..segments.len()).find(|&i| !used[i] && (same(segments[i][0], end) || same(segments[i][1], end)));
                let Some(i) = next else { break };
                used[i] = true;
                let s = segments[i];
                let far = if same(s[0], end) { s[1] } else { s[0] };
                if forward {
                    pts.push(far);
                } else {
                    pts.insert(0, far);
                }
            }
        }
        let closed = pts.len() > 2 && same(pts[0], *pts.last().unwrap());
        if closed {
            pts.pop();
        }
        out.push((pts, closed));
    }
    out
}

fn num(x: f64) -> String {
    // `+ 0.0` turns -0 into 0.
    format!("{}", x + 0.0)
}

/// Square viewBox around the segments: centered on their bounding box, half
/// size = larger half extent plus 5% of it. Returns `(min_x, min_y, size)` in
/// SVG coordinates, where y points down.
pub fn view_box(segments: &[[Point2; 2]]) -> Option<(f64, f64, f64)> {
    let pts = segments.iter().flatten();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in pts {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    if !lo[0].is_finite() {
        return None;
    }
    let c = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let mut h = ((hi[0] - lo[0]) / 2.0).max((hi[1] - lo[1]) / 2.0);
    if !(h > 0.0) {
        h = 1.0;
    }
    let half = h * (1.0 + MARGIN);
    Some((c[0] - half, -c[1] - half, 2.0 * half))
}

/// One `<path>` per connected chain, y flipped so the sketch reads with `v` up.
pub fn export_svg(sketch: &Sketch) -> Result<String, SketchError> {
    if sketch.segments.is_empty() {
        return Err(SketchError::EmptySketch);
    }
    let (x0, y0, size) = view_box(&sketch.segments).ok_or(SketchError::EmptySketch)?;
    let stroke = size / 400.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{} {} {} {}" width="400" height="400">"#,
        num(x0),
        num(y0),
        num(size),
        num(size)
    );
    let _ = writeln!(s, r#"<g fill="none" stroke="black" stroke-width="{}">"#, num(stroke));
    for (pts, closed) in chains(&sketch.segments) {
        let mut d = String::new();
        for (i, p) in pts.iter().enumerate() {
            let _ = write!(d, "{}{} {}", if i == 0 { "M" } else { " L" }, num(p[0]), num(-p[1]));
        }
        if closed {
            d.push_str(" Z");
        }
        let _ = writeln!(s, r#"<path d="{d}"/>"#);
    }
    s.push_str("</g>\n");
    if !sketch.grid_points.is_empty() {
        let _ = writeln!(s, r#"<g fill="gray">"#);
        for p in &sketch.grid_points {
            let _ = writeln!(s, r#"<circle cx="{}" cy="{}" r="{}"/>"#, num(p[0]), num(-p[1]), num(2.0 * stroke));
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use crate::sketch::{polygon_segments, SketchStatus};

    fn square() -> Sketch {
        Sketch {
            step_id: 0,
            status: SketchStatus::Ok,
            axis: Some(Vec3::Z),
            axis_source: None,
            origin: Vec3::ZERO,
            basis: Some((Vec3::X, Vec3::Y)),
            segments: polygon_segments(&[[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]),
            grid_points: Vec::new(),
            source_faces: vec![0, 1, 2, 3],
        }
    }

    #[test]
    fn unit_square_fit() {
        let svg = export_svg(&square()).unwrap();
        assert!(svg.contains(r#"viewBox="-1.05 -1.05 2.1 2.1""#), "{svg}");
        assert_eq!(svg.matches("<path").count(), 1);
        assert_eq!(svg.matches(" L").count(), 3);
        assert!(svg.contains(" Z\""));
    }

    #[test]
    fn export_is_deterministic() {
        assert_eq!(export_svg(&square()).unwrap(), export_svg(&square()).unwrap());
    }

    #[test]
    fn empty_sketch_is_an_error() {
        let s = Sketch { segments: vec![], status: SketchStatus::Degenerate, ..square() };
        assert_eq!(export_svg(&s), Err(SketchError::EmptySketch));
    }

    #[test]
    fn disjoint_segments_make_separate_paths() {
        let segs = vec![[[0.0, 0.0], [1.0, 0.0]], [[5.0, 5.0], [6.0, 5.0]], [[1.0, 0.0], [1.0, 1.0]]];
        let c = chains(&segs);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0], (vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]], false));
        let (x0, y0, size) = view_box(&segs).unwrap();
        assert!((x0 + 0.15).abs() < 1e-12 && (y0 + 5.65).abs() < 1e-12 && (size - 6.3).abs() < 1e-12);
    }
}
