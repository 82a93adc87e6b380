//! Builds a box, writes it in the canonical JSON format, reads it back and
//! shows what validation reports for a broken copy.

use cadops::brep::builder::box_solid;
use cadops::brep::{parse_brep, serialize_brep, validate_topology};
use cadops::geom::Vec3;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let b = box_solid(Vec3::ZERO, Vec3::new(2.0, 1.0, 0.5));
    let text = serialize_brep(&b)?;
    let back = parse_brep(&text)?;
    assert_eq!(back, b);
    assert_eq!(serialize_brep(&back)?, text);
    println!(
        "box: {} faces, {} edges, {} coedges, {} bytes, round trip exact",
        b.num_faces(),
        b.num_edges(),
        b.num_coedges(),
        text.len()
    );

    let mut broken = b.clone();
    broken.coedges[0].mate = broken.coedges[0].id;
    let report = validate_topology(&broken);
    println!("broken copy: {} violations", report.violations.len());
    for v in report.violations.iter().take(5) {
        println!("  {v}");
    }
    Ok(())
}
