//! Recovers the extrusion sketches of a generated model from its labels and
//! writes them as SVG.
//!
//! cargo run --release --example sketch_svg -- [out_dir] [seed]

use std::path::PathBuf;

use cadops::model::ground_truth_prediction;
use cadops::sketch::{export_svg, recover_sketches, SketchOptions, SketchStatus};
use cadops::synth::{generate_model, GenParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let out = args.get(1).map_or_else(|| std::env::temp_dir().join("cadops_sketches"), PathBuf::from);
    let seed = args.get(2).map_or(Ok(12), |s| s.parse())?;
    std::fs::create_dir_all(&out)?;

    let g = generate_model(seed, &GenParams { steps_min: 3, steps_max: 3, ..Default::default() })?;
    let pred = ground_truth_prediction(&g.brep).ok_or("unlabeled model")?;
    let opts = SketchOptions { include_cuts: true, project_grid: true, ..Default::default() };
    for s in recover_sketches(&g.brep, &pred, &opts)? {
        if s.status == SketchStatus::Degenerate {
            println!("step {}: degenerate", s.step_id);
            continue;
        }
        let path = out.join(format!("step{}.svg", s.step_id));
        std::fs::write(&path, export_svg(&s)?)?;
        let a = s.axis.unwrap();
        println!(
            "step {}: axis ({:.3}, {:.3}, {:.3}), {} segments -> {}",
            s.step_id,
            a.x,
            a.y,
            a.z,
            s.segments.len(),
            path.display()
        );
    }
    Ok(())
}
