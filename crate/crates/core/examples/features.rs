//! Feature matrices of a generated model.

use cadops::features::featurize;
use cadops::synth::{generate_model, GenParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let g = generate_model(3, &GenParams { steps_min: 2, steps_max: 2, ..Default::default() })?;
    let fm = featurize(&g.brep, 5)?;
    let (df, de, dc) = fm.dims();
    println!("{}: {} steps", g.brep.name, g.k());
    println!("F {} x {df}", fm.f.rows());
    println!("E {} x {de}", fm.e.rows());
    println!("C {} x {dc}", fm.c.rows());
    let row = fm.f.row(0);
    println!("face 0 head: {:?}", &row[..8.min(row.len())]);
    Ok(())
}
