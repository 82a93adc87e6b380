//! Generates a labeled dataset and summarizes its manifest.
//!
//! cargo run --release --example generate_dataset -- [out_dir] [count] [seed]

use std::collections::BTreeMap;
use std::path::PathBuf;

use cadops::synth::{generate_dataset, GenParams, Split};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let out = args.get(1).map_or_else(|| std::env::temp_dir().join("cadops_dataset"), PathBuf::from);
    let n_models = args.get(2).map_or(Ok(20), |s| s.parse())?;
    let seed = args.get(3).map_or(Ok(7), |s| s.parse())?;

    let params = GenParams { seed, n_models, ..Default::default() };
    let manifest = generate_dataset(&params, &out)?;
    println!("wrote {} models to {}", manifest.models.len(), out.display());
    for split in Split::ALL {
        let mut by_k: BTreeMap<usize, usize> = BTreeMap::new();
        for e in manifest.entries(split) {
            *by_k.entry(e.k).or_default() += 1;
        }
        println!("{:5}  steps -> models {by_k:?}", split.name());
    }
    Ok(())
}
