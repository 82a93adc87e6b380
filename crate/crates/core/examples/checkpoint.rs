//! Trains briefly, saves a checkpoint, loads it and predicts a new model.

use cadops::model::Model;
use cadops::pipeline::{fit, generate_range, samples, ArchSpec};
use cadops::synth::GenParams;
use cadops::train::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = GenParams { seed: 1, steps_min: 1, steps_max: 2, ..Default::default() };
    let breps = generate_range(&params, 0..9)?;
    let arch = ArchSpec { d_emb: 32, hidden: 32, ..Default::default() };
    let train_set = samples(&breps[..8], arch.grid_resolution, &arch.vocabulary)?;
    let cfg = TrainConfig { epochs: 100, batch_size: 4, ..Default::default() };
    let (model, logs) = fit(&arch, &train_set, &cfg, 1, |_| {})?;
    println!("L_total {:.4} -> {:.4}", logs[0].l_total, logs.last().unwrap().l_total);

    let path = std::env::temp_dir().join("cadops_example_checkpoint.json");
    model.save(&path, &serde_json::json!({"example": "checkpoint"}))?;
    let (loaded, prov) = Model::load(&path)?;
    assert_eq!(loaded.params, model.params);
    println!("reloaded {} ({prov})", path.display());

    let pred = loaded.predict(&loaded.sample(&breps[8])?)?;
    for f in &pred.faces {
        println!("face {:2}  {:16}  step {}", f.id, f.op_type, f.op_step);
    }
    Ok(())
}
