//! Trains on a small generated set and reports train and held-out metrics.
//!
//! cargo run --release --example overfit -- [epochs] [aggregation] [init_seed]

use std::time::Instant;

use cadops::heads::Aggregation;
use cadops::pipeline::{evaluate_model, fit, generate_range, samples, ArchSpec};
use cadops::synth::GenParams;
use cadops::train::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let epochs = args.get(1).map_or(Ok(500), |s| s.parse())?;
    let aggregation: Aggregation = args.get(2).map_or(Ok(Aggregation::Avg), |s| s.parse())?;
    let init_seed = args.get(3).map_or(Ok(7), |s| s.parse())?;

    let params = GenParams { seed: 7, n_models: 32, steps_min: 1, steps_max: 4, ..Default::default() };
    let train_breps = generate_range(&params, 0..32)?;
    let held_out = generate_range(&params, 32..232)?;
    let arch = ArchSpec { aggregation, ..Default::default() };
    let train_set = samples(&train_breps, arch.grid_resolution, &arch.vocabulary)?;

    let cfg = TrainConfig { epochs, batch_size: 8, seed: init_seed, ..Default::default() };
    let start = Instant::now();
    let (model, _) = fit(&arch, &train_set, &cfg, init_seed, |log| {
        if log.epoch % 50 == 0 || log.epoch + 1 == epochs {
            println!("epoch {:4}  L_step {:.4}  L_type {:.4}  L_total {:.4}", log.epoch, log.l_step, log.l_type, log.l_total);
        }
    })?;
    println!("trained in {:.1}s", start.elapsed().as_secs_f64());

    let train_report = evaluate_model(&model, &train_breps)?;
    println!("-- training set");
    print!("{}", train_report.summary());
    print!("{}", train_report.by_step_count_csv());
    println!("-- held out");
    print!("{}", evaluate_model(&model, &held_out)?.summary());
    Ok(())
}
