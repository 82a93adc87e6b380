//! Scores ground truth and a corrupted copy of it with every metric.

use cadops::brep::TypeVocabulary;
use cadops::model::ground_truth_prediction;
use cadops::pipeline::{evaluate_predictions, generate_range};
use cadops::synth::GenParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let breps = generate_range(&GenParams { seed: 4, ..Default::default() }, 0..40)?;
    let vocab = TypeVocabulary::extrude_family();
    let gt: Vec<_> = breps.iter().map(|b| ground_truth_prediction(b).unwrap()).collect();
    println!("-- ground truth");
    print!("{}", evaluate_predictions(&breps, &gt, &vocab)?.summary());

    // Merge every model's last step into step 0 and call its faces extrude_side.
    let mut merged = gt.clone();
    for p in &mut merged {
        let last = p.faces.iter().map(|f| f.op_step).max().unwrap_or(0);
        for f in p.faces.iter_mut().filter(|f| f.op_step == last) {
            f.op_step = 0;
            f.op_type = "extrude_side".into();
        }
    }
    let r = evaluate_predictions(&breps, &merged, &vocab)?;
    println!("-- last step merged into the first");
    print!("{}", r.summary());
    print!("{}", r.by_step_count_csv());
    Ok(())
}
