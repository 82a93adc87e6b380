//! End-to-end acceptance checks. Runs every criterion, prints one line each,
//! and exits non-zero if any failed.

use std::time::{Duration, Instant};

use itertools::Itertools;

use cadops::brep::builder::box_solid;
use cadops::brep::{parse_brep, serialize_brep, validate_topology, Surface, TypeVocabulary};
use cadops::features::normalize_model;
use cadops::geom::Vec3;
use cadops::heads::{hungarian, step_loss_value, Aggregation};
use cadops::metrics::{evaluate, ModelEval};
use cadops::model::{ground_truth_prediction, LossWeights, Model, Prediction};
use cadops::nn::gradcheck::GradCheck;
use cadops::nn::{riou, Matrix, NnError, Tape};
use cadops::pipeline::{evaluate_model, fit, generate_range, samples, ArchSpec};
use cadops::rng::SplitMix64;
use cadops::sketch::{hausdorff, polygon_segments, recover_sketches, Point2, SketchOptions, SketchStatus};
use cadops::synth::{generate_model, GenParams, ProfileKind};
use cadops::train::TrainConfig;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Check = Result<Outcome, Box<dyn std::error::Error>>;

fn random_matrix(rng: &mut SplitMix64, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.next_f64()).collect()).unwrap()
}

fn random_stochastic(rng: &mut SplitMix64, rows: usize, cols: usize) -> Matrix {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let row: Vec<f64> = (0..cols).map(|_| rng.uniform(0.01, 1.0)).collect();
        let s: f64 = row.iter().sum();
        data.extend(row.iter().map(|x| x / s));
    }
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn c1_hungarian() -> Check {
    let start = Instant::now();
    let mut rng = SplitMix64::new(1);
    let mut bad = 0;
    for n in 2..=7 {
        for _ in 0..1000 {
            let m = random_matrix(&mut rng, n, n);
            let a = hungarian(&m)?;
            let best = (0..n)
                .permutations(n)
                .map(|p| p.iter().enumerate().map(|(r, &c)| m.get(r, c)).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            let got: f64 = a.perm.iter().enumerate().map(|(r, &c)| m.get(r, c)).sum();
            if got != best {
                bad += 1;
            }
        }
    }
    let t = start.elapsed();
    Ok(outcome(bad == 0 && t < Duration::from_secs(30), format!("{bad} mismatches in 6000 matrices, {:.1}s", t.as_secs_f64())))
}

fn bits(x: u64, k: usize) -> Vec<f64> {
    (0..k).map(|i| ((x >> i) & 1) as f64).collect()
}

fn set_iou(a: u64, b: u64) -> f64 {
    (a & b).count_ones() as f64 / (a | b).count_ones() as f64
}

fn c2_riou() -> Check {
    let mut worst: f64 = 0.0;
    let mut pairs = 0u64;
    for k in 1..=4 {
        for a in 1..(1u64 << k) {
            for b in 1..(1u64 << k) {
                worst = worst.max((riou(&bits(a, k), &bits(b, k))? - set_iou(a, b)).abs());
                pairs += 1;
            }
        }
    }
    let mut rng = SplitMix64::new(2);
    for k in 5..=10 {
        for _ in 0..100_000 {
            let a = rng.range_inclusive(1, (1 << k) - 1);
            let b = rng.range_inclusive(1, (1 << k) - 1);
            worst = worst.max((riou(&bits(a, k), &bits(b, k))? - set_iou(a, b)).abs());
            pairs += 1;
        }
    }
    Ok(outcome(worst <= 1e-12, format!("{pairs} pairs, max |error| {worst:.1e}")))
}

fn c3_loss_invariance() -> Check {
    let mut rng = SplitMix64::new(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let k = rng.range_inclusive(1, 5) as usize;
        let k_s = k + rng.below(3) as usize;
        let n = k + rng.below(12) as usize;
        // Every step present at least once.
        let mut gt: Vec<usize> = (0..n).map(|j| if j < k { j } else { rng.below(k as u64) as usize }).collect();
        rng.shuffle(&mut gt);
        let s_hat = random_stochastic(&mut rng, n, k_s);
        let base = step_loss_value(&gt, &s_hat)?;

        let mut ids: Vec<usize> = (0..k).collect();
        rng.shuffle(&mut ids);
        let relabeled: Vec<usize> = gt.iter().map(|&s| ids[s]).collect();
        let mut cols: Vec<usize> = (0..k_s).collect();
        rng.shuffle(&mut cols);
        let mut permuted = Matrix::zeros(n, k_s);
        for j in 0..n {
            for c in 0..k_s {
                permuted.set(j, cols[c], s_hat.get(j, c));
            }
        }
        worst = worst.max((step_loss_value(&relabeled, &permuted)? - base).abs());
    }
    Ok(outcome(worst <= 1e-12, format!("1000 trials, max |delta| {worst:.1e}")))
}

fn c4_gradients() -> Check {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let params = GenParams { steps_min: 2, steps_max: 3, ..Default::default() };
    for i in 0..25u64 {
        let g = generate_model(SplitMix64::derive(4, i), &params)?;
        let agg = Aggregation::ALL[i as usize % Aggregation::ALL.len()];
        let arch = ArchSpec { aggregation: agg, ..Default::default() }.resolve(3);
        let m = Model::init(arch, i)?;
        let s = m.sample(&g.brep)?;
        let mut t = Tape::new();
        let frozen = m.net.loss(&mut t, &m.params, &s, None, LossWeights::default())?.frozen;
        let r = GradCheck { samples_per_param: Some(24), seed: i, ..Default::default() }.run(&m.params, |p, t| {
            m.net.loss(t, p, &s, Some(&frozen), LossWeights::default()).map(|o| o.total).map_err(|e| NnError::Graph(e.to_string()))
        })?;
        worst = worst.max(r.max_rel_err);
        checked += r.checked;
    }
    let t = start.elapsed();
    Ok(outcome(
        worst <= 1e-4 && t < Duration::from_secs(300),
        format!("{checked} entries on 25 models, max rel. error {worst:.1e}, {:.1}s", t.as_secs_f64()),
    ))
}

const OVERFIT_DATA: GenParams =
    GenParams { seed: 7, n_models: 232, steps_min: 1, steps_max: 4, profile: ProfileKind::Mixed, allow_cut: true };

struct OverfitRun {
    train_type: f64,
    train_step: f64,
    final_loss: f64,
    held_type: f64,
    held_step: f64,
    held_rc: f64,
    seconds: f64,
}

fn overfit_run(aggregation: Aggregation, init_seed: u64) -> Result<OverfitRun, Box<dyn std::error::Error>> {
    let train_breps = generate_range(&OVERFIT_DATA, 0..32)?;
    let held_out = generate_range(&OVERFIT_DATA, 32..232)?;
    let arch = ArchSpec { aggregation, ..Default::default() };
    let train_set = samples(&train_breps, arch.grid_resolution, &arch.vocabulary)?;
    let cfg = TrainConfig { epochs: 500, batch_size: 8, seed: init_seed, ..Default::default() };
    let start = Instant::now();
    let (model, logs) = fit(&arch, &train_set, &cfg, init_seed, |_| {})?;
    let seconds = start.elapsed().as_secs_f64();
    let tr = evaluate_model(&model, &train_breps)?;
    let ho = evaluate_model(&model, &held_out)?;
    Ok(OverfitRun {
        train_type: tr.type_macc,
        train_step: tr.step_macc,
        final_loss: logs.last().unwrap().l_total,
        held_type: ho.type_macc,
        held_step: ho.step_macc,
        held_rc: ho.r_c,
        seconds,
    })
}

fn c5_overfit(r: &OverfitRun) -> Check {
    Ok(outcome(
        r.train_type >= 0.95 && r.train_step >= 0.90 && r.final_loss <= 0.10 && r.seconds <= 900.0,
        format!(
            "train op.type mAcc {:.1}, op.step mAcc {:.1}, final L_total {:.4}, {:.0}s",
            100.0 * r.train_type,
            100.0 * r.train_step,
            r.final_loss,
            r.seconds
        ),
    ))
}

fn c6_generalization(r: &OverfitRun) -> Check {
    Ok(outcome(
        r.held_type >= 0.85 && r.held_step >= 0.70,
        format!("held-out op.type mAcc {:.1}, op.step mAcc {:.1}", 100.0 * r.held_type, 100.0 * r.held_step),
    ))
}

fn c7_consistency(first: &OverfitRun) -> Check {
    let seeds = [7u64, 8, 9];
    let (mut avg, mut none) = (0.0, 0.0);
    for &s in &seeds {
        avg += if s == 7 { first.held_rc } else { overfit_run(Aggregation::Avg, s)?.held_rc };
        none += overfit_run(Aggregation::None, s)?.held_rc;
    }
    let (avg, none) = (avg / 3.0, none / 3.0);
    Ok(outcome(avg >= none, format!("held-out R_C avg {:.1} vs none {:.1} over seeds 7, 8, 9", 100.0 * avg, 100.0 * none)))
}

fn c8_cube() -> Check {
    let p = GenParams { steps_min: 1, steps_max: 1, profile: ProfileKind::Rect, allow_cut: false, ..Default::default() };
    let g = generate_model(8, &p)?;
    let labels = g.brep.labels().ok_or("unlabeled")?;
    let count = |name: &str| {
        let i = g.brep.vocabulary.index_of(name).unwrap();
        labels.iter().filter(|l| l.op_type == i).count()
    };
    let steps: Vec<u64> = labels.iter().map(|l| l.op_step).unique().collect();
    let (ends, sides) = (count("extrude_end"), count("extrude_side"));
    Ok(outcome(
        labels.len() == 6 && ends == 2 && sides == 4 && steps == [0],
        format!("{} faces: {ends} extrude_end, {sides} extrude_side, steps {steps:?}", labels.len()),
    ))
}

fn c9_consistency_metrics() -> Check {
    let vocab = TypeVocabulary::extrude_family();
    let breps = generate_range(&GenParams { seed: 9, ..Default::default() }, 0..50)?;
    let evals: Vec<ModelEval> = breps
        .iter()
        .map(|b| ModelEval::from_prediction(b, &ground_truth_prediction(b).unwrap(), &vocab))
        .collect::<Result<_, _>>()?;
    let gt = evaluate(&evals, &vocab)?;
    let full = TypeVocabulary::full();
    let (ext, fil) = (full.index_of("extrude_side").unwrap(), full.index_of("fillet").unwrap());
    let hand = ModelEval {
        name: "hand".into(),
        gt_types: vec![ext, ext, ext, fil],
        gt_steps: vec![0, 0, 1, 1],
        pred_types: vec![ext, ext, ext, fil],
        pred_steps: vec![0, 0, 1, 1],
    };
    let h = evaluate(&[hand], &full)?;
    let (rc, msc, hrc, hmsc) = (100.0 * gt.r_c, 100.0 * gt.ms_c, 100.0 * h.r_c, 100.0 * h.ms_c);
    Ok(outcome(
        rc == 100.0 && msc == 100.0 && hrc == 50.0 && hmsc == 75.0,
        format!("ground truth R_C {rc:.1} mS_C {msc:.1}; hand case R_C {hrc:.1} mS_C {hmsc:.1}"),
    ))
}

fn c10_sketch() -> Check {
    let params = GenParams { seed: 10, ..Default::default() };
    let opts = SketchOptions { include_cuts: true, ..Default::default() };
    let (mut worst_angle, mut worst_h, mut groups, mut degenerate): (f64, f64, usize, usize) = (0.0, 0.0, 0, 0);
    for i in 0..50 {
        let g = generate_model(params.model_seed(i), &params)?;
        let (b, scale, center) = normalize_model(&g.brep)?;
        let pred: Prediction = ground_truth_prediction(&b).ok_or("unlabeled")?;
        for s in recover_sketches(&b, &pred, &opts)? {
            if s.status == SketchStatus::Degenerate {
                degenerate += 1;
                continue;
            }
            groups += 1;
            let step = &g.steps[s.step_id];
            let axis = s.axis.ok_or("missing axis")?;
            // Both orientations describe the same extrusion line.
            worst_angle = worst_angle.max(axis.cross(step.axis).norm().min(1.0).asin());
            let poly: Vec<Point2> =
                step.profile.iter().map(|&p| s.project((p - center) / scale).unwrap()).collect();
            worst_h = worst_h.max(hausdorff(&s.segments, &polygon_segments(&poly), 16));
        }
    }
    // Two parallel walls: no axis from normals and no shared edge.
    let b = box_solid(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0));
    let mut pred = ground_truth_prediction(&b).ok_or("unlabeled")?;
    for f in &mut pred.faces {
        let wall = matches!(b.faces[f.id].surface.surface, Surface::Plane { normal, .. } if normal.x.abs() > 0.5);
        f.op_type = if wall { "extrude_side" } else { "extrude_end" }.into();
    }
    let walls = recover_sketches(&b, &pred, &SketchOptions::default())?;
    let reported = walls.len() == 1 && walls[0].status == SketchStatus::Degenerate && walls[0].axis.is_none();
    Ok(outcome(
        worst_angle <= 1e-6 && worst_h <= 1e-6 && groups > 0 && reported,
        format!(
            "{groups} groups on 50 models ({degenerate} degenerate), max axis error {worst_angle:.1e} rad, max Hausdorff {worst_h:.1e}; parallel walls degenerate: {reported}"
        ),
    ))
}

fn c11_format() -> Check {
    let params = GenParams { seed: 11, n_models: 500, ..Default::default() };
    let first = generate_range(&params, 0..500)?;
    let second = generate_range(&params, 0..500)?;
    let (mut round_trip, mut invalid, mut unstable) = (0, 0, 0);
    for (a, b) in first.iter().zip(&second) {
        let text = serialize_brep(a)?;
        let back = parse_brep(&text)?;
        if back != *a || serialize_brep(&back)? != text {
            round_trip += 1;
        }
        if !validate_topology(a).is_valid() {
            invalid += 1;
        }
        if serialize_brep(b)? != text {
            unstable += 1;
        }
    }
    Ok(outcome(
        round_trip + invalid + unstable == 0,
        format!("500 models: {round_trip} round-trip failures, {invalid} invalid, {unstable} unstable"),
    ))
}

fn report(n: usize, name: &str, result: Check, failures: &mut Vec<usize>) {
    let (pass, detail) = match result {
        Ok(o) => (o.pass, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    if !pass {
        failures.push(n);
    }
    println!("criterion {n:2} {} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}

fn main() {
    // Honor `cargo test -- --list` and name filters well enough to stay out of the way.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut failures = Vec::new();
    report(1, "assignment oracle", c1_hungarian(), &mut failures);
    report(2, "RIoU equals set IoU", c2_riou(), &mut failures);
    report(3, "step loss invariance", c3_loss_invariance(), &mut failures);
    report(4, "gradient correctness", c4_gradients(), &mut failures);
    match overfit_run(Aggregation::Avg, 7) {
        Ok(run) => {
            report(5, "overfit", c5_overfit(&run), &mut failures);
            report(6, "generalization", c6_generalization(&run), &mut failures);
            report(7, "joint-learning consistency", c7_consistency(&run), &mut failures);
        }
        Err(e) => {
            for (n, name) in [(5, "overfit"), (6, "generalization"), (7, "joint-learning consistency")] {
                report(n, name, Err(e.to_string().into()), &mut failures);
            }
        }
    }
    report(8, "cube semantics", c8_cube(), &mut failures);
    report(9, "consistency metrics", c9_consistency_metrics(), &mut failures);
    report(10, "sketch recovery", c10_sketch(), &mut failures);
    report(11, "format round trip", c11_format(), &mut failures);
    if failures.is_empty() {
        println!("acceptance: all 11 criteria pass");
    } else {
        println!("acceptance: failed criteria {failures:?}");
        std::process::exit(1);
    }
}
