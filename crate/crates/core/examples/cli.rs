//! Drives the command line in-process: generate, train, predict, evaluate
//! and sketch, all inside a temporary directory.

use cadops::cli::run;

fn step(args: &[&str]) -> Result<(), String> {
    println!("$ cadops {}", args.join(" "));
    let code = run(std::iter::once("cadops").chain(args.iter().copied()), &mut std::io::stdout(), &mut std::io::stderr());
    if code == 0 { Ok(()) } else { Err(format!("exit code {code}")) }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("cadops_cli_example");
    let p = |s: &str| dir.join(s).display().to_string();
    let _ = std::fs::remove_dir_all(&dir);
    step(&["gen", "--count", "12", "--seed", "3", "--steps", "1..2", "--out", &p("data")])?;
    step(&["validate", &p("data")])?;
    step(&["train", "--data", &p("data"), "--out", &p("run"), "--epochs", "60", "--batch-size", "4", "--seed", "1"])?;
    step(&["predict", "--checkpoint", &p("run/checkpoint.json"), "--input", &p("data"), "--split", "test", "--out", &p("preds")])?;
    step(&["eval", "--data", &p("data"), "--predictions", &p("preds"), "--out", &p("report")])?;
    step(&["predict", "--ground-truth", "--input", &p("data/model_00000.brep.json"), "--out", &p("gt")])?;
    let pred = std::fs::read_dir(dir.join("gt"))?.next().ok_or("no prediction")??.path();
    step(&["sketch", "--input", &pred.display().to_string(), "--brep", &p("data/model_00000.brep.json"), "--out", &p("sketch")])?;
    Ok(())
}
