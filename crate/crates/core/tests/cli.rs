//! End-to-end runs of the command-line front end.

use std::path::Path;

use cpgp::cli::csvio::{read_table, write_table, Table};
use cpgp::cli::model::Model;

fn run(args: &[&str]) -> i32 {
    cpgp::cli::run(std::iter::once("cpgp").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL_FIT: &str = r#"
seed = 2
[data]
path = "data.csv"
[model]
kernel = "sw(x,A)*se(x) + swneg(x,A)*se(x)"
[optimizer]
restarts = 2
max_iter = 80
[synth.changepoint]
n = 120
"#;

#[test]
fn synth_fit_predict_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, SMALL_FIT).unwrap();
    let (c, o) = (p(&cfg), p(dir.path()));
    assert_eq!(run(&["synth", "--config", c, "--out", o, "--kind", "changepoint", "--train-frac", "0.5"]), 0);
    assert_eq!(run(&["fit", "--config", c, "--out", o]), 0);
    assert_eq!(run(&["predict", "--config", c, "--out", o]), 0);
    assert_eq!(run(&["evaluate", "--config", c, "--out", o, "--curves"]), 0);

    let data = read_table(&dir.path().join("data.csv")).unwrap();
    assert_eq!(data.headers, ["x", "y", "train"]);
    let pred = read_table(&dir.path().join("predictions.csv")).unwrap();
    assert_eq!(pred.headers, ["x", "y", "train", "mean", "std_latent", "std_total"]);
    assert_eq!(pred.nrows(), 120);
    let (lat, tot) = (pred.column("std_latent").unwrap(), pred.column("std_total").unwrap());
    assert!(lat.iter().zip(tot).all(|(l, t)| *l >= 0.0 && t > l));

    let model = json(&dir.path().join("model.json"));
    assert_eq!(model["format"], "cpgp-model");
    assert_eq!(model["version"], cpgp::VERSION);
    assert_eq!(model["kernel"], "sw(x, A)*se(x) + swneg(x, A)*se(x)");
    assert!(model["params"]["entries"].as_array().unwrap().iter().all(|e| e["lower"].is_number() && e["upper"].is_number()));

    let report = json(&dir.path().join("fit_report.json"));
    assert_eq!(report["gp"]["duration_secs"], 0.0);
    assert!(json(&dir.path().join("run_meta.json"))["fit_seconds"].is_number());

    let score = json(&dir.path().join("score.json"));
    assert_eq!(score["n"], 60);
    let curve = read_table(&dir.path().join("switch_A.csv")).unwrap();
    assert_eq!(curve.headers, ["x", "feature", "sigma", "sigma_neg"]);
    let (s, n) = (curve.column("sigma").unwrap(), curve.column("sigma_neg").unwrap());
    assert!(s.iter().zip(n).all(|(a, b)| (a + b - 1.0).abs() < 1e-12));

    // a reloaded model predicts bit-identically
    let m = Model::load(&dir.path().join("model.json")).unwrap();
    let x = cpgp::Inputs::from_column("x", data.column("x").unwrap().to_vec()).unwrap();
    assert_eq!(m.predict(&x).unwrap().mean, pred.column("mean").unwrap());
}

#[test]
fn trivial_predictions_score_zero_msll() {
    let dir = tempfile::tempdir().unwrap();
    let y: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64 * 0.3 - 1.0).collect();
    let m = y.iter().sum::<f64>() / y.len() as f64;
    let v = y.iter().map(|t| (t - m) * (t - m)).sum::<f64>() / y.len() as f64;
    let t = Table::new(
        vec!["y".into(), "mean".into(), "std_total".into()],
        vec![y.clone(), vec![m; 50], vec![v.sqrt(); 50]],
    )
    .unwrap();
    let preds = dir.path().join("p.csv");
    write_table(&preds, &t).unwrap();
    let train = dir.path().join("train.csv");
    write_table(&train, &Table::new(vec!["y".into()], vec![y]).unwrap()).unwrap();
    assert_eq!(run(&["evaluate", "--predictions", p(&preds), "--data", p(&train), "--out", p(dir.path())]), 0);
    let s = json(&dir.path().join("score.json"));
    assert!(s["msll"].as_f64().unwrap().abs() < 1e-12, "{s}");
    assert!((s["nmse"].as_f64().unwrap() - 100.0).abs() < 1e-9);
}

/// √(var f / var f') estimated from finite differences over `rows`.
fn empirical_lengthscale(t: &Table, draws: &[String], rows: std::ops::Range<usize>, h: f64) -> f64 {
    let (mut vf, mut vd) = (0.0, 0.0);
    for d in draws {
        let f = t.column(d).unwrap();
        for i in rows.clone() {
            vf += f[i] * f[i];
            let df = (f[i + 1] - f[i]) / h;
            vd += df * df;
        }
    }
    (vf / vd).sqrt()
}

#[test]
fn sample_draws_show_the_configured_lengthscale_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fig1.toml");
    std::fs::write(
        &cfg,
        r#"
seed = 7
[model]
kernel = "swneg(x,A)*se(x) + sw(x,A)*se(x)"
standardize_inputs = false
[model.params."switch.A.gradient"]
value = 2.0
fixed = true
[model.params."switch.A.location"]
value = 4.0
fixed = true
[model.params."se0.lengthscale.x"]
value = 0.25
[model.params."se1.lengthscale.x"]
value = 1.0
[sample]
column = "x"
from = 0.0
to = 8.0
points = 201
draws = 400
"#,
    )
    .unwrap();
    assert_eq!(run(&["sample", "--config", p(&cfg), "--out", p(dir.path())]), 0);
    let t = read_table(&dir.path().join("draws.csv")).unwrap();
    assert_eq!(t.headers.len(), 401);
    let draws: Vec<String> = t.headers[1..].to_vec();
    let h = 8.0 / 200.0;
    // well clear of the switch: x < 1.5 and x > 6.5
    let left = empirical_lengthscale(&t, &draws, 0..38, h);
    let right = empirical_lengthscale(&t, &draws, 163..200, h);
    let ratio = right / left;
    assert!((ratio / 4.0 - 1.0).abs() < 0.15, "left {left:.3} right {right:.3} ratio {ratio:.3}");
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = p(dir.path());
    // clap usage error
    assert_eq!(run(&["bogus"]), 2);
    assert_eq!(run(&["fit", "--seed", "x"]), 2);
    // unknown config key
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[model]\nkernal = \"se(x)\"\n").unwrap();
    assert_eq!(run(&["fit", "--config", p(&bad), "--out", o]), 2);
    // kernel syntax error
    let data = dir.path().join("d.csv");
    std::fs::write(&data, "x,y\n0,1\n1,2\n2,1.5\n").unwrap();
    let syn = dir.path().join("syn.toml");
    std::fs::write(&syn, "[data]\npath = \"d.csv\"\n[model]\nkernel = \"se(\"\n").unwrap();
    assert_eq!(run(&["fit", "--config", p(&syn), "--out", o]), 2);
    // missing file and NaN cells are data errors
    let ok_cfg = dir.path().join("ok.toml");
    std::fs::write(&ok_cfg, "[data]\npath = \"missing.csv\"\n[model]\nkernel = \"se(x)\"\n").unwrap();
    assert_eq!(run(&["fit", "--config", p(&ok_cfg), "--out", o]), 3);
    std::fs::write(&data, "x,y\n0,1\n1,NaN\n").unwrap();
    std::fs::write(&ok_cfg, "[data]\npath = \"d.csv\"\n[model]\nkernel = \"se(x)\"\n").unwrap();
    assert_eq!(run(&["fit", "--config", p(&ok_cfg), "--out", o]), 3);
    // predicting with no model file
    assert_eq!(run(&["predict", "--config", p(&ok_cfg), "--out", p(&dir.path().join("none"))]), 2);
}

#[test]
fn gradcheck_reports_every_free_parameter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, SMALL_FIT).unwrap();
    let (c, o) = (p(&cfg), p(dir.path()));
    assert_eq!(run(&["synth", "--config", c, "--out", o, "--kind", "changepoint"]), 0);
    assert_eq!(run(&["gradcheck", "--config", c, "--out", o]), 0);
    let g = json(&dir.path().join("gradcheck.json"));
    let names: Vec<&str> = g["components"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names.len(), 7);
    assert!(names.contains(&"switch.A.location") && names.contains(&"noise.variance"));
    assert!(g["max_rel_error"].as_f64().unwrap() <= 1e-3);
}

#[test]
fn oscillator_synth_marks_training_rows_and_regions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("osc.toml");
    std::fs::write(&cfg, "[synth.oscillator]\nduration = 48.0\n").unwrap();
    assert_eq!(run(&["synth", "--config", p(&cfg), "--out", p(dir.path()), "--kind", "oscillator", "--seed", "4"]), 0);
    let d = read_table(&dir.path().join("data.csv")).unwrap();
    assert_eq!(d.headers, ["t", "flight_1", "flight_2", "flight_3", "rudd", "y", "train", "region_1", "region_2", "region_3"]);
    let train = d.column("train").unwrap();
    assert_eq!(train.iter().filter(|v| **v == 1.0).count(), d.nrows() / 2);
    let truth = read_table(&dir.path().join("truth.csv")).unwrap();
    assert_eq!(truth.headers, ["quasi_static", "mode_1", "mode_2", "dynamic", "gate", "noiseless"]);
}
