#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use survdsa::partition::PartitionModel;

fn survdsa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_survdsa")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_data(path: &Path, seed: u64, censor_rate: f64) {
    let mut r = common::rng(seed);
    let data = common::random_dataset(&mut r, 120, 3, censor_rate);
    data.write_csv(fs::File::create(path).unwrap(), "time", "status").unwrap();
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fit_writes_model_and_cv_curve() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write_data(&data, 1, 0.5);
    let out = dir.path().join("fit");
    let o = survdsa(&[
        "fit", "--data", s(&data), "--time", "time", "--event", "status", "--loss", "ipcw-l2", "--folds", "5",
        "--seed", "7", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["model.json", "cv_curve.csv", "risk_table.txt", "km_curves.csv", "config.toml"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let model = PartitionModel::from_json(&fs::read_to_string(out.join("model.json")).unwrap()).unwrap();
    assert!(model.regions().len() >= 2, "the x1 effect should be found");
    assert!(String::from_utf8_lossy(&o.stdout).contains("chosen size"));
}

#[test]
fn unknown_loss_lists_valid_losses() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write_data(&data, 2, 0.5);
    let o = survdsa(&["fit", "--data", s(&data), "--time", "time", "--event", "status", "--loss", "l1"]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert_eq!(e.lines().count(), 1);
    for l in ["ipcw-l2", "brier-1fixed", "brier-5even", "brier-5km"] {
        assert!(e.contains(l), "{e}");
    }
}

#[test]
fn zero_events_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "x1,time,status\n0.1,1.0,0\n0.5,2.0,0\n0.9,3.0,0\n").unwrap();
    let o = survdsa(&["fit", "--data", s(&data), "--time", "time", "--event", "status"]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert_eq!(e.lines().count(), 1);
    assert!(e.contains("event"), "{e}");
}

#[test]
fn zero_reps_is_rejected() {
    let o = survdsa(&["replicate", "--scenario", "high-dep-30", "--reps", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--reps"));
}

#[test]
fn unknown_flag_gives_one_line() {
    let o = survdsa(&["fit", "--bogus", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr(&o).lines().count(), 1);
}

#[test]
fn rerun_from_config_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write_data(&data, 3, 0.5);
    let first = dir.path().join("a");
    let o = survdsa(&[
        "fit", "--data", s(&data), "--time", "time", "--event", "status", "--loss", "brier-5km", "--seed", "11",
        "--out", s(&first),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let second = dir.path().join("b");
    let o = survdsa(&["fit", "--config", s(&first.join("config.toml")), "--out", s(&second)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["model.json", "candidates.json", "risk_table.txt", "cv_curve.csv", "km_curves.csv"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn evaluate_writes_report_for_fitted_model() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    let test = dir.path().join("test.csv");
    write_data(&train, 4, 0.5);
    write_data(&test, 5, 0.0);
    let fit = dir.path().join("fit");
    let o = survdsa(&["fit", "--data", s(&train), "--time", "time", "--event", "status", "--out", s(&fit)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("eval");
    let o = survdsa(&[
        "evaluate", "--model", s(&fit.join("model.json")), "--data", s(&test), "--time", "time", "--event",
        "status", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn evaluate_root_model_reports_concordance_error() {
    let dir = tempfile::tempdir().unwrap();
    let test = dir.path().join("test.csv");
    write_data(&test, 6, 0.0);
    let model = dir.path().join("root.json");
    let root = PartitionModel::root(common::numeric_schema(3), vec![1.0]);
    fs::write(&model, root.to_json().unwrap()).unwrap();
    let o = survdsa(&["evaluate", "--model", s(&model), "--data", s(&test), "--time", "time", "--event", "status"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).to_lowercase().contains("concordance"), "{}", stderr(&o));
}

#[test]
fn evaluate_names_missing_column() {
    let dir = tempfile::tempdir().unwrap();
    let test = dir.path().join("test.csv");
    fs::write(&test, "x1,x2,time,status\n0.1,0.2,1.0,1\n0.5,0.6,2.0,0\n").unwrap();
    let model = dir.path().join("root.json");
    let root = PartitionModel::root(common::numeric_schema(3), vec![1.0]);
    fs::write(&model, root.to_json().unwrap()).unwrap();
    let o = survdsa(&["evaluate", "--model", s(&model), "--data", s(&test), "--time", "time", "--event", "status"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("x3"), "{}", stderr(&o));
}
