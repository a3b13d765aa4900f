mod common;

use survdsa::data::{load_csv, ColumnMapping};

#[test]
fn load_csv_reads_written_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let data = common::random_dataset(&mut common::rng(5), 40, 2, 0.5);
    data.write_csv(std::fs::File::create(&path).unwrap(), "time", "status").unwrap();
    let back = load_csv(&path, &ColumnMapping::new("time", "status")).unwrap();
    assert_eq!(back, data);
}

#[test]
fn missing_column_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    std::fs::write(&path, "x1,time,status\n0.1,1.0,1\n").unwrap();
    let err = load_csv(&path, &ColumnMapping::new("time", "status").with_covariates(["x1", "age"])).unwrap_err();
    assert!(err.to_string().contains("`age`"), "{err}");
}

#[test]
fn missing_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load_csv(dir.path().join("nope.csv"), &ColumnMapping::new("time", "status")).is_err());
}
