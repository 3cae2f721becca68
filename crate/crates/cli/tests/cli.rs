use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn somrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_somrank")).args(args).output().unwrap()
}

fn fixture_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/standard/config.txt")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&somrank(&["frobnicate"])), 1);
    assert_eq!(code(&somrank(&["--help"])), 0);
    assert_eq!(code(&somrank(&["run", "--config", "/nonexistent/config.txt"])), 1);
    let cfg = fixture_config();
    let cfg = cfg.to_str().unwrap();
    let o = somrank(&["run", "-c", cfg, "--set", "som.shape=hex"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("unknown config key"), "{}", stderr(&o));
    assert_eq!(code(&somrank(&["run", "-c", cfg, "--set", "fwc.kernel_size=4"])), 1);
    assert_eq!(code(&somrank(&["report", "heatmap", "-c", cfg])), 1);
}

#[test]
fn run_is_reproducible_and_reports_hash() {
    let cfg = fixture_config();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let run = |d: &Path| somrank(&["run", "-c", cfg.to_str().unwrap(), "-o", d.to_str().unwrap()]);
    let (oa, ob) = (run(a.path()), run(b.path()));
    assert_eq!(code(&oa), 0, "{}", stderr(&oa));
    let hash = |o: &Output| {
        stdout(o)
            .lines()
            .find(|l| l.starts_with("manifest sha256"))
            .unwrap()
            .to_string()
    };
    assert_eq!(hash(&oa), hash(&ob));
    let ranking = std::fs::read_to_string(a.path().join("ranking.csv")).unwrap();
    assert!(ranking.starts_with("rank,ticker,date,unit_row,unit_col,score\n"));
    assert!(ranking.lines().count() > 1);

    let o = somrank(&[
        "report",
        "umat",
        "-c",
        cfg.to_str().unwrap(),
        "-o",
        a.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        stdout(&o),
        std::fs::read_to_string(a.path().join("umatrix.csv")).unwrap()
    );
}

#[test]
fn empty_test_set_is_a_stage_failure() {
    let out = tempfile::tempdir().unwrap();
    let o = somrank(&[
        "run",
        "-c",
        fixture_config().to_str().unwrap(),
        "-o",
        out.path().to_str().unwrap(),
        "--set",
        "split_date=2031-01-01",
    ]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("select stage failed"), "{}", stderr(&o));
    assert!(stderr(&o).contains("empty test set"));
}

#[test]
fn report_without_artifacts_names_the_producer() {
    let out = tempfile::tempdir().unwrap();
    let o = somrank(&["report", "lcp", "-o", out.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("train stage"), "{}", stderr(&o));
}

#[test]
fn synth_then_segment_and_bad_prices() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = somrank(&[
        "synth",
        "--out",
        d.to_str().unwrap(),
        "--companies",
        "8",
        "--short-history",
        "1",
        "--seed",
        "3",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read_dir(d.join("prices")).unwrap().count(), 8);

    let cfg = d.join("config.txt");
    let o = somrank(&[
        "segment",
        "-c",
        cfg.to_str().unwrap(),
        "--target",
        "large",
        "--thresholds",
        "2,3",
        "--drifts",
        "0,0.5",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let segs = std::fs::read_to_string(d.join("out/segments.csv")).unwrap();
    assert!(segs.starts_with("ticker,start_date,end_date,start_idx,end_idx\n"));
    assert!(!d.join("out/labeled.csv").exists());

    std::fs::write(d.join("prices/T000.csv"), "date,price\n2005-01-07,10\n2005-01-14,-3\n").unwrap();
    let o = somrank(&["ingest", "-c", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("non-positive price"));
}

#[test]
fn explicit_changes_are_parsed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = somrank(&[
        "synth",
        "--out",
        d,
        "--companies",
        "2",
        "--short-history",
        "0",
        "--no-sparse-key-ratio",
        "--change",
        "0:100:0.03",
        "--change",
        "1:200:-0.03",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let truth = std::fs::read_to_string(dir.path().join("truth_changes.csv")).unwrap();
    assert!(truth.contains("T000,100,0.03,1"), "{truth}");
    assert!(truth.contains("T001,200,-0.03,1"), "{truth}");
    assert_eq!(code(&somrank(&["synth", "--out", d, "--change", "0:x:1"])), 1);
}
