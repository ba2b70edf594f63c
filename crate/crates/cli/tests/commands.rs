use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn limitset(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_limitset")).args(args).current_dir(dir).output().unwrap()
}

#[test]
fn orbit_csv_row_count() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c"), "preset = gamma2\ndepth = 3\n").unwrap();
    let out = limitset(&["orbit", "--config", "c", "--out", "o"], tmp.path());
    assert!(out.status.success());
    let csv = fs::read_to_string(tmp.path().join("o/orbit.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 53);
    assert!(csv.starts_with("index,word,word_len,radius,x,y,z\n"));
}

#[test]
fn strict_mode_fails_on_warnings() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c"), "preset = gamma2\ndepth = 3\n").unwrap();
    let lax = limitset(&["orbit", "--config", "c", "--out", "o"], tmp.path());
    assert!(lax.status.success());
    assert!(String::from_utf8_lossy(&lax.stderr).contains("warning"));
    let strict = limitset(&["orbit", "--config", "c", "--out", "o", "--strict"], tmp.path());
    assert_eq!(strict.status.code(), Some(2));
}

#[test]
fn config_errors_name_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c"), "preset = gamma2\nmu = 0.4,0.4,0.1,0.1\n").unwrap();
    let out = limitset(&["walk", "--config", "c"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("symmetry"), "{err}");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn kleinian_diagnose_gap_diverges_and_reproduces() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("c"),
        "preset = kleinian_pp\ndepth = 10\nsample_size = 1000\nprobes = 100\nlemma_n_max = 100\nout = first\n",
    )
    .unwrap();
    assert!(limitset(&["diagnose", "--config", "c"], tmp.path()).status.success());
    let gap = fs::read_to_string(tmp.path().join("first/gap.csv")).unwrap();
    let last: f64 = gap.lines().last().unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!(last < -10.0, "{last}");

    // the echoed configuration alone reproduces every file
    let again = limitset(&["diagnose", "--config", "first/resolved-config", "--out", "second"], tmp.path());
    assert!(again.status.success());
    for entry in fs::read_dir(tmp.path().join("first")).unwrap() {
        let name = entry.unwrap().file_name();
        let a = fs::read(tmp.path().join("first").join(&name)).unwrap();
        let b = fs::read(tmp.path().join("second").join(&name)).unwrap();
        if name != "resolved-config" {
            assert_eq!(a, b, "{name:?}");
        }
    }
}

#[test]
fn presets_are_listed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = limitset(&["presets", "--out", "p"], tmp.path());
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["gamma2", "schottky2", "kleinian_pp"] {
        assert!(text.contains(name));
    }
}
