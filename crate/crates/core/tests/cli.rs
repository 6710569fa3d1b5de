mod common;

use std::fs;
use std::path::Path;

use common::cli::*;

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{}", describe(args, &out));
    String::from_utf8(out.stdout).unwrap()
}

fn fails_with(dir: &Path, args: &[&str], expected: i32) -> String {
    let out = run(dir, args);
    assert_eq!(code(&out), expected, "{}", describe(args, &out));
    String::from_utf8(out.stderr).unwrap()
}

/// Tracks, dataset and a two-epoch small checkpoint.
fn trained(dir: &Path) {
    for args in &STEPS[..3] {
        ok(dir, args);
    }
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let files = pipeline(dir.path()).unwrap();
    assert_eq!(files.len(), ARTIFACTS.len());

    let log = fs::read_to_string(dir.path().join("model.log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);

    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    let windows = metrics["n_subjects"].as_u64().unwrap() as usize;
    let pred = fs::read_to_string(dir.path().join("pred.csv")).unwrap();
    let mut lines = pred.lines();
    assert_eq!(lines.next(), Some("window_id,subject_id,step,x,y"));
    assert_eq!(lines.count(), windows * 25);

    let overlay: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("overlay.json")).unwrap()).unwrap();
    let subjects: usize = overlay.as_array().unwrap().iter().map(|f| f["subjects"].as_array().unwrap().len()).sum();
    assert_eq!(subjects, windows);
}

#[test]
fn eval_prints_metrics_and_baseline() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path());
    let stdout = ok(dir.path(), STEPS[3]);
    for key in ["ade", "fde", "rmse_1s", "rmse_5s", "constant_velocity_ade"] {
        assert!(stdout.contains(key), "{key} missing from {stdout}");
    }
}

#[test]
fn one_subject_window_yields_one_horizon_of_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--n_subjects", "1", "--n_frames", "40", "--output", "one.csv"]);
    ok(d, &["prepare", "--input", "one.csv", "--output", "one.bin"]);
    ok(
        d,
        &[
            "train", "--dataset", "one.bin", "--checkpoint", "one.ckpt", "--split", "all", "--epochs", "1", "--embed_dim", "4",
            "--mlp_hidden", "4", "--conv_channels", "2,2,2", "--cbam_reduction", "1",
        ],
    );
    ok(d, &["predict", "--dataset", "one.bin", "--checkpoint", "one.ckpt", "--split", "all", "--subset", "all", "--output", "p.csv"]);
    let rows: Vec<String> = fs::read_to_string(d.join("p.csv")).unwrap().lines().skip(1).map(String::from).collect();
    assert_eq!(rows.len(), 25);
    assert!(rows.iter().enumerate().all(|(k, r)| r.starts_with(&format!("0,0,{},", k + 1))));
}

#[test]
fn missing_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    fails_with(dir.path(), &["prepare", "--input", "absent.csv", "--output", "x.bin"], 2);
    fails_with(dir.path(), &["eval", "--dataset", "absent.bin", "--checkpoint", "m.ckpt"], 2);
}

#[test]
fn bad_configuration_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fails_with(d, &["synth", "--output", "t.csv", "--no_such_flag", "1"], 3);
    let err = fails_with(d, &["synth", "--output", "t.csv", "--n_subjects", "many"], 3);
    assert!(err.contains("n_subjects"), "{err}");
    let err = fails_with(d, &["synth", "--output", "t.csv", "--preset", "submarine"], 3);
    assert!(err.contains("preset"), "{err}");
    fails_with(d, &["synth"], 3);
}

#[test]
fn horizon_mismatch_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d);
    ok(d, &["prepare", "--input", "tracks.csv", "--t_out", "10", "--output", "short.bin"]);
    let err = fails_with(d, &["eval", "--dataset", "short.bin", "--checkpoint", "model.ckpt"], 3);
    assert!(err.contains("t_out"), "{err}");
}

#[test]
fn corrupt_cache_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("junk.bin"), b"not a dataset").unwrap();
    fails_with(dir.path(), &["train", "--dataset", "junk.bin", "--checkpoint", "m.ckpt"], 3);
}

#[test]
fn help_for_every_command() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, key) in [
        ("synth", "--synth_kind"),
        ("prepare", "--window_stride"),
        ("train", "--learning_rate"),
        ("eval", "--subset"),
        ("predict", "--overlay"),
        ("bench", "--reps"),
    ] {
        let stdout = ok(dir.path(), &[cmd, "--help"]);
        assert!(stdout.contains(key), "{cmd}: {stdout}");
        assert!(stdout.contains("--config"), "{cmd}: {stdout}");
    }
    ok(dir.path(), &["--version"]);
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("run.cfg"),
        "# small and quick\nn_subjects = 3\nn_frames = 45\nembed_dim = 4\nmlp_hidden = 4\nconv_channels = 2,2,2\ncbam_reduction = 1\nepochs = 1\n",
    )
    .unwrap();
    ok(d, &["synth", "--config", "run.cfg", "--output", "t.csv"]);
    let rows = fs::read_to_string(d.join("t.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 3 * 45);

    ok(d, &["prepare", "--input", "t.csv", "--output", "t.bin"]);
    ok(d, &["train", "--config", "run.cfg", "--dataset", "t.bin", "--checkpoint", "a.ckpt"]);
    assert_eq!(fs::read_to_string(d.join("a.log.csv")).unwrap().lines().count(), 2);
    ok(d, &["train", "--config", "run.cfg", "--epochs", "3", "--dataset", "t.bin", "--checkpoint", "b.ckpt"]);
    assert_eq!(fs::read_to_string(d.join("b.log.csv")).unwrap().lines().count(), 4);

    fs::write(d.join("bad.cfg"), "epochs = 1\nflux_capacitor = on\n").unwrap();
    let err = fails_with(d, &["train", "--config", "bad.cfg", "--dataset", "t.bin", "--checkpoint", "c.ckpt"], 3);
    assert!(err.contains("flux_capacitor"), "{err}");
}
