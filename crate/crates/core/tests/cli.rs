use std::path::Path;
use std::process::{Command, Output};

fn graspcount(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graspcount"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn ok(out: Output) -> String {
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn full_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let gen = ok(graspcount(
        d,
        &["gen-data", "--seed", "3", "--poses", "8", "--trials", "3", "--piles", "2,5", "--out", "data.jsonl"],
    ));
    assert!(gen.contains("wrote 48 samples"), "{gen}");
    assert!(d.join("data.jsonl.meta.json").exists());

    ok(graspcount(d, &["train-autoencoders", "--data", "data.jsonl", "--epochs", "1", "--out", "aes"]));
    ok(graspcount(
        d,
        &["train-classifiers", "--data", "data.jsonl", "--autoencoders", "aes", "--epochs", "2", "--out", "bundle"],
    ));
    for f in ["naive.json", "encoder.json", "regression.json", "ae_palm.json", "metadata.json"] {
        assert!(d.join("bundle").join(f).exists(), "{f} missing");
    }

    let table = ok(graspcount(
        d,
        &["eval", "--estimator", "ensemble", "--data", "data.jsonl", "--bundle", "bundle", "--split", "all", "--out", "reports"],
    ));
    assert!(table.contains("confusion"));
    assert!(d.join("reports/ensemble.json").exists());

    let vol = ok(graspcount(d, &["eval", "--estimator", "volume", "--data", "data.jsonl"]));
    assert!(vol.contains("upper-bound violations"));

    ok(graspcount(d, &["force-fit", "--data", "data.jsonl", "--out", "force.json"]));
    ok(graspcount(d, &["eval", "--estimator", "force", "--data", "data.jsonl", "--force-model", "force.json"]));

    let preds = ok(graspcount(d, &["predict", "--bundle", "bundle", "--data", "data.jsonl"]));
    assert_eq!(preds.lines().count(), 48);
    let row: serde_json::Value = serde_json::from_str(preds.lines().next().unwrap()).unwrap();
    assert_eq!(row["distribution"].as_array().unwrap().len(), 5);

    ok(graspcount(
        d,
        &["fine-tune", "--bundle", "bundle", "--data", "data.jsonl", "--epochs", "1", "--out", "tuned"],
    ));
    assert!(d.join("tuned/metadata.json").exists());
}

#[test]
fn geometry_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(graspcount(tmp.path(), &["dedupe-poses"]));
    assert!(out.contains("23958") && out.contains("13068"), "{out}");
    let out = ok(graspcount(
        tmp.path(),
        &["volume-bound", "--degrees", "--pose", "0,60,60,60,20,20,20", "--object", "cube"],
    ));
    assert!(out.contains("upper bound (cube)"), "{out}");
}

#[test]
fn validation_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for args in [
        vec!["volume-bound", "--pose", "0,1,1"],
        vec!["volume-bound", "--pose", "0,9,1,1,0,0,0"],
        vec!["gen-data", "--noise", "-1", "--poses", "1"],
        vec!["gen-data", "--poses", "0"],
        vec!["gen-data", "--object", "pyramid"],
        vec!["no-such-command"],
        vec!["eval", "--estimator", "ensemble", "--data", "x.jsonl"],
    ] {
        let out = graspcount(d, &args);
        assert_eq!(code(&out), 2, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn data_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(graspcount(d, &["gen-data", "--poses", "2", "--trials", "1", "--piles", "3", "--out", "data.jsonl"]));

    let missing = graspcount(d, &["eval", "--estimator", "volume", "--data", "nothing.jsonl"]);
    assert_eq!(code(&missing), 3);

    let untrained = graspcount(d, &["eval", "--estimator", "force", "--data", "data.jsonl", "--split", "all"]);
    assert_eq!(code(&untrained), 3);
    assert!(String::from_utf8_lossy(&untrained.stderr).contains("not been trained"));

    let text = std::fs::read_to_string(d.join("data.jsonl")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[1] = "{\"pose\": [1, 2]}";
    std::fs::write(d.join("bad.jsonl"), lines.join("\n")).unwrap();
    std::fs::copy(d.join("data.jsonl.meta.json"), d.join("bad.jsonl.meta.json")).unwrap();
    let corrupt = graspcount(d, &["eval", "--estimator", "volume", "--data", "bad.jsonl"]);
    assert_eq!(code(&corrupt), 3);
    assert!(String::from_utf8_lossy(&corrupt.stderr).contains("line 2"));
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("config");
    let hand = graspcount::kinematics::HandGeometry::load(dir.join("hand.toml")).unwrap();
    assert_eq!(hand, graspcount::kinematics::HandGeometry::default());
    let cfg = graspcount::pipeline::PipelineConfig::load(dir.join("pipeline.toml")).unwrap();
    assert_eq!(cfg.data.poses * cfg.data.pile_sizes.len() * cfg.data.trials_per_pose, 5000);
    assert!(cfg.classifier.oversample);

    let tmp = tempfile::tempdir().unwrap();
    let pose = ["volume-bound", "--degrees", "--pose", "40,50,60,70,20,20,20"];
    let default = ok(graspcount(tmp.path(), &pose));
    let mut args = pose.to_vec();
    let path = dir.join("hand.toml");
    args.extend(["--geometry", path.to_str().unwrap()]);
    assert_eq!(ok(graspcount(tmp.path(), &args)), default);
}
