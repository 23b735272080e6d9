mod common;

use std::fs;
use std::time::{Duration, Instant};

use common::{csv_hashes, graspmeta, graspmeta_ok};

#[test]
fn smoke_pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let start = Instant::now();
    let gen = graspmeta(d, &["gen", "--smoke"]);
    assert_eq!(gen.code, 0, "{}", gen.stderr);
    assert_eq!(gen.json["dataset"]["objects"], 20);

    let hand = graspmeta_ok(d, &["train", "--smoke"]);
    let joint = graspmeta_ok(d, &["train", "--smoke", "--mode", "joint"]);
    for f in ["eval.csv", "meta_log.csv", "baseline_log.csv", "summary.json", "tasks.json"] {
        assert!(hand.join(f).is_file(), "missing {f}");
    }
    let eval = fs::read_to_string(joint.join("eval.csv")).unwrap();
    assert!(!eval.lines().nth(1).unwrap().ends_with(','), "joint eval lacks MPCPE");

    let bench = graspmeta_ok(d, &["benchmark", "--smoke"]);
    assert!(bench.join("curves_mpjpe.csv").is_file());
    assert!(bench.join("slopes_mpjpe.csv").is_file());
    let micro = graspmeta_ok(d, &["micro", "--smoke"]);
    assert!(micro.join("slopes_mpjpe.csv").is_file());

    let h = hand.to_str().unwrap();
    let j = joint.to_str().unwrap();
    let gpa = graspmeta_ok(d, &["analyze", "gpa", "--smoke"]);
    assert!(gpa.join("gpa_heatmap.csv").is_file());
    let embed = graspmeta_ok(d, &["analyze", "embed", "--smoke", "--checkpoint", h]);
    assert!(embed.join("embed_silhouette.csv").is_file());
    let norms = graspmeta_ok(d, &["analyze", "gradnorm", "--smoke", "--checkpoint", h, "--checkpoint-b", j]);
    let table = fs::read_to_string(norms.join("gradnorm.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 10 * 5, "{table}");
    let slopes = graspmeta_ok(d, &["analyze", "slopes", "--smoke", "--results", bench.to_str().unwrap()]);
    assert!(slopes.join("slopes_mpjpe.csv").is_file());

    let report = graspmeta_ok(
        d,
        &["report", "--smoke", "--input", bench.to_str().unwrap(), "--input", micro.to_str().unwrap()],
    );
    let md = fs::read_to_string(report.join("report.md")).unwrap();
    assert!(md.contains("meta slope"));
    assert!(start.elapsed() < Duration::from_secs(120), "smoke took {:?}", start.elapsed());
}

#[test]
fn missing_dataset_names_gen_and_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let o = graspmeta(tmp.path(), &["train", "--smoke"]);
    assert_eq!(o.code, 3);
    assert_eq!(o.json["error"]["kind"], "missing_artifact");
    assert_eq!(o.json["error"]["prerequisite"], "gen");
}

#[test]
fn missing_checkpoint_names_train() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    graspmeta_ok(d, &["gen", "--smoke"]);
    let o = graspmeta(d, &["analyze", "embed", "--smoke", "--checkpoint", "runs/nothing-here"]);
    assert_eq!(o.code, 3, "{}", o.stderr);
    assert_eq!(o.json["error"]["prerequisite"], "train");
}

#[test]
fn bad_arguments_exit_2_with_json() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let o = graspmeta(d, &["train", "--no-such-flag"]);
    assert_eq!(o.code, 2);
    assert_eq!(o.json["error"]["kind"], "usage");
    let o = graspmeta(d, &["train", "--smoke", "--set", "experiment.nonsense=3"]);
    assert_eq!(o.code, 2);
    assert_eq!(o.json["error"]["kind"], "config");
    assert!(o.json["error"]["message"].as_str().unwrap().contains("nonsense"));
    let o = graspmeta(d, &["train", "--smoke", "--omega", "15"]);
    assert_eq!(o.code, 2);
}

#[test]
fn dataset_config_change_requires_regeneration() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    graspmeta_ok(d, &["gen", "--smoke"]);
    let o = graspmeta(d, &["train", "--smoke", "--dataset-seed", "9"]);
    assert_eq!(o.code, 2);
    assert!(o.json["error"]["message"].as_str().unwrap().contains("gen"));
}

#[test]
fn regeneration_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let a = graspmeta(d, &["gen", "--smoke"]);
    let b = graspmeta(d, &["gen", "--smoke", "--data-dir", "copy"]);
    assert_eq!(a.json["dataset"]["hash"], b.json["dataset"]["hash"]);
    // A smaller regeneration into the same directory leaves no stale files.
    graspmeta_ok(d, &["gen", "--smoke", "--sequences-per-object", "1"]);
    let n = fs::read_dir(d.join("data-smoke")).unwrap().count();
    assert_eq!(n, 20 + 1);
}

#[test]
fn full_profile_sizes_and_reduced_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let o = graspmeta(d, &["print-config"]);
    let cfg: toml::Value = toml::from_str(&o.stdout).unwrap();
    let ds = &cfg["dataset"];
    assert_eq!(ds["n_objects"].as_integer(), Some(20));
    let per_object = ds["sequences_per_object"].as_integer().unwrap() * ds["frames_per_sequence"].as_integer().unwrap();
    assert!((per_object as f64 - 20_000.0).abs() <= 1_000.0);

    let gen = graspmeta(d, &["gen", "--profile", "reduced"]);
    assert_eq!(gen.code, 0, "{}", gen.stderr);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("data-reduced/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["catalog"].as_array().unwrap().len(), 20);
    for n in gen.json["dataset"]["samples_per_object"].as_array().unwrap() {
        let n = n.as_u64().unwrap() as f64;
        assert!((n - 2_000.0).abs() <= 100.0, "{n}");
    }
}

#[test]
fn rerun_from_manifest_reproduces_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    graspmeta_ok(d, &["gen", "--smoke"]);
    let first = graspmeta_ok(d, &["train", "--smoke", "--omega", "9"]);
    let again = graspmeta_ok(d, &["train", "--manifest", first.to_str().unwrap(), "--run-id", "again"]);
    assert_ne!(first, again);
    let (a, b) = (csv_hashes(&first), csv_hashes(&again));
    assert!(a.len() >= 3);
    assert_eq!(a, b);
    // Checkpoints match too.
    assert_eq!(
        fs::read(first.join("checkpoints/meta.bin")).unwrap(),
        fs::read(again.join("checkpoints/meta.bin")).unwrap()
    );
}

#[test]
fn config_layers_apply_in_order() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("c.toml"), "omega = 7\n[experiment.inner]\nsteps = 3\n").unwrap();
    let o = graspmeta(d, &["print-config", "--smoke", "--config", "c.toml", "--inner-steps", "4"]);
    let cfg: toml::Value = toml::from_str(&o.stdout).unwrap();
    assert_eq!(cfg["omega"].as_integer(), Some(7));
    assert_eq!(cfg["experiment"]["inner"]["steps"].as_integer(), Some(4));
}
