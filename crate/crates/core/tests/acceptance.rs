//! End-to-end acceptance report: one PASS/FAIL line per criterion.
//!
//! Heavy stages run the CLI at the reduced profile under
//! `$CARGO_TARGET_TMPDIR/acceptance`; the report is also written to
//! `acceptance.txt` there. Deterministic criteria must pass. The
//! group-shift direction is an empirical outcome and is reported, not
//! asserted; its harness requirements (p-values, runtime, joint MPCPE
//! curves) are asserted.

mod common;

use std::fmt::Write as _;
use std::io::Write as _;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use common::{csv_hashes, graspmeta, graspmeta_ok};

struct Report {
    lines: Vec<String>,
    hard_failures: Vec<usize>,
}

impl Report {
    fn record(&mut self, n: usize, pass: bool, asserted: bool, detail: String) {
        let line = format!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
        // Straight to the stderr handle so the line survives test capture.
        let _ = writeln!(std::io::stderr(), "{line}");
        self.lines.push(line);
        if asserted && !pass {
            self.hard_failures.push(n);
        }
    }
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn column(rows: &[Vec<String>], name: &str) -> usize {
    rows[0].iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn autodiff(r: &mut Report) {
    let t = Instant::now();
    let mlp = common::mlp_gradient_worst(100);
    let (so, fo) = common::quadratic_meta_gradient_errors();
    let meta = common::meta_loss_gradient_worst();
    let secs = t.elapsed().as_secs_f64();
    let pass = mlp < 1e-5 && so < 1e-10 && meta < 1e-4 && secs < 60.0;
    r.record(
        1,
        pass,
        true,
        format!("mlp fd {mlp:.1e} (<1e-5), quadratic second-order {so:.1e} first-order {fo:.1e} (<1e-10), meta-loss fd {meta:.1e} (<1e-4), {secs:.1}s"),
    );
}

fn invariants(r: &mut Report) {
    let anil = common::anil_body_frozen();
    let msl = common::msl_final_step_equivalent();
    let (_, fo) = common::quadratic_meta_gradient_errors();
    let reg = common::regularizer_zero_noop();
    r.record(
        2,
        anil && msl && fo < 1e-10 && reg,
        true,
        format!("anil body bit-equal {anil}, msl final-step {msl}, first-order closed form {fo:.1e}, zero regularizer bit-identical {reg}"),
    );
}

fn split_anchors(r: &mut Report) {
    use graspmeta::taskset::{make_splits, validation_count, SplitSpec};
    let mut got = Vec::new();
    let mut pass = true;
    for (omega, val, train) in [(5, 3, 12), (8, 4, 8), (9, 5, 6), (13, 5, 2)] {
        let s = make_splits(&SplitSpec::new(omega, 0, 20)).unwrap();
        pass &= validation_count(omega) == val && s.val.len() == val && s.train.len() == train;
        got.push(format!("{omega}->{}/{}", s.val.len(), s.train.len()));
    }
    r.record(3, pass, true, format!("omega->val/train {}", got.join(" ")));
}

fn sinusoid(r: &mut Report) {
    let t = Instant::now();
    let (mut meta, mut ft) = (0.0, 0.0);
    for s in 0..3 {
        let (m, b) = common::sinusoid_benchmark(s, 1000);
        meta += m / 3.0;
        ft += b / 3.0;
    }
    let secs = t.elapsed().as_secs_f64();
    let ratio = meta / ft;
    r.record(
        4,
        ratio <= 0.66 && secs < 600.0,
        true,
        format!("meta mse {meta:.3} fine-tuned mse {ft:.3} ratio {ratio:.3} (<=0.66), {secs:.0}s"),
    );
}

fn group_shift(r: &mut Report, dir: &Path) {
    let reduced = ["--profile", "reduced"];
    let gen = graspmeta(dir, &["gen", reduced[0], reduced[1]]);
    assert_eq!(gen.code, 0, "{}", gen.stderr);
    let t = Instant::now();
    let hand = graspmeta_ok(dir, &["benchmark", reduced[0], reduced[1]]);
    let elapsed = t.elapsed();
    let rows = read_csv(&hand.join("slopes_mpjpe.csv"));
    let (fam, lab) = (column(&rows, "family"), column(&rows, "label"));
    let (bs, ms) = (column(&rows, "baseline_slope"), column(&rows, "meta_slope"));
    let (p, smaller) = (column(&rows, "p_value"), column(&rows, "meta_slope_smaller"));
    let seeds: Vec<&Vec<String>> = rows[1..].iter().filter(|row| row[fam] == "macro" && row[lab] != "mean").collect();
    let wins = seeds.iter().filter(|row| row[smaller] == "true").count();
    let p_emitted = seeds.len() == 3 && seeds.iter().all(|row| row[p].parse::<f64>().is_ok_and(|v| (0.0..=1.0).contains(&v)));
    let mut detail = String::new();
    for row in &seeds {
        let _ = write!(detail, "{}: baseline {:.3} meta {:.3} p {:.4}; ", row[lab], row[bs].parse::<f64>().unwrap(), row[ms].parse::<f64>().unwrap(), row[p].parse::<f64>().unwrap());
    }

    let joint = graspmeta_ok(dir, &["benchmark", reduced[0], reduced[1], "--mode", "joint"]);
    let mpcpe = read_csv(&joint.join("curves_mpcpe.csv"));
    let joint_ok = mpcpe.len() > 1 && read_csv(&joint.join("slopes_mpcpe.csv")).len() > 1;

    let harness = p_emitted && elapsed < Duration::from_secs(30 * 60) && joint_ok;
    assert!(harness, "sweep harness incomplete: p {p_emitted}, {elapsed:?}, joint {joint_ok}");
    r.record(
        5,
        wins >= 2 && harness,
        false,
        format!(
            "meta slope smaller in {wins}/3 seeds (need 2); {detail}hand-only sweep {:.1} min (<30); joint MPCPE curves {} rows",
            elapsed.as_secs_f64() / 60.0,
            mpcpe.len() - 1
        ),
    );
}

fn statistics(r: &mut Report) {
    let pairs = common::permutation_pairs(20, 100_000);
    let worst = pairs.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let table = common::t_table_worst();
    r.record(
        6,
        worst < 0.01 && table < 1e-3,
        true,
        format!("max |p - permutation p| {worst:.4} over 20 datasets (<0.01), t-cdf table error {table:.1e} (<1e-3)"),
    );
}

fn procrustes(r: &mut Report) {
    let sim = common::similarity_invariance_worst(200);
    let kab = common::kabsch_orthogonality_worst(200);
    let g = common::gpa_report();
    let pass = sim < 1e-12 && kab < 1e-12 && g.heatmap_size == 20 && g.symmetric && g.zero_diagonal && g.within < g.between;
    r.record(
        7,
        pass,
        true,
        format!(
            "similarity distance {sim:.1e}, kabsch orthogonality {kab:.1e}, {}x{} heatmap symmetric {} zero diagonal {}, within {:.4} < between {:.4}",
            g.heatmap_size, g.heatmap_size, g.symmetric, g.zero_diagonal, g.within, g.between
        ),
    );
}

fn analysis(r: &mut Report, dir: &Path) {
    let reduced = ["--profile", "reduced"];
    let big = graspmeta_ok(dir, &["train", reduced[0], reduced[1], "--omega", "13"]);
    let embed = graspmeta_ok(dir, &["analyze", "embed", reduced[0], reduced[1], "--checkpoint", big.to_str().unwrap()]);
    let rows = read_csv(&embed.join("embed_silhouette.csv"));
    let (kind, n, s) = (column(&rows, "kind"), column(&rows, "vectors"), column(&rows, "silhouette"));
    let adapted: Vec<&Vec<String>> = rows[1..].iter().filter(|row| row[kind] == "adapted").collect();
    let value = |k: &str| rows[1..].iter().find(|row| row[kind] == k).map(|row| row[s].parse::<f64>().unwrap());
    let (pos, neg) = (value("positive_control").unwrap_or(f64::NAN), value("negative_control").unwrap_or(f64::NAN));
    let vectors_ok = !adapted.is_empty() && adapted.iter().all(|row| row[n].parse::<usize>().unwrap() >= 500);
    let embed_ok = vectors_ok && pos > 0.5 && neg.abs() < 0.1;
    let layers: Vec<String> = adapted.iter().map(|row| format!("{} {:.3}", row[0], row[s].parse::<f64>().unwrap())).collect();

    let hand = graspmeta_ok(dir, &["train", reduced[0], reduced[1], "--omega", "9"]);
    let joint = graspmeta_ok(dir, &["train", reduced[0], reduced[1], "--omega", "9", "--mode", "joint"]);
    let norms = graspmeta_ok(
        dir,
        &["analyze", "gradnorm", reduced[0], reduced[1], "--checkpoint", hand.to_str().unwrap(), "--checkpoint-b", joint.to_str().unwrap()],
    );
    let table = read_csv(&norms.join("gradnorm.csv"));
    let has_ratio = table[0].last().map(String::as_str) == Some("ratio");
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(norms.join("summary.json")).unwrap()).unwrap();
    let cols = summary["monotone"].as_array().unwrap();
    let monotone = cols.iter().flat_map(|c| [c[1].as_bool().unwrap(), c[2].as_bool().unwrap()]).filter(|&m| m).count();
    let norms_ok = table.len() == 1 + 50 && has_ratio && monotone == 2 * cols.len() && cols.len() == 5;
    r.record(
        8,
        embed_ok && norms_ok,
        true,
        format!(
            "{} vectors, silhouettes [{}], positive control {pos:.3} (>0.5), negative {neg:.3} (|s|<0.1); gradnorm {} rows x ratio {has_ratio}, monotone columns {monotone}/{}",
            adapted.first().map_or("0", |row| row[n].as_str()),
            layers.join(", "),
            table.len() - 1,
            2 * cols.len()
        ),
    );
}

/// Runs every command once at smoke scale, then again from its manifest,
/// and compares output hashes.
fn reproducibility(r: &mut Report, dir: &Path) {
    fs::create_dir_all(dir).unwrap();
    let smoke = "--smoke";
    let mut checked = Vec::new();
    let mut mismatched = Vec::new();
    let run = |args: &[&str]| graspmeta_ok(dir, args);
    let gen = run(&["gen", smoke]);
    let train = run(&["train", smoke]);
    let joint = run(&["train", smoke, "--mode", "joint"]);
    let bench = run(&["benchmark", smoke]);
    let micro = run(&["micro", smoke]);
    let (t, j, b) = (train.to_str().unwrap(), joint.to_str().unwrap(), bench.to_str().unwrap());
    let gpa = run(&["analyze", "gpa", smoke]);
    let embed = run(&["analyze", "embed", smoke, "--checkpoint", t]);
    let norms = run(&["analyze", "gradnorm", smoke, "--checkpoint", t, "--checkpoint-b", j]);
    let slopes = run(&["analyze", "slopes", smoke, "--results", b]);
    let report = run(&["report", smoke, "--input", b, "--input", micro.to_str().unwrap()]);

    for (name, command, first) in [
        ("gen", "gen", gen),
        ("train", "train", train),
        ("benchmark", "benchmark", bench),
        ("micro", "micro", micro),
        ("gpa", "analyze gpa", gpa),
        ("embed", "analyze embed", embed),
        ("gradnorm", "analyze gradnorm", norms),
        ("slopes", "analyze slopes", slopes),
        ("report", "report", report),
    ] {
        let mut args: Vec<String> = command.split(' ').map(str::to_string).collect();
        let id = format!("{name}-again");
        args.extend(["--manifest".into(), first.to_str().unwrap().into(), "--run-id".into(), id]);
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        // gen rewrites its data directory in place; snapshot first.
        let before = if name == "gen" { all_hashes(&first) } else { csv_hashes(&first) };
        let again = graspmeta_ok(dir, &refs);
        let after = if name == "gen" { all_hashes(&again) } else { csv_hashes(&again) };
        if before.is_empty() || before != after {
            mismatched.push(name.to_string());
        }
        checked.push(format!("{name} {}", before.len()));
    }
    r.record(
        9,
        mismatched.is_empty(),
        true,
        format!("reruns from manifest bit-identical for [{}]; mismatched [{}]", checked.join(", "), mismatched.join(", ")),
    );
}

fn all_hashes(run_dir: &Path) -> std::collections::BTreeMap<String, String> {
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(run_dir.join("manifest.json")).unwrap()).unwrap();
    m["outputs"]
        .as_object()
        .unwrap()
        .iter()
        .filter(|(k, _)| !k.ends_with("summary.json"))
        .map(|(k, v)| (k.clone(), v.as_str().unwrap().to_string()))
        .collect()
}

#[test]
fn acceptance() {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    fs::create_dir_all(&dir).unwrap();
    let mut r = Report {
        lines: Vec::new(),
        hard_failures: Vec::new(),
    };
    autodiff(&mut r);
    invariants(&mut r);
    split_anchors(&mut r);
    sinusoid(&mut r);
    group_shift(&mut r, &dir);
    statistics(&mut r);
    procrustes(&mut r);
    analysis(&mut r, &dir);
    reproducibility(&mut r, &dir.join("smoke"));
    let mut text = r.lines.join("\n");
    text.push('\n');
    fs::write(dir.join("acceptance.txt"), text).unwrap();
    assert!(r.hard_failures.is_empty(), "failed criteria: {:?}", r.hard_failures);
}
