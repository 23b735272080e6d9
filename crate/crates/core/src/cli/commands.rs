use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::run::{hash_tree, load_state, RunDir, RunManifest, MANIFEST};
use crate::analysis::procrustes::shape_from_flat;
use crate::analysis::{
    distance_heatmap, embed_adapted_params, gpa_mean_shapes, gradient_norm_table, group_separation, plot, silhouette,
    MetricCurve, Shape,
};
use crate::bench::{
    adapted_heads, build_taskset, compare, curves, evaluate_pair, norm_traces, run_omega, train_pair, CurveComparison, ExperimentMode,
    Metric, PairScores,
};
use crate::error::{Error, Result};
use crate::graspworld::{read_manifest, Dataset, INPUT_DIM};
use crate::metalearn::{EvalReport, InnerLoopConfig, MetaState};
use crate::seed;
use crate::taskset::{make_splits, micro_series, SplitSpec, Splits, TaskSet};

fn mode_name(m: ExperimentMode) -> &'static str {
    match m {
        ExperimentMode::HandOnly => "hand_only",
        ExperimentMode::Joint => "joint",
    }
}

fn metric_name(m: Metric) -> &'static str {
    match m {
        Metric::Mpjpe => "mpjpe",
        Metric::Mpcpe => "mpcpe",
    }
}

fn metrics_for(mode: ExperimentMode) -> Vec<Metric> {
    match mode {
        ExperimentMode::HandOnly => vec![Metric::Mpjpe],
        ExperimentMode::Joint => vec![Metric::Mpjpe, Metric::Mpcpe],
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

/// Reads the dataset at `cfg.data_dir`, insisting it was generated with
/// `cfg.dataset`. Returns it with its tree hash.
pub fn load_dataset(cfg: &RunConfig) -> Result<(Dataset, String)> {
    let manifest = read_manifest(&cfg.data_dir)?;
    if manifest.config != cfg.dataset {
        return Err(Error::Config(format!(
            "dataset at {} was generated with a different config; rerun `gen`",
            cfg.data_dir.display()
        )));
    }
    let d = Dataset::read(&cfg.data_dir)?;
    Ok((d, hash_tree(&cfg.data_dir)?))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenSummary {
    pub data_dir: PathBuf,
    pub objects: usize,
    pub sequences: usize,
    pub samples_per_object: Vec<usize>,
    pub hash: String,
}

/// Generates the dataset. Stale sequence files from an earlier, larger
/// generation are removed so the directory matches the manifest. The run
/// manifest lists every dataset file with its hash.
pub fn cmd_gen(cfg: &RunConfig) -> Result<(RunManifest, GenSummary)> {
    let d = Dataset::generate(&cfg.dataset)?;
    let dir = &cfg.data_dir;
    if dir.is_dir() {
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let p = entry.map_err(|e| Error::io(dir, e))?.path();
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            if name.starts_with("seq_") && name.ends_with(".bin") {
                fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
            }
        }
    }
    d.write(dir)?;
    let summary = GenSummary {
        data_dir: dir.clone(),
        objects: d.catalog().len(),
        sequences: d.sequences.len(),
        samples_per_object: d.manifest.samples_per_object(),
        hash: hash_tree(dir)?,
    };
    let mut run = RunDir::create("gen", cfg)?;
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    files.sort();
    for f in &files {
        run.external_output(f)?;
    }
    run.write_json("summary.json", &summary)?;
    Ok((run.finish()?, summary))
}

fn eval_rows(out: &mut String, prefix: &str, model: &str, r: &EvalReport) {
    let sep = if prefix.is_empty() { "" } else { "," };
    for run in &r.runs {
        let _ = writeln!(
            out,
            "{prefix}{sep}{model},{},{},{},{}",
            run.run,
            run.scores.mse,
            opt(run.scores.mpjpe),
            opt(run.scores.mpcpe)
        );
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainSummary {
    pub mode: ExperimentMode,
    pub omega: usize,
    pub seed: u64,
    pub splits: Splits,
    pub meta: EvalReport,
    pub baseline: EvalReport,
    pub meta_best_epoch: Option<usize>,
    pub baseline_best_epoch: Option<usize>,
}

/// Trains both models on one Ω split and saves checkpoints.
pub fn cmd_train(cfg: &RunConfig) -> Result<RunManifest> {
    let (dataset, dhash) = load_dataset(cfg)?;
    let seed = cfg.seeds[0];
    let splits = make_splits(&SplitSpec::new(cfg.omega, seed, dataset.catalog().len()))?;
    let mut run = RunDir::create("train", cfg)?;
    run.input("dataset", dhash);
    let ts = build_taskset(&dataset, &splits, &cfg.experiment)?;
    run.write_json("tasks.json", &ts.manifest())?;
    let pair = train_pair(&ts, &cfg.experiment, seed)?;
    let scores = evaluate_pair(&pair, &ts.test, &cfg.experiment, seed)?;
    run.save_state("checkpoints/meta", &pair.meta)?;
    run.save_state("checkpoints/baseline", &pair.baseline_state())?;
    run.write("meta_log.csv", pair.meta_log.to_csv())?;
    run.write("baseline_log.csv", pair.baseline_log.to_csv())?;
    let mut eval = String::from("model,run,mse,mpjpe,mpcpe\n");
    eval_rows(&mut eval, "", "meta", &scores.meta);
    eval_rows(&mut eval, "", "baseline", &scores.baseline);
    run.write("eval.csv", eval)?;
    run.write_json(
        "summary.json",
        &TrainSummary {
            mode: cfg.mode(),
            omega: cfg.omega,
            seed,
            splits,
            meta: scores.meta,
            baseline: scores.baseline,
            meta_best_epoch: pair.meta_log.best_epoch,
            baseline_best_epoch: pair.baseline_log.best_epoch,
        },
    )?;
    run.finish()
}

/// Scores along one curve: `points[i] = (n_test_objects, scores)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveGroup {
    /// Groups of one family are averaged together.
    pub family: String,
    pub label: String,
    pub points: Vec<(usize, PairScores)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeRow {
    pub family: String,
    pub label: String,
    pub metric: Metric,
    pub baseline_slope: f64,
    pub baseline_slope_se: f64,
    pub meta_slope: f64,
    pub meta_slope_se: f64,
    pub interaction: f64,
    pub interaction_se: f64,
    pub dof: usize,
    pub p_value: f64,
    pub p_display: String,
    pub meta_slope_smaller: bool,
}

impl SlopeRow {
    fn new(family: &str, label: &str, c: &CurveComparison) -> Self {
        let t = &c.test;
        Self {
            family: family.into(),
            label: label.into(),
            metric: c.metric,
            baseline_slope: t.fit_a.slope,
            baseline_slope_se: t.fit_a.slope_se,
            meta_slope: t.fit_b.slope,
            meta_slope_se: t.fit_b.slope_se,
            interaction: t.interaction,
            interaction_se: t.interaction_se,
            dof: t.dof,
            p_value: t.p_value,
            p_display: t.p_display(),
            meta_slope_smaller: c.meta_slope_smaller(),
        }
    }
}

pub const MEAN_LABEL: &str = "mean";

/// Per-group comparisons followed by one comparison of the family-averaged
/// curves, per metric.
pub fn comparisons(groups: &[CurveGroup], metrics: &[Metric]) -> Result<Vec<(String, String, CurveComparison)>> {
    let mut families: Vec<&str> = Vec::new();
    for g in groups {
        if !families.contains(&g.family.as_str()) {
            families.push(&g.family);
        }
    }
    let mut out = Vec::new();
    for &metric in metrics {
        for fam in &families {
            let mut metas = Vec::new();
            let mut bases = Vec::new();
            for g in groups.iter().filter(|g| g.family == *fam) {
                let refs: Vec<(usize, &PairScores)> = g.points.iter().map(|(n, s)| (*n, s)).collect();
                let (m, b) = curves(&refs, metric)?;
                out.push((fam.to_string(), g.label.clone(), compare(m.clone(), b.clone(), metric)?));
                metas.push(m);
                bases.push(b);
            }
            if metas.len() > 1 {
                let m = MetricCurve::average("meta", &metas)?;
                let b = MetricCurve::average("baseline", &bases)?;
                out.push((fam.to_string(), MEAN_LABEL.into(), compare(m, b, metric)?));
            }
        }
    }
    Ok(out)
}

fn curves_csv(rows: &[(String, String, CurveComparison)], metric: Metric) -> String {
    let mut s = String::from("family,label,model,n_test_objects,mean,variance,relative,ratio\n");
    for (fam, label, c) in rows.iter().filter(|r| r.2.metric == metric) {
        for (model, raw, rel, ratio) in [
            ("meta", &c.meta, &c.meta_relative, &c.meta_ratio),
            ("baseline", &c.baseline, &c.baseline_relative, &c.baseline_ratio),
        ] {
            for ((p, r), q) in raw.points.iter().zip(&rel.points).zip(&ratio.points) {
                let _ = writeln!(
                    s,
                    "{fam},{label},{model},{},{},{},{},{}",
                    p.n_test_objects, p.mean, p.variance, r.mean, q.mean
                );
            }
        }
    }
    s
}

fn slopes_csv(rows: &[SlopeRow]) -> String {
    let mut s = String::from(
        "family,label,metric,baseline_slope,baseline_slope_se,meta_slope,meta_slope_se,interaction,interaction_se,dof,p_value,p_display,meta_slope_smaller\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.family,
            r.label,
            metric_name(r.metric),
            r.baseline_slope,
            r.baseline_slope_se,
            r.meta_slope,
            r.meta_slope_se,
            r.interaction,
            r.interaction_se,
            r.dof,
            r.p_value,
            r.p_display,
            r.meta_slope_smaller
        );
    }
    s
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurveSummary {
    pub command: String,
    pub mode: ExperimentMode,
    pub slopes: Vec<SlopeRow>,
    /// Per family and metric: groups (seeds) whose meta slope is smaller,
    /// out of how many.
    pub meta_smaller: BTreeMap<String, (usize, usize)>,
}

/// Writes curves, slope tests, charts and the summary for a set of groups.
pub fn write_curve_outputs(run: &mut RunDir, command: &str, mode: ExperimentMode, groups: &[CurveGroup]) -> Result<CurveSummary> {
    let metrics = metrics_for(mode);
    let rows = comparisons(groups, &metrics)?;
    let slopes: Vec<SlopeRow> = rows.iter().map(|(f, l, c)| SlopeRow::new(f, l, c)).collect();
    let mut meta_smaller = BTreeMap::new();
    for r in slopes.iter().filter(|r| r.label != MEAN_LABEL) {
        let e = meta_smaller
            .entry(format!("{}/{}", r.family, metric_name(r.metric)))
            .or_insert((0, 0));
        e.0 += r.meta_slope_smaller as usize;
        e.1 += 1;
    }
    for &metric in &metrics {
        let name = metric_name(metric);
        run.write(&format!("curves_{name}.csv"), curves_csv(&rows, metric))?;
        let metric_rows: Vec<SlopeRow> = slopes.iter().filter(|r| r.metric == metric).cloned().collect();
        run.write(&format!("slopes_{name}.csv"), slopes_csv(&metric_rows))?;
        let mut families: Vec<String> = Vec::new();
        for r in &rows {
            if !families.contains(&r.0) {
                families.push(r.0.clone());
            }
        }
        for fam in families {
            let pick = rows
                .iter()
                .filter(|r| r.0 == fam && r.2.metric == metric)
                .find(|r| r.1 == MEAN_LABEL)
                .or_else(|| rows.iter().find(|r| r.0 == fam && r.2.metric == metric));
            if let Some((_, label, c)) = pick {
                let title = format!("relative {} ({fam}, {label}), p = {}", name.to_uppercase(), c.test.p_display());
                let svg = plot::line_chart(
                    &title,
                    &format!("R{} (mm)", name.to_uppercase()),
                    &[c.meta_relative.clone(), c.baseline_relative.clone()],
                    &[Some(c.test.fit_b.clone()), Some(c.test.fit_a.clone())],
                );
                run.write(&format!("curves_{name}_{fam}.svg"), svg)?;
            }
        }
    }
    let summary = CurveSummary {
        command: command.into(),
        mode,
        slopes,
        meta_smaller,
    };
    run.write_json("summary.json", &summary)?;
    Ok(summary)
}

/// Macro sweep over Ω for every seed.
pub fn cmd_benchmark(cfg: &RunConfig) -> Result<(RunManifest, CurveSummary)> {
    let (dataset, dhash) = load_dataset(cfg)?;
    let mut run = RunDir::create("benchmark", cfg)?;
    run.input("dataset", dhash);
    let mut eval = String::from("seed,omega,model,run,mse,mpjpe,mpcpe\n");
    let mut groups = Vec::new();
    for &seed in &cfg.seeds {
        let mut points = Vec::new();
        for &omega in &cfg.omegas {
            let splits = make_splits(&SplitSpec::new(omega, seed, dataset.catalog().len()))?;
            let (r, pair) = run_omega(&dataset, &splits, &cfg.experiment, seed)?;
            eprintln!(
                "benchmark seed {seed} omega {omega}: meta {:.3} baseline {:.3}",
                r.scores.meta.mean.selection_metric(),
                r.scores.baseline.mean.selection_metric()
            );
            let tag = format!("seed{seed}_omega{omega}");
            run.write(&format!("logs/{tag}_meta.csv"), r.meta_log.to_csv())?;
            run.write(&format!("logs/{tag}_baseline.csv"), r.baseline_log.to_csv())?;
            run.write_json(&format!("splits/{tag}.json"), &r.splits)?;
            if cfg.save_checkpoints {
                run.save_state(&format!("checkpoints/{tag}/meta"), &pair.meta)?;
                run.save_state(&format!("checkpoints/{tag}/baseline"), &pair.baseline_state())?;
            }
            let prefix = format!("{seed},{omega}");
            eval_rows(&mut eval, &prefix, "meta", &r.scores.meta);
            eval_rows(&mut eval, &prefix, "baseline", &r.scores.baseline);
            points.push((omega, r.scores));
        }
        groups.push(CurveGroup {
            family: "macro".into(),
            label: format!("seed{seed}"),
            points,
        });
    }
    run.write("eval.csv", eval)?;
    run.write_json("points.json", &groups)?;
    let summary = write_curve_outputs(&mut run, "benchmark", cfg.mode(), &groups)?;
    Ok((run.finish()?, summary))
}

/// Frozen-training-split series: one training per (size, seed), evaluated
/// on nested test sets of growing size.
pub fn cmd_micro(cfg: &RunConfig) -> Result<(RunManifest, CurveSummary)> {
    let (dataset, dhash) = load_dataset(cfg)?;
    let mut run = RunDir::create("micro", cfg)?;
    run.input("dataset", dhash);
    let mut eval = String::from("train_size,seed,n_test_objects,model,run,mse,mpjpe,mpcpe\n");
    let mut groups = Vec::new();
    for &size in &cfg.micro.train_sizes {
        for series in micro_series(dataset.catalog().len(), size, &cfg.micro.seeds)? {
            let last = series.tests.len() - 1;
            let ts = build_taskset(&dataset, &series.splits(last), &cfg.experiment)?;
            let train_seed = seed::derive(series.seed, "micro_train", size as u64);
            let pair = train_pair(&ts, &cfg.experiment, train_seed)?;
            let tag = format!("size{size}_seed{}", series.seed);
            run.write(&format!("logs/{tag}_meta.csv"), pair.meta_log.to_csv())?;
            run.write(&format!("logs/{tag}_baseline.csv"), pair.baseline_log.to_csv())?;
            run.write_json(&format!("splits/{tag}.json"), &series)?;
            let mut points = Vec::new();
            for objects in &series.tests {
                let scores = evaluate_pair(&pair, &ts.test.subset(objects), &cfg.experiment, train_seed)?;
                let prefix = format!("{size},{},{}", series.seed, objects.len());
                eval_rows(&mut eval, &prefix, "meta", &scores.meta);
                eval_rows(&mut eval, &prefix, "baseline", &scores.baseline);
                points.push((objects.len(), scores));
            }
            eprintln!("micro size {size} seed {}: {} test sets", series.seed, points.len());
            groups.push(CurveGroup {
                family: format!("size{size}"),
                label: format!("seed{}", series.seed),
                points,
            });
        }
    }
    run.write("eval.csv", eval)?;
    run.write_json("points.json", &groups)?;
    let summary = write_curve_outputs(&mut run, "micro", cfg.mode(), &groups)?;
    Ok((run.finish()?, summary))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum AnalyzeKind {
    Gpa,
    Embed,
    Gradnorm,
    Slopes,
}

impl AnalyzeKind {
    fn name(self) -> &'static str {
        match self {
            AnalyzeKind::Gpa => "gpa",
            AnalyzeKind::Embed => "embed",
            AnalyzeKind::Gradnorm => "gradnorm",
            AnalyzeKind::Slopes => "slopes",
        }
    }
}

pub fn cmd_analyze(cfg: &RunConfig, kind: AnalyzeKind) -> Result<RunManifest> {
    let mut run = RunDir::create(&format!("analyze-{}", kind.name()), cfg)?;
    match kind {
        AnalyzeKind::Gpa => analyze_gpa(cfg, &mut run)?,
        AnalyzeKind::Embed => analyze_embed(cfg, &mut run)?,
        AnalyzeKind::Gradnorm => analyze_gradnorm(cfg, &mut run)?,
        AnalyzeKind::Slopes => analyze_slopes(cfg, &mut run)?,
    }
    run.finish()
}

/// Evenly spaced wrist-aligned hand shapes per object.
pub fn hand_shapes(dataset: &Dataset, per_object: usize) -> Vec<Vec<Shape>> {
    let mut all: Vec<Vec<&[f64]>> = vec![Vec::new(); dataset.catalog().len()];
    for s in &dataset.sequences {
        for smp in &s.samples {
            all[s.info.object_id].push(&smp.target_hand);
        }
    }
    all.iter()
        .map(|v| {
            let n = per_object.min(v.len());
            (0..n).map(|i| shape_from_flat(v[i * v.len() / n])).collect()
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GpaSummary {
    pub objects: usize,
    pub shapes_per_object: usize,
    pub within: f64,
    pub between: f64,
    pub max_distance: f64,
}

fn analyze_gpa(cfg: &RunConfig, run: &mut RunDir) -> Result<()> {
    let (dataset, dhash) = load_dataset(cfg)?;
    run.input("dataset", dhash);
    let groups = hand_shapes(&dataset, cfg.analysis.gpa_shapes_per_object);
    let means = gpa_mean_shapes(&groups)?;
    let labels: Vec<String> = dataset.catalog().iter().map(|o| o.name.clone()).collect();
    let m = distance_heatmap(&labels, &means)?;
    let (within, between) = group_separation(&groups)?;
    run.write("gpa_heatmap.csv", m.to_csv())?;
    run.write("gpa_heatmap.svg", plot::heatmap("Procrustes distance between object mean hand shapes", &m))?;
    run.write_json(
        "summary.json",
        &GpaSummary {
            objects: labels.len(),
            shapes_per_object: cfg.analysis.gpa_shapes_per_object,
            within,
            between,
            max_distance: m.max(),
        },
    )
}

/// A finished `train` run.
pub struct Trained {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub meta: MetaState,
    pub baseline: MetaState,
}

pub fn load_trained(dir: Option<&Path>, flag: &str) -> Result<Trained> {
    let dir = dir.ok_or_else(|| Error::Config(format!("--{flag} must name a `train` run directory")))?;
    let manifest = RunManifest::read(dir).map_err(|e| match e {
        Error::MissingArtifact { path, .. } => Error::MissingArtifact {
            path,
            prerequisite: "train".into(),
        },
        other => other,
    })?;
    if manifest.command != "train" {
        return Err(Error::Config(format!(
            "{} was produced by `{}`, expected `train`",
            dir.display(),
            manifest.command
        )));
    }
    Ok(Trained {
        meta: load_state(&dir.join("checkpoints/meta"), "train")?,
        baseline: load_state(&dir.join("checkpoints/baseline"), "train")?,
        dir: dir.to_path_buf(),
        manifest,
    })
}

fn trained_taskset(t: &Trained) -> Result<(TaskSet, String)> {
    let c = &t.manifest.config;
    let (dataset, dhash) = load_dataset(c)?;
    if t.manifest.inputs.get("dataset") != Some(&dhash) {
        return Err(Error::Config(format!(
            "dataset at {} changed since {} was trained; rerun `gen` and `train`",
            c.data_dir.display(),
            t.dir.display()
        )));
    }
    let splits = make_splits(&SplitSpec::new(c.omega, c.seeds[0], dataset.catalog().len()))?;
    Ok((build_taskset(&dataset, &splits, &c.experiment)?, dhash))
}

fn eval_inner(c: &RunConfig) -> InnerLoopConfig {
    InnerLoopConfig {
        regularizer_weight: None,
        ..c.experiment.inner.clone()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SilhouetteRow {
    pub name: String,
    pub kind: String,
    pub vectors: usize,
    pub silhouette: f64,
}

fn analyze_embed(cfg: &RunConfig, run: &mut RunDir) -> Result<()> {
    let t = load_trained(cfg.analysis.checkpoint.as_deref(), "checkpoint")?;
    let (ts, dhash) = trained_taskset(&t)?;
    run.input("dataset", dhash);
    run.input("checkpoint", hash_tree(&t.dir.join("checkpoints"))?);
    let c = &t.manifest.config;
    let net = c.experiment.net(INPUT_DIM);
    let seed = c.seeds[0];
    let heads = adapted_heads(&net, &t.meta, &ts.test, &eval_inner(c), cfg.analysis.embed_min_vectors, seed)?;
    let tsne = &cfg.analysis.tsne;
    let mut rows = Vec::new();
    let mut last = None;
    for (name, vectors) in heads.names.iter().zip(&heads.vectors) {
        let e = embed_adapted_params(name, vectors, &heads.labels, tsne)?;
        run.write(&format!("embed_{name}.csv"), e.to_csv())?;
        run.write(
            &format!("embed_{name}.svg"),
            plot::scatter(&format!("t-SNE of adapted {name}, silhouette {:.3}", e.silhouette), &e.coords, &e.labels),
        )?;
        rows.push(SilhouetteRow {
            name: name.clone(),
            kind: "adapted".into(),
            vectors: vectors.len(),
            silhouette: e.silhouette,
        });
        last = Some(e);
    }
    let (pos, neg) = silhouette_controls(heads.labels.len(), last.as_ref().map(|e| e.coords.as_slice()), tsne, seed)?;
    rows.push(SilhouetteRow {
        name: "two_gaussians".into(),
        kind: "positive_control".into(),
        vectors: heads.labels.len(),
        silhouette: pos,
    });
    if let Some(neg) = neg {
        rows.push(SilhouetteRow {
            name: "shuffled_labels".into(),
            kind: "negative_control".into(),
            vectors: heads.labels.len(),
            silhouette: neg,
        });
    }
    let mut csv = String::from("name,kind,vectors,silhouette\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{}", r.name, r.kind, r.vectors, r.silhouette);
    }
    run.write("embed_silhouette.csv", csv)?;
    run.write_json("summary.json", &rows)
}

/// Positive control: `n` vectors from two well-separated Gaussians through
/// the same embedding. Negative control: silhouette of `coords` under a
/// random labelling with two balanced labels.
pub fn silhouette_controls(
    n: usize,
    coords: Option<&[[f64; 2]]>,
    tsne: &crate::analysis::TsneConfig,
    seed: u64,
) -> Result<(f64, Option<f64>)> {
    let mut rng = seed::rng(seed, "silhouette_control", 0);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let vectors: Vec<Vec<f64>> = labels
        .iter()
        .map(|&l| (0..32).map(|_| 8.0 * l as f64 + normal.sample(&mut rng)).collect())
        .collect();
    let pos = embed_adapted_params("two_gaussians", &vectors, &labels, tsne)?.silhouette;
    let neg = match coords {
        Some(c) => {
            let mut shuffled: Vec<usize> = (0..c.len()).map(|i| i % 2).collect();
            shuffled.shuffle(&mut rng);
            Some(silhouette(c, &shuffled)?)
        }
        None => None,
    };
    Ok((pos, neg))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradNormSummary {
    pub label_a: String,
    pub label_b: String,
    pub objects: Vec<usize>,
    pub steps: usize,
    /// Per object and model: norms never increase along adaptation.
    pub monotone: Vec<(usize, bool, bool)>,
    pub mean_ratio: f64,
}

fn analyze_gradnorm(cfg: &RunConfig, run: &mut RunDir) -> Result<()> {
    let a = load_trained(cfg.analysis.checkpoint.as_deref(), "checkpoint")?;
    let b = load_trained(cfg.analysis.checkpoint_b.as_deref(), "checkpoint-b")?;
    let (ca, cb) = (&a.manifest.config, &b.manifest.config);
    if ca.omega != cb.omega || ca.seeds[0] != cb.seeds[0] || ca.dataset != cb.dataset {
        return Err(Error::Config("both models must be trained on the same split of the same dataset".into()));
    }
    let (ts_a, dhash) = trained_taskset(&a)?;
    let (ts_b, _) = trained_taskset(&b)?;
    run.input("dataset", dhash);
    run.input("checkpoint", hash_tree(&a.dir.join("checkpoints"))?);
    run.input("checkpoint_b", hash_tree(&b.dir.join("checkpoints"))?);
    let mut objects = ts_a.splits.test.clone();
    objects.sort_unstable();
    objects.shuffle(&mut seed::rng(ca.seeds[0], "gradnorm_objects", 0));
    objects.truncate(cfg.analysis.gradnorm_objects);
    objects.sort_unstable();
    let steps = cfg.analysis.gradnorm_steps;
    let inner_a = InnerLoopConfig { steps, ..eval_inner(ca) };
    let inner_b = InnerLoopConfig { steps, ..eval_inner(cb) };
    let traces_a = norm_traces(&ca.experiment.net(INPUT_DIM), &a.meta, &ts_a.test, &objects, &inner_a)?;
    let traces_b = norm_traces(&cb.experiment.net(INPUT_DIM), &b.meta, &ts_b.test, &objects, &inner_b)?;
    let table = gradient_norm_table(&traces_a, &traces_b, steps)?;
    let (la, lb) = (mode_name(ca.mode()), mode_name(cb.mode()));
    let (la, lb) = if la == lb { ("a", "b") } else { (la, lb) };
    run.write("gradnorm.csv", table.to_csv(la, lb))?;
    let monotone_col = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0]);
    let monotone = table
        .objects
        .iter()
        .map(|&o| (o, monotone_col(&table.column(o, false)), monotone_col(&table.column(o, true))))
        .collect();
    let mean_ratio = table.rows.iter().map(|r| r.ratio).sum::<f64>() / table.rows.len() as f64;
    run.write_json(
        "summary.json",
        &GradNormSummary {
            label_a: la.into(),
            label_b: lb.into(),
            objects: table.objects.clone(),
            steps,
            monotone,
            mean_ratio,
        },
    )
}

fn analyze_slopes(cfg: &RunConfig, run: &mut RunDir) -> Result<()> {
    let dir = cfg
        .analysis
        .results
        .as_deref()
        .ok_or_else(|| Error::Config("--results must name a `benchmark` or `micro` run directory".into()))?;
    let points = dir.join("points.json");
    let text = fs::read_to_string(&points).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact {
            path: points.clone(),
            prerequisite: "benchmark".into(),
        },
        _ => Error::io(&points, e),
    })?;
    let source = RunManifest::read(dir)?;
    run.input("results", super::run::sha256_hex(text.as_bytes()));
    let groups: Vec<CurveGroup> = serde_json::from_str(&text)?;
    write_curve_outputs(run, &source.command, source.config.mode(), &groups)?;
    Ok(())
}

/// Collects the summaries of finished runs into one markdown report.
pub fn cmd_report(cfg: &RunConfig) -> Result<RunManifest> {
    if cfg.analysis.inputs.is_empty() {
        return Err(Error::Config("report needs at least one --input run directory".into()));
    }
    let mut run = RunDir::create("report", cfg)?;
    let mut md = String::from("# graspmeta report\n");
    let mut collected = Vec::new();
    let mut table = String::new();
    for dir in &cfg.analysis.inputs {
        let manifest = RunManifest::read(dir)?;
        let summary_path = dir.join("summary.json");
        let summary: serde_json::Value = match fs::read_to_string(&summary_path) {
            Ok(t) => serde_json::from_str(&t)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => serde_json::Value::Null,
            Err(e) => return Err(Error::io(&summary_path, e)),
        };
        run.input(manifest.run_id.clone(), super::run::hash_file(&dir.join(MANIFEST))?);
        let _ = writeln!(md, "\n## {} ({})\n", manifest.run_id, manifest.command);
        let _ = writeln!(md, "mode: {}\n", mode_name(manifest.config.mode()));
        if let Ok(s) = serde_json::from_value::<CurveSummary>(summary.clone()) {
            md.push_str("| family | label | metric | baseline slope | meta slope | p |\n|---|---|---|---|---|---|\n");
            for r in &s.slopes {
                let _ = writeln!(
                    md,
                    "| {} | {} | {} | {:.4} | {:.4} | {} |",
                    r.family,
                    r.label,
                    metric_name(r.metric),
                    r.baseline_slope,
                    r.meta_slope,
                    r.p_display
                );
            }
            let mode = mode_name(manifest.config.mode());
            for line in slopes_csv(&s.slopes).lines().skip(1) {
                let _ = writeln!(table, "{},{mode},{line}", manifest.run_id);
            }
            for (k, (n, of)) in &s.meta_smaller {
                let _ = writeln!(md, "\nmeta slope smaller in {n} of {of} ({k})");
            }
        } else if !summary.is_null() {
            let _ = writeln!(md, "```json\n{}\n```", serde_json::to_string_pretty(&summary)?);
        }
        collected.push(serde_json::json!({ "run_id": manifest.run_id, "command": manifest.command, "summary": summary }));
    }
    run.write("report.md", md)?;
    run.write_json("report.json", &collected)?;
    let header = slopes_csv(&[]);
    run.write("slopes.csv", format!("run_id,mode,{header}{table}"))?;
    run.finish()
}
