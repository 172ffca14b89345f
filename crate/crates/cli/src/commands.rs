use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use olx_core::clutter::{apply_clutter, compute_clutter};
use olx_core::io::{self, FlatReport, PredictionMode, ReportFormat};
use olx_core::labels::curate_all;
use olx_core::pipeline::{
    evaluate_retrieval_dataset, evaluate_segmentation_dataset, load_prompt, scene_dirs, segment_scene,
    RetrievalOptions, SceneFilter, SegmentationOptions,
};
use olx_core::retrieval::{generate_queries, QueryKind, RetrievalConfig};
use olx_core::stats::label_stats;
use olx_core::{Error, Result};
use olx_fixtures::{generate_fixture as generate, write_fixture, FixtureConfig, RetrievalMode};

use crate::{FilterArgs, Format, Kind, Mode, OutputArgs, SegArgs};

fn filter(args: &FilterArgs) -> SceneFilter {
    SceneFilter {
        exclude_labels: args.exclude_labels.clone(),
        exclude_ambiguous: args.exclude_ambiguous,
    }
}

/// A single scene directory, or every scene under a dataset root.
fn scenes_at(path: &Path) -> Result<Vec<PathBuf>> {
    if path.join(io::POINTS_FILE).is_file() {
        Ok(vec![path.to_path_buf()])
    } else {
        scene_dirs(path)
    }
}

fn mkdir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn print_json<T: Serialize + ?Sized>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn emit(report: &impl FlatReport, stem: &str, output: &OutputArgs) -> Result<()> {
    let Some(dir) = &output.out else {
        return print_json(report);
    };
    mkdir(dir)?;
    if matches!(output.format, Format::Json | Format::Both) {
        io::write_report(report, &dir.join(format!("{stem}.json")), ReportFormat::Json)?;
    }
    if matches!(output.format, Format::Csv | Format::Both) {
        io::write_report(report, &dir.join(format!("{stem}.csv")), ReportFormat::Csv)?;
    }
    Ok(())
}

fn seg_options(args: &SegArgs) -> Result<SegmentationOptions> {
    if !(args.resolution.is_finite() && args.resolution > 0.0) {
        return Err(Error::Config(format!("resolution must be > 0, got {}", args.resolution)));
    }
    Ok(SegmentationOptions {
        resolution: args.resolution,
        match_distance: args.match_distance,
        n_values: args.top_n.clone(),
        filter: filter(&args.filter),
        class_list: args.class_list.as_deref().map(io::read_prompt_list).transpose()?,
    })
}

fn mode(m: Mode) -> PredictionMode {
    match m {
        Mode::Dense => PredictionMode::Dense,
        Mode::Object => PredictionMode::Object,
    }
}

pub fn eval_seg(args: &SegArgs, output: &OutputArgs, viz: bool) -> Result<()> {
    let options = seg_options(args)?;
    let (report, scenes) = evaluate_segmentation_dataset(&args.data, &args.pred, mode(args.mode), &options)?;
    emit(&report, "segmentation", output)?;
    if let (true, Some(out)) = (viz, &output.out) {
        let vdir = out.join("viz");
        mkdir(&vdir)?;
        let n = options.n_values.iter().copied().min().expect("validated non-empty");
        for (name, s) in &scenes {
            let path = vdir.join(format!("{name}_top{n}.ply"));
            io::export_category_pointcloud(&s.scene, &s.evaluation.categories[&n], &path)?;
        }
    }
    Ok(())
}

pub struct RetrievalArgs {
    pub nms: Option<f64>,
    pub pooled: bool,
    pub kind: Option<Kind>,
    pub min_similarity: Option<f64>,
    pub resolution: f64,
}

pub fn eval_retrieval(
    data: &Path,
    pred: &Path,
    args: &RetrievalArgs,
    filter_args: &FilterArgs,
    output: &OutputArgs,
) -> Result<()> {
    let options = RetrievalOptions {
        retrieval: RetrievalConfig {
            resolution: args.resolution,
            min_similarity: args.min_similarity,
            pooled: args.pooled,
        },
        nms_threshold: args.nms,
        kind: args.kind.map(|k| match k {
            Kind::S => QueryKind::Synonym,
            Kind::SD => QueryKind::SynonymDepiction,
        }),
        filter: filter(filter_args),
    };
    let report = evaluate_retrieval_dataset(data, pred, &options)?;
    emit(&report, "retrieval", output)
}

pub fn curate(annotations: &Path, out: &Path, agreement: usize) -> Result<()> {
    let raw = io::read_annotations(annotations)?;
    let curated = curate_all(&raw, agreement).map_err(|e| match e {
        Error::Config(m) => Error::format(annotations, m),
        e => e,
    })?;
    mkdir(out)?;
    io::write_labels(&out.join(io::LABELS_FILE), &curated.labels)?;
    io::write_json(&out.join(io::EXCLUDED_FILE), &curated.unlabeled)?;
    log::info!(
        "curated {} instances, {} unlabeled",
        curated.labels.len(),
        curated.unlabeled.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct QueryCounts {
    #[serde(rename = "S")]
    s: usize,
    #[serde(rename = "S+D")]
    sd: usize,
}

pub fn queries(data: &Path, filter_args: &FilterArgs, write: bool) -> Result<()> {
    let f = filter(filter_args);
    let mut summary = BTreeMap::new();
    for dir in scenes_at(data)? {
        let scene = f.apply(io::load_ground_truth(&dir)?);
        let q = generate_queries(&scene);
        let count = |k: QueryKind| q.iter().filter(|q| q.kind == k).count();
        summary.insert(
            scene.name().to_string(),
            QueryCounts {
                s: count(QueryKind::Synonym),
                sd: count(QueryKind::SynonymDepiction),
            },
        );
        if write {
            io::write_json(&dir.join(io::QUERIES_FILE), &q)?;
        }
    }
    print_json(&summary)
}

pub fn stats(data: &Path, out: Option<&Path>) -> Result<()> {
    let mut all = BTreeMap::new();
    for dir in scenes_at(data)? {
        let scene = io::load_ground_truth(&dir)?;
        all.insert(scene.name().to_string(), label_stats(&scene));
    }
    match out {
        Some(p) => io::write_json(p, &all),
        None => print_json(&all),
    }
}

pub fn clutter(data: &Path, filter_args: &FilterArgs, write: bool) -> Result<()> {
    let f = filter(filter_args);
    let mut all = BTreeMap::new();
    for dir in scenes_at(data)? {
        let scene = io::load_ground_truth(&dir)?;
        let map = compute_clutter(&f.apply(scene.clone()))?;
        if !map.fallbacks.is_empty() {
            log::warn!("{}: axis-aligned boxes for {:?}", scene.name(), map.fallbacks);
        }
        let neighbours: BTreeMap<String, Vec<u32>> = map
            .neighbors
            .iter()
            .map(|(id, n)| (id.0.to_string(), n.iter().map(|x| x.0).collect()))
            .collect();
        all.insert(scene.name().to_string(), neighbours);
        if write {
            let updated = apply_clutter(scene, &map)?;
            io::write_labels(&dir.join(io::LABELS_FILE), updated.labels())?;
        }
    }
    print_json(&all)
}

pub fn generate_fixture(
    seed: u64,
    out: &Path,
    scenes: usize,
    objects: usize,
    points_per_object: usize,
    noisy: bool,
) -> Result<()> {
    let config = FixtureConfig {
        seed,
        scenes,
        objects,
        points_per_object,
        retrieval: if noisy {
            RetrievalMode::Noisy
        } else {
            RetrievalMode::Perfect
        },
        ..Default::default()
    };
    let fixture = generate(&config)?;
    let paths = write_fixture(&fixture, out)?;
    log::info!("wrote {}", paths.data.display());
    Ok(())
}

pub fn export_viz(args: &SegArgs, scene_name: &str, n: usize, out: &Path) -> Result<()> {
    let mut options = seg_options(args)?;
    options.n_values = vec![n];
    let (prompt, embeddings) = load_prompt(&args.data)?;
    let scene = io::load_ground_truth(&args.data.join(scene_name))?;
    let prediction = io::load_prediction(&args.pred.join(scene_name), mode(args.mode))?;
    let s = segment_scene(scene, &prediction, &prompt, &embeddings, &options)?;
    io::export_category_pointcloud(&s.scene, &s.evaluation.categories[&n], out)
}
