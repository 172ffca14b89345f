//! Dataset-level evaluation: load, exclude, downsample, match, score.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{match_points, DEFAULT_RESOLUTION};
use crate::io::{self, PredictionMode};
use crate::prediction::Prediction;
use crate::prompt::PromptList;
use crate::report::{RetrievalReport, SceneRetrieval, SegmentationReport};
use crate::retrieval::{evaluate_retrieval, nms, QueryKind, RetrievalConfig, RetrievalQuery};
use crate::scene::{GroundTruthScene, DEFAULT_EXCLUDED_LABELS};
use crate::seg::{evaluate_scene, PredictedCloud, SceneEvaluation, SegmentationConfig, DEFAULT_TOP_N};
use crate::similarity::{FeatureMatrix, LabelEmbeddings};

/// Scene directories under a dataset root: every subdirectory holding a
/// `points.ply`, sorted by name.
pub fn scene_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs = Vec::new();
    for e in entries {
        let e = e.map_err(|e| Error::io(root, e))?;
        let p = e.path();
        if p.is_dir() && p.join(io::POINTS_FILE).is_file() {
            dirs.push(p);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::format(root, "no scene directories with points.ply"));
    }
    Ok(dirs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneFilter {
    /// Instances with any of these synonyms are excluded.
    pub exclude_labels: Vec<String>,
    pub exclude_ambiguous: bool,
}

impl Default for SceneFilter {
    fn default() -> Self {
        SceneFilter {
            exclude_labels: DEFAULT_EXCLUDED_LABELS.iter().map(|s| s.to_string()).collect(),
            exclude_ambiguous: false,
        }
    }
}

impl SceneFilter {
    pub fn apply(&self, scene: GroundTruthScene) -> GroundTruthScene {
        let s = scene.exclude_by_synonym(&self.exclude_labels);
        if self.exclude_ambiguous {
            s.exclude_ambiguous()
        } else {
            s
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationOptions {
    pub resolution: f64,
    /// Defaults to the voxel resolution.
    pub match_distance: Option<f64>,
    pub n_values: Vec<usize>,
    pub filter: SceneFilter,
    /// Closed class list for mIoU.
    pub class_list: Option<PromptList>,
}

impl Default for SegmentationOptions {
    fn default() -> Self {
        SegmentationOptions {
            resolution: DEFAULT_RESOLUTION,
            match_distance: None,
            n_values: DEFAULT_TOP_N.to_vec(),
            filter: SceneFilter::default(),
            class_list: None,
        }
    }
}

/// Prompt list and label embeddings at a dataset root.
pub fn load_prompt(root: &Path) -> Result<(PromptList, LabelEmbeddings)> {
    let prompt = io::read_prompt_list(&root.join(io::PROMPT_FILE))?;
    let epath = root.join(io::EMBEDDINGS_FILE);
    let m = io::read_matrix(&epath)?;
    if m.rows() != prompt.len() {
        return Err(Error::format(
            &epath,
            format!("{} embedding rows for {} prompt labels", m.rows(), prompt.len()),
        ));
    }
    let emb = LabelEmbeddings::new(&m).map_err(|e| Error::format(&epath, e.to_string()))?;
    Ok((prompt, emb))
}

pub struct SceneOutput {
    /// The scene as evaluated: filtered and downsampled.
    pub scene: GroundTruthScene,
    pub evaluation: SceneEvaluation,
}

/// One scene through the segmentation track.
pub fn segment_scene(
    scene: GroundTruthScene,
    prediction: &Prediction,
    prompt: &PromptList,
    embeddings: &LabelEmbeddings,
    options: &SegmentationOptions,
) -> Result<SceneOutput> {
    let scene = options.filter.apply(scene).downsample(options.resolution)?;
    let cloud = prediction.point_features().downsample(options.resolution)?;
    let distance = options.match_distance.unwrap_or(options.resolution);
    let matching = match_points(scene.points(), &cloud.points, distance)?;
    let class_list = options
        .class_list
        .as_ref()
        .map(|cl| cl.labels().iter().filter_map(|l| prompt.position(l)).collect());
    let config = SegmentationConfig {
        n_values: options.n_values.clone(),
        class_list,
    };
    let features = prediction.features();
    let predicted = PredictedCloud {
        feature_rows: &cloud.feature_rows,
        features,
    };
    let evaluation = evaluate_scene(&scene, predicted, prompt, embeddings, &matching, &config)?;
    Ok(SceneOutput { scene, evaluation })
}

/// Segmentation over every scene of `data_root` with predictions from
/// `pred_root/<scene>`.
pub fn evaluate_segmentation_dataset(
    data_root: &Path,
    pred_root: &Path,
    mode: PredictionMode,
    options: &SegmentationOptions,
) -> Result<(SegmentationReport, BTreeMap<String, SceneOutput>)> {
    let (prompt, embeddings) = load_prompt(data_root)?;
    let dirs = scene_dirs(data_root)?;
    let outputs: Vec<(String, SceneOutput)> = dirs
        .par_iter()
        .map(|dir| {
            let scene = io::load_ground_truth(dir)?;
            let name = scene.name().to_string();
            let prediction = io::load_prediction(&pred_root.join(&name), mode)?;
            log::info!("scene {name}: {} ground-truth points", scene.len());
            let out = segment_scene(scene, &prediction, &prompt, &embeddings, options)?;
            Ok((name, out))
        })
        .collect::<Result<_>>()?;
    let outputs: BTreeMap<String, SceneOutput> = outputs.into_iter().collect();
    let summaries = outputs.iter().map(|(k, v)| (k.clone(), v.evaluation.summary.clone())).collect();
    Ok((SegmentationReport::from_scenes(options.n_values.clone(), summaries), outputs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalOptions {
    pub retrieval: RetrievalConfig,
    pub nms_threshold: Option<f64>,
    pub kind: Option<QueryKind>,
    pub filter: SceneFilter,
}

impl Default for RetrievalOptions {
    fn default() -> Self {
        RetrievalOptions {
            retrieval: RetrievalConfig::default(),
            nms_threshold: None,
            kind: None,
            filter: SceneFilter::default(),
        }
    }
}

/// Retrieval for one scene directory. Queries and their embeddings come
/// from `queries.json` and `query_embeddings.olxt`, row-aligned.
pub fn retrieve_scene(scene_dir: &Path, prediction: &Prediction, options: &RetrievalOptions) -> Result<SceneRetrieval> {
    let scene = io::load_ground_truth(scene_dir)?;
    let queries = io::read_queries(&scene_dir.join(io::QUERIES_FILE))?;
    let epath = scene_dir.join(io::QUERY_EMBEDDINGS_FILE);
    let emb = io::read_matrix(&epath)?;
    if emb.rows() != queries.len() {
        return Err(Error::format(
            &epath,
            format!("{} embedding rows for {} queries", emb.rows(), queries.len()),
        ));
    }
    retrieve_loaded(scene, &queries, &emb, prediction, options)
}

/// Retrieval for an in-memory scene. `query_embeddings` is row-aligned with
/// `queries`.
pub fn retrieve_loaded(
    scene: GroundTruthScene,
    queries: &[RetrievalQuery],
    query_embeddings: &FeatureMatrix,
    prediction: &Prediction,
    options: &RetrievalOptions,
) -> Result<SceneRetrieval> {
    let Prediction::Object(objects) = prediction else {
        return Err(Error::Config("retrieval needs object-level predictions".into()));
    };
    if query_embeddings.rows() != queries.len() {
        return Err(Error::Config(format!(
            "{} query embeddings for {} queries",
            query_embeddings.rows(),
            queries.len()
        )));
    }
    let scene = options.filter.apply(scene);
    // drop queries whose targets are all excluded, and apply the kind filter
    let mut keep_q = Vec::new();
    let mut keep_rows = Vec::new();
    for (i, q) in queries.iter().enumerate() {
        let mut q = q.clone();
        q.targets.retain(|t| scene.is_evaluated(*t));
        if q.targets.is_empty() || options.kind.is_some_and(|k| k != q.kind) {
            continue;
        }
        keep_rows.push(query_embeddings.row(i).to_vec());
        keep_q.push(q);
    }
    if keep_q.is_empty() {
        return Err(Error::NoQueries);
    }
    let m = FeatureMatrix::from_rows(query_embeddings.dim(), &keep_rows)?;
    let qemb = LabelEmbeddings::new(&m)?;
    let mut instances = objects.retrieval_instances();
    if let Some(t) = options.nms_threshold {
        let before = instances.len();
        instances = nms(instances, t, options.retrieval.resolution)?;
        log::info!("{}: NMS kept {} of {before} instances", scene.name(), instances.len());
    }
    evaluate_retrieval(&keep_q, &qemb, &instances, &scene, &options.retrieval)
}

pub fn evaluate_retrieval_dataset(data_root: &Path, pred_root: &Path, options: &RetrievalOptions) -> Result<RetrievalReport> {
    let dirs = scene_dirs(data_root)?;
    let scenes: Vec<(String, SceneRetrieval)> = dirs
        .par_iter()
        .map(|dir| {
            let name = dir.file_name().expect("scene dir").to_string_lossy().into_owned();
            let pdir = pred_root.join(&name);
            if !pdir.join(io::OBJECT_MANIFEST).exists() && pdir.join(io::DENSE_MANIFEST).exists() {
                return Err(Error::Config(format!(
                    "{}: retrieval needs object-level predictions, found only dense ones",
                    pdir.display()
                )));
            }
            let prediction = io::load_prediction(&pdir, PredictionMode::Object)?;
            Ok((name, retrieve_scene(dir, &prediction, options)?))
        })
        .collect::<Result<_>>()?;
    Ok(RetrievalReport::from_scenes(options.retrieval.pooled, scenes.into_iter().collect()))
}
