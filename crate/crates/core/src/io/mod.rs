//! On-disk formats.
//!
//! A dataset root holds `prompt_list.txt`, `embeddings.olxt` (one row per
//! prompt label) and one directory per scene with `points.ply`,
//! `labels.json`, and optionally `excluded.json`, `queries.json` and
//! `query_embeddings.olxt`. A prediction root holds one directory per scene
//! with either `dense.json` or `instances.json`.

mod ply;
mod tensor;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{normalize_label, CategoryLabelSet, RawAnnotation};
use crate::prediction::{DensePrediction, ObjectInstance, ObjectPrediction, Prediction};
use crate::prompt::PromptList;
use crate::report::{RetrievalReport, SegmentationReport};
use crate::retrieval::RetrievalQuery;
use crate::scene::{GroundTruthScene, InstanceId};
use crate::seg::Category;

pub use ply::{read_ply, write_ply, PlyCloud};
pub use tensor::{decode_matrix, encode_matrix, read_matrix, write_matrix};

pub const POINTS_FILE: &str = "points.ply";
pub const LABELS_FILE: &str = "labels.json";
pub const EXCLUDED_FILE: &str = "excluded.json";
pub const QUERIES_FILE: &str = "queries.json";
pub const QUERY_EMBEDDINGS_FILE: &str = "query_embeddings.olxt";
pub const PROMPT_FILE: &str = "prompt_list.txt";
pub const EMBEDDINGS_FILE: &str = "embeddings.olxt";
pub const DENSE_MANIFEST: &str = "dense.json";
pub const OBJECT_MANIFEST: &str = "instances.json";

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// One entry of `labels.json`, keyed by instance id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    #[serde(default)]
    pub synonyms: Vec<String>,
    #[serde(default)]
    pub depictions: Vec<String>,
    #[serde(default)]
    pub vis_sim: Vec<String>,
    #[serde(default)]
    pub clutter: Vec<InstanceId>,
    #[serde(default)]
    pub ambiguous: bool,
}

impl From<&CategoryLabelSet> for LabelEntry {
    fn from(s: &CategoryLabelSet) -> Self {
        LabelEntry {
            synonyms: s.synonyms.iter().cloned().collect(),
            depictions: s.depictions.iter().cloned().collect(),
            vis_sim: s.visually_similar.iter().cloned().collect(),
            clutter: s.clutter_ids.iter().copied().collect(),
            ambiguous: s.ambiguous,
        }
    }
}

impl From<&LabelEntry> for CategoryLabelSet {
    fn from(e: &LabelEntry) -> Self {
        let norm = |v: &[String]| v.iter().filter_map(|l| normalize_label(l)).collect();
        CategoryLabelSet {
            synonyms: norm(&e.synonyms),
            depictions: norm(&e.depictions),
            visually_similar: norm(&e.vis_sim),
            clutter_ids: e.clutter.iter().copied().collect(),
            ambiguous: e.ambiguous,
        }
    }
}

pub fn read_labels(path: &Path) -> Result<BTreeMap<InstanceId, CategoryLabelSet>> {
    let raw: BTreeMap<String, LabelEntry> = read_json(path)?;
    raw.iter()
        .map(|(k, v)| {
            let id: InstanceId = k
                .parse()
                .map_err(|_| Error::format(path, format!("instance key {k:?} is not an integer")))?;
            Ok((id, CategoryLabelSet::from(v)))
        })
        .collect()
}

pub fn write_labels(path: &Path, labels: &BTreeMap<InstanceId, CategoryLabelSet>) -> Result<()> {
    let raw: BTreeMap<String, LabelEntry> = labels.iter().map(|(k, v)| (k.to_string(), v.into())).collect();
    // keys sort as strings in JSON objects; keep numeric order instead
    let mut ordered = serde_json::Map::new();
    let mut keys: Vec<&String> = raw.keys().collect();
    keys.sort_by_key(|k| k.parse::<u32>().unwrap_or(u32::MAX));
    for k in keys {
        ordered.insert(k.clone(), serde_json::to_value(&raw[k]).expect("serializable"));
    }
    write_json(path, &ordered)
}

pub fn read_annotations(path: &Path) -> Result<Vec<RawAnnotation>> {
    read_json(path)
}

pub fn read_queries(path: &Path) -> Result<Vec<RetrievalQuery>> {
    let q: Vec<RetrievalQuery> = read_json(path)?;
    if let Some(bad) = q.iter().find(|q| q.targets.is_empty()) {
        return Err(Error::format(path, format!("query {:?} has no targets", bad.query)));
    }
    Ok(q)
}

pub fn read_prompt_list(path: &Path) -> Result<PromptList> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let labels: Vec<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
    if labels.is_empty() {
        return Err(Error::format(path, "prompt list is empty"));
    }
    PromptList::new(labels).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_prompt_list(path: &Path, prompt: &PromptList) -> Result<()> {
    let mut text = prompt.labels().join("\n");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn scene_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Loads `points.ply`, `labels.json` and the optional `excluded.json` of a
/// scene directory. Point instance ids must be non-negative.
pub fn load_ground_truth(dir: &Path) -> Result<GroundTruthScene> {
    let ply_path = dir.join(POINTS_FILE);
    let cloud = read_ply(&ply_path)?;
    let ids = cloud
        .instance_ids
        .ok_or_else(|| Error::format(&ply_path, "vertex element lacks instance_id"))?;
    let instance_ids = ids
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            u32::try_from(id)
                .map(InstanceId)
                .map_err(|_| Error::format(&ply_path, format!("vertex {i} has negative instance_id {id}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let labels_path = dir.join(LABELS_FILE);
    let labels = read_labels(&labels_path)?;
    let excluded_path = dir.join(EXCLUDED_FILE);
    let excluded: BTreeSet<InstanceId> = if excluded_path.exists() {
        read_json(&excluded_path)?
    } else {
        BTreeSet::new()
    };
    GroundTruthScene::new(scene_name(dir), cloud.points, instance_ids, labels, excluded)
        .map_err(|e| Error::format(&labels_path, e.to_string()))
}

/// Writes a scene in the layout `load_ground_truth` reads.
pub fn save_ground_truth(dir: &Path, scene: &GroundTruthScene) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cloud = PlyCloud {
        points: scene.points().to_vec(),
        instance_ids: Some(scene.instance_ids().iter().map(|id| id.0 as i32).collect()),
        colors: None,
    };
    write_ply(&dir.join(POINTS_FILE), &cloud)?;
    write_labels(&dir.join(LABELS_FILE), scene.labels())?;
    if !scene.excluded().is_empty() {
        write_json(&dir.join(EXCLUDED_FILE), scene.excluded())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionMode {
    Dense,
    Object,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseManifest {
    pub points: PathBuf,
    pub features: PathBuf,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEntry {
    pub id: InstanceId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    /// Half-open `[start, end)` index ranges into the shared cloud.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ranges: Vec<[u32; 2]>,
    /// Text file of whitespace-separated point indices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectManifest {
    pub points: PathBuf,
    pub features: PathBuf,
    pub dim: usize,
    pub instances: Vec<InstanceEntry>,
}

fn read_features(dir: &Path, rel: &Path, dim: usize, rows: usize, what: &str) -> Result<crate::similarity::FeatureMatrix> {
    let path = dir.join(rel);
    let m = read_matrix(&path)?;
    if m.dim() != dim {
        return Err(Error::format(&path, format!("feature dimension {} but manifest declares {dim}", m.dim())));
    }
    if m.rows() != rows {
        return Err(Error::format(&path, format!("{} feature rows for {rows} {what}", m.rows())));
    }
    Ok(m)
}

fn read_mask(path: &Path) -> Result<Vec<u32>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::format(path, format!("bad point index {t:?}"))))
        .collect()
}

/// Loads a scene prediction. Paths inside manifests are relative to the
/// manifest's directory.
pub fn load_prediction(dir: &Path, mode: PredictionMode) -> Result<Prediction> {
    match mode {
        PredictionMode::Dense => {
            let mpath = dir.join(DENSE_MANIFEST);
            let m: DenseManifest = read_json(&mpath)?;
            let cloud = read_ply(&dir.join(&m.points))?;
            let features = read_features(dir, &m.features, m.dim, cloud.points.len(), "points")?;
            Ok(Prediction::Dense(DensePrediction::new(cloud.points, features)?))
        }
        PredictionMode::Object => {
            let mpath = dir.join(OBJECT_MANIFEST);
            let m: ObjectManifest = read_json(&mpath)?;
            let cloud = read_ply(&dir.join(&m.points))?;
            let features = read_features(dir, &m.features, m.dim, m.instances.len(), "instances")?;
            let n = cloud.points.len() as u32;
            let mut instances = Vec::with_capacity(m.instances.len());
            for e in &m.instances {
                let mut indices = Vec::new();
                for &[s, t] in &e.ranges {
                    if s > t || t > n {
                        return Err(Error::format(
                            &mpath,
                            format!("instance {}: range [{s}, {t}) outside a cloud of {n} points", e.id),
                        ));
                    }
                    indices.extend(s..t);
                }
                if let Some(mask) = &e.mask {
                    indices.extend(read_mask(&dir.join(mask))?);
                }
                instances.push(ObjectInstance {
                    id: e.id,
                    confidence: e.confidence,
                    indices,
                });
            }
            let pred = ObjectPrediction::new(cloud.points, features, instances)
                .map_err(|e| Error::format(&mpath, e.to_string()))?;
            Ok(Prediction::Object(pred))
        }
    }
}

/// Fixed display colour of each category.
pub fn category_color(c: Category) -> [u8; 3] {
    match c {
        Category::Synonym => [46, 204, 113],
        Category::Depiction => [52, 152, 219],
        Category::VisuallySimilar => [241, 196, 15],
        Category::Clutter => [240, 148, 148],
        Category::Missing => [149, 165, 166],
        Category::Incorrect => [192, 57, 43],
    }
}

/// Writes the evaluated ground-truth points coloured by category. Points
/// whose category is `None` (excluded instances) are skipped.
pub fn export_category_pointcloud(scene: &GroundTruthScene, categories: &[Option<Category>], path: &Path) -> Result<()> {
    if categories.len() != scene.len() {
        return Err(Error::Scene(format!(
            "{} categories for a scene of {} points",
            categories.len(),
            scene.len()
        )));
    }
    let mut cloud = PlyCloud {
        instance_ids: Some(Vec::new()),
        colors: Some(Vec::new()),
        ..Default::default()
    };
    for ((p, id), c) in scene.points().iter().zip(scene.instance_ids()).zip(categories) {
        if let Some(c) = c {
            cloud.points.push(*p);
            cloud.instance_ids.as_mut().unwrap().push(id.0 as i32);
            cloud.colors.as_mut().unwrap().push(category_color(*c));
        }
    }
    write_ply(path, &cloud)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Reports that flatten into `(scene, metric, value)` rows.
pub trait FlatReport: Serialize {
    fn rows(&self) -> Vec<(String, String, Option<f64>)>;
}

impl FlatReport for SegmentationReport {
    fn rows(&self) -> Vec<(String, String, Option<f64>)> {
        SegmentationReport::rows(self)
    }
}

impl FlatReport for RetrievalReport {
    fn rows(&self) -> Vec<(String, String, Option<f64>)> {
        RetrievalReport::rows(self)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// CSV text with header `scene,metric,value`; undefined values are `null`.
pub fn report_csv(report: &impl FlatReport) -> String {
    let mut out = String::from("scene,metric,value\n");
    for (scene, metric, value) in report.rows() {
        let v = value.map_or_else(|| "null".to_string(), |v| v.to_string());
        out.push_str(&format!("{},{},{}\n", csv_field(&scene), csv_field(&metric), v));
    }
    out
}

pub fn write_report(report: &impl FlatReport, path: &Path, format: ReportFormat) -> Result<()> {
    match format {
        ReportFormat::Json => write_json(path, report),
        ReportFormat::Csv => fs::write(path, report_csv(report)).map_err(|e| Error::io(path, e)),
    }
}
