use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::PointMatching;
use crate::prompt::PromptList;
use crate::report::SceneSegmentation;
use crate::scene::{GroundTruthScene, InstanceId};
use crate::similarity::{rank_rows_with, FeatureSource, LabelEmbeddings, RankDiagnostics};

use super::{aggregate_scene, evaluate_point, scene_label_sets, Category, ClosedSet, PointOutcome, PointResult};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationConfig {
    pub n_values: Vec<usize>,
    /// Prompt indices of the closed class list; enables mIoU.
    pub class_list: Option<Vec<u32>>,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            n_values: super::DEFAULT_TOP_N.to_vec(),
            class_list: None,
        }
    }
}

/// Predicted points as seen by the segmentation engine: each point refers to
/// a feature row. Dense predictions have one row per point, object-level
/// predictions share one row per instance.
#[derive(Clone, Copy)]
pub struct PredictedCloud<'a> {
    pub feature_rows: &'a [u32],
    pub features: &'a dyn FeatureSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneEvaluation {
    pub summary: SceneSegmentation,
    /// Per N, one entry per ground-truth point; `None` for excluded points.
    pub categories: BTreeMap<usize, Vec<Option<Category>>>,
    pub diagnostics: RankDiagnostics,
}

pub(crate) fn check_n_values(n_values: &[usize], len: usize) -> Result<()> {
    if n_values.is_empty() {
        return Err(Error::Config("no top-N values requested".into()));
    }
    match n_values.iter().find(|&&n| n == 0 || n > len) {
        Some(&n) => Err(Error::TopNOutOfRange { n, len }),
        None => Ok(()),
    }
}

/// Primary-class prompt index of every evaluated instance whose primary
/// class is in the class list.
pub(crate) fn closed_classes(
    scene: &GroundTruthScene,
    prompt: &PromptList,
    closed: &ClosedSet,
) -> BTreeMap<InstanceId, u32> {
    scene
        .labels()
        .iter()
        .filter(|(id, _)| scene.is_evaluated(**id))
        .filter_map(|(id, set)| {
            let c = prompt.position(set.primary_class()?)?;
            closed.contains(c).then_some((*id, c))
        })
        .collect()
}

/// Evaluates one scene, ranking each distinct matched feature row once and
/// keeping only per-point outcomes in memory.
pub fn evaluate_scene(
    scene: &GroundTruthScene,
    cloud: PredictedCloud<'_>,
    prompt: &PromptList,
    embeddings: &LabelEmbeddings,
    matching: &PointMatching,
    config: &SegmentationConfig,
) -> Result<SceneEvaluation> {
    if embeddings.len() != prompt.len() {
        return Err(Error::Config(format!(
            "{} label embeddings for {} prompt labels",
            embeddings.len(),
            prompt.len()
        )));
    }
    check_n_values(&config.n_values, prompt.len())?;
    if matching.len() != scene.len() {
        return Err(Error::Scene(format!(
            "matching covers {} points, scene has {}",
            matching.len(),
            scene.len()
        )));
    }
    let sets = scene_label_sets(scene, prompt)?;
    let closed = config.class_list.as_ref().map(|c| ClosedSet::new(c, prompt.len()));
    let class_of = closed.as_ref().map(|c| closed_classes(scene, prompt, c));

    // (feature row, instance, gt point), sorted so equal rows are adjacent
    let mut work: Vec<(u32, InstanceId, usize)> = Vec::new();
    for (i, m) in matching.matched.iter().enumerate() {
        let id = scene.instance_ids()[i];
        if !scene.is_evaluated(id) {
            continue;
        }
        if let Some(p) = m {
            let row = *cloud.feature_rows.get(*p as usize).ok_or_else(|| {
                Error::Scene(format!("matched predicted point {p} has no feature row"))
            })?;
            if row as usize >= cloud.features.rows() {
                return Err(Error::Scene(format!(
                    "feature row {row} out of range ({} rows)",
                    cloud.features.rows()
                )));
            }
            work.push((row, id, i));
        }
    }
    work.sort_unstable();
    let mut starts = Vec::new();
    let mut rows = Vec::new();
    for (k, w) in work.iter().enumerate() {
        if k == 0 || work[k - 1].0 != w.0 {
            starts.push(k);
            rows.push(w.0 as usize);
        }
    }
    starts.push(work.len());

    let (groups, diagnostics) = rank_rows_with(cloud.features, &rows, embeddings, |g, ranking| {
        let mut out: Vec<(usize, PointOutcome)> = Vec::with_capacity(starts[g + 1] - starts[g]);
        let mut last: Option<(InstanceId, PointOutcome)> = None;
        for &(_, id, i) in &work[starts[g]..starts[g + 1]] {
            let outcome = match &last {
                Some((lid, o)) if *lid == id => o.clone(),
                _ => {
                    let o = evaluate_point(ranking, &sets[&id], &config.n_values, closed.as_ref());
                    last = Some((id, o.clone()));
                    o
                }
            };
            out.push((i, outcome));
        }
        out
    })?;

    let mut results: Vec<PointResult> = scene
        .instance_ids()
        .iter()
        .map(|id| {
            if scene.is_evaluated(*id) {
                PointResult::Missing
            } else {
                PointResult::Excluded
            }
        })
        .collect();
    for (i, o) in groups.into_iter().flatten() {
        results[i] = PointResult::Matched(o);
    }

    let summary = aggregate_scene(scene, &results, &config.n_values, class_of.as_ref())?;
    let categories = config
        .n_values
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let cats = results
                .iter()
                .map(|r| match r {
                    PointResult::Excluded => None,
                    PointResult::Missing => Some(Category::Missing),
                    PointResult::Matched(o) => Some(o.categories[k]),
                })
                .collect();
            (n, cats)
        })
        .collect();
    Ok(SceneEvaluation {
        summary,
        categories,
        diagnostics,
    })
}
