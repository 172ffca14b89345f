//! Open-vocabulary object retrieval: query generation, instance ranking and
//! average precision over a range of IoU thresholds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Overlap, Point3, VoxelSet, DEFAULT_RESOLUTION};
use crate::report::{
    ApSummary, RankHistogram, SceneRetrieval, AP25_THRESHOLD, KIND_S, KIND_S_PLUS_D, MAP_THRESHOLDS,
};
use crate::scene::{GroundTruthScene, InstanceId};
use crate::similarity::{LabelEmbeddings, RankedLabelList};

/// Default NMS IoU threshold.
pub const DEFAULT_NMS_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QueryKind {
    #[serde(rename = "S")]
    Synonym,
    /// "<depiction> <synonym>" of the same instance.
    #[serde(rename = "S+D")]
    SynonymDepiction,
}

impl QueryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            QueryKind::Synonym => KIND_S,
            QueryKind::SynonymDepiction => KIND_S_PLUS_D,
        }
    }
}

impl fmt::Display for QueryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalQuery {
    pub query: String,
    pub kind: QueryKind,
    pub targets: BTreeSet<InstanceId>,
}

/// One query per synonym and one per depiction-synonym pair of every
/// evaluated instance. Equal strings of the same kind are merged with their
/// targets unioned. Sorted by kind, then string.
pub fn generate_queries(scene: &GroundTruthScene) -> Vec<RetrievalQuery> {
    let mut merged: BTreeMap<(QueryKind, String), BTreeSet<InstanceId>> = BTreeMap::new();
    for (id, set) in scene.labels() {
        if !scene.is_evaluated(*id) {
            continue;
        }
        for s in &set.synonyms {
            merged.entry((QueryKind::Synonym, s.clone())).or_default().insert(*id);
            for d in &set.depictions {
                merged
                    .entry((QueryKind::SynonymDepiction, format!("{d} {s}")))
                    .or_default()
                    .insert(*id);
            }
        }
    }
    merged
        .into_iter()
        .map(|((kind, query), targets)| RetrievalQuery { query, kind, targets })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictedInstance {
    pub points: Vec<Point3>,
    pub feature: Vec<f32>,
    pub confidence: Option<f64>,
}

/// Greedy suppression in descending confidence, ties by input order. An
/// instance is dropped when its IoU with any kept one exceeds
/// `iou_threshold`. Survivors keep their input order.
pub fn nms(
    instances: Vec<PredictedInstance>,
    iou_threshold: f64,
    resolution: f64,
) -> Result<Vec<PredictedInstance>> {
    let mut conf = Vec::with_capacity(instances.len());
    for (i, inst) in instances.iter().enumerate() {
        match inst.confidence {
            Some(c) if c.is_finite() => conf.push(c),
            Some(_) => return Err(Error::NonFinite { what: "confidence", row: i }),
            None => return Err(Error::MissingConfidence(i)),
        }
    }
    let voxels: Vec<VoxelSet> = instances
        .par_iter()
        .map(|p| VoxelSet::from_points(&p.points, resolution))
        .collect();
    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.sort_by(|&a, &b| conf[b].total_cmp(&conf[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.iter().all(|&k| voxels[i].overlap(&voxels[k]).iou() <= iou_threshold) {
            kept.push(i);
        }
    }
    let keep: BTreeSet<usize> = kept.into_iter().collect();
    Ok(instances
        .into_iter()
        .enumerate()
        .filter_map(|(i, p)| keep.contains(&i).then_some(p))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalConfig {
    pub resolution: f64,
    /// Predictions below this cosine similarity are not retrieved.
    pub min_similarity: Option<f64>,
    /// Pool detections of all queries of a scene into one PR curve instead
    /// of averaging per query.
    pub pooled: bool,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            resolution: DEFAULT_RESOLUTION,
            min_similarity: None,
            pooled: false,
        }
    }
}

/// All thresholds in percent for which AP is reported.
pub fn ap_thresholds() -> Vec<u32> {
    let mut t = vec![AP25_THRESHOLD];
    t.extend(MAP_THRESHOLDS);
    t
}

/// All-points interpolated AP of a ranked true/false-positive list against
/// `positives` ground-truth targets.
pub fn average_precision(hits: &[bool], positives: usize) -> f64 {
    if positives == 0 {
        return 0.0;
    }
    let mut precision = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (k, &h) in hits.iter().enumerate() {
        tp += h as usize;
        precision.push(tp as f64 / (k + 1) as f64);
    }
    // precision envelope from the right
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let sum: f64 = hits.iter().zip(&precision).filter(|(h, _)| **h).map(|(_, p)| p).sum();
    sum / positives as f64
}

/// Greedy one-to-one matching in ranked order at one threshold: each
/// prediction claims the highest-IoU unmatched target reaching the
/// threshold (ties to the smaller target id).
fn greedy_hits(ranked: &[u32], targets: &[usize], overlaps: &[Vec<Overlap>], percent: u32) -> Vec<bool> {
    let mut taken = vec![false; targets.len()];
    ranked
        .iter()
        .map(|&p| {
            let mut best: Option<(usize, f64)> = None;
            for (k, &t) in targets.iter().enumerate() {
                let o = overlaps[p as usize][t];
                if taken[k] || !o.reaches_percent(percent) {
                    continue;
                }
                let iou = o.iou();
                if best.is_none_or(|(_, b)| iou > b) {
                    best = Some((k, iou));
                }
            }
            match best {
                Some((k, _)) => {
                    taken[k] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

struct QueryEval {
    kind: QueryKind,
    targets: usize,
    /// Per threshold: (similarity, hit) for every retrieved prediction.
    detections: BTreeMap<u32, Vec<(f64, bool)>>,
    first_rank: Option<usize>,
}

fn unit_rows(instances: &[PredictedInstance], dim: usize) -> Result<Vec<Vec<f64>>> {
    instances
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            if inst.feature.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: inst.feature.len(),
                });
            }
            let mut v: Vec<f64> = inst.feature.iter().map(|&x| x as f64).collect();
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { what: "instance feature", row: i });
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 0.0 {
                v.iter_mut().for_each(|x| *x /= n);
            }
            Ok(v)
        })
        .collect()
}

fn evaluate_queries(
    queries: &[RetrievalQuery],
    query_embeddings: &LabelEmbeddings,
    instances: &[PredictedInstance],
    scene: &GroundTruthScene,
    config: &RetrievalConfig,
) -> Result<Vec<QueryEval>> {
    if queries.is_empty() {
        return Err(Error::NoQueries);
    }
    if query_embeddings.len() != queries.len() {
        return Err(Error::Config(format!(
            "{} query embeddings for {} queries",
            query_embeddings.len(),
            queries.len()
        )));
    }
    let units = unit_rows(instances, query_embeddings.dim())?;

    let target_ids: Vec<InstanceId> = queries
        .iter()
        .flat_map(|q| q.targets.iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    for t in &target_ids {
        if !scene.labels().contains_key(t) {
            return Err(Error::Scene(format!("query target {t} is not a labeled instance")));
        }
    }
    let target_index: BTreeMap<InstanceId, usize> =
        target_ids.iter().enumerate().map(|(k, t)| (*t, k)).collect();
    let mut target_points: Vec<Vec<Point3>> = vec![Vec::new(); target_ids.len()];
    for (p, id) in scene.points().iter().zip(scene.instance_ids()) {
        if let Some(&k) = target_index.get(id) {
            target_points[k].push(*p);
        }
    }
    let target_voxels: Vec<VoxelSet> = target_points
        .par_iter()
        .map(|pts| VoxelSet::from_points(pts, config.resolution))
        .collect();
    let overlaps: Vec<Vec<Overlap>> = instances
        .par_iter()
        .map(|inst| {
            let v = VoxelSet::from_points(&inst.points, config.resolution);
            target_voxels.iter().map(|t| v.overlap(t)).collect()
        })
        .collect();

    let thresholds = ap_thresholds();
    Ok(queries
        .par_iter()
        .enumerate()
        .map(|(qi, q)| {
            let e = query_embeddings.unit_row(qi);
            let sims: Vec<f64> = units
                .iter()
                .map(|u| u.iter().zip(e).map(|(a, b)| a * b).sum::<f64>() + 0.0)
                .collect();
            let mut ranked = RankedLabelList::from_similarities(&sims);
            if let Some(min) = config.min_similarity {
                let keep = ranked.similarities.iter().take_while(|s| **s >= min).count();
                ranked.indices.truncate(keep);
                ranked.similarities.truncate(keep);
            }
            let targets: Vec<usize> = q.targets.iter().map(|t| target_index[t]).collect();
            let first_rank = ranked
                .indices
                .iter()
                .position(|&p| targets.iter().any(|&t| overlaps[p as usize][t].reaches_percent(AP25_THRESHOLD)))
                .map(|r| r + 1);
            let detections = thresholds
                .iter()
                .map(|&t| {
                    let hits = greedy_hits(&ranked.indices, &targets, &overlaps, t);
                    (t, ranked.similarities.iter().copied().zip(hits).collect())
                })
                .collect();
            QueryEval {
                kind: q.kind,
                targets: targets.len(),
                detections,
                first_rank,
            }
        })
        .collect())
}

fn summarize(evals: &[&QueryEval], pooled: bool) -> Option<ApSummary> {
    if evals.is_empty() {
        return None;
    }
    let by_iou = ap_thresholds()
        .into_iter()
        .map(|t| {
            let ap = if pooled {
                let mut all: Vec<(f64, usize, usize, bool)> = evals
                    .iter()
                    .enumerate()
                    .flat_map(|(qi, e)| {
                        e.detections[&t].iter().enumerate().map(move |(r, (s, h))| (*s, qi, r, *h))
                    })
                    .collect();
                all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
                let hits: Vec<bool> = all.iter().map(|d| d.3).collect();
                average_precision(&hits, evals.iter().map(|e| e.targets).sum())
            } else {
                evals
                    .iter()
                    .map(|e| {
                        let hits: Vec<bool> = e.detections[&t].iter().map(|d| d.1).collect();
                        average_precision(&hits, e.targets)
                    })
                    .sum::<f64>()
                    / evals.len() as f64
            };
            (t, ap)
        })
        .collect();
    Some(ApSummary::from_thresholds(by_iou, evals.len()))
}

/// Scene-level retrieval metrics. Every prediction is a candidate for every
/// query, ranked by cosine similarity (ties by input index).
pub fn evaluate_retrieval(
    queries: &[RetrievalQuery],
    query_embeddings: &LabelEmbeddings,
    instances: &[PredictedInstance],
    scene: &GroundTruthScene,
    config: &RetrievalConfig,
) -> Result<SceneRetrieval> {
    let evals = evaluate_queries(queries, query_embeddings, instances, scene, config)?;
    let all: Vec<&QueryEval> = evals.iter().collect();
    let mut rank_histogram = RankHistogram::default();
    for e in &evals {
        rank_histogram.record(e.first_rank);
    }
    let by_kind = [QueryKind::Synonym, QueryKind::SynonymDepiction]
        .into_iter()
        .map(|k| {
            let part: Vec<&QueryEval> = evals.iter().filter(|e| e.kind == k).collect();
            (k.as_str().to_string(), summarize(&part, config.pooled))
        })
        .collect();
    Ok(SceneRetrieval {
        queries: queries.len(),
        instances: instances.len(),
        overall: summarize(&all, config.pooled),
        by_kind,
        rank_histogram,
    })
}

/// Similarity rank of the first prediction overlapping any target at IoU
/// 0.25, bucketed.
pub fn query_rank_counts(
    queries: &[RetrievalQuery],
    query_embeddings: &LabelEmbeddings,
    instances: &[PredictedInstance],
    scene: &GroundTruthScene,
    config: &RetrievalConfig,
) -> Result<RankHistogram> {
    Ok(evaluate_retrieval(queries, query_embeddings, instances, scene, config)?.rank_histogram)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::CategoryLabelSet;
    use crate::similarity::FeatureMatrix;

    fn set(syn: &[&str], dep: &[&str]) -> CategoryLabelSet {
        CategoryLabelSet {
            synonyms: syn.iter().map(|s| s.to_string()).collect(),
            depictions: dep.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    /// Instance k is a row of `len` voxels along x starting at 10k.
    fn row(start: usize, len: usize) -> Vec<Point3> {
        (start..start + len).map(|i| [(i as f64 + 0.5) * 0.05, 0.025, 0.025]).collect()
    }

    fn scene(sets: Vec<CategoryLabelSet>, len: usize) -> GroundTruthScene {
        let mut points = Vec::new();
        let mut ids = Vec::new();
        let mut labels = BTreeMap::new();
        for (k, s) in sets.into_iter().enumerate() {
            let pts = row(100 * k, len);
            ids.extend(std::iter::repeat(InstanceId(k as u32)).take(pts.len()));
            points.extend(pts);
            labels.insert(InstanceId(k as u32), s);
        }
        GroundTruthScene::new("s", points, ids, labels, BTreeSet::new()).unwrap()
    }

    fn emb(rows: &[Vec<f32>]) -> LabelEmbeddings {
        LabelEmbeddings::new(&FeatureMatrix::from_rows(rows[0].len(), rows).unwrap()).unwrap()
    }

    fn inst(points: Vec<Point3>, feature: Vec<f32>, confidence: Option<f64>) -> PredictedInstance {
        PredictedInstance { points, feature, confidence }
    }

    #[test]
    fn cross_product_queries() {
        let s = scene(vec![set(&["pillow", "cushion"], &["tree"])], 3);
        let q = generate_queries(&s);
        let names: Vec<(&str, QueryKind)> = q.iter().map(|q| (q.query.as_str(), q.kind)).collect();
        assert_eq!(
            names,
            [
                ("cushion", QueryKind::Synonym),
                ("pillow", QueryKind::Synonym),
                ("tree cushion", QueryKind::SynonymDepiction),
                ("tree pillow", QueryKind::SynonymDepiction),
            ]
        );
    }

    #[test]
    fn shared_synonym_merges() {
        let s = scene(vec![set(&["chair"], &[]), set(&["chair"], &[])], 3);
        let q = generate_queries(&s);
        assert_eq!(q.len(), 1);
        assert_eq!(q[0].targets, BTreeSet::from([InstanceId(0), InstanceId(1)]));
        let excluded = s.exclude([InstanceId(1)]);
        assert_eq!(generate_queries(&excluded)[0].targets, BTreeSet::from([InstanceId(0)]));
    }

    #[test]
    fn nms_cases() {
        // 10-voxel rows; shift 2 gives IoU 8/12 > 0.5, shift 8 gives 2/18
        let a = inst(row(0, 10), vec![1.0], Some(0.8));
        let b = inst(row(2, 10), vec![1.0], Some(0.9));
        let c = inst(row(8, 10), vec![1.0], Some(0.7));
        let kept = nms(vec![a.clone(), b.clone()], 0.5, 0.05).unwrap();
        assert_eq!(kept, vec![b.clone()]);
        let kept = nms(vec![a.clone(), c.clone()], 0.5, 0.05).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(nms(vec![a.clone()], 0.5, 0.05).unwrap(), vec![a.clone()]);
        let e = nms(vec![a, inst(row(0, 1), vec![1.0], None)], 0.5, 0.05).unwrap_err();
        assert!(matches!(e, Error::MissingConfidence(1)));
    }

    #[test]
    fn ap_curve() {
        assert_eq!(average_precision(&[true], 1), 1.0);
        assert_eq!(average_precision(&[true, false], 2), 0.5);
        // hits at ranks 2 and 3 of 2 targets; the envelope lifts rank 2 to 2/3
        assert!((average_precision(&[false, true, true], 2) - 2.0 / 3.0).abs() < 1e-15);
        assert!((average_precision(&[true, false, true], 2) - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(average_precision(&[], 3), 0.0);
    }

    #[test]
    fn single_retrieval_and_threshold_straddle() {
        let s = scene(vec![set(&["lamp"], &[])], 10);
        let q = generate_queries(&s);
        let e = emb(&[vec![1.0, 0.0]]);
        // 6 of 10 voxels: IoU 0.6
        let r = evaluate_retrieval(&q, &e, &[inst(row(0, 6), vec![1.0, 0.0], None)], &s, &Default::default()).unwrap();
        let o = r.overall.unwrap();
        assert_eq!((o.ap50, o.ap25), (1.0, 1.0));
        assert_eq!(r.rank_histogram.ranks[0], 1);
        // 3 of 10: IoU 0.3
        let r = evaluate_retrieval(&q, &e, &[inst(row(0, 3), vec![1.0, 0.0], None)], &s, &Default::default()).unwrap();
        let o = r.overall.unwrap();
        assert_eq!((o.ap50, o.ap25), (0.0, 1.0));
    }

    #[test]
    fn half_recall_and_rank_lookup() {
        let s = scene(vec![set(&["chair"], &[]), set(&["chair"], &[])], 10);
        let q = generate_queries(&s);
        let e = emb(&[vec![1.0, 0.0]]);
        let preds = vec![
            inst(row(1000, 5), vec![1.0, 0.0], None),
            inst(row(2000, 5), vec![0.9, 0.1], None),
            inst(row(0, 10), vec![0.5, 0.5], None),
        ];
        let r = evaluate_retrieval(&q, &e, &preds, &s, &Default::default()).unwrap();
        let o = r.overall.unwrap();
        assert!((o.ap50 - (1.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(r.rank_histogram.ranks[2], 1);
        // no predictions at all
        let r = evaluate_retrieval(&q, &e, &[], &s, &Default::default()).unwrap();
        assert_eq!(r.overall.unwrap().map, 0.0);
        assert_eq!(r.rank_histogram.no_match, 1);
        assert!(matches!(
            evaluate_retrieval(&[], &e, &preds, &s, &Default::default()),
            Err(Error::NoQueries)
        ));
    }

    #[test]
    fn pooled_differs_from_per_query() {
        let s = scene(vec![set(&["a"], &[]), set(&["b"], &[])], 10);
        let q = generate_queries(&s);
        let e = emb(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        // query a retrieves its target at rank 1 with sim 1; query b ranks a
        // miss first (sim 0.8) and its target second (sim 0.6)
        let preds = vec![
            inst(row(0, 10), vec![1.0, 0.0], None),
            inst(row(100, 10), vec![0.8, 0.6], None),
            inst(row(1000, 10), vec![0.6, 0.8], None),
        ];
        let per = evaluate_retrieval(&q, &e, &preds, &s, &Default::default()).unwrap();
        let pooled_cfg = RetrievalConfig { pooled: true, ..Default::default() };
        let pooled = evaluate_retrieval(&q, &e, &preds, &s, &pooled_cfg).unwrap();
        assert!((per.overall.as_ref().unwrap().ap50 - 0.75).abs() < 1e-15);
        assert_ne!(per.overall.unwrap().ap50, pooled.overall.unwrap().ap50);
    }
}
