//! Reference implementation of both evaluation tracks.
//!
//! Written for obviousness, not speed: linear scans for voxel grouping,
//! brute-force nearest neighbours, cosine similarity from scratch, insertion
//! sort for rankings, hash-set voxel IoU and a precision-recall curve
//! enumerated cutoff by cutoff. It shares no metric code with the engine and
//! refuses inputs beyond a small size.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use olx_core::geometry::Point3;
use olx_core::prediction::Prediction;
use olx_core::prompt::PromptList;
use olx_core::report::{ApSummary, CategoryFrequencies, RankHistogram, SceneRetrieval, SceneSegmentation, SetRankingScores};
use olx_core::retrieval::{PredictedInstance, QueryKind, RetrievalQuery};
use olx_core::scene::{GroundTruthScene, InstanceId};
use olx_core::seg::Category;
use olx_core::similarity::FeatureMatrix;
use olx_core::{Error, Result};

pub const MAX_POINTS: usize = 1000;
pub const MAX_LABELS: usize = 100;
pub const MAX_INSTANCES: usize = 100;

fn too_big(what: &str, n: usize, max: usize) -> Result<()> {
    if n > max {
        return Err(Error::Config(format!("oracle limited to {max} {what}, got {n}")));
    }
    Ok(())
}

fn key(p: &Point3, res: f64) -> [i64; 3] {
    // same grid-plane snap as the engine's voxelization
    [0, 1, 2].map(|k| (p[k] / res + 1e-9).floor() as i64)
}

fn d2(a: &Point3, b: &Point3) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Indices kept by voxel downsampling, ascending.
pub fn downsample(points: &[Point3], res: f64) -> Vec<usize> {
    let mut groups: Vec<([i64; 3], Vec<usize>)> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let k = key(p, res);
        match groups.iter_mut().find(|g| g.0 == k) {
            Some(g) => g.1.push(i),
            None => groups.push((k, vec![i])),
        }
    }
    let mut keep = Vec::new();
    for (_, members) in groups {
        let mut c = [0.0; 3];
        for &i in &members {
            for k in 0..3 {
                c[k] += points[i][k];
            }
        }
        for v in c.iter_mut() {
            *v /= members.len() as f64;
        }
        let mut best = members[0];
        for &i in &members {
            if d2(&points[i], &c) < d2(&points[best], &c) {
                best = i;
            }
        }
        keep.push(best);
    }
    keep.sort();
    keep
}

fn nearest(q: &Point3, cloud: &[Point3], max: f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (j, p) in cloud.iter().enumerate() {
        if d2(q, p) <= max * max && best.is_none_or(|b| d2(q, p) < d2(q, &cloud[b])) {
            best = Some(j);
        }
    }
    best
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] as f64 * b[i] as f64;
        na += a[i] as f64 * a[i] as f64;
        nb += b[i] as f64 * b[i] as f64;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Candidate indices by descending similarity, ties by index.
fn rank(sims: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = Vec::new();
    for i in 0..sims.len() {
        let mut at = order.len();
        while at > 0 && sims[order[at - 1]] < sims[i] {
            at -= 1;
        }
        order.insert(at, i);
    }
    order
}

/// Per-point view of a prediction: points with their feature rows. In
/// object mode a point belongs to its highest-confidence instance, ties to
/// the smaller id, missing confidence ranking last.
fn point_rows(prediction: &Prediction) -> (Vec<Point3>, Vec<usize>) {
    match prediction {
        Prediction::Dense(d) => (d.points.clone(), (0..d.points.len()).collect()),
        Prediction::Object(o) => {
            let mut pts = Vec::new();
            let mut rows = Vec::new();
            for (i, p) in o.points().iter().enumerate() {
                let mut owner: Option<usize> = None;
                for (k, inst) in o.instances().iter().enumerate() {
                    if !inst.indices.contains(&(i as u32)) {
                        continue;
                    }
                    let better = match owner {
                        None => true,
                        Some(b) => {
                            let cur = &o.instances()[b];
                            let c = inst.confidence.unwrap_or(f64::NEG_INFINITY);
                            let cb = cur.confidence.unwrap_or(f64::NEG_INFINITY);
                            c > cb || (c == cb && inst.id < cur.id)
                        }
                    };
                    if better {
                        owner = Some(k);
                    }
                }
                if let Some(k) = owner {
                    pts.push(*p);
                    rows.push(k);
                }
            }
            (pts, rows)
        }
    }
}

struct Sets {
    syn: Vec<usize>,
    dep: Vec<usize>,
    vis: Vec<usize>,
    clutter: Vec<usize>,
}

fn positions<'a>(labels: impl Iterator<Item = &'a String>, prompt: &PromptList) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for l in labels {
        let p = prompt
            .labels()
            .iter()
            .position(|x| x == l)
            .ok_or_else(|| Error::Config(format!("label {l:?} not in prompt list")))?;
        if !out.contains(&p) {
            out.push(p);
        }
    }
    Ok(out)
}

fn score_terms(rank: usize, left: usize, right: usize, len: usize) -> (f64, f64) {
    let (r, l, h, n) = (rank as f64, left as f64, right as f64, len as f64);
    let lt = if r < l { 1.0 + (r - l) / l } else { 1.0 };
    let rt = if right == len || r <= h { 1.0 } else { 1.0 - (r - h) / (n - h) };
    (lt, rt)
}

/// Scene segmentation metrics. `scene` must already carry its exclusions.
pub fn segmentation(
    scene: &GroundTruthScene,
    prompt: &PromptList,
    label_matrix: &FeatureMatrix,
    prediction: &Prediction,
    n_values: &[usize],
    class_list: Option<&PromptList>,
    resolution: f64,
) -> Result<SceneSegmentation> {
    too_big("points", scene.len(), MAX_POINTS)?;
    too_big("labels", prompt.len(), MAX_LABELS)?;
    let len = prompt.len();
    for &n in n_values {
        if n == 0 || n > len {
            return Err(Error::TopNOutOfRange { n, len });
        }
    }

    let gt_keep = downsample(scene.points(), resolution);
    let (pred_all, rows_all) = point_rows(prediction);
    too_big("predicted points", pred_all.len(), 4 * MAX_POINTS)?;
    let pred_keep = downsample(&pred_all, resolution);
    let pred: Vec<Point3> = pred_keep.iter().map(|&i| pred_all[i]).collect();
    let pred_rows: Vec<usize> = pred_keep.iter().map(|&i| rows_all[i]).collect();
    let features = prediction.features();

    let mut sets: BTreeMap<InstanceId, Sets> = BTreeMap::new();
    for (id, set) in scene.labels() {
        if scene.excluded().contains(id) {
            continue;
        }
        let mut clutter = Vec::new();
        for c in &set.clutter_ids {
            if let Some(cs) = scene.labels().get(c) {
                for p in positions(cs.all_labels(), prompt)? {
                    if !clutter.contains(&p) {
                        clutter.push(p);
                    }
                }
            }
        }
        sets.insert(
            *id,
            Sets {
                syn: positions(set.synonyms.iter(), prompt)?,
                dep: positions(set.depictions.iter(), prompt)?,
                vis: positions(set.visually_similar.iter(), prompt)?,
                clutter,
            },
        );
    }

    let classes: Vec<usize> = match class_list {
        Some(cl) => cl.labels().iter().filter_map(|l| prompt.labels().iter().position(|x| x == l)).collect(),
        None => Vec::new(),
    };
    let class_of = |id: &InstanceId| -> Option<usize> {
        class_list?;
        let primary = scene.labels()[id].synonyms.iter().min()?;
        let p = prompt.labels().iter().position(|x| x == primary)?;
        classes.contains(&p).then_some(p)
    };

    // per instance: category counts per N, point count
    let mut counts: BTreeMap<InstanceId, (Vec<[usize; 6]>, usize)> = BTreeMap::new();
    let mut sums = [0.0f64; 6];
    let mut ns = [0usize; 3];
    let mut score_sum = 0.0;
    let mut score_n = 0usize;
    let mut matched_points = 0usize;
    let mut tp: BTreeMap<usize, usize> = BTreeMap::new();
    let mut fp: BTreeMap<usize, usize> = BTreeMap::new();
    let mut fneg: BTreeMap<usize, usize> = BTreeMap::new();
    let mut present: BTreeSet<usize> = BTreeSet::new();

    for &gi in &gt_keep {
        let id = scene.instance_ids()[gi];
        let Some(s) = sets.get(&id) else { continue };
        let entry = counts.entry(id).or_insert_with(|| (vec![[0; 6]; n_values.len()], 0));
        entry.1 += 1;
        let gt_class = class_of(&id);
        if let Some(c) = gt_class {
            present.insert(c);
        }
        let Some(j) = nearest(&scene.points()[gi], &pred, resolution) else {
            for c in entry.0.iter_mut() {
                c[4] += 1;
            }
            if let Some(c) = gt_class {
                *fneg.entry(c).or_default() += 1;
            }
            continue;
        };
        matched_points += 1;
        let f = features.row(pred_rows[j]);
        let sims: Vec<f64> = (0..len).map(|l| cosine(f, label_matrix.row(l))).collect();
        let order = rank(&sims);
        let mut rank_of = vec![0usize; len];
        for (r, &l) in order.iter().enumerate() {
            rank_of[l] = r + 1;
        }

        for (k, &n) in n_values.iter().enumerate() {
            let top = &order[..n];
            let any = |set: &Vec<usize>| top.iter().any(|l| set.contains(l));
            let cat = if any(&s.syn) {
                0
            } else if any(&s.dep) {
                1
            } else if any(&s.vis) {
                2
            } else if any(&s.clutter) {
                3
            } else {
                5
            };
            entry.0[k][cat] += 1;
        }

        let ns_ = s.syn.len();
        let dvs: Vec<usize> = s.dep.iter().chain(&s.vis).copied().collect();
        let mut point_score = 0.0;
        let mut point_labels = 0usize;
        if ns_ > 0 {
            let (mut inl, mut right) = (0.0, 0.0);
            for &l in &s.syn {
                let (lt, rt) = score_terms(rank_of[l], 1, ns_, len);
                if lt.min(rt) == 1.0 {
                    inl += 1.0;
                }
                right += rt;
                point_score += lt.min(rt);
                point_labels += 1;
            }
            sums[1] += inl / ns_ as f64;
            sums[3] += 1.0 - right / ns_ as f64;
            ns[0] += 1;
        }
        if !dvs.is_empty() {
            let (mut inl, mut left, mut right) = (0.0, 0.0, 0.0);
            for &l in &dvs {
                let (lt, rt) = score_terms(rank_of[l], ns_ + 1, ns_ + dvs.len(), len);
                if lt.min(rt) == 1.0 {
                    inl += 1.0;
                }
                left += lt;
                right += rt;
                point_score += lt.min(rt);
                point_labels += 1;
            }
            let k = dvs.len() as f64;
            sums[2] += inl / k;
            sums[4] += 1.0 - left / k;
            sums[5] += 1.0 - right / k;
            ns[1] += 1;
        }
        if point_labels > 0 {
            score_sum += point_score / point_labels as f64;
            score_n += 1;
        }

        if let Some(g) = gt_class {
            let top1 = order.iter().copied().find(|l| classes.contains(l));
            if top1 == Some(g) {
                *tp.entry(g).or_default() += 1;
            } else {
                *fneg.entry(g).or_default() += 1;
                if let Some(p) = top1 {
                    *fp.entry(p).or_default() += 1;
                }
            }
        }
    }

    if counts.is_empty() {
        return Err(Error::NoObjects(scene.name().to_string()));
    }
    let mut frequencies = BTreeMap::new();
    for (k, &n) in n_values.iter().enumerate() {
        let mut f = CategoryFrequencies::default();
        for (c, n_o) in counts.values() {
            for cat in Category::ALL {
                *f.get_mut(cat) += c[k][cat.index()] as f64 / *n_o as f64;
            }
        }
        for cat in Category::ALL {
            *f.get_mut(cat) /= counts.len() as f64;
        }
        frequencies.insert(n, f);
    }
    let avg = |s: f64, n: usize| (n > 0).then(|| s / n as f64);
    let miou = class_list.and_then(|_| {
        let ious: Vec<f64> = present
            .iter()
            .map(|c| {
                let t = tp.get(c).copied().unwrap_or(0) as f64;
                t / (t + fp.get(c).copied().unwrap_or(0) as f64 + fneg.get(c).copied().unwrap_or(0) as f64)
            })
            .collect();
        (!ious.is_empty()).then(|| ious.iter().sum::<f64>() / ious.len() as f64)
    });
    Ok(SceneSegmentation {
        objects: counts.len(),
        points: counts.values().map(|c| c.1).sum(),
        matched_points,
        frequencies,
        set_ranking: SetRankingScores {
            mean_ranking: avg(score_sum, score_n),
            inlier_synonym: avg(sums[1], ns[0]),
            inlier_dvs: avg(sums[2], ns[1]),
            penalty_synonym_under: avg(sums[3], ns[0]),
            penalty_dvs_over: avg(sums[4], ns[1]),
            penalty_dvs_under: avg(sums[5], ns[1]),
            points: score_n,
            points_synonym: ns[0],
            points_dvs: ns[1],
        },
        miou,
    })
}

/// Interpolated AP read off the enumerated precision-recall curve.
fn ap(hits: &[bool], positives: usize) -> f64 {
    if positives == 0 {
        return 0.0;
    }
    let mut curve: Vec<(f64, f64)> = Vec::new(); // (recall, precision)
    let mut tp = 0;
    for (k, h) in hits.iter().enumerate() {
        if *h {
            tp += 1;
        }
        curve.push((tp as f64 / positives as f64, tp as f64 / (k + 1) as f64));
    }
    let mut total = 0.0;
    let mut prev_recall = 0.0;
    for k in 0..curve.len() {
        let best = curve[k..].iter().map(|c| c.1).fold(0.0, f64::max);
        total += (curve[k].0 - prev_recall) * best;
        prev_recall = curve[k].0;
    }
    total
}

fn voxel_set(points: &[Point3], res: f64) -> HashSet<[i64; 3]> {
    points.iter().map(|p| key(p, res)).collect()
}

/// `(intersection, union)` of two voxel sets.
fn overlap(a: &HashSet<[i64; 3]>, b: &HashSet<[i64; 3]>) -> (usize, usize) {
    let inter = a.intersection(b).count();
    (inter, a.len() + b.len() - inter)
}

fn reaches(o: (usize, usize), percent: u32) -> bool {
    o.1 > 0 && o.0 * 100 >= percent as usize * o.1
}

struct QueryResult {
    kind: QueryKind,
    targets: usize,
    sims: Vec<f64>,
    hits: BTreeMap<u32, Vec<bool>>,
    first: Option<usize>,
}

/// Scene retrieval metrics. `scene` must already carry its exclusions;
/// targets outside the evaluated instances are dropped along with queries
/// left without targets.
pub fn retrieval(
    scene: &GroundTruthScene,
    queries: &[RetrievalQuery],
    query_matrix: &FeatureMatrix,
    instances: &[PredictedInstance],
    resolution: f64,
    pooled: bool,
) -> Result<SceneRetrieval> {
    too_big("points", scene.len(), MAX_POINTS)?;
    too_big("instances", instances.len(), MAX_INSTANCES)?;
    let thresholds: Vec<u32> = std::iter::once(25).chain((50..=95).step_by(5)).collect();
    let inst_voxels: Vec<HashSet<[i64; 3]>> = instances.iter().map(|i| voxel_set(&i.points, resolution)).collect();

    let mut results = Vec::new();
    for (qi, q) in queries.iter().enumerate() {
        let targets: Vec<InstanceId> = q
            .targets
            .iter()
            .copied()
            .filter(|t| scene.labels().contains_key(t) && !scene.excluded().contains(t))
            .collect();
        if targets.is_empty() {
            continue;
        }
        let target_voxels: Vec<HashSet<[i64; 3]>> = targets
            .iter()
            .map(|t| {
                let pts: Vec<Point3> = scene
                    .points()
                    .iter()
                    .zip(scene.instance_ids())
                    .filter(|(_, id)| *id == t)
                    .map(|(p, _)| *p)
                    .collect();
                voxel_set(&pts, resolution)
            })
            .collect();
        let qrow = query_matrix.row(qi);
        let sims: Vec<f64> = instances.iter().map(|i| cosine(qrow, &i.feature)).collect();
        let order = rank(&sims);

        let first = order
            .iter()
            .position(|&p| target_voxels.iter().any(|t| reaches(overlap(&inst_voxels[p], t), 25)))
            .map(|r| r + 1);
        let mut hits = BTreeMap::new();
        for &th in &thresholds {
            let mut taken = vec![false; targets.len()];
            let mut h = Vec::new();
            for &p in &order {
                let mut best: Option<(usize, (usize, usize))> = None;
                for (k, tv) in target_voxels.iter().enumerate() {
                    let o = overlap(&inst_voxels[p], tv);
                    if taken[k] || !reaches(o, th) {
                        continue;
                    }
                    // strictly larger IoU, compared as fractions
                    if best.is_none_or(|(_, b)| o.0 * b.1 > b.0 * o.1) {
                        best = Some((k, o));
                    }
                }
                if let Some((k, _)) = best {
                    taken[k] = true;
                }
                h.push(best.is_some());
            }
            hits.insert(th, h);
        }
        results.push(QueryResult {
            kind: q.kind,
            targets: targets.len(),
            sims: order.iter().map(|&p| sims[p]).collect(),
            hits,
            first,
        });
    }
    if results.is_empty() {
        return Err(Error::NoQueries);
    }

    let summarize = |part: &[&QueryResult]| -> Option<ApSummary> {
        if part.is_empty() {
            return None;
        }
        let mut by = BTreeMap::new();
        for &th in &thresholds {
            let v = if pooled {
                let mut all: Vec<(f64, usize, usize, bool)> = Vec::new();
                for (qi, r) in part.iter().enumerate() {
                    for (k, &h) in r.hits[&th].iter().enumerate() {
                        all.push((r.sims[k], qi, k, h));
                    }
                }
                all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
                let hits: Vec<bool> = all.iter().map(|d| d.3).collect();
                ap(&hits, part.iter().map(|r| r.targets).sum())
            } else {
                part.iter().map(|r| ap(&r.hits[&th], r.targets)).sum::<f64>() / part.len() as f64
            };
            by.insert(th, v);
        }
        Some(ApSummary::from_thresholds(by, part.len()))
    };
    let all: Vec<&QueryResult> = results.iter().collect();
    let mut by_kind = BTreeMap::new();
    for kind in [QueryKind::Synonym, QueryKind::SynonymDepiction] {
        let part: Vec<&QueryResult> = results.iter().filter(|r| r.kind == kind).collect();
        by_kind.insert(kind.as_str().to_string(), summarize(&part));
    }
    let mut hist = RankHistogram::default();
    for r in &results {
        match r.first {
            Some(k) if k <= 9 => hist.ranks[k - 1] += 1,
            Some(_) => hist.ten_plus += 1,
            None => hist.no_match += 1,
        }
    }
    Ok(SceneRetrieval {
        queries: results.len(),
        instances: instances.len(),
        overall: summarize(&all),
        by_kind,
        rank_histogram: hist,
    })
}

/// Ranked top-N of one feature against a label matrix.
pub fn top_n(feature: &[f32], label_matrix: &FeatureMatrix, n: usize) -> Vec<usize> {
    let sims: Vec<f64> = (0..label_matrix.rows()).map(|l| cosine(feature, label_matrix.row(l))).collect();
    rank(&sims).into_iter().take(n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_is_stable() {
        assert_eq!(rank(&[0.1, 0.5, 0.5, 0.9]), vec![3, 1, 2, 0]);
    }

    #[test]
    fn ap_curve() {
        assert_eq!(ap(&[true, true], 2), 1.0);
        assert!((ap(&[false, true, true], 2) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(ap(&[false], 1), 0.0);
    }

    #[test]
    fn downsample_keeps_one_per_voxel() {
        let pts = vec![[0.01, 0.01, 0.01], [0.02, 0.02, 0.02], [0.03, 0.03, 0.03], [0.07, 0.0, 0.0]];
        assert_eq!(downsample(&pts, 0.05), vec![1, 3]);
    }
}
