//! Report types for both evaluation tracks, with flat metric views for CSV.
//!
//! Undefined metrics (for instance an inlier rate when no point has any
//! depiction or visually-similar label) are `None` and serialize as `null`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::seg::Category;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryFrequencies {
    pub synonym: f64,
    pub depiction: f64,
    pub visually_similar: f64,
    pub clutter: f64,
    pub missing: f64,
    pub incorrect: f64,
}

impl CategoryFrequencies {
    pub fn get(&self, c: Category) -> f64 {
        match c {
            Category::Synonym => self.synonym,
            Category::Depiction => self.depiction,
            Category::VisuallySimilar => self.visually_similar,
            Category::Clutter => self.clutter,
            Category::Missing => self.missing,
            Category::Incorrect => self.incorrect,
        }
    }

    pub fn get_mut(&mut self, c: Category) -> &mut f64 {
        match c {
            Category::Synonym => &mut self.synonym,
            Category::Depiction => &mut self.depiction,
            Category::VisuallySimilar => &mut self.visually_similar,
            Category::Clutter => &mut self.clutter,
            Category::Missing => &mut self.missing,
            Category::Incorrect => &mut self.incorrect,
        }
    }

    pub fn sum(&self) -> f64 {
        Category::ALL.iter().map(|c| self.get(*c)).sum()
    }
}

/// Set-ranking scores and penalties with the number of points behind each.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SetRankingScores {
    #[serde(rename = "mR")]
    pub mean_ranking: Option<f64>,
    #[serde(rename = "R_S")]
    pub inlier_synonym: Option<f64>,
    #[serde(rename = "R_DVS")]
    pub inlier_dvs: Option<f64>,
    #[serde(rename = "P_S_under")]
    pub penalty_synonym_under: Option<f64>,
    #[serde(rename = "P_DVS_over")]
    pub penalty_dvs_over: Option<f64>,
    #[serde(rename = "P_DVS_under")]
    pub penalty_dvs_under: Option<f64>,
    /// Matched points with at least one synonym or DVS label.
    pub points: usize,
    pub points_synonym: usize,
    pub points_dvs: usize,
}

impl SetRankingScores {
    pub fn named(&self) -> [(&'static str, Option<f64>); 6] {
        [
            ("mR", self.mean_ranking),
            ("R_S", self.inlier_synonym),
            ("R_DVS", self.inlier_dvs),
            ("P_S_under", self.penalty_synonym_under),
            ("P_DVS_over", self.penalty_dvs_over),
            ("P_DVS_under", self.penalty_dvs_under),
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneSegmentation {
    pub objects: usize,
    /// Evaluated ground-truth points.
    pub points: usize,
    pub matched_points: usize,
    /// Keyed by N.
    pub frequencies: BTreeMap<usize, CategoryFrequencies>,
    pub set_ranking: SetRankingScores,
    pub miou: Option<f64>,
}

impl SceneSegmentation {
    /// Flat `(metric, value)` view in a fixed order.
    pub fn metrics(&self) -> Vec<(String, Option<f64>)> {
        let mut out = Vec::new();
        for (n, f) in &self.frequencies {
            for c in Category::ALL {
                out.push((format!("freq_top{n}_{}", c.name()), Some(f.get(c))));
            }
        }
        for (name, v) in self.set_ranking.named() {
            out.push((name.to_string(), v));
        }
        out.push(("mIoU".into(), self.miou));
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentationReport {
    pub schema_version: u32,
    pub n_values: Vec<usize>,
    pub scenes: BTreeMap<String, SceneSegmentation>,
    /// Unweighted mean over scenes.
    pub dataset: SceneSegmentation,
    /// Frequencies weighted by object count, set-ranking scores by point count.
    pub dataset_pooled: SceneSegmentation,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values.flatten() {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn weighted_defined(values: impl Iterator<Item = (Option<f64>, usize)>) -> Option<f64> {
    let (mut sum, mut w) = (0.0, 0usize);
    for (v, n) in values {
        if let Some(v) = v {
            sum += v * n as f64;
            w += n;
        }
    }
    (w > 0).then(|| sum / w as f64)
}

impl SegmentationReport {
    pub fn from_scenes(n_values: Vec<usize>, scenes: BTreeMap<String, SceneSegmentation>) -> Self {
        let count = scenes.len();
        let mut dataset = SceneSegmentation::default();
        let mut pooled = SceneSegmentation::default();
        for s in scenes.values() {
            for t in [&mut dataset, &mut pooled] {
                t.objects += s.objects;
                t.points += s.points;
                t.matched_points += s.matched_points;
                t.set_ranking.points += s.set_ranking.points;
                t.set_ranking.points_synonym += s.set_ranking.points_synonym;
                t.set_ranking.points_dvs += s.set_ranking.points_dvs;
            }
        }
        for &n in &n_values {
            let mut mean = CategoryFrequencies::default();
            let mut weighted = CategoryFrequencies::default();
            for c in Category::ALL {
                let vals = scenes.values().filter_map(|s| s.frequencies.get(&n).map(|f| (f.get(c), s.objects)));
                let (mut sum, mut wsum, mut k) = (0.0, 0.0, 0usize);
                for (v, objects) in vals {
                    sum += v;
                    wsum += v * objects as f64;
                    k += 1;
                }
                if k > 0 {
                    *mean.get_mut(c) = sum / k as f64;
                    if pooled.objects > 0 {
                        *weighted.get_mut(c) = wsum / pooled.objects as f64;
                    }
                }
            }
            if count > 0 {
                dataset.frequencies.insert(n, mean);
                pooled.frequencies.insert(n, weighted);
            }
        }
        let sr = |f: fn(&SetRankingScores) -> Option<f64>| mean_defined(scenes.values().map(|s| f(&s.set_ranking)));
        dataset.set_ranking.mean_ranking = sr(|s| s.mean_ranking);
        dataset.set_ranking.inlier_synonym = sr(|s| s.inlier_synonym);
        dataset.set_ranking.inlier_dvs = sr(|s| s.inlier_dvs);
        dataset.set_ranking.penalty_synonym_under = sr(|s| s.penalty_synonym_under);
        dataset.set_ranking.penalty_dvs_over = sr(|s| s.penalty_dvs_over);
        dataset.set_ranking.penalty_dvs_under = sr(|s| s.penalty_dvs_under);
        dataset.miou = mean_defined(scenes.values().map(|s| s.miou));

        let pw = |f: fn(&SetRankingScores) -> (Option<f64>, usize)| {
            weighted_defined(scenes.values().map(|s| f(&s.set_ranking)))
        };
        pooled.set_ranking.mean_ranking = pw(|s| (s.mean_ranking, s.points));
        pooled.set_ranking.inlier_synonym = pw(|s| (s.inlier_synonym, s.points_synonym));
        pooled.set_ranking.inlier_dvs = pw(|s| (s.inlier_dvs, s.points_dvs));
        pooled.set_ranking.penalty_synonym_under = pw(|s| (s.penalty_synonym_under, s.points_synonym));
        pooled.set_ranking.penalty_dvs_over = pw(|s| (s.penalty_dvs_over, s.points_dvs));
        pooled.set_ranking.penalty_dvs_under = pw(|s| (s.penalty_dvs_under, s.points_dvs));
        // per-class counts are not carried at dataset level
        pooled.miou = None;

        SegmentationReport {
            schema_version: REPORT_SCHEMA_VERSION,
            n_values,
            scenes,
            dataset,
            dataset_pooled: pooled,
        }
    }

    /// `(scene, metric, value)` rows; the two dataset aggregates come last
    /// under the scene names `dataset` and `dataset_pooled`.
    pub fn rows(&self) -> Vec<(String, String, Option<f64>)> {
        let mut rows = Vec::new();
        let all = self
            .scenes
            .iter()
            .map(|(k, v)| (k.as_str(), v))
            .chain([("dataset", &self.dataset), ("dataset_pooled", &self.dataset_pooled)]);
        for (scene, s) in all {
            for (m, v) in s.metrics() {
                rows.push((scene.to_string(), m, v));
            }
        }
        rows
    }
}

/// IoU thresholds in percent: 50, 55, ..., 95.
pub const MAP_THRESHOLDS: [u32; 10] = [50, 55, 60, 65, 70, 75, 80, 85, 90, 95];
pub const AP25_THRESHOLD: u32 = 25;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ApSummary {
    #[serde(rename = "mAP")]
    pub map: f64,
    #[serde(rename = "AP50")]
    pub ap50: f64,
    #[serde(rename = "AP25")]
    pub ap25: f64,
    /// AP per IoU threshold in percent (25 and 50..=95).
    pub ap_by_iou: BTreeMap<u32, f64>,
    pub queries: usize,
}

impl ApSummary {
    /// Builds a summary from AP values per threshold.
    pub fn from_thresholds(ap_by_iou: BTreeMap<u32, f64>, queries: usize) -> Self {
        let map = MAP_THRESHOLDS.iter().map(|t| ap_by_iou[t]).sum::<f64>() / MAP_THRESHOLDS.len() as f64;
        ApSummary {
            map,
            ap50: ap_by_iou[&50],
            ap25: ap_by_iou[&AP25_THRESHOLD],
            ap_by_iou,
            queries,
        }
    }

    pub fn mean(items: &[&ApSummary]) -> Option<ApSummary> {
        if items.is_empty() {
            return None;
        }
        let mut by: BTreeMap<u32, f64> = BTreeMap::new();
        for s in items {
            for (t, v) in &s.ap_by_iou {
                *by.entry(*t).or_default() += v;
            }
        }
        by.values_mut().for_each(|v| *v /= items.len() as f64);
        let queries = items.iter().map(|s| s.queries).sum();
        Some(ApSummary::from_thresholds(by, queries))
    }
}

/// Similarity rank of the first overlapping prediction per query.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankHistogram {
    /// Counts for ranks 1 through 9.
    pub ranks: [usize; 9],
    #[serde(rename = "10+")]
    pub ten_plus: usize,
    pub no_match: usize,
}

impl RankHistogram {
    pub fn record(&mut self, rank: Option<usize>) {
        match rank {
            Some(r @ 1..=9) => self.ranks[r - 1] += 1,
            Some(_) => self.ten_plus += 1,
            None => self.no_match += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.ranks.iter().sum::<usize>() + self.ten_plus + self.no_match
    }

    pub fn add(&mut self, other: &RankHistogram) {
        for (a, b) in self.ranks.iter_mut().zip(other.ranks) {
            *a += b;
        }
        self.ten_plus += other.ten_plus;
        self.no_match += other.no_match;
    }
}

pub const KIND_S: &str = "S";
pub const KIND_S_PLUS_D: &str = "S+D";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneRetrieval {
    pub queries: usize,
    pub instances: usize,
    pub overall: Option<ApSummary>,
    /// Keyed by query kind, `S` or `S+D`; `None` when a scene has no query of
    /// that kind.
    pub by_kind: BTreeMap<String, Option<ApSummary>>,
    pub rank_histogram: RankHistogram,
}

impl SceneRetrieval {
    pub fn metrics(&self) -> Vec<(String, Option<f64>)> {
        let mut out = Vec::new();
        let mut push = |prefix: &str, s: Option<&ApSummary>| {
            out.push((format!("{prefix}mAP"), s.map(|s| s.map)));
            out.push((format!("{prefix}AP50"), s.map(|s| s.ap50)));
            out.push((format!("{prefix}AP25"), s.map(|s| s.ap25)));
        };
        push("", self.overall.as_ref());
        for kind in [KIND_S, KIND_S_PLUS_D] {
            push(&format!("{kind}_"), self.by_kind.get(kind).and_then(|s| s.as_ref()));
        }
        for (i, c) in self.rank_histogram.ranks.iter().enumerate() {
            out.push((format!("rank_{}", i + 1), Some(*c as f64)));
        }
        out.push(("rank_10+".into(), Some(self.rank_histogram.ten_plus as f64)));
        out.push(("rank_no_match".into(), Some(self.rank_histogram.no_match as f64)));
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub schema_version: u32,
    pub pooled: bool,
    pub scenes: BTreeMap<String, SceneRetrieval>,
    /// Unweighted mean over scenes; histogram counts are summed.
    pub dataset: SceneRetrieval,
}

impl RetrievalReport {
    pub fn from_scenes(pooled: bool, scenes: BTreeMap<String, SceneRetrieval>) -> Self {
        let mut dataset = SceneRetrieval::default();
        for s in scenes.values() {
            dataset.queries += s.queries;
            dataset.instances += s.instances;
            dataset.rank_histogram.add(&s.rank_histogram);
        }
        let overall: Vec<&ApSummary> = scenes.values().filter_map(|s| s.overall.as_ref()).collect();
        dataset.overall = ApSummary::mean(&overall);
        for kind in [KIND_S, KIND_S_PLUS_D] {
            let per: Vec<&ApSummary> = scenes
                .values()
                .filter_map(|s| s.by_kind.get(kind).and_then(|v| v.as_ref()))
                .collect();
            dataset.by_kind.insert(kind.to_string(), ApSummary::mean(&per));
        }
        RetrievalReport {
            schema_version: REPORT_SCHEMA_VERSION,
            pooled,
            scenes,
            dataset,
        }
    }

    pub fn rows(&self) -> Vec<(String, String, Option<f64>)> {
        let mut rows = Vec::new();
        let all = self
            .scenes
            .iter()
            .map(|(k, v)| (k.as_str(), v))
            .chain([("dataset", &self.dataset)]);
        for (scene, s) in all {
            for (m, v) in s.metrics() {
                rows.push((scene.to_string(), m, v));
            }
        }
        rows
    }
}
