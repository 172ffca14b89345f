use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::report::{CategoryFrequencies, SceneSegmentation, SetRankingScores};
use crate::scene::{GroundTruthScene, InstanceId};

use super::{Category, PointOutcome};

/// Per ground-truth point evaluation result.
#[derive(Debug, Clone, PartialEq)]
pub enum PointResult {
    /// Point of an excluded instance; skipped entirely.
    Excluded,
    /// No predicted point within the matching distance.
    Missing,
    Matched(PointOutcome),
}

#[derive(Default)]
struct Mean {
    sum: f64,
    n: usize,
}

impl Mean {
    fn add(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn get(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

#[derive(Default, Clone, Copy)]
struct ClassCounts {
    tp: usize,
    fp: usize,
    fn_: usize,
    present: bool,
}

/// Folds per-point results into scene metrics.
///
/// `results` is parallel to the scene's points. `class_of` maps instances to
/// the prompt index of their closed-set class; when given, mIoU is computed
/// over points of those instances only.
pub fn aggregate_scene(
    scene: &GroundTruthScene,
    results: &[PointResult],
    n_values: &[usize],
    class_of: Option<&BTreeMap<InstanceId, u32>>,
) -> Result<SceneSegmentation> {
    if results.len() != scene.len() {
        return Err(Error::Scene(format!(
            "{} point results for a scene of {} points",
            results.len(),
            scene.len()
        )));
    }
    let instances = scene.evaluated_instances();
    if instances.is_empty() {
        return Err(Error::NoObjects(scene.name().to_string()));
    }

    let mut freq = vec![CategoryFrequencies::default(); n_values.len()];
    let mut points = 0usize;
    let mut matched = 0usize;
    for idx in instances.values() {
        let mut counts = vec![[0usize; 6]; n_values.len()];
        for &i in idx {
            points += 1;
            match &results[i] {
                PointResult::Excluded => {
                    return Err(Error::Scene(format!("point {i} of an evaluated instance marked excluded")))
                }
                PointResult::Missing => {
                    counts.iter_mut().for_each(|c| c[Category::Missing.index()] += 1);
                }
                PointResult::Matched(o) => {
                    matched += 1;
                    for (c, cat) in counts.iter_mut().zip(&o.categories) {
                        c[cat.index()] += 1;
                    }
                }
            }
        }
        let n_o = idx.len() as f64;
        for (f, c) in freq.iter_mut().zip(&counts) {
            for cat in Category::ALL {
                *f.get_mut(cat) += c[cat.index()] as f64 / n_o;
            }
        }
    }
    let n_objects = instances.len() as f64;
    for f in freq.iter_mut() {
        for cat in Category::ALL {
            *f.get_mut(cat) /= n_objects;
        }
    }

    let (mut mr, mut rs, mut rdvs) = (Mean::default(), Mean::default(), Mean::default());
    let (mut ps_under, mut pd_over, mut pd_under) = (Mean::default(), Mean::default(), Mean::default());
    let mut classes: BTreeMap<u32, ClassCounts> = BTreeMap::new();
    for (i, r) in results.iter().enumerate() {
        let id = scene.instance_ids()[i];
        if !scene.is_evaluated(id) {
            continue;
        }
        let gt_class = class_of.and_then(|m| m.get(&id).copied());
        if let Some(g) = gt_class {
            classes.entry(g).or_default().present = true;
        }
        let PointResult::Matched(o) = r else {
            if let Some(g) = gt_class {
                classes.entry(g).or_default().fn_ += 1;
            }
            continue;
        };
        let t = &o.set_terms;
        if let Some(m) = t.mean_score() {
            mr.add(m);
        }
        if let Some(s) = t.synonym {
            rs.add(s.inlier_rate);
            ps_under.add(1.0 - s.right_mean);
        }
        if let Some(d) = t.dvs {
            rdvs.add(d.inlier_rate);
            pd_over.add(1.0 - d.left_mean);
            pd_under.add(1.0 - d.right_mean);
        }
        if let Some(g) = gt_class {
            match o.closed_top1 {
                Some(p) if p == g => classes.entry(g).or_default().tp += 1,
                p => {
                    classes.entry(g).or_default().fn_ += 1;
                    if let Some(p) = p {
                        classes.entry(p).or_default().fp += 1;
                    }
                }
            }
        }
    }

    let miou = class_of.and_then(|_| {
        let mut m = Mean::default();
        for c in classes.values().filter(|c| c.present) {
            m.add(c.tp as f64 / (c.tp + c.fp + c.fn_) as f64);
        }
        m.get()
    });

    Ok(SceneSegmentation {
        objects: instances.len(),
        points,
        matched_points: matched,
        frequencies: n_values.iter().copied().zip(freq).collect(),
        set_ranking: SetRankingScores {
            mean_ranking: mr.get(),
            inlier_synonym: rs.get(),
            inlier_dvs: rdvs.get(),
            penalty_synonym_under: ps_under.get(),
            penalty_dvs_over: pd_over.get(),
            penalty_dvs_under: pd_under.get(),
            points: mr.n,
            points_synonym: rs.n,
            points_dvs: rdvs.n,
        },
        miou,
    })
}
