//! Metric entry points over precomputed rankings, one per predicted point.

use crate::error::{Error, Result};
use crate::geometry::PointMatching;
use crate::prompt::PromptList;
use crate::report::{CategoryFrequencies, SceneSegmentation, SetRankingScores};
use crate::scene::GroundTruthScene;
use crate::similarity::RankedLabelList;

use super::engine::{check_n_values, closed_classes};
use super::{aggregate_scene, evaluate_point, scene_label_sets, ClosedSet, PointResult};

fn materialized(
    scene: &GroundTruthScene,
    matching: &PointMatching,
    rankings: &[RankedLabelList],
    prompt: &PromptList,
    n_values: &[usize],
    class_list: Option<&PromptList>,
) -> Result<SceneSegmentation> {
    if matching.len() != scene.len() {
        return Err(Error::Scene(format!(
            "matching covers {} points, scene has {}",
            matching.len(),
            scene.len()
        )));
    }
    if let Some(r) = rankings.iter().find(|r| r.len() != prompt.len()) {
        return Err(Error::DimensionMismatch {
            expected: prompt.len(),
            found: r.len(),
        });
    }
    check_n_values(n_values, prompt.len())?;
    let sets = scene_label_sets(scene, prompt)?;
    let closed = class_list.map(|cl| {
        let idx: Vec<u32> = cl.labels().iter().filter_map(|l| prompt.position(l)).collect();
        ClosedSet::new(&idx, prompt.len())
    });
    let class_of = closed.as_ref().map(|c| closed_classes(scene, prompt, c));
    let results = matching
        .matched
        .iter()
        .zip(scene.instance_ids())
        .map(|(m, id)| {
            if !scene.is_evaluated(*id) {
                return Ok(PointResult::Excluded);
            }
            let Some(p) = m else {
                return Ok(PointResult::Missing);
            };
            let ranking = rankings
                .get(*p as usize)
                .ok_or_else(|| Error::Scene(format!("no ranking for predicted point {p}")))?;
            Ok(PointResult::Matched(evaluate_point(ranking, &sets[id], n_values, closed.as_ref())))
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate_scene(scene, &results, n_values, class_of.as_ref())
}

/// Fraction of each category among the top-`n` labels, averaged per object.
pub fn top_n_frequency(
    scene: &GroundTruthScene,
    matching: &PointMatching,
    rankings: &[RankedLabelList],
    prompt: &PromptList,
    n: usize,
) -> Result<CategoryFrequencies> {
    let s = materialized(scene, matching, rankings, prompt, &[n], None)?;
    Ok(s.frequencies[&n])
}

pub fn set_ranking(
    scene: &GroundTruthScene,
    matching: &PointMatching,
    rankings: &[RankedLabelList],
    prompt: &PromptList,
) -> Result<SetRankingScores> {
    Ok(materialized(scene, matching, rankings, prompt, &[1], None)?.set_ranking)
}

/// Closed-set mIoU. Each instance's class is its lexicographically smallest
/// synonym; predictions are restricted to `class_list` before taking the
/// top-1 label. Averaged over classes present in the ground truth.
pub fn compute_miou(
    scene: &GroundTruthScene,
    matching: &PointMatching,
    rankings: &[RankedLabelList],
    prompt: &PromptList,
    class_list: &PromptList,
) -> Result<Option<f64>> {
    Ok(materialized(scene, matching, rankings, prompt, &[1], Some(class_list))?.miou)
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, BTreeSet};

    use super::*;
    use crate::labels::CategoryLabelSet;
    use crate::scene::InstanceId;

    fn ranking(order: &[u32]) -> RankedLabelList {
        let n = order.len();
        let mut sims = vec![0.0; n];
        for (pos, &l) in order.iter().enumerate() {
            sims[l as usize] = 1.0 - pos as f64 / n as f64;
        }
        RankedLabelList::from_similarities(&sims)
    }

    fn set(syn: &[&str], dep: &[&str], vis: &[&str]) -> CategoryLabelSet {
        let f = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        CategoryLabelSet {
            synonyms: f(syn),
            depictions: f(dep),
            visually_similar: f(vis),
            ..Default::default()
        }
    }

    fn prompt(labels: &[&str]) -> PromptList {
        PromptList::new(labels.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn scene(parts: &[(u32, usize)], labels: Vec<(u32, CategoryLabelSet)>) -> GroundTruthScene {
        let mut ids = Vec::new();
        for &(id, n) in parts {
            ids.extend(std::iter::repeat(InstanceId(id)).take(n));
        }
        let points = (0..ids.len()).map(|i| [i as f64, 0.0, 0.0]).collect();
        let labels: BTreeMap<_, _> = labels.into_iter().map(|(k, v)| (InstanceId(k), v)).collect();
        GroundTruthScene::new("s", points, ids, labels, BTreeSet::new()).unwrap()
    }

    fn matching(m: Vec<Option<u32>>) -> PointMatching {
        PointMatching {
            matched: m,
            max_distance: 0.05,
        }
    }

    #[test]
    fn four_point_object() {
        // labels: 0 cup, 1 picture of cup, 2 bowl, 3 table
        let p = prompt(&["cup", "picture of cup", "bowl", "table"]);
        let s = scene(&[(0, 4)], vec![(0, set(&["cup"], &["picture of cup"], &["bowl"]))]);
        let r = vec![ranking(&[0, 1, 2, 3]), ranking(&[2, 3, 0, 1])];
        let m = matching(vec![Some(0), Some(0), Some(1), None]);
        let f = top_n_frequency(&s, &m, &r, &p, 1).unwrap();
        assert_eq!((f.synonym, f.visually_similar, f.missing), (0.5, 0.25, 0.25));
        assert_eq!(f.sum(), 1.0);
    }

    #[test]
    fn objects_weigh_equally() {
        let p = prompt(&["cup", "chair", "lamp"]);
        let s = scene(
            &[(0, 10), (1, 1000)],
            vec![(0, set(&["cup"], &[], &[])), (1, set(&["chair"], &[], &[]))],
        );
        let r = vec![ranking(&[0, 1, 2]), ranking(&[2, 0, 1])];
        let m = matching((0..1010).map(|i| Some(if i < 10 { 0 } else { 1 })).collect());
        let f = top_n_frequency(&s, &m, &r, &p, 1).unwrap();
        assert_eq!((f.synonym, f.incorrect), (0.5, 0.5));
    }

    #[test]
    fn clutter_from_neighbour_labels() {
        let p = prompt(&["cup", "table"]);
        let mut cup = set(&["cup"], &[], &[]);
        cup.clutter_ids.insert(InstanceId(1));
        let s = scene(&[(0, 1), (1, 1)], vec![(0, cup), (1, set(&["table"], &[], &[]))]);
        let r = vec![ranking(&[1, 0])];
        let f = top_n_frequency(&s, &matching(vec![Some(0), Some(0)]), &r, &p, 1).unwrap();
        assert_eq!((f.clutter, f.synonym), (0.5, 0.5));
    }

    #[test]
    fn n_out_of_range() {
        let p = prompt(&["cup"]);
        let s = scene(&[(0, 1)], vec![(0, set(&["cup"], &[], &[]))]);
        let e = top_n_frequency(&s, &matching(vec![None]), &[], &p, 2).unwrap_err();
        assert!(matches!(e, Error::TopNOutOfRange { n: 2, len: 1 }));
    }

    #[test]
    fn no_objects() {
        let p = prompt(&["cup"]);
        let s = scene(&[(0, 1)], vec![(0, set(&["cup"], &[], &[]))]).exclude([InstanceId(0)]);
        let e = top_n_frequency(&s, &matching(vec![None]), &[], &p, 1).unwrap_err();
        assert!(matches!(e, Error::NoObjects(_)));
    }

    #[test]
    fn miou_three_quarters() {
        // chair perfect; one of two table points predicted as lamp, a class
        // with no ground-truth points, so table IoU is 1/2
        let p = prompt(&["chair", "table", "lamp"]);
        let s = scene(
            &[(0, 2), (1, 2)],
            vec![(0, set(&["chair"], &[], &[])), (1, set(&["table"], &[], &[]))],
        );
        let r = vec![ranking(&[0, 1, 2]), ranking(&[1, 0, 2]), ranking(&[2, 1, 0])];
        let m = matching(vec![Some(0), Some(0), Some(1), Some(1)]);
        assert_eq!(compute_miou(&s, &m, &r, &p, &p).unwrap(), Some(1.0));
        let m = matching(vec![Some(0), Some(0), Some(1), Some(2)]);
        assert_eq!(compute_miou(&s, &m, &r, &p, &p).unwrap(), Some(0.75));
        // everything predicted as lamp
        let m = matching(vec![Some(2); 4]);
        assert_eq!(compute_miou(&s, &m, &r, &p, &p).unwrap(), Some(0.0));
    }

    #[test]
    fn miou_with_false_positive() {
        // class A: 4 points, 3 correct; class B: 4 points, all correct, and
        // the wrong A point labelled B gives B an fp. A = 3/4, B = 4/5.
        // Restricting to A alone via the class list yields 3/4 exactly.
        let p = prompt(&["a", "b"]);
        let s = scene(&[(0, 4), (1, 4)], vec![(0, set(&["a"], &[], &[])), (1, set(&["b"], &[], &[]))]);
        let r = vec![ranking(&[0, 1]), ranking(&[1, 0])];
        let m = matching(vec![Some(0), Some(0), Some(0), Some(1), Some(1), Some(1), Some(1), Some(1)]);
        let v = compute_miou(&s, &m, &r, &p, &prompt(&["a"])).unwrap().unwrap();
        // with only class a in the list, the top-1 over {a} is always a
        assert_eq!(v, 1.0);
        let v = compute_miou(&s, &m, &r, &p, &p).unwrap().unwrap();
        assert!((v - (0.75 + 0.8) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn set_ranking_scores() {
        let p = prompt(&["cup", "mug", "picture of cup", "table"]);
        let s = scene(&[(0, 2)], vec![(0, set(&["cup", "mug"], &["picture of cup"], &[]))]);
        let r = vec![ranking(&[0, 1, 2, 3]), ranking(&[2, 0, 1, 3])];
        let sr = set_ranking(&s, &matching(vec![Some(0), Some(1)]), &r, &p).unwrap();
        assert_eq!(sr.inlier_synonym, Some(0.75));
        assert_eq!(sr.inlier_dvs, Some(0.5));
        assert_eq!(sr.points, 2);
        // second point: syn at ranks 2,3 (right bound 2, len 4): under terms 0, 0.5
        assert!((sr.penalty_synonym_under.unwrap() - 0.125).abs() < 1e-15);
        // dvs at rank 1 with left bound 3
        assert!((sr.penalty_dvs_over.unwrap() - (2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(sr.penalty_dvs_under, Some(0.0));
    }

    #[test]
    fn no_dvs_labels_gives_null() {
        let p = prompt(&["cup", "table"]);
        let s = scene(&[(0, 1)], vec![(0, set(&["cup"], &[], &[]))]);
        let sr = set_ranking(&s, &matching(vec![Some(0)]), &[ranking(&[0, 1])], &p).unwrap();
        assert_eq!(sr.inlier_dvs, None);
        assert_eq!(sr.penalty_dvs_over, None);
        assert_eq!(sr.inlier_synonym, Some(1.0));
    }
}
