use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::scene::GroundTruthScene;

/// Per-scene label summary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub objects: usize,
    pub unique_labels: usize,
    /// Mean labels per object, rounded to the nearest integer.
    pub avg_labels: u64,
    pub mean_labels: f64,
    pub max_labels: usize,
    pub ambiguous: usize,
}

/// Counts over every labeled instance of the scene. Labels per object count
/// the three text categories; clutter references are not labels.
pub fn label_stats(scene: &GroundTruthScene) -> LabelStats {
    let labels = scene.labels();
    if labels.is_empty() {
        return LabelStats::default();
    }
    let unique: BTreeSet<&String> = labels.values().flat_map(|s| s.all_labels()).collect();
    let total: usize = labels.values().map(|s| s.label_count()).sum();
    let mean = total as f64 / labels.len() as f64;
    LabelStats {
        objects: labels.len(),
        unique_labels: unique.len(),
        avg_labels: mean.round() as u64,
        mean_labels: mean,
        max_labels: labels.values().map(|s| s.label_count()).max().unwrap_or(0),
        ambiguous: labels.values().filter(|s| s.ambiguous).count(),
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::labels::CategoryLabelSet;
    use crate::scene::InstanceId;

    #[test]
    fn empty_scene_is_zero() {
        let s = GroundTruthScene::new("s", vec![], vec![], BTreeMap::new(), BTreeSet::new()).unwrap();
        assert_eq!(label_stats(&s), LabelStats::default());
    }

    #[test]
    fn two_four_six() {
        let labels: BTreeMap<_, _> = [2usize, 4, 6]
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                let set = CategoryLabelSet {
                    synonyms: (0..n).map(|j| format!("o{k} l{j}")).collect(),
                    ambiguous: k == 1,
                    ..Default::default()
                };
                (InstanceId(k as u32), set)
            })
            .collect();
        let s = GroundTruthScene::new("s", vec![], vec![], labels, BTreeSet::new()).unwrap();
        let st = label_stats(&s);
        assert_eq!(st.objects, 3);
        assert_eq!(st.unique_labels, 12);
        assert_eq!(st.avg_labels, 4);
        assert_eq!(st.max_labels, 6);
        assert_eq!(st.ambiguous, 1);
    }
}
