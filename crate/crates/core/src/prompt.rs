use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::scene::GroundTruthScene;

/// Ordered list of unique labels that features are ranked against.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptList {
    labels: Vec<String>,
    index: HashMap<String, u32>,
}

impl PromptList {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() {
                return Err(Error::Config(format!("prompt label {i} is empty")));
            }
            if index.insert(l.clone(), i as u32).is_some() {
                return Err(Error::Config(format!("duplicate prompt label {l:?}")));
            }
        }
        Ok(PromptList { labels, index })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn position(&self, label: &str) -> Option<u32> {
        self.index.get(label).copied()
    }

    pub fn label(&self, i: u32) -> &str {
        &self.labels[i as usize]
    }
}

/// Union of all text labels, in first-appearance order over scenes, then
/// instances (ascending id), then categories, then lexicographic order.
pub fn build_prompt_list(scenes: &[GroundTruthScene]) -> Result<PromptList> {
    let mut seen = HashMap::new();
    let mut labels = Vec::new();
    for scene in scenes {
        for set in scene.labels().values() {
            for l in set.all_labels() {
                if !seen.contains_key(l) {
                    seen.insert(l.clone(), labels.len() as u32);
                    labels.push(l.clone());
                }
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyPromptList);
    }
    Ok(PromptList { labels, index: seen })
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, BTreeSet};

    use super::*;
    use crate::labels::CategoryLabelSet;
    use crate::scene::InstanceId;

    fn scene(sets: Vec<CategoryLabelSet>) -> GroundTruthScene {
        let labels: BTreeMap<_, _> = sets
            .into_iter()
            .enumerate()
            .map(|(i, s)| (InstanceId(i as u32), s))
            .collect();
        GroundTruthScene::new("s", vec![], vec![], labels, BTreeSet::new()).unwrap()
    }

    fn set(syn: &[&str], vis: &[&str]) -> CategoryLabelSet {
        CategoryLabelSet {
            synonyms: syn.iter().map(|s| s.to_string()).collect(),
            visually_similar: vis.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn direct_union_in_category_order() {
        let p = build_prompt_list(&[scene(vec![set(&["cup", "mug"], &["bowl"])])]).unwrap();
        assert_eq!(p.labels(), ["cup", "mug", "bowl"]);
        assert_eq!(p.position("bowl"), Some(2));
    }

    #[test]
    fn dedup_across_objects() {
        let p = build_prompt_list(&[scene(vec![set(&["chair"], &[]), set(&["chair", "seat"], &[])])]).unwrap();
        assert_eq!(p.labels(), ["chair", "seat"]);
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(build_prompt_list(&[]), Err(Error::EmptyPromptList)));
        assert!(PromptList::new(vec!["a".into(), "a".into()]).is_err());
    }

    #[test]
    fn deterministic() {
        let scenes = [scene(vec![set(&["b", "a"], &["c"]), set(&["d"], &["a2"])])];
        assert_eq!(build_prompt_list(&scenes).unwrap(), build_prompt_list(&scenes).unwrap());
    }
}
