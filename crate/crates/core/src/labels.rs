//! Tiered label model and annotation curation.
//!
//! Every object carries labels in three text categories of decreasing
//! specificity (synonyms, depictions, visually similar) plus a set of clutter
//! neighbours, which are other instances whose boxes overlap the object.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::InstanceId;

/// Minimum number of annotators that must share a synonym for an object to
/// count as unambiguous.
pub const DEFAULT_AGREEMENT: usize = 2;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryLabelSet {
    pub synonyms: BTreeSet<String>,
    pub depictions: BTreeSet<String>,
    pub visually_similar: BTreeSet<String>,
    pub clutter_ids: BTreeSet<InstanceId>,
    pub ambiguous: bool,
}

impl CategoryLabelSet {
    /// All text labels in category order (synonyms, depictions, visually
    /// similar), lexicographic within each category.
    pub fn all_labels(&self) -> impl Iterator<Item = &String> {
        self.synonyms
            .iter()
            .chain(&self.depictions)
            .chain(&self.visually_similar)
    }

    pub fn label_count(&self) -> usize {
        self.synonyms.len() + self.depictions.len() + self.visually_similar.len()
    }

    /// First label found in two categories, if any.
    pub fn overlapping_label(&self) -> Option<&String> {
        self.synonyms
            .iter()
            .find(|l| self.depictions.contains(*l) || self.visually_similar.contains(*l))
            .or_else(|| {
                self.depictions
                    .iter()
                    .find(|l| self.visually_similar.contains(*l))
            })
    }

    /// Primary class for closed-set comparison: the smallest synonym.
    pub fn primary_class(&self) -> Option<&String> {
        self.synonyms.iter().next()
    }
}

/// One annotator's free-text response for one instance. Each category field
/// holds comma-separated labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAnnotation {
    pub annotator: String,
    pub instance: String,
    #[serde(default)]
    pub synonyms: String,
    #[serde(default)]
    pub depictions: String,
    #[serde(default)]
    pub vis_sim: String,
}

/// Trims, lowercases and collapses internal whitespace. Returns `None` for an
/// empty result.
pub fn normalize_label(raw: &str) -> Option<String> {
    let words: Vec<String> = raw.split_whitespace().map(str::to_lowercase).collect();
    if words.is_empty() {
        None
    } else {
        Some(words.join(" "))
    }
}

/// Splits a comma-separated response into normalized labels.
pub fn split_response(field: &str) -> impl Iterator<Item = String> + '_ {
    field.split(',').filter_map(normalize_label)
}

/// Merges the annotations of one instance into a curated label set.
///
/// A label given in several categories is kept only in the least specific
/// one. Plural and spacing variants are distinct labels.
pub fn curate_labels(annotations: &[RawAnnotation]) -> Result<CategoryLabelSet> {
    curate_labels_with(annotations, DEFAULT_AGREEMENT)
}

pub fn curate_labels_with(
    annotations: &[RawAnnotation],
    agreement_threshold: usize,
) -> Result<CategoryLabelSet> {
    let first = annotations.first().ok_or(Error::NoAnnotations)?;
    let mut set = CategoryLabelSet::default();
    for a in annotations {
        set.synonyms.extend(split_response(&a.synonyms));
        set.depictions.extend(split_response(&a.depictions));
        set.visually_similar.extend(split_response(&a.vis_sim));
    }
    if set.label_count() == 0 {
        return Err(Error::Unlabeled(first.instance.clone()));
    }
    let vis = set.visually_similar.clone();
    set.depictions.retain(|l| !vis.contains(l));
    let dep = set.depictions.clone();
    set.synonyms.retain(|l| !vis.contains(l) && !dep.contains(l));
    set.ambiguous = flag_ambiguous(annotations, agreement_threshold);
    Ok(set)
}

/// True when no synonym is shared by at least `agreement_threshold`
/// distinct annotators.
pub fn flag_ambiguous(annotations: &[RawAnnotation], agreement_threshold: usize) -> bool {
    let mut per_annotator: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    for a in annotations {
        per_annotator
            .entry(a.annotator.as_str())
            .or_default()
            .extend(split_response(&a.synonyms));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for labels in per_annotator.values() {
        for l in labels {
            *counts.entry(l.as_str()).or_default() += 1;
        }
    }
    counts.values().copied().max().unwrap_or(0) < agreement_threshold
}

/// Result of curating a whole annotation file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CuratedLabels {
    pub labels: BTreeMap<InstanceId, CategoryLabelSet>,
    /// Instances whose annotations were all empty.
    pub unlabeled: BTreeSet<InstanceId>,
}

/// Groups annotations by instance and curates each group.
pub fn curate_all(annotations: &[RawAnnotation], agreement_threshold: usize) -> Result<CuratedLabels> {
    let mut groups: BTreeMap<InstanceId, Vec<RawAnnotation>> = BTreeMap::new();
    for a in annotations {
        let id: InstanceId = a.instance.parse().map_err(|_| {
            Error::Config(format!("annotation instance {:?} is not an integer id", a.instance))
        })?;
        groups.entry(id).or_default().push(a.clone());
    }
    let mut out = CuratedLabels::default();
    for (id, group) in groups {
        match curate_labels_with(&group, agreement_threshold) {
            Ok(set) => {
                out.labels.insert(id, set);
            }
            Err(Error::Unlabeled(_)) => {
                log::warn!("instance {id}: all responses empty, marking unlabeled");
                out.unlabeled.insert(id);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(annotator: &str, syn: &str, dep: &str, vis: &str) -> RawAnnotation {
        RawAnnotation {
            annotator: annotator.into(),
            instance: "7".into(),
            synonyms: syn.into(),
            depictions: dep.into(),
            vis_sim: vis.into(),
        }
    }

    fn strings(v: &[&str]) -> BTreeSet<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_label("  Counter   Top \t"), Some("counter top".into()));
        assert_eq!(normalize_label(" \n "), None);
        let v: Vec<_> = split_response("Sofa, ,couch ,  LOVE  seat").collect();
        assert_eq!(v, ["sofa", "couch", "love seat"]);
    }

    #[test]
    fn union_without_collision() {
        let set = curate_labels(&[ann("a", "couch", "", ""), ann("b", "sofa", "", "bench")]).unwrap();
        assert_eq!(set.synonyms, strings(&["couch", "sofa"]));
        assert_eq!(set.visually_similar, strings(&["bench"]));
        assert!(set.depictions.is_empty());
    }

    #[test]
    fn collision_goes_to_least_specific() {
        let set = curate_labels(&[ann("a", "blanket", "", ""), ann("b", "", "", "blanket")]).unwrap();
        assert!(set.synonyms.is_empty());
        assert_eq!(set.visually_similar, strings(&["blanket"]));

        let set = curate_labels(&[ann("a", "tree", "", ""), ann("b", "", "tree", "")]).unwrap();
        assert!(set.synonyms.is_empty());
        assert_eq!(set.depictions, strings(&["tree"]));
    }

    #[test]
    fn spacing_variants_kept() {
        let set = curate_labels(&[ann("a", "counter top", "", ""), ann("b", "countertop", "", "")]).unwrap();
        assert_eq!(set.synonyms, strings(&["counter top", "countertop"]));
        let set = curate_labels(&[ann("a", "shelf, shelves", "", "")]).unwrap();
        assert_eq!(set.synonyms.len(), 2);
    }

    #[test]
    fn empty_responses_are_unlabeled() {
        let err = curate_labels(&[ann("a", " , ", "", ""), ann("b", "", "", "")]).unwrap_err();
        assert!(matches!(err, Error::Unlabeled(_)));
        assert!(matches!(curate_labels(&[]).unwrap_err(), Error::NoAnnotations));
    }

    #[test]
    fn ambiguity_flag() {
        let all_chair: Vec<_> = ["a", "b", "c", "d"].iter().map(|n| ann(n, "chair", "", "")).collect();
        assert!(!flag_ambiguous(&all_chair, 2));

        let disjoint = [
            ann("a", "box", "", ""),
            ann("b", "bin", "", ""),
            ann("c", "crate", "", ""),
            ann("d", "basket", "", ""),
        ];
        assert!(flag_ambiguous(&disjoint, 2));

        let two_mug = [
            ann("a", "mug", "", ""),
            ann("b", "mug, cup", "", ""),
            ann("c", "beaker", "", ""),
            ann("d", "vessel", "", ""),
        ];
        assert!(!flag_ambiguous(&two_mug, 2));
    }

    #[test]
    fn repeated_annotator_counts_once() {
        let anns = [ann("a", "mug", "", ""), ann("a", "mug", "", ""), ann("b", "cup", "", "")];
        assert!(flag_ambiguous(&anns, 2));
    }

    #[test]
    fn curate_all_groups_by_instance() {
        let mut a = ann("a", "cup", "", "");
        a.instance = "1".into();
        let mut b = ann("a", "", "", "");
        b.instance = "2".into();
        let out = curate_all(&[a, b], 2).unwrap();
        assert_eq!(out.labels.len(), 1);
        assert!(out.unlabeled.contains(&InstanceId(2)));
    }
}
