//! Tiered open-set segmentation metrics.
//!
//! Each evaluated ground-truth point receives one [`Category`] per top-N
//! setting, and each matched point additionally contributes set-ranking terms
//! computed from where its own labels land in the full similarity ranking.

mod aggregate;
mod engine;
mod ops;
mod point;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::PromptList;
use crate::scene::{GroundTruthScene, InstanceId};

pub use aggregate::{aggregate_scene, PointResult};
pub use engine::{evaluate_scene, PredictedCloud, SceneEvaluation, SegmentationConfig};
pub use ops::{compute_miou, set_ranking, top_n_frequency};
pub use point::{evaluate_point, point_set_terms, ClosedSet, PointOutcome, PointSetTerms, SetTerms};

/// Default top-N settings.
pub const DEFAULT_TOP_N: [usize; 3] = [1, 5, 10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Synonym,
    Depiction,
    VisuallySimilar,
    Clutter,
    Missing,
    Incorrect,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Synonym,
        Category::Depiction,
        Category::VisuallySimilar,
        Category::Clutter,
        Category::Missing,
        Category::Incorrect,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Synonym => "synonym",
            Category::Depiction => "depiction",
            Category::VisuallySimilar => "visually_similar",
            Category::Clutter => "clutter",
            Category::Missing => "missing",
            Category::Incorrect => "incorrect",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Prompt-list index sets for the points of one instance. All vectors are
/// sorted and deduplicated.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PointLabelSets {
    pub synonyms: Vec<u32>,
    pub depictions: Vec<u32>,
    pub visually_similar: Vec<u32>,
    /// Every text label of every clutter neighbour (not transitive).
    pub clutter: Vec<u32>,
}

fn lookup<'a>(
    labels: impl Iterator<Item = &'a String>,
    prompt: &PromptList,
    instance: InstanceId,
) -> Result<Vec<u32>> {
    let mut out = labels
        .map(|l| {
            prompt.position(l).ok_or_else(|| Error::LabelNotInPrompt {
                label: l.clone(),
                instance,
            })
        })
        .collect::<Result<Vec<u32>>>()?;
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

impl PointLabelSets {
    pub fn for_instance(scene: &GroundTruthScene, id: InstanceId, prompt: &PromptList) -> Result<Self> {
        let set = scene
            .labels()
            .get(&id)
            .ok_or_else(|| Error::Scene(format!("instance {id} has no labels")))?;
        let mut clutter = BTreeSet::new();
        for n in &set.clutter_ids {
            if let Some(ns) = scene.labels().get(n) {
                clutter.extend(lookup(ns.all_labels(), prompt, *n)?);
            }
        }
        Ok(PointLabelSets {
            synonyms: lookup(set.synonyms.iter(), prompt, id)?,
            depictions: lookup(set.depictions.iter(), prompt, id)?,
            visually_similar: lookup(set.visually_similar.iter(), prompt, id)?,
            clutter: clutter.into_iter().collect(),
        })
    }

    pub fn dvs_len(&self) -> usize {
        self.depictions.len() + self.visually_similar.len()
    }
}

/// Label sets for every evaluated instance of a scene.
pub fn scene_label_sets(
    scene: &GroundTruthScene,
    prompt: &PromptList,
) -> Result<BTreeMap<InstanceId, PointLabelSets>> {
    scene
        .labels()
        .keys()
        .filter(|id| scene.is_evaluated(**id))
        .map(|id| Ok((*id, PointLabelSets::for_instance(scene, *id, prompt)?)))
        .collect()
}

/// Category of a point from its top-N labels: the first tier any of them
/// falls in, checking synonyms, depictions, visually similar, then clutter.
pub fn assign_category(top_n: &[u32], sets: &PointLabelSets) -> Category {
    let hit = |set: &[u32]| top_n.iter().any(|i| set.binary_search(i).is_ok());
    if hit(&sets.synonyms) {
        Category::Synonym
    } else if hit(&sets.depictions) {
        Category::Depiction
    } else if hit(&sets.visually_similar) {
        Category::VisuallySimilar
    } else if hit(&sets.clutter) {
        Category::Clutter
    } else {
        Category::Incorrect
    }
}

/// Inclusive 1-based rank interval a label set ideally occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankBounds {
    pub left: u32,
    pub right: u32,
    pub list_len: u32,
}

impl RankBounds {
    pub fn new(left: u32, right: u32, list_len: u32) -> Result<Self> {
        if !(1 <= left && left <= right && right <= list_len) {
            return Err(Error::Config(format!(
                "invalid rank bounds [{left}, {right}] for a list of {list_len}"
            )));
        }
        Ok(RankBounds { left, right, list_len })
    }

    /// Synonyms occupy ranks `1..=n_syn`.
    pub fn synonyms(n_syn: usize, list_len: usize) -> Option<Self> {
        (n_syn > 0).then(|| RankBounds::new(1, n_syn as u32, list_len as u32).ok())?
    }

    /// Depictions and visually similar labels follow the synonyms.
    pub fn dvs(n_syn: usize, n_dvs: usize, list_len: usize) -> Option<Self> {
        (n_dvs > 0).then(|| {
            RankBounds::new(n_syn as u32 + 1, (n_syn + n_dvs) as u32, list_len as u32).ok()
        })?
    }

    /// `1 + min(0, (r - left) / left)`: falls below 1 when ranked too high.
    pub fn left_term(&self, r: u32) -> f64 {
        let l = self.left as f64;
        1.0 + ((r as f64 - l) / l).min(0.0)
    }

    /// `1 - max(0, (r - right) / (len - right))`: falls below 1 when ranked
    /// too low. Identically 1 when the box reaches the end of the list.
    pub fn right_term(&self, r: u32) -> f64 {
        if self.right == self.list_len {
            return 1.0;
        }
        let br = self.right as f64;
        1.0 - ((r as f64 - br) / (self.list_len as f64 - br)).max(0.0)
    }
}

/// Rank score: 1 inside the box, decaying linearly toward 0 on either side.
pub fn rank_score(r: u32, bounds: &RankBounds) -> f64 {
    bounds.left_term(r).min(bounds.right_term(r))
}
