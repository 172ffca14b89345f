//! Ground-truth scene model.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{voxel_downsample, Point3};
use crate::labels::{normalize_label, CategoryLabelSet};

/// Identifier of a ground-truth or predicted instance.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct InstanceId(pub u32);

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl std::str::FromStr for InstanceId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        s.trim().parse().map(InstanceId)
    }
}

/// Labels that mark structural instances excluded from evaluation by default.
pub const DEFAULT_EXCLUDED_LABELS: [&str; 3] = ["floor", "wall", "ceiling"];

/// A labeled point cloud. Construction validates every cross-reference, so a
/// value of this type is always internally consistent.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthScene {
    name: String,
    points: Vec<Point3>,
    instance_ids: Vec<InstanceId>,
    labels: BTreeMap<InstanceId, CategoryLabelSet>,
    excluded: BTreeSet<InstanceId>,
}

impl GroundTruthScene {
    pub fn new(
        name: impl Into<String>,
        points: Vec<Point3>,
        instance_ids: Vec<InstanceId>,
        labels: BTreeMap<InstanceId, CategoryLabelSet>,
        excluded: BTreeSet<InstanceId>,
    ) -> Result<Self> {
        let name = name.into();
        if points.len() != instance_ids.len() {
            return Err(Error::Scene(format!(
                "{} points but {} instance ids",
                points.len(),
                instance_ids.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::Scene(format!("point {i} has a non-finite coordinate")));
        }
        let present: BTreeSet<InstanceId> = instance_ids.iter().copied().collect();
        for id in &present {
            if !labels.contains_key(id) && !excluded.contains(id) {
                return Err(Error::Scene(format!(
                    "instance {id} appears in the point stream but has no labels and is not excluded"
                )));
            }
        }
        for (id, set) in &labels {
            for c in &set.clutter_ids {
                if c == id {
                    return Err(Error::Scene(format!("instance {id} lists itself as clutter")));
                }
                if !present.contains(c) && !labels.contains_key(c) {
                    return Err(Error::DanglingClutter {
                        instance: *id,
                        clutter: *c,
                    });
                }
            }
            for label in set.all_labels() {
                if normalize_label(label).as_deref() != Some(label.as_str()) {
                    return Err(Error::Scene(format!(
                        "instance {id}: label {label:?} is not normalized"
                    )));
                }
            }
            if let Some(label) = set.overlapping_label() {
                return Err(Error::Scene(format!(
                    "instance {id}: label {label:?} appears in more than one category"
                )));
            }
        }
        Ok(GroundTruthScene {
            name,
            points,
            instance_ids,
            labels,
            excluded,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn instance_ids(&self) -> &[InstanceId] {
        &self.instance_ids
    }

    pub fn labels(&self) -> &BTreeMap<InstanceId, CategoryLabelSet> {
        &self.labels
    }

    pub fn excluded(&self) -> &BTreeSet<InstanceId> {
        &self.excluded
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// True if points of `id` take part in evaluation.
    pub fn is_evaluated(&self, id: InstanceId) -> bool {
        !self.excluded.contains(&id) && self.labels.contains_key(&id)
    }

    /// Point indices per evaluated instance, in ascending instance order.
    pub fn evaluated_instances(&self) -> BTreeMap<InstanceId, Vec<usize>> {
        let mut out: BTreeMap<InstanceId, Vec<usize>> = BTreeMap::new();
        for (i, id) in self.instance_ids.iter().enumerate() {
            if self.is_evaluated(*id) {
                out.entry(*id).or_default().push(i);
            }
        }
        out
    }

    /// Marks additional instances as excluded.
    pub fn exclude(mut self, ids: impl IntoIterator<Item = InstanceId>) -> Self {
        self.excluded.extend(ids);
        self
    }

    /// Excludes every instance carrying one of `names` as a synonym.
    pub fn exclude_by_synonym<S: AsRef<str>>(self, names: &[S]) -> Self {
        let ids: Vec<InstanceId> = self
            .labels
            .iter()
            .filter(|(_, set)| names.iter().any(|n| set.synonyms.contains(n.as_ref())))
            .map(|(id, _)| *id)
            .collect();
        self.exclude(ids)
    }

    pub fn exclude_ambiguous(self) -> Self {
        let ids: Vec<InstanceId> = self
            .labels
            .iter()
            .filter(|(_, set)| set.ambiguous)
            .map(|(id, _)| *id)
            .collect();
        self.exclude(ids)
    }

    /// Voxel-downsamples the point stream, carrying instance ids along.
    pub fn downsample(&self, resolution: f64) -> Result<Self> {
        let keep = voxel_downsample(&self.points, resolution)?;
        Ok(GroundTruthScene {
            name: self.name.clone(),
            points: keep.iter().map(|&i| self.points[i]).collect(),
            instance_ids: keep.iter().map(|&i| self.instance_ids[i]).collect(),
            labels: self.labels.clone(),
            excluded: self.excluded.clone(),
        })
    }

    pub fn with_labels(mut self, labels: BTreeMap<InstanceId, CategoryLabelSet>) -> Result<Self> {
        let excluded = std::mem::take(&mut self.excluded);
        GroundTruthScene::new(self.name, self.points, self.instance_ids, labels, excluded)
    }
}
