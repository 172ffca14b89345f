//! Clutter neighbours: instances whose fitted boxes overlap.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::error::Result;
use crate::geometry::{box_iou, fit_oriented_box, BoxFit, OrientedBox, Point3};
use crate::scene::{GroundTruthScene, InstanceId};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClutterMap {
    pub neighbors: BTreeMap<InstanceId, BTreeSet<InstanceId>>,
    /// Instances that got an axis-aligned fallback box.
    pub fallbacks: Vec<InstanceId>,
}

fn footprint_radius(b: &OrientedBox) -> f64 {
    (b.half_extents[0].powi(2) + b.half_extents[1].powi(2)).sqrt()
}

/// Symmetric clutter map over all evaluated instances. Two instances are
/// neighbours when their boxes have IoU > 0.
pub fn compute_clutter(scene: &GroundTruthScene) -> Result<ClutterMap> {
    let instances = scene.evaluated_instances();
    let mut boxes: Vec<(InstanceId, OrientedBox)> = Vec::with_capacity(instances.len());
    let mut fallbacks = Vec::new();
    for (id, idx) in &instances {
        let pts: Vec<Point3> = idx.iter().map(|&i| scene.points()[i]).collect();
        let (b, fit) = fit_oriented_box(&pts)?;
        if fit == BoxFit::AxisAlignedFallback {
            log::warn!(
                "instance {id}: {} points, degenerate footprint; using an axis-aligned box",
                pts.len()
            );
            fallbacks.push(*id);
        }
        boxes.push((*id, b));
    }

    let pairs: Vec<(usize, usize)> = (0..boxes.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let boxes = &boxes;
            (i + 1..boxes.len()).filter_map(move |j| {
                let (a, b) = (&boxes[i].1, &boxes[j].1);
                let dx = a.center[0] - b.center[0];
                let dy = a.center[1] - b.center[1];
                let reach = footprint_radius(a) + footprint_radius(b);
                if dx * dx + dy * dy > reach * reach {
                    return None;
                }
                (box_iou(a, b) > 0.0).then_some((i, j))
            })
        })
        .collect();

    let mut neighbors: BTreeMap<InstanceId, BTreeSet<InstanceId>> =
        boxes.iter().map(|(id, _)| (*id, BTreeSet::new())).collect();
    for (i, j) in pairs {
        let (a, b) = (boxes[i].0, boxes[j].0);
        neighbors.get_mut(&a).expect("present").insert(b);
        neighbors.get_mut(&b).expect("present").insert(a);
    }
    Ok(ClutterMap {
        neighbors,
        fallbacks,
    })
}

/// Writes clutter sets into the scene's label map, replacing existing ones.
pub fn apply_clutter(scene: GroundTruthScene, clutter: &ClutterMap) -> Result<GroundTruthScene> {
    let mut labels = scene.labels().clone();
    for (id, set) in labels.iter_mut() {
        set.clutter_ids = clutter.neighbors.get(id).cloned().unwrap_or_default();
    }
    scene.with_labels(labels)
}
