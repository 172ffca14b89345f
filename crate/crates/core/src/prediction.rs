//! Predicted scene representations.

use crate::error::{Error, Result};
use crate::geometry::{voxel_downsample, Point3};
use crate::retrieval::PredictedInstance;
use crate::scene::InstanceId;
use crate::similarity::FeatureMatrix;

/// One feature vector per point.
#[derive(Debug, Clone, PartialEq)]
pub struct DensePrediction {
    pub points: Vec<Point3>,
    pub features: FeatureMatrix,
}

impl DensePrediction {
    pub fn new(points: Vec<Point3>, features: FeatureMatrix) -> Result<Self> {
        if features.rows() != points.len() {
            return Err(Error::Config(format!(
                "{} feature rows for {} predicted points",
                features.rows(),
                points.len()
            )));
        }
        Ok(DensePrediction { points, features })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectInstance {
    pub id: InstanceId,
    pub confidence: Option<f64>,
    /// Sorted, deduplicated indices into the shared cloud.
    pub indices: Vec<u32>,
}

/// Instances over a shared cloud with one feature row per instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectPrediction {
    points: Vec<Point3>,
    features: FeatureMatrix,
    instances: Vec<ObjectInstance>,
    /// Owning instance (position in `instances`) of every point.
    owner: Vec<Option<u32>>,
    contested: usize,
}

impl ObjectPrediction {
    /// A point claimed by several instances goes to the highest confidence,
    /// ties to the lower instance id. A missing confidence counts as lowest.
    pub fn new(points: Vec<Point3>, features: FeatureMatrix, mut instances: Vec<ObjectInstance>) -> Result<Self> {
        if features.rows() != instances.len() {
            return Err(Error::Config(format!(
                "{} feature rows for {} instances",
                features.rows(),
                instances.len()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (k, inst) in instances.iter_mut().enumerate() {
            if !seen.insert(inst.id) {
                return Err(Error::Config(format!("duplicate instance id {}", inst.id)));
            }
            if inst.confidence.is_some_and(|c| !c.is_finite()) {
                return Err(Error::NonFinite { what: "confidence", row: k });
            }
            inst.indices.sort_unstable();
            inst.indices.dedup();
            if inst.indices.is_empty() {
                return Err(Error::Config(format!("instance {} has no points", inst.id)));
            }
            if let Some(&i) = inst.indices.last().filter(|&&i| i as usize >= points.len()) {
                return Err(Error::Config(format!(
                    "instance {} refers to point {i} of {}",
                    inst.id,
                    points.len()
                )));
            }
        }
        let better = |a: usize, b: usize| {
            let (ia, ib) = (&instances[a], &instances[b]);
            let (ca, cb) = (ia.confidence.unwrap_or(f64::NEG_INFINITY), ib.confidence.unwrap_or(f64::NEG_INFINITY));
            ca > cb || (ca == cb && ia.id < ib.id)
        };
        let mut owner: Vec<Option<u32>> = vec![None; points.len()];
        let mut contested = 0usize;
        let mut claims = vec![0u32; points.len()];
        for (k, inst) in instances.iter().enumerate() {
            for &i in &inst.indices {
                let slot = &mut owner[i as usize];
                claims[i as usize] += 1;
                match *slot {
                    Some(o) if !better(k, o as usize) => {}
                    _ => *slot = Some(k as u32),
                }
            }
        }
        contested += claims.iter().filter(|&&c| c > 1).count();
        if contested > 0 {
            log::warn!("{contested} points claimed by several instances; kept the highest-confidence claim");
        }
        Ok(ObjectPrediction {
            points,
            features,
            instances,
            owner,
            contested,
        })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn instances(&self) -> &[ObjectInstance] {
        &self.instances
    }

    pub fn owner(&self) -> &[Option<u32>] {
        &self.owner
    }

    /// Points claimed by more than one instance.
    pub fn contested(&self) -> usize {
        self.contested
    }

    /// Instances as retrieval candidates, each with all of its claimed points.
    pub fn retrieval_instances(&self) -> Vec<PredictedInstance> {
        self.instances
            .iter()
            .enumerate()
            .map(|(k, inst)| PredictedInstance {
                points: inst.indices.iter().map(|&i| self.points[i as usize]).collect(),
                feature: self.features.row(k).to_vec(),
                confidence: inst.confidence,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Dense(DensePrediction),
    Object(ObjectPrediction),
}

/// Points that carry a feature, with the feature row of each.
#[derive(Debug, Clone, PartialEq)]
pub struct PointFeatures {
    pub points: Vec<Point3>,
    pub feature_rows: Vec<u32>,
}

impl PointFeatures {
    /// Keeps one point per voxel; feature rows follow their points.
    pub fn downsample(&self, resolution: f64) -> Result<Self> {
        let keep = voxel_downsample(&self.points, resolution)?;
        Ok(PointFeatures {
            points: keep.iter().map(|&i| self.points[i]).collect(),
            feature_rows: keep.iter().map(|&i| self.feature_rows[i]).collect(),
        })
    }
}

impl Prediction {
    pub fn features(&self) -> &FeatureMatrix {
        match self {
            Prediction::Dense(d) => &d.features,
            Prediction::Object(o) => &o.features,
        }
    }

    /// Per-point view used by the segmentation track. In object mode each
    /// owned point carries its instance's row and unowned points are dropped.
    pub fn point_features(&self) -> PointFeatures {
        match self {
            Prediction::Dense(d) => PointFeatures {
                points: d.points.clone(),
                feature_rows: (0..d.points.len() as u32).collect(),
            },
            Prediction::Object(o) => {
                let (points, feature_rows) = o
                    .points
                    .iter()
                    .zip(&o.owner)
                    .filter_map(|(p, w)| w.map(|w| (*p, w)))
                    .unzip();
                PointFeatures { points, feature_rows }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(n: usize) -> Vec<Point3> {
        (0..n).map(|i| [i as f64, 0.0, 0.0]).collect()
    }

    fn inst(id: u32, confidence: Option<f64>, indices: Vec<u32>) -> ObjectInstance {
        ObjectInstance { id: InstanceId(id), confidence, indices }
    }

    #[test]
    fn disjoint_instances_flatten() {
        let f = FeatureMatrix::from_rows(2, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let o = ObjectPrediction::new(cloud(5), f, vec![inst(3, None, vec![0, 1]), inst(7, None, vec![3, 4])]).unwrap();
        let pf = Prediction::Object(o).point_features();
        assert_eq!(pf.feature_rows, vec![0, 0, 1, 1]);
        assert_eq!(pf.points[2], [3.0, 0.0, 0.0]);
    }

    #[test]
    fn highest_confidence_wins() {
        let f = FeatureMatrix::from_rows(1, &[vec![1.0], vec![2.0]]).unwrap();
        let o = ObjectPrediction::new(cloud(2), f.clone(), vec![inst(1, Some(0.4), vec![0, 1]), inst(2, Some(0.9), vec![1])]).unwrap();
        assert_eq!(o.owner(), [Some(0), Some(1)]);
        assert_eq!(o.contested(), 1);
        // equal confidence: lower id
        let o = ObjectPrediction::new(cloud(1), f, vec![inst(9, Some(0.5), vec![0]), inst(2, Some(0.5), vec![0])]).unwrap();
        assert_eq!(o.owner(), [Some(1)]);
    }

    #[test]
    fn row_mismatch_is_error() {
        let f = FeatureMatrix::from_rows(1, &[vec![1.0]]).unwrap();
        assert!(DensePrediction::new(cloud(2), f.clone()).is_err());
        assert!(ObjectPrediction::new(cloud(2), f.clone(), vec![inst(0, None, vec![5])]).is_err());
        assert!(ObjectPrediction::new(cloud(2), f, vec![]).is_err());
    }
}
