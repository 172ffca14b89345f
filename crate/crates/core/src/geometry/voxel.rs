use std::collections::HashMap;

use super::{dist2, Point3};
use crate::error::{Error, Result};

pub type VoxelKey = [i64; 3];

// Coordinates that sit exactly on a grid plane can land a hair below it after
// division; snap them back up so grid-aligned clouds keep one point per voxel.
const GRID_SNAP: f64 = 1e-9;

#[inline]
pub fn voxel_key(p: &Point3, resolution: f64) -> VoxelKey {
    [
        (p[0] / resolution + GRID_SNAP).floor() as i64,
        (p[1] / resolution + GRID_SNAP).floor() as i64,
        (p[2] / resolution + GRID_SNAP).floor() as i64,
    ]
}

fn check_resolution(resolution: f64) -> Result<()> {
    if resolution.is_finite() && resolution > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("voxel resolution must be > 0, got {resolution}")))
    }
}

/// Keeps one point per occupied voxel: the member closest to the voxel's
/// centroid, ties going to the lower index. Returns the kept indices in
/// ascending order so callers can carry any per-point payload along.
pub fn voxel_downsample(points: &[Point3], resolution: f64) -> Result<Vec<usize>> {
    check_resolution(resolution)?;
    let mut groups: HashMap<VoxelKey, Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        groups.entry(voxel_key(p, resolution)).or_default().push(i);
    }
    let mut keep: Vec<usize> = groups
        .into_values()
        .map(|members| {
            let n = members.len() as f64;
            let mut c = [0.0; 3];
            for &i in &members {
                for (k, ck) in c.iter_mut().enumerate() {
                    *ck += points[i][k];
                }
            }
            c.iter_mut().for_each(|v| *v /= n);
            let mut best = members[0];
            let mut best_d = dist2(&points[best], &c);
            for &i in &members[1..] {
                let d = dist2(&points[i], &c);
                if d < best_d {
                    best = i;
                    best_d = d;
                }
            }
            best
        })
        .collect();
    keep.sort_unstable();
    Ok(keep)
}

/// Sorted set of occupied voxels.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VoxelSet {
    keys: Vec<VoxelKey>,
}

impl VoxelSet {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3>, resolution: f64) -> Self {
        let mut keys: Vec<VoxelKey> = points.into_iter().map(|p| voxel_key(p, resolution)).collect();
        keys.sort_unstable();
        keys.dedup();
        VoxelSet { keys }
    }

    pub fn from_keys(mut keys: Vec<VoxelKey>) -> Self {
        keys.sort_unstable();
        keys.dedup();
        VoxelSet { keys }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn intersection_len(&self, other: &VoxelSet) -> usize {
        let (a, b) = (&self.keys, &other.keys);
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    /// Intersection and union sizes. Thresholding on the integer pair avoids
    /// rounding at the boundary.
    pub fn overlap(&self, other: &VoxelSet) -> Overlap {
        let inter = self.intersection_len(other);
        Overlap {
            intersection: inter,
            union: self.len() + other.len() - inter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Overlap {
    pub intersection: usize,
    pub union: usize,
}

impl Overlap {
    pub fn iou(&self) -> f64 {
        if self.union == 0 {
            0.0
        } else {
            self.intersection as f64 / self.union as f64
        }
    }

    /// `iou >= percent / 100`, evaluated exactly.
    pub fn reaches_percent(&self, percent: u32) -> bool {
        self.union > 0 && (self.intersection as u128) * 100 >= (percent as u128) * (self.union as u128)
    }
}

/// IoU of the voxel sets occupied by `a` and `b`. Two empty sets give 0.
pub fn pointset_iou(a: &[Point3], b: &[Point3], resolution: f64) -> Result<f64> {
    check_resolution(resolution)?;
    let va = VoxelSet::from_points(a, resolution);
    let vb = VoxelSet::from_points(b, resolution);
    Ok(va.overlap(&vb).iou())
}
