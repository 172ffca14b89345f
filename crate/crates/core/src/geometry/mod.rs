//! Point-cloud and box geometry.

mod matching;
mod obb;
mod voxel;

pub use matching::{match_points, PointMatching};
pub use obb::{box_iou, fit_oriented_box, BoxFit, OrientedBox, MIN_HALF_EXTENT};
pub use voxel::{pointset_iou, voxel_downsample, voxel_key, Overlap, VoxelKey, VoxelSet};

/// A point in meters.
pub type Point3 = [f64; 3];

/// Voxel edge length used throughout evaluation.
pub const DEFAULT_RESOLUTION: f64 = 0.05;

#[inline]
pub(crate) fn dist2(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}
