use std::collections::HashMap;

use rayon::prelude::*;

use super::{dist2, Point3};
use crate::error::{Error, Result};

/// Nearest predicted point for every ground-truth point, or `None` when no
/// predicted point lies within `max_distance`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMatching {
    pub matched: Vec<Option<u32>>,
    pub max_distance: f64,
}

impl PointMatching {
    pub fn len(&self) -> usize {
        self.matched.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matched.is_empty()
    }

    pub fn matched_count(&self) -> usize {
        self.matched.iter().filter(|m| m.is_some()).count()
    }
}

// Cells slightly larger than the search radius, so that any point within the
// radius is guaranteed to sit in one of the 27 neighbouring cells.
const CELL_MARGIN: f64 = 1.001;

struct HashGrid {
    cell: f64,
    cells: HashMap<[i64; 3], Vec<u32>>,
}

impl HashGrid {
    fn new(points: &[Point3], cell: f64) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i as u32);
        }
        HashGrid { cell, cells }
    }

    #[inline]
    fn key(p: &Point3, cell: f64) -> [i64; 3] {
        [
            (p[0] / cell).floor() as i64,
            (p[1] / cell).floor() as i64,
            (p[2] / cell).floor() as i64,
        ]
    }

    fn nearest(&self, q: &Point3, pred: &[Point3], max_d2: f64) -> Option<u32> {
        let k = Self::key(q, self.cell);
        let mut best: Option<(f64, u32)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) else {
                        continue;
                    };
                    for &j in bucket {
                        let d = dist2(q, &pred[j as usize]);
                        if d > max_d2 {
                            continue;
                        }
                        best = match best {
                            Some((bd, bj)) if bd < d || (bd == d && bj < j) => Some((bd, bj)),
                            _ => Some((d, j)),
                        };
                    }
                }
            }
        }
        best.map(|(_, j)| j)
    }
}

/// Matches each ground-truth point to its nearest predicted point within
/// `max_distance`. Equal distances resolve to the lowest predicted index.
pub fn match_points(gt: &[Point3], pred: &[Point3], max_distance: f64) -> Result<PointMatching> {
    if !(max_distance.is_finite() && max_distance > 0.0) {
        return Err(Error::Config(format!("match distance must be > 0, got {max_distance}")));
    }
    let max_d2 = max_distance * max_distance;
    let grid = HashGrid::new(pred, max_distance * CELL_MARGIN);
    let matched = gt
        .par_iter()
        .with_min_len(1024)
        .map(|q| grid.nearest(q, pred, max_d2))
        .collect();
    Ok(PointMatching {
        matched,
        max_distance,
    })
}
