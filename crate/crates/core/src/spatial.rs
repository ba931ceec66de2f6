use std::collections::HashMap;

use crate::types::{PlayerId, Vec3};

/// Uniform planar hash grid used as the broad phase. Rebuilt every tick.
#[derive(Debug)]
pub struct SpatialHash {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<PlayerId>>,
}

impl SpatialHash {
    pub fn new(cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "cell size must be positive");
        SpatialHash {
            cell,
            cells: HashMap::new(),
        }
    }

    pub fn build<'a>(cell: f64, points: impl IntoIterator<Item = (PlayerId, &'a Vec3)>) -> Self {
        let mut grid = SpatialHash::new(cell);
        for (id, p) in points {
            grid.insert(id, *p);
        }
        grid
    }

    fn key(&self, p: Vec3) -> (i64, i64) {
        (
            (p.x / self.cell).floor() as i64,
            (p.y / self.cell).floor() as i64,
        )
    }

    pub fn insert(&mut self, id: PlayerId, p: Vec3) {
        let k = self.key(p);
        self.cells.entry(k).or_default().push(id);
    }

    /// Every id whose cell overlaps the square of half-width `radius` around
    /// `center`, sorted ascending. A superset of the ids within `radius`.
    pub fn query(&self, center: Vec3, radius: f64) -> Vec<PlayerId> {
        let span = (radius / self.cell).ceil().max(0.0) as i64;
        let (cx, cy) = self.key(center);
        let mut out = Vec::new();
        for dx in -span..=span {
            for dy in -span..=span {
                if let Some(ids) = self.cells.get(&(cx + dx, cy + dy)) {
                    out.extend_from_slice(ids);
                }
            }
        }
        out.sort_unstable();
        out
    }
}
