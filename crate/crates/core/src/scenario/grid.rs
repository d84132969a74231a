use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vec3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId(pub u8);

/// Square placement grid lying on the table, centered on `origin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub rows: u8,
    pub cols: u8,
    pub pitch: f64,
    pub origin: Vec3,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { rows: 4, cols: 4, pitch: 0.06, origin: Vec3::ZERO }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("every permitted cell is already taken")]
pub struct TaskComplete;

impl GridSpec {
    pub fn len(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cells(&self) -> impl Iterator<Item = CellId> {
        (0..self.len() as u8).map(CellId)
    }

    pub fn row_col(&self, cell: CellId) -> (u8, u8) {
        (cell.0 / self.cols, cell.0 % self.cols)
    }

    /// Offset from the grid center in half-pitch units; always an integer pair.
    fn half_pitch_offset(&self, cell: CellId) -> (i32, i32) {
        let (r, c) = self.row_col(cell);
        (2 * c as i32 - (self.cols as i32 - 1), 2 * r as i32 - (self.rows as i32 - 1))
    }

    /// Squared center distance in half-pitch units, exact for tie comparisons.
    pub fn center_rank(&self, cell: CellId) -> i32 {
        let (dx, dy) = self.half_pitch_offset(cell);
        dx * dx + dy * dy
    }

    pub fn center_distance(&self, cell: CellId) -> f64 {
        f64::from(self.center_rank(cell)).sqrt() * self.pitch / 2.0
    }

    /// Cell center on the table surface.
    pub fn cell_center(&self, cell: CellId) -> Vec3 {
        let (dx, dy) = self.half_pitch_offset(cell);
        self.origin + Vec3::new(f64::from(dx) * self.pitch / 2.0, f64::from(dy) * self.pitch / 2.0, 0.0)
    }

    /// Checkerboard color of a cell.
    pub fn is_dark(&self, cell: CellId) -> bool {
        let (r, c) = self.row_col(cell);
        (r + c) % 2 == 0
    }
}

/// Picks an unfilled permitted cell closest to the grid center, breaking ties uniformly.
pub fn next_cell<R: Rng + ?Sized>(
    grid: &GridSpec,
    filled: &BTreeSet<CellId>,
    permitted: Option<&[CellId]>,
    rng: &mut R,
) -> Result<CellId, TaskComplete> {
    let open: Vec<CellId> = grid
        .cells()
        .filter(|c| !filled.contains(c))
        .filter(|c| permitted.is_none_or(|p| p.contains(c)))
        .collect();
    let best = open.iter().map(|c| grid.center_rank(*c)).min().ok_or(TaskComplete)?;
    let ties: Vec<CellId> = open.into_iter().filter(|c| grid.center_rank(*c) == best).collect();
    Ok(*ties.choose(rng).expect("non-empty tie set"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Brute-force rings of the 4x4 lattice from Euclidean distances.
    fn rings(grid: &GridSpec) -> Vec<Vec<CellId>> {
        let mut d: Vec<(f64, CellId)> = grid.cells().map(|c| (grid.cell_center(c).norm(), c)).collect();
        d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut out: Vec<Vec<CellId>> = Vec::new();
        let mut last = -1.0;
        for (dist, c) in d {
            if (dist - last).abs() > 1e-9 {
                out.push(Vec::new());
                last = dist;
            }
            out.last_mut().unwrap().push(c);
        }
        out
    }

    #[test]
    fn ring_structure() {
        let g = GridSpec::default();
        let r = rings(&g);
        assert_eq!(r.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 8, 4]);
        for ring in &r {
            let ranks: BTreeSet<i32> = ring.iter().map(|c| g.center_rank(*c)).collect();
            assert_eq!(ranks.len(), 1);
        }
    }

    #[test]
    fn empty_grid_starts_in_the_middle() {
        let g = GridSpec::default();
        let inner = &rings(&g)[0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let c = next_cell(&g, &BTreeSet::new(), None, &mut rng).unwrap();
            assert!(inner.contains(&c));
        }
    }

    #[test]
    fn second_ring_uniform_after_inner_filled() {
        let g = GridSpec::default();
        let r = rings(&g);
        let filled: BTreeSet<CellId> = r[0].iter().copied().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = std::collections::BTreeMap::new();
        for _ in 0..8000 {
            let c = next_cell(&g, &filled, None, &mut rng).unwrap();
            assert!(r[1].contains(&c));
            *counts.entry(c).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 8);
        assert!(counts.values().all(|n| (850..1150).contains(n)), "{counts:?}");
    }

    #[test]
    fn last_cell_and_completion() {
        let g = GridSpec::default();
        let mut filled: BTreeSet<CellId> = g.cells().collect();
        filled.remove(&CellId(15));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(next_cell(&g, &filled, None, &mut rng), Ok(CellId(15)));
        filled.insert(CellId(15));
        assert_eq!(next_cell(&g, &filled, None, &mut rng), Err(TaskComplete));
    }

    #[test]
    fn grid_extent_and_checkerboard() {
        let g = GridSpec::default();
        let xs: Vec<f64> = g.cells().map(|c| g.cell_center(c).x).collect();
        let max = xs.iter().cloned().fold(f64::MIN, f64::max);
        assert!((max - 0.09).abs() < 1e-12);
        assert_eq!(g.cells().filter(|c| g.is_dark(*c)).count(), 8);
    }
}
