//! Exhaustive counting of crossing transfers over random block/cell choices.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;
use thiserror::Error;

use super::geometry::{segments_intersect, LatticePoint};
use crate::scenario::{Layout, LayoutError};
use crate::vec3::Vec3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConflictError {
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("{what} {a} and {b} coincide in the table plane")]
    Overlap { what: &'static str, a: usize, b: usize },
    #[error("block {block} sits on a grid cell")]
    BlockOnCell { block: usize },
    #[error("{n} robots need at least {n} blocks and {n} cells")]
    TooFewChoices { n: usize },
}

/// Exact count of conflicting configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConflictCount {
    pub conflicting: u128,
    pub total: u128,
}

impl ConflictCount {
    pub fn probability(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.conflicting as f64 / self.total as f64
        }
    }
}

fn lattice(points: &[Vec3], what: &'static str) -> Result<Vec<LatticePoint>, ConflictError> {
    let pts: Vec<LatticePoint> = points.iter().map(|p| LatticePoint::from_xy(*p)).collect();
    for a in 0..pts.len() {
        for b in a + 1..pts.len() {
            if pts[a] == pts[b] {
                return Err(ConflictError::Overlap { what, a, b });
            }
        }
    }
    Ok(pts)
}

/// Counts ordered assignments of `n` robots to distinct blocks and distinct
/// cells (one concurrent transfer each) in which any two straight
/// block-to-cell segments intersect.
pub fn conflict_count(blocks: &[Vec3], cells: &[Vec3], n: usize) -> Result<ConflictCount, ConflictError> {
    let bl = lattice(blocks, "blocks")?;
    let cl = lattice(cells, "cells")?;
    let cell_set: BTreeSet<_> = cl.iter().collect();
    if let Some(block) = bl.iter().position(|b| cell_set.contains(b)) {
        return Err(ConflictError::BlockOnCell { block });
    }
    if n > bl.len() || n > cl.len() {
        return Err(ConflictError::TooFewChoices { n });
    }
    let (nb, nc) = (bl.len(), cl.len());
    let segs: Vec<(usize, usize)> = (0..nb).flat_map(|b| (0..nc).map(move |c| (b, c))).collect();
    let s = segs.len();
    let mut hit = vec![false; s * s];
    for i in 0..s {
        for j in 0..s {
            let (bi, ci) = segs[i];
            let (bj, cj) = segs[j];
            hit[i * s + j] = segments_intersect(bl[bi], cl[ci], bl[bj], cl[cj]);
        }
    }
    // completions[d] = ways to extend a prefix of d robots to all n.
    let completions: Vec<u128> = (0..=n)
        .map(|d| (d..n).map(|k| ((nb - k) * (nc - k)) as u128).product())
        .collect();

    struct Ctx<'a> {
        segs: &'a [(usize, usize)],
        hit: &'a [bool],
        s: usize,
        n: usize,
        completions: &'a [u128],
    }
    fn walk(ctx: &Ctx, chosen: &mut Vec<usize>, count: &mut ConflictCount) {
        if chosen.len() == ctx.n {
            count.total += 1;
            return;
        }
        for i in 0..ctx.s {
            let (b, c) = ctx.segs[i];
            if chosen.iter().any(|&j| ctx.segs[j].0 == b || ctx.segs[j].1 == c) {
                continue;
            }
            if chosen.iter().any(|&j| ctx.hit[i * ctx.s + j]) {
                let ways = ctx.completions[chosen.len() + 1];
                count.conflicting += ways;
                count.total += ways;
                continue;
            }
            chosen.push(i);
            walk(ctx, chosen, count);
            chosen.pop();
        }
    }
    let ctx = Ctx { segs: &segs, hit: &hit, s, n, completions: &completions };
    let mut count = ConflictCount { conflicting: 0, total: 0 };
    if n > 0 {
        walk(&ctx, &mut Vec::with_capacity(n), &mut count);
    }
    debug_assert_eq!(count.total, if n == 0 { 0 } else { completions[0] });
    Ok(count)
}

/// Conflict probability on a layout's blocks and its grid's cell centers.
pub fn conflict_probability(layout: &Layout, n_robots: usize) -> Result<f64, ConflictError> {
    layout.validate()?;
    let cells: Vec<Vec3> = layout.grid.cells().map(|c| layout.grid.cell_center(c)).collect();
    Ok(conflict_count(&layout.blocks, &cells, n_robots)?.probability())
}

/// Monte Carlo estimate of the same quantity; returns (estimate, standard error).
pub fn conflict_monte_carlo<R: Rng + ?Sized>(
    blocks: &[Vec3],
    cells: &[Vec3],
    n: usize,
    samples: u64,
    rng: &mut R,
) -> Result<(f64, f64), ConflictError> {
    let bl = lattice(blocks, "blocks")?;
    let cl = lattice(cells, "cells")?;
    if n > bl.len() || n > cl.len() {
        return Err(ConflictError::TooFewChoices { n });
    }
    let mut hits = 0u64;
    for _ in 0..samples {
        let b = sample(rng, bl.len(), n);
        let c = sample(rng, cl.len(), n);
        let segs: Vec<_> = b.iter().zip(c.iter()).map(|(b, c)| (bl[b], cl[c])).collect();
        let any = (0..n).any(|i| (i + 1..n).any(|j| segments_intersect(segs[i].0, segs[i].1, segs[j].0, segs[j].1)));
        hits += u64::from(any);
    }
    let p = hits as f64 / samples as f64;
    Ok((p, (p * (1.0 - p) / samples as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_robot_never_conflicts() {
        let l = Layout::canonical();
        assert_eq!(conflict_probability(&l, 1).unwrap(), 0.0);
    }

    #[test]
    fn hand_counted_square() {
        // Two blocks on the left, two cells on the right: exactly the crossed pairing intersects.
        let blocks = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let cells = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 0.0)];
        let c = conflict_count(&blocks, &cells, 2).unwrap();
        assert_eq!(c, ConflictCount { conflicting: 2, total: 4 });
    }

    #[test]
    fn overlapping_geometry_is_rejected() {
        let blocks = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 0.5)];
        let cells = [Vec3::new(1.0, 0.0, 0.0)];
        assert!(matches!(conflict_count(&blocks, &cells, 1), Err(ConflictError::Overlap { .. })));
        let cells = [Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 0.0)];
        assert!(matches!(
            conflict_count(&blocks[..1], &cells, 1),
            Err(ConflictError::BlockOnCell { block: 0 })
        ));
    }
}
