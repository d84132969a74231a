use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::grid::{CellId, GridSpec};
use crate::vec3::Vec3;

/// Side length of the cubic blocks.
pub const BLOCK_SIZE: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// All robots share the whole grid.
    A,
    /// Each robot fills only its own region of the grid.
    B,
    /// Robots and humans fill alternating checkerboard cells.
    MixedCheckerboard,
    /// Two robots carry one block each along crossing straight lines.
    Crossing,
    /// The first robot keeps its end-effector over the grid center; a second
    /// robot, if present, fills the grid as in scenario A.
    Hold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotMount {
    pub base: Vec3,
    pub rest: Vec3,
    pub reach: f64,
}

/// Static geometry of the table: grid, block homes and robot mounts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layout {
    pub grid: GridSpec,
    pub block_size: f64,
    /// Block centers when resting at home.
    pub blocks: Vec<Vec3>,
    pub robots: Vec<RobotMount>,
    /// Where a human hand rests when outside the workspace.
    pub human_rest: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayoutError {
    #[error("robot count {0} out of range 1..=4")]
    RobotCount(usize),
    #[error("blocks {0} and {1} overlap")]
    OverlappingBlocks(usize, usize),
    #[error("block {0} lies on the grid")]
    BlockOnGrid(usize),
    #[error("scenario {kind:?} needs {needed} robots, got {got}")]
    ScenarioRobots { kind: ScenarioKind, needed: usize, got: usize },
    #[error("layout has {got} robot mounts, scenario needs {needed}")]
    MissingMounts { needed: usize, got: usize },
}

impl Layout {
    /// Sixteen blocks in two rows of eight, 6 cm apart, 6 cm outside the grid
    /// edge; robot shoulders on the four sides of the table.
    pub fn canonical() -> Self {
        let grid = GridSpec::default();
        let edge = grid.pitch * f64::from(grid.rows) / 2.0;
        let row_y = edge + 0.06;
        let mut blocks = Vec::with_capacity(16);
        for y in [-row_y, row_y] {
            for i in 0..8 {
                let x = (f64::from(i) - 3.5) * 0.06;
                blocks.push(Vec3::new(x, y, BLOCK_SIZE / 2.0));
            }
        }
        let shoulder = 0.30;
        let mount = |dx: f64, dy: f64| RobotMount {
            base: Vec3::new(0.55 * dx, 0.55 * dy, shoulder),
            rest: Vec3::new(0.35 * dx, 0.35 * dy, 0.20),
            reach: 0.85,
        };
        Self {
            grid,
            block_size: BLOCK_SIZE,
            blocks,
            robots: vec![mount(0.0, -1.0), mount(0.0, 1.0), mount(1.0, 0.0), mount(-1.0, 0.0)],
            human_rest: vec![Vec3::new(0.0, 0.50, 0.25), Vec3::new(0.50, 0.0, 0.25)],
        }
    }

    pub fn validate(&self) -> Result<(), LayoutError> {
        let half = self.grid.pitch * f64::from(self.grid.rows.max(self.grid.cols)) / 2.0;
        for (i, a) in self.blocks.iter().enumerate() {
            let d = *a - self.grid.origin;
            if d.x.abs() < half && d.y.abs() < half {
                return Err(LayoutError::BlockOnGrid(i));
            }
            for (j, b) in self.blocks.iter().enumerate().skip(i + 1) {
                let gap = *a - *b;
                if gap.x.abs() < self.block_size && gap.y.abs() < self.block_size {
                    return Err(LayoutError::OverlappingBlocks(i, j));
                }
            }
        }
        Ok(())
    }

    /// Index of the mount (among the first `n`) closest to `p`; ties go to the lower index.
    pub fn nearest_robot(&self, p: Vec3, n: usize) -> usize {
        let horizontal = |m: &RobotMount| {
            let d = m.base - p;
            d.x * d.x + d.y * d.y
        };
        let mut best = 0;
        for i in 1..n {
            if horizontal(&self.robots[i]) < horizontal(&self.robots[best]) - 1e-12 {
                best = i;
            }
        }
        best
    }
}

/// Who may fill which cells and which blocks each agent reaches for first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldDescription {
    pub kind: ScenarioKind,
    pub layout: Layout,
    pub n_robots: usize,
    pub n_humans: usize,
    /// Cells each robot may fill; `None` means the whole grid.
    pub robot_cells: Vec<Option<Vec<CellId>>>,
    /// Blocks on each robot's own side, picked before any other block.
    pub robot_blocks: Vec<Vec<usize>>,
    /// Blocks a robot may never take (reserved for humans).
    pub reserved_blocks: Vec<usize>,
    pub human_cells: Vec<Vec<CellId>>,
    pub human_blocks: Vec<Vec<usize>>,
    /// Fixed (block, cell) jobs; when present they replace center-outward allocation.
    pub fixed_jobs: Vec<Vec<(usize, CellId)>>,
    pub seed: u64,
}

impl WorldDescription {
    /// Number of blocks the run has to place to count as complete.
    pub fn blocks_to_place(&self) -> usize {
        match self.kind {
            ScenarioKind::Crossing => self.fixed_jobs.iter().map(Vec::len).sum(),
            ScenarioKind::Hold if self.n_robots < 2 => 0,
            _ => self.layout.blocks.len().min(self.layout.grid.len()),
        }
    }
}

/// Builds one of the task worlds on a layout.
pub fn build_layout_on(layout: Layout, n_robots: usize, kind: ScenarioKind, seed: u64) -> Result<WorldDescription, LayoutError> {
    if !(1..=4).contains(&n_robots) {
        return Err(LayoutError::RobotCount(n_robots));
    }
    if layout.robots.len() < n_robots {
        return Err(LayoutError::MissingMounts { needed: n_robots, got: layout.robots.len() });
    }
    layout.validate()?;
    let grid = layout.grid;
    let n_humans = usize::from(kind == ScenarioKind::MixedCheckerboard);
    let mut world = WorldDescription {
        kind,
        layout,
        n_robots,
        n_humans,
        robot_cells: vec![None; n_robots],
        robot_blocks: vec![Vec::new(); n_robots],
        reserved_blocks: Vec::new(),
        human_cells: vec![Vec::new(); n_humans],
        human_blocks: vec![Vec::new(); n_humans],
        fixed_jobs: vec![Vec::new(); n_robots],
        seed,
    };

    // Own-side blocks: those nearest to each robot's mount (or the human's rest spot).
    let mut owners = Vec::with_capacity(world.layout.blocks.len());
    for (b, p) in world.layout.blocks.iter().enumerate() {
        let owner = if n_humans > 0 {
            let robot = world.layout.nearest_robot(*p, n_robots);
            let to_robot = (world.layout.robots[robot].base - *p).xy();
            let to_human = (world.layout.human_rest[0] - *p).xy();
            let dr = to_robot[0].powi(2) + to_robot[1].powi(2);
            let dh = to_human[0].powi(2) + to_human[1].powi(2);
            if dh < dr { None } else { Some(robot) }
        } else {
            Some(world.layout.nearest_robot(*p, n_robots))
        };
        owners.push(owner);
        match owner {
            Some(r) => world.robot_blocks[r].push(b),
            None => {
                world.human_blocks[0].push(b);
                world.reserved_blocks.push(b);
            }
        }
    }

    match kind {
        ScenarioKind::A | ScenarioKind::Hold => {}
        ScenarioKind::B => {
            let mut regions = vec![Vec::new(); n_robots];
            for c in grid.cells() {
                let r = world.layout.nearest_robot(grid.cell_center(c), n_robots);
                regions[r].push(c);
            }
            world.robot_cells = regions.into_iter().map(Some).collect();
        }
        ScenarioKind::MixedCheckerboard => {
            let robot_cells: Vec<CellId> = grid.cells().filter(|c| grid.is_dark(*c)).collect();
            world.human_cells[0] = grid.cells().filter(|c| !grid.is_dark(*c)).collect();
            world.robot_cells = vec![Some(robot_cells); n_robots];
        }
        ScenarioKind::Crossing => {
            if n_robots != 2 {
                return Err(LayoutError::ScenarioRobots { kind, needed: 2, got: n_robots });
            }
            // Mirror-symmetric about the x axis: each robot carries a block from
            // its own row across the grid center to the far half.
            let cell_at = |x: f64, y: f64| {
                grid.cells()
                    .find(|c| {
                        let p = grid.cell_center(*c) - grid.origin;
                        (p.x - x).abs() < 1e-9 && (p.y - y).abs() < 1e-9
                    })
                    .expect("cell on grid")
            };
            let block_at = |layout: &Layout, x: f64, y: f64| {
                layout.blocks.iter().position(|p| (p.x - x).abs() < 1e-9 && (p.y - y).abs() < 1e-9).expect("block in layout")
            };
            let lane = 1.5 * grid.pitch;
            let row = world.layout.blocks[0].y.abs();
            let b1 = block_at(&world.layout, -2.5 * 0.06, -row);
            let b2 = block_at(&world.layout, -2.5 * 0.06, row);
            world.fixed_jobs = vec![vec![(b1, cell_at(lane, lane))], vec![(b2, cell_at(lane, -lane))]];
        }
    }
    if kind == ScenarioKind::Hold && n_robots > 2 {
        return Err(LayoutError::ScenarioRobots { kind, needed: 2, got: n_robots });
    }
    Ok(world)
}

/// [`build_layout_on`] with the canonical layout.
pub fn build_layout(n_robots: usize, kind: ScenarioKind, seed: u64) -> Result<WorldDescription, LayoutError> {
    build_layout_on(Layout::canonical(), n_robots, kind, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_layout_is_valid() {
        let l = Layout::canonical();
        assert_eq!(l.blocks.len(), 16);
        l.validate().unwrap();
        let gaps: Vec<f64> = l.blocks.windows(2).take(7).map(|w| w[1].x - w[0].x).collect();
        assert!(gaps.iter().all(|g| (g - 0.06).abs() < 1e-12));
        assert!((l.blocks[0].y + 0.18).abs() < 1e-12);
    }

    #[test]
    fn scenario_a_two_robots_own_sides() {
        let w = build_layout(2, ScenarioKind::A, 0).unwrap();
        assert_eq!(w.robot_blocks[0].len(), 8);
        assert_eq!(w.robot_blocks[1].len(), 8);
        assert!(w.robot_blocks[0].iter().all(|b| w.layout.blocks[*b].y < 0.0));
        assert!(w.robot_cells.iter().all(Option::is_none));
    }

    #[test]
    fn scenario_b_two_robots_halves() {
        let w = build_layout(2, ScenarioKind::B, 0).unwrap();
        let g = w.layout.grid;
        let r1 = w.robot_cells[0].as_ref().unwrap();
        assert_eq!(r1.len(), 8);
        assert!(r1.iter().all(|c| g.cell_center(*c).y < 0.0));
    }

    #[test]
    fn scenario_b_partitions_every_cell_for_larger_teams() {
        for n in 3..=4 {
            let w = build_layout(n, ScenarioKind::B, 0).unwrap();
            let total: usize = w.robot_cells.iter().map(|c| c.as_ref().unwrap().len()).sum();
            assert_eq!(total, 16);
            assert!(w.robot_cells.iter().all(|c| !c.as_ref().unwrap().is_empty()));
        }
    }

    #[test]
    fn mixed_checkerboard_split() {
        let w = build_layout(1, ScenarioKind::MixedCheckerboard, 0).unwrap();
        assert_eq!(w.human_cells[0].len(), 8);
        assert_eq!(w.robot_cells[0].as_ref().unwrap().len(), 8);
        assert_eq!(w.human_blocks[0].len(), 8);
        assert_eq!(w.robot_blocks[0].len(), 8);
    }

    #[test]
    fn robot_count_is_checked() {
        assert_eq!(build_layout(0, ScenarioKind::A, 0), Err(LayoutError::RobotCount(0)));
        assert_eq!(build_layout(5, ScenarioKind::A, 0), Err(LayoutError::RobotCount(5)));
        assert!(build_layout(3, ScenarioKind::Crossing, 0).is_err());
    }

    #[test]
    fn overlapping_blocks_rejected() {
        let mut l = Layout::canonical();
        l.blocks[1] = l.blocks[0] + Vec3::new(0.01, 0.0, 0.0);
        assert_eq!(l.validate(), Err(LayoutError::OverlappingBlocks(0, 1)));
    }

    #[test]
    fn crossing_jobs_are_mirrored() {
        let w = build_layout(2, ScenarioKind::Crossing, 0).unwrap();
        let (b1, c1) = w.fixed_jobs[0][0];
        let (b2, c2) = w.fixed_jobs[1][0];
        let g = w.layout.grid;
        assert_eq!(w.layout.blocks[b1].y, -w.layout.blocks[b2].y);
        assert_eq!(g.cell_center(c1).y, -g.cell_center(c2).y);
        assert_eq!(w.blocks_to_place(), 2);
    }
}
