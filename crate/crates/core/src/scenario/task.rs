//! Block bookkeeping and the per-robot pick-and-place state machine.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::{next_cell, CellId};
use super::layout::WorldDescription;
use crate::agent::{AgentId, AgentState};
use crate::vec3::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum BlockState {
    AtHome,
    HeldBy { agent: AgentId },
    Placed { cell: CellId },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub id: usize,
    pub home: Vec3,
    pub position: Vec3,
    pub assigned_cell: Option<CellId>,
    pub state: BlockState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub block: usize,
    pub cell: CellId,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskEvent {
    Assigned { agent: AgentId, block: usize, cell: CellId },
    Grasped { agent: AgentId, block: usize },
    Placed { agent: AgentId, block: usize, cell: CellId },
    Replanned { agent: AgentId, lost_block: usize },
    Finished { agent: AgentId },
}

/// Shared world state of blocks and cells.
///
/// Reservations are global, so two robots never chase the same block or cell.
#[derive(Debug, Clone)]
pub struct TaskBoard {
    pub blocks: Vec<Block>,
    reserved_cells: BTreeSet<CellId>,
    reserved_blocks: BTreeSet<usize>,
    fill_order: Vec<CellId>,
    world: WorldDescription,
    jobs_taken: Vec<usize>,
    rng: ChaCha8Rng,
}

impl TaskBoard {
    pub fn new(world: &WorldDescription) -> Self {
        let blocks = world
            .layout
            .blocks
            .iter()
            .enumerate()
            .map(|(id, p)| Block { id, home: *p, position: *p, assigned_cell: None, state: BlockState::AtHome })
            .collect();
        Self {
            blocks,
            reserved_cells: BTreeSet::new(),
            reserved_blocks: world.reserved_blocks.iter().copied().collect(),
            fill_order: Vec::new(),
            world: world.clone(),
            jobs_taken: vec![0; world.n_robots],
            rng: ChaCha8Rng::seed_from_u64(world.seed ^ 0xB10C),
        }
    }

    pub fn world(&self) -> &WorldDescription {
        &self.world
    }

    pub fn placed_count(&self) -> usize {
        self.blocks.iter().filter(|b| matches!(b.state, BlockState::Placed { .. })).count()
    }

    /// Cells in the order they were filled.
    pub fn fill_order(&self) -> &[CellId] {
        &self.fill_order
    }

    pub fn is_complete(&self) -> bool {
        let target = self.world.blocks_to_place();
        target > 0 && self.placed_count() >= target
    }

    fn pick_block(&self, robot: usize) -> Option<usize> {
        let base = self.world.layout.robots[robot].base;
        let free = |b: &&Block| b.state == BlockState::AtHome && !self.reserved_blocks.contains(&b.id);
        let nearest = |ids: &mut dyn Iterator<Item = &Block>| {
            ids.filter(free)
                .min_by(|a, b| {
                    let da = base.distance(a.home);
                    let db = base.distance(b.home);
                    da.partial_cmp(&db).expect("finite").then(a.id.cmp(&b.id))
                })
                .map(|b| b.id)
        };
        let own = &self.world.robot_blocks[robot];
        nearest(&mut self.blocks.iter().filter(|b| own.contains(&b.id)))
            .or_else(|| nearest(&mut self.blocks.iter()))
    }

    /// Next (block, cell) job for a robot, following the center-outward rule.
    pub fn assign(&mut self, robot: usize) -> Option<Assignment> {
        if !self.world.fixed_jobs[robot].is_empty() {
            let k = self.jobs_taken[robot];
            let (block, cell) = *self.world.fixed_jobs[robot].get(k)?;
            self.jobs_taken[robot] += 1;
            self.reserve(block, cell);
            return Some(Assignment { block, cell });
        }
        if self.world.kind == super::layout::ScenarioKind::Crossing {
            return None;
        }
        let block = self.pick_block(robot)?;
        let permitted = self.world.robot_cells[robot].clone();
        let cell = next_cell(&self.world.layout.grid, &self.reserved_cells, permitted.as_deref(), &mut self.rng).ok()?;
        self.reserve(block, cell);
        Some(Assignment { block, cell })
    }

    fn reserve(&mut self, block: usize, cell: CellId) {
        self.reserved_blocks.insert(block);
        self.reserved_cells.insert(cell);
        self.blocks[block].assigned_cell = Some(cell);
    }

    /// Swaps a lost block for another free one, keeping the cell.
    pub fn replan(&mut self, robot: usize, lost: usize) -> Option<usize> {
        let cell = self.blocks[lost].assigned_cell;
        let block = self.pick_block(robot)?;
        self.reserved_blocks.insert(block);
        self.blocks[block].assigned_cell = cell;
        Some(block)
    }

    pub fn release_cell(&mut self, cell: CellId) {
        self.reserved_cells.remove(&cell);
    }

    /// Attempts to pick up a block; fails if someone else holds or placed it.
    pub fn grasp(&mut self, agent: AgentId, block: usize) -> bool {
        if self.blocks[block].state != BlockState::AtHome {
            return false;
        }
        self.blocks[block].state = BlockState::HeldBy { agent };
        true
    }

    pub fn place(&mut self, block: usize, cell: CellId) {
        let grid = self.world.layout.grid;
        let b = &mut self.blocks[block];
        b.state = BlockState::Placed { cell };
        b.position = grid.cell_center(cell) + Vec3::new(0.0, 0.0, self.world.layout.block_size / 2.0);
        self.reserved_cells.insert(cell);
        self.fill_order.push(cell);
    }

    /// Next block and cell for a scripted human, following the same center-outward rule.
    pub fn human_assign(&mut self, human: usize) -> Option<Assignment> {
        let block = self.world.human_blocks.get(human)?.iter().copied().find(|b| self.blocks[*b].state == BlockState::AtHome)?;
        let permitted = self.world.human_cells[human].clone();
        let cell = next_cell(&self.world.layout.grid, &self.reserved_cells, Some(&permitted), &mut self.rng).ok()?;
        self.reserved_cells.insert(cell);
        Some(Assignment { block, cell })
    }

    /// Direct placement by a human hand; the block is taken out of robot reach.
    pub fn human_place(&mut self, block: usize, cell: CellId) {
        self.reserved_blocks.insert(block);
        self.place(block, cell);
    }

    /// Keeps held blocks attached to their carrier.
    pub fn carry(&mut self, block: usize, ee: Vec3, grasp_offset: f64) {
        self.blocks[block].position = ee - Vec3::new(0.0, 0.0, grasp_offset);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    MoveAboveBlock,
    Descend,
    Grasp,
    Lift,
    Transport,
    DescendPlace,
    Release,
    Retreat,
    Done,
}

impl Phase {
    /// Phases during which coordination treats the robot as manipulating a block.
    pub fn is_grasping(self) -> bool {
        matches!(self, Phase::Grasp | Phase::Release | Phase::DescendPlace)
    }

    /// Phases in which the robot carries a block from source to destination.
    pub fn is_transfer(self) -> bool {
        matches!(self, Phase::Lift | Phase::Transport | Phase::DescendPlace | Phase::Release)
    }

    pub fn has_dwell(self) -> bool {
        matches!(self, Phase::Grasp | Phase::Release)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Waypoint reached when the end-effector is this close.
    pub position: f64,
    /// ... and moving slower than this.
    pub speed: f64,
    /// Time the gripper needs to close or open.
    pub grip_time: f64,
    /// Height of the approach waypoints above the grasp waypoints.
    pub hover: f64,
    /// End-effector height above a grasped block's center.
    pub grasp_offset: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { position: 0.01, speed: 0.02, grip_time: 0.2, hover: 0.08, grasp_offset: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PickPlaceStateMachine {
    pub robot: usize,
    pub phase: Phase,
    pub assignment: Option<Assignment>,
    pub waypoint: Vec3,
    pub rest: Vec3,
    /// Increments on every phase change.
    pub transitions: u64,
    dwell_since: Option<f64>,
}

impl PickPlaceStateMachine {
    pub fn new(robot: usize, rest: Vec3) -> Self {
        Self { robot, phase: Phase::Idle, assignment: None, waypoint: rest, rest, transitions: 0, dwell_since: None }
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    /// Source and destination of the block being carried, if any.
    pub fn transfer(&self, board: &TaskBoard) -> Option<(Vec3, Vec3)> {
        if !self.phase.is_transfer() {
            return None;
        }
        let a = self.assignment?;
        Some((board.blocks[a.block].home, board.world().layout.grid.cell_center(a.cell)))
    }

    pub fn dwell_pending(&self) -> bool {
        self.phase.has_dwell()
    }

    fn waypoint_for(&self, phase: Phase, board: &TaskBoard, tol: &Tolerances) -> Vec3 {
        let lift = Vec3::new(0.0, 0.0, tol.grasp_offset);
        let hover = Vec3::new(0.0, 0.0, tol.hover);
        let Some(a) = self.assignment else {
            return self.rest;
        };
        let grasp = board.blocks[a.block].home + lift;
        let place = board.world().layout.grid.cell_center(a.cell)
            + Vec3::new(0.0, 0.0, board.world().layout.block_size / 2.0)
            + lift;
        match phase {
            Phase::MoveAboveBlock | Phase::Lift => grasp + hover,
            Phase::Descend | Phase::Grasp => grasp,
            Phase::Transport | Phase::Retreat => place + hover,
            Phase::DescendPlace | Phase::Release => place,
            Phase::Idle | Phase::Done => self.rest,
        }
    }

    fn enter(&mut self, phase: Phase, board: &TaskBoard, tol: &Tolerances, now: f64) {
        self.phase = phase;
        self.waypoint = self.waypoint_for(phase, board, tol);
        self.transitions += 1;
        self.dwell_since = phase.has_dwell().then_some(now);
    }

    fn arrived(&self, agent: &AgentState, tol: &Tolerances) -> bool {
        agent.position.distance(self.waypoint) <= tol.position && agent.speed() < tol.speed
    }

    /// Advances the state machine by at most one phase. Grasp and release
    /// flip block state instantly once the gripper time has elapsed.
    pub fn advance(&mut self, agent: &mut AgentState, board: &mut TaskBoard, tol: &Tolerances, now: f64) -> Vec<TaskEvent> {
        let mut events = Vec::new();
        let id = agent.id;
        match self.phase {
            Phase::Idle => match board.assign(self.robot) {
                Some(a) => {
                    self.assignment = Some(a);
                    events.push(TaskEvent::Assigned { agent: id, block: a.block, cell: a.cell });
                    self.enter(Phase::MoveAboveBlock, board, tol, now);
                }
                None => {
                    self.assignment = None;
                    events.push(TaskEvent::Finished { agent: id });
                    self.enter(Phase::Done, board, tol, now);
                }
            },
            Phase::Done => {}
            Phase::Grasp | Phase::Release => {
                let since = self.dwell_since.unwrap_or(now);
                if now - since + 1e-9 < tol.grip_time || agent.position.distance(self.waypoint) > tol.position {
                    return events;
                }
                let a = self.assignment.expect("dwell phases carry an assignment");
                if self.phase == Phase::Grasp {
                    if board.grasp(id, a.block) {
                        agent.grasped_block = Some(a.block as u32);
                        events.push(TaskEvent::Grasped { agent: id, block: a.block });
                        self.enter(Phase::Lift, board, tol, now);
                    } else {
                        events.push(TaskEvent::Replanned { agent: id, lost_block: a.block });
                        match board.replan(self.robot, a.block) {
                            Some(b) => {
                                self.assignment = Some(Assignment { block: b, cell: a.cell });
                                self.enter(Phase::MoveAboveBlock, board, tol, now);
                            }
                            None => {
                                board.release_cell(a.cell);
                                self.assignment = None;
                                self.enter(Phase::Idle, board, tol, now);
                            }
                        }
                    }
                } else {
                    board.place(a.block, a.cell);
                    agent.grasped_block = None;
                    events.push(TaskEvent::Placed { agent: id, block: a.block, cell: a.cell });
                    self.enter(Phase::Retreat, board, tol, now);
                }
            }
            phase if self.arrived(agent, tol) => {
                let next = match phase {
                    Phase::MoveAboveBlock => Phase::Descend,
                    Phase::Descend => Phase::Grasp,
                    Phase::Lift => Phase::Transport,
                    Phase::Transport => Phase::DescendPlace,
                    Phase::DescendPlace => Phase::Release,
                    Phase::Retreat => Phase::Idle,
                    other => other,
                };
                if next == Phase::Idle {
                    self.assignment = None;
                    self.enter(Phase::Idle, board, tol, now);
                    events.extend(self.advance(agent, board, tol, now));
                } else {
                    self.enter(next, board, tol, now);
                }
            }
            _ => {}
        }
        events
    }
}
