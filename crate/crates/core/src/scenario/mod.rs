//! Pick-and-place worlds, robot task logic and hand sources.

mod grid;
mod hand;
mod layout;
mod task;

pub use grid::{next_cell, CellId, GridSpec, TaskComplete};
pub use hand::{
    ApproachScript, HandError, HandInput, HandMode, HandSource, Keyframe, SENSING_PERIOD, SILENCE_TIMEOUT, VELOCITY_TAU,
};
pub use layout::{build_layout, build_layout_on, Layout, LayoutError, RobotMount, ScenarioKind, WorldDescription, BLOCK_SIZE};
pub use task::{Assignment, Block, BlockState, Phase, PickPlaceStateMachine, TaskBoard, TaskEvent, Tolerances};
