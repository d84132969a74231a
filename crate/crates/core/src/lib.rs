//! Multi-agent virtual model control in a shared pick-and-place workspace.
//!
//! Robot end-effectors and human hands interact only through virtual springs
//! and dampers. Each robot watches the balance of the forces acting on it,
//! and robots that end up pinned against each other negotiate which one goes
//! first.

pub mod agent;
pub mod components;
pub mod coordination;
pub mod scenario;
pub mod analysis;
pub mod harness;
mod vec3;

pub use vec3::Vec3;
