//! Deterministic ring maze with a differential-drive robot.

mod geometry;
mod maze;
mod robot;

pub use geometry::{normalize_angle, Aabb, Segment, Vec2};
pub use maze::{build_maze, MazeConfig, MazeMap};
pub use robot::{
    beacon_sector, rollout, sense, step, MotorCommand, Policy, Pose, RobotState, RolloutResult,
    SensorReading, BEACON_SECTORS, RANGEFINDERS, RANGEFINDER_OFFSETS, SENSOR_WIDTH,
};
