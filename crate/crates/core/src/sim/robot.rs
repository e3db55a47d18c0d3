use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::geometry::{normalize_angle, Vec2};
use super::maze::MazeMap;

pub const RANGEFINDERS: usize = 3;
pub const BEACON_SECTORS: usize = 4;
/// Width of the controller input vector produced by [`SensorReading::to_input`].
pub const SENSOR_WIDTH: usize = RANGEFINDERS + BEACON_SECTORS;

/// Angular offsets of the rangefinders relative to the heading.
pub const RANGEFINDER_OFFSETS: [f64; RANGEFINDERS] = [-FRAC_PI_4, 0.0, FRAC_PI_4];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub position: Vec2,
    /// Radians in `[-pi, pi)`.
    pub heading: f64,
    pub radius: f64,
}

impl RobotState {
    pub fn at_start(map: &MazeMap) -> Self {
        RobotState {
            position: map.start(),
            heading: 0.0,
            radius: map.config().robot_radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorReading {
    /// Right, center and left distances divided by the sensor range.
    pub rangefinders: [f64; RANGEFINDERS],
    /// One-hot sector of the direction towards the start position.
    pub beacon: [f64; BEACON_SECTORS],
}

impl SensorReading {
    pub fn to_input(&self) -> [f64; SENSOR_WIDTH] {
        let mut out = [0.0; SENSOR_WIDTH];
        out[..RANGEFINDERS].copy_from_slice(&self.rangefinders);
        out[RANGEFINDERS..].copy_from_slice(&self.beacon);
        out
    }

    pub fn is_valid(&self) -> bool {
        self.rangefinders.iter().all(|r| (0.0..=1.0).contains(r))
            && self.beacon.iter().all(|b| *b == 0.0 || *b == 1.0)
            && self.beacon.iter().sum::<f64>() == 1.0
    }
}

/// Wheel velocities in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorCommand {
    pub left: f64,
    pub right: f64,
}

/// Anything that maps sensor readings to wheel commands.
pub trait Policy {
    fn act(&self, reading: &SensorReading) -> MotorCommand;
}

impl<F: Fn(&SensorReading) -> MotorCommand> Policy for F {
    fn act(&self, reading: &SensorReading) -> MotorCommand {
        self(reading)
    }
}

/// Sector index of `relative` (radians), with sector boundaries assigned to
/// the lower index.
pub fn beacon_sector(relative: f64) -> usize {
    let a = relative.rem_euclid(TAU);
    if a == 0.0 {
        return 0;
    }
    ((a / FRAC_PI_2).ceil() as usize)
        .saturating_sub(1)
        .min(BEACON_SECTORS - 1)
}

pub fn sense(map: &MazeMap, state: &RobotState) -> SensorReading {
    let range = map.config().sensor_range;
    let mut rangefinders = [0.0; RANGEFINDERS];
    for (value, offset) in rangefinders.iter_mut().zip(RANGEFINDER_OFFSETS) {
        let dir = Vec2::from_angle(state.heading + offset);
        *value = (map.ray_distance(state.position, dir, range) / range).clamp(0.0, 1.0);
    }
    let to_start = map.start() - state.position;
    let sector = if to_start.x == 0.0 && to_start.y == 0.0 {
        0
    } else {
        beacon_sector(to_start.y.atan2(to_start.x) - state.heading)
    };
    let mut beacon = [0.0; BEACON_SECTORS];
    beacon[sector] = 1.0;
    SensorReading {
        rangefinders,
        beacon,
    }
}

const SLIDE_ITERATIONS: usize = 4;
const BISECTIONS: usize = 40;

/// Advances the robot by one kinematic step, sliding along walls on contact.
pub fn step(map: &MazeMap, state: &RobotState, command: MotorCommand) -> RobotState {
    let cfg = map.config();
    let left = command.left.clamp(-1.0, 1.0);
    let right = command.right.clamp(-1.0, 1.0);
    let heading = normalize_angle(state.heading + (right - left) * cfg.turn_gain);
    let speed = cfg.speed_gain * (left + right) / 2.0;
    let mut remaining = Vec2::from_angle(heading) * speed;
    let mut position = state.position;
    let radius = state.radius;

    for _ in 0..SLIDE_ITERATIONS {
        if remaining.norm() <= f64::EPSILON {
            break;
        }
        let (reached, t) = sweep(map, position, remaining, radius);
        position = reached;
        if t >= 1.0 {
            break;
        }
        let rest = remaining * (1.0 - t);
        remaining = match map.nearest_wall(position, radius * 1.01 + 1e-6) {
            Some((d, contact)) if d > 0.0 => {
                let normal = (position - contact) * (1.0 / d);
                let into = rest.dot(normal);
                if into < 0.0 {
                    rest - normal * into
                } else {
                    rest
                }
            }
            _ => break,
        };
    }

    RobotState {
        position,
        heading,
        radius,
    }
}

/// Moves from `from` along `delta` until the disc would touch a wall.
/// Returns the reached position and the travelled fraction of `delta`.
fn sweep(map: &MazeMap, from: Vec2, delta: Vec2, radius: f64) -> (Vec2, f64) {
    let len = delta.norm();
    let substeps = (len / (radius / 2.0)).ceil().max(1.0) as usize;
    let mut lo = 0.0;
    for i in 1..=substeps {
        let t = i as f64 / substeps as f64;
        if map.is_clear(from + delta * t, radius) {
            lo = t;
            continue;
        }
        let mut hi = t;
        for _ in 0..BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if map.is_clear(from + delta * mid, radius) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return (from + delta * lo, lo);
    }
    (from + delta, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    /// Start pose followed by one pose per step.
    pub trajectory: Vec<Pose>,
    pub end_position: Vec2,
    pub path_length: f64,
    pub steps: usize,
}

impl RolloutResult {
    /// Writes `step,x,y,heading` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["step", "x", "y", "heading"])?;
        for (i, pose) in self.trajectory.iter().enumerate() {
            w.write_record([
                i.to_string(),
                pose.position.x.to_string(),
                pose.position.y.to_string(),
                pose.heading.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs a fixed-length episode from the start pose.
pub fn rollout<P: Policy + ?Sized>(map: &MazeMap, policy: &P, max_steps: usize) -> RolloutResult {
    let mut state = RobotState::at_start(map);
    let mut trajectory = Vec::with_capacity(max_steps + 1);
    trajectory.push(Pose {
        position: state.position,
        heading: state.heading,
    });
    let mut path_length = 0.0;
    for _ in 0..max_steps {
        let reading = sense(map, &state);
        let next = step(map, &state, policy.act(&reading));
        path_length += next.position.distance(state.position);
        state = next;
        trajectory.push(Pose {
            position: state.position,
            heading: state.heading,
        });
    }
    RolloutResult {
        trajectory,
        end_position: state.position,
        path_length,
        steps: max_steps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::maze::{build_maze, MazeConfig};
    use std::f64::consts::PI;

    fn open_map() -> MazeMap {
        // single small ring so most of the arena is open
        build_maze(&MazeConfig {
            rings: 1,
            radii: vec![2.0],
            opening_angles: vec![vec![0.0]],
            opening_width_deg: 90.0,
            robot_radius: 0.5,
            sensor_range: 10.0,
            ..MazeConfig::default()
        })
        .unwrap()
    }

    fn state_at(x: f64, y: f64, heading: f64) -> RobotState {
        RobotState {
            position: Vec2::new(x, y),
            heading,
            radius: 0.5,
        }
    }

    #[test]
    fn center_rangefinder_reads_half_range() {
        let map = open_map();
        // boundary wall at x = 35, sensor range 10
        let reading = sense(&map, &state_at(30.0, 0.0, 0.0));
        assert!((reading.rangefinders[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rangefinder_clamps_to_one() {
        let map = open_map();
        let reading = sense(&map, &state_at(10.0, 0.0, PI / 2.0));
        // left ray points up-left into open space
        assert_eq!(reading.rangefinders[2], 1.0);
        assert!(reading.is_valid());
    }

    #[test]
    fn beacon_at_start_is_sector_zero() {
        let map = open_map();
        for h in [-3.0, -1.0, 0.0, 2.0] {
            let reading = sense(&map, &state_at(0.0, 0.0, h));
            assert_eq!(reading.beacon, [1.0, 0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn beacon_sectors() {
        assert_eq!(beacon_sector(0.0), 0);
        assert_eq!(beacon_sector(0.3), 0);
        assert_eq!(beacon_sector(FRAC_PI_2), 0);
        assert_eq!(beacon_sector(FRAC_PI_2 + 1e-9), 1);
        assert_eq!(beacon_sector(PI), 1);
        assert_eq!(beacon_sector(-0.1), 3);
        // robot east of start facing east: start is behind
        let map = open_map();
        let r = sense(&map, &state_at(10.0, 0.0, 0.0));
        assert_eq!(r.beacon, [0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn straight_command_advances_speed_gain() {
        let map = open_map();
        let s = state_at(10.0, 10.0, 0.3);
        let next = step(
            &map,
            &s,
            MotorCommand {
                left: 1.0,
                right: 1.0,
            },
        );
        assert!((next.heading - 0.3).abs() < 1e-12);
        let moved = next.position - s.position;
        assert!((moved.norm() - 1.0).abs() < 1e-12);
        assert!((moved.y.atan2(moved.x) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn opposite_wheels_rotate_in_place() {
        let map = open_map();
        let s = state_at(10.0, 10.0, 0.3);
        let next = step(
            &map,
            &s,
            MotorCommand {
                left: -1.0,
                right: 1.0,
            },
        );
        assert!(next.position.distance(s.position) < 1e-12);
        assert!((next.heading - (0.3 + 2.0 * 0.2)).abs() < 1e-12);
    }

    #[test]
    fn head_on_collision_stops_before_wall() {
        let map = open_map();
        // 0.8 from the east wall, radius 0.5: only 0.3 of free travel
        let s = state_at(34.2, 0.0, 0.0);
        let wall_gap = 35.0 - s.position.x;
        let next = step(
            &map,
            &s,
            MotorCommand {
                left: 1.0,
                right: 1.0,
            },
        );
        let along = next.position.x - s.position.x;
        assert!(along <= wall_gap - s.radius + 1e-12, "moved {along}");
        assert!(along > wall_gap - s.radius - 1e-6);
        assert!((next.position.y - s.position.y).abs() < 1e-12);
    }

    #[test]
    fn oblique_collision_slides() {
        let map = open_map();
        let s = state_at(34.2, 0.0, PI / 4.0);
        let next = step(
            &map,
            &s,
            MotorCommand {
                left: 1.0,
                right: 1.0,
            },
        );
        assert!(next.position.x <= 35.0 - 0.5 + 1e-12);
        // the tangential component survives
        assert!(next.position.y - s.position.y > 0.6);
    }

    #[test]
    fn rollout_is_deterministic_and_consistent() {
        let map = build_maze(&MazeConfig::default()).unwrap();
        let policy = |r: &SensorReading| MotorCommand {
            left: 1.0 - r.rangefinders[0],
            right: 0.6 + 0.4 * r.rangefinders[2],
        };
        let a = rollout(&map, &policy, 200);
        let b = rollout(&map, &policy, 200);
        assert_eq!(a, b);
        assert_eq!(a.trajectory.len(), 201);
        let sum: f64 = a
            .trajectory
            .windows(2)
            .map(|w| w[1].position.distance(w[0].position))
            .sum();
        assert!((sum - a.path_length).abs() <= 1e-9 * sum.max(1.0));
        assert!(a.path_length >= a.end_position.distance(map.start()));
    }

    #[test]
    fn trajectory_csv() {
        let map = open_map();
        let stay = |_: &SensorReading| MotorCommand {
            left: 0.0,
            right: 0.0,
        };
        let r = rollout(&map, &stay, 2);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("step,x,y,heading"));
        assert_eq!(text.lines().count(), 4);
        assert_eq!(r.path_length, 0.0);
    }
}
