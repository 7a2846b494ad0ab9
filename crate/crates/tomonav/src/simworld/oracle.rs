//! The scripted expert and the vehicle model.

use serde::{Deserialize, Serialize};

use crate::navigation::VelocityCommand;
use crate::nn::ActionVector;
use crate::simworld::map::{RoadMap, RoutePath};
use crate::simworld::DronePose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleParams {
    /// Pure-pursuit lookahead distance, meters.
    pub lookahead_m: f64,
    /// Heading-error threshold for yaw commands, radians.
    pub heading_threshold: f64,
    /// A frame is junction-labeled when the drone is within this
    /// distance of a junction node.
    pub junction_radius_m: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self { lookahead_m: 4.0, heading_threshold: 0.15, junction_radius_m: 4.0 }
    }
}

/// Pure-pursuit expert: steer toward the lookahead point on the route,
/// flag the forward/halt pair from the corridor test and the junction
/// head from node proximity. Outputs are binary.
pub fn oracle_policy(
    map: &RoadMap,
    route: &RoutePath,
    pose: &DronePose,
    params: &OracleParams,
) -> ActionVector {
    let (u, lateral) = route.closest_point(pose.position());
    let target = route.point_at(u + params.lookahead_m);
    let to_target = [target[0] - pose.x, target[1] - pose.y];
    let heading = pose.heading_vector();
    let theta_e = if to_target[0].abs() + to_target[1].abs() < 1e-9 {
        0.0
    } else {
        (heading[0] * to_target[1] - heading[1] * to_target[0])
            .atan2(heading[0] * to_target[0] + heading[1] * to_target[1])
    };
    let on_road = lateral < map.road_half_width;
    let junction = map.distance_to_junction(pose.position()) <= params.junction_radius_m;
    ActionVector {
        forward: if on_road { 1.0 } else { 0.0 },
        yaw_left: if theta_e > params.heading_threshold { 1.0 } else { 0.0 },
        yaw_right: if theta_e < -params.heading_threshold { 1.0 } else { 0.0 },
        halt: if on_road { 0.0 } else { 1.0 },
        junction: if junction { 1.0 } else { 0.0 },
    }
}

/// Unicycle update: heading first, then position along the new
/// heading. Hover leaves the pose untouched.
pub fn step_dynamics(pose: &DronePose, cmd: &VelocityCommand, dt: f64) -> DronePose {
    if cmd.hover {
        return *pose;
    }
    let heading = pose.heading + cmd.yaw_rate * dt;
    DronePose {
        x: pose.x + cmd.forward_speed * dt * heading.cos(),
        y: pose.y + cmd.forward_speed * dt * heading.sin(),
        heading,
        altitude: pose.altitude,
    }
}
