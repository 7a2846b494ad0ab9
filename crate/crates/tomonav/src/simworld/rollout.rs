//! Closed-loop driving: demonstration collection with the scripted
//! expert and rollouts of a trained policy through the full
//! render -> featurize -> forward -> control -> dynamics loop.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::navigation::{junction_update, Controller, Directive, JunctionCounter, NavConfig, Turn, VelocityCommand};
use crate::nn::{ActionVector, Network, Tensor};
use crate::simworld::episode::{frame_digest, EpisodeLog, EpisodeProvenance, EpisodeRecord};
use crate::simworld::map::{RoadMap, RoutePath};
use crate::simworld::oracle::{oracle_policy, step_dynamics, OracleParams};
use crate::simworld::render::render_view;
use crate::simworld::{CameraModel, DronePose, FRAME_DT};
use crate::tomography::{featurize, TomoConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DemoParams {
    /// Start-pose jitter: lateral meters and heading radians.
    pub start_lateral_jitter: f64,
    pub start_heading_jitter: f64,
    /// Recovery kicks: every `kick_min..=kick_max` frames the pose is
    /// teleported laterally/rotationally so the expert demonstrates
    /// corrections, not just centerline cruising. Zero disables.
    pub kick_min_frames: usize,
    pub kick_max_frames: usize,
    pub kick_lateral: f64,
    pub kick_heading: f64,
}

impl Default for DemoParams {
    fn default() -> Self {
        Self {
            start_lateral_jitter: 1.0,
            start_heading_jitter: 0.2,
            kick_min_frames: 150,
            kick_max_frames: 250,
            kick_lateral: 1.2,
            kick_heading: 0.35,
        }
    }
}

/// Map the expert's binary action vector onto velocities the same way
/// the controller maps discrete commands.
fn expert_velocity(av: &ActionVector, nav: &NavConfig) -> VelocityCommand {
    if av.halt >= 0.5 {
        VelocityCommand::hover()
    } else if av.yaw_left >= 0.5 {
        VelocityCommand { forward_speed: nav.v_turn, yaw_rate: nav.yaw_rate_max, hover: false }
    } else if av.yaw_right >= 0.5 {
        VelocityCommand { forward_speed: nav.v_turn, yaw_rate: -nav.yaw_rate_max, hover: false }
    } else {
        VelocityCommand { forward_speed: nav.v_forward, yaw_rate: 0.0, hover: false }
    }
}

fn path_heading(route: &RoutePath, u: f64) -> f64 {
    let ahead = route.point_at((u + 0.5).min(route.length));
    let behind = route.point_at((u - 0.5).max(0.0));
    (ahead[1] - behind[1]).atan2(ahead[0] - behind[0])
}

/// Drive the scripted expert along `route`, rendering and labeling
/// every frame. The episode ends at `n_frames` or when the route is
/// done. The expert leaving the corridor is a hard error: it means the
/// map, route or policy is broken.
#[allow(clippy::too_many_arguments)]
pub fn collect_demonstrations(
    map: &RoadMap,
    route: &RoutePath,
    start: Option<DronePose>,
    n_frames: usize,
    seed: u64,
    camera: &CameraModel,
    nav: &NavConfig,
    oracle: &OracleParams,
    demo: &DemoParams,
) -> Result<EpisodeLog> {
    camera.validate()?;
    nav.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pose = match start {
        Some(p) => {
            let (_, lateral) = route.closest_point(p.position());
            if lateral >= map.road_half_width {
                return Err(Error::InvalidInput("start pose is off the route corridor".into()));
            }
            p
        }
        None => {
            let base = route.start_pose();
            let n = route.normal_at(0.0);
            let lat = rng.random_range(-demo.start_lateral_jitter..=demo.start_lateral_jitter)
                .clamp(-(map.road_half_width - 0.8), map.road_half_width - 0.8);
            let dh = rng.random_range(-demo.start_heading_jitter..=demo.start_heading_jitter);
            DronePose::new(base.x + n[0] * lat, base.y + n[1] * lat, base.heading + dh)
        }
    };

    let mut next_kick = if demo.kick_min_frames > 0 && demo.kick_max_frames >= demo.kick_min_frames
    {
        rng.random_range(demo.kick_min_frames..=demo.kick_max_frames)
    } else {
        usize::MAX
    };

    let mut log = EpisodeLog {
        provenance: EpisodeProvenance {
            map_seed: map.texture_seed,
            episode_seed: seed,
            camera: *camera,
        },
        records: Vec::new(),
        frames: Vec::new(),
    };

    for i in 0..n_frames {
        if i == next_kick {
            let (u, _) = route.closest_point(pose.position());
            let p = route.point_at(u);
            let n = route.normal_at(u);
            let lat = rng.random_range(-demo.kick_lateral..=demo.kick_lateral)
                .clamp(-(map.road_half_width - 0.7), map.road_half_width - 0.7);
            let dh = rng.random_range(-demo.kick_heading..=demo.kick_heading);
            pose = DronePose::new(p[0] + n[0] * lat, p[1] + n[1] * lat, path_heading(route, u) + dh);
            next_kick = i + rng.random_range(demo.kick_min_frames..=demo.kick_max_frames);
        }

        let (u, lateral) = route.closest_point(pose.position());
        if lateral >= map.road_half_width {
            return Err(Error::OracleOffRoad(format!(
                "expert at lateral {lateral:.2} m on frame {i}"
            )));
        }
        let frame = render_view(map, &pose, camera)?;
        let av = oracle_policy(map, route, &pose, oracle);
        log.records.push(EpisodeRecord {
            frame_id: i as u64,
            frame: format!("frame_{i:06}.pgm"),
            digest: frame_digest(&frame),
            target: av.as_array(),
            pose,
            t: i as f64 * FRAME_DT,
        });
        log.frames.push(frame);

        if u >= route.length - 2.0 {
            break;
        }
        let vel = expert_velocity(&av, nav);
        pose = step_dynamics(&pose, &vel, FRAME_DT);
    }
    log.validate()?;
    Ok(log)
}

/// What drives the rollout: the trained network over tomographic
/// features, or the scripted expert (closing the loop around the
/// controller and dynamics alone).
pub enum RolloutPolicy<'a> {
    Network { net: &'a Network, tomo: &'a TomoConfig },
    Oracle { params: OracleParams },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExecutedTurn {
    pub junction: u32,
    pub turn: Turn,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutReport {
    pub frames: usize,
    pub distance_m: f64,
    pub offroad_frames: usize,
    pub junctions_registered: u32,
    pub junctions_ground_truth: u32,
    pub turns_executed: Vec<ExecutedTurn>,
    pub directives_total: usize,
    pub route_end_reached: bool,
    pub aborted_offroad: bool,
    pub completed: bool,
    /// Wall-clock featurize+forward time per frame; zero for the
    /// oracle policy. Timing field, excluded from determinism checks.
    pub mean_latency_ms: f64,
    pub final_pose: DronePose,
}

impl RolloutReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rollout report serializes")
    }
}

/// Closed loop: render, featurize, predict, control, step. Terminates
/// at `max_frames`, on reaching the route end, when the controller's
/// terminal action engages, or when the drone strays two half-widths
/// off every road.
pub fn rollout(
    map: &RoadMap,
    route: &RoutePath,
    policy: RolloutPolicy<'_>,
    camera: &CameraModel,
    nav: &NavConfig,
    gt_params: &OracleParams,
    max_frames: usize,
) -> Result<RolloutReport> {
    if let RolloutPolicy::Network { net, tomo } = &policy {
        if net.spec().input_size != tomo.output_size {
            return Err(Error::InvalidShape(format!(
                "network expects {} px inputs but the featurizer produces {} px",
                net.spec().input_size,
                tomo.output_size
            )));
        }
    }
    let mut controller = Controller::new(route.plan.clone(), nav.clone())?;
    let mut pose = route.start_pose();
    let mut distance = 0.0;
    let mut offroad_frames = 0usize;
    let mut aborted = false;
    let mut route_end = false;
    let mut latency_sum = 0.0;
    let mut latency_count = 0usize;
    let mut gt_counter = JunctionCounter::new(nav.m_rise, nav.n_rearm);
    let mut frames = 0usize;

    for _ in 0..max_frames {
        // Ground-truth junction passages, recomputed from the pose.
        let gt_flag = map.distance_to_junction(pose.position()) <= gt_params.junction_radius_m;
        gt_counter = junction_update(gt_counter, gt_flag).0;

        let av = match &policy {
            RolloutPolicy::Network { net, tomo } => {
                let t0 = Instant::now();
                let frame = render_view(map, &pose, camera)?;
                let feature = featurize(&frame, tomo)?;
                let x = Tensor::new(
                    &[1, 1, feature.height(), feature.width()],
                    feature.data().to_vec(),
                )?;
                let av = net.forward(&x)?[0];
                latency_sum += t0.elapsed().as_secs_f64() * 1e3;
                latency_count += 1;
                av
            }
            RolloutPolicy::Oracle { params } => oracle_policy(map, route, &pose, params),
        };

        let (vel, _trace) = controller.step(&av)?;
        let next = step_dynamics(&pose, &vel, FRAME_DT);
        distance += ((next.x - pose.x).powi(2) + (next.y - pose.y).powi(2)).sqrt();
        pose = next;
        frames += 1;

        let road_dist = map.distance_to_road(pose.position());
        if road_dist > map.road_half_width {
            offroad_frames += 1;
        }
        if road_dist > 2.0 * map.road_half_width {
            aborted = true;
            break;
        }
        let (u, _) = route.closest_point(pose.position());
        if u >= route.length - 3.0 {
            route_end = true;
            break;
        }
        if controller.terminal_reached() {
            break;
        }
    }

    let executed: Vec<ExecutedTurn> = controller
        .executed_directives()
        .iter()
        .map(|d: &Directive| ExecutedTurn { junction: d.junction, turn: d.turn })
        .collect();
    let completed = route_end
        && !aborted
        && offroad_frames == 0
        && executed.len() == route.plan.directives.len();

    Ok(RolloutReport {
        frames,
        distance_m: distance,
        offroad_frames,
        junctions_registered: controller.junction_count(),
        junctions_ground_truth: gt_counter.count,
        turns_executed: executed,
        directives_total: route.plan.directives.len(),
        route_end_reached: route_end,
        aborted_offroad: aborted,
        completed,
        mean_latency_ms: if latency_count > 0 { latency_sum / latency_count as f64 } else { 0.0 },
        final_pose: pose,
    })
}
