//! Top-down orthographic camera.
//!
//! The viewed square sits a quarter footprint ahead of the drone, with
//! image "up" along the heading and image "left" to the drone's left.
//! Road pixels render at 0.2, background at 0.8, plus bounded speckle
//! noise hashed from (texture seed, pose, pixel) so frames are fully
//! deterministic yet decorrelated across poses.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::simworld::map::{point_segment_distance, RoadMap};
use crate::simworld::{CameraModel, DronePose, ShadowMode};

pub const ROAD_INTENSITY: f64 = 0.2;
pub const BACKGROUND_INTENSITY: f64 = 0.8;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform in [-1, 1) from a hash state.
#[inline]
fn hash_unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

pub fn render_view(map: &RoadMap, pose: &DronePose, camera: &CameraModel) -> Result<Image> {
    camera.validate()?;
    if !map.contains(pose.position()) {
        return Err(Error::OutOfWorld(format!("pose ({:.1}, {:.1})", pose.x, pose.y)));
    }

    let res = camera.resolution;
    let half = camera.footprint_m / 2.0;
    let px = camera.footprint_m / res as f64;
    let fwd = pose.heading_vector();
    let left = [-fwd[1], fwd[0]];
    let center =
        [pose.x + fwd[0] * camera.footprint_m / 4.0, pose.y + fwd[1] * camera.footprint_m / 4.0];

    // Cull sub-segments against the view disc once per frame.
    let view_radius = half * std::f64::consts::SQRT_2 + map.road_half_width;
    let mut nearby: Vec<([f64; 2], [f64; 2])> = Vec::new();
    for seg in &map.segments {
        for pair in seg.windows(2) {
            if point_segment_distance(center, pair[0], pair[1]) <= view_radius {
                nearby.push((pair[0], pair[1]));
            }
        }
    }

    let pose_salt = splitmix64(
        map.texture_seed
            ^ pose.x.to_bits().rotate_left(17)
            ^ pose.y.to_bits().rotate_left(34)
            ^ pose.heading.to_bits().rotate_left(51),
    );
    let noise_amp = camera.noise_sigma * (3.0f64).sqrt();

    let mut img = Image::zeros(res, res);
    for r in 0..res {
        let body_fwd = half - (r as f64 + 0.5) * px;
        for c in 0..res {
            let body_left = half - (c as f64 + 0.5) * px;
            let world = [
                center[0] + fwd[0] * body_fwd + left[0] * body_left,
                center[1] + fwd[1] * body_fwd + left[1] * body_left,
            ];
            let mut d = f64::INFINITY;
            for &(a, b) in &nearby {
                d = d.min(point_segment_distance(world, a, b));
                if d <= map.road_half_width {
                    break;
                }
            }
            let mut v = if d <= map.road_half_width { ROAD_INTENSITY } else { BACKGROUND_INTENSITY };
            match camera.shadow_mode {
                ShadowMode::Off => {}
                ShadowMode::Soft => {
                    let phase = (world[0] * 0.11 + world[1] * 0.07)
                        + (map.texture_seed % 628) as f64 / 100.0;
                    v *= 1.0 - 0.25 * (0.5 + 0.5 * phase.sin());
                }
                ShadowMode::Sharp => {
                    let phase = (world[0] * 0.11 + world[1] * 0.07)
                        + (map.texture_seed % 628) as f64 / 100.0;
                    if phase.sin() > 0.3 {
                        v *= 0.55;
                    }
                }
            }
            let n = hash_unit(splitmix64(pose_salt ^ ((r * res + c) as u64)));
            v += n * noise_amp;
            img.set(c, r, v.clamp(0.0, 1.0));
        }
    }
    Ok(img)
}
