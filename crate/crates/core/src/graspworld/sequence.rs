//! Manipulation sequences: one subject moving one object, rendered frame by
//! frame through random cameras.

use nalgebra::{Rotation3, Vector3};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::camera::{project, Camera, ProjectionNoise};
use super::hand::{forward_kinematics, HandParams, SubjectStyle, NUM_FINGERS, NUM_JOINTS};
use super::objects::{contact_filter, Obb, ObjectSpec};
use crate::error::{Error, Result};
use crate::seed::{self, Rng};

pub const NUM_CORNERS: usize = 8;
/// Projected points per frame: 21 joints then 8 corners.
pub const NUM_POINTS: usize = NUM_JOINTS + NUM_CORNERS;
pub const INPUT_DIM: usize = 2 * NUM_POINTS + 3;
pub const HAND_TARGET_DIM: usize = 3 * NUM_JOINTS;
pub const CORNER_TARGET_DIM: usize = 3 * NUM_CORNERS;
/// Redraws of a frame's perturbation before giving up on it.
pub const MAX_FRAME_ATTEMPTS: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub input: Vec<f64>,
    pub validity: Vec<bool>,
    /// Wrist-aligned camera-frame joints, millimetres, joint-major.
    pub target_hand: Vec<f64>,
    /// Wrist-aligned camera-frame cuboid corners, millimetres.
    pub target_corners: Option<Vec<f64>>,
}

/// Per-frame rendering noise and motion magnitudes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub noise: ProjectionNoise,
    /// Std of the per-sequence grasp perturbation on curl (rad).
    pub intent_curl: f64,
    pub intent_spread: f64,
    /// Std of the per-sequence wrist offset relative to the object (m, rad).
    pub intent_translation: f64,
    pub intent_rotation: f64,
    /// Amplitude of the slow within-sequence finger motion (rad).
    pub wobble: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            noise: ProjectionNoise::default(),
            intent_curl: 0.08,
            intent_spread: 0.04,
            intent_translation: 0.004,
            intent_rotation: 0.08,
            wobble: 0.05,
        }
    }
}

/// Anatomy and habits of subject `index`, fixed across the whole dataset.
pub fn subject_style(index: usize) -> SubjectStyle {
    let mut rng = seed::rng(0x5eed_5ab1, "subject_style", index as u64);
    let curl = Normal::new(0.0, 0.05).expect("std");
    let spread = Normal::new(0.0, 0.03).expect("std");
    SubjectStyle {
        length_scale: rng.random_range(0.92..1.08),
        curl_offset: [0; NUM_FINGERS].map(|_| curl.sample(&mut rng)),
        spread_offset: [0; NUM_FINGERS].map(|_| spread.sample(&mut rng)),
    }
}

fn gaussian3(rng: &mut Rng, std: f64) -> Vector3<f64> {
    let n = Normal::new(0.0, std).expect("std");
    Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng))
}

/// How one sequence's grasp departs from the object prototype: subject
/// habits plus a per-sequence intent draw, all in the object frame.
struct GraspOffset {
    curl: [f64; NUM_FINGERS],
    spread: [f64; NUM_FINGERS],
    translation: Vector3<f64>,
    rotation: Vector3<f64>,
}

impl GraspOffset {
    fn sample(style: &SubjectStyle, cfg: &RenderConfig, rng: &mut Rng) -> Self {
        let curl = Normal::new(0.0, cfg.intent_curl.max(0.0)).expect("std");
        let spread = Normal::new(0.0, cfg.intent_spread.max(0.0)).expect("std");
        let mut out = Self {
            curl: style.curl_offset,
            spread: style.spread_offset,
            translation: Vector3::zeros(),
            rotation: Vector3::zeros(),
        };
        for f in 0..NUM_FINGERS {
            out.curl[f] += curl.sample(rng);
            out.spread[f] += spread.sample(rng);
        }
        out.rotation = gaussian3(rng, cfg.intent_rotation.max(0.0));
        out.translation = gaussian3(rng, cfg.intent_translation.max(0.0));
        out
    }

    /// Prototype moved by `lambda` times this offset plus the given finger
    /// motion.
    fn apply(&self, proto: &HandParams, style: &SubjectStyle, lambda: f64, motion: &[f64; 2 * NUM_FINGERS]) -> HandParams {
        let mut hp = proto.clone();
        hp.style = style.clone();
        for f in 0..NUM_FINGERS {
            hp.curl[f] += lambda * (self.curl[f] + motion[f]);
            hp.spread[f] += lambda * (self.spread[f] + motion[NUM_FINGERS + f]);
        }
        hp.set_rotation(&(Rotation3::new(self.rotation * lambda) * proto.rotation()));
        hp.wrist_position = (Vector3::from(proto.wrist_position) + self.translation * lambda).into();
        hp.clamp_to_limits();
        hp
    }
}

struct Trajectory {
    axis0: Vector3<f64>,
    spin_axis: Vector3<f64>,
    spin_rate: f64,
    amp: Vector3<f64>,
    phase: Vector3<f64>,
}

impl Trajectory {
    fn sample(rng: &mut Rng) -> Self {
        let spin = gaussian3(rng, 1.0);
        Self {
            axis0: gaussian3(rng, 1.0),
            spin_axis: spin / spin.norm().max(1e-9),
            spin_rate: rng.random_range(0.3..1.2),
            amp: Vector3::new(
                rng.random_range(0.0..0.08),
                rng.random_range(0.0..0.08),
                rng.random_range(0.0..0.05),
            ),
            phase: Vector3::new(
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.0..std::f64::consts::TAU),
            ),
        }
    }

    /// Object pose at normalised time `tau ∈ [0, 1]`.
    fn pose(&self, tau: f64) -> (Rotation3<f64>, Vector3<f64>) {
        let r = Rotation3::new(self.spin_axis * self.spin_rate * tau) * Rotation3::new(self.axis0);
        let w = std::f64::consts::TAU * tau;
        let t = Vector3::new(
            self.amp.x * (w + self.phase.x).sin(),
            self.amp.y * (w + self.phase.y).sin(),
            self.amp.z * (w + self.phase.z).sin(),
        );
        (r, t)
    }
}

/// Renders one frame given world-frame keypoints and cuboid.
fn render(keypoints: &[[f64; 3]; NUM_JOINTS], obb: &Obb, noise: &ProjectionNoise, rng: &mut Rng) -> Result<Sample> {
    let corners = obb.corners();
    let mut points: Vec<[f64; 3]> = keypoints.to_vec();
    points.extend_from_slice(&corners);
    let mut last = None;
    for _ in 0..MAX_FRAME_ATTEMPTS {
        let cam = Camera::random_around(obb.center, rng);
        match project(&cam, &points, noise, rng) {
            Ok(proj) => {
                let wrist = cam.to_camera(keypoints[0]);
                let align = |p: &[f64; 3]| -> [f64; 3] {
                    let c = cam.to_camera(*p) - wrist;
                    [c.x * 1000.0, c.y * 1000.0, c.z * 1000.0]
                };
                let mut target_hand: Vec<f64> = keypoints.iter().flat_map(align).collect();
                // Exact by construction; the subtraction above can leave −0.0.
                target_hand[..3].copy_from_slice(&[0.0; 3]);
                let target_corners = corners.iter().flat_map(align).collect();
                let mut input = proj.features();
                input.extend(cam.intrinsics_summary());
                return Ok(Sample {
                    input,
                    validity: proj.valid,
                    target_hand,
                    target_corners: Some(target_corners),
                });
            }
            Err(e @ Error::BehindCamera(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::Invalid("no camera".into())))
}

/// Generates `frames` contact frames of `obj` manipulated by `subject`.
/// Frames whose perturbed grasp fails the contact filter are redrawn.
pub fn generate_sequence(
    obj: &ObjectSpec,
    subject: usize,
    seq_seed: u64,
    frames: usize,
    cfg: &RenderConfig,
) -> Result<Vec<Sample>> {
    let style = subject_style(subject);
    let mut rng = seed::rng(seq_seed, "sequence", 0);
    let traj = Trajectory::sample(&mut rng);
    let offset = GraspOffset::sample(&style, cfg, &mut rng);
    let wob_phase: Vec<f64> = (0..2 * NUM_FINGERS)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    let jitter = Normal::new(0.0, 0.01).expect("std");
    let mut out = Vec::with_capacity(frames);
    for frame in 0..frames {
        let tau = if frames > 1 { frame as f64 / (frames - 1) as f64 } else { 0.0 };
        let (ro, to) = traj.pose(tau);
        let obb = Obb {
            center: to,
            rotation: ro,
            half_extents: obj.half_extents,
        };
        let w = std::f64::consts::TAU * tau * 2.0;
        let mut accepted = None;
        // Each failed attempt redraws the jitter and pulls the grasp a little
        // further back toward the prototype.
        for attempt in 0..MAX_FRAME_ATTEMPTS {
            let lambda = 1.0 - attempt as f64 / MAX_FRAME_ATTEMPTS as f64;
            let mut motion = [0.0; 2 * NUM_FINGERS];
            for f in 0..NUM_FINGERS {
                motion[f] = cfg.wobble * (w + wob_phase[f]).sin() + jitter.sample(&mut rng);
                motion[NUM_FINGERS + f] = 0.3 * cfg.wobble * (w + wob_phase[NUM_FINGERS + f]).sin();
            }
            let mut hp = offset.apply(&obj.prototype, &style, lambda, &motion);
            // Object frame → world.
            hp.wrist_position = (ro * Vector3::from(hp.wrist_position) + to).into();
            hp.set_rotation(&(ro * hp.rotation()));
            let kp = forward_kinematics(&hp)?;
            if contact_filter(&kp, &obb) {
                accepted = Some(kp);
                break;
            }
        }
        let kp = accepted.ok_or(Error::ContactExhausted {
            wanted: frames,
            attempts: MAX_FRAME_ATTEMPTS,
        })?;
        out.push(render(&kp, &obb, &cfg.noise, &mut rng)?);
    }
    Ok(out)
}
