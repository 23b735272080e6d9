//! A 21-joint kinematic hand.
//!
//! Joint order: wrist, then thumb, index, middle, ring and pinky with four
//! joints each (base, two intermediate joints, tip). The hand frame has the
//! wrist at the origin, fingers extending along +y and the palm facing +z;
//! curling bends each finger toward +z.

use nalgebra::{Rotation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_JOINTS: usize = 21;
pub const NUM_FINGERS: usize = 5;
/// Indices of the five fingertip joints.
pub const FINGERTIPS: [usize; 5] = [4, 8, 12, 16, 20];

pub const CURL_LIMITS: (f64, f64) = (0.0, std::f64::consts::FRAC_PI_2);
pub const SPREAD_LIMITS: (f64, f64) = (-std::f64::consts::PI / 8.0, std::f64::consts::PI / 8.0);

pub type Keypoints = [[f64; 3]; NUM_JOINTS];

struct FingerGeometry {
    base: [f64; 3],
    /// Direction of the first segment before spread/curl.
    direction: [f64; 3],
    segments: [f64; 3],
}

const FINGERS: [FingerGeometry; NUM_FINGERS] = [
    FingerGeometry {
        base: [-0.022, 0.025, 0.008],
        direction: [-0.62, 0.70, 0.35],
        segments: [0.044, 0.032, 0.027],
    },
    FingerGeometry {
        base: [-0.024, 0.090, 0.0],
        direction: [-0.10, 1.0, 0.0],
        segments: [0.045, 0.026, 0.022],
    },
    FingerGeometry {
        base: [-0.002, 0.095, 0.0],
        direction: [0.0, 1.0, 0.0],
        segments: [0.050, 0.030, 0.024],
    },
    FingerGeometry {
        base: [0.019, 0.089, 0.0],
        direction: [0.10, 1.0, 0.0],
        segments: [0.046, 0.028, 0.023],
    },
    FingerGeometry {
        base: [0.037, 0.079, 0.0],
        direction: [0.22, 1.0, 0.0],
        segments: [0.036, 0.021, 0.020],
    },
];

/// Per-subject anatomy and habits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectStyle {
    /// Global scale of palm and segment lengths.
    pub length_scale: f64,
    /// Habitual per-finger curl offset added to every grasp.
    pub curl_offset: [f64; NUM_FINGERS],
    /// Habitual per-finger spread offset.
    pub spread_offset: [f64; NUM_FINGERS],
}

impl Default for SubjectStyle {
    fn default() -> Self {
        Self {
            length_scale: 1.0,
            curl_offset: [0.0; NUM_FINGERS],
            spread_offset: [0.0; NUM_FINGERS],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandParams {
    pub wrist_position: [f64; 3],
    /// Axis-angle rotation of the hand frame.
    pub wrist_rotation: [f64; 3],
    pub curl: [f64; NUM_FINGERS],
    pub spread: [f64; NUM_FINGERS],
    pub style: SubjectStyle,
}

impl Default for HandParams {
    fn default() -> Self {
        Self {
            wrist_position: [0.0; 3],
            wrist_rotation: [0.0; 3],
            curl: [0.0; NUM_FINGERS],
            spread: [0.0; NUM_FINGERS],
            style: SubjectStyle::default(),
        }
    }
}

impl HandParams {
    pub fn validate(&self) -> Result<()> {
        for (i, &c) in self.curl.iter().enumerate() {
            if !(CURL_LIMITS.0..=CURL_LIMITS.1).contains(&c) {
                return Err(Error::JointLimit(format!("finger {i} curl {c}")));
            }
        }
        for (i, &s) in self.spread.iter().enumerate() {
            if !(SPREAD_LIMITS.0..=SPREAD_LIMITS.1).contains(&s) {
                return Err(Error::JointLimit(format!("finger {i} spread {s}")));
            }
        }
        if !(self.style.length_scale > 0.0) {
            return Err(Error::Invalid("hand length scale must be positive".into()));
        }
        Ok(())
    }

    /// Clamps curls and spreads into their limits.
    pub fn clamp_to_limits(&mut self) {
        for c in &mut self.curl {
            *c = c.clamp(CURL_LIMITS.0, CURL_LIMITS.1);
        }
        for s in &mut self.spread {
            *s = s.clamp(SPREAD_LIMITS.0, SPREAD_LIMITS.1);
        }
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        Rotation3::new(Vector3::from(self.wrist_rotation))
    }

    pub fn set_rotation(&mut self, r: &Rotation3<f64>) {
        self.wrist_rotation = axis_angle(r);
    }
}

/// Axis-angle vector of `r`. Goes through a quaternion because the
/// rotation-matrix log loses the axis at angle π.
pub fn axis_angle(r: &Rotation3<f64>) -> [f64; 3] {
    UnitQuaternion::from_rotation_matrix(r).scaled_axis().into()
}

fn rotate_about(v: Vector3<f64>, axis: Vector3<f64>, angle: f64) -> Vector3<f64> {
    match Unit::try_new(axis, 1e-12) {
        Some(a) => Rotation3::from_axis_angle(&a, angle) * v,
        None => v,
    }
}

/// Joint positions in the hand frame (no wrist pose applied), metres.
pub fn local_keypoints(hp: &HandParams) -> Keypoints {
    let s = hp.style.length_scale;
    let z = Vector3::z();
    let mut out = [[0.0; 3]; NUM_JOINTS];
    for (f, geo) in FINGERS.iter().enumerate() {
        let d0 = Vector3::from(geo.direction).normalize();
        let d0 = rotate_about(d0, z, -hp.spread[f]);
        // Bending axis: turns d0 toward the palm normal.
        let axis = d0.cross(&z);
        let mut p = Vector3::from(geo.base) * s;
        out[1 + 4 * f] = p.into();
        for k in 0..3 {
            let dir = rotate_about(d0, axis, hp.curl[f] * (k + 1) as f64);
            p += dir * geo.segments[k] * s;
            out[2 + 4 * f + k] = p.into();
        }
    }
    out
}

/// World-frame joint positions (metres).
pub fn forward_kinematics(hp: &HandParams) -> Result<Keypoints> {
    hp.validate()?;
    let r = hp.rotation();
    let t = Vector3::from(hp.wrist_position);
    let local = local_keypoints(hp);
    let mut out = [[0.0; 3]; NUM_JOINTS];
    for (o, p) in out.iter_mut().zip(local.iter()) {
        *o = (r * Vector3::from(*p) + t).into();
    }
    Ok(out)
}

/// Mean of the wrist and the four non-thumb finger bases.
pub fn palm_center(kp: &Keypoints) -> [f64; 3] {
    let idx = [0, 5, 9, 13, 17];
    let mut c = [0.0; 3];
    for &i in &idx {
        for a in 0..3 {
            c[a] += kp[i][a] / idx.len() as f64;
        }
    }
    c
}
