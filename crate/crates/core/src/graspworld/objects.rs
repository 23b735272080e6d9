//! Cuboid objects, their grasp prototypes, and the fingertip contact filter.

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::hand::{local_keypoints, HandParams, Keypoints, FINGERTIPS, NUM_FINGERS, SPREAD_LIMITS};
use crate::seed;

pub const EXTENT_RANGE: (f64, f64) = (0.01, 0.15);

/// Oriented cuboid: centre, rotation (box frame → world) and half-extents.
#[derive(Clone, Debug, PartialEq)]
pub struct Obb {
    pub center: Vector3<f64>,
    pub rotation: Rotation3<f64>,
    pub half_extents: [f64; 3],
}

impl Obb {
    pub fn axis_aligned(half_extents: [f64; 3]) -> Self {
        Self {
            center: Vector3::zeros(),
            rotation: Rotation3::identity(),
            half_extents,
        }
    }

    pub fn to_local(&self, p: [f64; 3]) -> Vector3<f64> {
        self.rotation.inverse() * (Vector3::from(p) - self.center)
    }

    /// Inclusive point-in-box test.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        let q = self.to_local(p);
        (0..3).all(|i| q[i].abs() <= self.half_extents[i])
    }

    /// `max_i(|q_i| − e_i)`: negative inside, zero on the surface.
    pub fn signed_distance(&self, p: [f64; 3]) -> f64 {
        let q = self.to_local(p);
        (0..3)
            .map(|i| q[i].abs() - self.half_extents[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// The eight corners, ordered by sign pattern `(±x, ±y, ±z)` with x
    /// varying slowest.
    pub fn corners(&self) -> [[f64; 3]; 8] {
        let e = self.half_extents;
        let mut out = [[0.0; 3]; 8];
        for (i, o) in out.iter_mut().enumerate() {
            let s = [
                if i & 4 == 0 { -1.0 } else { 1.0 },
                if i & 2 == 0 { -1.0 } else { 1.0 },
                if i & 1 == 0 { -1.0 } else { 1.0 },
            ];
            let local = Vector3::new(s[0] * e[0], s[1] * e[1], s[2] * e[2]);
            *o = (self.rotation * local + self.center).into();
        }
        out
    }
}

/// True iff at least two of the five fingertips lie in the box.
pub fn contact_filter(keypoints: &Keypoints, obb: &Obb) -> bool {
    FINGERTIPS.iter().filter(|&&t| obb.contains(keypoints[t])).count() >= 2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub object_id: usize,
    pub name: String,
    pub half_extents: [f64; 3],
    /// Canonical grasp; wrist pose expressed in the object frame.
    pub prototype: HandParams,
}

impl ObjectSpec {
    pub fn from_extents(object_id: usize, half_extents: [f64; 3]) -> Self {
        Self {
            object_id,
            name: format!("object_{object_id:02}"),
            half_extents,
            prototype: grasp_prototype(half_extents),
        }
    }

    pub fn obb(&self) -> Obb {
        Obb::axis_aligned(self.half_extents)
    }
}

/// Rotation taking hand axes to object axes: hand x → longest object axis,
/// hand y → middle, hand z (palm normal) → shortest, sign-fixed to det +1.
fn hand_to_object_axes(e: [f64; 3]) -> Matrix3<f64> {
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| e[b].total_cmp(&e[a]).then(a.cmp(&b)));
    let mut m = Matrix3::zeros();
    for (hand_axis, &obj_axis) in order.iter().enumerate() {
        m[(obj_axis, hand_axis)] = 1.0;
    }
    if m.determinant() < 0.0 {
        m.column_mut(2).neg_mut();
    }
    m
}

/// Grasp closing around a cuboid held against the palm. Spread widens with
/// the longest side; the object slides along the palm and each finger curls
/// to where its tip sits deepest inside the box.
pub fn grasp_prototype(half_extents: [f64; 3]) -> HandParams {
    let a = hand_to_object_axes(half_extents);
    // Extents along hand axes.
    let he: Vec<f64> = (0..3)
        .map(|h| {
            let obj = (0..3).find(|&o| a[(o, h)] != 0.0).expect("axis");
            half_extents[obj]
        })
        .collect();
    let fan = [0.5, -0.5, 0.0, 0.5, 1.0];
    let open = ((he[0] - 0.05) * 3.0).clamp(SPREAD_LIMITS.0, SPREAD_LIMITS.1);
    let mut hp = HandParams::default();
    for f in 0..NUM_FINGERS {
        hp.spread[f] = (fan[f] * open).clamp(SPREAD_LIMITS.0, SPREAD_LIMITS.1);
    }
    // Slide the object along the palm to where the fingers reach deepest.
    let mut best: Option<(f64, Vector3<f64>, [f64; NUM_FINGERS])> = None;
    for k in 0..=12 {
        let center = Vector3::new(0.0, 0.04 + 0.005 * k as f64, 0.012 + he[2]);
        let b = Obb {
            center,
            rotation: Rotation3::identity(),
            half_extents: [he[0], he[1], he[2]],
        };
        let (depths, curls) = deepest_curls(&mut hp, &b);
        let score: f64 = depths[1..].iter().sum();
        if best.as_ref().map_or(true, |(s, _, _)| score < s - 1e-12) {
            best = Some((score, center, curls));
        }
    }
    let (_, center_hand, curls) = best.expect("placement grid is non-empty");
    hp.curl = curls;

    // Object-frame wrist pose: p_obj = A (p_hand − c).
    let rot = Rotation3::from_matrix_unchecked(a);
    hp.set_rotation(&rot);
    hp.wrist_position = (a * (-center_hand)).into();
    hp
}

/// Per finger, the curl that puts the tip deepest inside `b` (hand frame),
/// with the depth reached.
fn deepest_curls(hp: &mut HandParams, b: &Obb) -> ([f64; NUM_FINGERS], [f64; NUM_FINGERS]) {
    const GRID: usize = 90;
    let mut depth = [f64::INFINITY; NUM_FINGERS];
    let mut curl = [0.0; NUM_FINGERS];
    for k in 0..=GRID {
        let c = std::f64::consts::FRAC_PI_2 * k as f64 / GRID as f64;
        hp.curl = [c; NUM_FINGERS];
        let kp = local_keypoints(hp);
        for f in 0..NUM_FINGERS {
            let d = b.signed_distance(kp[FINGERTIPS[f]]);
            if d < depth[f] - 1e-12 {
                depth[f] = d;
                curl[f] = c;
            }
        }
    }
    (depth, curl)
}

/// `n` objects with extents drawn log-uniformly from the allowed range.
pub fn generate_catalog(n_objects: usize, seed: u64) -> Vec<ObjectSpec> {
    let mut rng = seed::rng(seed, "catalog", 0);
    let (lo, hi) = (EXTENT_RANGE.0.ln(), EXTENT_RANGE.1.ln());
    (0..n_objects)
        .map(|i| {
            let e = [0, 1, 2].map(|_| rng.random_range(lo..=hi).exp());
            ObjectSpec::from_extents(i, e)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graspworld::hand::forward_kinematics;

    fn tips_at(points: [[f64; 3]; 5]) -> Keypoints {
        let mut kp = [[9.0; 3]; 21];
        for (i, &t) in FINGERTIPS.iter().enumerate() {
            kp[t] = points[i];
        }
        kp
    }

    fn rotated_box() -> Obb {
        Obb {
            center: Vector3::new(0.1, -0.2, 0.5),
            rotation: Rotation3::new(Vector3::new(0.3, -0.7, 0.2)),
            half_extents: [0.05, 0.02, 0.03],
        }
    }

    #[test]
    fn all_tips_at_center_pass() {
        let b = rotated_box();
        let c: [f64; 3] = b.center.into();
        assert!(contact_filter(&tips_at([c; 5]), &b));
    }

    #[test]
    fn all_tips_outside_fail() {
        let b = rotated_box();
        assert!(!contact_filter(&tips_at([[5.0, 5.0, 5.0]; 5]), &b));
    }

    #[test]
    fn two_tips_on_faces_pass() {
        let b = rotated_box();
        let face_x: [f64; 3] = (b.rotation * Vector3::new(0.05, 0.0, 0.0) + b.center).into();
        let face_z: [f64; 3] = (b.rotation * Vector3::new(0.01, 0.005, -0.03) + b.center).into();
        let out = [5.0, 5.0, 5.0];
        // Oracle: box-frame coordinates, compared against the extents.
        for p in [face_x, face_z] {
            let q = b.rotation.inverse() * (Vector3::from(p) - b.center);
            assert!(q.iter().zip(&b.half_extents).all(|(v, e)| v.abs() <= e + 1e-12));
        }
        let kp = tips_at([face_x, out, face_z, out, out]);
        let inside = FINGERTIPS.iter().filter(|&&t| b.contains(kp[t])).count();
        // Face points can land a rounding error outside; nudge inward if so.
        if inside < 2 {
            let shrink = |p: [f64; 3]| -> [f64; 3] {
                let c = b.center;
                [
                    c[0] + (p[0] - c[0]) * (1.0 - 1e-12),
                    c[1] + (p[1] - c[1]) * (1.0 - 1e-12),
                    c[2] + (p[2] - c[2]) * (1.0 - 1e-12),
                ]
            };
            let kp = tips_at([shrink(face_x), out, shrink(face_z), out, out]);
            assert!(contact_filter(&kp, &b));
        } else {
            assert!(contact_filter(&kp, &b));
        }
        let one = tips_at([face_x, out, out, out, out]);
        assert!(!contact_filter(&one, &b));
    }

    #[test]
    fn axis_aligned_faces_are_inclusive() {
        let b = Obb::axis_aligned([0.05, 0.02, 0.03]);
        let kp = tips_at([
            [0.05, 0.0, 0.0],
            [0.0, -0.02, 0.03],
            [1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
        ]);
        assert!(contact_filter(&kp, &b));
    }

    #[test]
    fn catalog_is_deterministic_and_in_range() {
        let a = generate_catalog(20, 5);
        assert_eq!(a, generate_catalog(20, 5));
        assert_ne!(a, generate_catalog(20, 6));
        for o in &a {
            for &e in &o.half_extents {
                assert!((EXTENT_RANGE.0..=EXTENT_RANGE.1).contains(&e));
            }
            o.prototype.validate().unwrap();
        }
    }

    #[test]
    fn prototypes_touch_their_object() {
        let catalog = generate_catalog(20, 11);
        let ok = catalog
            .iter()
            .filter(|o| contact_filter(&forward_kinematics(&o.prototype).unwrap(), &o.obb()))
            .count();
        assert!(ok >= 18, "{ok}/20 prototypes in contact");
    }

    #[test]
    fn corners_are_on_the_box() {
        let b = rotated_box();
        for c in b.corners() {
            assert!(b.signed_distance(c).abs() < 1e-12);
        }
    }
}
