//! Pose error metrics in millimetres.

use crate::error::{Error, Result};

pub const HAND_JOINTS: usize = 21;
pub const CUBOID_CORNERS: usize = 8;

fn mean_point_error(pred: &[f64], target: &[f64], points: usize, op: &'static str) -> Result<f64> {
    if pred.len() != points * 3 || target.len() != points * 3 {
        return Err(Error::ShapeMismatch {
            op,
            lhs: vec![pred.len()],
            rhs: vec![target.len()],
        });
    }
    let total: f64 = pred
        .chunks_exact(3)
        .zip(target.chunks_exact(3))
        .map(|(p, t)| {
            let d = [p[0] - t[0], p[1] - t[1], p[2] - t[2]];
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
        })
        .sum();
    Ok(total / points as f64)
}

/// Mean per-joint position error over the 21 hand joints (flattened xyz).
pub fn mpjpe(pred: &[f64], target: &[f64]) -> Result<f64> {
    mean_point_error(pred, target, HAND_JOINTS, "mpjpe")
}

/// Mean per-corner position error over the 8 cuboid corners.
pub fn mpcpe(pred: &[f64], target: &[f64]) -> Result<f64> {
    mean_point_error(pred, target, CUBOID_CORNERS, "mpcpe")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand(v: f64) -> Vec<f64> {
        vec![v; 63]
    }

    #[test]
    fn identical_is_zero() {
        assert_eq!(mpjpe(&hand(1.0), &hand(1.0)).unwrap(), 0.0);
        assert_eq!(mpcpe(&[2.0; 24], &[2.0; 24]).unwrap(), 0.0);
    }

    #[test]
    fn single_joint_offset() {
        let t = hand(0.0);
        let mut p = t.clone();
        p[3] = 3.0;
        p[4] = 4.0;
        assert!((mpjpe(&p, &t).unwrap() - 5.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn rigid_offset_gives_its_norm() {
        let t: Vec<f64> = (0..63).map(|i| i as f64 * 0.37).collect();
        let off = [1.0, -2.0, 2.0];
        let p: Vec<f64> = t.iter().enumerate().map(|(i, v)| v + off[i % 3]).collect();
        assert!((mpjpe(&p, &t).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn corner_cases() {
        let t = [0.0; 24];
        let mut p = [0.0; 24];
        for c in 0..8 {
            p[3 * c] = 1.0;
        }
        assert!((mpcpe(&p, &t).unwrap() - 1.0).abs() < 1e-15);
        let mut q = [0.0; 24];
        q[5] = 2.0;
        assert_eq!(mpcpe(&q, &t).unwrap(), 0.25);
    }

    #[test]
    fn shape_mismatch() {
        assert!(mpjpe(&[0.0; 60], &[0.0; 63]).is_err());
    }
}
