//! Pinhole cameras with pixel noise and occlusion dropout.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;

pub const IMAGE_WIDTH: f64 = 640.0;
pub const IMAGE_HEIGHT: f64 = 480.0;
/// Value written in place of both coordinates of a masked point.
pub const SENTINEL: f64 = -1.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    /// World → camera rotation; the camera looks along its +z.
    pub rotation: Rotation3<f64>,
    /// Camera-frame translation: `p_cam = R p_world + t`.
    pub translation: Vector3<f64>,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Camera {
    /// Camera at `eye` looking at `target`, with `up` fixing the roll.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>, f: f64) -> Result<Self> {
        let z = Unit::try_new(target - eye, 1e-12)
            .ok_or_else(|| Error::Invalid("camera eye coincides with target".into()))?;
        let x = Unit::try_new(z.cross(&up), 1e-9)
            .ok_or_else(|| Error::Invalid("camera up vector parallel to view".into()))?;
        let y = z.cross(&x);
        let rows = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let rotation = Rotation3::from_matrix_unchecked(rows);
        Ok(Self {
            translation: -(rotation * eye),
            rotation,
            fx: f,
            fy: f,
            cx: IMAGE_WIDTH / 2.0,
            cy: IMAGE_HEIGHT / 2.0,
        })
    }

    /// Random viewpoint 0.45–0.75 m from `target`, looking roughly at it.
    pub fn random_around(target: Vector3<f64>, rng: &mut Rng) -> Self {
        loop {
            let dir = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let n = dir.norm();
            if !(0.1..=1.0).contains(&n) {
                continue;
            }
            let dist = rng.random_range(0.45..0.75);
            let aim = target + Vector3::new(
                rng.random_range(-0.02..0.02),
                rng.random_range(-0.02..0.02),
                rng.random_range(-0.02..0.02),
            );
            let up = Vector3::new(
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
                1.0,
            );
            let f = rng.random_range(550.0..650.0);
            if let Ok(mut cam) = Camera::look_at(target + dir / n * dist, aim, up, f) {
                cam.cx += rng.random_range(-10.0..10.0);
                cam.cy += rng.random_range(-10.0..10.0);
                return cam;
            }
        }
    }

    pub fn to_camera(&self, p: [f64; 3]) -> Vector3<f64> {
        self.rotation * Vector3::from(p) + self.translation
    }

    /// Exact pinhole projection of a camera-frame point.
    pub fn pixel(&self, pc: Vector3<f64>) -> Result<[f64; 2]> {
        if !(pc.z > 0.0) {
            return Err(Error::BehindCamera(pc.z));
        }
        Ok([self.fx * pc.x / pc.z + self.cx, self.fy * pc.y / pc.z + self.cy])
    }

    /// Three-number intrinsics summary appended to every feature vector.
    pub fn intrinsics_summary(&self) -> [f64; 3] {
        [self.fx / 1000.0, self.cx / IMAGE_WIDTH, self.cy / IMAGE_HEIGHT]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionNoise {
    pub sigma_px: f64,
    pub dropout: f64,
}

impl Default for ProjectionNoise {
    fn default() -> Self {
        Self {
            sigma_px: 2.0,
            dropout: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    /// Pixel coordinates, `[SENTINEL; 2]` where masked.
    pub pixels: Vec<[f64; 2]>,
    pub valid: Vec<bool>,
}

impl Projection {
    /// Flattened `(u/W, v/H)` pairs; masked points stay at the sentinel.
    pub fn features(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.pixels.len());
        for (p, &ok) in self.pixels.iter().zip(&self.valid) {
            if ok {
                out.extend([p[0] / IMAGE_WIDTH, p[1] / IMAGE_HEIGHT]);
            } else {
                out.extend([SENTINEL, SENTINEL]);
            }
        }
        out
    }
}

/// Projects world points, adding Gaussian pixel noise and masking each point
/// independently with probability `dropout`.
pub fn project(camera: &Camera, points: &[[f64; 3]], noise: &ProjectionNoise, rng: &mut Rng) -> Result<Projection> {
    if !(noise.sigma_px >= 0.0) || !(0.0..=1.0).contains(&noise.dropout) {
        return Err(Error::Invalid(format!("bad projection noise {noise:?}")));
    }
    let normal = Normal::new(0.0, noise.sigma_px).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut pixels = Vec::with_capacity(points.len());
    let mut valid = Vec::with_capacity(points.len());
    for &p in points {
        let mut px = camera.pixel(camera.to_camera(p))?;
        if noise.sigma_px > 0.0 {
            px[0] += normal.sample(rng);
            px[1] += normal.sample(rng);
        }
        let keep = !(noise.dropout > 0.0 && rng.random::<f64>() < noise.dropout);
        pixels.push(if keep { px } else { [SENTINEL; 2] });
        valid.push(keep);
    }
    Ok(Projection { pixels, valid })
}
