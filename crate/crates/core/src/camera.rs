//! Pinhole camera and EWA projection of 3D Gaussians to screen-space splats.
//!
//! Camera space follows the x-right, y-down, z-forward convention; pixel
//! `(i, j)` has its center at `(i + 0.5, j + 0.5)`.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::scene::{quat_to_matrix_backward, Gaussian3D, GaussianCloud};

/// Low-pass dilation added to both diagonal entries of the 2D covariance, px².
pub const COV2D_DILATION: f64 = 0.3;

/// Guard band for culling, as a multiple of the image half-diagonal.
pub const GUARD_BAND: f64 = 1.3;

const ORTHONORMAL_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    /// Rotation part of the world-to-camera transform.
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        focal: (f64, f64),
        principal: (f64, f64),
        resolution: (usize, usize),
        near: f64,
        far: f64,
    ) -> Result<Self> {
        let cam = Self {
            rotation,
            translation,
            fx: focal.0,
            fy: focal.1,
            cx: principal.0,
            cy: principal.1,
            width: resolution.0,
            height: resolution.1,
            near,
            far,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`, principal point at the image center.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        resolution: (usize, usize),
        focal: f64,
    ) -> Result<Self> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 {
            return Err(Error::Config("look_at: up is parallel to the view direction".into()));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        Self::new(
            rotation,
            translation,
            (focal, focal),
            (resolution.0 as f64 / 2.0, resolution.1 as f64 / 2.0),
            resolution,
            0.01,
            100.0,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let dev = orthonormal_deviation(&self.rotation);
        if !(dev <= ORTHONORMAL_TOLERANCE) {
            return Err(Error::NonOrthonormalRotation(dev));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(Error::Config(format!("camera needs 0 < near < far, got {} / {}", self.near, self.far)));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Config("camera focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("camera resolution must be non-zero".into()));
        }
        Ok(())
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Pixel coordinates of a camera-space point.
    pub fn project_point(&self, p_cam: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(
            self.fx * p_cam.x / p_cam.z + self.cx,
            self.fy * p_cam.y / p_cam.z + self.cy,
        )
    }

    fn guard_band_contains(&self, mean2d: &Vector2<f64>) -> bool {
        let (w, h) = (self.width as f64, self.height as f64);
        let half_diag = 0.5 * (w * w + h * h).sqrt();
        (mean2d - Vector2::new(w / 2.0, h / 2.0)).norm() <= GUARD_BAND * half_diag
    }
}

/// Largest entry of `|RᵀR − I|`.
pub fn orthonormal_deviation(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).amax()
}

/// A Gaussian projected to the image plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Splat2D {
    pub mean2d: Vector2<f64>,
    /// Screen covariance in px², dilation included.
    pub cov2d: Matrix2<f64>,
    pub depth: f64,
    pub color: Vector3<f64>,
    pub opacity: f64,
    pub source_index: usize,
}

impl Splat2D {
    /// Inverse of `cov2d`; `None` if it is singular.
    pub fn conic(&self) -> Option<Matrix2<f64>> {
        let (a, b, c) = (self.cov2d[(0, 0)], self.cov2d[(0, 1)], self.cov2d[(1, 1)]);
        let det = a * c - b * b;
        if !(det > 0.0) {
            return None;
        }
        let inv = 1.0 / det;
        Some(Matrix2::new(c * inv, -b * inv, -b * inv, a * inv))
    }

    /// Largest eigenvalue of `cov2d`.
    pub fn max_eigenvalue(&self) -> f64 {
        let (a, b, c) = (self.cov2d[(0, 0)], self.cov2d[(0, 1)], self.cov2d[(1, 1)]);
        let mid = 0.5 * (a + c);
        let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        mid + disc
    }
}

pub fn world_to_camera(cam: &Camera, p: &Vector3<f64>) -> Vector3<f64> {
    cam.rotation * p + cam.translation
}

/// Jacobian of the pinhole projection at a camera-space point, or `None`
/// when the point is in front of the near plane (culled).
pub fn projection_jacobian(cam: &Camera, p_cam: &Vector3<f64>) -> Option<Matrix2x3<f64>> {
    if !(p_cam.z >= cam.near) {
        return None;
    }
    Some(jacobian_unchecked(cam, p_cam))
}

fn jacobian_unchecked(cam: &Camera, p: &Vector3<f64>) -> Matrix2x3<f64> {
    let iz = 1.0 / p.z;
    let iz2 = iz * iz;
    Matrix2x3::new(
        cam.fx * iz,
        0.0,
        -cam.fx * p.x * iz2,
        0.0,
        cam.fy * iz,
        -cam.fy * p.y * iz2,
    )
}

/// Intermediates of one projection, kept for the backward pass.
#[derive(Clone, Debug)]
pub(crate) struct ProjectionCache {
    pub p_cam: Vector3<f64>,
    pub jacobian: Matrix2x3<f64>,
    /// `R_w Σ R_wᵀ`.
    pub cov_cam: Matrix3<f64>,
}

pub(crate) fn project_cached(
    cam: &Camera,
    g: &Gaussian3D,
    index: usize,
    shaded_color: Vector3<f64>,
) -> Option<(Splat2D, ProjectionCache)> {
    let p_cam = world_to_camera(cam, &g.position);
    if !(p_cam.z > cam.near && p_cam.z < cam.far) {
        return None;
    }
    let mean2d = cam.project_point(&p_cam);
    if !cam.guard_band_contains(&mean2d) {
        return None;
    }
    let jacobian = jacobian_unchecked(cam, &p_cam);
    let cov_cam = cam.rotation * g.covariance() * cam.rotation.transpose();
    let mut cov2d = jacobian * cov_cam * jacobian.transpose();
    cov2d = (cov2d + cov2d.transpose()) * 0.5;
    cov2d[(0, 0)] += COV2D_DILATION;
    cov2d[(1, 1)] += COV2D_DILATION;
    let splat = Splat2D {
        mean2d,
        cov2d,
        depth: p_cam.z,
        color: shaded_color,
        opacity: g.opacity(),
        source_index: index,
    };
    Some((splat, ProjectionCache { p_cam, jacobian, cov_cam }))
}

/// Projects a Gaussian to a splat, or `None` when it is culled.
pub fn project_gaussian(cam: &Camera, g: &Gaussian3D, index: usize, shaded_color: Vector3<f64>) -> Option<Splat2D> {
    project_cached(cam, g, index, shaded_color).map(|(s, _)| s)
}

/// Indices of Gaussians that survive projection, in cloud order.
pub fn frustum_cull(cam: &Camera, cloud: &GaussianCloud) -> Vec<usize> {
    cloud
        .gaussians
        .iter()
        .enumerate()
        .filter(|(i, g)| project_gaussian(cam, g, *i, Vector3::zeros()).is_some())
        .map(|(i, _)| i)
        .collect()
}

/// Gradients of the projection with respect to Gaussian geometry.
#[derive(Clone, Debug, Default)]
pub(crate) struct ProjectionGrad {
    pub position: Vector3<f64>,
    pub log_scale: Vector3<f64>,
    /// Gradient on the (normalized) rotation matrix; the caller folds in
    /// shading contributions before pulling back to the quaternion.
    pub rotation_matrix: Matrix3<f64>,
}

/// Backward of `project_cached` given `∂L/∂mean2d` and a symmetric-form
/// `∂L/∂cov2d` (full-matrix gradient).
pub(crate) fn project_backward(
    cam: &Camera,
    g: &Gaussian3D,
    cache: &ProjectionCache,
    d_mean2d: &Vector2<f64>,
    d_cov2d: &Matrix2<f64>,
) -> ProjectionGrad {
    let p = &cache.p_cam;
    let j = &cache.jacobian;
    // symmetrize so the matrix-calculus identities below hold
    let gsym = (d_cov2d + d_cov2d.transpose()) * 0.5;

    // cov2d = J M Jᵀ
    let d_j: Matrix2x3<f64> = gsym * j * cache.cov_cam * 2.0;
    let d_m: Matrix3<f64> = j.transpose() * gsym * j;

    // mean2d = (fx x/z + cx, fy y/z + cy)
    let mut d_pcam = j.transpose() * d_mean2d;
    let iz = 1.0 / p.z;
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    d_pcam.z += d_j[(0, 0)] * (-cam.fx * iz2)
        + d_j[(0, 2)] * (2.0 * cam.fx * p.x * iz3)
        + d_j[(1, 1)] * (-cam.fy * iz2)
        + d_j[(1, 2)] * (2.0 * cam.fy * p.y * iz3);
    d_pcam.x += d_j[(0, 2)] * (-cam.fx * iz2);
    d_pcam.y += d_j[(1, 2)] * (-cam.fy * iz2);

    let position = cam.rotation.transpose() * d_pcam;

    // M = W Σ Wᵀ, Σ = R diag(s²) Rᵀ
    let d_sigma = cam.rotation.transpose() * d_m * cam.rotation;
    let r = g.rotation_matrix();
    let s = g.scales();
    let s2 = s.component_mul(&s);
    let rt_g_r = r.transpose() * d_sigma * r;
    let mut log_scale = Vector3::zeros();
    for k in 0..3 {
        // floored axes are constant
        if g.log_scale[k].exp() > crate::scene::SCALE_FLOOR {
            log_scale[k] = rt_g_r[(k, k)] * 2.0 * s2[k];
        }
    }
    let rotation_matrix = d_sigma * r * Matrix3::from_diagonal(&s2) * 2.0;

    ProjectionGrad { position, log_scale, rotation_matrix }
}

/// Convenience for callers that only need the quaternion gradient of a
/// rotation-matrix gradient.
pub(crate) fn rotation_grad_to_quat(g: &Gaussian3D, d_r: &Matrix3<f64>) -> [f64; 4] {
    quat_to_matrix_backward(&g.rotation, d_r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix4, Vector4};

    fn identity_cam(f: f64, res: usize) -> Camera {
        Camera::new(
            Matrix3::identity(),
            Vector3::zeros(),
            (f, f),
            (res as f64 / 2.0, res as f64 / 2.0),
            (res, res),
            0.01,
            100.0,
        )
        .unwrap()
    }

    fn rotation_from_axis_angle(axis: Vector3<f64>, angle: f64) -> Matrix3<f64> {
        nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).into_inner()
    }

    #[test]
    fn world_to_camera_examples() {
        let cam = identity_cam(1.0, 8);
        assert_eq!(world_to_camera(&cam, &Vector3::new(1.0, 2.0, 3.0)), Vector3::new(1.0, 2.0, 3.0));
        let mut cam2 = cam.clone();
        cam2.translation = Vector3::new(0.0, 0.0, 5.0);
        assert_eq!(world_to_camera(&cam2, &Vector3::zeros()), Vector3::new(0.0, 0.0, 5.0));
    }

    #[test]
    fn world_to_camera_matches_homogeneous_matrix() {
        let mut cam = identity_cam(1.0, 8);
        cam.rotation = rotation_from_axis_angle(Vector3::new(0.3, -1.0, 0.5), 0.9);
        cam.translation = Vector3::new(0.4, -2.0, 3.5);
        let mut h = Matrix4::identity();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(&cam.rotation);
        h.fixed_view_mut::<3, 1>(0, 3).copy_from(&cam.translation);
        for p in [Vector3::new(1.0, 2.0, 3.0), Vector3::new(-0.5, 0.1, 7.0)] {
            let hp = h * Vector4::new(p.x, p.y, p.z, 1.0);
            let got = world_to_camera(&cam, &p);
            assert!((got - hp.xyz()).norm() < 1e-12);
        }
    }

    #[test]
    fn jacobian_examples() {
        let cam = identity_cam(1.0, 8);
        let j = projection_jacobian(&cam, &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(j, Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0));

        let p = Vector3::new(1.0, 0.0, 2.0);
        let j = projection_jacobian(&cam, &p).unwrap();
        let expected = Matrix2x3::new(0.5, 0.0, -0.25, 0.0, 0.5, 0.0);
        assert!((j - expected).amax() < 1e-15);
        let h = 1e-5;
        for k in 0..3 {
            let mut pp = p;
            let mut pm = p;
            pp[k] += h;
            pm[k] -= h;
            let fd = (cam.project_point(&pp) - cam.project_point(&pm)) / (2.0 * h);
            assert!((fd - j.column(k)).amax() < 1e-9);
        }

        let p = Vector3::new(0.7, -0.4, 1.5);
        let j1 = projection_jacobian(&cam, &p).unwrap();
        let j2 = projection_jacobian(&cam, &Vector3::new(p.x, p.y, 2.0 * p.z)).unwrap();
        assert!((j2[(0, 2)] - j1[(0, 2)] / 4.0).abs() < 1e-15);
        assert!((j2[(1, 2)] - j1[(1, 2)] / 4.0).abs() < 1e-15);

        assert!(projection_jacobian(&cam, &Vector3::new(0.0, 0.0, 0.001)).is_none());
    }

    #[test]
    fn projected_unit_gaussian_on_axis() {
        let cam = identity_cam(100.0, 64);
        let g = Gaussian3D::isotropic(Vector3::new(0.0, 0.0, 1.0), 1.0, 0.5);
        let s = project_gaussian(&cam, &g, 0, Vector3::zeros()).unwrap();
        // J = diag(100, 100) on axis at unit depth, so J Σ Jᵀ = 1e4 I
        assert!((s.cov2d - Matrix2::new(10000.3, 0.0, 0.0, 10000.3)).amax() < 1e-9);
        assert_eq!(s.mean2d, Vector2::new(32.0, 32.0));
        assert!((s.opacity - 0.5).abs() < 1e-15);
    }

    #[test]
    fn culls_behind_camera_and_outside_guard_band() {
        let cam = identity_cam(50.0, 64);
        let behind = Gaussian3D::isotropic(Vector3::new(0.0, 0.0, -1.0), 0.1, 0.5);
        assert!(project_gaussian(&cam, &behind, 0, Vector3::zeros()).is_none());
        let far_side = Gaussian3D::isotropic(Vector3::new(10.0, 0.0, 1.0), 0.1, 0.5);
        assert!(project_gaussian(&cam, &far_side, 0, Vector3::zeros()).is_none());
        let beyond_far = Gaussian3D::isotropic(Vector3::new(0.0, 0.0, 200.0), 0.1, 0.5);
        assert!(project_gaussian(&cam, &beyond_far, 0, Vector3::zeros()).is_none());
    }

    #[test]
    fn frustum_cull_examples() {
        let cam = identity_cam(50.0, 64);
        assert!(frustum_cull(&cam, &GaussianCloud::default()).is_empty());
        let behind = GaussianCloud::new(
            (0..5).map(|i| Gaussian3D::isotropic(Vector3::new(0.1 * i as f64, 0.0, -1.0), 0.1, 0.5)).collect(),
        );
        assert!(frustum_cull(&cam, &behind).is_empty());
        let mixed = GaussianCloud::new(vec![
            Gaussian3D::isotropic(Vector3::new(0.0, 0.0, 2.0), 0.1, 0.5),
            Gaussian3D::isotropic(Vector3::new(0.0, 0.0, -2.0), 0.1, 0.5),
            Gaussian3D::isotropic(Vector3::new(0.3, -0.2, 4.0), 0.1, 0.5),
            Gaussian3D::isotropic(Vector3::new(30.0, 0.0, 1.0), 0.1, 0.5),
        ]);
        let brute: Vec<usize> = (0..mixed.len())
            .filter(|&i| project_gaussian(&cam, &mixed.gaussians[i], i, Vector3::zeros()).is_some())
            .collect();
        assert_eq!(frustum_cull(&cam, &mixed), brute);
        assert_eq!(brute, vec![0, 2]);
    }

    #[test]
    fn mean2d_first_order_consistency() {
        let mut cam = identity_cam(60.0, 64);
        cam.rotation = rotation_from_axis_angle(Vector3::new(0.2, 1.0, -0.3), 0.4);
        cam.translation = Vector3::new(0.1, 0.2, 4.0);
        let g = Gaussian3D::isotropic(Vector3::new(0.3, -0.2, 0.5), 0.2, 0.5);
        let s0 = project_gaussian(&cam, &g, 0, Vector3::zeros()).unwrap();
        let p_cam = world_to_camera(&cam, &g.position);
        let j = projection_jacobian(&cam, &p_cam).unwrap();
        for delta in [Vector3::new(1e-4, 0.0, 0.0), Vector3::new(0.0, -1e-4, 0.0), Vector3::new(3e-5, 5e-5, -6e-5)] {
            let mut moved = g.clone();
            moved.position += delta;
            let s1 = project_gaussian(&cam, &moved, 0, Vector3::zeros()).unwrap();
            let predicted = j * (cam.rotation * delta);
            // second-order remainder, scaled by the focal length
            assert!(((s1.mean2d - s0.mean2d) - predicted).norm() < 60.0 * 1e-7);
        }
    }

    #[test]
    fn cov2d_is_symmetric_with_dilation_floor() {
        let mut cam = identity_cam(40.0, 64);
        cam.rotation = rotation_from_axis_angle(Vector3::new(1.0, 1.0, 0.0), 0.3);
        let mut g = Gaussian3D::isotropic(Vector3::new(0.1, 0.1, 3.0), 0.001, 0.5);
        g.log_scale = Vector3::new(-9.0, -3.0, -12.0);
        g.rotation = [0.6, 0.2, 0.7, -0.1];
        let s = project_gaussian(&cam, &g, 0, Vector3::zeros()).unwrap();
        assert!((s.cov2d[(0, 1)] - s.cov2d[(1, 0)]).abs() <= 1e-12);
        let eig = s.cov2d.symmetric_eigenvalues();
        assert!(eig.min() >= COV2D_DILATION - 1e-12);
    }

    #[test]
    fn rejects_bad_cameras() {
        let r = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(
            Camera::new(r, Vector3::zeros(), (1.0, 1.0), (0.0, 0.0), (4, 4), 0.1, 1.0),
            Err(Error::NonOrthonormalRotation(_))
        ));
        assert!(Camera::new(Matrix3::identity(), Vector3::zeros(), (1.0, 1.0), (0.0, 0.0), (4, 4), 1.0, 0.5).is_err());
        assert!(Camera::new(Matrix3::identity(), Vector3::zeros(), (0.0, 1.0), (0.0, 0.0), (4, 4), 0.1, 1.0).is_err());
    }

    #[test]
    fn look_at_centers_target() {
        let cam = Camera::look_at(
            Vector3::new(3.0, -2.0, 4.0),
            Vector3::new(0.1, 0.2, 0.0),
            Vector3::z(),
            (64, 48),
            50.0,
        )
        .unwrap();
        let p = world_to_camera(&cam, &Vector3::new(0.1, 0.2, 0.0));
        let px = cam.project_point(&p);
        assert!((px - Vector2::new(32.0, 24.0)).norm() < 1e-9);
        assert!((cam.center() - Vector3::new(3.0, -2.0, 4.0)).norm() < 1e-12);
    }
}
