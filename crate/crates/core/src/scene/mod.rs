//! Gaussian scene representation.
//!
//! Each primitive stores its covariance factored as a log-scale vector and a
//! rotation quaternion, `Σ = R·S·Sᵀ·Rᵀ`. Opacity and specular weight are kept
//! as logits so unconstrained updates cannot leave `(0, 1)`.

mod sh;

pub use sh::{eval_sh, sh_basis, sh_basis_grad, zero_coeffs, ShCoeffs, SH_C0, SH_COEFFS, SH_DEGREE};
pub(crate) use sh::{eval_sh_backward, eval_sh_unchecked};

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Lower bound on every per-axis standard deviation.
pub const SCALE_FLOOR: f64 = 1e-7;

/// Two scale axes closer than this are considered tied when picking a normal.
pub const NORMAL_TIE_EPS: f64 = 1e-9;

/// Quaternion stored as `(w, x, y, z)`.
pub type Quat = [f64; 4];

pub const IDENTITY_QUAT: Quat = [1.0, 0.0, 0.0, 0.0];

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian3D {
    pub position: Vector3<f64>,
    pub log_scale: Vector3<f64>,
    pub rotation: Quat,
    pub opacity_logit: f64,
    pub sh_diffuse: ShCoeffs,
    pub sh_specular: ShCoeffs,
    pub specular_logit: f64,
    /// Visibility `V` of the incident light model, in `[0, 1]`.
    pub visibility: f64,
    /// Non-negative local radiance.
    pub local_light: Vector3<f64>,
}

impl Gaussian3D {
    /// Isotropic, axis-aligned Gaussian with mid-gray diffuse color and
    /// default lighting (`V = 1`, no local light).
    pub fn isotropic(position: Vector3<f64>, scale: f64, opacity: f64) -> Self {
        Self {
            position,
            log_scale: Vector3::repeat(scale.ln()),
            rotation: IDENTITY_QUAT,
            opacity_logit: logit(opacity),
            sh_diffuse: zero_coeffs(),
            sh_specular: zero_coeffs(),
            specular_logit: logit(0.1),
            visibility: 1.0,
            local_light: Vector3::zeros(),
        }
    }

    /// Per-axis standard deviations, floored at [`SCALE_FLOOR`].
    pub fn scales(&self) -> Vector3<f64> {
        self.log_scale.map(|s| s.exp().max(SCALE_FLOOR))
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn specular_weight(&self) -> f64 {
        sigmoid(self.specular_logit)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        quat_to_matrix(&self.rotation)
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        build_covariance(&self.log_scale, &self.rotation)
    }

    /// Sets the diffuse degree-0 coefficients so the offset-shaded color is `rgb`.
    pub fn set_base_color(&mut self, rgb: Vector3<f64>) {
        for ch in 0..3 {
            self.sh_diffuse[0][ch] = (rgb[ch] - 0.5) / SH_C0;
        }
    }
}

/// Axis-aligned box in world units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianCloud {
    pub gaussians: Vec<Gaussian3D>,
    /// Scene-wide radiance `L_global` of the incident light model.
    pub global_light: Vector3<f64>,
}

impl Default for GaussianCloud {
    fn default() -> Self {
        Self::new(Vec::new())
    }
}

impl GaussianCloud {
    pub fn new(gaussians: Vec<Gaussian3D>) -> Self {
        Self {
            gaussians,
            global_light: Vector3::repeat(1.0),
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    /// Bounding box of all positions, `None` for an empty cloud.
    pub fn bbox(&self) -> Option<Aabb> {
        let first = self.gaussians.first()?.position;
        let mut bb = Aabb { min: first, max: first };
        for g in &self.gaussians[1..] {
            bb.min = bb.min.inf(&g.position);
            bb.max = bb.max.sup(&g.position);
        }
        Some(bb)
    }
}

/// Rotation matrix of the normalized quaternion.
pub fn quat_to_matrix(q: &Quat) -> Matrix3<f64> {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Pulls a gradient on the rotation matrix back to the raw (unnormalized)
/// quaternion, including the normalization step.
pub(crate) fn quat_to_matrix_backward(q: &Quat, d_r: &Matrix3<f64>) -> Quat {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    let dw = Matrix3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0) * 2.0;
    let dx = Matrix3::new(0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x) * 2.0;
    let dy = Matrix3::new(-2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y) * 2.0;
    let dz = Matrix3::new(-2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0) * 2.0;
    let g = [d_r.dot(&dw), d_r.dot(&dx), d_r.dot(&dy), d_r.dot(&dz)];
    let unit = [w, x, y, z];
    let radial: f64 = (0..4).map(|i| g[i] * unit[i]).sum();
    [
        (g[0] - unit[0] * radial) / n,
        (g[1] - unit[1] * radial) / n,
        (g[2] - unit[2] * radial) / n,
        (g[3] - unit[3] * radial) / n,
    ]
}

pub fn normalize_quat(q: &mut Quat) {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if n > 0.0 && n.is_finite() {
        q.iter_mut().for_each(|c| *c /= n);
    } else {
        *q = IDENTITY_QUAT;
    }
}

/// `Σ = R·S·Sᵀ·Rᵀ` with `S = diag(max(exp(log_scale), SCALE_FLOOR))`.
pub fn build_covariance(log_scale: &Vector3<f64>, rotation: &Quat) -> Matrix3<f64> {
    let r = quat_to_matrix(rotation);
    let s2 = log_scale.map(|s| {
        let s = s.exp().max(SCALE_FLOOR);
        s * s
    });
    let m = r * Matrix3::from_diagonal(&s2) * r.transpose();
    // exact symmetry
    (m + m.transpose()) * 0.5
}

/// Inverse covariance `R·S⁻²·Rᵀ`, or an error when a scale is not a finite
/// positive number.
pub fn inverse_covariance(g: &Gaussian3D) -> Result<Matrix3<f64>> {
    if !g.log_scale.iter().all(|v| v.is_finite()) {
        return Err(Error::DegenerateGaussian);
    }
    let s = g.scales();
    let inv = s.map(|v| 1.0 / (v * v));
    if !inv.iter().all(|v| v.is_finite() && *v > 0.0) {
        return Err(Error::DegenerateGaussian);
    }
    let r = g.rotation_matrix();
    Ok(r * Matrix3::from_diagonal(&inv) * r.transpose())
}

/// Unnormalized Gaussian kernel `exp(-½ (x−μ)ᵀ Σ⁻¹ (x−μ))`.
pub fn gaussian_density(g: &Gaussian3D, x: &Vector3<f64>) -> Result<f64> {
    let inv = inverse_covariance(g)?;
    let d = x - g.position;
    Ok((-0.5 * d.dot(&(inv * d))).exp())
}

/// Index of the smallest scale axis; ties go to the lower index.
pub fn shortest_axis(g: &Gaussian3D) -> usize {
    let s = g.scales();
    let mut best = 0;
    for i in 1..3 {
        if s[i] < s[best] - NORMAL_TIE_EPS {
            best = i;
        }
    }
    best
}

/// Surface normal of a Gaussian: its shortest principal axis, oriented
/// toward `view_pos`.
pub fn estimate_normal(g: &Gaussian3D, view_pos: &Vector3<f64>) -> Vector3<f64> {
    normal_with_sign(g, view_pos).0
}

/// Normal plus the sign applied to the rotation column and the axis index.
pub(crate) fn normal_with_sign(g: &Gaussian3D, view_pos: &Vector3<f64>) -> (Vector3<f64>, f64, usize) {
    let axis = shortest_axis(g);
    let col: Vector3<f64> = g.rotation_matrix().column(axis).into();
    let sign = if col.dot(&(view_pos - g.position)) < 0.0 { -1.0 } else { 1.0 };
    (col * sign, sign, axis)
}
