//! Deterministic synthetic scenes with ground-truth views.
//!
//! Each scene holds a generator cloud, the views it renders with the
//! brute-force reference renderer, and a perturbed copy of the generator used
//! as the starting point for training.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::raster::{render_reference, Image};
use crate::scene::{logit, sh_basis, zero_coeffs, Gaussian3D, GaussianCloud, Quat};
use crate::shading::{ShadingConfig, ShadingMode};

pub const VIEW_COUNT: usize = 8;
pub const VIEW_SIZE: usize = 64;
pub const SHELL_RADIUS: f64 = 1.0;
const SHELL_COUNT: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SceneKind {
    /// Flattened Gaussians tiling a sphere.
    Shell,
    /// Lattice of colored blobs.
    Grid,
    /// Glossy plane under a directional light.
    MirrorLit,
}

impl FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "shell" => Ok(Self::Shell),
            "grid" => Ok(Self::Grid),
            "mirror_lit" | "mirror" => Ok(Self::MirrorLit),
            other => Err(Error::Config(format!(
                "unknown scene `{other}` (expected shell, grid or mirror_lit)"
            ))),
        }
    }
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Shell => "shell",
            Self::Grid => "grid",
            Self::MirrorLit => "mirror_lit",
        })
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub kind: SceneKind,
    /// Cloud the ground truth was rendered from.
    pub generator: GaussianCloud,
    /// Perturbed generator to start training from.
    pub init: GaussianCloud,
    pub views: Vec<(Camera, Image)>,
    pub shading: ShadingConfig,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Quaternion rotating `+z` onto `dir`.
fn quat_z_to(dir: &Vector3<f64>) -> Quat {
    let q = UnitQuaternion::rotation_between(&Vector3::z(), dir)
        .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI));
    [q.w, q.i, q.j, q.k]
}

fn random_color(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vector3<f64> {
    Vector3::new(rng.gen_range(lo..hi), rng.gen_range(lo..hi), rng.gen_range(lo..hi))
}

/// Cameras on a ring around `axis` (pointing from the target toward the
/// cameras), tilted `elevation` radians off the axis.
fn ring_cameras(axis: &Vector3<f64>, elevation: f64, distance: f64, focal: f64) -> Vec<Camera> {
    let axis = axis.normalize();
    let helper = if axis.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = axis.cross(&helper).normalize();
    let w = axis.cross(&u);
    let up = if axis.y.abs() < 0.9 { -Vector3::y() } else { Vector3::z() };
    (0..VIEW_COUNT)
        .map(|k| {
            let phi = std::f64::consts::TAU * k as f64 / VIEW_COUNT as f64;
            let dir = axis * elevation.cos() + (u * phi.cos() + w * phi.sin()) * elevation.sin();
            Camera::look_at(dir * distance, Vector3::zeros(), up, (VIEW_SIZE, VIEW_SIZE), focal)
                .expect("ring cameras are well posed")
        })
        .collect()
}

fn shell(rng: &mut ChaCha8Rng) -> (GaussianCloud, Vec<Camera>, ShadingConfig) {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let gaussians = (0..SHELL_COUNT)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / SHELL_COUNT as f64;
            let r = (1.0 - y * y).sqrt();
            let t = golden * i as f64;
            let dir = Vector3::new(r * t.cos(), y, r * t.sin()).normalize();
            let mut g = Gaussian3D::isotropic(dir * SHELL_RADIUS, 1.0, 0.8);
            g.log_scale = Vector3::new(0.12f64.ln(), 0.12f64.ln(), 0.02f64.ln());
            g.rotation = quat_z_to(&dir);
            g.set_base_color(random_color(rng, 0.2, 0.9));
            g
        })
        .collect();
    let cams = ring_cameras(&Vector3::new(0.2, -0.3, -1.0), 0.5, 4.0, 60.0);
    (GaussianCloud::new(gaussians), cams, ShadingConfig::default())
}

fn grid(rng: &mut ChaCha8Rng) -> (GaussianCloud, Vec<Camera>, ShadingConfig) {
    let mut gaussians = Vec::new();
    for z in 0..2 {
        for y in 0..4 {
            for x in 0..4 {
                let p = Vector3::new(x as f64 - 1.5, y as f64 - 1.5, z as f64 - 0.5) * 0.5;
                let mut g = Gaussian3D::isotropic(p, 0.15, 0.85);
                g.set_base_color(random_color(rng, 0.1, 0.9));
                gaussians.push(g);
            }
        }
    }
    let cams = ring_cameras(&Vector3::new(0.0, 0.0, -1.0), 0.35, 4.0, 64.0);
    let shading = ShadingConfig::new(ShadingMode::BaselineSh, None).expect("no light direction");
    (GaussianCloud::new(gaussians), cams, shading)
}

/// Unit vector toward the directional light of the mirror scene.
pub fn mirror_light_direction() -> Vector3<f64> {
    Vector3::new(0.25, -0.35, -1.0).normalize()
}

fn mirror_lit(rng: &mut ChaCha8Rng) -> (GaussianCloud, Vec<Camera>, ShadingConfig) {
    let light = mirror_light_direction();
    // degree-3 projection of a delta lobe centered on the light direction
    let lobe = sh_basis(&light);
    let mut gaussians = Vec::new();
    for y in 0..4 {
        for x in 0..5 {
            let p = Vector3::new((x as f64 - 2.0) * 0.45, (y as f64 - 1.5) * 0.45, 0.0);
            let mut g = Gaussian3D::isotropic(p, 1.0, 0.9);
            g.log_scale = Vector3::new(0.24f64.ln(), 0.24f64.ln(), 0.02f64.ln());
            let tilt = Rotation3::from_euler_angles(rng.gen_range(-0.15..0.15), rng.gen_range(-0.15..0.15), 0.0);
            g.rotation = quat_z_to(&(tilt * Vector3::z()));
            g.set_base_color(random_color(rng, 0.15, 0.5));
            let tint = random_color(rng, 0.8, 1.0);
            let w = 0.35;
            for k in 0..lobe.len() {
                for ch in 0..3 {
                    g.sh_specular[k][ch] = w * tint[ch] * lobe[k];
                }
            }
            g.specular_logit = logit(rng.gen_range(0.7..0.9));
            g.visibility = rng.gen_range(0.85..1.0);
            g.local_light = random_color(rng, 0.0, 0.08);
            gaussians.push(g);
        }
    }
    let cams = ring_cameras(&Vector3::new(0.0, 0.0, -1.0), 0.45, 3.5, 70.0);
    let shading = ShadingConfig::new(ShadingMode::Full, Some(light)).expect("unit light direction");
    (GaussianCloud::new(gaussians), cams, shading)
}

/// Starting cloud: jittered geometry, neutral appearance.
fn perturb(generator: &GaussianCloud, rng: &mut ChaCha8Rng) -> GaussianCloud {
    let extent = generator.bbox().map_or(1.0, |b| b.extent().max().max(1e-3));
    let gaussians = generator
        .gaussians
        .iter()
        .map(|g| {
            let mut p = g.clone();
            let jitter = Vector3::new(normal(rng), normal(rng), normal(rng)) * (0.01 * extent);
            p.position += jitter;
            p.log_scale += Vector3::new(normal(rng), normal(rng), normal(rng)) * 0.1;
            p.opacity_logit = logit(0.5);
            p.sh_diffuse = zero_coeffs();
            p.sh_specular = zero_coeffs();
            p.specular_logit = 0.0;
            p.visibility = 1.0;
            p.local_light = Vector3::zeros();
            p
        })
        .collect();
    GaussianCloud::new(gaussians)
}

pub fn make_synthetic(kind: SceneKind, seed: u64) -> SyntheticScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (generator, cams, shading) = match kind {
        SceneKind::Shell => shell(&mut rng),
        SceneKind::Grid => grid(&mut rng),
        SceneKind::MirrorLit => mirror_lit(&mut rng),
    };
    let init = perturb(&generator, &mut rng);
    let views = render_views(&generator, &cams, &shading);
    SyntheticScene {
        kind,
        generator,
        init,
        views,
        shading,
    }
}

/// Ground truth for every camera with the reference renderer.
pub fn render_views(cloud: &GaussianCloud, cams: &[Camera], shading: &ShadingConfig) -> Vec<(Camera, Image)> {
    cams.iter()
        .map(|c| (c.clone(), render_reference(c, cloud, shading, &Vector3::zeros())))
        .collect()
}
