//! Analytic reverse-mode gradients of the rendering loss.
//!
//! The pass mirrors the forward pipeline in reverse: per-pixel compositing
//! weights, the 2D kernel, the EWA covariance `J·W·Σ·Wᵀ·Jᵀ`, and the shading
//! model. Tiles are differentiated in parallel into private buffers that are
//! merged in tile order, so results are bit-identical for any thread count.

use nalgebra::{Matrix2, Vector2, Vector3};
use rayon::prelude::*;

use super::loss::loss_with_grad;
use super::params::{FlatParams, ParamRef, PARAMS_PER_GAUSSIAN};
use crate::camera::{project_backward, rotation_grad_to_quat, Camera, Splat2D};
use crate::error::Result;
use crate::raster::{
    bin_tiles, pixel_center, prepare_splats, rasterize, sample_kernel, Image, PixelState, PreparedSplat, TileGrid,
    TILE_SIZE,
};
use crate::scene::GaussianCloud;
use crate::shading::{shade_backward, ShadingConfig};

/// Loss weighting and compositing background.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Objective {
    /// Weight of the SSIM term.
    pub lambda: f64,
    pub background: Vector3<f64>,
}

impl Default for Objective {
    fn default() -> Self {
        Self {
            lambda: 0.2,
            background: Vector3::zeros(),
        }
    }
}

/// Per-Gaussian loss gradients in the flat parameter layout, plus the
/// global light and the screen-space densification signal.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle {
    pub gaussians: Vec<FlatParams>,
    pub global_light: Vector3<f64>,
    /// `‖∂L/∂mean2d‖` in normalized device units, zero when culled.
    pub screen_grad: Vec<f64>,
    pub visible: Vec<bool>,
}

impl GradientBundle {
    pub fn zeros(n: usize) -> Self {
        Self {
            gaussians: vec![[0.0; PARAMS_PER_GAUSSIAN]; n],
            global_light: Vector3::zeros(),
            screen_grad: vec![0.0; n],
            visible: vec![false; n],
        }
    }

    pub fn get(&self, p: &ParamRef) -> f64 {
        match *p {
            ParamRef::Gaussian { index, .. } => self.gaussians[index][p.flat_index().unwrap()],
            ParamRef::GlobalLight(c) => self.global_light[c],
        }
    }
}

/// Forward state needed to differentiate one render.
pub(crate) struct ForwardPass {
    pub prepared: Vec<PreparedSplat>,
    pub splats: Vec<Splat2D>,
    pub grid: TileGrid,
    pub image: Image,
    pub states: Vec<PixelState>,
}

pub(crate) fn forward(cam: &Camera, cloud: &GaussianCloud, shading: &ShadingConfig, background: &Vector3<f64>) -> ForwardPass {
    let prepared = prepare_splats(cam, cloud, shading);
    let splats: Vec<Splat2D> = prepared.iter().map(|p| p.splat.clone()).collect();
    let grid = bin_tiles(&splats, cam.resolution());
    let (image, states) = rasterize(&splats, &grid, cam.resolution(), background);
    ForwardPass {
        prepared,
        splats,
        grid,
        image,
        states,
    }
}

/// Screen-space gradients of one splat.
#[derive(Clone, Copy, Debug)]
pub(crate) struct SplatGrad {
    pub color: Vector3<f64>,
    pub opacity: f64,
    pub mean2d: Vector2<f64>,
    /// Gradient on the inverse covariance (full-matrix form).
    pub conic: Matrix2<f64>,
}

impl Default for SplatGrad {
    fn default() -> Self {
        Self {
            color: Vector3::zeros(),
            opacity: 0.0,
            mean2d: Vector2::zeros(),
            conic: Matrix2::zeros(),
        }
    }
}

impl SplatGrad {
    fn add(&mut self, o: &SplatGrad) {
        self.color += o.color;
        self.opacity += o.opacity;
        self.mean2d += o.mean2d;
        self.conic += o.conic;
    }
}

/// Backward through compositing for every pixel of one tile. Returns
/// gradients aligned with the tile's splat list.
fn tile_backward(
    fwd: &ForwardPass,
    tile: usize,
    resolution: (usize, usize),
    d_image: &[f64],
    background: &Vector3<f64>,
) -> Vec<SplatGrad> {
    let (w, h) = resolution;
    let list = &fwd.grid.lists[tile];
    let mut grads = vec![SplatGrad::default(); list.len()];
    if list.is_empty() {
        return grads;
    }
    let (tx, ty) = (tile % fwd.grid.tiles_x, tile / fwd.grid.tiles_x);
    let mut samples = Vec::with_capacity(list.len());
    let mut trans = Vec::with_capacity(list.len());
    for y in ty * TILE_SIZE..((ty + 1) * TILE_SIZE).min(h) {
        for x in tx * TILE_SIZE..((tx + 1) * TILE_SIZE).min(w) {
            let p = y * w + x;
            let d_c = Vector3::new(d_image[p * 3], d_image[p * 3 + 1], d_image[p * 3 + 2]);
            if d_c == Vector3::zeros() {
                continue;
            }
            let pixel = pixel_center(x, y);
            let n = fwd.states[p].processed as usize;
            samples.clear();
            trans.clear();
            let mut t = 1.0;
            for &si in &list[..n] {
                let s = sample_kernel(&fwd.splats[si], &pixel);
                trans.push(t);
                t *= 1.0 - s.alpha;
                samples.push(s);
            }
            let mut behind = *background;
            for k in (0..n).rev() {
                let s = &samples[k];
                if s.alpha == 0.0 {
                    continue;
                }
                let splat = &fwd.splats[list[k]];
                let t_k = trans[k];
                let g = &mut grads[k];
                g.color += d_c * (t_k * s.alpha);
                let d_alpha = t_k * (splat.color - behind).dot(&d_c);
                behind = splat.color * s.alpha + behind * (1.0 - s.alpha);
                if s.clamped {
                    continue;
                }
                g.opacity += d_alpha * s.gauss;
                // α = o·exp(−½ m), m = dᵀ Q d, d = pixel − mean
                let d_m = -0.5 * d_alpha * splat.opacity * s.gauss;
                let q = splat.conic().expect("dilated covariance is invertible");
                g.mean2d += q * s.d * (-2.0 * d_m);
                g.conic += s.d * s.d.transpose() * d_m;
            }
        }
    }
    grads
}

/// Analytic loss gradient for one view.
pub fn backward(
    cloud: &GaussianCloud,
    cam: &Camera,
    gt: &Image,
    shading: &ShadingConfig,
    objective: &Objective,
) -> Result<(f64, GradientBundle)> {
    backward_with_image(cloud, cam, gt, shading, objective).map(|(l, b, _)| (l, b))
}

/// [`backward`] that also returns the rendered image.
pub fn backward_with_image(
    cloud: &GaussianCloud,
    cam: &Camera,
    gt: &Image,
    shading: &ShadingConfig,
    objective: &Objective,
) -> Result<(f64, GradientBundle, Image)> {
    let fwd = forward(cam, cloud, shading, &objective.background);
    let (loss, d_image) = loss_with_grad(&fwd.image, gt, objective.lambda, true)?;
    let d_image = d_image.expect("gradient requested");
    let resolution = cam.resolution();

    let per_tile: Vec<Vec<SplatGrad>> = (0..fwd.grid.lists.len())
        .into_par_iter()
        .map(|t| tile_backward(&fwd, t, resolution, &d_image, &objective.background))
        .collect();
    let mut splat_grads = vec![SplatGrad::default(); fwd.splats.len()];
    for (t, grads) in per_tile.iter().enumerate() {
        for (&si, g) in fwd.grid.lists[t].iter().zip(grads) {
            splat_grads[si].add(g);
        }
    }

    let ndc_scale = Vector2::new(cam.width as f64 / 2.0, cam.height as f64 / 2.0);
    let per_splat: Vec<(FlatParams, Vector3<f64>, f64)> = fwd
        .prepared
        .par_iter()
        .zip(&splat_grads)
        .map(|(p, sg)| splat_to_params(cloud, cam, shading, p, sg, &ndc_scale))
        .collect();

    let mut bundle = GradientBundle::zeros(cloud.len());
    for (p, (flat, d_global, screen)) in fwd.prepared.iter().zip(per_splat) {
        let i = p.splat.source_index;
        bundle.gaussians[i] = flat;
        bundle.global_light += d_global;
        bundle.screen_grad[i] = screen;
        bundle.visible[i] = true;
    }
    Ok((loss, bundle, fwd.image))
}

fn splat_to_params(
    cloud: &GaussianCloud,
    cam: &Camera,
    shading: &ShadingConfig,
    p: &PreparedSplat,
    sg: &SplatGrad,
    ndc_scale: &Vector2<f64>,
) -> (FlatParams, Vector3<f64>, f64) {
    use super::params::Field;
    let g = &cloud.gaussians[p.splat.source_index];
    let q = p.splat.conic().expect("dilated covariance is invertible");
    // Q = Σ'⁻¹  ⇒  ∂L/∂Σ' = −Q·(∂L/∂Q)·Q
    let d_cov2d = -(q * sg.conic * q);
    let proj = project_backward(cam, g, &p.proj, &sg.mean2d, &d_cov2d);
    let shade = shade_backward(g, &cloud.global_light, shading, &p.shade, &sg.color);

    let mut d_rot = proj.rotation_matrix;
    let axis = p.shade.normal_axis;
    for r in 0..3 {
        d_rot[(r, axis)] += p.shade.normal_sign * shade.normal[r];
    }
    let d_quat = rotation_grad_to_quat(g, &d_rot);
    let o = p.splat.opacity;

    let mut flat = [0.0; PARAMS_PER_GAUSSIAN];
    let set3 = |flat: &mut FlatParams, f: Field, v: &Vector3<f64>| {
        flat[f.offset()..f.offset() + 3].copy_from_slice(v.as_slice());
    };
    set3(&mut flat, Field::Position, &(proj.position + shade.position));
    set3(&mut flat, Field::LogScale, &proj.log_scale);
    flat[Field::Rotation.offset()..Field::Rotation.offset() + 4].copy_from_slice(&d_quat);
    flat[Field::OpacityLogit.offset()] = sg.opacity * o * (1.0 - o);
    for k in 0..crate::scene::SH_COEFFS {
        for ch in 0..3 {
            flat[Field::ShDiffuse.offset() + k * 3 + ch] = shade.sh_diffuse[k][ch];
            flat[Field::ShSpecular.offset() + k * 3 + ch] = shade.sh_specular[k][ch];
        }
    }
    flat[Field::SpecularLogit.offset()] = shade.specular_logit;
    flat[Field::Visibility.offset()] = shade.visibility;
    set3(&mut flat, Field::LocalLight, &shade.local_light);
    let screen = sg.mean2d.component_mul(ndc_scale).norm();
    (flat, shade.global_light, screen)
}

/// Gradient of the shading blend `c0` with respect to the specular weight
/// `a`, per channel, for every visible Gaussian: `(source_index, ∂c0/∂a,
/// shc_s − shc_d·cosθ)`. The first entry comes from the backward pass with
/// unit upstream gradients, the second is the closed form.
pub fn specular_weight_partials(
    cloud: &GaussianCloud,
    cam: &Camera,
    shading: &ShadingConfig,
) -> Vec<(usize, Vector3<f64>, Vector3<f64>)> {
    let prepared = prepare_splats(cam, cloud, shading);
    prepared
        .iter()
        .map(|p| {
            let g = &cloud.gaussians[p.splat.source_index];
            let mut from_backward = Vector3::zeros();
            for ch in 0..3 {
                // isolate ∂c0/∂a: unit gradient on c0[ch] via the incident
                // modulation, then undo the logit and incident factors
                let mut unit = Vector3::zeros();
                unit[ch] = 1.0;
                let mut cache = p.shade.clone();
                cache.incident = Vector3::repeat(1.0);
                cache.raw = Vector3::repeat(0.5);
                let grad = shade_backward(g, &cloud.global_light, shading, &cache, &unit);
                from_backward[ch] = grad.specular_weight;
            }
            let closed = p.shade.shc_s - p.shade.shc_d * p.shade.cos_theta;
            (p.splat.source_index, from_backward, closed)
        })
        .collect()
}

/// Loss of a full tiled render.
pub fn render_loss(
    cloud: &GaussianCloud,
    cam: &Camera,
    gt: &Image,
    shading: &ShadingConfig,
    objective: &Objective,
) -> Result<f64> {
    let img = crate::raster::render(cam, cloud, shading, &objective.background);
    super::loss::loss(&img, gt, objective.lambda)
}

/// Central finite difference of the loss in one scalar parameter.
pub fn fd_gradient(
    cloud: &GaussianCloud,
    cam: &Camera,
    gt: &Image,
    shading: &ShadingConfig,
    objective: &Objective,
    param: &ParamRef,
    h: f64,
) -> Result<f64> {
    let mut work = cloud.clone();
    let x0 = param.read(cloud);
    param.write(&mut work, x0 + h);
    let plus = render_loss(&work, cam, gt, shading, objective)?;
    param.write(&mut work, x0 - h);
    let minus = render_loss(&work, cam, gt, shading, objective)?;
    Ok((plus - minus) / (2.0 * h))
}
