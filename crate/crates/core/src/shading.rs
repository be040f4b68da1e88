//! Light decomposition shading.
//!
//! A Gaussian's color blends a cosine-weighted diffuse SH term, evaluated
//! along the view direction, with a specular SH term evaluated along the
//! mirrored view ray:
//!
//! ```text
//! c0 = (1 − a)·shc_d·cosθ + a·shc_s
//! c  = V·L_global + L_local
//! color = clamp(c0 ⊙ c, 0, 1)
//! ```
//!
//! Both SH terms carry a +0.5 offset so zero coefficients shade mid-gray.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::scene::{eval_sh_backward, eval_sh_unchecked, normal_with_sign, Gaussian3D, ShCoeffs};

/// Offset added to every SH evaluation before shading.
pub const SH_OFFSET: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ShadingMode {
    #[default]
    Full,
    DiffuseOnly,
    SpecularOnly,
    /// Plain view-dependent SH color, no decomposition.
    BaselineSh,
}

impl FromStr for ShadingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "full" => Ok(Self::Full),
            "diffuse_only" | "diffuse" => Ok(Self::DiffuseOnly),
            "specular_only" | "specular" => Ok(Self::SpecularOnly),
            "baseline_sh" | "baseline" => Ok(Self::BaselineSh),
            other => Err(Error::Config(format!("unknown shading mode `{other}`"))),
        }
    }
}

impl fmt::Display for ShadingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::DiffuseOnly => "diffuse_only",
            Self::SpecularOnly => "specular_only",
            Self::BaselineSh => "baseline_sh",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ShadingConfig {
    pub mode: ShadingMode,
    /// Unit direction toward a directional light. When absent the view
    /// direction stands in for the light direction in `cosθ`.
    pub light_direction: Option<Vector3<f64>>,
}

impl ShadingConfig {
    pub fn new(mode: ShadingMode, light_direction: Option<Vector3<f64>>) -> Result<Self> {
        let cfg = Self { mode, light_direction };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(l) = self.light_direction {
            if !((l.norm() - 1.0).abs() <= 1e-6) {
                return Err(Error::NonUnitDirection(l.norm()));
            }
        }
        Ok(())
    }
}

/// `V·L_global + L_local`, componentwise.
pub fn incident_light(visibility: f64, global: &Vector3<f64>, local: &Vector3<f64>) -> Vector3<f64> {
    global * visibility + local
}

/// `(1 − a)·shc_d·cosθ + a·shc_s`, unclamped.
pub fn compose_color(shc_d: &Vector3<f64>, shc_s: &Vector3<f64>, a: f64, cos_theta: f64) -> Vector3<f64> {
    shc_d * ((1.0 - a) * cos_theta) + shc_s * a
}

/// Mirror reflection of `d` about the plane with normal `n`.
pub fn reflect(d: &Vector3<f64>, n: &Vector3<f64>) -> Vector3<f64> {
    d - n * (2.0 * d.dot(n))
}

/// Forward intermediates kept for the backward pass.
#[derive(Clone, Debug)]
pub(crate) struct ShadeCache {
    pub omega: Vector3<f64>,
    pub view_dist: f64,
    pub normal: Vector3<f64>,
    pub normal_sign: f64,
    pub normal_axis: usize,
    pub reflected: Vector3<f64>,
    pub cos_raw: f64,
    pub cos_theta: f64,
    pub shc_d: Vector3<f64>,
    pub shc_s: Vector3<f64>,
    pub a: f64,
    pub c0: Vector3<f64>,
    pub incident: Vector3<f64>,
    pub raw: Vector3<f64>,
}

pub(crate) fn shade_cached(
    g: &Gaussian3D,
    global_light: &Vector3<f64>,
    view_pos: &Vector3<f64>,
    cfg: &ShadingConfig,
) -> (Vector3<f64>, ShadeCache) {
    let v = view_pos - g.position;
    let view_dist = v.norm();
    let omega = if view_dist > 0.0 { v / view_dist } else { Vector3::z() };
    let (normal, normal_sign, normal_axis) = normal_with_sign(g, view_pos);
    let light = cfg.light_direction.unwrap_or(omega);
    let cos_raw = light.dot(&normal);
    let cos_theta = cos_raw.clamp(0.0, 1.0);
    let reflected = reflect(&(-omega), &normal);

    let a = g.specular_weight();
    let uses_diffuse = cfg.mode != ShadingMode::SpecularOnly;
    let uses_specular = matches!(cfg.mode, ShadingMode::Full | ShadingMode::SpecularOnly);
    let shc_d = if uses_diffuse {
        eval_sh_unchecked(&g.sh_diffuse, &omega).add_scalar(SH_OFFSET)
    } else {
        Vector3::zeros()
    };
    let shc_s = if uses_specular {
        eval_sh_unchecked(&g.sh_specular, &reflected).add_scalar(SH_OFFSET)
    } else {
        Vector3::zeros()
    };
    let c0 = match cfg.mode {
        ShadingMode::Full => compose_color(&shc_d, &shc_s, a, cos_theta),
        ShadingMode::DiffuseOnly => shc_d * cos_theta,
        ShadingMode::SpecularOnly => shc_s,
        ShadingMode::BaselineSh => shc_d,
    };
    let incident = incident_light(g.visibility, global_light, &g.local_light);
    let raw = c0.component_mul(&incident);
    let color = raw.map(|c| c.clamp(0.0, 1.0));
    let cache = ShadeCache {
        omega,
        view_dist,
        normal,
        normal_sign,
        normal_axis,
        reflected,
        cos_raw,
        cos_theta,
        shc_d,
        shc_s,
        a,
        c0,
        incident,
        raw,
    };
    (color, cache)
}

/// Outgoing color of one Gaussian seen from `view_pos`, in `[0, 1]³`.
pub fn shade_gaussian(
    g: &Gaussian3D,
    global_light: &Vector3<f64>,
    view_pos: &Vector3<f64>,
    cfg: &ShadingConfig,
) -> Vector3<f64> {
    shade_cached(g, global_light, view_pos, cfg).0
}

/// Gradients of the shaded color with respect to its inputs.
#[derive(Clone, Debug)]
pub(crate) struct ShadeGrad {
    pub sh_diffuse: ShCoeffs,
    pub sh_specular: ShCoeffs,
    pub specular_logit: f64,
    /// `∂L/∂a` before the logit chain rule.
    pub specular_weight: f64,
    pub visibility: f64,
    pub local_light: Vector3<f64>,
    pub global_light: Vector3<f64>,
    pub position: Vector3<f64>,
    /// Gradient on the oriented normal.
    pub normal: Vector3<f64>,
    /// `∂L/∂c0`, exposed for closed-form checks.
    pub c0: Vector3<f64>,
}

pub(crate) fn shade_backward(
    g: &Gaussian3D,
    global_light: &Vector3<f64>,
    cfg: &ShadingConfig,
    cache: &ShadeCache,
    d_color: &Vector3<f64>,
) -> ShadeGrad {
    let mut out = ShadeGrad {
        sh_diffuse: [[0.0; 3]; crate::scene::SH_COEFFS],
        sh_specular: [[0.0; 3]; crate::scene::SH_COEFFS],
        specular_logit: 0.0,
        specular_weight: 0.0,
        visibility: 0.0,
        local_light: Vector3::zeros(),
        global_light: Vector3::zeros(),
        position: Vector3::zeros(),
        normal: Vector3::zeros(),
        c0: Vector3::zeros(),
    };
    // zero gradient through the clamped branch
    let d_raw = Vector3::from_fn(|ch, _| {
        if (0.0..=1.0).contains(&cache.raw[ch]) {
            d_color[ch]
        } else {
            0.0
        }
    });
    if d_raw == Vector3::zeros() {
        return out;
    }
    let d_c0 = d_raw.component_mul(&cache.incident);
    let d_inc = d_raw.component_mul(&cache.c0);
    out.c0 = d_c0;
    out.visibility = d_inc.dot(global_light);
    out.global_light = d_inc * g.visibility;
    out.local_light = d_inc;

    let (mut d_shc_d, mut d_shc_s, mut d_cos) = (Vector3::zeros(), Vector3::zeros(), 0.0);
    match cfg.mode {
        ShadingMode::Full => {
            let a = cache.a;
            d_shc_d = d_c0 * ((1.0 - a) * cache.cos_theta);
            d_shc_s = d_c0 * a;
            d_cos = (1.0 - a) * d_c0.dot(&cache.shc_d);
            let d_a = d_c0.dot(&(cache.shc_s - cache.shc_d * cache.cos_theta));
            out.specular_weight = d_a;
            out.specular_logit = d_a * a * (1.0 - a);
        }
        ShadingMode::DiffuseOnly => {
            d_shc_d = d_c0 * cache.cos_theta;
            d_cos = d_c0.dot(&cache.shc_d);
        }
        ShadingMode::SpecularOnly => d_shc_s = d_c0,
        ShadingMode::BaselineSh => d_shc_d = d_c0,
    }

    let mut d_omega = Vector3::zeros();
    if (0.0..=1.0).contains(&cache.cos_raw) && d_cos != 0.0 {
        match cfg.light_direction {
            Some(l) => out.normal += l * d_cos,
            None => {
                out.normal += cache.omega * d_cos;
                d_omega += cache.normal * d_cos;
            }
        }
    }
    if d_shc_d != Vector3::zeros() {
        d_omega += eval_sh_backward(&g.sh_diffuse, &cache.omega, &d_shc_d, &mut out.sh_diffuse);
    }
    if d_shc_s != Vector3::zeros() {
        let d_r = eval_sh_backward(&g.sh_specular, &cache.reflected, &d_shc_s, &mut out.sh_specular);
        // r = −ω + 2(ω·n)n
        let n = &cache.normal;
        let w = &cache.omega;
        d_omega += -d_r + n * (2.0 * n.dot(&d_r));
        out.normal += (d_r * w.dot(n) + w * d_r.dot(n)) * 2.0;
    }
    if cache.view_dist > 0.0 {
        let w = &cache.omega;
        let d_v = (d_omega - w * w.dot(&d_omega)) / cache.view_dist;
        out.position = -d_v;
    }
    out
}
