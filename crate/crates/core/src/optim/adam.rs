//! Bias-corrected Adam with per-field learning rates.

use nalgebra::Vector3;

use super::backward::GradientBundle;
use super::params::{flatten, unflatten, Field, FlatParams, PARAMS_PER_GAUSSIAN};
use crate::densify::Origin;
use crate::error::{Error, Result};
use crate::scene::{normalize_quat, GaussianCloud};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-15;

/// Learning rate per parameter group. The position rate decays
/// exponentially from `position` to `position_final` over the run and is
/// multiplied by the scene extent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearningRates {
    pub position: f64,
    pub position_final: f64,
    pub sh: f64,
    pub opacity: f64,
    pub scale: f64,
    pub rotation: f64,
    pub specular: f64,
    pub lighting: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position: 1.6e-4,
            position_final: 1.6e-6,
            sh: 2.5e-3,
            opacity: 5e-2,
            scale: 5e-3,
            rotation: 1e-3,
            specular: 5e-3,
            lighting: 5e-3,
        }
    }
}

impl LearningRates {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.position,
            self.position_final,
            self.sh,
            self.opacity,
            self.scale,
            self.rotation,
            self.specular,
            self.lighting,
        ];
        if all.iter().all(|r| r.is_finite() && *r > 0.0) {
            Ok(())
        } else {
            Err(Error::Config("learning rates must be positive".into()))
        }
    }

    /// Log-linear interpolation of the position rate at `iteration` of `total`.
    pub fn position_at(&self, iteration: usize, total: usize) -> f64 {
        let t = if total == 0 {
            0.0
        } else {
            (iteration as f64 / total as f64).clamp(0.0, 1.0)
        };
        (self.position.ln() * (1.0 - t) + self.position_final.ln() * t).exp()
    }

    /// Rates for one step.
    pub fn at(&self, iteration: usize, total: usize, spatial_scale: f64) -> StepRates {
        let mut per_field = [0.0; 9];
        for (k, f) in Field::ALL.iter().enumerate() {
            per_field[k] = match f {
                Field::Position => self.position_at(iteration, total) * spatial_scale,
                Field::LogScale => self.scale,
                Field::Rotation => self.rotation,
                Field::OpacityLogit => self.opacity,
                Field::ShDiffuse | Field::ShSpecular => self.sh,
                Field::SpecularLogit => self.specular,
                Field::Visibility | Field::LocalLight => self.lighting,
            };
        }
        StepRates {
            per_field,
            global_light: self.lighting,
        }
    }
}

/// Resolved learning rates, indexed like [`Field::ALL`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRates {
    pub per_field: [f64; 9],
    pub global_light: f64,
}

impl StepRates {
    pub fn uniform(lr: f64) -> Self {
        Self {
            per_field: [lr; 9],
            global_light: lr,
        }
    }

    fn expand(&self) -> FlatParams {
        let mut out = [0.0; PARAMS_PER_GAUSSIAN];
        for (k, f) in Field::ALL.iter().enumerate() {
            out[f.offset()..f.offset() + f.len()].fill(self.per_field[k]);
        }
        out
    }
}

/// First and second moments per scalar parameter, plus the shared step count.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<FlatParams>,
    pub v: Vec<FlatParams>,
    pub global_m: Vector3<f64>,
    pub global_v: Vector3<f64>,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            step: 0,
            m: vec![[0.0; PARAMS_PER_GAUSSIAN]; n],
            v: vec![[0.0; PARAMS_PER_GAUSSIAN]; n],
            global_m: Vector3::zeros(),
            global_v: Vector3::zeros(),
        }
    }

    /// Reorders moments after densification. New Gaussians start from zero.
    pub fn remap(&mut self, origins: &[Origin]) {
        let zero = [0.0; PARAMS_PER_GAUSSIAN];
        let pick = |src: &[FlatParams], o: &Origin| match *o {
            Origin::Kept(i) => src[i],
            Origin::Child(_) => zero,
        };
        self.m = origins.iter().map(|o| pick(&self.m, o)).collect();
        self.v = origins.iter().map(|o| pick(&self.v, o)).collect();
    }
}

#[inline]
fn update(x: &mut f64, g: f64, m: &mut f64, v: &mut f64, lr: f64, c1: f64, c2: f64) {
    *m = BETA1 * *m + (1.0 - BETA1) * g;
    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
    let m_hat = *m / c1;
    let v_hat = *v / c2;
    *x -= lr * m_hat / (v_hat.sqrt() + EPSILON);
}

/// One Adam step over every parameter. Afterwards quaternions are
/// renormalized, visibility is clamped to `[0, 1]` and lights to `≥ 0`.
pub fn step(cloud: &mut GaussianCloud, grads: &GradientBundle, state: &mut AdamState, rates: &StepRates) -> Result<()> {
    let n = cloud.len();
    if grads.gaussians.len() != n || state.m.len() != n {
        return Err(Error::Config(format!(
            "optimizer shapes disagree: cloud {n}, gradients {}, moments {}",
            grads.gaussians.len(),
            state.m.len()
        )));
    }
    for (index, g) in grads.gaussians.iter().enumerate() {
        if let Some(k) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient {
                param: Field::of_index(k).name(),
                index,
            });
        }
    }
    if !grads.global_light.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteGradient {
            param: "global_light",
            index: 0,
        });
    }

    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    let lr = rates.expand();
    for (i, g) in cloud.gaussians.iter_mut().enumerate() {
        let mut x = flatten(g);
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for k in 0..PARAMS_PER_GAUSSIAN {
            update(&mut x[k], grads.gaussians[i][k], &mut m[k], &mut v[k], lr[k], c1, c2);
        }
        *g = unflatten(&x);
        normalize_quat(&mut g.rotation);
        g.visibility = g.visibility.clamp(0.0, 1.0);
        g.local_light = g.local_light.map(|c| c.max(0.0));
    }
    for c in 0..3 {
        update(
            &mut cloud.global_light[c],
            grads.global_light[c],
            &mut state.global_m[c],
            &mut state.global_v[c],
            rates.global_light,
            c1,
            c2,
        );
        cloud.global_light[c] = cloud.global_light[c].max(0.0);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Gaussian3D;

    fn one() -> GaussianCloud {
        GaussianCloud::new(vec![Gaussian3D::isotropic(Vector3::new(1.0, 0.0, 3.0), 0.1, 0.5)])
    }

    #[test]
    fn zero_gradients_leave_parameters() {
        let mut cloud = one();
        let before = cloud.clone();
        let mut state = AdamState::new(1);
        for _ in 0..5 {
            step(&mut cloud, &GradientBundle::zeros(1), &mut state, &StepRates::uniform(0.1)).unwrap();
        }
        assert_eq!(cloud, before);
    }

    #[test]
    fn descends_on_square() {
        // f(x) = x², x = position.x starting at 1
        let mut cloud = one();
        let mut state = AdamState::new(1);
        let mut grads = GradientBundle::zeros(1);
        grads.gaussians[0][0] = 2.0 * cloud.gaussians[0].position.x;
        step(&mut cloud, &grads, &mut state, &StepRates::uniform(0.1)).unwrap();
        assert!(cloud.gaussians[0].position.x < 1.0);
    }

    #[test]
    fn matches_textbook_recurrence() {
        let mut cloud = one();
        let mut state = AdamState::new(1);
        let lr = 0.05;
        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=10 {
            let g = 2.0 * x - 0.3 * (t as f64).sin();
            let mut grads = GradientBundle::zeros(1);
            grads.gaussians[0][0] = g;
            step(&mut cloud, &grads, &mut state, &StepRates::uniform(lr)).unwrap();

            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= lr * mh / (vh.sqrt() + 1e-15);
            assert!((cloud.gaussians[0].position.x - x).abs() < 1e-14);
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut cloud = one();
        let mut state = AdamState::new(1);
        let mut grads = GradientBundle::zeros(1);
        grads.gaussians[0][Field::OpacityLogit.offset()] = f64::NAN;
        let err = step(&mut cloud, &grads, &mut state, &StepRates::uniform(0.1)).unwrap_err();
        assert!(err.to_string().contains("opacity_logit"), "{err}");
    }

    #[test]
    fn constraints_hold_after_step() {
        let mut cloud = one();
        let mut state = AdamState::new(1);
        let mut grads = GradientBundle::zeros(1);
        grads.gaussians[0][Field::Visibility.offset()] = -1.0;
        grads.gaussians[0][Field::LocalLight.offset()] = 1.0;
        grads.gaussians[0][Field::Rotation.offset() + 1] = -3.0;
        grads.global_light = Vector3::repeat(1.0);
        for _ in 0..50 {
            step(&mut cloud, &grads, &mut state, &StepRates::uniform(0.1)).unwrap();
        }
        let g = &cloud.gaussians[0];
        assert!(g.visibility <= 1.0 && g.local_light.x >= 0.0);
        let q = g.rotation;
        assert!((q.iter().map(|c| c * c).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(cloud.global_light.iter().all(|&c| c >= 0.0));
    }

    #[test]
    fn position_rate_decays_log_linearly() {
        let r = LearningRates::default();
        assert!((r.position_at(0, 100) - 1.6e-4).abs() < 1e-18);
        assert!((r.position_at(100, 100) - 1.6e-6).abs() < 1e-18);
        assert!((r.position_at(50, 100) - 1.6e-5).abs() < 1e-15);
    }

    #[test]
    fn remap_zeroes_new_entries() {
        let mut s = AdamState::new(2);
        s.m[1][0] = 3.0;
        s.remap(&[Origin::Kept(1), Origin::Child(1), Origin::Kept(0)]);
        assert_eq!(s.m.len(), 3);
        assert_eq!(s.m[0][0], 3.0);
        assert_eq!(s.m[1][0], 0.0);
    }
}
