//! Training loop: seeded view order, render, backward, Adam, and periodic
//! densification.

use std::fmt::Write as _;

use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{step, AdamState, LearningRates};
use super::backward::{backward_with_image, Objective};
use crate::camera::Camera;
use crate::densify::{densify_step, DensifyConfig, DensifyStats};
use crate::error::{Error, Result};
use crate::metrics::psnr;
use crate::raster::Image;
use crate::scene::GaussianCloud;
use crate::shading::ShadingConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Weight of the SSIM term in the loss.
    pub lambda: f64,
    pub rates: LearningRates,
    /// First and last iteration at which densification may run.
    pub densify_from: usize,
    pub densify_until: usize,
    pub seed: u64,
    pub background: Vector3<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            lambda: 0.2,
            rates: LearningRates::default(),
            densify_from: 500,
            densify_until: 15_000,
            seed: 0,
            background: Vector3::zeros(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        self.rates.validate()
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRecord {
    pub iteration: usize,
    pub loss: f64,
    pub psnr: f64,
    pub gaussian_count: usize,
    /// `level:count` pairs of a densification step at this iteration.
    pub split_counts: String,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub cloud: GaussianCloud,
    pub log: Vec<LogRecord>,
}

/// Scene radius from the camera centers: 1.1 × the largest distance to
/// their mean, or 1 for a single camera.
pub fn scene_extent(cameras: &[&Camera]) -> f64 {
    if cameras.len() < 2 {
        return 1.0;
    }
    let centers: Vec<Vector3<f64>> = cameras.iter().map(|c| c.center()).collect();
    let mean = centers.iter().sum::<Vector3<f64>>() / centers.len() as f64;
    let r = centers.iter().map(|c| (c - mean).norm()).fold(0.0, f64::max);
    if r > 0.0 {
        1.1 * r
    } else {
        1.0
    }
}

pub fn train(
    cloud: &GaussianCloud,
    views: &[(Camera, Image)],
    cfg: &TrainConfig,
    densify_cfg: &DensifyConfig,
    shading: &ShadingConfig,
) -> Result<TrainResult> {
    train_with_progress(cloud, views, cfg, densify_cfg, shading, |_| {})
}

/// [`train`] with a callback invoked after every iteration.
pub fn train_with_progress(
    cloud: &GaussianCloud,
    views: &[(Camera, Image)],
    cfg: &TrainConfig,
    densify_cfg: &DensifyConfig,
    shading: &ShadingConfig,
    mut progress: impl FnMut(&LogRecord),
) -> Result<TrainResult> {
    if views.is_empty() {
        return Err(Error::Config("training needs at least one view".into()));
    }
    cfg.validate()?;
    densify_cfg.validate()?;
    shading.validate()?;
    for (cam, img) in views {
        if (img.width, img.height) != cam.resolution() {
            return Err(Error::DimensionMismatch(img.width, img.height, cam.width, cam.height));
        }
    }

    let cams: Vec<&Camera> = views.iter().map(|(c, _)| c).collect();
    let extent = scene_extent(&cams);
    let objective = Objective {
        lambda: cfg.lambda,
        background: cfg.background,
    };
    let mut cloud = cloud.clone();
    let mut state = AdamState::new(cloud.len());
    let mut stats = DensifyStats::new(cloud.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut log = Vec::with_capacity(cfg.iterations);

    for iteration in 1..=cfg.iterations {
        if order.is_empty() {
            order = (0..views.len()).collect();
            order.shuffle(&mut rng);
            order.reverse();
        }
        let (cam, gt) = &views[order.pop().expect("refilled above")];
        let (loss, grads, image) = backward_with_image(&cloud, cam, gt, shading, &objective)?;

        if iteration <= cfg.densify_until {
            for (i, &vis) in grads.visible.iter().enumerate() {
                if vis {
                    stats.record(i, grads.screen_grad[i], densify_cfg.clone_grad_threshold);
                }
            }
        }
        let rates = cfg.rates.at(iteration - 1, cfg.iterations, extent);
        step(&mut cloud, &grads, &mut state, &rates)?;

        let mut split_counts = String::new();
        if iteration >= cfg.densify_from
            && iteration <= cfg.densify_until
            && iteration % densify_cfg.densify_interval == 0
        {
            let out = densify_step(&cloud, &stats, densify_cfg, extent)?;
            state.remap(&out.origins);
            cloud = out.cloud;
            stats = out.stats;
            split_counts = out.report.level_summary();
        }

        let record = LogRecord {
            iteration,
            loss,
            psnr: psnr(&image, gt)?,
            gaussian_count: cloud.len(),
            split_counts,
        };
        progress(&record);
        log.push(record);
    }
    Ok(TrainResult { cloud, log })
}

/// Comma-separated log with a header row.
pub fn log_csv(log: &[LogRecord]) -> String {
    let mut out = String::from("iteration,loss,psnr,gaussian_count,split_counts\n");
    for r in log {
        let _ = writeln!(
            out,
            "{},{:e},{},{},{}",
            r.iteration,
            r.loss,
            crate::metrics::format_psnr(r.psnr),
            r.gaussian_count,
            r.split_counts
        );
    }
    out
}

/// Means of consecutive non-overlapping windows of the loss column.
pub fn windowed_loss(log: &[LogRecord], window: usize) -> Vec<f64> {
    log.chunks_exact(window.max(1))
        .map(|c| c.iter().map(|r| r.loss).sum::<f64>() / c.len() as f64)
        .collect()
}
