//! Density-grid gradients and hierarchical splitting.
//!
//! The cloud is voxelized into a scalar density field `V`. Geometric
//! gradients are central differences of `V` in index units, unit normals are
//! the normalized gradients, and the normal gradient measures how fast those
//! normals turn between neighboring voxels. Both magnitudes are normalized by
//! their grid maxima and blended with weight `ω`. Gaussians whose accumulated
//! blended gradient climbs the threshold ladder are split into `2^level`
//! children. This runs on top of the usual clone/split/prune schedule driven by
//! screen-space positional gradients.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scene::{inverse_covariance, Gaussian3D, GaussianCloud};

/// Padding around the cloud bounding box, in voxels.
pub const GRID_PADDING: usize = 3;
/// Squared Mahalanobis radius beyond which a Gaussian adds no density.
/// The kernel is below `4e-6` there.
pub const DENSITY_CUTOFF: f64 = 25.0;
/// Gradients shorter than this fraction of the largest density are FLAT.
pub const FLAT_RELATIVE: f64 = 1e-3;
pub const DENOM_FLOOR: f64 = 1e-12;
/// Largest number of successive halvings applied to one Gaussian.
pub const LEVEL_CAP: u32 = 10;
/// Log-scale shrink applied to both children of a split.
pub const SPLIT_SHRINK: f64 = 1.6;
/// Ladder step used above the last threshold under [`Strategy::Dense`].
pub const DENSE_STEP: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Strategy {
    None,
    #[default]
    Sparse,
    Dense,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Strategy::None),
            "sparse" => Ok(Strategy::Sparse),
            "dense" => Ok(Strategy::Dense),
            _ => Err(Error::Config(format!("unknown strategy `{s}` (expected none, sparse or dense)"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::None => "none",
            Strategy::Sparse => "sparse",
            Strategy::Dense => "dense",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensifyConfig {
    /// Fusion weight of the normal gradient.
    pub omega: f64,
    pub thresholds: Vec<f64>,
    pub strategy: Strategy,
    /// Voxels along the longest bounding-box edge.
    pub grid_resolution: usize,
    pub densify_interval: usize,
    /// Average screen-space positional gradient that triggers clone/split.
    pub clone_grad_threshold: f64,
    pub prune_opacity: f64,
    /// Gaussians whose largest scale is at most this fraction of the scene
    /// extent are cloned instead of split.
    pub percent_dense: f64,
    pub max_gaussians: usize,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self {
            omega: 0.5,
            thresholds: vec![1.0, 1.5, 2.0, 2.5, 3.0, 3.5],
            strategy: Strategy::Sparse,
            grid_resolution: 128,
            densify_interval: 100,
            clone_grad_threshold: 2e-4,
            prune_opacity: 0.005,
            percent_dense: 0.01,
            max_gaussians: 200_000,
        }
    }
}

impl DensifyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(Error::Config(format!("omega must lie in [0, 1], got {}", self.omega)));
        }
        if self.thresholds.is_empty() || self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("thresholds must be non-empty and strictly increasing".into()));
        }
        if self.grid_resolution < 2 {
            return Err(Error::Config("grid resolution must be at least 2".into()));
        }
        if self.densify_interval == 0 {
            return Err(Error::Config("densify interval must be positive".into()));
        }
        Ok(())
    }
}

/// Scalar density sampled at voxel centers.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid {
    /// Corner of voxel `(0, 0, 0)`.
    pub origin: Vector3<f64>,
    pub voxel_size: f64,
    pub dims: [usize; 3],
    /// `x` fastest, then `y`, then `z`.
    pub values: Vec<f64>,
}

impl DensityGrid {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn coords(&self, i: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [i % nx, (i / nx) % ny, i / (nx * ny)]
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.index(x, y, z)]
    }

    pub fn voxel_center(&self, x: usize, y: usize, z: usize) -> Vector3<f64> {
        self.origin + Vector3::new(x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5) * self.voxel_size
    }

    /// Voxel containing `p`, clamped to the grid.
    pub fn voxel_of(&self, p: &Vector3<f64>) -> [usize; 3] {
        let mut out = [0; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.voxel_size).floor();
            out[a] = f.clamp(0.0, (self.dims[a] - 1) as f64) as usize;
        }
        out
    }

    pub fn is_interior(&self, [x, y, z]: [usize; 3]) -> bool {
        let [nx, ny, nz] = self.dims;
        (1..nx - 1).contains(&x) && (1..ny - 1).contains(&y) && (1..nz - 1).contains(&z)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Empty grid covering `[origin, origin + dims·voxel_size]`, for tests and
    /// analytic fields.
    pub fn from_fn(
        origin: Vector3<f64>,
        voxel_size: f64,
        dims: [usize; 3],
        f: impl Fn(&Vector3<f64>) -> f64,
    ) -> Self {
        let mut g = Self {
            origin,
            voxel_size,
            dims,
            values: vec![0.0; dims[0] * dims[1] * dims[2]],
        };
        for i in 0..g.values.len() {
            let [x, y, z] = g.coords(i);
            g.values[i] = f(&g.voxel_center(x, y, z));
        }
        g
    }
}

struct DensitySource {
    position: Vector3<f64>,
    inv_cov: nalgebra::Matrix3<f64>,
    opacity: f64,
    lo: [usize; 3],
    hi: [usize; 3],
}

/// Voxelizes `Σ_g opacity_g · exp(−½ dᵀΣ⁻¹d)` over the padded bounding box.
/// The longest box edge spans `resolution` voxels.
pub fn rasterize_density(cloud: &GaussianCloud, resolution: usize) -> Result<DensityGrid> {
    let bb = cloud.bbox().ok_or(Error::EmptyCloud)?;
    let resolution = resolution.max(2);
    let mut longest = bb.extent().max();
    let (mut min, mut max) = (bb.min, bb.max);
    if longest <= 1e-12 {
        // all centers coincide: cover the largest Gaussian instead
        let s = cloud.gaussians.iter().map(|g| g.scales().max()).fold(0.0, f64::max);
        longest = (6.0 * s).max(1e-6);
        min = bb.center() - Vector3::repeat(longest / 2.0);
        max = min + Vector3::repeat(longest);
    }
    let voxel_size = longest / resolution as f64;
    let pad = GRID_PADDING as f64 * voxel_size;
    let origin = min - Vector3::repeat(pad);
    let dims = {
        let e = max - min;
        let mut d = [0; 3];
        for a in 0..3 {
            let span = (e[a].max(0.0) / voxel_size).ceil() as usize;
            d[a] = (span + 1 + 2 * GRID_PADDING).max(4);
        }
        d
    };

    let sources: Vec<DensitySource> = cloud
        .gaussians
        .iter()
        .map(|g| -> Result<DensitySource> {
            let inv_cov = inverse_covariance(g)?;
            let cov = g.covariance();
            let mut lo = [0; 3];
            let mut hi = [0; 3];
            for a in 0..3 {
                let r = DENSITY_CUTOFF.sqrt() * cov[(a, a)].sqrt();
                let l = ((g.position[a] - r - origin[a]) / voxel_size - 0.5).ceil().max(0.0);
                let h = ((g.position[a] + r - origin[a]) / voxel_size - 0.5).floor();
                lo[a] = l as usize;
                hi[a] = if h < 0.0 { 0 } else { (h as usize).min(dims[a] - 1) };
                if h < l {
                    lo[a] = 1;
                    hi[a] = 0;
                }
            }
            Ok(DensitySource {
                position: g.position,
                inv_cov,
                opacity: g.opacity(),
                lo,
                hi,
            })
        })
        .collect::<Result<_>>()?;

    let [nx, ny, _] = dims;
    let mut values = vec![0.0; dims[0] * dims[1] * dims[2]];
    values.par_chunks_mut(nx * ny).enumerate().for_each(|(z, slice)| {
        let cz = origin.z + (z as f64 + 0.5) * voxel_size;
        for s in &sources {
            if z < s.lo[2] || z > s.hi[2] || s.lo[0] > s.hi[0] || s.lo[1] > s.hi[1] {
                continue;
            }
            for y in s.lo[1]..=s.hi[1] {
                let cy = origin.y + (y as f64 + 0.5) * voxel_size;
                for x in s.lo[0]..=s.hi[0] {
                    let c = Vector3::new(origin.x + (x as f64 + 0.5) * voxel_size, cy, cz);
                    let d = c - s.position;
                    let m = d.dot(&(s.inv_cov * d));
                    if m <= DENSITY_CUTOFF {
                        slice[x + nx * y] += s.opacity * (-0.5 * m).exp();
                    }
                }
            }
        }
    });
    Ok(DensityGrid {
        origin,
        voxel_size,
        dims,
        values,
    })
}

/// Central difference `V(i+1) − V(i−1)` per axis, in index units.
pub fn central_gradient(grid: &DensityGrid, idx: [usize; 3]) -> Result<Vector3<f64>> {
    if !grid.is_interior(idx) {
        return Err(Error::BoundaryVoxel(idx[0], idx[1], idx[2]));
    }
    let [x, y, z] = idx;
    Ok(Vector3::new(
        grid.get(x + 1, y, z) - grid.get(x - 1, y, z),
        grid.get(x, y + 1, z) - grid.get(x, y - 1, z),
        grid.get(x, y, z + 1) - grid.get(x, y, z - 1),
    ))
}

/// Normalized gradient, or `None` (FLAT) when `|g| ≤ eps`.
pub fn unit_normal(g: &Vector3<f64>, eps: f64) -> Option<Vector3<f64>> {
    let n = g.norm();
    (n > eps && n.is_finite()).then(|| g / n)
}

/// Per-voxel unit normals on a grid; `None` marks FLAT and boundary voxels.
#[derive(Clone, Debug)]
pub struct NormalField {
    pub dims: [usize; 3],
    pub normals: Vec<Option<Vector3<f64>>>,
}

impl NormalField {
    fn at(&self, x: usize, y: usize, z: usize) -> Option<Vector3<f64>> {
        let [nx, ny, nz] = self.dims;
        if x >= nx || y >= ny || z >= nz {
            return None;
        }
        self.normals[x + nx * (y + ny * z)]
    }
}

/// Norm of the nine forward normal differences `|N(i+1) − N(i)|` stacked
/// over the three axes. An axis whose neighbor is FLAT contributes nothing,
/// and a FLAT voxel has zero normal gradient.
pub fn normal_gradient(field: &NormalField, idx: [usize; 3]) -> Result<f64> {
    let [nx, ny, nz] = field.dims;
    let [x, y, z] = idx;
    if !((1..nx - 1).contains(&x) && (1..ny - 1).contains(&y) && (1..nz - 1).contains(&z)) {
        return Err(Error::BoundaryVoxel(x, y, z));
    }
    let Some(n0) = field.at(x, y, z) else {
        return Ok(0.0);
    };
    let mut sq = 0.0;
    for nb in [field.at(x + 1, y, z), field.at(x, y + 1, z), field.at(x, y, z + 1)]
        .into_iter()
        .flatten()
    {
        sq += (nb - n0).norm_squared();
    }
    Ok(sq.sqrt())
}

/// `(1−ω)·g_geo/denom_geo + ω·g_norm/denom_norm`.
pub fn fuse_gradient(g_geo: f64, g_norm: f64, omega: f64, denom_geo: f64, denom_norm: f64) -> Result<f64> {
    for d in [denom_geo, denom_norm] {
        if !(d > 0.0) {
            return Err(Error::NonPositiveDenominator(d));
        }
    }
    Ok((1.0 - omega) * (g_geo / denom_geo) + omega * (g_norm / denom_norm))
}

/// Geometric, normal and fused gradient magnitudes for every voxel.
/// Boundary and FLAT voxels hold zero.
#[derive(Clone, Debug)]
pub struct GradientField {
    pub dims: [usize; 3],
    pub geometric: Vec<f64>,
    pub normal: Vec<f64>,
    pub fused: Vec<f64>,
    pub denom_geo: f64,
    pub denom_norm: f64,
    /// Number of interior voxels classified FLAT.
    pub flat_voxels: usize,
}

pub fn gradient_field(grid: &DensityGrid, omega: f64) -> Result<GradientField> {
    let eps = FLAT_RELATIVE * grid.max_value();
    let n = grid.len();
    let grads: Vec<Option<Vector3<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let c = grid.coords(i);
            grid.is_interior(c).then(|| central_gradient(grid, c).expect("interior"))
        })
        .collect();
    let normals = NormalField {
        dims: grid.dims,
        normals: grads.par_iter().map(|g| g.and_then(|g| unit_normal(&g, eps))).collect(),
    };
    let geometric: Vec<f64> = grads
        .par_iter()
        .zip(&normals.normals)
        .map(|(g, n)| match (g, n) {
            (Some(g), Some(_)) => g.norm(),
            _ => 0.0,
        })
        .collect();
    let normal: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let c = grid.coords(i);
            if grid.is_interior(c) {
                normal_gradient(&normals, c).expect("interior")
            } else {
                0.0
            }
        })
        .collect();
    let flat_voxels = grads
        .iter()
        .zip(&normals.normals)
        .filter(|(g, n)| g.is_some() && n.is_none())
        .count();
    let denom_geo = geometric.iter().copied().fold(0.0, f64::max).max(DENOM_FLOOR);
    let denom_norm = normal.iter().copied().fold(0.0, f64::max).max(DENOM_FLOOR);
    let fused = geometric
        .par_iter()
        .zip(&normal)
        .map(|(&g, &m)| fuse_gradient(g, m, omega, denom_geo, denom_norm))
        .collect::<Result<Vec<_>>>()?;
    Ok(GradientField {
        dims: grid.dims,
        geometric,
        normal,
        fused,
        denom_geo,
        denom_norm,
        flat_voxels,
    })
}

/// Splitting level for an accumulated fused gradient.
pub fn assign_level(accumulated: f64, cfg: &DensifyConfig) -> u32 {
    let ladder = &cfg.thresholds;
    let base = ladder.iter().filter(|&&t| t <= accumulated).count() as u32;
    match cfg.strategy {
        Strategy::None => 0,
        Strategy::Sparse => base,
        Strategy::Dense => {
            let last = *ladder.last().expect("validated ladder");
            if accumulated > last {
                base + ((accumulated - last) / DENSE_STEP).floor() as u32
            } else {
                base
            }
        }
    }
}

fn split_once(g: &Gaussian3D) -> [Gaussian3D; 2] {
    let s = g.scales();
    let axis = s.imax();
    let dir: Vector3<f64> = g.rotation_matrix().column(axis).into();
    let offset = dir * (0.5 * s[axis]);
    let shrink = SPLIT_SHRINK.ln();
    let mut a = g.clone();
    a.position += offset;
    a.log_scale.add_scalar_mut(-shrink);
    let mut b = g.clone();
    b.position -= offset;
    b.log_scale.add_scalar_mut(-shrink);
    [a, b]
}

/// Halves `g` recursively, producing `2^min(level, LEVEL_CAP)` children.
pub fn split_gaussian(g: &Gaussian3D, level: u32) -> Vec<Gaussian3D> {
    let mut out = vec![g.clone()];
    for _ in 0..level.min(LEVEL_CAP) {
        out = out.iter().flat_map(split_once).collect();
    }
    out
}

/// Per-Gaussian statistics gathered between densification steps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DensifyStats {
    /// Sum of screen-space positional gradient norms over visible iterations.
    pub grad_sum: Vec<f64>,
    pub visible: Vec<u32>,
    /// Iterations in which the Gaussian was visible with a screen gradient of
    /// at least the clone threshold. Each one contributes a fused-gradient
    /// sample of weight `1 / densify_interval`.
    pub active: Vec<u32>,
    /// Running fused-gradient sum compared against the ladder. Survives
    /// densification and is inherited by children.
    pub accumulated: Vec<f64>,
    /// Hierarchical level already realized by splits in this lineage.
    pub realized: Vec<u32>,
}

impl DensifyStats {
    pub fn new(n: usize) -> Self {
        Self {
            grad_sum: vec![0.0; n],
            visible: vec![0; n],
            active: vec![0; n],
            accumulated: vec![0.0; n],
            realized: vec![0; n],
        }
    }

    /// Stats as if every Gaussian had been active for `intervals` full
    /// densification intervals, for inspecting a cloud outside of training.
    pub fn saturated(n: usize, cfg: &DensifyConfig, intervals: u32) -> Self {
        let k = cfg.densify_interval as u32 * intervals;
        Self {
            visible: vec![k; n],
            active: vec![k; n],
            ..Self::new(n)
        }
    }

    pub fn record(&mut self, i: usize, screen_grad: f64, threshold: f64) {
        self.grad_sum[i] += screen_grad;
        self.visible[i] += 1;
        if screen_grad >= threshold {
            self.active[i] += 1;
        }
    }

    pub fn len(&self) -> usize {
        self.visible.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visible.is_empty()
    }
}

/// Where a Gaussian of a densified cloud came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    /// Unchanged Gaussian at this pre-step index.
    Kept(usize),
    /// New Gaussian cloned or split from this pre-step index.
    Child(usize),
}

impl Origin {
    pub fn parent(self) -> usize {
        match self {
            Origin::Kept(i) | Origin::Child(i) => i,
        }
    }
}

/// Hierarchical split decision for every Gaussian.
#[derive(Clone, Debug)]
pub struct HngdLevels {
    /// Fused-gradient sample at each Gaussian's voxel.
    pub samples: Vec<f64>,
    /// Running sums after adding this step's weighted samples.
    pub accumulated: Vec<f64>,
    /// Ladder level of the running sum.
    pub targets: Vec<u32>,
    /// Split level applied now: target minus the realized level, capped,
    /// then reduced to fit the population budget.
    pub levels: Vec<u32>,
    pub grid: DensityGrid,
    pub field: GradientField,
}

pub fn hngd_levels(cloud: &GaussianCloud, stats: &DensifyStats, cfg: &DensifyConfig) -> Result<HngdLevels> {
    if stats.len() != cloud.len() {
        return Err(Error::Config(format!(
            "statistics for {} Gaussians, cloud has {}",
            stats.len(),
            cloud.len()
        )));
    }
    let grid = rasterize_density(cloud, cfg.grid_resolution)?;
    let field = gradient_field(&grid, cfg.omega)?;
    let samples: Vec<f64> = cloud
        .gaussians
        .iter()
        .map(|g| {
            let [x, y, z] = grid.voxel_of(&g.position);
            field.fused[grid.index(x, y, z)]
        })
        .collect();
    let interval = cfg.densify_interval as f64;
    let accumulated: Vec<f64> = samples
        .iter()
        .zip(&stats.active)
        .zip(&stats.accumulated)
        .map(|((s, &k), acc)| acc + s * k as f64 / interval)
        .collect();
    let targets: Vec<u32> = accumulated.iter().map(|&a| assign_level(a, cfg)).collect();
    let mut levels: Vec<u32> = targets
        .iter()
        .zip(&stats.realized)
        .map(|(t, r)| t.saturating_sub(*r).min(LEVEL_CAP))
        .collect();
    enforce_budget(&mut levels, cfg.max_gaussians);
    Ok(HngdLevels {
        samples,
        accumulated,
        targets,
        levels,
        grid,
        field,
    })
}

/// Gaussians produced when each entry splits into `2^level` children.
pub fn population(levels: &[u32]) -> usize {
    levels.iter().map(|&l| 1usize << l).sum()
}

/// Lowers the highest levels first until the split population fits, then
/// cancels splits from the back of the cloud if it still does not.
fn enforce_budget(levels: &mut [u32], budget: usize) {
    let mut total = population(levels);
    while total > budget {
        let Some((i, &l)) = levels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l > 1)
            .max_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(&b.0)))
        else {
            break;
        };
        levels[i] = l - 1;
        total -= 1 << (l - 1);
    }
    for l in levels.iter_mut().rev() {
        if total <= budget {
            break;
        }
        if *l == 1 {
            *l = 0;
            total -= 1;
        }
    }
}

/// Split counts of one densification step.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DensifyReport {
    /// `level_counts[l]` Gaussians were split at hierarchical level `l ≥ 1`.
    pub level_counts: Vec<usize>,
    pub cloned: usize,
    /// Large Gaussians split once by the screen-gradient rule.
    pub split: usize,
    pub pruned: usize,
    pub before: usize,
    pub after: usize,
}

impl DensifyReport {
    /// Gaussians split by the hierarchical rule.
    pub fn hierarchical_splits(&self) -> usize {
        self.level_counts.iter().sum()
    }

    /// `level:count` pairs joined by `;`, nonzero levels only.
    pub fn level_summary(&self) -> String {
        self.level_counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(l, c)| format!("{l}:{c}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

impl fmt::Display for DensifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "gaussians {} -> {}: cloned {}, split {}, pruned {}, hierarchical {}",
            self.before,
            self.after,
            self.cloned,
            self.split,
            self.pruned,
            self.hierarchical_splits()
        )?;
        for (l, c) in self.level_counts.iter().enumerate().skip(1) {
            write!(f, "\n  level {l}: {c}")?;
        }
        Ok(())
    }
}

/// Result of [`densify_step`].
#[derive(Clone, Debug)]
pub struct DensifyOutcome {
    pub cloud: GaussianCloud,
    /// Aligned with `cloud.gaussians`.
    pub origins: Vec<Origin>,
    /// Fresh interval counters for the new cloud, carrying the running
    /// ladder sums and realized levels.
    pub stats: DensifyStats,
    pub report: DensifyReport,
}

/// One densification step: hierarchical splits where the running fused
/// gradient reaches a new ladder level, screen-gradient clone/split
/// elsewhere, then opacity pruning.
pub fn densify_step(
    cloud: &GaussianCloud,
    stats: &DensifyStats,
    cfg: &DensifyConfig,
    scene_extent: f64,
) -> Result<DensifyOutcome> {
    cfg.validate()?;
    let n = cloud.len();
    if stats.len() != n {
        return Err(Error::Config(format!("statistics for {} Gaussians, cloud has {n}", stats.len())));
    }
    let (levels, accumulated) = if cfg.strategy == Strategy::None || n == 0 {
        (vec![0; n], stats.accumulated.clone())
    } else {
        let h = hngd_levels(cloud, stats, cfg)?;
        (h.levels, h.accumulated)
    };

    let mut report = DensifyReport {
        before: n,
        ..Default::default()
    };
    let mut out = Vec::with_capacity(n);
    let mut origins = Vec::with_capacity(n);
    for (i, g) in cloud.gaussians.iter().enumerate() {
        let level = levels[i];
        if level >= 1 {
            let l = level as usize;
            if report.level_counts.len() <= l {
                report.level_counts.resize(l + 1, 0);
            }
            report.level_counts[l] += 1;
            for c in split_gaussian(g, level) {
                out.push(c);
                origins.push(Origin::Child(i));
            }
            continue;
        }
        let avg = if stats.visible[i] > 0 {
            stats.grad_sum[i] / stats.visible[i] as f64
        } else {
            0.0
        };
        if avg >= cfg.clone_grad_threshold && out.len() < cfg.max_gaussians {
            if g.scales().max() <= cfg.percent_dense * scene_extent {
                report.cloned += 1;
                out.push(g.clone());
                origins.push(Origin::Kept(i));
                out.push(g.clone());
                origins.push(Origin::Child(i));
            } else {
                report.split += 1;
                for c in split_gaussian(g, 1) {
                    out.push(c);
                    origins.push(Origin::Child(i));
                }
            }
        } else {
            out.push(g.clone());
            origins.push(Origin::Kept(i));
        }
    }

    let mut kept = Vec::with_capacity(out.len());
    let mut kept_origins = Vec::with_capacity(out.len());
    for (g, o) in out.into_iter().zip(origins) {
        if g.opacity() < cfg.prune_opacity {
            report.pruned += 1;
        } else {
            kept.push(g);
            kept_origins.push(o);
        }
    }
    report.after = kept.len();

    let mut next = DensifyStats::new(kept.len());
    for (j, o) in kept_origins.iter().enumerate() {
        let p = o.parent();
        next.accumulated[j] = accumulated[p];
        next.realized[j] = stats.realized[p] + levels[p];
    }
    Ok(DensifyOutcome {
        cloud: GaussianCloud {
            gaussians: kept,
            global_light: cloud.global_light,
        },
        origins: kept_origins,
        stats: next,
        report,
    })
}
