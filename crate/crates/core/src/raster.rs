//! Tile-based front-to-back alpha compositing.
//!
//! Splats are binned into 16×16 pixel tiles by the axis-aligned box of their
//! 3σ extent, sorted by `(depth, source_index)` inside each tile, and
//! composited per pixel. The splat kernel is truncated at Mahalanobis
//! radius 3, so the tile lists are exact: the per-pixel result equals
//! compositing the globally sorted splat list, which is what
//! [`render_reference`] does.

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;

use crate::camera::{project_cached, Camera, ProjectionCache, Splat2D};
use crate::scene::GaussianCloud;
use crate::shading::{shade_cached, ShadeCache, ShadingConfig};

pub const TILE_SIZE: usize = 16;
pub const ALPHA_MAX: f64 = 0.99;
pub const ALPHA_MIN: f64 = 1.0 / 255.0;
pub const TRANSMITTANCE_MIN: f64 = 1e-4;
/// Squared Mahalanobis radius beyond which a splat contributes nothing.
pub const KERNEL_CUTOFF: f64 = 9.0;

/// RGB image, row-major, channel values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, Vector3::zeros())
    }

    pub fn filled(width: usize, height: usize, color: Vector3<f64>) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(color.as_slice());
        }
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Vector3<f64>) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(f(x, y).as_slice());
            }
        }
        Self { width, height, data }
    }

    pub fn get(&self, x: usize, y: usize) -> Vector3<f64> {
        let i = (y * self.width + x) * 3;
        Vector3::new(self.data[i], self.data[i + 1], self.data[i + 2])
    }

    pub fn set(&mut self, x: usize, y: usize, c: Vector3<f64>) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(c.as_slice());
    }

    pub fn same_size(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Largest per-channel absolute difference.
    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Per-tile splat lists, each sorted front to back.
#[derive(Clone, Debug)]
pub struct TileGrid {
    pub tile_size: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// Indices into the splat slice the grid was built from.
    pub lists: Vec<Vec<usize>>,
}

impl TileGrid {
    pub fn tile(&self, tx: usize, ty: usize) -> &[usize] {
        &self.lists[ty * self.tiles_x + tx]
    }
}

/// Half-width of the axis-aligned box around a splat's 3σ ellipse.
pub fn splat_radius(s: &Splat2D) -> f64 {
    3.0 * s.max_eigenvalue().max(0.0).sqrt()
}

/// Inclusive tile range `(x0, x1, y0, y1)` touched by a splat, or `None`
/// when its box misses the image.
fn tile_range(s: &Splat2D, tiles_x: usize, tiles_y: usize) -> Option<(usize, usize, usize, usize)> {
    let r = splat_radius(s);
    let ts = TILE_SIZE as f64;
    let x0 = ((s.mean2d.x - r) / ts).floor();
    let x1 = ((s.mean2d.x + r) / ts).floor();
    let y0 = ((s.mean2d.y - r) / ts).floor();
    let y1 = ((s.mean2d.y + r) / ts).floor();
    if !(x1 >= 0.0 && y1 >= 0.0 && x0 < tiles_x as f64 && y0 < tiles_y as f64) {
        return None;
    }
    Some((
        x0.max(0.0) as usize,
        (x1 as usize).min(tiles_x - 1),
        y0.max(0.0) as usize,
        (y1 as usize).min(tiles_y - 1),
    ))
}

pub(crate) fn depth_order(splats: &[Splat2D], a: usize, b: usize) -> std::cmp::Ordering {
    splats[a]
        .depth
        .total_cmp(&splats[b].depth)
        .then(splats[a].source_index.cmp(&splats[b].source_index))
}

pub fn bin_tiles(splats: &[Splat2D], resolution: (usize, usize)) -> TileGrid {
    let tiles_x = resolution.0.div_ceil(TILE_SIZE);
    let tiles_y = resolution.1.div_ceil(TILE_SIZE);
    let mut lists = vec![Vec::new(); tiles_x * tiles_y];
    for (i, s) in splats.iter().enumerate() {
        if let Some((x0, x1, y0, y1)) = tile_range(s, tiles_x, tiles_y) {
            for ty in y0..=y1 {
                for tx in x0..=x1 {
                    lists[ty * tiles_x + tx].push(i);
                }
            }
        }
    }
    lists.par_iter_mut().for_each(|l| l.sort_by(|&a, &b| depth_order(splats, a, b)));
    TileGrid {
        tile_size: TILE_SIZE,
        tiles_x,
        tiles_y,
        lists,
    }
}

/// Center of pixel `(x, y)`.
pub fn pixel_center(x: usize, y: usize) -> Vector2<f64> {
    Vector2::new(x as f64 + 0.5, y as f64 + 0.5)
}

/// Kernel evaluation of one splat at a pixel.
#[derive(Clone, Copy, Debug)]
pub(crate) struct KernelSample {
    /// Offset `pixel − mean2d`.
    pub d: Vector2<f64>,
    /// `exp(−½ dᵀ Σ'⁻¹ d)`.
    pub gauss: f64,
    /// Composited alpha, zero when skipped.
    pub alpha: f64,
    /// Whether the 0.99 clamp was active.
    pub clamped: bool,
}

pub(crate) fn sample_kernel(s: &Splat2D, pixel: &Vector2<f64>) -> KernelSample {
    let d = pixel - s.mean2d;
    let skip = KernelSample {
        d,
        gauss: 0.0,
        alpha: 0.0,
        clamped: false,
    };
    let Some(conic) = s.conic() else {
        return skip;
    };
    let power = d.dot(&(conic * d));
    if !(power <= KERNEL_CUTOFF) {
        return skip;
    }
    let gauss = (-0.5 * power).exp();
    let raw = s.opacity * gauss;
    if raw < ALPHA_MIN {
        return skip;
    }
    KernelSample {
        d,
        gauss,
        alpha: raw.min(ALPHA_MAX),
        clamped: raw > ALPHA_MAX,
    }
}

/// Alpha of one splat at a pixel after truncation, clamping and skipping.
pub fn splat_alpha(s: &Splat2D, pixel: &Vector2<f64>) -> f64 {
    sample_kernel(s, pixel).alpha
}

/// Result of compositing one pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Composite {
    /// Final color including the background term.
    pub color: Vector3<f64>,
    /// Transmittance left after the last processed splat.
    pub transmittance: f64,
    /// Number of splats consumed before early termination.
    pub processed: usize,
}

/// Front-to-back compositing of depth-sorted splats at `pixel`.
pub fn composite_pixel<'a>(
    ordered: impl IntoIterator<Item = &'a Splat2D>,
    pixel: &Vector2<f64>,
    background: &Vector3<f64>,
) -> Composite {
    let mut color = Vector3::zeros();
    let mut t = 1.0;
    let mut processed = 0;
    for s in ordered {
        processed += 1;
        let alpha = splat_alpha(s, pixel);
        if alpha == 0.0 {
            continue;
        }
        color += s.color * (t * alpha);
        t *= 1.0 - alpha;
        if t < TRANSMITTANCE_MIN {
            break;
        }
    }
    Composite {
        color: color + background * t,
        transmittance: t,
        processed,
    }
}

/// Blending weights `T_i·α_i` of each splat and the final transmittance.
pub fn blend_weights<'a>(ordered: impl IntoIterator<Item = &'a Splat2D>, pixel: &Vector2<f64>) -> (Vec<f64>, f64) {
    let mut weights = Vec::new();
    let mut t = 1.0;
    for s in ordered {
        let alpha = splat_alpha(s, pixel);
        weights.push(t * alpha);
        if alpha == 0.0 {
            continue;
        }
        t *= 1.0 - alpha;
        if t < TRANSMITTANCE_MIN {
            break;
        }
    }
    (weights, t)
}

/// A visible Gaussian with everything needed to differentiate it.
#[derive(Clone, Debug)]
pub(crate) struct PreparedSplat {
    pub splat: Splat2D,
    pub shade: ShadeCache,
    pub proj: ProjectionCache,
}

/// Shades and projects every Gaussian, keeping visible ones in cloud order.
pub(crate) fn prepare_splats(cam: &Camera, cloud: &GaussianCloud, shading: &ShadingConfig) -> Vec<PreparedSplat> {
    let view_pos = cam.center();
    cloud
        .gaussians
        .par_iter()
        .enumerate()
        .filter_map(|(i, g)| {
            // projection does not depend on color, so cull before shading
            let (mut splat, proj) = project_cached(cam, g, i, Vector3::zeros())?;
            let (color, shade) = shade_cached(g, &cloud.global_light, &view_pos, shading);
            splat.color = color;
            Some(PreparedSplat { splat, shade, proj })
        })
        .collect()
}

/// Per-pixel forward state kept for the backward pass.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct PixelState {
    /// Splats visited before the pixel saturated or its list ran out.
    pub processed: u32,
}

/// Composites every tile; tiles run in parallel and write disjoint pixels.
pub(crate) fn rasterize(
    splats: &[Splat2D],
    grid: &TileGrid,
    resolution: (usize, usize),
    background: &Vector3<f64>,
) -> (Image, Vec<PixelState>) {
    let (w, h) = resolution;
    let tiles: Vec<Vec<(usize, Composite)>> = (0..grid.tiles_x * grid.tiles_y)
        .into_par_iter()
        .map(|t| {
            let (tx, ty) = (t % grid.tiles_x, t / grid.tiles_x);
            let list: Vec<&Splat2D> = grid.lists[t].iter().map(|&i| &splats[i]).collect();
            let mut out = Vec::with_capacity(TILE_SIZE * TILE_SIZE);
            for y in ty * TILE_SIZE..((ty + 1) * TILE_SIZE).min(h) {
                for x in tx * TILE_SIZE..((tx + 1) * TILE_SIZE).min(w) {
                    let c = composite_pixel(list.iter().copied(), &pixel_center(x, y), background);
                    out.push((y * w + x, c));
                }
            }
            out
        })
        .collect();
    let mut image = Image::new(w, h);
    let mut states = vec![PixelState::default(); w * h];
    for (p, c) in tiles.into_iter().flatten() {
        let clamped = c.color.map(|v| v.clamp(0.0, 1.0));
        image.data[p * 3..p * 3 + 3].copy_from_slice(clamped.as_slice());
        states[p] = PixelState {
            processed: c.processed as u32,
        };
    }
    (image, states)
}

/// Full pipeline: cull, shade, project, bin, composite.
pub fn render(cam: &Camera, cloud: &GaussianCloud, shading: &ShadingConfig, background: &Vector3<f64>) -> Image {
    let prepared = prepare_splats(cam, cloud, shading);
    let splats: Vec<Splat2D> = prepared.into_iter().map(|p| p.splat).collect();
    let grid = bin_tiles(&splats, cam.resolution());
    rasterize(&splats, &grid, cam.resolution(), background).0
}

/// Single-threaded O(pixels × splats) renderer with one global depth sort.
pub fn render_reference(
    cam: &Camera,
    cloud: &GaussianCloud,
    shading: &ShadingConfig,
    background: &Vector3<f64>,
) -> Image {
    let view_pos = cam.center();
    let mut splats: Vec<Splat2D> = cloud
        .gaussians
        .iter()
        .enumerate()
        .filter_map(|(i, g)| {
            let color = crate::shading::shade_gaussian(g, &cloud.global_light, &view_pos, shading);
            crate::camera::project_gaussian(cam, g, i, color)
        })
        .collect();
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.source_index.cmp(&b.source_index)));
    Image::from_fn(cam.width, cam.height, |x, y| {
        composite_pixel(&splats, &pixel_center(x, y), background)
            .color
            .map(|v| v.clamp(0.0, 1.0))
    })
}
