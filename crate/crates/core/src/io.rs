//! File formats: checkpoints, point files, camera lists, images and grid dumps.
//!
//! Binary formats are little-endian with a magic tag and a version word.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{orthonormal_deviation, Camera};
use crate::densify::DensityGrid;
use crate::error::{Error, Result};
use crate::optim::{flatten, unflatten, PARAMS_PER_GAUSSIAN};
use crate::raster::Image;
use crate::scene::{logit, zero_coeffs, Gaussian3D, GaussianCloud, SCALE_FLOOR, SH_C0};
use crate::shading::SH_OFFSET;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LDSPLAT\0";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const POINTS_MAGIC: &[u8; 8] = b"LDPOINTS";
pub const GRID_MAGIC: &[u8; 8] = b"LDGRID\0\0";
/// Rotations drifting less than this from orthonormal are repaired on load.
pub const REORTHONORMALIZE_TOLERANCE: f64 = 1e-3;
/// Opacity and specular weight of Gaussians created from points.
pub const INIT_PROBABILITY: f64 = 0.1;
const KNN: usize = 3;

/// Positions and optional per-point colors.
type PointRecords = (Vec<Vector3<f64>>, Option<Vec<Vector3<f64>>>);

/// A saved cloud plus a free-form echo of the configuration that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub cloud: GaussianCloud,
    pub config: String,
}

/// Little-endian cursor that reports the byte offset of a short read.
struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(path: &'a Path, bytes: &'a [u8]) -> Self {
        Self { path, bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::parse(
                self.path,
                format!("offset {}: truncated while reading {what}", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn magic(&mut self, expected: &[u8; 8], kind: &str) -> Result<()> {
        if self.take(8, "magic")? != expected {
            return Err(Error::parse(self.path, format!("offset 0: not a {kind} file")));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::parse(
                self.path,
                format!("offset {}: {} trailing bytes", self.pos, self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }
}

pub fn checkpoint_bytes(cloud: &GaussianCloud, config: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(40 + cloud.len() * PARAMS_PER_GAUSSIAN * 8 + config.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(cloud.len() as u64).to_le_bytes());
    for v in cloud.global_light.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for g in &cloud.gaussians {
        for v in flatten(g) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&(config.len() as u64).to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    out
}

pub fn parse_checkpoint(path: &Path, bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::new(path, bytes);
    r.magic(CHECKPOINT_MAGIC, "checkpoint")?;
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::parse(path, format!("offset 8: unsupported checkpoint version {version}")));
    }
    let count = r.u64("gaussian count")? as usize;
    let need = count.checked_mul(PARAMS_PER_GAUSSIAN * 8);
    if need.is_none_or(|n| n > bytes.len()) {
        return Err(Error::parse(path, format!("offset 12: gaussian count {count} exceeds file size")));
    }
    let mut global_light = Vector3::zeros();
    for v in global_light.iter_mut() {
        *v = r.f64("global light")?;
    }
    let mut gaussians = Vec::with_capacity(count);
    let mut flat = [0.0; PARAMS_PER_GAUSSIAN];
    for i in 0..count {
        for v in flat.iter_mut() {
            *v = r.f64(&format!("gaussian {i}"))?;
        }
        gaussians.push(unflatten(&flat));
    }
    let len = r.u64("config length")? as usize;
    let at = r.pos;
    let config = String::from_utf8(r.take(len, "config")?.to_vec())
        .map_err(|_| Error::parse(path, format!("offset {at}: config echo is not UTF-8")))?;
    r.finish()?;
    Ok(Checkpoint {
        cloud: GaussianCloud { gaussians, global_light },
        config,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, cloud: &GaussianCloud, config: &str) -> Result<()> {
    fs::write(path, checkpoint_bytes(cloud, config))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    parse_checkpoint(path, &fs::read(path)?)
}

/// Mean distance from each point to its `k` nearest neighbors.
///
/// Points are swept in `x` order and the scan stops once the `x` gap alone
/// exceeds the current k-th best distance.
pub fn knn_mean_distance(points: &[Vector3<f64>], k: usize) -> Vec<f64> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].x.total_cmp(&points[b].x));
    let mut out = vec![0.0; points.len()];
    let mut best: Vec<f64> = Vec::with_capacity(k + 1);
    for (rank, &i) in order.iter().enumerate() {
        best.clear();
        let p = &points[i];
        let consider = |j: usize, best: &mut Vec<f64>| -> bool {
            let q = &points[j];
            if best.len() == k && (q.x - p.x).abs() > best[k - 1] {
                return false;
            }
            let d = (q - p).norm();
            let at = best.partition_point(|&b| b <= d);
            if at < k {
                best.insert(at, d);
                best.truncate(k);
            }
            true
        };
        for &j in &order[rank + 1..] {
            if !consider(j, &mut best) {
                break;
            }
        }
        for &j in order[..rank].iter().rev() {
            if !consider(j, &mut best) {
                break;
            }
        }
        out[i] = if best.is_empty() {
            1.0
        } else {
            best.iter().sum::<f64>() / best.len() as f64
        };
    }
    out
}

/// Gaussians initialized from points, one per point.
pub fn cloud_from_points(points: &[Vector3<f64>], colors: Option<&[Vector3<f64>]>) -> GaussianCloud {
    let dist = knn_mean_distance(points, KNN);
    let gaussians = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut g = Gaussian3D::isotropic(*p, dist[i].max(SCALE_FLOOR), INIT_PROBABILITY);
            g.sh_diffuse = zero_coeffs();
            if let Some(c) = colors {
                let dc = (c[i] - Vector3::repeat(SH_OFFSET)) / SH_C0;
                g.sh_diffuse[0] = [dc.x, dc.y, dc.z];
            }
            g.specular_logit = logit(INIT_PROBABILITY);
            g
        })
        .collect();
    GaussianCloud::new(gaussians)
}

fn parse_text_points(path: &Path, text: &str) -> Result<PointRecords> {
    let mut points = Vec::new();
    let mut colors = Vec::new();
    let mut with_color = None;
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::parse(path, format!("line {}: {e}", n + 1)))?;
        let has = match vals.len() {
            3 => false,
            6 => true,
            k => return Err(Error::parse(path, format!("line {}: expected 3 or 6 values, found {k}", n + 1))),
        };
        if *with_color.get_or_insert(has) != has {
            return Err(Error::parse(path, format!("line {}: colors present on some lines only", n + 1)));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(path, format!("line {}: non-finite value", n + 1)));
        }
        points.push(Vector3::new(vals[0], vals[1], vals[2]));
        if has {
            colors.push(Vector3::new(vals[3], vals[4], vals[5]));
        }
    }
    // 8-bit colors are recognized by any channel above 1
    if colors.iter().any(|c| c.max() > 1.0) {
        colors.iter_mut().for_each(|c| *c /= 255.0);
    }
    Ok((points, with_color.unwrap_or(false).then_some(colors)))
}

fn parse_binary_points(path: &Path, bytes: &[u8]) -> Result<PointRecords> {
    let mut r = Reader::new(path, bytes);
    r.magic(POINTS_MAGIC, "point")?;
    let flags = r.u32("flags")?;
    if flags > 1 {
        return Err(Error::parse(path, format!("offset 8: unknown flags {flags:#x}")));
    }
    let has = flags & 1 == 1;
    let count = r.u64("point count")? as usize;
    let stride = if has { 24 } else { 12 };
    if count.checked_mul(stride).is_none_or(|n| n > bytes.len()) {
        return Err(Error::parse(path, format!("offset 12: point count {count} exceeds file size")));
    }
    let mut points = Vec::with_capacity(count);
    let mut colors = Vec::new();
    for i in 0..count {
        let what = format!("point {i}");
        let mut v = [0.0; 6];
        for x in v.iter_mut().take(if has { 6 } else { 3 }) {
            *x = r.f32(&what)? as f64;
        }
        points.push(Vector3::new(v[0], v[1], v[2]));
        if has {
            colors.push(Vector3::new(v[3], v[4], v[5]));
        }
    }
    r.finish()?;
    Ok((points, has.then_some(colors)))
}

/// Binary point file: magic, `u32` flags (bit 0 = has color), `u64` count,
/// then `f32` records `x y z [r g b]` with colors in `[0, 1]`.
pub fn points_bytes(points: &[Vector3<f64>], colors: Option<&[Vector3<f64>]>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(POINTS_MAGIC);
    out.extend_from_slice(&(colors.is_some() as u32).to_le_bytes());
    out.extend_from_slice(&(points.len() as u64).to_le_bytes());
    for (i, p) in points.iter().enumerate() {
        let mut rec: Vec<f64> = p.iter().copied().collect();
        if let Some(c) = colors {
            rec.extend(c[i].iter());
        }
        for v in rec {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Loads a binary point file (detected by its magic) or a text file with
/// `x y z` or `x y z r g b` per line. Text colors may be in `[0, 1]` or
/// `0..=255`.
pub fn load_points(path: impl AsRef<Path>) -> Result<GaussianCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let (points, colors) = if bytes.starts_with(POINTS_MAGIC) {
        parse_binary_points(path, &bytes)?
    } else {
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::parse(path, format!("offset {}: not UTF-8 text", e.valid_up_to())))?;
        parse_text_points(path, text)?
    };
    if points.is_empty() {
        return Err(Error::parse(path, "no points"));
    }
    Ok(cloud_from_points(&points, colors.as_deref()))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ViewRecord {
    resolution: [usize; 2],
    focal: [f64; 2],
    principal: [f64; 2],
    /// Rows of `[R | t]`.
    world_to_camera: [[f64; 4]; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    near: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    far: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraFile {
    #[serde(default)]
    view: Vec<ViewRecord>,
}

/// A camera with the path of its ground-truth image, if any.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraEntry {
    pub camera: Camera,
    pub image: Option<PathBuf>,
}

/// Nearest rotation in the Frobenius sense.
fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * vt;
    }
    r
}

/// Repairs a slightly drifted rotation, rejecting anything further off.
pub fn reorthonormalize(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    let dev = orthonormal_deviation(m);
    if !(dev < REORTHONORMALIZE_TOLERANCE) {
        return Err(Error::NonOrthonormalRotation(dev));
    }
    Ok(nearest_rotation(m))
}

/// Parses a camera list in TOML:
///
/// ```toml
/// [[view]]
/// resolution = [64, 64]
/// focal = [70.0, 70.0]
/// principal = [32.0, 32.0]
/// world_to_camera = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 4.0]]
/// image = "views/000.png"
/// ```
///
/// Relative image paths are resolved against `base`.
pub fn parse_cameras(path: &Path, text: &str, base: &Path) -> Result<Vec<CameraEntry>> {
    let file: CameraFile = toml::from_str(text).map_err(|e| {
        let at = e.span().map(|s| {
            let line = text[..s.start].matches('\n').count() + 1;
            format!("line {line}: ")
        });
        Error::parse(path, format!("{}{}", at.unwrap_or_default(), e.message()))
    })?;
    file.view
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let m = v.world_to_camera;
            let rot = Matrix3::from_fn(|r, c| m[r][c]);
            let rot = reorthonormalize(&rot).map_err(|e| Error::parse(path, format!("view {i}: {e}")))?;
            let camera = Camera::new(
                rot,
                Vector3::new(m[0][3], m[1][3], m[2][3]),
                (v.focal[0], v.focal[1]),
                (v.principal[0], v.principal[1]),
                (v.resolution[0], v.resolution[1]),
                v.near.unwrap_or(0.01),
                v.far.unwrap_or(100.0),
            )
            .map_err(|e| Error::parse(path, format!("view {i}: {e}")))?;
            Ok(CameraEntry {
                camera,
                image: v.image.map(|p| if p.is_relative() { base.join(p) } else { p }),
            })
        })
        .collect()
}

pub fn load_cameras(path: impl AsRef<Path>) -> Result<Vec<CameraEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_cameras(path, &text, path.parent().unwrap_or(Path::new(".")))
}

pub fn cameras_toml(entries: &[CameraEntry]) -> String {
    let file = CameraFile {
        view: entries
            .iter()
            .map(|e| {
                let c = &e.camera;
                let r = &c.rotation;
                let t = &c.translation;
                ViewRecord {
                    resolution: [c.width, c.height],
                    focal: [c.fx, c.fy],
                    principal: [c.cx, c.cy],
                    world_to_camera: std::array::from_fn(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)], t[i]]),
                    image: e.image.clone(),
                    near: Some(c.near),
                    far: Some(c.far),
                }
            })
            .collect(),
    };
    toml::to_string(&file).expect("camera records serialize")
}

pub fn save_cameras(path: impl AsRef<Path>, entries: &[CameraEntry]) -> Result<()> {
    fs::write(path, cameras_toml(entries))?;
    Ok(())
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an 8-bit RGB image; the format follows the extension (png, ppm).
pub fn save_image(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let buf: Vec<u8> = img.data.iter().map(|&v| quantize(v)).collect();
    let rgb = image::RgbImage::from_raw(img.width as u32, img.height as u32, buf).expect("buffer matches dimensions");
    rgb.save(path)?;
    Ok(())
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let rgb = image::open(path)?.to_rgb8();
    Ok(Image {
        width: rgb.width() as usize,
        height: rgb.height() as usize,
        data: rgb.as_raw().iter().map(|&b| b as f64 / 255.0).collect(),
    })
}

/// Voxel grid dump: magic, `u32` version, three `u64` dims, `f64` origin,
/// `f64` voxel size, then `f32` values with `x` fastest.
pub fn grid_bytes(grid: &DensityGrid, values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(68 + values.len() * 4);
    out.extend_from_slice(GRID_MAGIC);
    out.extend_from_slice(&1u32.to_le_bytes());
    for d in grid.dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in grid.origin.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&grid.voxel_size.to_le_bytes());
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Writes `values` laid out on `grid`'s voxels.
pub fn save_grid(path: impl AsRef<Path>, grid: &DensityGrid, values: &[f64]) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::Config(format!("{} values for a grid of {} voxels", values.len(), grid.len())));
    }
    fs::write(path, grid_bytes(grid, values))?;
    Ok(())
}

/// Reads a grid dump back.
pub fn load_grid(path: impl AsRef<Path>) -> Result<DensityGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let mut r = Reader::new(path, &bytes);
    r.magic(GRID_MAGIC, "grid")?;
    let version = r.u32("version")?;
    if version != 1 {
        return Err(Error::parse(path, format!("offset 8: unsupported grid version {version}")));
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        *d = r.u64("dims")? as usize;
    }
    let mut origin = Vector3::zeros();
    for v in origin.iter_mut() {
        *v = r.f64("origin")?;
    }
    let voxel_size = r.f64("voxel size")?;
    let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
    if n.is_none_or(|n| n.saturating_mul(4) > bytes.len()) {
        return Err(Error::parse(path, format!("offset 12: dims {dims:?} exceed file size")));
    }
    let values = (0..n.unwrap()).map(|_| r.f32("values").map(f64::from)).collect::<Result<_>>()?;
    r.finish()?;
    Ok(DensityGrid {
        origin,
        voxel_size,
        dims,
        values,
    })
}
