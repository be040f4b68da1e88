//! Image-quality metrics: PSNR and windowed SSIM.
//!
//! SSIM uses an 11×11 Gaussian window (σ = 1.5), `K1 = 0.01`, `K2 = 0.03`
//! and a dynamic range of 1. Only windows fully inside the image are
//! scored; the result is the mean over windows and channels.

use crate::error::{Error, Result};
use crate::raster::Image;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_dims(a: &Image, b: &Image) -> Result<()> {
    if !a.same_size(b) {
        return Err(Error::DimensionMismatch(a.width, a.height, b.width, b.height));
    }
    Ok(())
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let sum: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.data.len().max(1) as f64)
}

/// Peak signal-to-noise ratio in dB for a peak of 1.0. Identical images
/// give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / m).log10())
}

/// Formats a PSNR value, spelling out the identical-image case.
pub fn format_psnr(v: f64) -> String {
    if v.is_infinite() {
        "INFINITE".to_string()
    } else {
        format!("{v:.6}")
    }
}

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - c;
        *t = (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// A single-channel plane.
#[derive(Clone, Debug)]
struct Plane {
    w: usize,
    h: usize,
    v: Vec<f64>,
}

impl Plane {
    fn channel(img: &Image, ch: usize) -> Self {
        Self {
            w: img.width,
            h: img.height,
            v: img.data.iter().skip(ch).step_by(3).copied().collect(),
        }
    }

    fn zip(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        Plane {
            w: self.w,
            h: self.h,
            v: self.v.iter().zip(&other.v).map(|(a, b)| f(*a, *b)).collect(),
        }
    }
}

/// Separable "valid" filtering with the SSIM window.
fn filter_valid(p: &Plane, taps: &[f64; SSIM_WINDOW]) -> Plane {
    let (ow, oh) = (p.w + 1 - SSIM_WINDOW, p.h + 1 - SSIM_WINDOW);
    let mut tmp = vec![0.0; ow * p.h];
    for y in 0..p.h {
        let row = &p.v[y * p.w..(y + 1) * p.w];
        for x in 0..ow {
            tmp[y * ow + x] = taps.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for (k, t) in taps.iter().enumerate() {
            let src = &tmp[(y + k) * ow..(y + k + 1) * ow];
            for (o, s) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                *o += t * s;
            }
        }
    }
    Plane { w: ow, h: oh, v: out }
}

/// Adjoint of [`filter_valid`]: scatters a window map back to full size.
fn filter_adjoint(m: &Plane, w: usize, h: usize, taps: &[f64; SSIM_WINDOW]) -> Plane {
    let mut tmp = vec![0.0; m.w * h];
    for y in 0..m.h {
        for (k, t) in taps.iter().enumerate() {
            let dst = &mut tmp[(y + k) * m.w..(y + k + 1) * m.w];
            for (d, s) in dst.iter_mut().zip(&m.v[y * m.w..(y + 1) * m.w]) {
                *d += t * s;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..m.w {
            let s = tmp[y * m.w + x];
            if s == 0.0 {
                continue;
            }
            for (k, t) in taps.iter().enumerate() {
                out[y * w + x + k] += t * s;
            }
        }
    }
    Plane { w, h, v: out }
}

fn check_ssim_dims(a: &Image, b: &Image) -> Result<()> {
    check_dims(a, b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::ImageTooSmall(a.width, a.height));
    }
    Ok(())
}

/// Per-window SSIM terms for one channel pair.
struct WindowStats {
    mu_x: Plane,
    mu_y: Plane,
    e_xx: Plane,
    e_yy: Plane,
    e_xy: Plane,
}

impl WindowStats {
    fn new(x: &Plane, y: &Plane, taps: &[f64; SSIM_WINDOW]) -> Self {
        Self {
            mu_x: filter_valid(x, taps),
            mu_y: filter_valid(y, taps),
            e_xx: filter_valid(&x.zip(x, |a, b| a * b), taps),
            e_yy: filter_valid(&y.zip(y, |a, b| a * b), taps),
            e_xy: filter_valid(&x.zip(y, |a, b| a * b), taps),
        }
    }
}

const C1: f64 = (SSIM_K1 * 1.0) * (SSIM_K1 * 1.0);
const C2: f64 = (SSIM_K2 * 1.0) * (SSIM_K2 * 1.0);

/// Mean SSIM over valid windows and channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    Ok(ssim_with_grad(a, b, false)?.0)
}

/// SSIM and, if requested, its gradient with respect to `a` laid out like
/// `Image::data`.
pub fn ssim_with_grad(a: &Image, b: &Image, want_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
    check_ssim_dims(a, b)?;
    let taps = gaussian_taps();
    let windows = ((a.width + 1 - SSIM_WINDOW) * (a.height + 1 - SSIM_WINDOW)) as f64;
    let norm = 1.0 / (3.0 * windows);
    let mut total = 0.0;
    let mut grad = want_grad.then(|| vec![0.0; a.data.len()]);
    for ch in 0..3 {
        let x = Plane::channel(a, ch);
        let y = Plane::channel(b, ch);
        let st = WindowStats::new(&x, &y, &taps);
        let n = st.mu_x.v.len();
        let (mut d_mu, mut d_exx, mut d_exy) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            let (mx, my) = (st.mu_x.v[i], st.mu_y.v[i]);
            let sxx = st.e_xx.v[i] - mx * mx;
            let syy = st.e_yy.v[i] - my * my;
            let sxy = st.e_xy.v[i] - mx * my;
            let a1 = 2.0 * mx * my + C1;
            let a2 = 2.0 * sxy + C2;
            let b1 = mx * mx + my * my + C1;
            let b2 = sxx + syy + C2;
            let s = (a1 * a2) / (b1 * b2);
            total += s;
            if grad.is_some() {
                let bb = b1 * b2;
                d_mu[i] = norm * ((2.0 * my * a2 - 2.0 * my * a1) / bb - s * (2.0 * mx / b1 - 2.0 * mx / b2));
                d_exx[i] = norm * (-s / b2);
                d_exy[i] = norm * (2.0 * a1 / bb);
            }
        }
        if let Some(g) = grad.as_mut() {
            let wrap = |v: Vec<f64>| Plane { w: st.mu_x.w, h: st.mu_x.h, v };
            let g_mu = filter_adjoint(&wrap(d_mu), a.width, a.height, &taps);
            let g_xx = filter_adjoint(&wrap(d_exx), a.width, a.height, &taps);
            let g_xy = filter_adjoint(&wrap(d_exy), a.width, a.height, &taps);
            for p in 0..x.v.len() {
                g[p * 3 + ch] = g_mu.v[p] + 2.0 * x.v[p] * g_xx.v[p] + y.v[p] * g_xy.v[p];
            }
        }
    }
    Ok((total * norm, grad))
}
