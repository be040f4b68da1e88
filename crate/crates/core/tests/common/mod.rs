#![allow(dead_code)]

use ldsplat::camera::{Camera, Splat2D};
use ldsplat::metrics::{gaussian_taps, SSIM_K1, SSIM_K2, SSIM_WINDOW};
use ldsplat::optim::{Field, ParamRef};
use ldsplat::raster::Image;
use ldsplat::scene::{logit, normalize_quat, Gaussian3D, GaussianCloud, SH_COEFFS};
use nalgebra::{Matrix2, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random anisotropic cloud with every shading attribute populated.
pub fn random_cloud(n: usize, seed: u64) -> GaussianCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussians = (0..n)
        .map(|_| {
            let mut g = Gaussian3D::isotropic(
                Vector3::new(rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8)),
                1.0,
                rng.gen_range(0.3..0.9),
            );
            g.log_scale = Vector3::new(
                rng.gen_range(0.12f64..0.4).ln(),
                rng.gen_range(0.12f64..0.4).ln(),
                rng.gen_range(0.05f64..0.2).ln(),
            );
            g.rotation = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            normalize_quat(&mut g.rotation);
            for k in 0..SH_COEFFS {
                let amp = if k == 0 { 0.8 } else { 0.25 };
                for ch in 0..3 {
                    g.sh_diffuse[k][ch] = rng.gen_range(-amp..amp);
                    g.sh_specular[k][ch] = rng.gen_range(-amp..amp);
                }
            }
            g.specular_logit = logit(rng.gen_range(0.2..0.8));
            g.visibility = rng.gen_range(0.4..0.9);
            g.local_light = Vector3::new(rng.gen_range(0.0..0.3), rng.gen_range(0.0..0.3), rng.gen_range(0.0..0.3));
            g
        })
        .collect();
    let mut cloud = GaussianCloud::new(gaussians);
    cloud.global_light = Vector3::new(rng.gen_range(0.6..1.0), rng.gen_range(0.6..1.0), rng.gen_range(0.6..1.0));
    cloud
}

pub fn front_camera(res: usize) -> Camera {
    Camera::look_at(
        Vector3::new(0.3, -0.4, -4.0),
        Vector3::zeros(),
        Vector3::new(0.0, -1.0, 0.0),
        (res, res),
        res as f64 * 1.1,
    )
    .unwrap()
}

/// Finite-difference step for a parameter.
pub fn fd_step(p: &ParamRef) -> f64 {
    match p {
        ParamRef::Gaussian {
            field: Field::ShDiffuse | Field::ShSpecular,
            ..
        } => 1e-5,
        _ => 1e-4,
    }
}

/// Smooth pattern with a few hard edges, standing in for a natural image.
pub fn test_pattern(w: usize, h: usize) -> Image {
    Image::from_fn(w, h, |x, y| {
        let (u, v) = (x as f64 / w as f64, y as f64 / h as f64);
        let edge = if (u - 0.6).powi(2) + (v - 0.4).powi(2) < 0.06 { 0.35 } else { 0.0 };
        Vector3::new(
            0.5 + 0.4 * (7.0 * u).sin() * (5.0 * v).cos(),
            (0.2 + 0.6 * u * v + edge).min(1.0),
            0.5 + 0.3 * ((13.0 * (u + v)).sin() + if x % 9 < 4 { 0.2 } else { -0.2 }),
        )
    })
}

/// 3×3 box blur with clamped borders.
pub fn box_blur(img: &Image) -> Image {
    let (w, h) = (img.width as isize, img.height as isize);
    Image::from_fn(img.width, img.height, |x, y| {
        let mut acc = Vector3::zeros();
        for dy in -1..=1 {
            for dx in -1..=1 {
                let xx = (x as isize + dx).clamp(0, w - 1) as usize;
                let yy = (y as isize + dy).clamp(0, h - 1) as usize;
                acc += img.get(xx, yy);
            }
        }
        acc / 9.0
    })
}

/// SSIM by explicit weighted sums over every fully contained window.
pub fn ssim_direct(a: &Image, b: &Image) -> f64 {
    let taps = gaussian_taps();
    let n = SSIM_WINDOW;
    let c1 = (SSIM_K1 * 1.0f64).powi(2);
    let c2 = (SSIM_K2 * 1.0f64).powi(2);
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..3 {
        for y0 in 0..=a.height - n {
            for x0 in 0..=a.width - n {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for j in 0..n {
                    for i in 0..n {
                        let w = taps[i] * taps[j];
                        let va = a.get(x0 + i, y0 + j)[ch];
                        let vb = b.get(x0 + i, y0 + j)[ch];
                        ma += w * va;
                        mb += w * vb;
                        saa += w * va * va;
                        sbb += w * vb * vb;
                        sab += w * va * vb;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    total / count as f64
}

/// Random screen-space splat; about half land near `pixel`.
pub fn random_splat(rng: &mut ChaCha8Rng, pixel: &Vector2<f64>, index: usize) -> Splat2D {
    let a = rng.gen_range(0.5..30.0);
    let c = rng.gen_range(0.5..30.0);
    let b = rng.gen_range(-0.9..0.9) * f64::sqrt(a * c);
    Splat2D {
        mean2d: pixel + Vector2::new(rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0)),
        cov2d: Matrix2::new(a, b, b, c),
        depth: rng.gen_range(0.1..10.0),
        color: Vector3::new(rng.gen(), rng.gen(), rng.gen()),
        opacity: rng.gen_range(0.0..1.0),
        source_index: index,
    }
}
