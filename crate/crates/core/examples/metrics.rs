//! PSNR and SSIM of a test pattern under growing noise and blur.
//!
//! cargo run --release --example metrics

use ldsplat::metrics::{format_psnr, psnr, ssim};
use ldsplat::raster::Image;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pattern(w: usize, h: usize) -> Image {
    Image::from_fn(w, h, |x, y| {
        let (u, v) = (x as f64 / w as f64, y as f64 / h as f64);
        Vector3::new(
            0.5 + 0.4 * (9.0 * u).sin() * (6.0 * v).cos(),
            u * v,
            if (x / 8 + y / 8) % 2 == 0 { 0.8 } else { 0.2 },
        )
    })
}

fn blur(img: &Image) -> Image {
    let (w, h) = (img.width, img.height);
    Image::from_fn(w, h, |x, y| {
        let mut acc = Vector3::zeros();
        for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            acc += img.get((x + dx).min(w - 1), (y + dy).min(h - 1));
        }
        acc / 4.0
    })
}

fn main() -> ldsplat::Result<()> {
    let clean = pattern(64, 64);
    println!("identical: psnr={} ssim={:.6}", format_psnr(psnr(&clean, &clean)?), ssim(&clean, &clean)?);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let unit: Vec<f64> = (0..clean.data.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for amp in [0.01, 0.03, 0.1, 0.3] {
        let noisy = Image {
            data: clean.data.iter().zip(&unit).map(|(v, n)| (v + amp * n).clamp(0.0, 1.0)).collect(),
            ..clean.clone()
        };
        println!("noise ±{amp:<4}: psnr={} ssim={:.4}", format_psnr(psnr(&noisy, &clean)?), ssim(&noisy, &clean)?);
    }
    let mut img = clean.clone();
    for k in 1..=3 {
        img = blur(&img);
        println!("blur x{k}:      psnr={} ssim={:.4}", format_psnr(psnr(&img, &clean)?), ssim(&img, &clean)?);
    }
    Ok(())
}
