use crate::error::{Error, Result};
use crate::metrics::ssim_with_grad;
use crate::raster::Image;

/// `(1 − λ)·mean|r − g| + λ·(1 − SSIM(r, g))`.
pub fn loss(rendered: &Image, gt: &Image, lambda: f64) -> Result<f64> {
    Ok(loss_with_grad(rendered, gt, lambda, false)?.0)
}

/// Loss value and, when requested, `∂loss/∂rendered` laid out like
/// `Image::data`.
pub fn loss_with_grad(rendered: &Image, gt: &Image, lambda: f64, want_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
    if !rendered.same_size(gt) {
        return Err(Error::DimensionMismatch(rendered.width, rendered.height, gt.width, gt.height));
    }
    let n = rendered.data.len() as f64;
    let l1 = rendered.data.iter().zip(&gt.data).map(|(r, g)| (r - g).abs()).sum::<f64>() / n;
    let (ssim, d_ssim) = if lambda > 0.0 {
        ssim_with_grad(rendered, gt, want_grad)?
    } else {
        (1.0, None)
    };
    let value = (1.0 - lambda) * l1 + lambda * (1.0 - ssim);
    let grad = want_grad.then(|| {
        let mut g: Vec<f64> = rendered
            .data
            .iter()
            .zip(&gt.data)
            .map(|(r, t)| {
                let s = if r > t {
                    1.0
                } else if r < t {
                    -1.0
                } else {
                    0.0
                };
                (1.0 - lambda) * s / n
            })
            .collect();
        if let Some(ds) = d_ssim {
            g.iter_mut().zip(ds).for_each(|(v, d)| *v -= lambda * d);
        }
        g
    });
    Ok((value, grad))
}
