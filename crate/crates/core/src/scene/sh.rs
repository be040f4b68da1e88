//! Real spherical harmonics through degree 3.
//!
//! The basis uses the hard-coded constants common to splatting renderers,
//! including their sign convention on the odd-`m` terms. Directions are
//! expected to be unit length; the basis is evaluated as a polynomial in
//! `(x, y, z)` so its gradient is the plain polynomial gradient.

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub const SH_DEGREE: usize = 3;
pub const SH_COEFFS: usize = (SH_DEGREE + 1) * (SH_DEGREE + 1);

/// Per-channel coefficients, indexed `[basis][channel]`.
pub type ShCoeffs = [[f64; 3]; SH_COEFFS];

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
pub const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
pub const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

const UNIT_TOLERANCE: f64 = 1e-6;

pub fn zero_coeffs() -> ShCoeffs {
    [[0.0; 3]; SH_COEFFS]
}

/// Basis values `Y_k(d)` for all 16 functions.
pub fn sh_basis(d: &Vector3<f64>) -> [f64; SH_COEFFS] {
    let (x, y, z) = (d.x, d.y, d.z);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    [
        SH_C0,
        -SH_C1 * y,
        SH_C1 * z,
        -SH_C1 * x,
        SH_C2[0] * x * y,
        SH_C2[1] * y * z,
        SH_C2[2] * (2.0 * zz - xx - yy),
        SH_C2[3] * x * z,
        SH_C2[4] * (xx - yy),
        SH_C3[0] * y * (3.0 * xx - yy),
        SH_C3[1] * x * y * z,
        SH_C3[2] * y * (4.0 * zz - xx - yy),
        SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
        SH_C3[4] * x * (4.0 * zz - xx - yy),
        SH_C3[5] * z * (xx - yy),
        SH_C3[6] * x * (xx - 3.0 * yy),
    ]
}

/// Polynomial gradient of every basis function with respect to `(x, y, z)`.
pub fn sh_basis_grad(d: &Vector3<f64>) -> [Vector3<f64>; SH_COEFFS] {
    let (x, y, z) = (d.x, d.y, d.z);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let v = Vector3::new;
    [
        Vector3::zeros(),
        v(0.0, -SH_C1, 0.0),
        v(0.0, 0.0, SH_C1),
        v(-SH_C1, 0.0, 0.0),
        v(y, x, 0.0) * SH_C2[0],
        v(0.0, z, y) * SH_C2[1],
        v(-2.0 * x, -2.0 * y, 4.0 * z) * SH_C2[2],
        v(z, 0.0, x) * SH_C2[3],
        v(2.0 * x, -2.0 * y, 0.0) * SH_C2[4],
        v(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0) * SH_C3[0],
        v(y * z, x * z, x * y) * SH_C3[1],
        v(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z) * SH_C3[2],
        v(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy) * SH_C3[3],
        v(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z) * SH_C3[4],
        v(2.0 * x * z, -2.0 * y * z, xx - yy) * SH_C3[5],
        v(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0) * SH_C3[6],
    ]
}

/// Evaluates the SH expansion per channel. Output is unclamped.
pub fn eval_sh(coeffs: &ShCoeffs, dir: &Vector3<f64>) -> Result<Vector3<f64>> {
    let norm = dir.norm();
    if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
        return Err(Error::NonUnitDirection(norm));
    }
    Ok(eval_sh_unchecked(coeffs, dir))
}

pub(crate) fn eval_sh_unchecked(coeffs: &ShCoeffs, dir: &Vector3<f64>) -> Vector3<f64> {
    contract(coeffs, &sh_basis(dir))
}

pub(crate) fn contract(coeffs: &ShCoeffs, basis: &[f64; SH_COEFFS]) -> Vector3<f64> {
    let mut out = Vector3::zeros();
    for (c, b) in coeffs.iter().zip(basis) {
        out.x += c[0] * b;
        out.y += c[1] * b;
        out.z += c[2] * b;
    }
    out
}

/// Backward of `eval_sh` for an upstream color gradient: returns the
/// gradient with respect to `dir` (polynomial, not projected) and
/// accumulates coefficient gradients into `d_coeffs`.
pub(crate) fn eval_sh_backward(
    coeffs: &ShCoeffs,
    dir: &Vector3<f64>,
    d_color: &Vector3<f64>,
    d_coeffs: &mut ShCoeffs,
) -> Vector3<f64> {
    let basis = sh_basis(dir);
    let grads = sh_basis_grad(dir);
    let mut d_dir = Vector3::zeros();
    for k in 0..SH_COEFFS {
        for ch in 0..3 {
            d_coeffs[k][ch] += basis[k] * d_color[ch];
        }
        let weight = coeffs[k][0] * d_color.x + coeffs[k][1] * d_color.y + coeffs[k][2] * d_color.z;
        if weight != 0.0 {
            d_dir += grads[k] * weight;
        }
    }
    d_dir
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z).normalize()
    }

    #[test]
    fn dc_term_is_constant() {
        let mut c = zero_coeffs();
        c[0] = [1.0, 1.0, 1.0];
        for d in [unit(1.0, 2.0, 3.0), unit(-1.0, 0.0, 0.2), unit(0.0, 0.0, 1.0)] {
            let out = eval_sh(&c, &d).unwrap();
            for ch in 0..3 {
                assert!((out[ch] - 0.282_094_8).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn y10_along_z() {
        // Y_10 = sqrt(3 / 4pi) * z
        let expected = (3.0 / (4.0 * std::f64::consts::PI)).sqrt();
        let mut c = zero_coeffs();
        c[2][1] = 1.0;
        let out = eval_sh(&c, &Vector3::z()).unwrap();
        assert!((out.y - expected).abs() < 1e-12);
        assert!((out.y - 0.488_602_5).abs() < 1e-7);
        assert_eq!(out.x, 0.0);
        assert_eq!(out.z, 0.0);
    }

    #[test]
    fn rejects_non_unit() {
        let c = zero_coeffs();
        assert!(matches!(
            eval_sh(&c, &Vector3::new(0.0, 0.0, 1.1)),
            Err(Error::NonUnitDirection(_))
        ));
        assert!(eval_sh(&c, &Vector3::new(f64::NAN, 0.0, 1.0)).is_err());
    }

    #[test]
    fn even_degrees_are_parity_symmetric() {
        let mut c = zero_coeffs();
        for (k, row) in c.iter_mut().enumerate() {
            let l = (k as f64).sqrt().floor() as usize;
            if l % 2 == 0 {
                *row = [0.3 * k as f64 - 1.0, 0.1 * k as f64, -0.05 * k as f64];
            }
        }
        let d = unit(0.3, -0.7, 0.4);
        let a = eval_sh(&c, &d).unwrap();
        let b = eval_sh(&c, &(-d)).unwrap();
        assert!((a - b).norm() < 1e-14);
    }

    #[test]
    fn basis_is_orthonormal_under_quadrature() {
        // Fibonacci sphere quadrature of <Y_i, Y_j>.
        let n = 20_000;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let mut gram = [[0.0; SH_COEFFS]; SH_COEFFS];
        for i in 0..n {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            let b = sh_basis(&Vector3::new(r * phi.cos(), r * phi.sin(), z));
            for a in 0..SH_COEFFS {
                for c in 0..SH_COEFFS {
                    gram[a][c] += b[a] * b[c];
                }
            }
        }
        let w = 4.0 * std::f64::consts::PI / n as f64;
        for a in 0..SH_COEFFS {
            for c in 0..SH_COEFFS {
                let expected = if a == c { 1.0 } else { 0.0 };
                assert!((gram[a][c] * w - expected).abs() < 1e-3, "({a},{c})");
            }
        }
    }

    #[test]
    fn basis_gradient_matches_central_differences() {
        let d = Vector3::new(0.31, -0.52, 0.77);
        let grads = sh_basis_grad(&d);
        let h = 1e-6;
        for axis in 0..3 {
            let mut p = d;
            let mut m = d;
            p[axis] += h;
            m[axis] -= h;
            let (bp, bm) = (sh_basis(&p), sh_basis(&m));
            for k in 0..SH_COEFFS {
                let fd = (bp[k] - bm[k]) / (2.0 * h);
                assert!((fd - grads[k][axis]).abs() < 1e-8, "basis {k} axis {axis}");
            }
        }
    }
}
