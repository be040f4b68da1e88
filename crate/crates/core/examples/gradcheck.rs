//! Analytic gradients against central finite differences, per parameter field.
//!
//! cargo run --release --example gradcheck -- [gaussians] [shading-mode]

use std::collections::BTreeMap;

use ldsplat::optim::{all_params, backward, fd_gradient, Objective, ParamRef};
use ldsplat::raster::render;
use ldsplat::scene::{logit, Gaussian3D, GaussianCloud};
use ldsplat::{Camera, ShadingConfig, ShadingMode};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(n: usize, seed: u64) -> GaussianCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussians = (0..n)
        .map(|_| {
            let p = Vector3::new(rng.gen_range(-0.7..0.7), rng.gen_range(-0.7..0.7), rng.gen_range(-0.7..0.7));
            let mut g = Gaussian3D::isotropic(p, rng.gen_range(0.1..0.35), rng.gen_range(0.3..0.9));
            g.log_scale.z += rng.gen_range(-0.8..0.0);
            g.rotation = [1.0, rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
            ldsplat::scene::normalize_quat(&mut g.rotation);
            for k in 0..4 {
                for ch in 0..3 {
                    g.sh_diffuse[k][ch] = rng.gen_range(-0.5..0.5);
                    g.sh_specular[k][ch] = rng.gen_range(-0.5..0.5);
                }
            }
            g.specular_logit = logit(rng.gen_range(0.2..0.8));
            g.visibility = rng.gen_range(0.5..1.0);
            g
        })
        .collect();
    GaussianCloud::new(gaussians)
}

fn main() -> ldsplat::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(5, |s| s.parse().expect("gaussians"));
    let mode: ShadingMode = args.next().map_or(Ok(ShadingMode::Full), |s| s.parse())?;
    let shading = ShadingConfig::new(mode, None)?;
    let cam = Camera::look_at(Vector3::new(0.3, -0.4, -4.0), Vector3::zeros(), -Vector3::y(), (64, 64), 70.0)?;
    let (x, target) = (cloud(n, 1), cloud(n, 2));
    let objective = Objective::default();
    let gt = render(&cam, &target, &shading, &objective.background);
    let (loss, grads) = backward(&x, &cam, &gt, &shading, &objective)?;
    println!("loss {loss:.6}");

    let mut by_field: BTreeMap<&str, (usize, usize, f64)> = BTreeMap::new();
    for p in all_params(&x) {
        let a = grads.get(&p);
        let h = match p {
            ParamRef::Gaussian { field, .. } if field.name().starts_with("sh") => 1e-5,
            _ => 1e-4,
        };
        let f = fd_gradient(&x, &cam, &gt, &shading, &objective, &p, h)?;
        let scale = a.abs().max(f.abs());
        if scale <= 1e-8 {
            continue;
        }
        let name = match p {
            ParamRef::Gaussian { field, .. } => field.name(),
            ParamRef::GlobalLight { .. } => "global_light",
        };
        let rel = (a - f).abs() / scale;
        let e = by_field.entry(name).or_default();
        e.0 += 1;
        e.1 += (rel <= 1e-3) as usize;
        e.2 = e.2.max(rel);
    }
    for (name, (checked, ok, worst)) in by_field {
        println!("{name:>16}: {ok:3}/{checked:3} within 1e-3, worst relative error {worst:.1e}");
    }
    Ok(())
}
