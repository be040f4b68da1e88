//! Light decomposition on the glossy plane: renders each shading mode and
//! sweeps the specular weight to show the lobe switching on.
//!
//! cargo run --release --example ld_shading -- [out-dir]

use std::path::PathBuf;

use ldsplat::io::save_image;
use ldsplat::raster::{render, Image};
use ldsplat::scene::logit;
use ldsplat::shading::{compose_color, incident_light};
use ldsplat::synth::{make_synthetic, SceneKind};
use ldsplat::{ShadingConfig, ShadingMode};
use nalgebra::Vector3;

fn peak_luminance(img: &Image) -> f64 {
    img.data
        .chunks_exact(3)
        .map(|c| 0.2126 * c[0] + 0.7152 * c[1] + 0.0722 * c[2])
        .fold(0.0, f64::max)
}

fn main() -> ldsplat::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "ld_renders".into()));
    std::fs::create_dir_all(&out)?;

    // one Gaussian's color by hand
    let (d, s) = (Vector3::new(0.6, 0.4, 0.3), Vector3::new(0.9, 0.9, 0.8));
    let light = incident_light(0.8, &Vector3::repeat(1.0), &Vector3::new(0.05, 0.0, 0.0));
    for a in [0.0, 0.5, 1.0] {
        let c = compose_color(&d, &s, a, 0.7);
        println!("a = {a:.1}: color {:.3?}  lit {:.3?}", c.as_slice(), c.component_mul(&light).as_slice());
    }

    let scene = make_synthetic(SceneKind::MirrorLit, 0);
    let (cam, _) = &scene.views[0];
    let light_dir = scene.shading.light_direction;
    for mode in [ShadingMode::Full, ShadingMode::DiffuseOnly, ShadingMode::SpecularOnly, ShadingMode::BaselineSh] {
        let shading = ShadingConfig::new(mode, light_dir)?;
        let img = render(cam, &scene.generator, &shading, &Vector3::zeros());
        println!("{mode:>14}: peak luminance {:.3}", peak_luminance(&img));
        save_image(out.join(format!("{mode}.png")), &img)?;
    }

    for a in [0.01, 0.25, 0.5, 0.75, 0.99] {
        let mut cloud = scene.generator.clone();
        cloud.gaussians.iter_mut().for_each(|g| g.specular_logit = logit(a));
        let img = render(cam, &cloud, &scene.shading, &Vector3::zeros());
        println!("specular weight {a:.2}: peak luminance {:.3}", peak_luminance(&img));
    }
    Ok(())
}
