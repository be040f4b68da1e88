//! Renders the colored-lattice scene with the tiled rasterizer and the
//! brute-force reference, reports their largest difference and writes PNGs.
//!
//! cargo run --release --example render_grid -- [out-dir]

use std::path::PathBuf;
use std::time::Instant;

use ldsplat::io::save_image;
use ldsplat::raster::{render, render_reference};
use ldsplat::synth::{make_synthetic, SceneKind};
use nalgebra::Vector3;

fn main() -> ldsplat::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "grid_renders".into()));
    std::fs::create_dir_all(&out)?;
    let scene = make_synthetic(SceneKind::Grid, 0);
    let bg = Vector3::zeros();
    for (i, (cam, _)) in scene.views.iter().enumerate() {
        let t = Instant::now();
        let tiled = render(cam, &scene.generator, &scene.shading, &bg);
        let t_tiled = t.elapsed();
        let t = Instant::now();
        let reference = render_reference(cam, &scene.generator, &scene.shading, &bg);
        let t_ref = t.elapsed();
        println!(
            "view {i}: max diff {:.2e}  tiled {:.2?}  reference {:.2?}",
            tiled.max_abs_diff(&reference),
            t_tiled,
            t_ref
        );
        save_image(out.join(format!("{i:03}.png")), &tiled)?;
    }
    println!("wrote {} views to {}", scene.views.len(), out.display());
    Ok(())
}
