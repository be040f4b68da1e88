//! Overfits the glossy-plane synthetic scene and reports per-view PSNR.
//!
//! cargo run --release --example train_mirror -- [iterations] [shading-mode] [strategy]

use ldsplat::densify::{DensifyConfig, Strategy};
use ldsplat::metrics::{format_psnr, psnr};
use ldsplat::optim::{train::train_with_progress, windowed_loss, TrainConfig};
use ldsplat::raster::render;
use ldsplat::synth::{make_synthetic, SceneKind};
use ldsplat::{ShadingConfig, ShadingMode};

fn main() -> ldsplat::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let iterations = args.first().map_or(Ok(2000), |s| s.parse()).expect("iterations");
    let mode: ShadingMode = args.get(1).map_or(Ok(ShadingMode::Full), |s| s.parse())?;
    let strategy: Strategy = args.get(2).map_or(Ok(Strategy::Sparse), |s| s.parse())?;

    let scene = make_synthetic(SceneKind::MirrorLit, 0);
    let shading = ShadingConfig::new(mode, scene.shading.light_direction)?;
    let cfg = TrainConfig {
        iterations,
        ..Default::default()
    };
    let densify = DensifyConfig {
        strategy,
        ..Default::default()
    };
    let start = std::time::Instant::now();
    let out = train_with_progress(&scene.init, &scene.views, &cfg, &densify, &shading, |r| {
        if r.iteration % 100 == 0 || !r.split_counts.is_empty() {
            println!(
                "iter {:5}  loss {:.5}  psnr {:>7}  gaussians {}  {}",
                r.iteration,
                r.loss,
                format_psnr(r.psnr),
                r.gaussian_count,
                r.split_counts
            );
        }
    })?;
    println!("trained in {:.1?}", start.elapsed());

    let mut total = 0.0;
    for (cam, gt) in &scene.views {
        let img = render(cam, &out.cloud, &shading, &cfg.background);
        total += psnr(&img, gt)?;
    }
    println!("mean training-view psnr {:.3} dB", total / scene.views.len() as f64);
    let w = windowed_loss(&out.log, 200);
    println!("200-iteration loss means: {:?}", w.iter().map(|v| format!("{v:.5}")).collect::<Vec<_>>());
    Ok(())
}
