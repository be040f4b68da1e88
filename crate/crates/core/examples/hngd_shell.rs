//! Hierarchical densification on the sphere shell: fused-gradient statistics,
//! split levels per strategy and where the children land.
//!
//! cargo run --release --example hngd_shell -- [omega] [intervals]

use ldsplat::densify::{densify_step, hngd_levels, DensifyConfig, DensifyStats, Origin, Strategy};
use ldsplat::synth::{make_synthetic, SceneKind, SHELL_RADIUS};

fn main() -> ldsplat::Result<()> {
    let mut args = std::env::args().skip(1);
    let omega: f64 = args.next().map_or(0.5, |s| s.parse().expect("omega"));
    let intervals: u32 = args.next().map_or(5, |s| s.parse().expect("intervals"));
    let cloud = make_synthetic(SceneKind::Shell, 0).generator;

    for strategy in [Strategy::None, Strategy::Sparse, Strategy::Dense] {
        let cfg = DensifyConfig {
            omega,
            strategy,
            ..Default::default()
        };
        let stats = DensifyStats::saturated(cloud.len(), &cfg, intervals);
        let h = hngd_levels(&cloud, &stats, &cfg)?;
        if strategy == Strategy::Sparse {
            let [x, y, z] = h.grid.dims;
            let (lo, hi) = h.samples.iter().fold((f64::MAX, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
            println!("grid {x}x{y}x{z}, voxel {:.4}, {} flat voxels", h.grid.voxel_size, h.field.flat_voxels);
            println!("fused gradient at the Gaussians: {lo:.3} .. {hi:.3}");
        }
        let out = densify_step(&cloud, &stats, &cfg, 1.0)?;
        let near = out
            .cloud
            .gaussians
            .iter()
            .zip(&out.origins)
            .filter(|(_, o)| matches!(o, Origin::Child(_)))
            .map(|(g, _)| (g.position.norm() - SHELL_RADIUS).abs())
            .fold(0.0, f64::max);
        println!(
            "{strategy:>6}: levels [{}]  {} -> {} Gaussians, children at most {near:.4} off the sphere",
            out.report.level_summary(),
            out.report.before,
            out.report.after
        );
    }
    Ok(())
}
