//! File formats end to end: a point file becomes a cloud, the cloud and its
//! cameras are written and read back, and the checkpoint survives bit-exactly.
//!
//! cargo run --release --example io_roundtrip

use ldsplat::io::{
    checkpoint_bytes, load_cameras, load_checkpoint, load_image, load_points, save_cameras, save_checkpoint,
    save_image, CameraEntry,
};
use ldsplat::synth::{make_synthetic, SceneKind};

fn main() -> ldsplat::Result<()> {
    let dir = std::env::temp_dir().join(format!("ldsplat-io-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let scene = make_synthetic(SceneKind::Grid, 0);

    let pts: String = scene
        .generator
        .gaussians
        .iter()
        .map(|g| format!("{:.4} {:.4} {:.4} 200 120 40\n", g.position.x, g.position.y, g.position.z))
        .collect();
    std::fs::write(dir.join("points.txt"), pts)?;
    let cloud = load_points(dir.join("points.txt"))?;
    let g = &cloud.gaussians[0];
    println!(
        "{} points -> Gaussians; first scale {:.4}, opacity {:.2}, dc {:.3?}",
        cloud.len(),
        g.scales().x,
        g.opacity(),
        g.sh_diffuse[0]
    );

    let entries: Vec<CameraEntry> = scene
        .views
        .iter()
        .enumerate()
        .map(|(i, (camera, img))| {
            let path = dir.join(format!("{i:03}.png"));
            save_image(&path, img).map(|_| CameraEntry {
                camera: camera.clone(),
                image: Some(path),
            })
        })
        .collect::<ldsplat::Result<_>>()?;
    save_cameras(dir.join("cameras.toml"), &entries)?;
    let back = load_cameras(dir.join("cameras.toml"))?;
    let drift = entries
        .iter()
        .zip(&back)
        .map(|(a, b)| (a.camera.rotation - b.camera.rotation).amax())
        .fold(0.0, f64::max);
    let img = load_image(back[0].image.as_ref().expect("written above"))?;
    println!("{} cameras round-trip with rotation drift {drift:.1e}; first view {}x{}", back.len(), img.width, img.height);

    save_checkpoint(dir.join("scene.ckpt"), &scene.generator, "example = true")?;
    let ck = load_checkpoint(dir.join("scene.ckpt"))?;
    let exact = checkpoint_bytes(&ck.cloud, &ck.config) == std::fs::read(dir.join("scene.ckpt"))?;
    println!("checkpoint bit-exact: {} (cloud equal: {})", exact, ck.cloud == scene.generator);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
