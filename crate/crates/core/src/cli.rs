//! Command-line front end.
//!
//! ```text
//! ldsplat synth mirror_lit --seed 0 --out scene/
//! ldsplat train scene/init.ckpt scene/cameras.toml --light-dir 0.2,-0.3,-0.9 --out model.ckpt
//! ldsplat render model.ckpt scene/cameras.toml --out renders/
//! ldsplat eval renders/ scene/views/
//! ldsplat densify-inspect model.ckpt --strategy dense --dump grids/
//! ```

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;

use crate::camera::Camera;
use crate::densify::{hngd_levels, population, DensifyConfig, DensifyStats, Strategy};
use crate::error::{Error, Result};
use crate::io::{
    load_cameras, load_checkpoint, load_image, load_points, save_cameras, save_checkpoint, save_grid, save_image,
    CameraEntry, CHECKPOINT_MAGIC,
};
use crate::metrics::{format_psnr, psnr, ssim};
use crate::optim::{log_csv, train::train_with_progress, TrainConfig};
use crate::raster::{render, Image};
use crate::scene::GaussianCloud;
use crate::shading::{ShadingConfig, ShadingMode};
use crate::synth::{make_synthetic, SceneKind};

/// Environment variable holding the default worker-thread count.
pub const THREADS_ENV: &str = "LDSPLAT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ldsplat", version, about = "CPU Gaussian splatting with light decomposition and HNGD densification")]
pub struct Cli {
    /// Worker threads; 0 uses every core. Overrides LDSPLAT_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize a cloud against posed images.
    Train(TrainArgs),
    /// Render a checkpoint from every camera.
    Render(RenderArgs),
    /// PSNR and SSIM between two images or two directories of images.
    Eval(EvalArgs),
    /// Report HNGD split levels for a checkpoint.
    DensifyInspect(InspectArgs),
    /// Write a synthetic scene with ground-truth views.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ShadingArgs {
    #[arg(long, default_value = "full")]
    pub shading_mode: ShadingMode,
    /// Direction toward a directional light, `x,y,z`; normalized on use.
    #[arg(long, value_parser = parse_vec3)]
    pub light_dir: Option<Vector3<f64>>,
}

impl ShadingArgs {
    fn config(&self) -> Result<ShadingConfig> {
        let light = match self.light_dir {
            Some(l) if l.norm() > 0.0 => Some(l.normalize()),
            Some(_) => return Err(Error::Config("light direction must be non-zero".into())),
            None => None,
        };
        ShadingConfig::new(self.shading_mode, light)
    }
}

#[derive(Debug, Clone, Args)]
pub struct DensifyArgs {
    #[arg(long, default_value = "sparse")]
    pub strategy: Strategy,
    /// Fusion weight of the normal gradient.
    #[arg(long, default_value_t = 0.5)]
    pub omega: f64,
    /// Voxels along the longest bounding-box edge.
    #[arg(long, default_value_t = 128)]
    pub resolution: usize,
    #[arg(long, default_value_t = 100)]
    pub densify_interval: usize,
    #[arg(long, default_value_t = 2e-4)]
    pub clone_threshold: f64,
}

impl DensifyArgs {
    fn config(&self) -> DensifyConfig {
        DensifyConfig {
            strategy: self.strategy,
            omega: self.omega,
            grid_resolution: self.resolution,
            densify_interval: self.densify_interval,
            clone_grad_threshold: self.clone_threshold,
            ..Default::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Initial cloud: a checkpoint or a point file.
    pub scene: PathBuf,
    /// Camera list with ground-truth image paths.
    pub cameras: PathBuf,
    #[arg(long, default_value = "model.ckpt")]
    pub out: PathBuf,
    /// Training log; defaults to the checkpoint path with a `.csv` extension.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 0.2)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub densify_from: usize,
    #[arg(long, default_value_t = 15_000)]
    pub densify_until: usize,
    #[command(flatten)]
    pub shading: ShadingArgs,
    #[command(flatten)]
    pub densify: DensifyArgs,
    /// Print a progress line every this many iterations; 0 is silent.
    #[arg(long, default_value_t = 100)]
    pub progress: usize,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    pub checkpoint: PathBuf,
    pub cameras: PathBuf,
    /// Output directory, one PNG per camera.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub shading: ShadingArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub renders: PathBuf,
    pub gt: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub densify: DensifyArgs,
    /// Densification intervals of saturated activity to assume.
    #[arg(long, default_value_t = 1)]
    pub intervals: u32,
    /// Directory for density and fused-gradient grid dumps.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// shell, grid or mirror_lit.
    pub spec: SceneKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_vec3(s: &str) -> std::result::Result<Vector3<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v.as_slice() {
        [x, y, z] => Ok(Vector3::new(*x, *y, *z)),
        _ => Err(format!("expected three comma-separated numbers, got {}", v.len())),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var(THREADS_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a thread count, got `{s}`"))),
        Err(_) => Ok(0),
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let threads = thread_count(cli.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Render(a) => cmd_render(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::DensifyInspect(a) => cmd_inspect(&a),
        Command::Synth(a) => cmd_synth(&a),
    })
}

/// Checkpoint if the file carries the checkpoint magic, point file otherwise.
fn load_scene(path: &Path) -> Result<GaussianCloud> {
    let mut head = [0u8; 8];
    let is_ckpt = fs::File::open(path).and_then(|mut f| std::io::Read::read(&mut f, &mut head))? == 8
        && &head == CHECKPOINT_MAGIC;
    if is_ckpt {
        Ok(load_checkpoint(path)?.cloud)
    } else {
        load_points(path)
    }
}

fn load_views(cameras: &Path) -> Result<Vec<(Camera, Image)>> {
    load_cameras(cameras)?
        .into_iter()
        .enumerate()
        .map(|(i, e)| {
            let path = e
                .image
                .ok_or_else(|| Error::parse(cameras, format!("view {i}: no ground-truth image")))?;
            Ok((e.camera, load_image(path)?))
        })
        .collect()
}

fn config_echo(a: &TrainArgs) -> String {
    let mut s = String::new();
    let light = a.shading.light_dir.map_or("none".to_string(), |l| format!("{},{},{}", l.x, l.y, l.z));
    let _ = writeln!(s, "iterations = {}", a.iterations);
    let _ = writeln!(s, "lambda = {}", a.lambda);
    let _ = writeln!(s, "seed = {}", a.seed);
    let _ = writeln!(s, "densify_window = {}..{}", a.densify_from, a.densify_until);
    let _ = writeln!(s, "shading_mode = {}", a.shading.shading_mode);
    let _ = writeln!(s, "light_dir = {light}");
    let _ = writeln!(s, "strategy = {}", a.densify.strategy);
    let _ = writeln!(s, "omega = {}", a.densify.omega);
    let _ = writeln!(s, "grid_resolution = {}", a.densify.resolution);
    let _ = writeln!(s, "densify_interval = {}", a.densify.densify_interval);
    let _ = writeln!(s, "clone_threshold = {}", a.densify.clone_threshold);
    s
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cloud = load_scene(&a.scene)?;
    let views = load_views(&a.cameras)?;
    let shading = a.shading.config()?;
    let cfg = TrainConfig {
        iterations: a.iterations,
        lambda: a.lambda,
        seed: a.seed,
        densify_from: a.densify_from,
        densify_until: a.densify_until,
        ..Default::default()
    };
    let densify = a.densify.config();
    let out = train_with_progress(&cloud, &views, &cfg, &densify, &shading, |r| {
        if a.progress > 0 && r.iteration % a.progress == 0 {
            eprintln!(
                "iter {:6}  loss {:.6}  psnr {}  gaussians {}",
                r.iteration,
                r.loss,
                format_psnr(r.psnr),
                r.gaussian_count
            );
        }
    })?;
    save_checkpoint(&a.out, &out.cloud, &config_echo(a))?;
    let log = a.log.clone().unwrap_or_else(|| a.out.with_extension("csv"));
    fs::write(&log, log_csv(&out.log))?;
    println!("gaussians={}", out.cloud.len());
    if let Some(last) = out.log.last() {
        println!("final_loss={:.6}", last.loss);
    }
    println!("checkpoint={}", a.out.display());
    Ok(())
}

fn cmd_render(a: &RenderArgs) -> Result<()> {
    let cloud = load_checkpoint(&a.checkpoint)?.cloud;
    let cams = load_cameras(&a.cameras)?;
    let shading = a.shading.config()?;
    fs::create_dir_all(&a.out)?;
    for (i, e) in cams.iter().enumerate() {
        let img = render(&e.camera, &cloud, &shading, &Vector3::zeros());
        save_image(a.out.join(format!("{i:03}.png")), &img)?;
    }
    println!("rendered={}", cams.len());
    Ok(())
}

/// Image files of a directory, sorted by name, or the path itself.
fn image_list(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| {
        p.extension()
            .and_then(|x| x.to_str())
            .is_some_and(|x| matches!(x.to_ascii_lowercase().as_str(), "png" | "ppm" | "pnm"))
    });
    files.sort();
    Ok(files)
}

/// Mean PSNR and SSIM over image pairs matched by sorted order.
pub fn evaluate(renders: &Path, gt: &Path) -> Result<(f64, f64, usize)> {
    let a = image_list(renders)?;
    let b = image_list(gt)?;
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::Config(format!(
            "{} renders vs {} ground-truth images",
            a.len(),
            b.len()
        )));
    }
    let (mut p, mut s) = (0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        let (x, y) = (load_image(x)?, load_image(y)?);
        p += psnr(&x, &y)?;
        s += ssim(&x, &y)?;
    }
    let n = a.len() as f64;
    Ok((p / n, s / n, a.len()))
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let (p, s, n) = evaluate(&a.renders, &a.gt)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "images={n}")?;
    writeln!(out, "psnr={}", format_psnr(p))?;
    writeln!(out, "ssim={s:.6}")?;
    Ok(())
}

fn cmd_inspect(a: &InspectArgs) -> Result<()> {
    let cloud = load_checkpoint(&a.checkpoint)?.cloud;
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let cfg = a.densify.config();
    cfg.validate()?;
    let stats = DensifyStats::saturated(cloud.len(), &cfg, a.intervals);
    let h = hngd_levels(&cloud, &stats, &cfg)?;
    let mut hist = vec![0usize; 1 + h.levels.iter().copied().max().unwrap_or(0) as usize];
    for &l in &h.levels {
        hist[l as usize] += 1;
    }
    let [x, y, z] = h.grid.dims;
    println!("gaussians={}", cloud.len());
    println!("grid={x}x{y}x{z}");
    println!("voxel_size={:.6}", h.grid.voxel_size);
    println!("flat_voxels={}", h.field.flat_voxels);
    println!("max_fused={:.6}", h.field.fused.iter().copied().fold(0.0, f64::max));
    for (l, c) in hist.iter().enumerate() {
        println!("level_{l}={c}");
    }
    println!("after_split={}", population(&h.levels));
    if let Some(dir) = &a.dump {
        fs::create_dir_all(dir)?;
        save_grid(dir.join("density.bin"), &h.grid, &h.grid.values)?;
        save_grid(dir.join("fused.bin"), &h.grid, &h.field.fused)?;
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let scene = make_synthetic(a.spec, a.seed);
    let views_dir = a.out.join("views");
    fs::create_dir_all(&views_dir)?;
    let mut entries = Vec::with_capacity(scene.views.len());
    for (i, (cam, img)) in scene.views.iter().enumerate() {
        let rel = PathBuf::from("views").join(format!("{i:03}.png"));
        save_image(a.out.join(&rel), img)?;
        entries.push(CameraEntry {
            camera: cam.clone(),
            image: Some(rel),
        });
    }
    save_cameras(a.out.join("cameras.toml"), &entries)?;
    let echo = format!("spec = {}\nseed = {}\n", a.spec, a.seed);
    save_checkpoint(a.out.join("init.ckpt"), &scene.init, &echo)?;
    save_checkpoint(a.out.join("generator.ckpt"), &scene.generator, &echo)?;
    println!("views={}", entries.len());
    println!("shading_mode={}", scene.shading.mode);
    if let Some(l) = scene.shading.light_direction {
        println!("light_dir={},{},{}", l.x, l.y, l.z);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_subcommand() {
        let ok = [
            vec!["ldsplat", "synth", "grid", "--seed", "7", "--out", "o"],
            vec!["ldsplat", "train", "s.ckpt", "c.toml", "--strategy", "dense", "--omega", "0.3", "--threads", "1"],
            vec!["ldsplat", "render", "m.ckpt", "c.toml", "--out", "r", "--shading-mode", "diffuse_only"],
            vec!["ldsplat", "eval", "a", "b"],
            vec!["ldsplat", "densify-inspect", "m.ckpt", "--resolution", "64", "--dump", "d"],
        ];
        for a in ok {
            Cli::try_parse_from(&a).unwrap_or_else(|e| panic!("{a:?}: {e}"));
        }
    }

    #[test]
    fn rejects_bad_flags() {
        assert!(Cli::try_parse_from(["ldsplat", "eval", "a", "b", "--bogus"]).is_err());
        assert!(Cli::try_parse_from(["ldsplat", "train", "s", "c", "--strategy", "tight"]).is_err());
        assert!(Cli::try_parse_from(["ldsplat", "train", "s", "c", "--light-dir", "1,2"]).is_err());
    }

    #[test]
    fn light_direction_flag() {
        let cli = Cli::try_parse_from(["ldsplat", "train", "s", "c", "--light-dir", "0,-1,0"]).unwrap();
        let Command::Train(a) = cli.command else { panic!() };
        assert_eq!(a.shading.light_dir, Some(Vector3::new(0.0, -1.0, 0.0)));
    }

    #[test]
    fn missing_file_is_nonzero() {
        assert_ne!(run(["ldsplat", "eval", "/nonexistent/a.png", "/nonexistent/b.png"]), 0);
    }
}
