use std::path::Path;
use std::process::{Command, Output};

fn ldsplat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ldsplat")).args(args).output().expect("spawn")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(dir: &Path, s: &str) -> String {
    dir.join(s).to_string_lossy().into_owned()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for e in walk(dir) {
        out.push((e.strip_prefix(dir).unwrap().to_string_lossy().into_owned(), std::fs::read(&e).unwrap()));
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut files = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        if path.is_dir() {
            files.extend(walk(&path));
        } else {
            files.push(path);
        }
    }
    files
}

#[test]
fn synth_is_reproducible() {
    let t = tempfile::tempdir().unwrap();
    stdout(&ldsplat(&["synth", "grid", "--seed", "7", "--out", &p(t.path(), "a")]));
    stdout(&ldsplat(&["synth", "grid", "--seed", "7", "--out", &p(t.path(), "b")]));
    let a = dir_bytes(&t.path().join("a"));
    assert_eq!(a.len(), 8 + 3);
    assert_eq!(a, dir_bytes(&t.path().join("b")));
}

#[test]
fn eval_identical_directories() {
    let t = tempfile::tempdir().unwrap();
    stdout(&ldsplat(&["synth", "grid", "--out", &p(t.path(), "s")]));
    let views = p(t.path(), "s/views");
    let out = stdout(&ldsplat(&["eval", &views, &views]));
    assert!(out.contains("psnr=INFINITE"), "{out}");
    assert!(out.contains("ssim=1.000000"), "{out}");
}

#[test]
fn errors_exit_nonzero_with_message() {
    let o = ldsplat(&["eval", "/no/such/a.png", "/no/such/b.png"]);
    assert!(!o.status.success());
    assert!(!o.stderr.is_empty());
    let o = ldsplat(&["render", "x.ckpt", "c.toml", "--out", "r", "--frobnicate"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("frobnicate"));
    let o = ldsplat(&["train", "/no/such/points.txt", "/no/such/cameras.toml"]);
    assert!(!o.status.success());
}

#[test]
fn densify_inspect_reports_and_dumps() {
    let t = tempfile::tempdir().unwrap();
    stdout(&ldsplat(&["synth", "shell", "--out", &p(t.path(), "s")]));
    let ckpt = p(t.path(), "s/generator.ckpt");
    let dump = p(t.path(), "grids");
    let sparse = stdout(&ldsplat(&[
        "densify-inspect", &ckpt, "--resolution", "64", "--intervals", "5", "--dump", &dump,
    ]));
    assert!(sparse.contains("gaussians=400"), "{sparse}");
    let grid = ldsplat::io::load_grid(t.path().join("grids/fused.bin")).unwrap();
    let longest = *grid.dims.iter().max().unwrap();
    assert!((64 + 6..=64 + 7).contains(&longest), "{longest}");
    let none = stdout(&ldsplat(&["densify-inspect", &ckpt, "--strategy", "none", "--intervals", "5"]));
    assert!(none.contains("level_0=400"), "{none}");
    assert!(none.contains("after_split=400"), "{none}");
}

#[test]
fn train_from_point_file() {
    let t = tempfile::tempdir().unwrap();
    stdout(&ldsplat(&["synth", "grid", "--out", &p(t.path(), "s")]));
    let scene = ldsplat::io::load_checkpoint(t.path().join("s/generator.ckpt")).unwrap();
    let text: String = scene
        .cloud
        .gaussians
        .iter()
        .map(|g| format!("{} {} {} 128 128 128\n", g.position.x, g.position.y, g.position.z))
        .collect();
    std::fs::write(t.path().join("pts.txt"), text).unwrap();
    let out = stdout(&ldsplat(&[
        "train",
        &p(t.path(), "pts.txt"),
        &p(t.path(), "s/cameras.toml"),
        "--shading-mode",
        "baseline_sh",
        "--iterations",
        "50",
        "--progress",
        "0",
        "--out",
        &p(t.path(), "m.ckpt"),
    ]));
    assert!(out.contains("gaussians=32"), "{out}");
    let log = std::fs::read_to_string(t.path().join("m.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("iteration,loss,psnr,gaussian_count,split_counts"));
    assert_eq!(log.lines().count(), 51);
}

#[test]
fn train_then_eval_meets_overfit_bar() {
    let t = tempfile::tempdir().unwrap();
    let synth = stdout(&ldsplat(&["synth", "mirror_lit", "--out", &p(t.path(), "s")]));
    let light = synth.lines().find_map(|l| l.strip_prefix("light_dir=")).unwrap().to_string();
    stdout(&ldsplat(&[
        "train",
        &p(t.path(), "s/init.ckpt"),
        &p(t.path(), "s/cameras.toml"),
        "--light-dir",
        &light,
        "--progress",
        "0",
        "--out",
        &p(t.path(), "m.ckpt"),
    ]));
    stdout(&ldsplat(&[
        "render",
        &p(t.path(), "m.ckpt"),
        &p(t.path(), "s/cameras.toml"),
        "--light-dir",
        &light,
        "--out",
        &p(t.path(), "r"),
    ]));
    let out = stdout(&ldsplat(&["eval", &p(t.path(), "r"), &p(t.path(), "s/views")]));
    let psnr: f64 = out.lines().find_map(|l| l.strip_prefix("psnr=")).unwrap().parse().unwrap();
    assert!(psnr >= 35.0, "{out}");
}
