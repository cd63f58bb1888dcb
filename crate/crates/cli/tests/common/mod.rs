#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tile_ensemble::io::{read_image, write_image};
use tile_ensemble::pattern::Scene;
use tile_ensemble::Image;

pub const CLI: &str = env!("CARGO_BIN_EXE_tile-ensemble");
pub const TOY: &str = env!("CARGO_BIN_EXE_enh-toy-server");

pub fn cli(args: &[&str]) -> Output {
    Command::new(CLI).args(args).env("TILE_ENSEMBLE_LOG", "error").output().expect("run cli")
}

pub fn cli_ok(args: &[&str]) -> String {
    let out = cli(args);
    assert!(
        out.status.success(),
        "{args:?} failed with {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn code(args: &[&str]) -> i32 {
    cli(args).status.code().expect("exited normally")
}

pub fn toy(mode: &str) -> String {
    format!("exec:{TOY} {mode}")
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn scene(dir: &Path, name: &str, seed: u64, h: usize, w: usize) -> PathBuf {
    let path = dir.join(name);
    write_image(&path, &Scene::new(seed).render(h, w)).unwrap();
    path
}

pub fn load(path: &Path) -> Image {
    read_image(path).unwrap()
}

pub fn max_abs(a: &Image, b: &Image) -> f32 {
    assert!(a.same_shape(b), "{} vs {}", a.shape_string(), b.shape_string());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}
