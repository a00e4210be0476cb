#![allow(dead_code)]

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use image::{Rgb, RgbImage};

pub const BIN: &str = env!("CARGO_BIN_EXE_coimg");

/// A small, content-distinct RGB test image.
pub fn pattern(seed: u32, w: u32, h: u32) -> RgbImage {
    let mut img = RgbImage::new(w, h);
    for (x, y, p) in img.enumerate_pixels_mut() {
        let v = seed.wrapping_mul(2_654_435_761).wrapping_add(x * 7 + y * 13);
        *p = Rgb([(v % 251) as u8, ((v >> 3) % 241) as u8, ((x * 255) / w.max(1)) as u8 ^ (seed as u8)]);
    }
    img
}

pub fn write_corpus(root: &Path, sizes: &[(&str, usize)], w: u32, h: u32) {
    let mut seed = 0u32;
    for &(class, n) in sizes {
        let dir = root.join(class);
        fs::create_dir_all(&dir).unwrap();
        for i in 0..n {
            pattern(seed, w, h).save(dir.join(format!("img_{i:05}.png"))).unwrap();
            seed += 1;
        }
    }
}

pub fn coimg<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(BIN).args(args).env("RUST_LOG", "warn").output().expect("spawn coimg")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// The JSON error report on the last stderr line.
pub fn error_report(o: &Output) -> serde_json::Value {
    let err = stderr(o);
    let line = err.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not a JSON report ({e}): {err}"))
}
