#![allow(dead_code)]

use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};

/// A small, content-distinct RGB test image.
pub fn pattern(seed: u32, w: u32, h: u32) -> RgbImage {
    let mut img = RgbImage::new(w, h);
    for (x, y, p) in img.enumerate_pixels_mut() {
        let v = seed.wrapping_mul(2_654_435_761).wrapping_add(x * 7 + y * 13);
        *p = Rgb([(v % 251) as u8, ((v >> 3) % 241) as u8, ((x * 255) / w.max(1)) as u8 ^ (seed as u8)]);
    }
    img
}

/// Write `sizes` classes of `w x h` PNGs under `root`.
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
