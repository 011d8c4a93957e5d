//! A small procedurally generated image set for demos and fast tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{LabeledDataset, Split};
use crate::nn::Shape;

pub const GLYPH_SIDE: usize = 10;
pub const GLYPH_CLASSES: usize = 4;

fn stamp(class: usize, dy: isize, dx: isize, img: &mut [f32]) {
    let n = GLYPH_SIDE as isize;
    let mut put = |y: isize, x: isize| {
        let (y, x) = (y + dy, x + dx);
        if (0..n).contains(&y) && (0..n).contains(&x) {
            img[(y * n + x) as usize] = 1.0;
        }
    };
    match class {
        // horizontal bar
        0 => (2..8).for_each(|x| {
            put(4, x);
            put(5, x);
        }),
        // vertical bar
        1 => (2..8).for_each(|y| {
            put(y, 4);
            put(y, 5);
        }),
        // diagonal
        2 => (2..8).for_each(|t| {
            put(t, t);
            put(t, t + 1);
        }),
        // hollow square
        _ => (2..8).for_each(|t| {
            put(2, t);
            put(7, t);
            put(t, 2);
            put(t, 7);
        }),
    }
}

/// `n` glyph images of side 10 in four classes (bar, column, diagonal,
/// square), each randomly shifted by up to one pixel and overlaid with
/// uniform noise of amplitude `noise`. Labels cycle through the classes.
pub fn synthetic_glyphs(n: usize, noise: f32, seed: u64, split: Split) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = GLYPH_SIDE * GLYPH_SIDE;
    let mut pixels = Vec::with_capacity(n * len);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % GLYPH_CLASSES;
        let mut img = vec![0.0f32; len];
        stamp(class, rng.gen_range(-1..=1), rng.gen_range(-1..=1), &mut img);
        for p in &mut img {
            let jitter = rng.gen_range(0.0..=noise.max(0.0));
            *p = if *p > 0.0 { 1.0 - jitter } else { jitter };
        }
        pixels.extend(img);
        labels.push(class);
    }
    LabeledDataset::new(Shape::new(1, GLYPH_SIDE, GLYPH_SIDE), pixels, labels, GLYPH_CLASSES, split)
        .expect("glyph pixels lie in [0, 1]")
}
