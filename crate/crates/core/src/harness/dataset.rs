//! Seeded glyph dataset with object masks and salient distractors.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{AttentionGrid, Grid};
use crate::image::Image;
use crate::label_mix::ProbVector;

pub const SHAPES: usize = 4;
pub const TEXTURES: usize = 4;
pub const MAX_CLASSES: usize = SHAPES * TEXTURES;
pub const CHANNELS: usize = 3;
pub const DEFAULT_VAL_FRACTION: f64 = 0.25;
const MIN_SIDE: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Image,
    pub label: usize,
    /// Row-major `H×W` object mask.
    pub mask: Vec<bool>,
}

impl Sample {
    pub fn mask_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

/// Train samples first, then validation samples.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub classes: usize,
    pub samples: Vec<Sample>,
    pub n_train: usize,
}

impl SyntheticDataset {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        classes: usize,
        samples: Vec<Sample>,
        n_train: usize,
    ) -> Result<Self> {
        if classes < 2 {
            return Err(Error::config("need at least two classes"));
        }
        if n_train > samples.len() {
            return Err(Error::contract("train split larger than the dataset"));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.image.dims() != (height, width, channels) {
                return Err(Error::shape(format!("sample {} has dims {:?}", i, s.image.dims())));
            }
            if s.mask.len() != height * width {
                return Err(Error::shape(format!("sample {} mask length {}", i, s.mask.len())));
            }
            if s.label >= classes {
                return Err(Error::Index {
                    index: s.label,
                    len: classes,
                });
            }
        }
        Ok(Self {
            height,
            width,
            channels,
            classes,
            samples,
            n_train,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn train(&self) -> &[Sample] {
        &self.samples[..self.n_train]
    }

    pub fn val(&self) -> &[Sample] {
        &self.samples[self.n_train..]
    }

    pub fn one_hot(&self, index: usize) -> ProbVector {
        ProbVector::one_hot(self.samples[index].label, self.classes).expect("label checked at construction")
    }
}

/// Gaze stand-in: the fraction of mask pixels in each `patch×patch` cell, normalized.
pub fn gaze_from_mask(mask: &[bool], height: usize, width: usize, patch: usize) -> Result<AttentionGrid> {
    if patch == 0 || height % patch != 0 || width % patch != 0 {
        return Err(Error::config(format!("patch {} does not tile {}x{}", patch, height, width)));
    }
    if mask.len() != height * width {
        return Err(Error::shape("mask length does not match image size"));
    }
    let rows = height / patch;
    let cols = width / patch;
    let mut g = Grid::filled(rows, cols, 0.0);
    for y in 0..height {
        for x in 0..width {
            if mask[y * width + x] {
                let (i, j) = (y / patch, x / patch);
                g.set(i, j, g.get(i, j) + 1.0);
            }
        }
    }
    AttentionGrid::normalize(g)
}

#[derive(Clone, Copy)]
enum Shape {
    Square,
    Disc,
    Triangle,
    Cross,
}

#[derive(Clone, Copy)]
enum Texture {
    Solid,
    Stripes,
    Checker,
    Ring,
}

fn class_style(class: usize) -> (Shape, Texture) {
    let shape = [Shape::Square, Shape::Disc, Shape::Triangle, Shape::Cross][class % SHAPES];
    let texture = [Texture::Solid, Texture::Stripes, Texture::Checker, Texture::Ring][class / SHAPES];
    (shape, texture)
}

/// Whether local coordinate `(u, v)` of a `size×size` box is inside the shape.
fn inside(shape: Shape, u: usize, v: usize, size: usize) -> bool {
    let s = size as f64;
    let (fu, fv) = (u as f64 + 0.5, v as f64 + 0.5);
    match shape {
        Shape::Square => true,
        Shape::Disc => {
            let r = s / 2.0;
            (fu - r).powi(2) + (fv - r).powi(2) <= r * r
        }
        Shape::Triangle => {
            // apex at the top center, base along the bottom row
            let half = fu / s * (s / 2.0);
            (fv - s / 2.0).abs() <= half
        }
        Shape::Cross => {
            let third = s / 3.0;
            let mid = |t: f64| t >= third && t < s - third;
            mid(fu) || mid(fv)
        }
    }
}

fn textured(texture: Texture, u: usize, v: usize, size: usize) -> bool {
    match texture {
        Texture::Solid => true,
        Texture::Stripes => (u / 2) % 2 == 0,
        Texture::Checker => (u / 2 + v / 2) % 2 == 0,
        Texture::Ring => {
            let c = size as f64 / 2.0;
            let d = ((u as f64 + 0.5 - c).powi(2) + (v as f64 + 0.5 - c).powi(2)).sqrt();
            (d as usize / 2) % 2 == 0
        }
    }
}

fn render(rng: &mut ChaCha8Rng, class: usize, height: usize, width: usize) -> Sample {
    let (shape, texture) = class_style(class);
    let mut img = Image::zeros(height, width, CHANNELS);
    for y in 0..height {
        for x in 0..width {
            for c in 0..CHANNELS {
                img.set(y, x, c, rng.gen_range(0.25..0.35));
            }
        }
    }
    // clutter strokes
    for _ in 0..3 {
        let tone: [f64; 3] = [rng.gen_range(0.25..0.6), rng.gen_range(0.25..0.6), rng.gen_range(0.25..0.6)];
        let horizontal = rng.gen_bool(0.5);
        let len = rng.gen_range(4..=width.min(height) / 2);
        let (y0, x0) = (rng.gen_range(0..height), rng.gen_range(0..width));
        for t in 0..len {
            let (y, x) = if horizontal { (y0, x0 + t) } else { (y0 + t, x0) };
            if y < height && x < width {
                for (c, v) in tone.iter().enumerate() {
                    img.set(y, x, c, *v);
                }
            }
        }
    }

    let max_size = (height.min(width) / 2).max(6);
    let size = rng.gen_range(max_size * 3 / 4..=max_size);
    let oy = rng.gen_range(0..=height - size);
    let ox = rng.gen_range(0..=width - size);

    // dark "stone", preferably clear of the object box
    let radius = rng.gen_range(2.5..(height.min(width) as f64 / 6.0).max(3.0));
    let mut stone = (0.0, 0.0);
    for _ in 0..32 {
        stone = (
            rng.gen_range(radius..height as f64 - radius),
            rng.gen_range(radius..width as f64 - radius),
        );
        let clear_y = stone.0 + radius < oy as f64 || stone.0 - radius > (oy + size) as f64;
        let clear_x = stone.1 + radius < ox as f64 || stone.1 - radius > (ox + size) as f64;
        if clear_y || clear_x {
            break;
        }
    }
    let stone_tone = rng.gen_range(0.0..0.06);
    for y in 0..height {
        for x in 0..width {
            let dy = y as f64 + 0.5 - stone.0;
            let dx = (x as f64 + 0.5 - stone.1) * 0.8;
            if dy * dy + dx * dx <= radius * radius {
                for c in 0..CHANNELS {
                    img.set(y, x, c, stone_tone);
                }
            }
        }
    }

    let color: [f64; 3] = [rng.gen_range(0.6..1.0), rng.gen_range(0.6..1.0), rng.gen_range(0.6..1.0)];
    let mut mask = vec![false; height * width];
    for v in 0..size {
        for u in 0..size {
            if !inside(shape, u, v, size) {
                continue;
            }
            let (y, x) = (oy + u, ox + v);
            mask[y * width + x] = true;
            let k = if textured(texture, u, v, size) { 1.0 } else { 0.3 };
            for (c, col) in color.iter().enumerate() {
                img.set(y, x, c, col * k);
            }
        }
    }
    Sample {
        image: img,
        label: class,
        mask,
    }
}

/// Generates `n_per_class` images per class with the default validation fraction.
pub fn generate_synthetic_dataset(
    seed: u64,
    n_per_class: usize,
    classes: usize,
    height: usize,
    width: usize,
) -> Result<SyntheticDataset> {
    generate_with_split(seed, n_per_class, classes, height, width, DEFAULT_VAL_FRACTION)
}

/// Like [`generate_synthetic_dataset`]; `val_fraction` of each class goes to validation.
pub fn generate_with_split(
    seed: u64,
    n_per_class: usize,
    classes: usize,
    height: usize,
    width: usize,
    val_fraction: f64,
) -> Result<SyntheticDataset> {
    if !(2..=MAX_CLASSES).contains(&classes) {
        return Err(Error::config(format!("classes must be in 2..={}", MAX_CLASSES)));
    }
    if height < MIN_SIDE || width < MIN_SIDE {
        return Err(Error::config(format!("images must be at least {}x{}", MIN_SIDE, MIN_SIDE)));
    }
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::config("val_fraction must be in [0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_val = (n_per_class as f64 * val_fraction).round() as usize;
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in 0..classes {
        for k in 0..n_per_class {
            let s = render(&mut rng, class, height, width);
            if k < n_val {
                val.push(s);
            } else {
                train.push(s);
            }
        }
    }
    train.shuffle(&mut rng);
    val.shuffle(&mut rng);
    let n_train = train.len();
    train.extend(val);
    SyntheticDataset::new(height, width, CHANNELS, classes, train, n_train)
}
