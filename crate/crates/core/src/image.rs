use crate::error::{Error, Result};

/// Dense `H×W×C` image, channels interleaved, values nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height * width * channels != data.len() {
            return Err(Error::shape(format!(
                "{}x{}x{} image needs {} values, got {}",
                height,
                width,
                channels,
                height * width * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("image contains non-finite values"));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    /// Copies a `size×size` pixel block from `src` at `(sy, sx)` to `(dy, dx)` here.
    pub(crate) fn copy_block(&mut self, src: &Image, sy: usize, sx: usize, dy: usize, dx: usize, size: usize) {
        let c = self.channels;
        for r in 0..size {
            let s = ((sy + r) * src.width + sx) * c;
            let d = ((dy + r) * self.width + dx) * c;
            self.data[d..d + size * c].copy_from_slice(&src.data[s..s + size * c]);
        }
    }

    /// Sets every channel of a `size×size` block to `value`.
    pub(crate) fn fill_block(&mut self, y: usize, x: usize, size: usize, value: f64) {
        let c = self.channels;
        for r in 0..size {
            let d = ((y + r) * self.width + x) * c;
            self.data[d..d + size * c].iter_mut().for_each(|v| *v = value);
        }
    }
}
