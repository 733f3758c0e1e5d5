//! File formats read and written by the command-line tool.
//!
//! Every decoder works on in-memory bytes or text and reports malformed
//! input as [`Error::Parse`](crate::Error::Parse) with the byte offset of the
//! offending field. All multi-byte integers and floats are little-endian.

pub mod checkpoint;
pub mod config;
pub mod dataset_file;
pub mod gaze;
pub mod plan_record;
pub mod pnm;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint};
pub use config::{DataConfig, EvalConfig, ExperimentConfig};
pub use dataset_file::{decode_dataset, encode_dataset, read_dataset, write_dataset};
pub use gaze::{format_grid, gaze_file_name, parse_gaze, read_gaze, read_gaze_dir};
pub use plan_record::{format_plan, parse_plan};
pub use pnm::{encode_pnm, grid_image, overlay, parse_pnm, read_pnm, render_image, render_overlay};

use crate::error::{Error, Result};

/// Bounds-checked little-endian cursor.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn pos(&self) -> usize {
        self.pos
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::parse(
                self.pos,
                format!("truncated {}: need {} bytes, {} left", what, n, self.remaining()),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub(crate) fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::parse(self.pos, format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

/// Writes `bytes` to `path`, creating parent directories.
pub fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}
