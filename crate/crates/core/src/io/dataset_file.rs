//! Binary dataset container.
//!
//! Layout: magic `TDMIX-DS1`, then `u32` count, H, W, C, n_cls, n_train;
//! then per record a `u32` label, `H·W·C` `f64` pixels, and the `H·W` object
//! mask packed LSB-first into `⌈H·W/8⌉` bytes with zero padding bits.

use std::path::Path;

use super::{write_file, Reader};
use crate::error::{Error, Result};
use crate::harness::dataset::{Sample, SyntheticDataset};
use crate::image::Image;

pub const DATASET_MAGIC: &[u8; 9] = b"TDMIX-DS1";
const HEADER_LEN: usize = 9 + 6 * 4;

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::contract(format!("{} {} does not fit in 32 bits", what, v)))
}

pub fn encode_dataset(data: &SyntheticDataset) -> Result<Vec<u8>> {
    let hw = data.height * data.width;
    let rec = 4 + hw * data.channels * 8 + hw.div_ceil(8);
    let mut out = Vec::with_capacity(HEADER_LEN + rec * data.len());
    out.extend_from_slice(DATASET_MAGIC);
    for (v, what) in [
        (data.len(), "count"),
        (data.height, "height"),
        (data.width, "width"),
        (data.channels, "channels"),
        (data.classes, "classes"),
        (data.n_train, "n_train"),
    ] {
        out.extend_from_slice(&to_u32(v, what)?.to_le_bytes());
    }
    for s in &data.samples {
        out.extend_from_slice(&to_u32(s.label, "label")?.to_le_bytes());
        for v in s.image.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let mut packed = vec![0u8; hw.div_ceil(8)];
        for (k, m) in s.mask.iter().enumerate() {
            if *m {
                packed[k / 8] |= 1 << (k % 8);
            }
        }
        out.extend_from_slice(&packed);
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<SyntheticDataset> {
    let mut r = Reader::new(bytes);
    let magic = r.take(DATASET_MAGIC.len(), "magic")?;
    if magic != DATASET_MAGIC {
        return Err(Error::parse(0, "bad magic, not a dataset file"));
    }
    let count_at = r.pos();
    let count = r.u32("count")? as usize;
    let dims_at = r.pos();
    let height = r.u32("height")? as usize;
    let width = r.u32("width")? as usize;
    let channels = r.u32("channels")? as usize;
    let classes_at = r.pos();
    let classes = r.u32("classes")? as usize;
    let n_train_at = r.pos();
    let n_train = r.u32("n_train")? as usize;
    if height == 0 || width == 0 || channels == 0 {
        return Err(Error::parse(dims_at, "zero image dimension"));
    }
    if classes < 2 {
        return Err(Error::parse(classes_at, "fewer than two classes"));
    }
    if n_train > count {
        return Err(Error::parse(n_train_at, "n_train exceeds record count"));
    }
    let hw = height
        .checked_mul(width)
        .ok_or_else(|| Error::parse(dims_at, "image size overflows"))?;
    let pixels = hw
        .checked_mul(channels)
        .ok_or_else(|| Error::parse(dims_at, "image size overflows"))?;
    let mask_len = hw.div_ceil(8);
    let rec_len = pixels
        .checked_mul(8)
        .and_then(|p| p.checked_add(4 + mask_len))
        .ok_or_else(|| Error::parse(dims_at, "record size overflows"))?;
    // refuse to allocate for records that cannot be present
    let needed = rec_len.checked_mul(count);
    if needed.is_none_or(|n| n > r.remaining()) {
        let whole = r.remaining() / rec_len;
        let at = r.pos() + whole * rec_len;
        if needed.is_none() {
            return Err(Error::parse(count_at, "record count overflows"));
        }
        return Err(Error::parse(
            at,
            format!("truncated record {} of {}", whole, count),
        ));
    }
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let label_at = r.pos();
        let label = r.u32("label")? as usize;
        if label >= classes {
            return Err(Error::parse(label_at, format!("record {} label {} >= {}", i, label, classes)));
        }
        let mut data = Vec::with_capacity(pixels);
        for _ in 0..pixels {
            let at = r.pos();
            let v = r.f64("pixel")?;
            if !v.is_finite() {
                return Err(Error::parse(at, format!("record {} has a non-finite pixel", i)));
            }
            data.push(v);
        }
        let mask_at = r.pos();
        let packed = r.take(mask_len, "mask")?;
        let mut mask = Vec::with_capacity(hw);
        for k in 0..hw {
            mask.push(packed[k / 8] >> (k % 8) & 1 == 1);
        }
        if hw % 8 != 0 && packed[mask_len - 1] >> (hw % 8) != 0 {
            return Err(Error::parse(mask_at + mask_len - 1, "nonzero mask padding bits"));
        }
        let image = Image::new(height, width, channels, data).map_err(|e| Error::parse(label_at, e.to_string()))?;
        samples.push(Sample { image, label, mask });
    }
    r.finish()?;
    SyntheticDataset::new(height, width, channels, classes, samples, n_train)
        .map_err(|e| Error::parse(HEADER_LEN, e.to_string()))
}

pub fn write_dataset(path: &Path, data: &SyntheticDataset) -> Result<()> {
    write_file(path, &encode_dataset(data)?)
}

pub fn read_dataset(path: &Path) -> Result<SyntheticDataset> {
    decode_dataset(&std::fs::read(path)?)
}
