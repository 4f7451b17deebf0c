//! IDX binary files (the MNIST container): big-endian `u32` magic, one `u32`
//! per dimension, then unsigned bytes.

use std::path::Path;

use skewbench_core::data::{Dataset, Split};

use crate::error::{Error, ParseError, Result};
use crate::fsio::read_bytes;
use crate::labels::remap_labels;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Decoded image file: `count` samples of `rows * cols` pixels scaled to
/// `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f64>,
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn header(bytes: &[u8], magic: u32, dims: usize) -> Result<Vec<usize>, ParseError> {
    let header_len = 4 * (dims + 1);
    if bytes.len() < 4 {
        return Err(ParseError::Truncated {
            expected: header_len,
            found: bytes.len(),
        });
    }
    let found = read_u32(bytes, 0);
    if found != magic {
        return Err(ParseError::BadMagic {
            expected: magic,
            found,
        });
    }
    if bytes.len() < header_len {
        return Err(ParseError::Truncated {
            expected: header_len,
            found: bytes.len(),
        });
    }
    Ok((0..dims).map(|i| read_u32(bytes, 4 * (i + 1)) as usize).collect())
}

fn payload(bytes: &[u8], offset: usize, len: usize) -> Result<&[u8], ParseError> {
    let expected = offset + len;
    match bytes.len().cmp(&expected) {
        std::cmp::Ordering::Less => Err(ParseError::Truncated {
            expected,
            found: bytes.len(),
        }),
        std::cmp::Ordering::Greater => Err(ParseError::Malformed(format!(
            "{} trailing bytes after payload",
            bytes.len() - expected
        ))),
        std::cmp::Ordering::Equal => Ok(&bytes[offset..]),
    }
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages, ParseError> {
    let dims = header(bytes, IMAGES_MAGIC, 3)?;
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    if rows == 0 || cols == 0 {
        return Err(ParseError::Malformed("image dimensions must be positive".into()));
    }
    let data = payload(bytes, 16, count * rows * cols)?;
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: data.iter().map(|&b| f64::from(b) / 255.0).collect(),
    })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>, ParseError> {
    let count = header(bytes, LABELS_MAGIC, 1)?[0];
    Ok(payload(bytes, 8, count)?.to_vec())
}

pub fn encode_images(count: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), count * rows * cols, "pixel count does not match dims");
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn read_pair(images: &Path, labels: &Path) -> Result<(IdxImages, Vec<u8>)> {
    let imgs = parse_images(&read_bytes(images)?).map_err(|k| Error::parse(images, k))?;
    let labs = parse_labels(&read_bytes(labels)?).map_err(|k| Error::parse(labels, k))?;
    if imgs.count != labs.len() {
        return Err(Error::parse(
            labels,
            ParseError::CountMismatch {
                images: imgs.count,
                labels: labs.len(),
            },
        ));
    }
    Ok((imgs, labs))
}

/// Loads one image/label pair, remapping the labels present to `0..K` in
/// ascending order.
pub fn load_idx(images: &Path, labels: &Path, split: Split) -> Result<Dataset> {
    let (imgs, labs) = read_pair(images, labels)?;
    let raw: Vec<i64> = labs.iter().map(|&l| i64::from(l)).collect();
    let (mapped, k) = remap_labels(&[&raw]);
    let dim = imgs.rows * imgs.cols;
    Ok(Dataset::new(imgs.pixels, mapped.into_iter().next().unwrap_or_default(), dim, k, split)?)
}

/// Loads train and test pairs with one shared label map.
pub fn load_idx_splits(
    train_images: &Path,
    train_labels: &Path,
    test_images: &Path,
    test_labels: &Path,
) -> Result<(Dataset, Dataset)> {
    let (tr, tr_l) = read_pair(train_images, train_labels)?;
    let (te, te_l) = read_pair(test_images, test_labels)?;
    if (tr.rows, tr.cols) != (te.rows, te.cols) {
        return Err(Error::Mismatch(format!(
            "train images are {}x{}, test images {}x{}",
            tr.rows, tr.cols, te.rows, te.cols
        )));
    }
    let a: Vec<i64> = tr_l.iter().map(|&l| i64::from(l)).collect();
    let b: Vec<i64> = te_l.iter().map(|&l| i64::from(l)).collect();
    let (mut mapped, k) = remap_labels(&[&a, &b]);
    let test_labels = mapped.pop().unwrap_or_default();
    let train_labels = mapped.pop().unwrap_or_default();
    let dim = tr.rows * tr.cols;
    Ok((
        Dataset::new(tr.pixels, train_labels, dim, k, Split::Train)?,
        Dataset::new(te.pixels, test_labels, dim, k, Split::Test)?,
    ))
}
