//! Reader for the big-endian IDX files MNIST ships in.

use std::path::Path;

use super::data::Dataset;
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn format_err(path: &Path, offset: u64, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset,
        detail: detail.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| {
            format_err(
                path,
                offset as u64,
                format!("header truncated: expected at least {} bytes, file has {}", offset + 4, bytes.len()),
            )
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let magic = read_u32(bytes, 0, path)?;
    if magic != expected {
        return Err(format_err(path, 0, format!("bad magic 0x{magic:08x}, expected 0x{expected:08x}")));
    }
    Ok(())
}

fn check_length(bytes: &[u8], expected: usize, path: &Path) -> Result<()> {
    if bytes.len() != expected {
        let offset = bytes.len().min(expected) as u64;
        let what = if bytes.len() < expected { "truncated" } else { "trailing data" };
        return Err(format_err(
            path,
            offset,
            format!("{what}: expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    Ok(())
}

/// Images as `(count, rows * cols, pixels scaled to [0, 1])`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    check_magic(bytes, IMAGES_MAGIC, path)?;
    let count = read_u32(bytes, 4, path)? as usize;
    let rows = read_u32(bytes, 8, path)? as usize;
    let cols = read_u32(bytes, 12, path)? as usize;
    let pixels = rows * cols;
    check_length(bytes, 16 + count * pixels, path)?;
    let values = bytes[16..].iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok((count, pixels, values))
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    check_magic(bytes, LABELS_MAGIC, path)?;
    let count = read_u32(bytes, 4, path)? as usize;
    check_length(bytes, 8 + count, path)?;
    Ok(bytes[8..].iter().map(|&b| usize::from(b)).collect())
}

/// Load an image file and its label file into a 10-class dataset.
pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let img = std::fs::read(ip).map_err(|e| Error::io(format!("reading {}", ip.display()), e))?;
    let lab = std::fs::read(lp).map_err(|e| Error::io(format!("reading {}", lp.display()), e))?;
    let (count, pixels, features) = parse_idx_images(&img, ip)?;
    let labels = parse_idx_labels(&lab, lp)?;
    if labels.len() != count {
        return Err(format_err(
            lp,
            4,
            format!("label count {} does not match image count {count}", labels.len()),
        ));
    }
    if let Some(pos) = labels.iter().position(|&y| y > 9) {
        return Err(format_err(lp, 8 + pos as u64, format!("label {} outside 0..10", labels[pos])));
    }
    Dataset::new(features, labels, pixels, 10)
}
