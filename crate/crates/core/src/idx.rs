//! Reader for the IDX binary format used by the MNIST files.
//!
//! Images: magic `0x00000803`, count, rows, columns (all big-endian u32),
//! then `count·rows·columns` unsigned bytes. Labels: magic `0x00000801`,
//! count, then `count` bytes.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn idx_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Idx {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn header(path: &Path, bytes: &[u8], magic: u32, dims: usize) -> Result<Vec<usize>> {
    let len = 4 + 4 * dims;
    if bytes.len() < len {
        return Err(idx_err(path, "truncated header"));
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(idx_err(
            path,
            format!("magic {found:#010x}, expected {magic:#010x}"),
        ));
    }
    Ok((0..dims).map(|i| be_u32(bytes, 4 + 4 * i) as usize).collect())
}

/// Images as `(count, rows, columns)` raw bytes, keeping at most `limit`.
pub fn parse_images(path: &Path, bytes: &[u8], limit: Option<usize>) -> Result<Array3<u8>> {
    let dims = header(path, bytes, IMAGE_MAGIC, 3)?;
    let (n, h, w) = (dims[0], dims[1], dims[2]);
    let body = &bytes[16..];
    if body.len() != n * h * w {
        return Err(idx_err(
            path,
            format!("{} pixel bytes, header declares {}", body.len(), n * h * w),
        ));
    }
    let keep = limit.map_or(n, |l| l.min(n));
    Ok(Array3::from_shape_vec([keep, h, w], body[..keep * h * w].to_vec()).expect("sized"))
}

pub fn parse_labels(path: &Path, bytes: &[u8], limit: Option<usize>) -> Result<Vec<u8>> {
    let dims = header(path, bytes, LABEL_MAGIC, 1)?;
    let body = &bytes[8..];
    if body.len() != dims[0] {
        return Err(idx_err(
            path,
            format!("{} label bytes, header declares {}", body.len(), dims[0]),
        ));
    }
    let keep = limit.map_or(dims[0], |l| l.min(dims[0]));
    Ok(body[..keep].to_vec())
}

pub fn read_images(path: &Path, limit: Option<usize>) -> Result<Array3<u8>> {
    parse_images(path, &fs::read(path)?, limit)
}

pub fn read_labels(path: &Path, limit: Option<usize>) -> Result<Vec<u8>> {
    parse_labels(path, &fs::read(path)?, limit)
}

/// Labelled grayscale images.
#[derive(Debug, Clone)]
pub struct LabeledImages {
    pub images: Array3<u8>,
    pub labels: Vec<u8>,
    pub source: PathBuf,
}

impl LabeledImages {
    pub fn load(images: &Path, labels: &Path, limit: Option<usize>) -> Result<Self> {
        let imgs = read_images(images, limit)?;
        let labs = read_labels(labels, limit)?;
        if imgs.shape()[0] != labs.len() {
            return Err(idx_err(
                labels,
                format!("{} labels for {} images", labs.len(), imgs.shape()[0]),
            ));
        }
        Ok(Self {
            images: imgs,
            labels: labs,
            source: images.to_path_buf(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> Array2<u8> {
        self.images.index_axis(ndarray::Axis(0), i).to_owned()
    }
}

/// Serializes images in IDX form (used to build fixtures).
pub fn encode_images(images: &Array3<u8>) -> Vec<u8> {
    let (n, h, w) = images.dim();
    let mut out = Vec::with_capacity(16 + n * h * w);
    for v in [IMAGE_MAGIC, n as u32, h as u32, w as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend(images.iter().copied());
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_limits() {
        let imgs = Array3::from_shape_fn([3, 2, 4], |(n, r, c)| (n * 8 + r * 4 + c) as u8);
        let p = Path::new("mem");
        let bytes = encode_images(&imgs);
        assert_eq!(&bytes[..4], &[0, 0, 8, 3]);
        assert_eq!(parse_images(p, &bytes, None).unwrap(), imgs);
        assert_eq!(parse_images(p, &bytes, Some(2)).unwrap().shape(), &[2, 2, 4]);
        let labs = encode_labels(&[7, 1, 3]);
        assert_eq!(&labs[..4], &[0, 0, 8, 1]);
        assert_eq!(parse_labels(p, &labs, Some(10)).unwrap(), vec![7, 1, 3]);
    }

    #[test]
    fn wrong_magic_and_truncation() {
        let p = Path::new("mem");
        let labs = encode_labels(&[1, 2]);
        assert!(parse_images(p, &labs, None).is_err());
        let imgs = encode_images(&Array3::zeros([2, 2, 2]));
        assert!(parse_labels(p, &imgs, None).is_err());
        assert!(parse_images(p, &imgs[..imgs.len() - 1], None).is_err());
        assert!(parse_images(p, &imgs[..10], None).is_err());
    }
}
