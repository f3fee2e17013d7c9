//! Reader and writer for the IDX format (big-endian header, `u8` payload).
//!
//! Images: magic `0x00000803`, then `n`, `rows`, `cols` as `u32`, then `n*rows*cols` bytes.
//! Labels: magic `0x00000801`, then `n`, then `n` bytes.

use std::fs;
use std::path::Path;

use super::{Dataset, SplitTag};
use crate::error::{Error, IdxError, Result};
use crate::nn::Tensor;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn read_u32(bytes: &[u8], at: usize) -> std::result::Result<u32, IdxError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(IdxError::Truncated {
            needed: at + 4,
            available: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> std::result::Result<(), IdxError> {
    let found = read_u32(bytes, 0)?;
    if found != expected {
        return Err(IdxError::BadMagic { expected, found });
    }
    Ok(())
}

fn payload(bytes: &[u8], header: usize, len: usize) -> std::result::Result<&[u8], IdxError> {
    let needed = header + len;
    if bytes.len() < needed {
        return Err(IdxError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(IdxError::TrailingBytes {
            extra: bytes.len() - needed,
        });
    }
    Ok(&bytes[header..])
}

pub fn parse_idx_images(bytes: &[u8]) -> std::result::Result<IdxImages, IdxError> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let pixels = payload(bytes, 16, count * rows * cols)?.to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> std::result::Result<Vec<u8>, IdxError> {
    check_magic(bytes, LABELS_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    Ok(payload(bytes, 8, count)?.to_vec())
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads an image/label file pair. Pixels are scaled to `[0, 1]` and each
/// image is flattened row-major; the class count is `max(label) + 1`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let images = parse_idx_images(&read_file(ip)?).map_err(|source| Error::Idx {
        path: ip.to_path_buf(),
        source,
    })?;
    let labels = parse_idx_labels(&read_file(lp)?).map_err(|source| Error::Idx {
        path: lp.to_path_buf(),
        source,
    })?;
    if images.count != labels.len() {
        return Err(Error::Idx {
            path: lp.to_path_buf(),
            source: IdxError::CountMismatch {
                images: images.count,
                labels: labels.len(),
            },
        });
    }
    if images.count == 0 || images.rows * images.cols == 0 {
        return Err(Error::Data(format!("{}: no samples", ip.display())));
    }
    let features = images.pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let features = Tensor::new(vec![images.count, images.rows * images.cols], features)?;
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
    Dataset::new(features, labels, classes, SplitTag::Train)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn magic_is_checked() {
        let mut good = vec![0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 7];
        assert!(parse_idx_images(&good).is_ok());
        good[3] = 4;
        assert_eq!(
            parse_idx_images(&good),
            Err(IdxError::BadMagic {
                expected: 0x803,
                found: 0x804
            })
        );
    }

    #[test]
    fn truncation_and_trailing_bytes() {
        let full = encode_idx_labels(&[1, 2, 3]);
        assert!(matches!(parse_idx_labels(&full[..full.len() - 1]), Err(IdxError::Truncated { .. })));
        assert!(matches!(parse_idx_labels(&full[..3]), Err(IdxError::Truncated { .. })));
        let mut long = full.clone();
        long.push(0);
        assert_eq!(parse_idx_labels(&long), Err(IdxError::TrailingBytes { extra: 1 }));
        assert_eq!(parse_idx_labels(&full).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn pixel_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img");
        let lp = dir.path().join("lbl");
        let images = IdxImages {
            count: 1,
            rows: 2,
            cols: 2,
            pixels: vec![0, 128, 255, 64],
        };
        fs::write(&ip, encode_idx_images(&images)).unwrap();
        fs::write(&lp, encode_idx_labels(&[1])).unwrap();
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.features().data(), &[0.0, 128.0 / 255.0, 1.0, 64.0 / 255.0]);
    }

    #[test]
    fn count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img");
        let lp = dir.path().join("lbl");
        let images = IdxImages {
            count: 10,
            rows: 1,
            cols: 1,
            pixels: vec![0; 10],
        };
        fs::write(&ip, encode_idx_images(&images)).unwrap();
        fs::write(&lp, encode_idx_labels(&[0; 9])).unwrap();
        match load_idx(&ip, &lp) {
            Err(Error::Idx {
                source: IdxError::CountMismatch { images: 10, labels: 9 },
                ..
            }) => {}
            other => panic!("expected count mismatch, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_idx("/nonexistent/img", "/nonexistent/lbl").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/img"));
    }
}
