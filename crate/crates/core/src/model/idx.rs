//! Reader for the IDX format used by the MNIST family of datasets.
//!
//! Images use magic `0x00000803` followed by big-endian u32 counts
//! `(n, rows, cols)` and `n * rows * cols` unsigned bytes. Labels use magic
//! `0x00000801`, a count `n` and `n` bytes.

use std::io::Read;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_be_bytes(b))
}

/// Reads images and labels, keeping at most `limit` samples. Pixels are
/// scaled into [0, 1].
pub fn read_idx(
    mut images: impl Read,
    mut labels: impl Read,
    num_classes: usize,
    limit: Option<usize>,
) -> Result<Dataset> {
    let magic = read_u32(&mut images)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!("image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}")));
    }
    let n = read_u32(&mut images)? as usize;
    let rows = read_u32(&mut images)? as usize;
    let cols = read_u32(&mut images)? as usize;
    let magic = read_u32(&mut labels)?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format(format!("label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}")));
    }
    let n_labels = read_u32(&mut labels)? as usize;
    if n_labels != n {
        return Err(Error::Format(format!("{n} images but {n_labels} labels")));
    }
    let take = limit.map_or(n, |l| l.min(n));
    let dim = rows * cols;
    let mut pixels = vec![0u8; take * dim];
    images.read_exact(&mut pixels)?;
    let mut raw_labels = vec![0u8; take];
    labels.read_exact(&mut raw_labels)?;
    let features = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    Dataset::new(features, raw_labels.into_iter().map(u32::from).collect(), dim, num_classes)
}

pub fn load_idx(images: &Path, labels: &Path, num_classes: usize, limit: Option<usize>) -> Result<Dataset> {
    let img = std::io::BufReader::new(std::fs::File::open(images)?);
    let lab = std::io::BufReader::new(std::fs::File::open(labels)?);
    read_idx(img, lab, num_classes, limit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encode(n: u32, labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
        let mut img = Vec::new();
        img.extend(IMAGE_MAGIC.to_be_bytes());
        img.extend(n.to_be_bytes());
        img.extend(2u32.to_be_bytes());
        img.extend(2u32.to_be_bytes());
        for i in 0..n * 4 {
            img.push((i * 17 % 256) as u8);
        }
        let mut lab = Vec::new();
        lab.extend(LABEL_MAGIC.to_be_bytes());
        lab.extend(n.to_be_bytes());
        lab.extend_from_slice(labels);
        (img, lab)
    }

    #[test]
    fn reads_subset() {
        let (img, lab) = encode(3, &[1, 0, 2]);
        let d = read_idx(img.as_slice(), lab.as_slice(), 3, Some(2)).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.dim(), 4);
        assert_eq!(d.labels(), &[1, 0]);
        assert_eq!(d.sample(0).0[1], 17.0 / 255.0);
    }

    #[test]
    fn rejects_bad_magic() {
        let (mut img, lab) = encode(1, &[0]);
        img[3] = 0x01;
        assert!(matches!(read_idx(img.as_slice(), lab.as_slice(), 2, None), Err(Error::Format(_))));
    }

    #[test]
    fn loads_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = encode(2, &[1, 1]);
        std::fs::write(dir.path().join("img"), img).unwrap();
        std::fs::write(dir.path().join("lab"), lab).unwrap();
        let d = load_idx(&dir.path().join("img"), &dir.path().join("lab"), 2, None).unwrap();
        assert_eq!(d.len(), 2);
    }
}
