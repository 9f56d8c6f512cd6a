//! IDX (big-endian) image and label files.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::Dataset;
use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn check_header(path: &Path, bytes: &[u8], magic: u32, header_len: usize) -> Result<()> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: header_len,
            actual: bytes.len(),
        });
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found,
            expected: magic,
        });
    }
    if bytes.len() < header_len {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: header_len,
            actual: bytes.len(),
        });
    }
    Ok(())
}

fn check_body(path: &Path, bytes: &[u8], expected: usize) -> Result<()> {
    if bytes.len() != expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len(),
        });
    }
    Ok(())
}

/// Image rows scaled to `[0, 1]` by `v / 255`.
pub fn read_idx_images(path: impl AsRef<Path>) -> Result<Array2<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    check_header(path, &bytes, IMAGE_MAGIC, 16)?;
    let n = be_u32(&bytes, 4) as usize;
    let rows = be_u32(&bytes, 8) as usize;
    let cols = be_u32(&bytes, 12) as usize;
    let d = rows * cols;
    check_body(path, &bytes, 16 + n * d)?;
    let pixels = bytes[16..].iter().map(|&b| f32::from(b) / 255.0).collect();
    Ok(Array2::from_shape_vec((n, d), pixels).expect("length checked"))
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    check_header(path, &bytes, LABEL_MAGIC, 8)?;
    let n = be_u32(&bytes, 4) as usize;
    check_body(path, &bytes, 8 + n)?;
    Ok(bytes[8..].iter().map(|&b| usize::from(b)).collect())
}

/// Loads an image/label file pair. The category count is `max label + 1`;
/// use [`Dataset::with_num_categories`] to widen it.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images = read_idx_images(images_path.as_ref())?;
    let labels = read_idx_labels(labels_path)?;
    if images.nrows() != labels.len() {
        return Err(Error::CountMismatch {
            images: images.nrows(),
            labels: labels.len(),
        });
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let name = images_path
        .as_ref()
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(images, labels, k, name)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn images(n: u32, r: u32, c: u32, px: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IMAGE_MAGIC, n, r, c] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(px);
        b
    }

    fn labels(ls: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        b.extend_from_slice(&(ls.len() as u32).to_be_bytes());
        b.extend_from_slice(ls);
        b
    }

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, bytes).unwrap();
        p
    }

    #[test]
    fn hand_built_two_by_two() {
        let dir = tempfile::tempdir().unwrap();
        let i = write(dir.path(), "i", &images(1, 2, 2, &[0, 255, 0, 255]));
        let l = write(dir.path(), "l", &labels(&[3]));
        let d = load_idx(&i, &l).unwrap();
        assert_eq!(d.inputs().row(0).to_vec(), vec![0.0, 1.0, 0.0, 1.0]);
        assert_eq!(d.labels(), &[3]);
        assert_eq!(d.num_categories(), 4);
        assert_eq!(load_idx(&i, &l).unwrap(), d);
    }

    #[test]
    fn count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let i = write(dir.path(), "i", &images(1, 1, 1, &[7]));
        let l = write(dir.path(), "l", &labels(&[0, 1]));
        assert!(matches!(
            load_idx(&i, &l),
            Err(Error::CountMismatch { images: 1, labels: 2 })
        ));
    }

    #[test]
    fn bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let i = write(dir.path(), "i", &labels(&[0]));
        let l = write(dir.path(), "l", &labels(&[0]));
        assert!(matches!(load_idx(&i, &l), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn truncated() {
        let dir = tempfile::tempdir().unwrap();
        let i = write(dir.path(), "i", &images(2, 2, 2, &[0, 1, 2, 3, 4]));
        let l = write(dir.path(), "l", &labels(&[0, 1]));
        assert!(matches!(load_idx(&i, &l), Err(Error::Truncated { .. })));
        let short = write(dir.path(), "s", &IMAGE_MAGIC.to_be_bytes());
        assert!(matches!(read_idx_images(&short), Err(Error::Truncated { .. })));
    }
}
