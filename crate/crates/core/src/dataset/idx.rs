//! MNIST-style IDX files (big-endian headers, unsigned byte payload).

use std::fs;
use std::path::Path;

use super::{Dataset, LabeledSample};
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;
const IDX_CLASSES: usize = 10;

fn read_u32_be(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(path, "truncated header"))
}

/// Returns `(rows, cols, pixels)` where pixels are raw bytes, row-major per image.
pub fn read_idx_images(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<Vec<u8>>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let magic = read_u32_be(&bytes, 0, path)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(
            path,
            format!("bad magic number {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        ));
    }
    let count = read_u32_be(&bytes, 4, path)? as usize;
    let rows = read_u32_be(&bytes, 8, path)? as usize;
    let cols = read_u32_be(&bytes, 12, path)? as usize;
    let size = rows * cols;
    let payload = &bytes[16..];
    if payload.len() < count * size {
        return Err(Error::format(
            path,
            format!(
                "truncated: {count} images need {} bytes, found {}",
                count * size,
                payload.len()
            ),
        ));
    }
    let images = payload[..count * size]
        .chunks(size)
        .map(<[u8]>::to_vec)
        .collect();
    Ok((rows, cols, images))
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let magic = read_u32_be(&bytes, 0, path)?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(
            path,
            format!("bad magic number {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        ));
    }
    let count = read_u32_be(&bytes, 4, path)? as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(Error::format(
            path,
            format!(
                "truncated: {count} labels announced, {} present",
                payload.len()
            ),
        ));
    }
    Ok(payload[..count].to_vec())
}

/// Loads an image/label IDX pair as a 10-class dataset with pixels scaled to `[0, 1]`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (rows, cols, images) = read_idx_images(images_path.as_ref())?;
    let labels = read_idx_labels(labels_path.as_ref())?;
    if images.len() != labels.len() {
        return Err(Error::format(
            labels_path.as_ref(),
            format!("{} labels for {} images", labels.len(), images.len()),
        ));
    }
    let samples = images
        .into_iter()
        .zip(labels)
        .map(|(pixels, label)| {
            let features = pixels.into_iter().map(|p| f64::from(p) / 255.0).collect();
            LabeledSample::new(features, usize::from(label))
        })
        .collect();
    Dataset::new(samples, rows * cols, IDX_CLASSES)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_images(
        dir: &Path,
        count: u32,
        rows: u32,
        cols: u32,
        magic: u32,
    ) -> std::path::PathBuf {
        let path = dir.join("images.idx");
        let mut f = fs::File::create(&path).unwrap();
        for v in [magic, count, rows, cols] {
            f.write_all(&v.to_be_bytes()).unwrap();
        }
        for i in 0..count * rows * cols {
            f.write_all(&[(i % 256) as u8]).unwrap();
        }
        path
    }

    fn write_labels(dir: &Path, labels: &[u8]) -> std::path::PathBuf {
        let path = dir.join("labels.idx");
        let mut f = fs::File::create(&path).unwrap();
        f.write_all(&LABELS_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&(labels.len() as u32).to_be_bytes()).unwrap();
        f.write_all(labels).unwrap();
        path
    }

    #[test]
    fn loads_and_scales() {
        let dir = tempfile::tempdir().unwrap();
        let images = write_images(dir.path(), 3, 28, 28, IMAGES_MAGIC);
        let labels = write_labels(dir.path(), &[0, 9, 4]);
        let data = load_idx(&images, &labels).unwrap();
        assert_eq!(data.dim(), 784);
        assert_eq!(data.classes(), 10);
        assert_eq!(data.len(), 3);
        assert_eq!(data.samples()[1].label, 9);
        assert_eq!(data.samples()[0].features[1], 1.0 / 255.0);
        assert!(data
            .samples()
            .iter()
            .flat_map(|s| &s.features)
            .all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let images = write_images(dir.path(), 6, 2, 2, IMAGES_MAGIC);
        let labels = write_labels(dir.path(), &[0, 1, 2, 3, 4]);
        assert!(matches!(
            load_idx(&images, &labels),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let images = write_images(dir.path(), 1, 2, 2, LABELS_MAGIC);
        let labels = write_labels(dir.path(), &[0]);
        let err = load_idx(&images, &labels).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");
    }

    #[test]
    fn truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let images = write_images(dir.path(), 2, 2, 2, IMAGES_MAGIC);
        let bytes = fs::read(&images).unwrap();
        fs::write(&images, &bytes[..bytes.len() - 1]).unwrap();
        assert!(read_idx_images(&images)
            .unwrap_err()
            .to_string()
            .contains("truncated"));
    }

    #[test]
    fn missing_file_is_io() {
        assert!(matches!(
            read_idx_labels("/nonexistent/labels.idx"),
            Err(Error::Io { .. })
        ));
    }
}
