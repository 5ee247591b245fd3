//! The IDX format: a big-endian `u32` magic (`0x0000_08NN`, where `08` means
//! unsigned bytes and `NN` is the rank), one big-endian `u32` per dimension,
//! then the raw bytes.

use std::path::Path;

use super::{read_maybe_compressed, Dataset};
use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn header(bytes: &[u8], magic: u32, rank: usize) -> std::result::Result<(Vec<usize>, &[u8]), String> {
    let word = |i: usize| -> std::result::Result<u32, String> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
            .ok_or_else(|| "truncated header".to_string())
    };
    let found = word(0)?;
    if found != magic {
        return Err(format!("bad magic 0x{found:08x}, expected 0x{magic:08x}"));
    }
    let dims: Vec<usize> = (1..=rank).map(|i| word(i).map(|d| d as usize)).collect::<std::result::Result<_, _>>()?;
    let body = &bytes[4 * (rank + 1)..];
    let expected: usize = dims.iter().product();
    if body.len() < expected {
        return Err(format!("truncated: {} data bytes, expected {expected}", body.len()));
    }
    if body.len() > expected {
        return Err(format!("{} trailing bytes after the data", body.len() - expected));
    }
    Ok((dims, body))
}

/// Parses an image file into `(n, height, width, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> std::result::Result<(usize, usize, usize, &[u8]), String> {
    let (dims, body) = header(bytes, IDX_IMAGES_MAGIC, 3)?;
    if dims[1] == 0 || dims[2] == 0 {
        return Err("zero-sized images".into());
    }
    Ok((dims[0], dims[1], dims[2], body))
}

pub fn parse_idx_labels(bytes: &[u8]) -> std::result::Result<&[u8], String> {
    header(bytes, IDX_LABELS_MAGIC, 1).map(|(_, body)| body)
}

/// Loads an image/label file pair. Pixels are divided by 255.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img_bytes = read_maybe_compressed(images_path)?;
    let (n, h, w, pixels) = parse_idx_images(&img_bytes).map_err(|m| Error::data(images_path, m))?;
    let lab_bytes = read_maybe_compressed(labels_path)?;
    let labels = parse_idx_labels(&lab_bytes).map_err(|m| Error::data(labels_path, m))?;
    if labels.len() != n {
        return Err(Error::data(
            labels_path,
            format!("{} labels for {n} images in {}", labels.len(), images_path.display()),
        ));
    }
    if n == 0 {
        return Err(Error::data(images_path, "no images"));
    }
    if let Some(l) = labels.iter().find(|&&l| l >= 10) {
        return Err(Error::data(labels_path, format!("label {l} outside [0, 10)")));
    }
    let data = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    let name = images_path
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, Tensor::new(vec![n, 1, h, w], data)?, labels.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Samples;
    use std::io::Write;

    fn idx(magic: u32, dims: &[u32], body: &[u8]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend(d.to_be_bytes());
        }
        v.extend(body);
        v
    }

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, bytes).unwrap();
        p
    }

    #[test]
    fn two_image_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let imgs = write(dir.path(), "i", &idx(IDX_IMAGES_MAGIC, &[2, 2, 2], &[0, 255, 255, 0, 255, 255, 0, 0]));
        let labs = write(dir.path(), "l", &idx(IDX_LABELS_MAGIC, &[2], &[3, 7]));
        let d = load_idx(&imgs, &labs).unwrap();
        assert_eq!(d.dims(), [1, 2, 2]);
        assert_eq!(d.image(0), &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(d.labels(), &[3, 7]);
    }

    #[test]
    fn gzip_is_transparent() {
        let dir = tempfile::tempdir().unwrap();
        let raw = idx(IDX_IMAGES_MAGIC, &[1, 1, 2], &[0, 255]);
        let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&raw).unwrap();
        let imgs = write(dir.path(), "i.gz", &enc.finish().unwrap());
        let labs = write(dir.path(), "l", &idx(IDX_LABELS_MAGIC, &[1], &[1]));
        assert_eq!(load_idx(&imgs, &labs).unwrap().image(0), &[0.0, 1.0]);
    }

    #[test]
    fn malformed_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let imgs = write(dir.path(), "i", &idx(IDX_IMAGES_MAGIC, &[2, 1, 1], &[0, 1]));
        // A label file carrying the image magic.
        let wrong = write(dir.path(), "w", &idx(IDX_IMAGES_MAGIC, &[2], &[0, 1]));
        let err = load_idx(&imgs, &wrong).unwrap_err().to_string();
        assert!(err.contains("bad magic"), "{err}");
        let short = write(dir.path(), "s", &idx(IDX_LABELS_MAGIC, &[3], &[0, 1]));
        assert!(load_idx(&imgs, &short).unwrap_err().to_string().contains("truncated"));
        let few = write(dir.path(), "f", &idx(IDX_LABELS_MAGIC, &[1], &[0]));
        assert!(load_idx(&imgs, &few).unwrap_err().to_string().contains("1 labels for 2 images"));
        let trunc_img = write(dir.path(), "t", &idx(IDX_IMAGES_MAGIC, &[2, 1, 1], &[0]));
        assert!(load_idx(&trunc_img, &few).is_err());
    }
}
