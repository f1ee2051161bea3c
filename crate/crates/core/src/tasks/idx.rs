//! IDX image/label files (big-endian headers, magic 0x803 / 0x801). Gzipped
//! files are detected by their header and decompressed transparently.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq)]
pub struct ImageDataset {
    /// `len × rows × cols` bytes, row-major per image.
    pub images: Vec<u8>,
    pub labels: Vec<u8>,
    pub rows: usize,
    pub cols: usize,
    pub split: String,
}

impl ImageDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.images[i * n..(i + 1) * n]
    }

    /// Keeps the listed samples, in order.
    pub fn select(&self, idx: &[usize], split: &str) -> ImageDataset {
        let mut images = Vec::with_capacity(idx.len() * self.rows * self.cols);
        for &i in idx {
            images.extend_from_slice(self.image(i));
        }
        ImageDataset {
            images,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            rows: self.rows,
            cols: self.cols,
            split: split.to_string(),
        }
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::Format { path: path.to_path_buf(), msg: format!("gzip: {e}") })?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

/// Parses an IDX header of `ndim` dimensions; returns the dims and payload.
fn parse(path: &Path, bytes: &[u8], magic: u32, ndim: usize) -> Result<(Vec<usize>, Vec<u8>)> {
    let fail = |msg: String| Error::Format { path: path.to_path_buf(), msg };
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(fail(format!("truncated header: expected {header} bytes, found {}", bytes.len())));
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(fail(format!("bad magic number {found:#010x}, expected {magic:#010x}")));
    }
    let dims: Vec<usize> = (0..ndim).map(|i| be_u32(bytes, 4 + 4 * i) as usize).collect();
    let expected = header + dims.iter().product::<usize>();
    if bytes.len() != expected {
        let what = if bytes.len() < expected { "truncated" } else { "oversized" };
        return Err(fail(format!("{what} file: expected {expected} bytes, found {}", bytes.len())));
    }
    Ok((dims, bytes[header..].to_vec()))
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<ImageDataset> {
    let (dims, images) = parse(images_path, &read_maybe_gz(images_path)?, IMAGES_MAGIC, 3)?;
    let (ldims, labels) = parse(labels_path, &read_maybe_gz(labels_path)?, LABELS_MAGIC, 1)?;
    if dims[0] != ldims[0] {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            msg: format!("{} labels for {} images", ldims[0], dims[0]),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= 10) {
        return Err(Error::Format { path: labels_path.to_path_buf(), msg: format!("label {bad} outside [0, 10)") });
    }
    let split = images_path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(ImageDataset { images, labels, rows: dims[1], cols: dims[2], split })
}

/// Writes the dataset as a pair of IDX files; gzipped when the path ends in `.gz`.
pub fn save_idx(ds: &ImageDataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let mut img = Vec::with_capacity(16 + ds.images.len());
    for v in [IMAGES_MAGIC, ds.len() as u32, ds.rows as u32, ds.cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend_from_slice(&ds.images);
    let mut lab = Vec::with_capacity(8 + ds.len());
    for v in [LABELS_MAGIC, ds.len() as u32] {
        lab.extend_from_slice(&v.to_be_bytes());
    }
    lab.extend_from_slice(&ds.labels);
    for (path, bytes) in [(images_path, img), (labels_path, lab)] {
        if path.extension().is_some_and(|e| e == "gz") {
            let mut enc = GzEncoder::new(Vec::new(), Compression::default());
            enc.write_all(&bytes)?;
            fs::write(path, enc.finish()?)?;
        } else {
            fs::write(path, bytes)?;
        }
    }
    Ok(())
}
