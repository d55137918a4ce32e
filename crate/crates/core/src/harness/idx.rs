//! IDX digit files (the MNIST container format): big-endian `u32` magic,
//! big-endian `u32` dimensions, then raw `u8` payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index;

use crate::dataset::IncompleteMatrix;
use crate::error::{Error, Result};
use crate::seed;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw image block: `count` images of `rows x cols` bytes each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn image(&self, i: usize) -> &[u8] {
        let len = self.rows * self.cols;
        &self.pixels[i * len..(i + 1) * len]
    }
}

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| format_error(path, "file truncated inside the header"))
}

pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IMAGES_MAGIC {
        return Err(format_error(
            path,
            format!("bad magic number {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        ));
    }
    let count = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let len = count * rows * cols;
    if bytes.len() != 16 + len {
        return Err(format_error(
            path,
            format!("expected {} payload bytes, found {}", len, bytes.len().saturating_sub(16)),
        ));
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != LABELS_MAGIC {
        return Err(format_error(
            path,
            format!("bad magic number {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        ));
    }
    let count = be_u32(bytes, 4, path)? as usize;
    if bytes.len() != 8 + count {
        return Err(format_error(
            path,
            format!("expected {count} labels, found {}", bytes.len().saturating_sub(8)),
        ));
    }
    Ok(bytes[8..].to_vec())
}

pub fn read_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx_images(&bytes, path)
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx_labels(&bytes, path)
}

pub fn write_idx_images<W: Write>(images: &IdxImages, mut out: W) -> std::io::Result<()> {
    for v in [IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.write_all(&v.to_be_bytes())?;
    }
    out.write_all(&images.pixels)
}

pub fn write_idx_labels<W: Write>(labels: &[u8], mut out: W) -> std::io::Result<()> {
    out.write_all(&LABELS_MAGIC.to_be_bytes())?;
    out.write_all(&(labels.len() as u32).to_be_bytes())?;
    out.write_all(labels)
}

/// Draw `per_class` images of each listed digit (without replacement),
/// unravel them row-major and scale pixels to `[0, 1]`. Rows come out
/// grouped by class in the order of `classes`; labels are the digits.
pub fn load_idx_digits(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    classes: &[u8],
    per_class: usize,
    seed: u64,
) -> Result<(IncompleteMatrix, Vec<usize>)> {
    let images = read_idx_images(images_path.as_ref())?;
    let labels = read_idx_labels(labels_path.as_ref())?;
    if images.count != labels.len() {
        return Err(format_error(
            labels_path.as_ref(),
            format!("{} labels for {} images", labels.len(), images.count),
        ));
    }
    let rows = balanced_indices(&labels, classes, Some(per_class), seed)?;
    let d = images.rows * images.cols;
    let values = DMatrix::from_fn(rows.len(), d, |r, j| images.image(rows[r])[j] as f64 / 255.0);
    let y = rows.iter().map(|&i| labels[i] as usize).collect();
    Ok((IncompleteMatrix::complete(values), y))
}

/// Per class (in the order given), `per_class` indices sampled without
/// replacement and sorted, or every index when `per_class` is `None`.
pub(crate) fn balanced_indices<L: Copy + PartialEq + std::fmt::Display>(
    labels: &[L],
    classes: &[L],
    per_class: Option<usize>,
    seed: u64,
) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (c, &class) in classes.iter().enumerate() {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            return Err(Error::Config(format!("class {class} does not occur in the data")));
        }
        match per_class {
            None => out.extend(members),
            Some(want) => {
                if want > members.len() {
                    return Err(Error::Config(format!(
                        "class {class} has only {} examples, {want} requested",
                        members.len()
                    )));
                }
                let mut rng = seed::rng(seed::derive(seed, &[c as u64]));
                let mut pick: Vec<usize> = index::sample(&mut rng, members.len(), want)
                    .into_iter()
                    .map(|k| members[k])
                    .collect();
                pick.sort_unstable();
                out.extend(pick);
            }
        }
    }
    Ok(out)
}
