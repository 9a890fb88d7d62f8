//! MNIST IDX ingestion, binarization and exemplar selection.
//!
//! Image files use magic `0x00000803` with dimensions `[count, 28, 28]`,
//! label files use `0x00000801`. Both are big-endian. Gzip-compressed
//! files are detected by their header and decompressed transparently.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, IdxError, Result};
use crate::grid::Grid;

pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const NUM_CLASSES: usize = 10;

/// Pixel threshold: values strictly above it become foreground.
pub const BINARIZE_THRESHOLD: u8 = 127;

#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    pub pixels: Grid<u8>,
    pub label: Option<u8>,
    /// Position in the source file.
    pub index: usize,
}

/// A 28×28 image whose pixels are exactly 0 or 255.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryImage {
    pub pixels: Grid<u8>,
    pub label: Option<u8>,
    pub source_index: usize,
}

impl BinaryImage {
    pub fn to_raw(&self) -> RawImage {
        RawImage {
            pixels: self.pixels.clone(),
            label: self.label,
            index: self.source_index,
        }
    }
}

/// One binarized image per class, ordered by class label.
#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarSet {
    images: Vec<BinaryImage>,
}

impl ExemplarSet {
    /// Validates that `images` holds exactly one image for each label `0..images.len()`.
    pub fn new(mut images: Vec<BinaryImage>) -> Result<Self> {
        let n = images.len();
        let mut seen = vec![false; n];
        for img in &images {
            let label = img
                .label
                .ok_or_else(|| Error::Selection(format!("image #{} has no label", img.source_index)))?
                as usize;
            if label >= n {
                return Err(Error::Selection(format!(
                    "label {label} outside 0..{n} for a set of {n} exemplars"
                )));
            }
            if seen[label] {
                return Err(Error::Selection(format!("class {label} selected twice")));
            }
            seen[label] = true;
        }
        if n < 2 {
            return Err(Error::Selection("at least two classes are required".into()));
        }
        images.sort_by_key(|img| img.label);
        Ok(ExemplarSet { images })
    }

    pub fn images(&self) -> &[BinaryImage] {
        &self.images
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn source_indices(&self) -> Vec<usize> {
        self.images.iter().map(|img| img.source_index).collect()
    }
}

/// How exemplars are picked from a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selection {
    /// Dataset positions used verbatim, in any order.
    Indices(Vec<usize>),
    /// Uniform draw per class from a ChaCha8 stream seeded with this value.
    Seeded(u64),
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32, IdxError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(IdxError::Truncated {
            needed: offset + 4,
            available: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<(), IdxError> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(IdxError::BadMagic { expected, found });
    }
    Ok(())
}

/// Decodes an in-memory IDX image file. Images come back unlabeled.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<RawImage>, IdxError> {
    check_magic(bytes, IMAGE_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)?;
    let cols = be_u32(bytes, 12)?;
    if rows as usize != IMAGE_SIDE || cols as usize != IMAGE_SIDE {
        return Err(IdxError::Dimensions { rows, cols });
    }
    let pixels_per_image = IMAGE_SIDE * IMAGE_SIDE;
    let needed = 16 + count * pixels_per_image;
    if bytes.len() < needed {
        return Err(IdxError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    Ok(bytes[16..needed]
        .chunks_exact(pixels_per_image)
        .enumerate()
        .map(|(index, chunk)| RawImage {
            pixels: Grid::from_vec(IMAGE_SIDE, IMAGE_SIDE, chunk.to_vec()).expect("chunk size"),
            label: None,
            index,
        })
        .collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    check_magic(bytes, LABEL_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let needed = 8 + count;
    if bytes.len() < needed {
        return Err(IdxError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    let labels = bytes[8..needed].to_vec();
    if let Some((index, &label)) = labels
        .iter()
        .enumerate()
        .find(|(_, &l)| l as usize >= NUM_CLASSES)
    {
        return Err(IdxError::BadLabel { index, label });
    }
    Ok(labels)
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Vec<RawImage>> {
    let bytes = read_maybe_gz(path.as_ref())?;
    Ok(parse_idx_images(&bytes)?)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let bytes = read_maybe_gz(path.as_ref())?;
    Ok(parse_idx_labels(&bytes)?)
}

/// Loads an image file and its companion label file, attaching labels.
pub fn load_labeled(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Vec<RawImage>> {
    let mut imgs = load_idx_images(images)?;
    let labels = load_idx_labels(labels)?;
    attach_labels(&mut imgs, &labels)?;
    Ok(imgs)
}

pub fn attach_labels(images: &mut [RawImage], labels: &[u8]) -> Result<()> {
    if images.len() != labels.len() {
        return Err(Error::LabelCount {
            images: images.len(),
            labels: labels.len(),
        });
    }
    for (img, &label) in images.iter_mut().zip(labels) {
        img.label = Some(label);
    }
    Ok(())
}

pub fn binarize(img: &RawImage) -> BinaryImage {
    BinaryImage {
        pixels: img
            .pixels
            .map(|&p| if p > BINARIZE_THRESHOLD { 255 } else { 0 }),
        label: img.label,
        source_index: img.index,
    }
}

/// Picks one image per class `0..num_classes`.
///
/// Explicit indices address positions in `images`. A seeded draw walks the
/// classes in order and picks uniformly among that class's images.
pub fn select_exemplars(
    images: &[BinaryImage],
    selection: &Selection,
    num_classes: usize,
) -> Result<ExemplarSet> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (pos, img) in images.iter().enumerate() {
        if let Some(label) = img.label {
            if (label as usize) < num_classes {
                by_class[label as usize].push(pos);
            }
        }
    }

    let chosen: Vec<usize> = match selection {
        Selection::Indices(indices) => {
            if let Some(&bad) = indices.iter().find(|&&i| i >= images.len()) {
                return Err(Error::Selection(format!(
                    "index {bad} out of range for {} images",
                    images.len()
                )));
            }
            let mut covered = vec![false; num_classes];
            for &i in indices {
                match images[i].label {
                    Some(l) if (l as usize) < num_classes => covered[l as usize] = true,
                    other => {
                        return Err(Error::Selection(format!(
                            "image #{i} has label {other:?}, outside 0..{num_classes}"
                        )))
                    }
                }
            }
            if let Some(class) = covered.iter().position(|&c| !c) {
                return Err(Error::MissingClass(class));
            }
            indices.clone()
        }
        Selection::Seeded(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut picks = Vec::with_capacity(num_classes);
            for (class, members) in by_class.iter().enumerate() {
                if members.is_empty() {
                    return Err(Error::MissingClass(class));
                }
                picks.push(members[uniform_below(&mut rng, members.len())]);
            }
            picks
        }
    };

    ExemplarSet::new(chosen.into_iter().map(|i| images[i].clone()).collect())
}

/// Unbiased draw from `0..n` by rejection on a 64-bit stream.
fn uniform_below(rng: &mut ChaCha8Rng, n: usize) -> usize {
    use rand::Rng;
    let n = n as u64;
    let zone = u64::MAX - u64::MAX % n;
    loop {
        let v = rng.next_u64();
        if v < zone {
            return (v % n) as usize;
        }
    }
}
