//! IDX binary files (the MNIST distribution format).
//!
//! Layout: a big-endian `u32` magic `0x000008NN` where `08` marks unsigned
//! bytes and `NN` is the dimension count, then one big-endian `u32` per
//! dimension, then the payload in row-major order. Images use magic
//! `0x00000803` (count, rows, cols); labels use `0x00000801` (count).

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::nn::Dataset;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Standard MNIST file names inside a directory.
pub const MNIST_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const MNIST_TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const MNIST_TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| {
            Error::Length(format!(
                "{}: header truncated at byte {offset} (file is {} bytes)",
                path.display(),
                bytes.len()
            ))
        })
}

/// Checks the magic number and returns the dimension sizes and payload.
fn parse<'a>(bytes: &'a [u8], magic: u32, path: &Path) -> Result<(Vec<usize>, &'a [u8])> {
    let found = be_u32(bytes, 0, path)?;
    if found != magic {
        return Err(Error::Format(format!(
            "{}: magic bytes {:02x} {:02x} {:02x} {:02x} (0x{found:08x}), expected 0x{magic:08x}",
            path.display(),
            bytes[0],
            bytes[1],
            bytes[2],
            bytes[3]
        )));
    }
    let ndims = (magic & 0xff) as usize;
    let dims = (0..ndims)
        .map(|i| be_u32(bytes, 4 + 4 * i, path).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let header = 4 + 4 * ndims;
    let expected: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() < expected {
        return Err(Error::Length(format!(
            "{}: header declares {expected} data bytes but only {} follow",
            path.display(),
            payload.len()
        )));
    }
    Ok((dims, &payload[..expected]))
}

/// Loads an image/label file pair. Pixels are scaled by 1/255 and each
/// image is flattened row-major. The class count is `max label + 1`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let image_bytes = read(ip)?;
    let label_bytes = read(lp)?;
    let (idims, pixels) = parse(&image_bytes, IMAGES_MAGIC, ip)?;
    let (ldims, labels) = parse(&label_bytes, LABELS_MAGIC, lp)?;
    let (count, rows, cols) = (idims[0], idims[1], idims[2]);
    if ldims[0] != count {
        return Err(Error::Consistency(format!(
            "{} holds {count} images but {} holds {} labels",
            ip.display(),
            lp.display(),
            ldims[0]
        )));
    }
    let inputs = Array2::from_shape_vec(
        (count, rows * cols),
        pixels.iter().map(|&p| p as f64 / 255.0).collect(),
    )
    .expect("payload length checked");
    let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let classes = labels.iter().copied().max().map_or(1, |m| m + 1);
    Dataset::new(inputs, labels, classes)
}

/// Loads the four standard MNIST files from `dir`, returning `(train, test)`.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<(Dataset, Dataset)> {
    let d = dir.as_ref();
    let mut train = load_idx(d.join(MNIST_TRAIN_IMAGES), d.join(MNIST_TRAIN_LABELS))?;
    let mut test = load_idx(d.join(MNIST_TEST_IMAGES), d.join(MNIST_TEST_LABELS))?;
    let classes = train.classes().max(test.classes());
    train = Dataset::new(train.inputs().to_owned(), train.labels().to_vec(), classes)?;
    test = Dataset::new(test.inputs().to_owned(), test.labels().to_vec(), classes)?;
    Ok((train, test))
}

fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for d in dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out
}

/// Encodes `count` images of `rows × cols` bytes.
pub fn encode_images(rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let count = pixels.len() as u32 / (rows * cols);
    let mut out = header(IMAGES_MAGIC, &[count, rows, cols]);
    out.extend_from_slice(pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = header(LABELS_MAGIC, &[labels.len() as u32]);
    out.extend_from_slice(labels);
    out
}

pub fn write_idx_pair(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    rows: u32,
    cols: u32,
    pixels: &[u8],
    labels: &[u8],
) -> Result<()> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    std::fs::write(ip, encode_images(rows, cols, pixels)).map_err(|e| Error::io(ip, e))?;
    std::fs::write(lp, encode_labels(labels)).map_err(|e| Error::io(lp, e))
}
