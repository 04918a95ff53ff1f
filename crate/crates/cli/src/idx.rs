//! IDX reader and writer (the MNIST container format).
//!
//! Header: a big-endian `u32` magic whose low byte is the number of
//! dimensions and whose third byte is the element type (`0x08`, unsigned
//! byte), followed by one big-endian `u32` per dimension. The payload is the
//! product of the dimensions in bytes, with nothing after it. Gzipped files
//! are detected by their magic and inflated first.

use std::io::Read;
use std::path::Path;

use fedchain::flcore::DatasetShard;
use fedchain::Scalar;
use flate2::read::GzDecoder;

use crate::CliError;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxHeader {
    pub magic: u32,
    pub dims: Vec<u32>,
}

impl IdxHeader {
    pub fn payload_len(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub header: IdxHeader,
    pub data: Vec<u8>,
}

fn read_u32(bytes: &[u8], at: usize) -> Option<u32> {
    Some(u32::from_be_bytes(bytes.get(at..at + 4)?.try_into().ok()?))
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray, CliError> {
    let magic = read_u32(bytes, 0).ok_or_else(|| CliError::Format("IDX stream shorter than its magic".into()))?;
    let ndims = match magic {
        IMAGES_MAGIC => 3,
        LABELS_MAGIC => 1,
        other => return Err(CliError::Format(format!("bad IDX magic {other:#010x}"))),
    };
    let dims = (0..ndims)
        .map(|i| read_u32(bytes, 4 + 4 * i))
        .collect::<Option<Vec<u32>>>()
        .ok_or_else(|| CliError::Length("IDX header truncated".into()))?;
    let header = IdxHeader { magic, dims };
    let start = 4 + 4 * ndims;
    let expected = header.payload_len();
    let got = bytes.len() - start;
    if got < expected {
        return Err(CliError::Length(format!(
            "IDX payload has {got} bytes, header declares {expected}"
        )));
    }
    if got > expected {
        return Err(CliError::Format(format!(
            "{} trailing bytes after IDX payload",
            got - expected
        )));
    }
    Ok(IdxArray {
        header,
        data: bytes[start..].to_vec(),
    })
}

pub fn write_idx(header: &IdxHeader, data: &[u8]) -> Result<Vec<u8>, CliError> {
    let ndims = (header.magic & 0xff) as usize;
    if header.magic >> 8 != 0x08 || ndims != header.dims.len() {
        return Err(CliError::Format(format!(
            "magic {:#010x} does not describe {} byte dimensions",
            header.magic,
            header.dims.len()
        )));
    }
    if data.len() != header.payload_len() {
        return Err(CliError::Length(format!(
            "{} data bytes for dims {:?}",
            data.len(),
            header.dims
        )));
    }
    let mut out = Vec::with_capacity(4 + 4 * ndims + data.len());
    out.extend_from_slice(&header.magic.to_be_bytes());
    for d in &header.dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(data);
    Ok(out)
}

/// Reads a file, inflating it when it starts with the gzip magic.
pub fn read_idx_file(path: &Path) -> Result<IdxArray, CliError> {
    let raw = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut inflated = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut inflated)
            .map_err(|e| CliError::Format(format!("{}: bad gzip stream: {e}", path.display())))?;
        parse_idx(&inflated)
    } else {
        parse_idx(&raw)
    }
}

/// Pairs an image array with a label array; pixels become `byte / 255`.
pub fn to_dataset<T: Scalar>(images: &IdxArray, labels: &IdxArray) -> Result<DatasetShard<T>, CliError> {
    if images.header.magic != IMAGES_MAGIC || labels.header.magic != LABELS_MAGIC {
        return Err(CliError::Format("expected an image file and a label file".into()));
    }
    let rows = images.header.dims[0] as usize;
    if labels.header.dims[0] as usize != rows {
        return Err(CliError::Format(format!(
            "{rows} images but {} labels",
            labels.header.dims[0]
        )));
    }
    let dim = images.header.dims[1] as usize * images.header.dims[2] as usize;
    let features = images.data.iter().map(|&b| T::of_f64(b as f64 / 255.0)).collect();
    let labels: Vec<usize> = labels.data.iter().map(|&l| l as usize).collect();
    let classes = labels.iter().max().map_or(1, |&m| m + 1).max(10);
    Ok(DatasetShard::new(features, dim, labels, classes)?)
}

pub fn load_dataset<T: Scalar>(images: &Path, labels: &Path) -> Result<DatasetShard<T>, CliError> {
    to_dataset(&read_idx_file(images)?, &read_idx_file(labels)?)
}
