//! IDX (MNIST-style) loader: big-endian magic and dimensions, u8 payload.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mat::Mat;

use super::{Dataset, Normalization};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Reader<'a> {
    fn u32_be(&mut self) -> Result<u32> {
        if self.pos + 4 > self.bytes.len() {
            return Err(Error::Format(format!("{}: truncated header", self.path)));
        }
        let mut buf = [0u8; 4];
        buf.copy_from_slice(&self.bytes[self.pos..self.pos + 4]);
        self.pos += 4;
        Ok(u32::from_be_bytes(buf))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!(
                "{}: truncated payload (wanted {n} bytes, {} left)",
                self.path,
                self.bytes.len() - self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{}: {} trailing bytes after payload",
                self.path,
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    Ok(bytes)
}

/// Loads an IDX image/label file pair into a dataset with pixel values
/// scaled by 1/255 and the labels attached.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let image_bytes = read_file(images_path)?;
    let mut r = Reader {
        bytes: &image_bytes,
        pos: 0,
        path: images_path.display().to_string(),
    };
    let magic = r.u32_be()?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}",
            images_path.display()
        )));
    }
    let n = r.u32_be()? as usize;
    let rows = r.u32_be()? as usize;
    let cols = r.u32_be()? as usize;
    let d = rows * cols;
    if d == 0 || n == 0 {
        return Err(Error::Format(format!(
            "{}: empty image tensor {n}x{rows}x{cols}",
            images_path.display()
        )));
    }
    let pixels = r.take(n * d)?;
    r.finish()?;

    let label_bytes = read_file(labels_path)?;
    let mut r = Reader {
        bytes: &label_bytes,
        pos: 0,
        path: labels_path.display().to_string(),
    };
    let magic = r.u32_be()?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}",
            labels_path.display()
        )));
    }
    let n_labels = r.u32_be()? as usize;
    if n_labels != n {
        return Err(Error::Format(format!(
            "{} images but {} labels",
            n, n_labels
        )));
    }
    let raw_labels = r.take(n)?;
    r.finish()?;

    let data = Mat::from_flat(n, d, pixels.iter().map(|&b| b as f64 / 255.0).collect())?;
    Ok(Dataset {
        data,
        labels: Some(raw_labels.iter().map(|&b| b as i64).collect()),
        normalization: Normalization::fixed_scale(d, 255.0),
    })
}
