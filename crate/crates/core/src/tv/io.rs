//! Grid field storage: a small text header next to a raw little-endian
//! `f64` payload, plus 16-bit PGM export of 2D slices.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::GridShape;
use crate::error::{check_len, domain, Error, Result};

/// Values on a 2D or 3D grid together with the ambient `L^p` exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    values: Vec<f64>,
    shape: GridShape,
    exponent: f64,
}

impl GridField {
    pub fn new(values: Vec<f64>, shape: GridShape, exponent: f64) -> Result<Self> {
        if !(2..=3).contains(&shape.ndim()) {
            return domain(format!("grid fields are 2D or 3D, got {}D", shape.ndim()));
        }
        check_len(shape.cells(), values.len())?;
        if values.iter().any(|x| !x.is_finite()) {
            return domain("grid field values must be finite");
        }
        Ok(GridField {
            values,
            shape,
            exponent,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Writes `<stem>.hdr` and `<stem>.raw` and returns the header path.
    pub fn save(&self, stem: impl AsRef<Path>) -> Result<PathBuf> {
        let stem = stem.as_ref();
        let hdr = stem.with_extension("hdr");
        let raw = stem.with_extension("raw");
        let dims: Vec<String> = self.shape.dims().iter().map(|d| d.to_string()).collect();
        let header = format!(
            "dims: {}\nspacing: {}\nexponent: {}\ndtype: f64le\n",
            dims.join(" "),
            self.shape.spacing(),
            self.exponent
        );
        fs::write(&hdr, header)?;
        let mut payload = Vec::with_capacity(8 * self.values.len());
        for v in &self.values {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&raw, payload)?;
        Ok(hdr)
    }

    /// Reads a field written by [`GridField::save`]; `path` may name either
    /// file or the common stem.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path.with_extension("hdr"))?;
        let mut dims = None;
        let mut spacing = None;
        let mut exponent = 2.0;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("bad header line '{line}'")))?;
            let value = value.trim();
            match key.trim() {
                "dims" => {
                    dims = Some(
                        value
                            .split_whitespace()
                            .map(|t| t.parse::<usize>())
                            .collect::<std::result::Result<Vec<_>, _>>()
                            .map_err(|_| Error::Parse(format!("bad dims '{value}'")))?,
                    )
                }
                "spacing" => {
                    spacing = Some(
                        value
                            .parse::<f64>()
                            .map_err(|_| Error::Parse(format!("bad spacing '{value}'")))?,
                    )
                }
                "exponent" => {
                    exponent = value
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad exponent '{value}'")))?
                }
                "dtype" if value != "f64le" => {
                    return Err(Error::Parse(format!("unsupported dtype '{value}'")))
                }
                _ => {}
            }
        }
        let dims = dims.ok_or_else(|| Error::Parse("header lacks 'dims'".into()))?;
        let spacing = spacing.ok_or_else(|| Error::Parse("header lacks 'spacing'".into()))?;
        let shape = GridShape::new(dims, spacing)?;
        let bytes = fs::read(path.with_extension("raw"))?;
        if bytes.len() != 8 * shape.cells() {
            return Err(Error::Parse(format!(
                "payload holds {} bytes, expected {}",
                bytes.len(),
                8 * shape.cells()
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        GridField::new(values, shape, exponent)
    }

    /// Writes the 2D slice at `index` along the first axis (the whole field
    /// for 2D grids) as a binary PGM with maximum gray 65535. The linear map
    /// `value = min + gray / 65535 · (max - min)` is recorded in
    /// `<path>.scale.txt`.
    pub fn write_pgm_slice(&self, index: usize, path: impl AsRef<Path>) -> Result<()> {
        let dims = self.shape.dims();
        let (rows, cols, plane) = match *dims {
            [a, b] if index == 0 => (a, b, &self.values[..]),
            [n0, a, b] if index < n0 => (a, b, &self.values[index * a * b..(index + 1) * a * b]),
            _ => return domain(format!("slice {index} is outside the grid {dims:?}")),
        };
        let lo = plane.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = plane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        let path = path.as_ref();
        let mut out = Vec::with_capacity(20 + 2 * plane.len());
        write!(out, "P5\n{cols} {rows}\n65535\n")?;
        for v in plane {
            let gray = if range > 0.0 {
                ((v - lo) / range * 65535.0).round() as u16
            } else {
                0
            };
            out.extend_from_slice(&gray.to_be_bytes());
        }
        fs::write(path, out)?;
        let mut sidecar = path.as_os_str().to_owned();
        sidecar.push(".scale.txt");
        fs::write(
            sidecar,
            format!("min: {lo}\nmax: {hi}\nmaxval: 65535\nvalue = min + gray / maxval * (max - min)\n"),
        )?;
        Ok(())
    }
}
