//! Portable Float Map (PFM) reader and writer.
//!
//! Little-endian only (scale line "-1.0"); big-endian files are
//! rejected. Scanlines are stored bottom-to-top in the file per the PFM
//! convention; in memory row 0 is the top row.

use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use ndarray::Array2;

use crate::{Error, Result};

use super::atomic_write;

#[derive(Debug, Clone, PartialEq)]
pub struct PfmImage {
    pub width: usize,
    pub height: usize,
    /// 1 (grayscale, "Pf") or 3 (color, "PF").
    pub channels: usize,
    /// Row-major, row 0 at the top, `channels` interleaved floats per
    /// pixel.
    pub data: Vec<f32>,
}

impl PfmImage {
    pub fn from_array2(a: &Array2<f64>) -> Self {
        Self {
            width: a.ncols(),
            height: a.nrows(),
            channels: 1,
            data: a.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_array2(&self) -> Result<Array2<f64>> {
        if self.channels != 1 {
            return Err(Error::Shape("expected a single-channel PFM".into()));
        }
        Ok(Array2::from_shape_vec(
            (self.height, self.width),
            self.data.iter().map(|&v| v as f64).collect(),
        )
        .expect("dimensions match data length"))
    }
}

fn parse_err(path: &Path, offset: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        offset,
        msg: msg.into(),
    }
}

/// Read a whitespace-terminated token starting at `pos`.
fn token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if *pos > start {
        Some(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    } else {
        None
    }
}

pub fn read_pfm(path: &Path) -> Result<PfmImage> {
    let bytes = std::fs::read(path)?;
    let mut pos = 0usize;

    let magic = token(&bytes, &mut pos).ok_or_else(|| parse_err(path, 0, "missing PFM magic"))?;
    let channels = match magic.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(parse_err(path, 0, format!("bad magic {other:?}, expected Pf or PF"))),
    };

    let width: usize = token(&bytes, &mut pos)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(path, pos as u64, "bad or missing width"))?;
    let height: usize = token(&bytes, &mut pos)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(path, pos as u64, "bad or missing height"))?;
    let scale: f64 = token(&bytes, &mut pos)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(path, pos as u64, "bad or missing scale"))?;
    if scale >= 0.0 {
        return Err(parse_err(
            path,
            pos as u64,
            "big-endian PFM (non-negative scale) is not supported",
        ));
    }
    // exactly one whitespace byte after the scale line
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(parse_err(path, pos as u64, "missing separator after scale"));
    }
    pos += 1;

    let count = width * height * channels;
    let need = count * 4;
    if bytes.len() - pos < need {
        return Err(parse_err(
            path,
            pos as u64,
            format!("truncated data: need {need} bytes, have {}", bytes.len() - pos),
        ));
    }

    // file rows run bottom-to-top; flip into top-first memory order
    let row_floats = width * channels;
    let mut data = vec![0.0f32; count];
    for file_row in 0..height {
        let mem_row = height - 1 - file_row;
        let src = &bytes[pos + file_row * row_floats * 4..pos + (file_row + 1) * row_floats * 4];
        LittleEndian::read_f32_into(src, &mut data[mem_row * row_floats..(mem_row + 1) * row_floats]);
    }

    Ok(PfmImage {
        width,
        height,
        channels,
        data,
    })
}

pub fn write_pfm(path: &Path, img: &PfmImage) -> Result<()> {
    if img.data.len() != img.width * img.height * img.channels {
        return Err(Error::Shape("PFM data length does not match dimensions".into()));
    }
    let magic = match img.channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::Shape(format!("PFM supports 1 or 3 channels, got {c}"))),
    };
    let mut out = Vec::with_capacity(64 + img.data.len() * 4);
    out.extend_from_slice(format!("{magic}\n{} {}\n-1.0\n", img.width, img.height).as_bytes());
    let row_floats = img.width * img.channels;
    let mut buf = vec![0u8; row_floats * 4];
    for file_row in 0..img.height {
        let mem_row = img.height - 1 - file_row;
        LittleEndian::write_f32_into(&img.data[mem_row * row_floats..(mem_row + 1) * row_floats], &mut buf);
        out.extend_from_slice(&buf);
    }
    atomic_write(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn single_pixel_round_trip() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("one.pfm");
        let img = PfmImage {
            width: 1,
            height: 1,
            channels: 1,
            data: vec![0.5],
        };
        write_pfm(&p, &img).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        // "Pf\n1 1\n-1.0\n" + 4 data bytes
        assert_eq!(bytes.len(), 12 + 4);
        assert_eq!(read_pfm(&p).unwrap(), img);
    }

    #[test]
    fn random_round_trip_is_bit_exact() {
        use rand::{Rng, SeedableRng};
        let dir = tempdir().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for trial in 0..3 {
            let img = PfmImage {
                width: 32,
                height: 32,
                channels: 1,
                data: (0..32 * 32).map(|_| rng.gen_range(-1e6..1e6)).collect(),
            };
            let p = dir.path().join(format!("t{trial}.pfm"));
            write_pfm(&p, &img).unwrap();
            let back = read_pfm(&p).unwrap();
            assert_eq!(back.data.iter().map(|f| f.to_bits()).collect::<Vec<_>>(),
                       img.data.iter().map(|f| f.to_bits()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn color_round_trip() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("c.pfm");
        let img = PfmImage {
            width: 2,
            height: 3,
            channels: 3,
            data: (0..18).map(|i| i as f32 * 0.25).collect(),
        };
        write_pfm(&p, &img).unwrap();
        assert_eq!(read_pfm(&p).unwrap(), img);
    }

    #[test]
    fn rejects_big_endian() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("be.pfm");
        std::fs::write(&p, b"Pf\n1 1\n1.0\n\x00\x00\x00\x3f").unwrap();
        let err = read_pfm(&p).unwrap_err();
        assert!(err.to_string().contains("big-endian"), "{err}");
    }

    #[test]
    fn rejects_truncated_and_malformed() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("bad.pfm");
        std::fs::write(&p, b"Pf\n4 4\n-1.0\n\x00\x00").unwrap();
        assert!(matches!(read_pfm(&p).unwrap_err(), Error::Parse { .. }));
        std::fs::write(&p, b"P6\n1 1\n-1.0\n").unwrap();
        assert!(matches!(read_pfm(&p).unwrap_err(), Error::Parse { .. }));
        std::fs::write(&p, b"Pf\nx 1\n-1.0\n").unwrap();
        assert!(matches!(read_pfm(&p).unwrap_err(), Error::Parse { .. }));
    }

    #[test]
    fn array_round_trip_and_orientation() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("a.pfm");
        let a = ndarray::array![[1.0, 2.0], [3.0, 4.0]];
        write_pfm(&p, &PfmImage::from_array2(&a)).unwrap();
        let back = read_pfm(&p).unwrap().to_array2().unwrap();
        assert_eq!(back, a);
        // bottom row first in the file: last data row should be [1, 2]
        let bytes = std::fs::read(&p).unwrap();
        let first_file_value = LittleEndian::read_f32(&bytes[bytes.len() - 16..]);
        assert_eq!(first_file_value, 3.0);
    }
}
