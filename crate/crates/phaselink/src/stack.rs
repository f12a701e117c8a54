//! The COFI1 stack container and raster I/O.
//!
//! Layout (little-endian): 6 magic bytes `C O F I 1 \0`, three u32 fields
//! (p, rows, cols), then rows x cols x p complex samples as consecutive
//! (re, im) f32 pairs, row-major with time fastest. Real-valued rasters use
//! the same container with zero imaginary parts; a single real channel is a
//! stack with p = 1.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const COFI1_MAGIC: [u8; 6] = *b"COFI1\0";

/// p co-registered complex images, indexed (row, col, time).
#[derive(Clone, Debug, PartialEq)]
pub struct ImageStack {
    data: Array3<Complex64>,
}

impl ImageStack {
    pub fn zeros(p: usize, rows: usize, cols: usize) -> Result<Self> {
        if p < 1 || rows == 0 || cols == 0 {
            return Err(Error::BadStackFile(format!(
                "degenerate stack dimensions p={p}, rows={rows}, cols={cols}"
            )));
        }
        Ok(Self {
            data: Array3::zeros((rows, cols, p)),
        })
    }

    pub fn from_array(data: Array3<Complex64>) -> Result<Self> {
        let (rows, cols, p) = data.dim();
        if p < 1 || rows == 0 || cols == 0 {
            return Err(Error::BadStackFile(
                "degenerate stack dimensions".to_string(),
            ));
        }
        Ok(Self { data })
    }

    pub fn p(&self) -> usize {
        self.data.dim().2
    }

    pub fn rows(&self) -> usize {
        self.data.dim().0
    }

    pub fn cols(&self) -> usize {
        self.data.dim().1
    }

    pub fn get(&self, row: usize, col: usize, t: usize) -> Complex64 {
        self.data[(row, col, t)]
    }

    pub fn set(&mut self, row: usize, col: usize, t: usize, value: Complex64) {
        self.data[(row, col, t)] = value;
    }

    pub fn data(&self) -> &Array3<Complex64> {
        &self.data
    }

    /// The length-p time series at one pixel.
    pub fn series(&self, row: usize, col: usize) -> Vec<Complex64> {
        (0..self.p()).map(|t| self.data[(row, col, t)]).collect()
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        write_header(w, self.p(), self.rows(), self.cols())?;
        let mut buf = BufWriter::new(w);
        for r in 0..self.rows() {
            for c in 0..self.cols() {
                for t in 0..self.p() {
                    let z = self.data[(r, c, t)];
                    buf.write_all(&(z.re as f32).to_le_bytes())?;
                    buf.write_all(&(z.im as f32).to_le_bytes())?;
                }
            }
        }
        buf.flush()?;
        Ok(())
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = File::create(path)?;
        self.write(&mut f)
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        let (p, rows, cols) = read_header(r)?;
        let mut data = Array3::<Complex64>::zeros((rows, cols, p));
        let mut buf = BufReader::new(r);
        let mut pair = [0u8; 8];
        for r_ in 0..rows {
            for c in 0..cols {
                for t in 0..p {
                    buf.read_exact(&mut pair).map_err(|e| {
                        Error::BadStackFile(format!("truncated payload: {e}"))
                    })?;
                    let re = f32::from_le_bytes(pair[0..4].try_into().unwrap());
                    let im = f32::from_le_bytes(pair[4..8].try_into().unwrap());
                    data[(r_, c, t)] = Complex64::new(re as f64, im as f64);
                }
            }
        }
        let mut trailing = [0u8; 1];
        if buf.read(&mut trailing)? != 0 {
            return Err(Error::BadStackFile("trailing bytes after payload".into()));
        }
        Ok(Self { data })
    }

    pub fn read_from(path: impl AsRef<Path>) -> Result<Self> {
        let mut f = File::open(path)?;
        Self::read(&mut f)
    }
}

fn write_header(w: &mut impl Write, p: usize, rows: usize, cols: usize) -> Result<()> {
    w.write_all(&COFI1_MAGIC)?;
    for dim in [p, rows, cols] {
        let v = u32::try_from(dim)
            .map_err(|_| Error::BadStackFile(format!("dimension {dim} exceeds u32")))?;
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_header(r: &mut impl Read) -> Result<(usize, usize, usize)> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)
        .map_err(|e| Error::BadStackFile(format!("missing magic: {e}")))?;
    if magic != COFI1_MAGIC {
        return Err(Error::BadStackFile(format!("bad magic {magic:?}")));
    }
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)
            .map_err(|e| Error::BadStackFile(format!("truncated header: {e}")))?;
        *d = u32::from_le_bytes(b) as usize;
    }
    let (p, rows, cols) = (dims[0], dims[1], dims[2]);
    if p < 1 || rows == 0 || cols == 0 {
        return Err(Error::BadStackFile(format!(
            "degenerate dimensions p={p}, rows={rows}, cols={cols}"
        )));
    }
    Ok((p, rows, cols))
}

/// Writes a multi-channel real raster as a zero-imaginary stack.
pub fn write_real_stack(path: impl AsRef<Path>, data: &Array3<f64>) -> Result<()> {
    let (rows, cols, p) = data.dim();
    let complex = Array3::from_shape_fn((rows, cols, p), |(r, c, t)| {
        Complex64::new(data[(r, c, t)], 0.0)
    });
    ImageStack::from_array(complex)?.write_to(path)
}

/// Reads a raster written by [`write_real_stack`]; rejects files with
/// nonzero imaginary parts.
pub fn read_real_stack(path: impl AsRef<Path>) -> Result<Array3<f64>> {
    let stack = ImageStack::read_from(path)?;
    let (rows, cols, p) = (stack.rows(), stack.cols(), stack.p());
    let mut out = Array3::<f64>::zeros((rows, cols, p));
    for r in 0..rows {
        for c in 0..cols {
            for t in 0..p {
                let z = stack.get(r, c, t);
                if z.im != 0.0 {
                    return Err(Error::BadStackFile(
                        "expected a real-channel raster, found nonzero imaginary parts".into(),
                    ));
                }
                out[(r, c, t)] = z.re;
            }
        }
    }
    Ok(out)
}

/// Writes a single real channel (p = 1 stack).
pub fn write_real_image(path: impl AsRef<Path>, image: &Array2<f64>) -> Result<()> {
    let (rows, cols) = image.dim();
    let lifted = Array3::from_shape_fn((rows, cols, 1), |(r, c, _)| image[(r, c)]);
    write_real_stack(path, &lifted)
}

pub fn read_real_image(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let data = read_real_stack(path)?;
    let (rows, cols, p) = data.dim();
    if p != 1 {
        return Err(Error::BadStackFile(format!(
            "expected a single channel, got p = {p}"
        )));
    }
    Ok(Array2::from_shape_fn((rows, cols), |(r, c)| data[(r, c, 0)]))
}

/// 8-bit grayscale render of a wrapped-phase image: `(-pi, pi]` maps
/// linearly onto 0..=255. For visual inspection only.
pub fn write_phase_png(path: impl AsRef<Path>, image: &Array2<f64>) -> Result<()> {
    let (rows, cols) = image.dim();
    let mut pixels = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let t = (image[(r, c)] + std::f64::consts::PI) / std::f64::consts::TAU;
            pixels.push((t.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    write_gray_png(path, &pixels, rows, cols)
}

/// 8-bit mask render (raw byte values).
pub fn write_mask_png(path: impl AsRef<Path>, mask: &Array2<u8>) -> Result<()> {
    let (rows, cols) = mask.dim();
    let mut pixels = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            pixels.push(mask[(r, c)]);
        }
    }
    write_gray_png(path, &pixels, rows, cols)
}

fn write_gray_png(path: impl AsRef<Path>, pixels: &[u8], rows: usize, cols: usize) -> Result<()> {
    let img = image::GrayImage::from_raw(cols as u32, rows as u32, pixels.to_vec())
        .ok_or_else(|| Error::ImageEncoding("pixel buffer size mismatch".into()))?;
    img.save_with_format(path.as_ref(), image::ImageFormat::Png)
        .map_err(|e| Error::ImageEncoding(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn sample_stack() -> ImageStack {
        let mut s = ImageStack::zeros(2, 3, 4).unwrap();
        for r in 0..3 {
            for c in 0..4 {
                for t in 0..2 {
                    // values exactly representable in f32
                    s.set(
                        r,
                        c,
                        t,
                        Complex64::new(
                            (r * 8 + c * 2 + t) as f64 * 0.25,
                            -((r + c + t) as f64) * 0.5,
                        ),
                    );
                }
            }
        }
        s
    }

    #[test]
    fn roundtrip_preserves_bytes() {
        let s = sample_stack();
        let mut bytes = Vec::new();
        s.write(&mut bytes).unwrap();
        let back = ImageStack::read(&mut Cursor::new(bytes.clone())).unwrap();
        assert_eq!(back, s);
        let mut again = Vec::new();
        back.write(&mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn header_layout_is_fixed() {
        let s = ImageStack::zeros(3, 2, 5).unwrap();
        let mut bytes = Vec::new();
        s.write(&mut bytes).unwrap();
        assert_eq!(&bytes[0..6], b"COFI1\0");
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[14..18].try_into().unwrap()), 5);
        assert_eq!(bytes.len(), 18 + 3 * 2 * 5 * 8);
    }

    #[test]
    fn payload_is_row_major_time_fastest() {
        let mut s = ImageStack::zeros(2, 1, 2).unwrap();
        s.set(0, 0, 0, Complex64::new(1.0, 0.0));
        s.set(0, 0, 1, Complex64::new(2.0, 0.0));
        s.set(0, 1, 0, Complex64::new(3.0, 0.0));
        s.set(0, 1, 1, Complex64::new(4.0, 0.0));
        let mut bytes = Vec::new();
        s.write(&mut bytes).unwrap();
        let reals: Vec<f32> = bytes[18..]
            .chunks(8)
            .map(|pair| f32::from_le_bytes(pair[0..4].try_into().unwrap()))
            .collect();
        assert_eq!(reals, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn rejects_malformed_files() {
        let err = ImageStack::read(&mut Cursor::new(b"BOGUS\0".to_vec()));
        assert!(matches!(err, Err(Error::BadStackFile(_))));

        let s = sample_stack();
        let mut bytes = Vec::new();
        s.write(&mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            ImageStack::read(&mut Cursor::new(bytes)),
            Err(Error::BadStackFile(_))
        ));
    }

    #[test]
    fn real_rasters_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.cofi");
        let img = Array2::from_shape_fn((4, 3), |(r, c)| (r as f64 - c as f64) * 0.5);
        write_real_image(&path, &img).unwrap();
        let back = read_real_image(&path).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn real_reader_rejects_complex_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("complex.cofi");
        let mut s = ImageStack::zeros(1, 2, 2).unwrap();
        s.set(0, 0, 0, Complex64::new(1.0, 0.5));
        s.write_to(&path).unwrap();
        assert!(matches!(
            read_real_image(&path),
            Err(Error::BadStackFile(_))
        ));
    }

    #[test]
    fn png_renders_have_expected_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("phase.png");
        let img = Array2::from_shape_fn((5, 7), |(r, c)| {
            (r as f64 / 5.0 - c as f64 / 7.0) * std::f64::consts::PI
        });
        write_phase_png(&path, &img).unwrap();
        let loaded = image::open(&path).unwrap().to_luma8();
        assert_eq!(loaded.dimensions(), (7, 5));
    }
}
