//! Dense 2D grayscale images with intensities in [0, 1].
//!
//! The same type carries camera frames, reconstructions and network
//! feature planes. Pixel (0, 0) is the top-left corner; data is stored
//! row-major.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be nonzero, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidShape(format!(
                "image data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("image contains non-finite values".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    /// Build an image from a per-pixel function of (column, row).
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Bilinear sample at continuous pixel coordinates. Integer
    /// coordinates are pixel centers; everything outside the support
    /// contributes zero, with partial hat weights at the border.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let xi = x0 as isize;
        let yi = y0 as isize;
        let mut acc = 0.0;
        let w = self.width as isize;
        let h = self.height as isize;
        let mut tap = |px: isize, py: isize, wt: f64| {
            if wt != 0.0 && px >= 0 && px < w && py >= 0 && py < h {
                acc += wt * self.data[py as usize * self.width + px as usize];
            }
        };
        tap(xi, yi, (1.0 - fx) * (1.0 - fy));
        tap(xi + 1, yi, fx * (1.0 - fy));
        tap(xi, yi + 1, (1.0 - fx) * fy);
        tap(xi + 1, yi + 1, fx * fy);
        acc
    }

    /// Nearest-neighbor sample; zero outside the support.
    #[inline]
    pub fn sample_nearest(&self, x: f64, y: f64) -> f64 {
        let xi = x.round() as isize;
        let yi = y.round() as isize;
        if xi < 0 || yi < 0 || xi >= self.width as isize || yi >= self.height as isize {
            return 0.0;
        }
        self.data[yi as usize * self.width + xi as usize]
    }

    /// Min-max normalize into [0, 1]. A constant image maps to all
    /// zeros so the degenerate range never divides by zero.
    pub fn min_max_normalized(&self) -> Image {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !(hi > lo) {
            return Image::zeros(self.width, self.height);
        }
        let scale = 1.0 / (hi - lo);
        let data = self.data.iter().map(|v| (v - lo) * scale).collect();
        Image { width: self.width, height: self.height, data }
    }

    /// Replace non-finite values with zero.
    pub fn clamped_finite(mut self) -> Image {
        for v in &mut self.data {
            if !v.is_finite() {
                *v = 0.0;
            }
        }
        self
    }

    /// Clamp to finite, non-negative intensities. Reconstruction
    /// ringing can undershoot zero; negative intensity is non-physical
    /// and a handful of deep corner pixels would otherwise dominate
    /// min-max normalization.
    pub fn clamped_non_negative(mut self) -> Image {
        for v in &mut self.data {
            if !v.is_finite() || *v < 0.0 {
                *v = 0.0;
            }
        }
        self
    }

    /// Resize with area-averaging when shrinking and edge-clamped
    /// bilinear interpolation when enlarging, independently per axis.
    pub fn resized(&self, out_w: usize, out_h: usize) -> Result<Image> {
        if out_w == 0 || out_h == 0 {
            return Err(Error::InvalidInput("resize target must be nonzero".into()));
        }
        let horiz = resize_axis(&self.data, self.width, self.height, out_w, true);
        let data = resize_axis(&horiz, out_w, self.height, out_h, false);
        Ok(Image { width: out_w, height: out_h, data })
    }

    /// Rotate 90 degrees counter-clockwise in the standard orientation
    /// (x right, y up); on row-major storage output(r, c) = input(c, n-1-r)
    /// transposed appropriately.
    pub fn rot90(&self) -> Image {
        let (w, h) = (self.width, self.height);
        let mut out = Image::zeros(h, w);
        for y in 0..h {
            for x in 0..w {
                // (x, y) -> (y, w-1-x): maps the right edge to the top.
                out.set(y, w - 1 - x, self.get(x, y));
            }
        }
        out
    }

    /// Quantize to the 8-bit PGM payload: round(v * 255), clamped.
    pub fn to_bytes_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.to_bytes_u8())?;
        Ok(())
    }

    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut buf = BufWriter::new(file);
        self.write_pgm(&mut buf)?;
        buf.flush()?;
        Ok(())
    }

    pub fn read_pgm<R: Read>(r: R) -> Result<Image> {
        let mut reader = BufReader::new(r);
        let mut header = Vec::new();
        // Magic, width, height, maxval: four whitespace-separated tokens,
        // comments introduced by '#' run to end of line.
        while header.len() < 4 {
            let tok = read_pnm_token(&mut reader)?;
            header.push(tok);
        }
        if header[0] != "P5" {
            return Err(Error::CorruptFile(format!("not a binary PGM (magic {})", header[0])));
        }
        let width: usize = header[1]
            .parse()
            .map_err(|_| Error::CorruptFile("bad PGM width".into()))?;
        let height: usize = header[2]
            .parse()
            .map_err(|_| Error::CorruptFile("bad PGM height".into()))?;
        let maxval: u32 = header[3]
            .parse()
            .map_err(|_| Error::CorruptFile("bad PGM maxval".into()))?;
        if maxval == 0 || maxval > 255 {
            return Err(Error::CorruptFile(format!("unsupported PGM maxval {maxval}")));
        }
        let mut bytes = vec![0u8; width * height];
        reader
            .read_exact(&mut bytes)
            .map_err(|_| Error::CorruptFile("PGM pixel data truncated".into()))?;
        let scale = 1.0 / maxval as f64;
        let data = bytes.iter().map(|&b| b as f64 * scale).collect();
        Image::new(width, height, data)
    }

    pub fn load_pgm(path: &Path) -> Result<Image> {
        let file = std::fs::File::open(path)?;
        Image::read_pgm(file)
    }
}

/// One whitespace-separated header token, skipping '#' comments.
/// The token terminator is consumed, which after "255" is the single
/// whitespace byte separating the header from pixel data.
fn read_pnm_token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            if tok.is_empty() {
                return Err(Error::CorruptFile("unexpected end of PGM header".into()));
            }
            return Ok(tok);
        }
        let c = byte[0];
        if c == b'#' && tok.is_empty() {
            // Comment line.
            loop {
                if r.read(&mut byte)? == 0 || byte[0] == b'\n' {
                    break;
                }
            }
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            return Ok(tok);
        }
        tok.push(c as char);
    }
}

/// Resize along one axis. `horizontal` selects which axis `out_n`
/// applies to; the other axis is passed through unchanged.
fn resize_axis(data: &[f64], w: usize, h: usize, out_n: usize, horizontal: bool) -> Vec<f64> {
    let (lines, in_n) = if horizontal { (h, w) } else { (w, h) };
    let read = |line: usize, i: usize| -> f64 {
        if horizontal {
            data[line * w + i]
        } else {
            data[i * w + line]
        }
    };
    let mut out = vec![0.0; lines * out_n];
    let mut write = |line: usize, i: usize, v: f64| {
        if horizontal {
            out[line * out_n + i] = v;
        } else {
            out[i * lines + line] = v;
        }
    };
    if out_n == in_n {
        for line in 0..lines {
            for i in 0..in_n {
                write(line, i, read(line, i));
            }
        }
    } else if out_n < in_n {
        // Box filter with exact fractional coverage.
        let ratio = in_n as f64 / out_n as f64;
        for line in 0..lines {
            for o in 0..out_n {
                let start = o as f64 * ratio;
                let end = (o + 1) as f64 * ratio;
                let mut acc = 0.0;
                let mut i = start.floor() as usize;
                while (i as f64) < end && i < in_n {
                    let lo = start.max(i as f64);
                    let hi = end.min((i + 1) as f64);
                    if hi > lo {
                        acc += read(line, i) * (hi - lo);
                    }
                    i += 1;
                }
                write(line, o, acc / ratio);
            }
        }
    } else {
        // Bilinear with pixel-center alignment, clamped at the edges.
        let ratio = in_n as f64 / out_n as f64;
        for line in 0..lines {
            for o in 0..out_n {
                let src = (o as f64 + 0.5) * ratio - 0.5;
                let clamped = src.clamp(0.0, (in_n - 1) as f64);
                let i0 = clamped.floor() as usize;
                let i1 = (i0 + 1).min(in_n - 1);
                let f = clamped - i0 as f64;
                write(line, o, read(line, i0) * (1.0 - f) + read(line, i1) * f);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_zero_dims_and_bad_len() {
        assert!(Image::new(0, 4, vec![]).is_err());
        assert!(Image::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Image::new(2, 2, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn normalize_constant_is_zeros() {
        let img = Image::new(3, 3, vec![0.7; 9]).unwrap();
        let n = img.min_max_normalized();
        assert!(n.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalize_keeps_full_range_image() {
        let img = Image::new(2, 1, vec![0.0, 1.0]).unwrap();
        let n = img.min_max_normalized();
        assert_eq!(n.data(), &[0.0, 1.0]);
    }

    #[test]
    fn checkerboard_downsample_is_block_mean() {
        let img = Image::from_fn(200, 200, |x, y| ((x + y) % 2) as f64);
        let small = img.resized(100, 100).unwrap();
        for &v in small.data() {
            assert!((v - 0.5).abs() < 1e-12, "expected exact 2x2 block mean, got {v}");
        }
    }

    #[test]
    fn upsample_preserves_constants() {
        let img = Image::new(4, 4, vec![0.25; 16]).unwrap();
        let big = img.resized(9, 9).unwrap();
        for &v in big.data() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn bilinear_sample_matches_pixels_and_zero_pads() {
        let img = Image::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(img.sample_bilinear(0.0, 0.0), 1.0);
        assert_eq!(img.sample_bilinear(1.0, 1.0), 4.0);
        assert!((img.sample_bilinear(0.5, 0.0) - 1.5).abs() < 1e-12);
        assert_eq!(img.sample_bilinear(-2.0, 0.0), 0.0);
        // Half a pixel outside: only partial hat weight remains.
        assert!((img.sample_bilinear(-0.5, 0.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pgm_round_trip_is_lossless_on_quantized_values() {
        let img = Image::from_fn(7, 5, |x, y| ((x * 5 + y * 11) % 256) as f64 / 255.0);
        let mut buf = Vec::new();
        img.write_pgm(&mut buf).unwrap();
        let back = Image::read_pgm(buf.as_slice()).unwrap();
        assert_eq!(back.width(), 7);
        assert_eq!(back.height(), 5);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn pgm_with_comment_parses() {
        let mut buf = Vec::new();
        buf.extend_from_slice(b"P5\n# a comment\n2 1\n255\n");
        buf.extend_from_slice(&[0u8, 255u8]);
        let img = Image::read_pgm(buf.as_slice()).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0]);
    }

    #[test]
    fn truncated_pgm_is_corrupt() {
        let mut buf = Vec::new();
        buf.extend_from_slice(b"P5\n4 4\n255\n");
        buf.extend_from_slice(&[0u8; 3]);
        match Image::read_pgm(buf.as_slice()) {
            Err(Error::CorruptFile(_)) => {}
            other => panic!("expected corrupt-file error, got {other:?}"),
        }
    }

    #[test]
    fn rot90_is_a_grid_exact_rotation() {
        let img = Image::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = img.rot90();
        // Four applications come back to the start.
        let r4 = r.rot90().rot90().rot90();
        assert_eq!(r4, img);
    }
}
