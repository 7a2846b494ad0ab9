//! Discrete 2D Radon transform and filtered back-projection.
//!
//! The featurizer used throughout the pipeline: camera frames are
//! normalized, transformed into a sinogram by ray-driven line
//! integration, ramp-filtered along the offset axis and back-projected
//! into the reconstruction that the network consumes.
//!
//! Geometry: a line is parametrized by its normal angle `alpha` in
//! [0, pi) and signed offset `s` from the image center, with arc
//! parameter `z` along the line:
//!
//! ```text
//! x(z) =  z*sin(alpha) + s*cos(alpha)
//! y(z) = -z*cos(alpha) + s*sin(alpha)
//! ```
//!
//! so a point contributes to offset `s = x*cos(alpha) + y*sin(alpha)`.
//! Coordinates are in pixels relative to the image center.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Nearest,
    Linear,
}

impl Default for Interpolation {
    fn default() -> Self {
        Interpolation::Linear
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Ramp,
    None,
}

impl Default for FilterKind {
    fn default() -> Self {
        FilterKind::Ramp
    }
}

/// Featurizer configuration. `offset_count` defaults to the image
/// diagonal rounded up to an odd count so every pixel is covered by
/// the offset grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TomoConfig {
    pub num_angles: usize,
    pub offset_count: Option<usize>,
    pub interpolation: Interpolation,
    pub filter: FilterKind,
    pub output_size: usize,
}

impl Default for TomoConfig {
    fn default() -> Self {
        Self {
            num_angles: 90,
            offset_count: None,
            interpolation: Interpolation::Linear,
            filter: FilterKind::Ramp,
            output_size: 100,
        }
    }
}

impl TomoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_angles == 0 {
            return Err(Error::InvalidInput("num_angles must be >= 1".into()));
        }
        if self.output_size == 0 {
            return Err(Error::InvalidInput("output_size must be >= 1".into()));
        }
        if let Some(n) = self.offset_count {
            if n < 3 || n % 2 == 0 {
                return Err(Error::InvalidInput(format!(
                    "offset_count must be odd and >= 3, got {n}"
                )));
            }
        }
        Ok(())
    }
}

/// Radon-domain raster indexed by (angle, offset), row-major over
/// angles. Offsets form a uniform grid symmetric about zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub angles: Vec<f64>,
    pub offsets: Vec<f64>,
    pub data: Vec<f64>,
}

impl Sinogram {
    pub fn new(angles: Vec<f64>, offsets: Vec<f64>, data: Vec<f64>) -> Result<Self> {
        if angles.is_empty() || offsets.is_empty() {
            return Err(Error::InvalidInput("sinogram grids must be nonempty".into()));
        }
        if data.len() != angles.len() * offsets.len() {
            return Err(Error::InvalidShape(format!(
                "sinogram data length {} does not match {}x{}",
                data.len(),
                angles.len(),
                offsets.len()
            )));
        }
        if angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("angles must be strictly increasing".into()));
        }
        if angles.iter().any(|&a| !(0.0..std::f64::consts::PI).contains(&a)) {
            return Err(Error::InvalidInput("angles must lie in [0, pi)".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("sinogram contains non-finite values".into()));
        }
        Ok(Self { angles, offsets, data })
    }

    pub fn num_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn num_offsets(&self) -> usize {
        self.offsets.len()
    }

    #[inline]
    pub fn value(&self, angle_idx: usize, offset_idx: usize) -> f64 {
        self.data[angle_idx * self.offsets.len() + offset_idx]
    }

    pub fn row(&self, angle_idx: usize) -> &[f64] {
        let n = self.offsets.len();
        &self.data[angle_idx * n..(angle_idx + 1) * n]
    }

    /// Offset grid spacing; grids are uniform by construction.
    pub fn offset_spacing(&self) -> f64 {
        if self.offsets.len() < 2 {
            1.0
        } else {
            self.offsets[1] - self.offsets[0]
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "angle_rad,offset_px,value")?;
        for (i, &a) in self.angles.iter().enumerate() {
            for (j, &s) in self.offsets.iter().enumerate() {
                writeln!(w, "{},{},{}", a, s, self.value(i, j))?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Sinogram> {
        let reader = BufReader::new(r);
        let mut angles: Vec<f64> = Vec::new();
        let mut offsets: Vec<f64> = Vec::new();
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if idx == 0 {
                if line.trim() != "angle_rad,offset_px,value" {
                    return Err(Error::CorruptFile("bad sinogram CSV header".into()));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let mut next = |what: &str| -> Result<f64> {
                parts
                    .next()
                    .and_then(|p| p.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse { index: idx, message: format!("bad {what}") })
            };
            let a = next("angle")?;
            let s = next("offset")?;
            let v = next("value")?;
            if angles.last() != Some(&a) {
                angles.push(a);
            }
            if angles.len() == 1 {
                offsets.push(s);
            }
            rows.push((a, s, v));
        }
        let data: Vec<f64> = rows.iter().map(|r| r.2).collect();
        Sinogram::new(angles, offsets, data)
    }

    /// Binary layout: magic "SINO", u32 LE angle count, u32 LE offset
    /// count, f32 LE offset spacing, then row-major f64 LE data. The
    /// grids themselves are implied: angles uniform over [0, pi),
    /// offsets centered at zero.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"SINO")?;
        w.write_all(&(self.angles.len() as u32).to_le_bytes())?;
        w.write_all(&(self.offsets.len() as u32).to_le_bytes())?;
        w.write_all(&(self.offset_spacing() as f32).to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Sinogram> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)
            .map_err(|_| Error::CorruptFile("sinogram header truncated".into()))?;
        if &header[0..4] != b"SINO" {
            return Err(Error::CorruptFile("bad sinogram magic".into()));
        }
        let n_angles = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let n_offsets = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let spacing = f32::from_le_bytes(header[12..16].try_into().unwrap()) as f64;
        if n_angles == 0 || n_offsets == 0 || !spacing.is_finite() || spacing <= 0.0 {
            return Err(Error::CorruptFile("bad sinogram dimensions".into()));
        }
        let mut data = vec![0.0f64; n_angles * n_offsets];
        let mut buf = [0u8; 8];
        for v in data.iter_mut() {
            r.read_exact(&mut buf)
                .map_err(|_| Error::CorruptFile("sinogram data truncated".into()))?;
            *v = f64::from_le_bytes(buf);
        }
        Sinogram::new(uniform_angles(n_angles), centered_offsets(n_offsets, spacing), data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut buf = BufWriter::new(file);
        if path.extension().is_some_and(|e| e == "csv") {
            self.write_csv(&mut buf)?;
        } else {
            self.write_binary(&mut buf)?;
        }
        buf.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Sinogram> {
        let file = std::fs::File::open(path)?;
        if path.extension().is_some_and(|e| e == "csv") {
            Sinogram::read_csv(file)
        } else {
            Sinogram::read_binary(file)
        }
    }
}

pub fn uniform_angles(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 * std::f64::consts::PI / n as f64).collect()
}

pub fn centered_offsets(n: usize, spacing: f64) -> Vec<f64> {
    let half = (n as f64 - 1.0) / 2.0;
    (0..n).map(|j| (j as f64 - half) * spacing).collect()
}

fn default_offset_count(side: usize) -> usize {
    let diag = (2.0f64).sqrt() * side as f64;
    let mut n = diag.ceil() as usize;
    if n % 2 == 0 {
        n += 1;
    }
    n.max(3)
}

/// Normalize a raw frame into the square [0, 1] tensor the featurizer
/// expects: resize to `output_size` x `output_size` (area averaging
/// when shrinking, bilinear when enlarging), then min-max normalize.
/// Constant frames map to all zeros.
pub fn preprocess_frame(raw: &Image, cfg: &TomoConfig) -> Result<Image> {
    cfg.validate()?;
    let resized = raw.resized(cfg.output_size, cfg.output_size)?;
    Ok(resized.min_max_normalized())
}

/// Ray-driven discrete Radon transform: for each (angle, offset) the
/// image is sampled along the line at unit steps in `z` and summed.
/// Non-square images are letterbox-padded with zeros first.
pub fn radon(img: &Image, cfg: &TomoConfig) -> Result<Sinogram> {
    cfg.validate()?;
    let square;
    let img = if img.width() == img.height() {
        img
    } else {
        let side = img.width().max(img.height());
        let mut padded = Image::zeros(side, side);
        let x0 = (side - img.width()) / 2;
        let y0 = (side - img.height()) / 2;
        for y in 0..img.height() {
            for x in 0..img.width() {
                padded.set(x0 + x, y0 + y, img.get(x, y));
            }
        }
        square = padded;
        &square
    };

    let side = img.width();
    let center = (side as f64 - 1.0) / 2.0;
    let n_offsets = match cfg.offset_count {
        Some(n) => n,
        None => default_offset_count(side),
    };
    let angles = uniform_angles(cfg.num_angles);
    let offsets = centered_offsets(n_offsets, 1.0);
    // The z grid must span the full diagonal so no ray is truncated.
    // Half-pixel steps along the ray: unit steps alias against the
    // pixel lattice near 45 degrees and break per-angle mass
    // conservation at the 1e-3 level.
    let z_step = 0.5;
    let n_z = 2 * default_offset_count(side) - 1;
    let z_half = (n_z as f64 - 1.0) / 2.0 * z_step;
    let interp = cfg.interpolation;

    let mut data = vec![0.0f64; cfg.num_angles * n_offsets];
    data.par_chunks_mut(n_offsets)
        .zip(angles.par_iter())
        .for_each(|(row, &alpha)| {
            let (sin_a, cos_a) = alpha.sin_cos();
            for (j, out) in row.iter_mut().enumerate() {
                let s = offsets[j];
                let base_x = s * cos_a + center;
                let base_y = s * sin_a + center;
                let mut acc = 0.0;
                for k in 0..n_z {
                    let z = k as f64 * z_step - z_half;
                    let x = z * sin_a + base_x;
                    let y = -z * cos_a + base_y;
                    acc += match interp {
                        Interpolation::Linear => img.sample_bilinear(x, y),
                        Interpolation::Nearest => img.sample_nearest(x, y),
                    };
                }
                *out = acc * z_step;
            }
        });

    Sinogram::new(angles, offsets, data)
}

/// Ramp-filter each projection along the offset axis: DFT, multiply by
/// the frequency magnitude response |w|, inverse DFT. Rows are padded
/// to at least twice the offset count, rounded up to a power of two,
/// by symmetric reflection. Reflection extends a constant row into a
/// constant over the whole circular domain, so the zero response at
/// w = 0 annihilates it exactly; a compactly supported projection is
/// near zero at the window edges and reflection behaves like zero
/// padding there, without the step a padded box would introduce.
pub fn ramp_filter(sino: &Sinogram) -> Result<Sinogram> {
    let n = sino.num_offsets();
    if n < 3 {
        return Err(Error::InvalidInput(format!("ramp filter needs >= 3 offsets, got {n}")));
    }
    let spacing = sino.offset_spacing();
    let max_dev = sino
        .offsets
        .windows(2)
        .map(|w| ((w[1] - w[0]) - spacing).abs())
        .fold(0.0f64, f64::max);
    if max_dev > 1e-9 * spacing.abs().max(1.0) {
        return Err(Error::InvalidInput("ramp filter requires a uniform offset grid".into()));
    }

    let padded = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(padded);
    let inv = planner.plan_fft_inverse(padded);
    let response = ramp_response(padded, spacing);

    let mut data = vec![0.0f64; sino.data.len()];
    data.par_chunks_mut(n)
        .zip(sino.data.par_chunks(n))
        .for_each(|(out, row)| {
            let mut buf = vec![Complex::new(0.0, 0.0); padded];
            for (p, b) in buf.iter_mut().enumerate() {
                b.re = row[reflect_index(p, n)];
            }
            fwd.process(&mut buf);
            for (b, &r) in buf.iter_mut().zip(response.iter()) {
                *b *= r;
            }
            inv.process(&mut buf);
            let scale = 1.0 / padded as f64;
            for (o, b) in out.iter_mut().zip(buf.iter()) {
                *o = b.re * scale;
            }
        });

    Sinogram::new(sino.angles.clone(), sino.offsets.clone(), data)
}

/// Symmetric reflection with duplicated edge samples, period 2n.
#[inline]
pub(crate) fn reflect_index(p: usize, n: usize) -> usize {
    let q = p % (2 * n);
    if q < n {
        q
    } else {
        2 * n - 1 - q
    }
}

/// Discrete realization of the |w| ramp response for an `n`-point
/// transform over samples spaced `spacing` apart, in cycles per
/// spatial unit: the DFT of the band-limited ramp kernel
///
/// ```text
/// h(0) = 1/(4 ds^2),  h(m) = -1/(pi^2 m^2 ds^2) for odd m, else 0
/// ```
///
/// which matches |w| away from zero but keeps the correct low-frequency
/// weights (a plain |k|/n response depresses the lowest bins and bows
/// the reconstruction). The zero-frequency bin is forced to exactly
/// zero; with reflection padding that annihilates constant projections
/// and otherwise only shifts the output by a constant.
pub(crate) fn ramp_response(n: usize, spacing: f64) -> Vec<f64> {
    let inv_ds2 = 1.0 / (spacing * spacing);
    let mut kernel: Vec<Complex<f64>> = (0..n)
        .map(|m| {
            let d = m.min(n - m);
            let v = if d == 0 {
                0.25 * inv_ds2
            } else if d % 2 == 1 {
                -inv_ds2 / (std::f64::consts::PI * std::f64::consts::PI * (d * d) as f64)
            } else {
                0.0
            };
            Complex::new(v, 0.0)
        })
        .collect();
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut kernel);
    let mut response: Vec<f64> = kernel.iter().map(|c| c.re.max(0.0) * spacing).collect();
    response[0] = 0.0;
    response
}

/// Discrete adjoint of the Radon transform: every output pixel
/// accumulates the linearly interpolated projection value at its own
/// offset `s = x*cos(alpha) + y*sin(alpha)` over all angles, scaled by
/// pi / num_angles.
pub fn backproject(sino: &Sinogram, out_size: usize) -> Result<Image> {
    if out_size == 0 {
        return Err(Error::InvalidInput("backproject output size must be >= 1".into()));
    }
    let n_angles = sino.num_angles();
    let n_offsets = sino.num_offsets();
    let spacing = sino.offset_spacing();
    let s0 = sino.offsets[0];
    let center = (out_size as f64 - 1.0) / 2.0;
    let scale = std::f64::consts::PI / n_angles as f64;
    let trig: Vec<(f64, f64)> = sino.angles.iter().map(|a| a.sin_cos()).collect();

    let mut out = vec![0.0f64; out_size * out_size];
    out.par_chunks_mut(out_size).enumerate().for_each(|(yi, row)| {
        let y = yi as f64 - center;
        for (xi, px) in row.iter_mut().enumerate() {
            let x = xi as f64 - center;
            let mut acc = 0.0;
            for (i, &(sin_a, cos_a)) in trig.iter().enumerate() {
                let s = x * cos_a + y * sin_a;
                let u = (s - s0) / spacing;
                let j0 = u.floor();
                let f = u - j0;
                let j0 = j0 as isize;
                let base = i * n_offsets;
                if j0 >= 0 && (j0 as usize) < n_offsets {
                    acc += (1.0 - f) * sino.data[base + j0 as usize];
                }
                let j1 = j0 + 1;
                if j1 >= 0 && (j1 as usize) < n_offsets {
                    acc += f * sino.data[base + j1 as usize];
                }
            }
            *px = acc * scale;
        }
    });

    Ok(Image::new(out_size, out_size, out).expect("backprojection produced non-finite values"))
}

/// Filtered back-projection: ramp filter then backproject, clamp to
/// finite non-negative intensities and min-max normalize into [0, 1].
pub fn fbp(sino: &Sinogram, out_size: usize) -> Result<Image> {
    let filtered = ramp_filter(sino)?;
    let img = backproject(&filtered, out_size)?;
    Ok(img.clamped_non_negative().min_max_normalized())
}

/// Full feature extraction: preprocess, Radon transform, reconstruct,
/// normalize. The result is the exact tensor handed to the network.
pub fn featurize(raw: &Image, cfg: &TomoConfig) -> Result<Image> {
    let pre = preprocess_frame(raw, cfg)?;
    let sino = radon(&pre, cfg)?;
    let recon = match cfg.filter {
        FilterKind::Ramp => fbp(&sino, cfg.output_size)?,
        FilterKind::None => {
            backproject(&sino, cfg.output_size)?.clamped_non_negative().min_max_normalized()
        }
    };
    if recon.width() != cfg.output_size {
        let r = recon.resized(cfg.output_size, cfg.output_size)?;
        return Ok(r.min_max_normalized());
    }
    Ok(recon)
}

pub mod phantom {
    //! Analytically defined test images.

    use crate::image::Image;

    /// Anti-aliased centered disc: per-pixel coverage estimated by
    /// supersampling so projections approach the continuous chord
    /// profile.
    pub fn disc(side: usize, radius: f64, intensity: f64) -> Image {
        let c = (side as f64 - 1.0) / 2.0;
        let ss = 8;
        let step = 1.0 / ss as f64;
        Image::from_fn(side, side, |x, y| {
            let x0 = x as f64 - c - 0.5 + step / 2.0;
            let y0 = y as f64 - c - 0.5 + step / 2.0;
            let mut inside = 0usize;
            for sy in 0..ss {
                for sx in 0..ss {
                    let dx = x0 + sx as f64 * step;
                    let dy = y0 + sy as f64 * step;
                    if dx * dx + dy * dy <= radius * radius {
                        inside += 1;
                    }
                }
            }
            intensity * inside as f64 / (ss * ss) as f64
        })
    }

    /// Ellipse parameters: additive intensity, semi-axes, center and
    /// rotation in the unit square [-1, 1]^2.
    struct Ellipse {
        a: f64,
        ax: f64,
        ay: f64,
        x0: f64,
        y0: f64,
        phi_deg: f64,
    }

    const SHEPP_LOGAN: [Ellipse; 10] = [
        Ellipse { a: 1.0, ax: 0.69, ay: 0.92, x0: 0.0, y0: 0.0, phi_deg: 0.0 },
        Ellipse { a: -0.8, ax: 0.6624, ay: 0.874, x0: 0.0, y0: -0.0184, phi_deg: 0.0 },
        Ellipse { a: -0.2, ax: 0.11, ay: 0.31, x0: 0.22, y0: 0.0, phi_deg: -18.0 },
        Ellipse { a: -0.2, ax: 0.16, ay: 0.41, x0: -0.22, y0: 0.0, phi_deg: 18.0 },
        Ellipse { a: 0.1, ax: 0.21, ay: 0.25, x0: 0.0, y0: 0.35, phi_deg: 0.0 },
        Ellipse { a: 0.1, ax: 0.046, ay: 0.046, x0: 0.0, y0: 0.1, phi_deg: 0.0 },
        Ellipse { a: 0.1, ax: 0.046, ay: 0.046, x0: 0.0, y0: -0.1, phi_deg: 0.0 },
        Ellipse { a: 0.1, ax: 0.046, ay: 0.023, x0: -0.08, y0: -0.605, phi_deg: 0.0 },
        Ellipse { a: 0.1, ax: 0.023, ay: 0.023, x0: 0.0, y0: -0.606, phi_deg: 0.0 },
        Ellipse { a: 0.1, ax: 0.023, ay: 0.046, x0: 0.06, y0: -0.605, phi_deg: 0.0 },
    ];

    /// The modified Shepp-Logan head phantom rasterized at `side`
    /// pixels, values in [0, 1].
    pub fn shepp_logan(side: usize) -> Image {
        let c = (side as f64 - 1.0) / 2.0;
        let scale = 2.0 / side as f64;
        Image::from_fn(side, side, |xi, yi| {
            let x = (xi as f64 - c) * scale;
            // Image rows grow downward; the phantom is defined y-up.
            let y = (c - yi as f64) * scale;
            let mut v = 0.0;
            for e in &SHEPP_LOGAN {
                let phi = e.phi_deg.to_radians();
                let (sin_p, cos_p) = phi.sin_cos();
                let dx = x - e.x0;
                let dy = y - e.y0;
                let xr = dx * cos_p + dy * sin_p;
                let yr = -dx * sin_p + dy * cos_p;
                if (xr / e.ax).powi(2) + (yr / e.ay).powi(2) <= 1.0 {
                    v += e.a;
                }
            }
            v.clamp(0.0, 1.0)
        })
    }

    /// Sum of a few gaussian bumps; band-limited for spectral tests.
    pub fn gaussian_blobs(side: usize) -> Image {
        let c = (side as f64 - 1.0) / 2.0;
        let blobs = [
            (0.3 * side as f64, -0.1 * side as f64, 0.06 * side as f64, 1.0),
            (-0.2 * side as f64, 0.2 * side as f64, 0.09 * side as f64, 0.7),
            (0.0, 0.0, 0.12 * side as f64, 0.5),
        ];
        Image::from_fn(side, side, |xi, yi| {
            let x = xi as f64 - c;
            let y = yi as f64 - c;
            blobs
                .iter()
                .map(|&(bx, by, sigma, amp)| {
                    let d2 = (x - bx).powi(2) + (y - by).powi(2);
                    amp * (-d2 / (2.0 * sigma * sigma)).exp()
                })
                .sum()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(side: usize, seed: u64) -> Image {
        // Small deterministic LCG; tests only.
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        Image::from_fn(side, side, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        })
    }

    #[test]
    fn preprocess_identity_case() {
        let mut img = random_image(100, 3);
        // Force min 0 and max 1 so normalization is the identity.
        img.set(0, 0, 0.0);
        img.set(1, 0, 1.0);
        let cfg = TomoConfig::default();
        let out = preprocess_frame(&img, &cfg).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn preprocess_constant_maps_to_zeros() {
        let img = Image::new(64, 64, vec![0.7; 64 * 64]).unwrap();
        let out = preprocess_frame(&img, &TomoConfig::default()).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn preprocess_rejects_empty() {
        assert!(Image::new(0, 10, vec![]).is_err());
    }

    #[test]
    fn radon_of_zeros_is_zero() {
        let img = Image::zeros(64, 64);
        let sino = radon(&img, &TomoConfig::default()).unwrap();
        assert!(sino.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn radon_is_linear() {
        let cfg = TomoConfig { num_angles: 12, ..Default::default() };
        let f = random_image(32, 5);
        let g = random_image(32, 9);
        let (a, b) = (0.7, -1.3);
        let combo = Image::from_fn(32, 32, |x, y| a * f.get(x, y) + b * g.get(x, y));
        let sf = radon(&f, &cfg).unwrap();
        let sg = radon(&g, &cfg).unwrap();
        let sc = radon(&combo, &cfg).unwrap();
        for i in 0..sc.data.len() {
            let expect = a * sf.data[i] + b * sg.data[i];
            assert!((sc.data[i] - expect).abs() < 1e-9, "linearity failed at {i}");
        }
    }

    #[test]
    fn radon_conserves_mass_per_angle() {
        let cfg = TomoConfig { num_angles: 30, ..Default::default() };
        let img = random_image(64, 11);
        let total: f64 = img.data().iter().sum();
        let sino = radon(&img, &cfg).unwrap();
        let ds = sino.offset_spacing();
        for i in 0..sino.num_angles() {
            let line: f64 = sino.row(i).iter().sum::<f64>() * ds;
            let rel = (line - total).abs() / total;
            assert!(rel < 1e-3, "angle {i}: relative mass error {rel}");
        }
    }

    #[test]
    fn radon_rotational_covariance_quarter_turn() {
        let m = 12; // even angle count so the quarter turn lands on the grid
        let cfg = TomoConfig { num_angles: m, ..Default::default() };
        let img = random_image(32, 17);
        let rot = img.rot90();
        let s_orig = radon(&img, &cfg).unwrap();
        let s_rot = radon(&rot, &cfg).unwrap();
        let n = s_orig.num_offsets();
        let half = m / 2;
        let scale = s_orig.data.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        for i in 0..m {
            for j in 0..n {
                let got = s_rot.value(i, j);
                let expect = if i + half < m {
                    s_orig.value(i + half, j)
                } else {
                    s_orig.value(i + half - m, n - 1 - j)
                };
                assert!(
                    (got - expect).abs() <= 1e-6 * scale.max(1.0),
                    "rot covariance failed at angle {i} offset {j}: {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn radon_pads_non_square_inputs() {
        let img = Image::from_fn(20, 10, |x, y| ((x + y) % 3) as f64 * 0.3);
        let cfg = TomoConfig { num_angles: 8, ..Default::default() };
        let sino = radon(&img, &cfg).unwrap();
        let total: f64 = img.data().iter().sum();
        let line: f64 = sino.row(0).iter().sum::<f64>() * sino.offset_spacing();
        assert!((line - total).abs() / total < 1e-3);
    }

    #[test]
    fn ramp_filter_zeros_and_dc() {
        let n = 33;
        let angles = uniform_angles(4);
        let offsets = centered_offsets(n, 1.0);
        let zeros = Sinogram::new(angles.clone(), offsets.clone(), vec![0.0; 4 * n]).unwrap();
        let fz = ramp_filter(&zeros).unwrap();
        assert!(fz.data.iter().all(|&v| v == 0.0));

        let dc = Sinogram::new(angles, offsets, vec![2.5; 4 * n]).unwrap();
        let fd = ramp_filter(&dc).unwrap();
        for &v in &fd.data {
            assert!(v.abs() < 1e-8, "DC must be annihilated, got {v}");
        }
    }

    #[test]
    fn ramp_filter_rejects_tiny_grids() {
        let s = Sinogram::new(uniform_angles(1), vec![-0.5, 0.5], vec![0.0, 0.0]).unwrap();
        assert!(matches!(ramp_filter(&s), Err(Error::InvalidInput(_))));
    }

    /// Brute-force O(n^2) DFT oracle replicating the padded ramp
    /// pipeline (reflection padding, |w| response), independent of the
    /// FFT implementation.
    fn ramp_filter_dft_oracle(row: &[f64], spacing: f64) -> Vec<f64> {
        let n = row.len();
        let padded = (2 * n).next_power_of_two();
        let extended: Vec<f64> = (0..padded).map(|p| row[reflect_index(p, n)]).collect();
        let mut spectrum = vec![(0.0f64, 0.0f64); padded];
        for (k, s) in spectrum.iter_mut().enumerate() {
            for (m, &v) in extended.iter().enumerate() {
                let phase = -2.0 * std::f64::consts::PI * (k * m) as f64 / padded as f64;
                s.0 += v * phase.cos();
                s.1 += v * phase.sin();
            }
        }
        let resp = ramp_response(padded, spacing);
        for (s, r) in spectrum.iter_mut().zip(resp.iter()) {
            s.0 *= r;
            s.1 *= r;
        }
        (0..n)
            .map(|m| {
                let mut acc = 0.0;
                for (k, s) in spectrum.iter().enumerate() {
                    let phase = 2.0 * std::f64::consts::PI * (k * m) as f64 / padded as f64;
                    acc += s.0 * phase.cos() - s.1 * phase.sin();
                }
                acc / padded as f64
            })
            .collect()
    }

    #[test]
    fn ramp_filter_matches_direct_dft_on_impulse() {
        let n = 255;
        let mut row = vec![0.0; n];
        row[n / 2] = 1.0;
        let sino = Sinogram::new(uniform_angles(1), centered_offsets(n, 1.0), row.clone()).unwrap();
        let filtered = ramp_filter(&sino).unwrap();
        let expect = ramp_filter_dft_oracle(&row, 1.0);
        for (a, b) in filtered.data.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn backproject_zero_and_errors() {
        let s = Sinogram::new(uniform_angles(3), centered_offsets(5, 1.0), vec![0.0; 15]).unwrap();
        let img = backproject(&s, 16).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.0));
        assert!(matches!(backproject(&s, 0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn backproject_single_ray_hits_central_column() {
        let n = 33;
        let mut data = vec![0.0; n];
        data[n / 2] = 1.0; // s = 0
        let s = Sinogram::new(vec![0.0], centered_offsets(n, 1.0), data).unwrap();
        let img = backproject(&s, 33).unwrap();
        for y in 0..33 {
            for x in 0..33 {
                let v = img.get(x, y);
                if x == 16 {
                    assert!(v > 0.0, "central column must be hit");
                } else if (x as isize - 16).abs() > 1 {
                    assert_eq!(v, 0.0, "pixel ({x},{y}) should be untouched");
                }
            }
        }
    }

    #[test]
    fn radon_backproject_adjoint_identity() {
        let cfg = TomoConfig { num_angles: 24, ..Default::default() };
        let g = random_image(32, 23);
        let rg = radon(&g, &cfg).unwrap();
        let t_data: Vec<f64> = random_image(rg.num_offsets(), 29)
            .data()
            .iter()
            .take(rg.num_angles() * rg.num_offsets())
            .copied()
            .collect();
        let t = Sinogram::new(rg.angles.clone(), rg.offsets.clone(), t_data).unwrap();
        let bt = backproject(&t, 32).unwrap();
        let lhs: f64 = rg.data.iter().zip(t.data.iter()).map(|(a, b)| a * b).sum();
        // backproject folds in the pi/num_angles quadrature weight, so the
        // plain adjoint pairing carries the same factor on the image side.
        let scale = std::f64::consts::PI / cfg.num_angles as f64;
        let rhs: f64 = g.data().iter().zip(bt.data().iter()).map(|(a, b)| a * b).sum::<f64>() / scale;
        let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs());
        assert!(rel < 1e-2, "adjoint identity violated: {lhs} vs {rhs} (rel {rel})");
    }

    #[test]
    fn fbp_zero_sinogram_gives_zero_image() {
        let s = Sinogram::new(uniform_angles(8), centered_offsets(9, 1.0), vec![0.0; 72]).unwrap();
        let img = fbp(&s, 16).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fbp_recovers_disc_amplitude_and_contrast() {
        let side = 64;
        let radius = 16.0;
        let img = phantom::disc(side, radius, 1.0);
        let cfg = TomoConfig { num_angles: 90, ..Default::default() };
        let sino = radon(&img, &cfg).unwrap();

        // Raw reconstruction amplitude pins the filter/backprojection
        // scale factors: the disc interior should come back near 1.
        let raw = backproject(&ramp_filter(&sino).unwrap(), side).unwrap();
        let c = (side as f64 - 1.0) / 2.0;
        let mut inside = (0.0, 0usize);
        for y in 0..side {
            for x in 0..side {
                let d2 = (x as f64 - c).powi(2) + (y as f64 - c).powi(2);
                if d2 < (radius - 2.0).powi(2) {
                    inside.0 += raw.get(x, y);
                    inside.1 += 1;
                }
            }
        }
        let mean_in = inside.0 / inside.1 as f64;
        assert!((mean_in - 1.0).abs() < 0.15, "raw FBP amplitude {mean_in}, want ~1");

        // Normalized output keeps the contrast.
        let recon = fbp(&sino, side).unwrap();
        let mut nin = (0.0, 0usize);
        let mut nout = (0.0, 0usize);
        for y in 0..side {
            for x in 0..side {
                let d2 = (x as f64 - c).powi(2) + (y as f64 - c).powi(2);
                if d2 < (radius - 2.0).powi(2) {
                    nin.0 += recon.get(x, y);
                    nin.1 += 1;
                } else if d2 > (radius + 2.0).powi(2) {
                    nout.0 += recon.get(x, y);
                    nout.1 += 1;
                }
            }
        }
        let contrast = nin.0 / nin.1 as f64 - nout.0 / nout.1 as f64;
        assert!(contrast >= 0.5, "disc contrast {contrast} < 0.5");
    }

    #[test]
    fn featurize_contract_shape_range_determinism() {
        let cfg = TomoConfig { num_angles: 45, output_size: 32, ..Default::default() };
        let img = random_image(48, 31);
        let f1 = featurize(&img, &cfg).unwrap();
        let f2 = featurize(&img, &cfg).unwrap();
        assert_eq!(f1.width(), 32);
        assert_eq!(f1.height(), 32);
        assert!(f1.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(f1, f2, "featurize must be bitwise deterministic");
    }

    #[test]
    fn featurize_preserves_dark_road_band() {
        // Dark vertical band on a bright noisy background.
        let side = 64;
        let mut img = random_image(side, 41);
        for v in img.data_mut() {
            *v = 0.75 + 0.25 * *v;
        }
        for y in 0..side {
            for x in 24..40 {
                img.set(x, y, 0.15);
            }
        }
        let cfg = TomoConfig { num_angles: 60, output_size: side, ..Default::default() };
        let feat = featurize(&img, &cfg).unwrap();
        let mut road = (0.0, 0usize);
        let mut bg = (0.0, 0usize);
        for y in 0..side {
            for x in 0..side {
                if (24..40).contains(&x) {
                    road.0 += feat.get(x, y);
                    road.1 += 1;
                } else if !(20..44).contains(&x) {
                    bg.0 += feat.get(x, y);
                    bg.1 += 1;
                }
            }
        }
        let road_mean = road.0 / road.1 as f64;
        let bg_mean = bg.0 / bg.1 as f64;
        assert!(
            road_mean < bg_mean,
            "road pixels must stay darker than background in the feature image ({road_mean} vs {bg_mean})"
        );
    }

    #[test]
    fn sinogram_csv_round_trip() {
        let cfg = TomoConfig { num_angles: 6, ..Default::default() };
        let sino = radon(&random_image(16, 7), &cfg).unwrap();
        let mut buf = Vec::new();
        sino.write_csv(&mut buf).unwrap();
        let back = Sinogram::read_csv(buf.as_slice()).unwrap();
        assert_eq!(sino, back);
    }

    #[test]
    fn sinogram_binary_round_trip() {
        let cfg = TomoConfig { num_angles: 6, ..Default::default() };
        let sino = radon(&random_image(16, 7), &cfg).unwrap();
        let mut buf = Vec::new();
        sino.write_binary(&mut buf).unwrap();
        let back = Sinogram::read_binary(buf.as_slice()).unwrap();
        assert_eq!(sino.data, back.data);
        assert_eq!(sino.offsets.len(), back.offsets.len());
        // Truncated payload must be rejected.
        buf.truncate(buf.len() - 5);
        assert!(matches!(Sinogram::read_binary(buf.as_slice()), Err(Error::CorruptFile(_))));
    }

    #[test]
    fn config_validation() {
        let bad = TomoConfig { num_angles: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TomoConfig { offset_count: Some(4), ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = TomoConfig { offset_count: Some(1), ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
