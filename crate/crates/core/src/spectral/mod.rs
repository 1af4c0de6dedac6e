//! Per-channel 2D discrete Fourier transform and magnitude spectra.
//!
//! The forward transform is unnormalized and uses zero-based indices:
//!
//! ```text
//! F(u, v) = Σ_x Σ_y plane(x, y) · e^{−2πi (u·x/W + v·y/H)}
//! ```
//!
//! Shifting the sums to start at one multiplies each bin by a unit phase, so
//! the magnitude spectrum, and every feature built on it, is unchanged.
//! Spectra are not centered, windowed, or log-scaled.

mod fft;

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use thiserror::Error;

pub use fft::FftPlan;

use crate::imageio::RgbImage;
use crate::plane::Plane;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("non-finite value {value} at ({x}, {y})")]
    NonFinite { x: usize, y: usize, value: f64 },
    #[error("cannot transform an empty plane")]
    Empty,
    #[error("I/O error writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Row-major grid of complex DFT coefficients, indexed `(u, v)` like [`Plane`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexPlane {
    width: usize,
    height: usize,
    data: Vec<Complex64>,
}

impl ComplexPlane {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Complex64 {
        self.data[v * self.width + u]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    /// Elementwise complex modulus.
    pub fn modulus(&self) -> Plane {
        Plane::from_vec(
            self.width,
            self.height,
            self.data.iter().map(|c| c.norm()).collect(),
        )
        .expect("same shape")
    }
}

fn check_finite(plane: &Plane) -> Result<(), SpectralError> {
    if plane.is_empty() {
        return Err(SpectralError::Empty);
    }
    match plane.as_slice().iter().position(|v| !v.is_finite()) {
        Some(i) => Err(SpectralError::NonFinite {
            x: i % plane.width(),
            y: i / plane.width(),
            value: plane.as_slice()[i],
        }),
        None => Ok(()),
    }
}

/// Direct double-sum DFT, `O((WH)²)`. Kept as the reference the fast path is
/// checked against.
pub fn dft2_naive(plane: &Plane) -> Result<ComplexPlane, SpectralError> {
    check_finite(plane)?;
    let (w, h) = (plane.width(), plane.height());
    let mut data = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let mut acc = Complex64::new(0.0, 0.0);
            for y in 0..h {
                // (v·y mod H)/H and (u·x mod W)/W keep phases in [0, 1)
                let py = ((v * y) % h) as f64 / h as f64;
                for x in 0..w {
                    let px = ((u * x) % w) as f64 / w as f64;
                    let angle = -2.0 * PI * (px + py);
                    acc += Complex64::new(angle.cos(), angle.sin()) * plane.get(x, y);
                }
            }
            data.push(acc);
        }
    }
    Ok(ComplexPlane {
        width: w,
        height: h,
        data,
    })
}

/// Row-column FFT: length-W transforms along every row, then length-H
/// transforms along every column. Any `W, H ≥ 1` is supported.
pub fn dft2_fast(plane: &Plane) -> Result<ComplexPlane, SpectralError> {
    check_finite(plane)?;
    let (w, h) = (plane.width(), plane.height());
    let mut data: Vec<Complex64> = plane
        .as_slice()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    let mut scratch = Vec::new();

    let row_plan = FftPlan::new(w);
    for row in data.chunks_mut(w) {
        row_plan.process(row, &mut scratch);
    }

    let col_plan = FftPlan::new(h);
    let mut column = vec![Complex64::new(0.0, 0.0); h];
    for u in 0..w {
        for (y, c) in column.iter_mut().enumerate() {
            *c = data[y * w + u];
        }
        col_plan.process(&mut column, &mut scratch);
        for (y, c) in column.iter().enumerate() {
            data[y * w + u] = *c;
        }
    }
    Ok(ComplexPlane {
        width: w,
        height: h,
        data,
    })
}

/// Magnitude spectra of the three color channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSet {
    pub red: Plane,
    pub green: Plane,
    pub blue: Plane,
}

impl SpectrumSet {
    /// Wraps three precomputed spectra. Returns `None` on shape mismatch or a
    /// negative / non-finite bin.
    pub fn from_planes(red: Plane, green: Plane, blue: Plane) -> Option<Self> {
        let shapes_ok = red.same_shape(&green) && red.same_shape(&blue);
        let values_ok = [&red, &green, &blue]
            .iter()
            .all(|p| p.as_slice().iter().all(|v| v.is_finite() && *v >= 0.0));
        (shapes_ok && values_ok).then_some(Self { red, green, blue })
    }

    pub fn width(&self) -> usize {
        self.red.width()
    }

    pub fn height(&self) -> usize {
        self.red.height()
    }

    pub fn channels(&self) -> [&Plane; 3] {
        [&self.red, &self.green, &self.blue]
    }

    /// Writes `spectrum_r.csv`, `spectrum_g.csv`, `spectrum_b.csv` into `dir`:
    /// H lines of W comma-separated values each.
    pub fn write_csv_dir(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, SpectralError> {
        let dir = dir.as_ref();
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| SpectralError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let mut written = Vec::new();
        for (name, plane) in ["r", "g", "b"].iter().zip(self.channels()) {
            let path = dir.join(format!("spectrum_{name}.csv"));
            let mut out = std::io::BufWriter::new(fs::File::create(&path).map_err(io(&path))?);
            for row in plane.rows() {
                let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
                writeln!(out, "{}", line.join(",")).map_err(io(&path))?;
            }
            out.flush().map_err(io(&path))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// Magnitude spectrum `|DFT|` of each channel, computed independently.
pub fn spectrum(img: &RgbImage) -> Result<SpectrumSet, SpectralError> {
    let (r, g, b) = img.to_planes();
    Ok(SpectrumSet {
        red: dft2_fast(r)?.modulus(),
        green: dft2_fast(g)?.modulus(),
        blue: dft2_fast(b)?.modulus(),
    })
}
