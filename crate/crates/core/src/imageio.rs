//! Raster decoding into separated R, G, B planes.
//!
//! Intensities stay on the decoded 8-bit scale (`0..=255`) promoted to `f64`;
//! nothing is rescaled to `[0, 1]`.

use std::path::Path;

use image::{ImageFormat, ImageReader, RgbImage as RasterRgb};
use thiserror::Error;

use crate::plane::Plane;

/// Smallest accepted side length. Smaller images would leave Pearson
/// correlation over the spectrum with too few bins.
pub const MIN_SIDE: usize = 2;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported or undecodable image {path}: {message}")]
    Decode { path: String, message: String },
    #[error("image is {width}x{height}; both sides must be at least {MIN_SIDE}")]
    TooSmall { width: usize, height: usize },
    #[error("channel planes disagree in size")]
    ShapeMismatch,
    #[error("intensity {value} at ({x}, {y}) is outside [0, 255]")]
    OutOfRange { x: usize, y: usize, value: f64 },
    #[error("cannot encode {path}: {message}")]
    Encode { path: String, message: String },
}

/// A color image held as three equally sized intensity planes.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    red: Plane,
    green: Plane,
    blue: Plane,
}

impl RgbImage {
    pub fn new(red: Plane, green: Plane, blue: Plane) -> Result<Self, ImageError> {
        if !red.same_shape(&green) || !red.same_shape(&blue) {
            return Err(ImageError::ShapeMismatch);
        }
        if red.width() < MIN_SIDE || red.height() < MIN_SIDE {
            return Err(ImageError::TooSmall {
                width: red.width(),
                height: red.height(),
            });
        }
        for plane in [&red, &green, &blue] {
            if let Some(i) = plane
                .as_slice()
                .iter()
                .position(|v| !(v.is_finite() && (0.0..=255.0).contains(v)))
            {
                return Err(ImageError::OutOfRange {
                    x: i % plane.width(),
                    y: i / plane.width(),
                    value: plane.as_slice()[i],
                });
            }
        }
        Ok(Self { red, green, blue })
    }

    /// Image whose every pixel has the same `(r, g, b)` value.
    pub fn constant(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self, ImageError> {
        Self::new(
            Plane::filled(width, height, rgb[0]),
            Plane::filled(width, height, rgb[1]),
            Plane::filled(width, height, rgb[2]),
        )
    }

    /// Image with `R = G = B = plane`.
    pub fn gray(plane: Plane) -> Result<Self, ImageError> {
        Self::new(plane.clone(), plane.clone(), plane)
    }

    pub fn width(&self) -> usize {
        self.red.width()
    }

    pub fn height(&self) -> usize {
        self.red.height()
    }

    pub fn red(&self) -> &Plane {
        &self.red
    }

    pub fn green(&self) -> &Plane {
        &self.green
    }

    pub fn blue(&self) -> &Plane {
        &self.blue
    }

    /// The three planes in fixed R, G, B order.
    pub fn to_planes(&self) -> (&Plane, &Plane, &Plane) {
        (&self.red, &self.green, &self.blue)
    }

    pub fn into_planes(self) -> (Plane, Plane, Plane) {
        (self.red, self.green, self.blue)
    }

    /// Encodes as 8-bit RGB PNG. Values are rounded to the nearest integer,
    /// so the write is lossless for integer-valued planes.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        let path = path.as_ref();
        let (w, h) = (self.width(), self.height());
        let mut raster = RasterRgb::new(w as u32, h as u32);
        for y in 0..h {
            for x in 0..w {
                let px = [&self.red, &self.green, &self.blue].map(|p| p.get(x, y).round() as u8);
                raster.put_pixel(x as u32, y as u32, image::Rgb(px));
            }
        }
        raster
            .save_with_format(path, ImageFormat::Png)
            .map_err(|e| ImageError::Encode {
                path: path.display().to_string(),
                message: e.to_string(),
            })
    }
}

/// Decodes a PNG or JPEG file. Grayscale sources are replicated into all three
/// planes and alpha is dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<RgbImage, ImageError> {
    let path = path.as_ref();
    let shown = || path.display().to_string();
    let reader = ImageReader::open(path)
        .map_err(|source| ImageError::Io {
            path: shown(),
            source,
        })?
        .with_guessed_format()
        .map_err(|source| ImageError::Io {
            path: shown(),
            source,
        })?;
    match reader.format() {
        Some(ImageFormat::Png | ImageFormat::Jpeg) => {}
        other => {
            return Err(ImageError::Decode {
                path: shown(),
                message: match other {
                    Some(f) => format!("format {f:?} is not PNG or JPEG"),
                    None => "unrecognized format".to_string(),
                },
            })
        }
    }
    let decoded = reader.decode().map_err(|e| ImageError::Decode {
        path: shown(),
        message: e.to_string(),
    })?;
    let rgb = decoded.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    if w < MIN_SIDE || h < MIN_SIDE {
        return Err(ImageError::TooSmall {
            width: w,
            height: h,
        });
    }
    let mut planes = [(); 3].map(|_| Vec::with_capacity(w * h));
    for px in rgb.pixels() {
        for (plane, &v) in planes.iter_mut().zip(px.0.iter()) {
            plane.push(f64::from(v));
        }
    }
    let [r, g, b] = planes.map(|data| Plane::from_vec(w, h, data).expect("sized"));
    RgbImage::new(r, g, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, Luma, Rgba, RgbaImage};

    #[test]
    fn constant_png_splits_into_channels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        RgbImage::constant(2, 2, [10.0, 20.0, 30.0])
            .unwrap()
            .save_png(&path)
            .unwrap();
        let img = load_image(&path).unwrap();
        let (r, g, b) = img.to_planes();
        assert!(r.as_slice().iter().all(|&v| v == 10.0));
        assert!(g.as_slice().iter().all(|&v| v == 20.0));
        assert!(b.as_slice().iter().all(|&v| v == 30.0));
    }

    #[test]
    fn grayscale_is_replicated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        GrayImage::from_pixel(2, 2, Luma([7])).save(&path).unwrap();
        let img = load_image(&path).unwrap();
        let (r, g, b) = img.to_planes();
        assert!(r.as_slice().iter().all(|&v| v == 7.0));
        assert_eq!(r, g);
        assert_eq!(g, b);
    }

    #[test]
    fn alpha_is_discarded() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        RgbaImage::from_pixel(3, 2, Rgba([1, 2, 3, 0]))
            .save(&path)
            .unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.width(), 3);
        assert_eq!(img.height(), 2);
        assert_eq!(img.blue().get(2, 1), 3.0);
    }

    #[test]
    fn jpeg_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.jpg");
        image::RgbImage::from_pixel(8, 8, image::Rgb([100, 100, 100]))
            .save(&path)
            .unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!((img.width(), img.height()), (8, 8));
    }

    #[test]
    fn one_pixel_wide_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("thin.png");
        GrayImage::from_pixel(1, 5, Luma([0])).save(&path).unwrap();
        assert!(matches!(
            load_image(&path),
            Err(ImageError::TooSmall {
                width: 1,
                height: 5
            })
        ));
    }

    #[test]
    fn unreadable_and_unsupported_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_image(dir.path().join("missing.png")),
            Err(ImageError::Io { .. })
        ));
        let bogus = dir.path().join("x.png");
        std::fs::write(&bogus, b"definitely not an image").unwrap();
        assert!(matches!(load_image(&bogus), Err(ImageError::Decode { .. })));
        let bmp = dir.path().join("x.bmp");
        std::fs::write(&bmp, b"BM\0\0\0\0\0\0\0\0\0\0\0\0").unwrap();
        assert!(matches!(load_image(&bmp), Err(ImageError::Decode { .. })));
    }

    #[test]
    fn duplicated_channel_yields_equal_planes() {
        let p = Plane::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let img = RgbImage::new(p.clone(), p, Plane::filled(2, 2, 9.0)).unwrap();
        let (r, g, _) = img.to_planes();
        assert_eq!(r.as_slice(), g.as_slice());
    }

    #[test]
    fn validation() {
        let ok = Plane::filled(2, 2, 0.0);
        assert!(matches!(
            RgbImage::new(ok.clone(), ok.clone(), Plane::filled(3, 2, 0.0)),
            Err(ImageError::ShapeMismatch)
        ));
        assert!(matches!(
            RgbImage::new(ok.clone(), ok.clone(), Plane::filled(2, 2, 256.0)),
            Err(ImageError::OutOfRange { .. })
        ));
        assert!(matches!(
            RgbImage::new(ok.clone(), ok, Plane::filled(2, 2, f64::NAN)),
            Err(ImageError::OutOfRange { .. })
        ));
    }
}
