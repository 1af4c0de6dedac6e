//! Seeded synthetic corpora of "real-like" and "fake-like" images.
//!
//! A real-like image is three affine copies of one smoothed random plane, so
//! its channel spectra are proportional off the DC bin. A fake-like image adds
//! an independent checkerboard-modulated noise field to each channel of a
//! real-like image, which makes the channel spectra disagree at high
//! frequencies.
//!
//! Every image draws from its own ChaCha stream keyed by `(seed, class,
//! index)`, so serial and parallel generation produce identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{self, FeatureRow, FeatureTable};
use crate::imageio::{ImageError, RgbImage};
use crate::manifest::{DatasetManifest, Label, ManifestEntry, ManifestError};
use crate::plane::Plane;

/// Mean intensity of the base plane before the per-channel affine map.
pub const BASE_MEAN: f64 = 128.0;
/// Standard deviation of the base plane. Small enough that clamping almost
/// never triggers under the gain/offset ranges below.
pub const BASE_STD: f64 = 10.0;
pub const GAIN_RANGE: (f64, f64) = (0.8, 1.2);
pub const OFFSET_RANGE: (f64, f64) = (-10.0, 10.0);
/// Per-channel perturbation amplitude as a fraction of `noise_amplitude`.
pub const NOISE_AMPLITUDE_RANGE: (f64, f64) = (0.5, 1.0);

pub const MANIFEST_NAME: &str = "manifest.jsonl";

const FAKE_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Features(#[from] features::FeatureError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Number of real-like images.
    pub count: usize,
    /// Side length in pixels.
    pub size: usize,
    /// Share of fake-like images in the whole corpus.
    pub fake_fraction: f64,
    pub seed: u64,
    pub noise_amplitude: f64,
    /// Box-blur radius of the base plane.
    pub base_smoothing: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 100,
            size: 64,
            fake_fraction: 0.5,
            seed: 0,
            noise_amplitude: 8.0,
            base_smoothing: 2,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.count < 1 {
            return bad("count must be at least 1".into());
        }
        if self.size < 8 {
            return bad(format!("size must be at least 8, got {}", self.size));
        }
        if !(0.0..=1.0).contains(&self.fake_fraction) {
            return bad(format!(
                "fake_fraction must lie in [0, 1], got {}",
                self.fake_fraction
            ));
        }
        if !(self.noise_amplitude.is_finite() && self.noise_amplitude >= 0.0) {
            return bad(format!(
                "noise_amplitude must be finite and non-negative, got {}",
                self.noise_amplitude
            ));
        }
        if 2 * self.base_smoothing + 1 > self.size {
            return bad(format!(
                "base_smoothing {} is too wide for size {}",
                self.base_smoothing, self.size
            ));
        }
        Ok(())
    }

    /// `(real, fake)` image counts.
    ///
    /// `fake_fraction` is the fake share of the whole corpus, so the fake
    /// count is `count · f / (1 − f)` rounded to nearest, and at least one
    /// whenever `f > 0`. `f = 0.5` gives a balanced corpus; `f = 1` gives
    /// `count` fakes and no reals.
    pub fn class_counts(&self) -> (usize, usize) {
        let f = self.fake_fraction;
        if f <= 0.0 {
            return (self.count, 0);
        }
        if f >= 1.0 {
            return (0, self.count);
        }
        let fake = (self.count as f64 * f / (1.0 - f)).round() as usize;
        (self.count, fake.max(1))
    }
}

/// ChaCha stream for one image.
pub fn image_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-channel affine map `c = gain · L + offset`, in R, G, B order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelAffine {
    pub gains: [f64; 3],
    pub offsets: [f64; 3],
}

impl ChannelAffine {
    pub const IDENTITY: ChannelAffine = ChannelAffine {
        gains: [1.0; 3],
        offsets: [0.0; 3],
    };

    pub fn random(rng: &mut impl Rng) -> Self {
        let gains = [(); 3].map(|_| rng.random_range(GAIN_RANGE.0..=GAIN_RANGE.1));
        let offsets = [(); 3].map(|_| rng.random_range(OFFSET_RANGE.0..=OFFSET_RANGE.1));
        Self { gains, offsets }
    }
}

/// Circular box blur with a `(2r+1)²` kernel.
fn box_blur(plane: &Plane, radius: usize) -> Plane {
    if radius == 0 {
        return plane.clone();
    }
    let (w, h) = (plane.width(), plane.height());
    let r = radius as isize;
    let wrap = |i: isize, n: usize| i.rem_euclid(n as isize) as usize;
    let horizontal = Plane::from_fn(w, h, |x, y| {
        (-r..=r)
            .map(|d| plane.get(wrap(x as isize + d, w), y))
            .sum::<f64>()
    });
    let norm = ((2 * radius + 1) * (2 * radius + 1)) as f64;
    Plane::from_fn(w, h, |x, y| {
        (-r..=r)
            .map(|d| horizontal.get(x, wrap(y as isize + d, h)))
            .sum::<f64>()
            / norm
    })
}

/// Smoothed random plane rescaled to mean [`BASE_MEAN`] and standard
/// deviation [`BASE_STD`].
pub fn base_plane(size: usize, smoothing: usize, rng: &mut impl Rng) -> Plane {
    let raw = Plane::from_fn(size, size, |_, _| rng.random_range(-1.0..=1.0));
    let smooth = box_blur(&raw, smoothing);
    let n = smooth.len() as f64;
    let mean = smooth.as_slice().iter().sum::<f64>() / n;
    let var = smooth
        .as_slice()
        .iter()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / n;
    let scale = if var > 0.0 {
        BASE_STD / var.sqrt()
    } else {
        0.0
    };
    smooth.map(|v| BASE_MEAN + (v - mean) * scale)
}

fn quantize(v: f64) -> f64 {
    v.round().clamp(0.0, 255.0)
}

/// Applies `affine` to `base` channel by channel, rounding to integers and
/// clamping to `[0, 255]`.
pub fn real_like_from_base(base: &Plane, affine: ChannelAffine) -> RgbImage {
    let [r, g, b] =
        [0, 1, 2].map(|c| base.map(|v| quantize(affine.gains[c] * v + affine.offsets[c])));
    RgbImage::new(r, g, b).expect("quantized planes are valid")
}

pub fn gen_real_like(size: usize, rng: &mut impl Rng, cfg: &SynthConfig) -> RgbImage {
    let base = base_plane(size, cfg.base_smoothing, rng);
    let affine = ChannelAffine::random(rng);
    real_like_from_base(&base, affine)
}

/// Adds an independent checkerboard-modulated noise field to each channel:
/// `amp_c · (−1)^(x + y + phase_c) · η_c(x, y)` with `η_c ~ U[−1, 1]`,
/// `amp_c ∈ [0.5, 1] · noise_amplitude` and `phase_c ∈ {0, 1}`.
pub fn perturb(img: &RgbImage, rng: &mut impl Rng, noise_amplitude: f64) -> RgbImage {
    let (w, h) = (img.width(), img.height());
    let (r, g, b) = img.to_planes();
    let [r, g, b] = [r, g, b].map(|plane| {
        let amp =
            rng.random_range(NOISE_AMPLITUDE_RANGE.0..=NOISE_AMPLITUDE_RANGE.1) * noise_amplitude;
        let phase = rng.random_range(0..2usize);
        Plane::from_fn(w, h, |x, y| {
            let eta = rng.random_range(-1.0..=1.0);
            let sign = if (x + y + phase) % 2 == 0 { 1.0 } else { -1.0 };
            quantize(plane.get(x, y) + amp * sign * eta)
        })
    });
    RgbImage::new(r, g, b).expect("quantized planes are valid")
}

pub fn gen_fake_like(size: usize, rng: &mut impl Rng, cfg: &SynthConfig) -> RgbImage {
    let real = gen_real_like(size, rng, cfg);
    perturb(&real, rng, cfg.noise_amplitude)
}

/// One generated corpus member.
#[derive(Debug, Clone)]
pub struct SynthImage {
    pub name: String,
    pub label: Label,
    pub image: RgbImage,
}

fn corpus_plan(cfg: &SynthConfig) -> Vec<(String, Label, u64)> {
    let (real, fake) = cfg.class_counts();
    let reals = (0..real).map(|i| (format!("real_{i:05}.png"), Label::Real, i as u64));
    let fakes = (0..fake).map(|j| {
        (
            format!("fake_{j:05}.png"),
            Label::Fake,
            FAKE_STREAM_BASE + j as u64,
        )
    });
    reals.chain(fakes).collect()
}

/// Generates the whole corpus in memory: real-like images first, then
/// fake-like, each in index order.
pub fn corpus_images(cfg: &SynthConfig) -> Result<Vec<SynthImage>, SynthError> {
    cfg.validate()?;
    Ok(corpus_plan(cfg)
        .into_par_iter()
        .map(|(name, label, stream)| {
            let mut rng = image_rng(cfg.seed, stream);
            let image = match label {
                Label::Real => gen_real_like(cfg.size, &mut rng, cfg),
                Label::Fake => gen_fake_like(cfg.size, &mut rng, cfg),
            };
            SynthImage { name, label, image }
        })
        .collect())
}

/// Features of a generated corpus without touching the filesystem. Rows are
/// named like the files [`gen_corpus`] would write.
pub fn corpus_features(cfg: &SynthConfig) -> Result<FeatureTable, SynthError> {
    let images = corpus_images(cfg)?;
    let rows: Result<Vec<FeatureRow>, features::FeatureError> = images
        .par_iter()
        .map(|s| {
            Ok(FeatureRow {
                path: s.name.clone(),
                label: Some(s.label),
                features: features::image_features(&s.image)?,
            })
        })
        .collect();
    Ok(FeatureTable::new(rows?))
}

/// Writes the corpus as PNG files plus `manifest.jsonl` into `out_dir` and
/// returns the manifest path.
pub fn gen_corpus(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<PathBuf, SynthError> {
    let out_dir = out_dir.as_ref();
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|source| SynthError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let images = corpus_images(cfg)?;
    images
        .par_iter()
        .try_for_each(|s| s.image.save_png(out_dir.join(&s.name)))?;
    let manifest = DatasetManifest::new(
        images
            .iter()
            .map(|s| ManifestEntry {
                path: s.name.clone(),
                label: Some(s.label),
            })
            .collect(),
        out_dir,
    )?;
    let path = out_dir.join(MANIFEST_NAME);
    manifest.write(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{image_features, pearson_slices};
    use crate::spectral::spectrum;

    fn cfg() -> SynthConfig {
        SynthConfig::default()
    }

    #[test]
    fn identity_affine_gives_gray_image_with_zero_features() {
        let mut rng = image_rng(3, 0);
        let base = base_plane(32, 2, &mut rng);
        let img = real_like_from_base(&base, ChannelAffine::IDENTITY);
        let (r, g, b) = img.to_planes();
        assert_eq!(r, g);
        assert_eq!(g, b);
        let f = image_features(&img).unwrap();
        assert_eq!([f.mean, f.max, f.min], [0.0; 3]);
        for v in [f.icorr_rg, f.icorr_rb, f.icorr_gb] {
            assert!(v.abs() <= 1e-12);
        }
    }

    #[test]
    fn real_like_spectra_are_correlated_off_dc() {
        for i in 0..100 {
            let mut rng = image_rng(17, i);
            let base = base_plane(64, 2, &mut rng);
            let affine = ChannelAffine::random(&mut rng);
            let raw_in_range = (0..3).all(|c| {
                base.as_slice().iter().all(|v| {
                    let x = affine.gains[c] * v + affine.offsets[c];
                    (0.0..=255.0).contains(&x)
                })
            });
            if !raw_in_range {
                continue;
            }
            let s = spectrum(&real_like_from_base(&base, affine)).unwrap();
            let rho = pearson_slices(&s.red.as_slice()[1..], &s.green.as_slice()[1..]).unwrap();
            assert!(rho >= 0.99, "image {i}: rho {rho}");
        }
    }

    #[test]
    fn determinism() {
        let c = cfg();
        let a = gen_fake_like(16, &mut image_rng(1, 4), &c);
        let b = gen_fake_like(16, &mut image_rng(1, 4), &c);
        assert_eq!(a, b);
        let a = gen_real_like(16, &mut image_rng(1, 4), &c);
        let b = gen_real_like(16, &mut image_rng(1, 4), &c);
        assert_eq!(a, b);
        assert_ne!(a, gen_real_like(16, &mut image_rng(2, 4), &c));
    }

    #[test]
    fn zero_noise_fake_equals_real() {
        let c = SynthConfig {
            noise_amplitude: 0.0,
            ..cfg()
        };
        let fake = gen_fake_like(32, &mut image_rng(9, 1), &c);
        let real = gen_real_like(32, &mut image_rng(9, 1), &c);
        assert_eq!(fake, real);
    }

    #[test]
    fn fake_features_exceed_their_noise_free_counterpart() {
        let c = cfg();
        for i in 0..50 {
            let mut rng = image_rng(21, i);
            let mut twin = rng.clone();
            let fake = image_features(&gen_fake_like(64, &mut rng, &c)).unwrap();
            let real = image_features(&gen_real_like(64, &mut twin, &c)).unwrap();
            for (k, (f, r)) in fake.to_array().iter().zip(real.to_array()).enumerate() {
                assert!(f > &r, "pair {i} feature {k}: {f} <= {r}");
            }
        }
    }

    #[test]
    fn clamping_is_rare() {
        let c = cfg();
        let (mut clamped, mut total) = (0usize, 0usize);
        for i in 0..40 {
            let img = gen_fake_like(64, &mut image_rng(2, i), &c);
            let (r, g, b) = img.to_planes();
            for p in [r, g, b] {
                total += p.len();
                clamped += p
                    .as_slice()
                    .iter()
                    .filter(|&&v| v == 0.0 || v == 255.0)
                    .count();
            }
        }
        assert!((clamped as f64) < 0.01 * total as f64);
    }

    #[test]
    fn class_counts_follow_fraction() {
        let with = |count, fake_fraction| SynthConfig {
            count,
            fake_fraction,
            ..cfg()
        };
        assert_eq!(with(10, 0.5).class_counts(), (10, 10));
        assert_eq!(with(100, 0.01).class_counts(), (100, 1));
        assert_eq!(with(100, 0.05).class_counts(), (100, 5));
        assert_eq!(with(2000, 0.25).class_counts(), (2000, 667));
        assert_eq!(with(2000, 0.01).class_counts(), (2000, 20));
        assert_eq!(with(3, 0.001).class_counts(), (3, 1));
        assert_eq!(with(7, 0.0).class_counts(), (7, 0));
        assert_eq!(with(7, 1.0).class_counts(), (0, 7));
    }

    #[test]
    fn invalid_configs() {
        for bad in [
            SynthConfig { count: 0, ..cfg() },
            SynthConfig { size: 7, ..cfg() },
            SynthConfig {
                fake_fraction: 1.5,
                ..cfg()
            },
            SynthConfig {
                noise_amplitude: -1.0,
                ..cfg()
            },
            SynthConfig {
                size: 8,
                base_smoothing: 4,
                ..cfg()
            },
        ] {
            assert!(matches!(bad.validate(), Err(SynthError::InvalidConfig(_))));
        }
    }

    #[test]
    fn corpus_on_disk_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let c = SynthConfig {
            count: 3,
            size: 16,
            seed: 5,
            ..cfg()
        };
        let manifest_path = gen_corpus(&c, dir.path()).unwrap();
        let m = DatasetManifest::read(&manifest_path).unwrap();
        assert_eq!((m.count(Label::Real), m.count(Label::Fake)), (3, 3));
        let in_memory = corpus_images(&c).unwrap();
        for (entry, generated) in m.entries.iter().zip(&in_memory) {
            assert_eq!(entry.label, Some(generated.label));
            assert!(entry.path.starts_with(&generated.label.to_string()));
            let loaded = crate::imageio::load_image(m.resolve(entry)).unwrap();
            assert_eq!(loaded, generated.image);
        }

        let again = tempfile::tempdir().unwrap();
        let p2 = gen_corpus(&c, again.path()).unwrap();
        assert_eq!(fs::read(&manifest_path).unwrap(), fs::read(&p2).unwrap());
        for e in &m.entries {
            assert_eq!(
                fs::read(dir.path().join(&e.path)).unwrap(),
                fs::read(again.path().join(&e.path)).unwrap()
            );
        }
    }
}
