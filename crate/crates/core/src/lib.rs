//! Real-versus-generated image classification from the disagreement between
//! the magnitude spectra of an image's red, green and blue channels.
//!
//! The pipeline runs [`imageio`] → [`spectral`] → [`features`], and then
//! classifies with [`gmm`] (unsupervised) or [`svm`] (supervised).
//! [`adapt`] carries an SVM across domains without target labels.
//! [`synthgen`] produces seeded corpora for testing, and [`persist`] stores
//! fitted models.
//!
//! ```
//! use chanspec::features::image_features;
//! use chanspec::imageio::RgbImage;
//!
//! let img = RgbImage::constant(4, 4, [10.0, 20.0, 30.0]).unwrap();
//! let f = image_features(&img).unwrap();
//! assert!(f.mean > 0.0);
//! ```

// NaN-rejecting checks read as `!(x > y)` on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod evalkit;
pub mod features;
pub mod gmm;
pub mod imageio;
pub mod manifest;
pub mod persist;
pub mod plane;
pub mod spectral;
pub mod svm;
pub mod synthgen;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/spectra.md")]
    pub struct Spectra;
    #[doc = include_str!("../../../book/src/features.md")]
    pub struct Features;
    #[doc = include_str!("../../../book/src/synthetic.md")]
    pub struct Synthetic;
    #[doc = include_str!("../../../book/src/gmm.md")]
    pub struct Gmm;
    #[doc = include_str!("../../../book/src/svm.md")]
    pub struct Svm;
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub struct Evaluation;
    #[doc = include_str!("../../../book/src/adaptation.md")]
    pub struct Adaptation;
    #[doc = include_str!("../../../book/src/persistence.md")]
    pub struct Persistence;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
