//! Toolkit for auditing dermoscopic datasets for skin-tone imbalance.
//!
//! The crate covers the full batch pipeline:
//!
//! * [`colorspace`] and [`skintone`]: YCbCr skin masking, CIELAB conversion,
//!   Individual Typology Angle and Fitzpatrick classification, dataset audits.
//! * [`synthval`]: histogram, SSIM and GLCM comparison of synthetic images
//!   against a real reference set, with outlier rejection.
//! * [`dataset`]: manifests, ISIC metadata ingestion, synthetic integration
//!   and patient-level stratified splitting.
//! * [`preprocess`]: the standardized preprocessing chain and augmentations.
//! * [`graphcut`]: a max-flow/min-cut lesion segmentation baseline.
//! * [`metrics`]: segmentation and classification scoring.
//! * [`training_log`]: training-curve ingestion and chart output.

pub mod colorspace;
pub mod dataset;
pub mod fixtures;
pub mod graphcut;
pub mod image_io;
pub mod mask;
pub mod metrics;
pub mod preprocess;
pub mod seed;
pub mod skintone;
pub mod synthval;
pub mod training_log;

pub use image::{GrayImage, RgbImage};
pub use mask::BinaryMask;
