//! PNG/JPEG loading and PNG writing.

use std::path::{Path, PathBuf};

use image::{GrayImage, RgbImage};

#[derive(Debug, thiserror::Error)]
pub enum ImageIoError {
    #[error("cannot read image {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("cannot write image {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("image {path} has zero width or height")]
    Empty { path: PathBuf },
}

/// Decodes any supported file into 8-bit RGB, dropping alpha.
pub fn load_rgb(path: &Path) -> Result<RgbImage, ImageIoError> {
    let img = image::open(path).map_err(|source| ImageIoError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let rgb = img.to_rgb8();
    if rgb.width() == 0 || rgb.height() == 0 {
        return Err(ImageIoError::Empty {
            path: path.to_path_buf(),
        });
    }
    Ok(rgb)
}

pub fn load_gray(path: &Path) -> Result<GrayImage, ImageIoError> {
    let img = image::open(path).map_err(|source| ImageIoError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(img.to_luma8())
}

pub fn save_rgb(image: &RgbImage, path: &Path) -> Result<(), ImageIoError> {
    image
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| ImageIoError::Write {
            path: path.to_path_buf(),
            source,
        })
}

pub fn save_gray(image: &GrayImage, path: &Path) -> Result<(), ImageIoError> {
    image
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| ImageIoError::Write {
            path: path.to_path_buf(),
            source,
        })
}

/// Extensions tried, in order, when resolving an image id to a file.
pub const IMAGE_EXTENSIONS: [&str; 5] = ["jpg", "jpeg", "png", "JPG", "PNG"];

/// Finds `<dir>/<stem>.<ext>` for the first existing supported extension.
pub fn find_image(dir: &Path, stem: &str) -> Option<PathBuf> {
    IMAGE_EXTENSIONS
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

pub fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e))
        .unwrap_or(false)
}
