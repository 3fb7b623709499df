use image::{Rgb, RgbImage};

/// Bilinear resampling with pixel-centre alignment and edge clamping.
/// Resizing to the same dimensions is the identity.
pub fn resize_bilinear(image: &RgbImage, width: u32, height: u32) -> RgbImage {
    let (sw, sh) = image.dimensions();
    if (sw, sh) == (width, height) {
        return image.clone();
    }
    let xs = axis_samples(sw, width);
    let ys = axis_samples(sh, height);
    let src = image.as_raw();
    let stride = sw as usize * 3;
    let mut out = RgbImage::new(width, height);
    for (y, &(y0, y1, fy)) in ys.iter().enumerate() {
        for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
            let mut px = [0u8; 3];
            for (c, v) in px.iter_mut().enumerate() {
                let p = |xx: usize, yy: usize| src[yy * stride + xx * 3 + c] as f32;
                let top = p(x0, y0) + fx * (p(x1, y0) - p(x0, y0));
                let bottom = p(x0, y1) + fx * (p(x1, y1) - p(x0, y1));
                *v = (top + fy * (bottom - top)).round().clamp(0.0, 255.0) as u8;
            }
            out.put_pixel(x as u32, y as u32, Rgb(px));
        }
    }
    out
}

fn axis_samples(src: u32, dst: u32) -> Vec<(usize, usize, f32)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src as usize - 1);
            (i0, i1, (s - i0 as f64) as f32)
        })
        .collect()
}

/// Crops a `width`×`height` window whose top-left corner is (`x`, `y`).
pub fn crop(image: &RgbImage, x: u32, y: u32, width: u32, height: u32) -> RgbImage {
    image::imageops::crop_imm(image, x, y, width, height).to_image()
}

pub fn center_crop(image: &RgbImage, size: u32) -> RgbImage {
    let (w, h) = image.dimensions();
    let size_w = size.min(w);
    let size_h = size.min(h);
    crop(image, (w - size_w) / 2, (h - size_h) / 2, size_w, size_h)
}
