use image::GrayImage;

use super::SynthValError;

pub const SSIM_WINDOW: u32 = 8;
pub const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
pub const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

struct Sat {
    stride: usize,
    data: Vec<f64>,
}

impl Sat {
    fn new(w: usize, h: usize, f: impl Fn(usize) -> f64) -> Self {
        let stride = w + 1;
        let mut data = vec![0.0; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += f(y * w + x);
                data[(y + 1) * stride + x + 1] = data[y * stride + x + 1] + row;
            }
        }
        Self { stride, data }
    }

    fn window(&self, x: usize, y: usize, w: usize, h: usize) -> f64 {
        let s = self.stride;
        self.data[(y + h) * s + x + w] - self.data[y * s + x + w] - self.data[(y + h) * s + x]
            + self.data[y * s + x]
    }
}

/// Mean SSIM over all stride-1 8×8 windows (shrunk to the image size when
/// smaller), using population statistics within each window.
pub fn ssim(a: &GrayImage, b: &GrayImage) -> Result<f64, SynthValError> {
    if a.dimensions() != b.dimensions() {
        return Err(SynthValError::DimensionMismatch {
            left: a.dimensions(),
            right: b.dimensions(),
        });
    }
    let (w, h) = (a.width() as usize, a.height() as usize);
    if w == 0 || h == 0 {
        return Err(SynthValError::DimensionMismatch {
            left: a.dimensions(),
            right: b.dimensions(),
        });
    }
    let (pa, pb) = (a.as_raw(), b.as_raw());
    let fa = |i: usize| pa[i] as f64;
    let fb = |i: usize| pb[i] as f64;
    let sa = Sat::new(w, h, fa);
    let sb = Sat::new(w, h, fb);
    let saa = Sat::new(w, h, |i| fa(i) * fa(i));
    let sbb = Sat::new(w, h, |i| fb(i) * fb(i));
    let sab = Sat::new(w, h, |i| fa(i) * fb(i));

    let ww = (SSIM_WINDOW as usize).min(w);
    let wh = (SSIM_WINDOW as usize).min(h);
    let n = (ww * wh) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for y in 0..=h - wh {
        for x in 0..=w - ww {
            let ma = sa.window(x, y, ww, wh) / n;
            let mb = sb.window(x, y, ww, wh) / n;
            let va = (saa.window(x, y, ww, wh) / n - ma * ma).max(0.0);
            let vb = (sbb.window(x, y, ww, wh) / n - mb * mb).max(0.0);
            let cov = sab.window(x, y, ww, wh) / n - ma * mb;
            total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2))
                / ((ma * ma + mb * mb + C1) * (va + vb + C2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}
