//! Max-flow/min-cut lesion segmentation.
//!
//! Each pixel is a node on a 4-connected grid. Terminal arcs come from a
//! two-class Gaussian intensity model seeded by Otsu's threshold; neighbour
//! arcs penalize label changes between similar intensities. The source side
//! of the minimum cut is the lesion.

mod flow;

use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::colorspace;
use crate::mask::BinaryMask;

pub use flow::{FlowNetwork, MaxFlow, EPS};

/// Lower bound on a fitted class standard deviation, in intensity units.
pub const MIN_CLASS_STD: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum GraphCutError {
    #[error("image has a single intensity level; no foreground/background split exists")]
    DegenerateImage,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphCutParams {
    /// Weight of the neighbour (smoothness) arcs.
    pub lambda: f64,
    /// Intensity scale of the neighbour-arc falloff.
    pub sigma: f64,
    /// Treat the brighter class as the lesion.
    pub invert: bool,
}

impl Default for GraphCutParams {
    fn default() -> Self {
        Self {
            lambda: 50.0,
            sigma: 10.0,
            invert: false,
        }
    }
}

impl GraphCutParams {
    pub fn validate(&self) -> Result<(), GraphCutError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(GraphCutError::InvalidParams("lambda must be finite and nonnegative".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(GraphCutError::InvalidParams("sigma must be positive".into()));
        }
        Ok(())
    }
}

/// Gaussian fit of one intensity class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassModel {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl ClassModel {
    /// Negative log-likelihood up to a shared constant.
    pub fn cost(&self, v: f64) -> f64 {
        self.std.ln() + (v - self.mean).powi(2) / (2.0 * self.std * self.std)
    }
}

#[derive(Debug, Clone)]
pub struct LesionGraph {
    pub width: u32,
    pub height: u32,
    pub network: FlowNetwork,
    pub threshold: u8,
    pub lesion: ClassModel,
    pub background: ClassModel,
}

/// Otsu's threshold: pixels `<= t` form the lower class. Returns `None` when
/// the histogram has a single occupied level.
pub fn otsu_threshold(gray: &GrayImage) -> Option<u8> {
    let mut hist = [0u64; 256];
    for &v in gray.as_raw() {
        hist[v as usize] += 1;
    }
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return None;
    }
    let total: u64 = hist.iter().sum();
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0u64, 0.0f64);
    let mut best = (f64::NEG_INFINITY, 0u8);
    for t in 0..255usize {
        w0 += hist[t];
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let m0 = sum0 / w0 as f64;
        let m1 = (sum_all - sum0) / w1 as f64;
        let between = w0 as f64 * w1 as f64 * (m0 - m1).powi(2);
        if between > best.0 {
            best = (between, t as u8);
        }
    }
    Some(best.1)
}

fn fit(values: impl Iterator<Item = f64>) -> ClassModel {
    let (mut n, mut s, mut s2) = (0usize, 0.0, 0.0);
    for v in values {
        n += 1;
        s += v;
        s2 += v * v;
    }
    let mean = s / n as f64;
    let var = (s2 / n as f64 - mean * mean).max(0.0);
    ClassModel {
        mean,
        std: var.sqrt().max(MIN_CLASS_STD),
        count: n,
    }
}

pub fn build_lesion_graph(gray: &GrayImage, params: &GraphCutParams) -> Result<LesionGraph, GraphCutError> {
    params.validate()?;
    let threshold = otsu_threshold(gray).ok_or(GraphCutError::DegenerateImage)?;
    let px = gray.as_raw();
    let dark = fit(px.iter().filter(|&&v| v <= threshold).map(|&v| v as f64));
    let bright = fit(px.iter().filter(|&&v| v > threshold).map(|&v| v as f64));
    let (lesion, background) = if params.invert { (bright, dark) } else { (dark, bright) };

    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let n = w * h;
    let (source, sink) = (n, n + 1);
    let mut net = FlowNetwork::with_capacity(n + 2, source, sink, 3 * n);
    let inv_2s2 = 1.0 / (2.0 * params.sigma * params.sigma);

    for (i, &v) in px.iter().enumerate() {
        let v = v as f64;
        // Source side = lesion, so the arc into the sink carries the cost of
        // the lesion label and the arc from the source that of background.
        let d = background.cost(v) - lesion.cost(v);
        if d > 0.0 {
            net.add_arc(source, i, d);
        } else if d < 0.0 {
            net.add_arc(i, sink, -d);
        }
    }
    let link = |a: u8, b: u8| params.lambda * (-((a as f64 - b as f64).powi(2)) * inv_2s2).exp();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                let c = link(px[i], px[i + 1]);
                net.add_arc_pair(i, i + 1, c, c);
            }
            if y + 1 < h {
                let c = link(px[i], px[i + w]);
                net.add_arc_pair(i, i + w, c, c);
            }
        }
    }
    Ok(LesionGraph {
        width: gray.width(),
        height: gray.height(),
        network: net,
        threshold,
        lesion,
        background,
    })
}

pub fn segment_gray(gray: &GrayImage, params: &GraphCutParams) -> Result<BinaryMask, GraphCutError> {
    let mut graph = build_lesion_graph(gray, params)?;
    let cut = graph.network.max_flow();
    let n = (graph.width * graph.height) as usize;
    Ok(BinaryMask::from_bits(
        graph.width,
        graph.height,
        cut.source_side[..n].to_vec(),
    ))
}

/// BT.601 luma, lesion graph, max-flow; source-side pixels are the lesion.
pub fn segment_maxflow(image: &RgbImage, params: &GraphCutParams) -> Result<BinaryMask, GraphCutError> {
    segment_gray(&colorspace::luma(image), params)
}
