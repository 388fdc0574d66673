//! Adaptive style distance mapping: find where the perceived style switches
//! and warp the per-frame α schedule so the switch lands mid-sequence.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::perceptual::{style_distance, PerceptualNet};
use crate::pipeline::{ContentInversion, Pipeline, StyleView};
use crate::tensor::Tensor;

pub const DEFAULT_LAMBDA: f64 = 5.0;
pub const DEFAULT_PRESAMPLE_STEPS: usize = 10;

/// Per-frame distances to the two style images.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceCurves {
    d0: Vec<f64>,
    d1: Vec<f64>,
}

impl DistanceCurves {
    pub fn new(d0: Vec<f64>, d1: Vec<f64>) -> Result<Self> {
        if d0.len() != d1.len() || d0.len() < 2 {
            return Err(Error::invalid(format!(
                "distance curves need equal lengths of at least 2, got {} and {}",
                d0.len(),
                d1.len()
            )));
        }
        if d0.iter().chain(&d1).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("distance curves must be finite and non-negative"));
        }
        Ok(Self { d0, d1 })
    }

    /// Style distances of each frame to each style image.
    pub fn measure(net: &PerceptualNet, frames: &[Tensor], style0: &Tensor, style1: &Tensor) -> Result<Self> {
        let p0 = net.extract(style0)?;
        let p1 = net.extract(style1)?;
        let mut d0 = Vec::with_capacity(frames.len());
        let mut d1 = Vec::with_capacity(frames.len());
        for frame in frames {
            let p = net.extract(frame)?;
            d0.push(style_distance(&p, &p0)?);
            d1.push(style_distance(&p, &p1)?);
        }
        Self::new(d0, d1)
    }

    pub fn d0(&self) -> &[f64] {
        &self.d0
    }

    pub fn d1(&self) -> &[f64] {
        &self.d1
    }

    pub fn len(&self) -> usize {
        self.d0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d0.is_empty()
    }
}

/// Per-frame interpolation weights, 0 at the first frame and 1 at the last.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct AlphaSchedule(Vec<f64>);

impl AlphaSchedule {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let bad = |why: &str| Err(Error::invalid(format!("alpha schedule {why}")));
        match values.as_slice() {
            [] => return bad("is empty"),
            [only] => {
                if *only != 0.0 {
                    return bad("of one frame must be [0]");
                }
            }
            [first, .., last] => {
                if *first != 0.0 || *last != 1.0 {
                    return bad("must start at 0 and end at 1");
                }
            }
        }
        if values.windows(2).any(|w| w[1].partial_cmp(&w[0]).is_none_or(|o| o.is_lt())) {
            return bad("must be non-decreasing");
        }
        Ok(Self(values))
    }

    /// `i/(N−1)`; a single frame gets α = 0.
    pub fn linear(n: usize) -> Self {
        if n <= 1 {
            return Self(vec![0.0; n.max(1)]);
        }
        let last = (n - 1) as f64;
        Self((0..n).map(|i| i as f64 / last).collect())
    }

    /// α = 0 before the middle frame, 1 from it on.
    pub fn hard_switch(n: usize) -> Self {
        Self((0..n).map(|i| if 2 * i < n { 0.0 } else { 1.0 }).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Normalized position of the first crossing of `d0 − d1`, or 0.5 if none.
pub fn find_alpha_mid(curves: &DistanceCurves) -> f64 {
    let g: Vec<f64> = curves.d0.iter().zip(&curves.d1).map(|(a, b)| a - b).collect();
    let last = (g.len() - 1) as f64;
    for f in 0..g.len() - 1 {
        let (a, b) = (g[f], g[f + 1]);
        if a != 0.0 && (b == 0.0 || a.signum() != b.signum()) {
            let frac = a / (a - b);
            return ((f as f64 + frac) / last).clamp(0.0, 1.0);
        }
    }
    0.5
}

pub fn smax(alpha_mid: f64, lambda: f64) -> f64 {
    1.0 + lambda * (alpha_mid - 0.5).abs()
}

pub fn build_alpha_schedule(n: usize, alpha_mid: f64, lambda: f64) -> Result<AlphaSchedule> {
    if n < 2 {
        return Err(Error::invalid(format!("schedule needs at least 2 frames, got {n}")));
    }
    if !(0.0..=1.0).contains(&alpha_mid) {
        return Err(Error::invalid(format!("alpha_mid {alpha_mid} outside [0, 1]")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda {lambda} must be finite and non-negative")));
    }
    let s_max = smax(alpha_mid, lambda);
    if s_max == 1.0 {
        return Ok(AlphaSchedule::linear(n));
    }
    let diffs = n - 1;
    let ramp: Vec<f64> = (0..diffs)
        .map(|i| if diffs == 1 { 1.0 } else { 1.0 + (s_max - 1.0) * i as f64 / (diffs - 1) as f64 })
        .collect();
    let step = 1.0 / diffs as f64;
    let mut cumsum = Vec::with_capacity(n);
    cumsum.push(0.0);
    let mut acc = 0.0;
    for k in 0..diffs {
        let scale = if alpha_mid < 0.5 { ramp[k] } else { ramp[diffs - 1 - k] };
        acc += step * scale;
        cumsum.push(acc);
    }
    let total = acc;
    let mut values: Vec<f64> = cumsum.iter().map(|c| c / total).collect();
    values[diffs] = 1.0;
    AlphaSchedule::new(values)
}

/// Denoises the first `presample_steps` steps with a linear schedule, then
/// jumps to the clean-latent estimate and decodes every frame.
pub fn presample(pipeline: &Pipeline, content: &ContentInversion, styles: (StyleView<'_>, StyleView<'_>)) -> Result<Vec<Tensor>> {
    let k = pipeline.config().presample_steps;
    if k == 0 || pipeline.schedule().len() < k {
        return Err(Error::Config(format!(
            "presampling needs {k} denoising steps but the schedule has {}",
            pipeline.schedule().len()
        )));
    }
    let linear = AlphaSchedule::linear(content.latents.len());
    let latents = pipeline.denoise(content, styles, &linear, Some(k))?;
    pipeline.decode_all(&latents)
}
