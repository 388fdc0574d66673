//! Synthetic inputs for the desk benchmark: a short clip of a disc sliding
//! across a gradient, and two high-contrast style images.

use crate::tensor::Tensor;

fn image(h: usize, w: usize, pixel: impl Fn(f64, f64) -> [f64; 3]) -> Tensor {
    let mut data = vec![0.0; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            let rgb = pixel(y as f64 / h as f64, x as f64 / w as f64);
            for c in 0..3 {
                data[(c * h + y) * w + x] = rgb[c].clamp(-1.0, 1.0);
            }
        }
    }
    Tensor::new(vec![3, h, w], data).expect("finite pixels")
}

/// `frames` frames of a bright disc moving left to right over a soft
/// gradient, with a static dark bar for structure.
pub fn moving_disc_video(frames: usize, size: usize) -> Vec<Tensor> {
    (0..frames)
        .map(|i| {
            let progress = if frames > 1 { i as f64 / (frames - 1) as f64 } else { 0.5 };
            let cx = 0.25 + 0.5 * progress;
            image(size, size, move |y, x| {
                let base = [-0.4 + 0.5 * x, -0.2 + 0.4 * y, 0.3 - 0.4 * x];
                let r2 = (x - cx).powi(2) + (y - 0.45).powi(2);
                if r2 < 0.16 * 0.16 {
                    [0.9, 0.8, 0.2]
                } else if (0.75..0.85).contains(&y) && (0.1..0.9).contains(&x) {
                    [-0.8, -0.8, -0.7]
                } else {
                    base
                }
            })
        })
        .collect()
}

/// Warm diagonal stripes.
pub fn warm_stripes(size: usize) -> Tensor {
    image(size, size, |y, x| {
        let phase = ((x + y) * 6.0).fract();
        if phase < 0.5 {
            [0.95, 0.3, -0.6]
        } else {
            [0.4, -0.5, -0.9]
        }
    })
}

/// Cool checkerboard.
pub fn cool_checks(size: usize) -> Tensor {
    image(size, size, |y, x| {
        let on = ((x * 8.0) as usize + (y * 8.0) as usize).is_multiple_of(2);
        if on {
            [-0.9, 0.2, 0.95]
        } else {
            [-0.6, 0.85, 0.6]
        }
    })
}
