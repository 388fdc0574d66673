//! Fixed-seed convolutional feature pyramid and the evaluation metrics built
//! on it. The pyramid is three stride-2 3×3 convolutions with zero bias and
//! ReLU (3 → 8 → 16 → 32 channels); it fills the role a pretrained
//! classifier backbone plays in perceptual metrics, so absolute values are
//! only comparable between runs of this crate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::asdm::AlphaSchedule;
use crate::error::{Error, Result};
use crate::tensor::{channel_stats, Tensor};

pub const LEVEL_CHANNELS: [usize; 3] = [8, 16, 32];
pub const DEFAULT_SEED: u64 = 16;

#[derive(Clone, Debug)]
pub struct FeaturePyramid {
    pub levels: Vec<Tensor>,
}

impl FeaturePyramid {
    fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.levels.iter().flat_map(|l| l.data().iter().copied())
    }

    /// L2 distance between the concatenated levels of two pyramids.
    pub fn flat_distance(&self, other: &FeaturePyramid) -> Result<f64> {
        if self.levels.iter().zip(&other.levels).any(|(a, b)| a.shape() != b.shape()) {
            return Err(Error::invalid("pyramids come from images of different sizes"));
        }
        Ok(self.flat().zip(other.flat()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
    }

    /// Global average of the last level.
    pub fn pooled(&self) -> Vec<f64> {
        let stats = channel_stats(self.levels.last().expect("three levels")).expect("rank 3");
        stats.mean
    }
}

#[derive(Clone, Debug)]
pub struct PerceptualNet {
    /// `[out, in, 3, 3]` kernels per level.
    kernels: Vec<Tensor>,
}

impl PerceptualNet {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c_in = 3;
        let kernels = LEVEL_CHANNELS
            .iter()
            .map(|&c_out| {
                let std = (2.0 / (9 * c_in) as f64).sqrt();
                let data = (0..c_out * c_in * 9).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect();
                let k = Tensor::from_parts(vec![c_out, c_in, 3, 3], data);
                c_in = c_out;
                k
            })
            .collect();
        Self { kernels }
    }

    pub fn extract(&self, image: &Tensor) -> Result<FeaturePyramid> {
        let (c, h, w) = image.dims3()?;
        if c != 3 || h % 8 != 0 || w % 8 != 0 {
            return Err(Error::invalid(format!("feature extraction needs [3, 8k, 8m] images, got {:?}", image.shape())));
        }
        let mut levels = Vec::with_capacity(self.kernels.len());
        let mut current = image.clone();
        for k in &self.kernels {
            current = conv3x3_stride2_relu(&current, k);
            levels.push(current.clone());
        }
        Ok(FeaturePyramid { levels })
    }
}

fn conv3x3_stride2_relu(x: &Tensor, kernel: &Tensor) -> Tensor {
    let (c_in, h, w) = x.dims3().expect("rank 3");
    let c_out = kernel.shape()[0];
    let (oh, ow) = (h / 2, w / 2);
    let src = x.data();
    let k = kernel.data();
    let mut out = vec![0.0; c_out * oh * ow];
    for o in 0..c_out {
        for y in 0..oh {
            for xo in 0..ow {
                let mut acc = 0.0;
                for ci in 0..c_in {
                    for ky in 0..3 {
                        let iy = (2 * y + ky) as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = (2 * xo + kx) as isize - 1;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += k[((o * c_in + ci) * 3 + ky) * 3 + kx] * src[(ci * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
                out[(o * oh + y) * ow + xo] = acc.max(0.0);
            }
        }
    }
    Tensor::from_parts(vec![c_out, oh, ow], out)
}

/// `Σ_levels ‖μ_a − μ_b‖₂ + ‖σ_a − σ_b‖₂` over per-channel statistics.
pub fn style_distance(a: &FeaturePyramid, b: &FeaturePyramid) -> Result<f64> {
    if a.levels.len() != b.levels.len() {
        return Err(Error::invalid("pyramids have different depths"));
    }
    let mut total = 0.0;
    for (la, lb) in a.levels.iter().zip(&b.levels) {
        let (sa, sb) = (channel_stats(la)?, channel_stats(lb)?);
        if sa.channels() != sb.channels() {
            return Err(Error::invalid("pyramid levels differ in width"));
        }
        total += l2(&sa.mean, &sb.mean) + l2(&sa.std, &sb.std);
    }
    Ok(total)
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `F·Fᵀ / (C·H·W)` for a `[C,H,W]` feature map.
pub fn gram(features: &Tensor) -> Result<Tensor> {
    let (c, h, w) = features.dims3()?;
    let f = Tensor::from_parts(vec![c, h * w], features.data().to_vec());
    Ok(f.matmul_t(&f)?.scale(1.0 / (c * h * w) as f64))
}

fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    let d = a.sub(b)?;
    Ok(d.data().iter().map(|v| v * v).sum::<f64>() / d.len() as f64)
}

/// Flattened-pyramid distances between consecutive frames.
pub fn adjacent_distances(frames: &[FeaturePyramid]) -> Result<Vec<f64>> {
    frames.windows(2).map(|w| w[0].flat_distance(&w[1])).collect()
}

/// Path length: sum of adjacent-frame feature distances.
pub fn ppl(frames: &[FeaturePyramid]) -> Result<f64> {
    Ok(adjacent_distances(frames)?.iter().sum())
}

/// Population standard deviation of the adjacent-frame distances.
pub fn pdv(frames: &[FeaturePyramid]) -> Result<f64> {
    let d = adjacent_distances(frames)?;
    if d.len() < 2 {
        return Ok(0.0);
    }
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    Ok((d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d.len() as f64).sqrt())
}

/// Mean over frames of `(1−α)·MSE(G, G_s0) + α·MSE(G, G_s1)`, summed over levels.
pub fn style_loss(
    frames: &[FeaturePyramid],
    style0: &FeaturePyramid,
    style1: &FeaturePyramid,
    schedule: &AlphaSchedule,
) -> Result<f64> {
    if frames.len() != schedule.len() {
        return Err(Error::invalid(format!("{} frames but {} alphas", frames.len(), schedule.len())));
    }
    if frames.is_empty() {
        return Ok(0.0);
    }
    let g0: Vec<Tensor> = style0.levels.iter().map(gram).collect::<Result<_>>()?;
    let g1: Vec<Tensor> = style1.levels.iter().map(gram).collect::<Result<_>>()?;
    let mut total = 0.0;
    for (frame, &alpha) in frames.iter().zip(schedule.values()) {
        for (level, feat) in frame.levels.iter().enumerate() {
            let g = gram(feat)?;
            total += (1.0 - alpha) * mse(&g, &g0[level])? + alpha * mse(&g, &g1[level])?;
        }
    }
    Ok(total / frames.len() as f64)
}

/// Mean per-frame flattened-pyramid distance between generated and source frames.
pub fn structure_distance(generated: &[FeaturePyramid], source: &[FeaturePyramid]) -> Result<f64> {
    if generated.len() != source.len() || generated.is_empty() {
        return Err(Error::invalid(format!(
            "structure distance needs equal non-empty sequences, got {} and {}",
            generated.len(),
            source.len()
        )));
    }
    let sum: f64 = generated.iter().zip(source).map(|(g, s)| g.flat_distance(s)).sum::<Result<f64>>()?;
    Ok(sum / generated.len() as f64)
}

/// Cosine similarity; two zero vectors count as identical, one zero vector as unrelated.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    match (na == 0.0, nb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => (a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)).clamp(-1.0, 1.0),
    }
}

/// Mean cosine similarity of adjacent pooled embeddings.
pub fn frame_similarity(frames: &[FeaturePyramid]) -> f64 {
    if frames.len() < 2 {
        return 1.0;
    }
    let pooled: Vec<Vec<f64>> = frames.iter().map(FeaturePyramid::pooled).collect();
    pooled.windows(2).map(|w| cosine(&w[0], &w[1])).sum::<f64>() / (frames.len() - 1) as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub ppl: f64,
    pub pdv: f64,
    pub style_loss: f64,
    pub structure_distance: f64,
    pub frame_similarity: f64,
}

impl PerceptualNet {
    pub fn extract_all(&self, images: &[Tensor]) -> Result<Vec<FeaturePyramid>> {
        images.iter().map(|im| self.extract(im)).collect()
    }

    /// All five metrics for a generated sequence against its source and styles.
    pub fn evaluate(
        &self,
        generated: &[Tensor],
        source: &[Tensor],
        style0: &Tensor,
        style1: &Tensor,
        schedule: &AlphaSchedule,
    ) -> Result<Metrics> {
        let gen = self.extract_all(generated)?;
        let src = self.extract_all(source)?;
        let (s0, s1) = (self.extract(style0)?, self.extract(style1)?);
        Ok(Metrics {
            ppl: ppl(&gen)?,
            pdv: pdv(&gen)?,
            style_loss: style_loss(&gen, &s0, &s1, schedule)?,
            structure_distance: structure_distance(&gen, &src)?,
            frame_similarity: frame_similarity(&gen),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(seed: u64, size: usize) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(vec![3, size, size], (0..3 * size * size).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn pyramid_from(levels: Vec<Vec<f64>>) -> FeaturePyramid {
        FeaturePyramid {
            levels: levels.into_iter().map(|d| Tensor::new(vec![1, 1, d.len()], d).unwrap()).collect(),
        }
    }

    #[test]
    fn extraction_is_deterministic_with_halving_levels() {
        let net = PerceptualNet::new(DEFAULT_SEED);
        let x = image(1, 64);
        let a = net.extract(&x).unwrap();
        let b = PerceptualNet::new(DEFAULT_SEED).extract(&x).unwrap();
        let shapes: Vec<_> = a.levels.iter().map(|l| l.shape().to_vec()).collect();
        assert_eq!(shapes, vec![vec![8, 32, 32], vec![16, 16, 16], vec![32, 8, 8]]);
        for (p, q) in a.levels.iter().zip(&b.levels) {
            assert!(p.bits_eq(q));
        }
    }

    #[test]
    fn zero_image_gives_zero_features() {
        let f = PerceptualNet::new(1).extract(&Tensor::zeros(&[3, 16, 16])).unwrap();
        assert!(f.levels.iter().all(|l| l.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn rejects_bad_dims() {
        let net = PerceptualNet::new(1);
        assert!(net.extract(&Tensor::zeros(&[3, 12, 16])).is_err());
        assert!(net.extract(&Tensor::zeros(&[1, 16, 16])).is_err());
    }

    #[test]
    fn style_distance_basics() {
        let net = PerceptualNet::new(3);
        let a = net.extract(&image(1, 16)).unwrap();
        let b = net.extract(&image(2, 16)).unwrap();
        assert_eq!(style_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(style_distance(&a, &b).unwrap(), style_distance(&b, &a).unwrap());
        assert!(style_distance(&a, &b).unwrap() > 0.0);
    }

    #[test]
    fn style_distance_hand_computed() {
        // Level 1: values {0, 2} vs {1, 1}: means 1 vs 1, stds 1 vs 0 → 1.
        // Level 2: {3} vs {0}: means differ by 3, stds 0 → 3.
        let a = pyramid_from(vec![vec![0.0, 2.0], vec![3.0]]);
        let b = pyramid_from(vec![vec![1.0, 1.0], vec![0.0]]);
        assert!((style_distance(&a, &b).unwrap() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn path_metrics_hand_computed() {
        let f = |v: f64| pyramid_from(vec![vec![v, 0.0]]);
        let frames = [f(0.0), f(1.0), f(4.0)];
        assert_eq!(adjacent_distances(&frames).unwrap(), vec![1.0, 3.0]);
        assert_eq!(ppl(&frames).unwrap(), 4.0);
        assert_eq!(pdv(&frames).unwrap(), 1.0);
        assert_eq!(ppl(&frames[..2]).unwrap(), 1.0);
        assert_eq!(pdv(&frames[..2]).unwrap(), 0.0);
        let constant_steps = [f(0.0), f(2.0), f(4.0), f(6.0)];
        assert_eq!(pdv(&constant_steps).unwrap(), 0.0);
        let same = [f(3.0), f(3.0), f(3.0)];
        assert_eq!(ppl(&same).unwrap(), 0.0);
    }

    #[test]
    fn dropping_a_collinear_frame_never_increases_ppl() {
        let f = |v: f64| pyramid_from(vec![vec![v, 2.0 * v, -v]]);
        let all = [f(0.0), f(0.3), f(1.1), f(2.0)];
        let full = ppl(&all).unwrap();
        for skip in 1..3 {
            let fewer: Vec<_> = all.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, p)| p.clone()).collect();
            assert!(ppl(&fewer).unwrap() <= full + 1e-12);
        }
    }

    #[test]
    fn gram_is_symmetric_psd() {
        let net = PerceptualNet::new(4);
        let p = net.extract(&image(5, 32)).unwrap();
        for level in &p.levels {
            let g = gram(level).unwrap();
            let (c, _) = g.dims2().unwrap();
            for i in 0..c {
                for j in 0..c {
                    assert_eq!(g.data()[i * c + j], g.data()[j * c + i]);
                }
            }
            // xᵀGx ≥ 0 on a spread of probe vectors.
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            for _ in 0..50 {
                let x: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
                let q: f64 = (0..c).map(|i| (0..c).map(|j| x[i] * g.data()[i * c + j] * x[j]).sum::<f64>()).sum();
                assert!(q >= -1e-10);
            }
        }
    }

    #[test]
    fn gram_hand_computed() {
        let f = Tensor::new(vec![1, 1, 2], vec![1.0, 3.0]).unwrap();
        assert_eq!(gram(&f).unwrap().data(), &[5.0]);
    }

    #[test]
    fn style_loss_zero_at_endpoints_and_hand_checked() {
        let s0 = pyramid_from(vec![vec![1.0, 3.0]]);
        let s1 = pyramid_from(vec![vec![2.0, 2.0]]);
        let sched = AlphaSchedule::linear(2);
        assert_eq!(style_loss(&[s0.clone(), s1.clone()], &s0, &s1, &sched).unwrap(), 0.0);
        // Gram(s0)=5, Gram(s1)=4; frame 0 is s1 at α=0 → (4−5)² = 1, frame 1 is s0 at α=1 → 1.
        assert_eq!(style_loss(&[s1.clone(), s0.clone()], &s0, &s1, &sched).unwrap(), 1.0);
    }

    #[test]
    fn structure_distance_basics() {
        let a = [pyramid_from(vec![vec![0.0, 0.0]]), pyramid_from(vec![vec![1.0, 1.0]])];
        let b = [pyramid_from(vec![vec![3.0, 4.0]]), pyramid_from(vec![vec![1.0, 1.0]])];
        assert_eq!(structure_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(structure_distance(&a, &b).unwrap(), structure_distance(&b, &a).unwrap());
        assert_eq!(structure_distance(&a, &b).unwrap(), 2.5);
        assert!(structure_distance(&a, &b[..1]).is_err());
    }

    #[test]
    fn frame_similarity_cases() {
        let p = |v: Vec<f64>| pyramid_from(vec![vec![0.0], vec![0.0], v]);
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 1.0]), 1.0 / 2f64.sqrt());
        assert!((cosine(&[2.0, -1.0], &[-4.0, 2.0]) + 1.0).abs() < 1e-15);
        let same = [p(vec![1.0]), p(vec![1.0]), p(vec![1.0])];
        assert_eq!(frame_similarity(&same), 1.0);
        let flip = [p(vec![1.0]), p(vec![-1.0])];
        assert_eq!(frame_similarity(&flip), -1.0);
    }
}
