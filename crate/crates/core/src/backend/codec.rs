//! Lossless image ↔ latent codec.
//!
//! A 2×2 space-to-depth fold turns `[3, H, W]` into 12 channels laid out as
//! `color * 4 + (dy * 2 + dx)`, which are then mixed by a fixed orthonormal
//! matrix: the Kronecker product of an opponent-color basis and a 2×2 Haar basis.
//! Latent channel 0 is therefore the block-average luminance.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const LATENT_CHANNELS: usize = 12;
pub const FACTOR: usize = 2;

#[derive(Clone, Debug)]
pub struct Codec {
    /// Row `o` holds the weights of latent channel `o` over the folded channels.
    mix: [[f64; LATENT_CHANNELS]; LATENT_CHANNELS],
}

impl Default for Codec {
    fn default() -> Self {
        Self::new()
    }
}

impl Codec {
    pub fn new() -> Self {
        let s3 = 3f64.sqrt();
        let s2 = 2f64.sqrt();
        let s6 = 6f64.sqrt();
        let color = [
            [1.0 / s3, 1.0 / s3, 1.0 / s3],
            [1.0 / s2, -1.0 / s2, 0.0],
            [1.0 / s6, 1.0 / s6, -2.0 / s6],
        ];
        let haar = [
            [0.5, 0.5, 0.5, 0.5],
            [0.5, -0.5, 0.5, -0.5],
            [0.5, 0.5, -0.5, -0.5],
            [0.5, -0.5, -0.5, 0.5],
        ];
        let mut mix = [[0.0; LATENT_CHANNELS]; LATENT_CHANNELS];
        for (ci, crow) in color.iter().enumerate() {
            for (pi, prow) in haar.iter().enumerate() {
                for (cj, &cv) in crow.iter().enumerate() {
                    for (pj, &pv) in prow.iter().enumerate() {
                        mix[ci * 4 + pi][cj * 4 + pj] = cv * pv;
                    }
                }
            }
        }
        Self { mix }
    }

    pub fn encode(&self, image: &Tensor) -> Result<Tensor> {
        let (c, h, w) = image.dims3()?;
        if c != 3 {
            return Err(Error::invalid(format!("encode expects 3 color channels, got {c}")));
        }
        if h % FACTOR != 0 || w % FACTOR != 0 {
            return Err(Error::invalid(format!("encode needs even image dims, got {h}x{w}")));
        }
        let (lh, lw) = (h / FACTOR, w / FACTOR);
        let src = image.data();
        let mut out = vec![0.0; LATENT_CHANNELS * lh * lw];
        let mut folded = [0.0; LATENT_CHANNELS];
        for y in 0..lh {
            for x in 0..lw {
                for color in 0..3 {
                    for dy in 0..2 {
                        for dx in 0..2 {
                            folded[color * 4 + dy * 2 + dx] =
                                src[color * h * w + (2 * y + dy) * w + 2 * x + dx];
                        }
                    }
                }
                for (o, row) in self.mix.iter().enumerate() {
                    out[o * lh * lw + y * lw + x] = row.iter().zip(&folded).map(|(a, b)| a * b).sum();
                }
            }
        }
        Ok(Tensor::from_parts(vec![LATENT_CHANNELS, lh, lw], out))
    }

    pub fn decode(&self, latent: &Tensor) -> Result<Tensor> {
        let (c, lh, lw) = latent.dims3()?;
        if c != LATENT_CHANNELS {
            return Err(Error::invalid(format!("decode expects {LATENT_CHANNELS} channels, got {c}")));
        }
        let (h, w) = (lh * FACTOR, lw * FACTOR);
        let src = latent.data();
        let mut out = vec![0.0; 3 * h * w];
        for y in 0..lh {
            for x in 0..lw {
                let mut folded = [0.0; LATENT_CHANNELS];
                for (o, row) in self.mix.iter().enumerate() {
                    let v = src[o * lh * lw + y * lw + x];
                    for (f, m) in folded.iter_mut().zip(row) {
                        *f += m * v;
                    }
                }
                for color in 0..3 {
                    for dy in 0..2 {
                        for dx in 0..2 {
                            out[color * h * w + (2 * y + dy) * w + 2 * x + dx] =
                                folded[color * 4 + dy * 2 + dx];
                        }
                    }
                }
            }
        }
        Ok(Tensor::from_parts(vec![3, h, w], out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn image(seed: u64, h: usize, w: usize) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(vec![3, h, w], (0..3 * h * w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn mixing_matrix_is_orthonormal() {
        let codec = Codec::new();
        for i in 0..LATENT_CHANNELS {
            for j in 0..LATENT_CHANNELS {
                let dot: f64 = (0..LATENT_CHANNELS).map(|k| codec.mix[i][k] * codec.mix[j][k]).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-14, "({i},{j}) = {dot}");
            }
        }
    }

    #[test]
    fn round_trip_is_lossless_and_norm_preserving() {
        let codec = Codec::new();
        let x = image(1, 8, 6);
        let z = codec.encode(&x).unwrap();
        assert_eq!(z.shape(), &[12, 4, 3]);
        assert!((z.l2_norm() - x.l2_norm()).abs() < 1e-10);
        assert!(codec.decode(&z).unwrap().max_abs_diff(&x) < 1e-10);
    }

    #[test]
    fn zero_image_gives_zero_latent() {
        let z = Codec::new().encode(&Tensor::zeros(&[3, 4, 4])).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn color_permutation_commutes_with_round_trip() {
        let codec = Codec::new();
        let x = image(2, 4, 4);
        let plane = 16;
        let perm = [2usize, 0, 1];
        let permute = |t: &Tensor, p: &[usize; 3]| {
            let mut d = vec![0.0; t.len()];
            for (dst, &src) in p.iter().enumerate() {
                d[dst * plane..(dst + 1) * plane].copy_from_slice(&t.data()[src * plane..(src + 1) * plane]);
            }
            Tensor::new(t.shape().to_vec(), d).unwrap()
        };
        let inverse = [1usize, 2, 0];
        let back = permute(&codec.decode(&codec.encode(&permute(&x, &perm)).unwrap()).unwrap(), &inverse);
        assert!(back.max_abs_diff(&x) < 1e-10);
    }

    #[test]
    fn rejects_odd_or_wrong_inputs() {
        let codec = Codec::new();
        assert!(codec.encode(&Tensor::zeros(&[3, 5, 4])).is_err());
        assert!(codec.encode(&Tensor::zeros(&[1, 4, 4])).is_err());
        assert!(codec.decode(&Tensor::zeros(&[4, 2, 2])).is_err());
    }
}
