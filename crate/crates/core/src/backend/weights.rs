use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tensor::Tensor;

/// Power-iteration count used when normalising weight matrices.
pub const SPECTRAL_ITERS: usize = 8;

#[derive(Clone, Debug)]
pub struct AttentionWeights {
    pub query: Tensor,
    pub key: Tensor,
    pub value: Tensor,
    pub output: Tensor,
}

/// Every parameter of the toy denoiser, regenerated from `seed` on demand.
#[derive(Clone, Debug)]
pub struct DenoiserWeights {
    pub seed: u64,
    pub input: Tensor,
    pub attention: Vec<AttentionWeights>,
    pub mixing: Vec<Tensor>,
    /// `[train_steps, hidden]` sinusoidal rows added after the input projection.
    pub time_embedding: Tensor,
    pub output: Tensor,
}

impl DenoiserWeights {
    pub fn generate(
        seed: u64,
        token_dim: usize,
        hidden: usize,
        head_dim: usize,
        layers: usize,
        train_steps: usize,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = spectral_gaussian(&mut rng, token_dim, hidden);
        let mut attention = Vec::with_capacity(layers);
        let mut mixing = Vec::with_capacity(layers);
        for _ in 0..layers {
            attention.push(AttentionWeights {
                query: spectral_gaussian(&mut rng, hidden, head_dim),
                key: spectral_gaussian(&mut rng, hidden, head_dim),
                value: spectral_gaussian(&mut rng, hidden, head_dim),
                output: spectral_gaussian(&mut rng, head_dim, hidden),
            });
            mixing.push(spectral_gaussian(&mut rng, hidden, hidden));
        }
        let output = spectral_gaussian(&mut rng, hidden, token_dim);
        Self { seed, input, attention, mixing, time_embedding: sinusoidal_table(train_steps, hidden), output }
    }

    /// All weight matrices, in a fixed order.
    pub fn matrices(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.input];
        for (a, m) in self.attention.iter().zip(&self.mixing) {
            out.extend([&a.query, &a.key, &a.value, &a.output, m]);
        }
        out.push(&self.output);
        out
    }
}

fn spectral_gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let m = Tensor::from_parts(vec![rows, cols], data);
    let sigma = spectral_norm(&m, SPECTRAL_ITERS);
    m.scale(1.0 / sigma)
}

/// Largest singular value estimated by power iteration on `MᵀM`.
pub fn spectral_norm(m: &Tensor, iters: usize) -> f64 {
    let (_, cols) = m.dims2().expect("matrix");
    // Deterministic non-degenerate start vector.
    let mut v = Tensor::from_parts(vec![cols, 1], (0..cols).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect());
    let mut sigma = 0.0;
    for _ in 0..iters.max(1) {
        let n = v.l2_norm();
        v = v.scale(1.0 / n);
        let u = m.matmul(&v).expect("shapes");
        sigma = u.l2_norm();
        v = m.transpose().expect("matrix").matmul(&u).expect("shapes");
    }
    sigma
}

fn sinusoidal_table(rows: usize, dim: usize) -> Tensor {
    let half = dim / 2;
    let mut data = vec![0.0; rows * dim];
    for t in 0..rows {
        for k in 0..half {
            let freq = (-(10_000f64.ln()) * k as f64 / half as f64).exp();
            let angle = t as f64 * freq;
            data[t * dim + 2 * k] = angle.sin();
            data[t * dim + 2 * k + 1] = angle.cos();
        }
    }
    Tensor::from_parts(vec![rows, dim], data)
}
