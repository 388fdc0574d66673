//! Variance schedule and deterministic (η = 0) DDIM steps.
//!
//! Timesteps are signed: `CLEAN` (−1) stands for the noise-free sample and
//! has `ᾱ = 1`. The last denoising step of a run goes from `timesteps[S−1]`
//! (= 0) to `CLEAN`, and inversion starts there.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub type Timestep = i64;

/// Timestep of the clean sample.
pub const CLEAN: Timestep = -1;

pub const DEFAULT_TRAIN_STEPS: usize = 1000;
pub const DEFAULT_SAMPLING_STEPS: usize = 50;
pub const BETA_START: f64 = 0.00085;
pub const BETA_END: f64 = 0.012;

#[derive(Clone, Debug)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
    /// Sampling subsequence in denoising order (strictly decreasing).
    timesteps: Vec<Timestep>,
}

impl NoiseSchedule {
    /// `train_steps` betas spaced linearly in √β between `BETA_START` and
    /// `BETA_END`, sampled every `train_steps / sampling_steps` indices.
    pub fn new(train_steps: usize, sampling_steps: usize) -> Result<Self> {
        if sampling_steps == 0 || sampling_steps > train_steps {
            return Err(Error::invalid(format!(
                "need 1 <= sampling steps ({sampling_steps}) <= train steps ({train_steps})"
            )));
        }
        let (lo, hi) = (BETA_START.sqrt(), BETA_END.sqrt());
        let betas: Vec<f64> = (0..train_steps)
            .map(|i| {
                let f = if train_steps == 1 { 0.0 } else { i as f64 / (train_steps - 1) as f64 };
                let s = lo + (hi - lo) * f;
                s * s
            })
            .collect();
        let mut alpha_bars = Vec::with_capacity(train_steps);
        let mut acc = 1.0;
        for beta in &betas {
            acc *= 1.0 - beta;
            alpha_bars.push(acc);
        }
        let stride = train_steps / sampling_steps;
        let timesteps = (0..sampling_steps).rev().map(|i| (i * stride) as Timestep).collect();
        Ok(Self { betas, alpha_bars, timesteps })
    }

    pub fn train_steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn timesteps(&self) -> &[Timestep] {
        &self.timesteps
    }

    pub fn len(&self) -> usize {
        self.timesteps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timesteps.is_empty()
    }

    /// The timestep a denoising step at `index` lands on.
    pub fn prev_timestep(&self, index: usize) -> Timestep {
        self.timesteps.get(index + 1).copied().unwrap_or(CLEAN)
    }

    /// `ᾱ_t`, with `ᾱ = 1` for `CLEAN`.
    pub fn alpha_bar(&self, t: Timestep) -> Result<f64> {
        if t < 0 {
            return Ok(1.0);
        }
        self.alpha_bars
            .get(t as usize)
            .copied()
            .ok_or_else(|| Error::invalid(format!("timestep {t} outside [0, {})", self.train_steps())))
    }

    /// One deterministic DDIM step from `t` down to `t_prev`.
    pub fn denoise_step(&self, z_t: &Tensor, eps: &Tensor, t: Timestep, t_prev: Timestep) -> Result<Tensor> {
        if t <= t_prev {
            return Err(Error::invalid(format!("denoise step needs t > t_prev, got {t} -> {t_prev}")));
        }
        self.transfer(z_t, eps, t, t_prev)
    }

    /// Inverse of [`denoise_step`](Self::denoise_step): from `t_prev` up to `t`.
    pub fn invert_step(&self, z_prev: &Tensor, eps: &Tensor, t_prev: Timestep, t: Timestep) -> Result<Tensor> {
        if t <= t_prev {
            return Err(Error::invalid(format!("inversion step needs t > t_prev, got {t_prev} -> {t}")));
        }
        self.transfer(z_prev, eps, t_prev, t)
    }

    /// `z0 = (z_t − √(1−ᾱ_t)·eps) / √ᾱ_t`.
    pub fn predict_z0(&self, z_t: &Tensor, eps: &Tensor, t: Timestep) -> Result<Tensor> {
        let a = self.alpha_bar(t)?;
        z_t.linear_combination(1.0 / a.sqrt(), eps, -(1.0 - a).sqrt() / a.sqrt())
    }

    // Both directions share one formula: predict z0 at `from`, re-noise to `to`.
    fn transfer(&self, z: &Tensor, eps: &Tensor, from: Timestep, to: Timestep) -> Result<Tensor> {
        let a_from = self.alpha_bar(from)?;
        let a_to = self.alpha_bar(to)?;
        let ratio = (a_to / a_from).sqrt();
        let eps_coef = (1.0 - a_to).sqrt() - ratio * (1.0 - a_from).sqrt();
        z.linear_combination(ratio, eps, eps_coef)
    }
}
