//! Dual-style latent AdaIN.
//!
//! Style statistics are tracked along each style image's inversion trajectory
//! and blended by the frame's α before re-targeting the content latent.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::Timestep;
use crate::tensor::{channel_stats, lerp, lerp_scalar, ChannelStats, Tensor};

pub const DEFAULT_EPS: f64 = 1e-5;

/// Where the blended target statistics come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdainSource {
    /// Interpolate the two styles' means and standard deviations.
    #[default]
    Statistics,
    /// Interpolate the two style latents, then measure the blend.
    LatentBlend,
}

/// Statistics (and the latent they came from) of one style image at every
/// tracked timestep.
#[derive(Clone, Debug, Default)]
pub struct StatTrack {
    entries: BTreeMap<Timestep, (ChannelStats, Tensor)>,
}

impl StatTrack {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, t: Timestep, latent: &Tensor) -> Result<()> {
        self.entries.insert(t, (channel_stats(latent)?, latent.clone()));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn timesteps(&self) -> impl Iterator<Item = Timestep> + '_ {
        self.entries.keys().copied()
    }

    pub fn stats(&self, t: Timestep) -> Result<&ChannelStats> {
        self.entries.get(&t).map(|e| &e.0).ok_or(Error::MissingStats(t))
    }

    pub fn latent(&self, t: Timestep) -> Result<&Tensor> {
        self.entries.get(&t).map(|e| &e.1).ok_or(Error::MissingStats(t))
    }
}

/// `μ^s = (1−α)·μ(z^{s0}) + α·μ(z^{s1})`, and the same for σ.
pub fn interp_stats(style0: &StatTrack, style1: &StatTrack, alpha: f64, t: Timestep) -> Result<ChannelStats> {
    let (a, b) = (style0.stats(t)?, style1.stats(t)?);
    if a.channels() != b.channels() {
        return Err(Error::invalid(format!("style channel counts differ: {} vs {}", a.channels(), b.channels())));
    }
    let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(&p, &q)| lerp_scalar(p, q, alpha)).collect();
    Ok(ChannelStats { mean: mix(&a.mean, &b.mean), std: mix(&a.std, &b.std) })
}

/// Statistics of `lerp(z_t^{s0}, z_t^{s1}, α)`.
pub fn blended_latent_stats(style0: &StatTrack, style1: &StatTrack, alpha: f64, t: Timestep) -> Result<ChannelStats> {
    channel_stats(&lerp(style0.latent(t)?, style1.latent(t)?, alpha)?)
}

/// Per channel: `σ^s·(z − μ(z))/(σ(z) + eps) + μ^s`.
pub fn adain_modulate(content: &Tensor, target: &ChannelStats, eps: f64) -> Result<Tensor> {
    if eps <= 0.0 {
        return Err(Error::invalid(format!("adain eps must be positive, got {eps}")));
    }
    let own = channel_stats(content)?;
    if own.channels() != target.channels() {
        return Err(Error::invalid(format!(
            "target has {} channels, latent has {}",
            target.channels(),
            own.channels()
        )));
    }
    let per = content.len() / own.channels();
    let mut out = content.clone();
    for (c, chunk) in out.data_mut().chunks_exact_mut(per).enumerate() {
        let gain = target.std[c] / (own.std[c] + eps);
        for v in chunk.iter_mut() {
            *v = gain * (*v - own.mean[c]) + target.mean[c];
        }
    }
    Ok(out)
}

/// Modulates while `t >= t_adain`, otherwise returns the latent unchanged.
pub fn apply_adain_in_loop(
    content: &Tensor,
    styles: (&StatTrack, &StatTrack),
    alpha: f64,
    t: Timestep,
    t_adain: Timestep,
    eps: f64,
    source: AdainSource,
) -> Result<Tensor> {
    if t < t_adain {
        return Ok(content.clone());
    }
    let target = match source {
        AdainSource::Statistics => interp_stats(styles.0, styles.1, alpha, t)?,
        AdainSource::LatentBlend => blended_latent_stats(styles.0, styles.1, alpha, t)?,
    };
    adain_modulate(content, &target, eps)
}
