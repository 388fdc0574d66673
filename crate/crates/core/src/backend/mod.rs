//! Deterministic desk-scale noise predictor with cross-frame attention.
//!
//! Each frame's latent `[12, h, w]` is folded into `p×p` patch tokens,
//! projected to a hidden width, shifted by a sinusoidal timestep embedding
//! and passed through attention blocks whose keys and values come from the
//! frame window `[i−1, i, i+1]` (clamped at the ends of the sequence). Every
//! attention layer can pass through, record its Q/K/V, or take Q and/or K/V
//! from outside.

mod codec;
mod weights;

use std::borrow::Cow;

pub use codec::{Codec, FACTOR as CODEC_FACTOR, LATENT_CHANNELS};
pub use weights::{spectral_norm, AttentionWeights, DenoiserWeights, SPECTRAL_ITERS};

use crate::error::{Error, Result};
use crate::schedule::Timestep;
use crate::tensor::{attention, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserConfig {
    pub seed: u64,
    pub hidden: usize,
    pub head_dim: usize,
    pub patch: usize,
    pub layers: usize,
    pub train_steps: usize,
    /// Scale applied to the output projection.
    pub output_gain: f64,
    /// Scale applied to the timestep embedding before it joins the tokens.
    pub time_gain: f64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self { seed: 0, hidden: 64, head_dim: 16, patch: 2, layers: 2, train_steps: 1000, output_gain: 0.5, time_gain: TIME_GAIN }
    }
}

pub const TIME_GAIN: f64 = 1.0;

/// The three neighbour frames whose keys/values frame `frame` attends over.
pub fn frame_window(frame: usize, frames: usize) -> [usize; 3] {
    [frame.saturating_sub(1), frame, (frame + 1).min(frames - 1)]
}

/// A layer's own projections for one frame, before window assembly.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameQkv {
    pub query: Tensor,
    pub key: Tensor,
    pub value: Tensor,
}

/// Externally supplied attention inputs for one frame of one layer.
#[derive(Clone, Debug, Default)]
pub struct Injection<'a> {
    pub query: Option<Cow<'a, Tensor>>,
    pub key_value: Option<(Cow<'a, Tensor>, Cow<'a, Tensor>)>,
}

#[derive(Clone, Debug, Default)]
pub enum LayerHook<'a> {
    #[default]
    Passthrough,
    Record,
    /// One entry per frame.
    Override(Vec<Injection<'a>>),
}

#[derive(Clone, Debug)]
pub struct AttentionHooks<'a> {
    layers: Vec<LayerHook<'a>>,
}

impl<'a> AttentionHooks<'a> {
    pub fn passthrough(layers: usize) -> Self {
        Self { layers: vec![LayerHook::Passthrough; layers] }
    }

    pub fn record(layers: &[usize], total: usize) -> Self {
        let mut hooks = Self::passthrough(total);
        for &l in layers {
            if l < total {
                hooks.layers[l] = LayerHook::Record;
            }
        }
        hooks
    }

    pub fn set(&mut self, layer: usize, hook: LayerHook<'a>) -> Result<()> {
        let slot = self
            .layers
            .get_mut(layer)
            .ok_or_else(|| Error::Config(format!("attention layer {layer} does not exist")))?;
        *slot = hook;
        Ok(())
    }

    pub fn layer(&self, layer: usize) -> &LayerHook<'a> {
        &self.layers[layer]
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecordedAttention {
    pub layer: usize,
    pub frame: usize,
    pub qkv: FrameQkv,
}

#[derive(Clone, Debug)]
pub struct NoisePrediction {
    pub eps: Vec<Tensor>,
    pub recorded: Vec<RecordedAttention>,
}

#[derive(Clone, Debug)]
pub struct ToyDenoiser {
    config: DenoiserConfig,
    weights: DenoiserWeights,
}

impl ToyDenoiser {
    pub fn new(config: DenoiserConfig) -> Result<Self> {
        if config.hidden < 2 || config.head_dim == 0 || config.patch == 0 || config.layers == 0 {
            return Err(Error::Config(format!("degenerate denoiser config {config:?}")));
        }
        let token_dim = LATENT_CHANNELS * config.patch * config.patch;
        let weights = DenoiserWeights::generate(
            config.seed,
            token_dim,
            config.hidden,
            config.head_dim,
            config.layers,
            config.train_steps,
        );
        Ok(Self { config, weights })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn weights(&self) -> &DenoiserWeights {
        &self.weights
    }

    pub fn num_layers(&self) -> usize {
        self.config.layers
    }

    /// Token count of one frame for a latent with spatial size `h×w`.
    pub fn tokens_for(&self, h: usize, w: usize) -> usize {
        (h / self.config.patch) * (w / self.config.patch)
    }

    /// Predicts the noise of every frame at timestep `t`.
    pub fn predict_noise(&self, latents: &[Tensor], t: Timestep, hooks: &AttentionHooks<'_>) -> Result<NoisePrediction> {
        let first = latents.first().ok_or_else(|| Error::invalid("predict_noise: empty latent sequence"))?;
        let (c, h, w) = first.dims3()?;
        if c != LATENT_CHANNELS {
            return Err(Error::invalid(format!("latents need {LATENT_CHANNELS} channels, got {c}")));
        }
        if latents.iter().any(|z| z.shape() != first.shape()) {
            return Err(Error::invalid("predict_noise: frames differ in shape"));
        }
        let p = self.config.patch;
        if h % p != 0 || w % p != 0 {
            return Err(Error::invalid(format!("latent dims {h}x{w} not divisible by patch size {p}")));
        }
        if t < 0 || t as usize >= self.config.train_steps {
            return Err(Error::invalid(format!("timestep {t} outside [0, {})", self.config.train_steps)));
        }
        if hooks.len() != self.config.layers {
            return Err(Error::Config(format!(
                "hooks cover {} layers, backend has {}",
                hooks.len(),
                self.config.layers
            )));
        }
        let n = latents.len();
        let tokens = self.tokens_for(h, w);
        let hidden = self.config.hidden;
        let temb = &self.weights.time_embedding.data()[t as usize * hidden..(t as usize + 1) * hidden];

        let mut states = Vec::with_capacity(n);
        for z in latents {
            let mut s = self.tokenize(z)?.matmul(&self.weights.input)?;
            for row in s.data_mut().chunks_exact_mut(hidden) {
                row.iter_mut().zip(temb).for_each(|(x, e)| *x += self.config.time_gain * e);
            }
            states.push(s);
        }

        let mut recorded = Vec::new();
        for (layer, aw) in self.weights.attention.iter().enumerate() {
            let hook = hooks.layer(layer);
            if let LayerHook::Override(per_frame) = hook {
                if per_frame.len() != n {
                    return Err(Error::invalid(format!(
                        "layer {layer}: {} frame overrides for {n} frames",
                        per_frame.len()
                    )));
                }
            }
            let own: Vec<FrameQkv> = states
                .iter()
                .map(|s| {
                    Ok(FrameQkv { query: s.matmul(&aw.query)?, key: s.matmul(&aw.key)?, value: s.matmul(&aw.value)? })
                })
                .collect::<Result<_>>()?;

            let mut next = Vec::with_capacity(n);
            for (frame, state) in states.iter().enumerate() {
                let injection = match hook {
                    LayerHook::Override(per_frame) => Some(&per_frame[frame]),
                    _ => None,
                };
                let query = match injection.and_then(|i| i.query.as_deref()) {
                    Some(q) => {
                        if q.shape() != own[frame].query.shape() {
                            return Err(Error::invalid(format!(
                                "layer {layer}: query override shape {:?}, expected {:?}",
                                q.shape(),
                                own[frame].query.shape()
                            )));
                        }
                        q
                    }
                    None => &own[frame].query,
                };
                let window = frame_window(frame, n);
                let (native_k, native_v);
                let (key, value) = match injection.and_then(|i| i.key_value.as_ref()) {
                    Some((k, v)) => {
                        let (kr, kc) = k.dims2()?;
                        let (vr, vc) = v.dims2()?;
                        if kc != self.config.head_dim || vc != self.config.head_dim || kr != vr {
                            return Err(Error::invalid(format!(
                                "layer {layer}: key/value override shapes {:?}/{:?} incompatible with head width {}",
                                k.shape(),
                                v.shape(),
                                self.config.head_dim
                            )));
                        }
                        (k.as_ref(), v.as_ref())
                    }
                    None => {
                        native_k = Tensor::concat_rows(&window.map(|j| &own[j].key))?;
                        native_v = Tensor::concat_rows(&window.map(|j| &own[j].value))?;
                        (&native_k, &native_v)
                    }
                };
                let attended = attention(query, key, value)?.matmul(&aw.output)?;
                next.push(state.add(&attended)?);
            }
            if matches!(hook, LayerHook::Record) {
                recorded.extend(own.into_iter().enumerate().map(|(frame, qkv)| RecordedAttention { layer, frame, qkv }));
            }

            let mix = &self.weights.mixing[layer];
            states = next
                .into_iter()
                .map(|s| s.add(&s.matmul(mix)?.map(f64::tanh)))
                .collect::<Result<_>>()?;
        }

        let eps = states
            .iter()
            .map(|s| {
                let out = s.matmul(&self.weights.output)?.scale(self.config.output_gain);
                self.untokenize(&out, h, w)
            })
            .collect::<Result<_>>()?;
        debug_assert_eq!(tokens, states[0].shape()[0]);
        Ok(NoisePrediction { eps, recorded })
    }

    fn tokenize(&self, z: &Tensor) -> Result<Tensor> {
        let (c, h, w) = z.dims3()?;
        let p = self.config.patch;
        let (th, tw) = (h / p, w / p);
        let dim = c * p * p;
        let src = z.data();
        let mut out = vec![0.0; th * tw * dim];
        for ty in 0..th {
            for tx in 0..tw {
                let row = &mut out[(ty * tw + tx) * dim..(ty * tw + tx + 1) * dim];
                for ch in 0..c {
                    for dy in 0..p {
                        for dx in 0..p {
                            row[ch * p * p + dy * p + dx] = src[ch * h * w + (ty * p + dy) * w + tx * p + dx];
                        }
                    }
                }
            }
        }
        Ok(Tensor::from_parts(vec![th * tw, dim], out))
    }

    fn untokenize(&self, tokens: &Tensor, h: usize, w: usize) -> Result<Tensor> {
        let p = self.config.patch;
        let (th, tw) = (h / p, w / p);
        let dim = LATENT_CHANNELS * p * p;
        let src = tokens.data();
        let mut out = vec![0.0; LATENT_CHANNELS * h * w];
        for ty in 0..th {
            for tx in 0..tw {
                let row = &src[(ty * tw + tx) * dim..(ty * tw + tx + 1) * dim];
                for ch in 0..LATENT_CHANNELS {
                    for dy in 0..p {
                        for dx in 0..p {
                            out[ch * h * w + (ty * p + dy) * w + tx * p + dx] = row[ch * p * p + dy * p + dx];
                        }
                    }
                }
            }
        }
        Ok(Tensor::from_parts(vec![LATENT_CHANNELS, h, w], out))
    }
}
