//! Attention feature caches recorded during inversion, and the hooks that
//! replay them while denoising.
//!
//! The content cache supplies per-frame queries. The two style caches supply
//! keys and values, blended per frame by that frame's α. A single-frame
//! cache (a style image) is broadcast to every frame.

use std::borrow::Cow;
use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{frame_window, AttentionHooks, FrameQkv, Injection, LayerHook, NoisePrediction, ToyDenoiser};
use crate::error::{Error, Result};
use crate::io::tensor_file::{read_tensor, write_tensor, DType};
use crate::io::write_atomic;
use crate::schedule::Timestep;
use crate::tensor::{lerp, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Content,
    Style0,
    Style1,
}

#[derive(Clone, Debug)]
pub struct AttentionCache {
    provenance: Provenance,
    layers: Vec<usize>,
    /// Timestep of every schedule index, in denoising order.
    timesteps: Vec<Timestep>,
    frames: usize,
    entries: BTreeMap<(usize, usize, usize), FrameQkv>,
}

impl AttentionCache {
    pub fn new(provenance: Provenance, layers: Vec<usize>, timesteps: Vec<Timestep>, frames: usize) -> Self {
        Self { provenance, layers, timesteps, frames, entries: BTreeMap::new() }
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn steps(&self) -> usize {
        self.timesteps.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.entries.len() == self.layers.len() * self.timesteps.len() * self.frames
    }

    /// Absorbs the attention recorded by one noise prediction at schedule index `step`.
    pub fn absorb(&mut self, step: usize, prediction: &mut NoisePrediction) -> Result<()> {
        if step >= self.timesteps.len() {
            return Err(Error::invalid(format!("step {step} beyond a {}-step cache", self.timesteps.len())));
        }
        for rec in prediction.recorded.drain(..) {
            if !self.layers.contains(&rec.layer) {
                continue;
            }
            if rec.frame >= self.frames {
                return Err(Error::invalid(format!("recorded frame {} in a {}-frame cache", rec.frame, self.frames)));
            }
            self.entries.insert((rec.layer, step, rec.frame), rec.qkv);
        }
        Ok(())
    }

    fn source_frame(&self, frame: usize) -> usize {
        if self.frames == 1 {
            0
        } else {
            frame
        }
    }

    fn entry(&self, layer: usize, step: usize, frame: usize) -> Result<&FrameQkv> {
        self.entries.get(&(layer, step, frame)).ok_or(Error::MissingCache { layer, step, frame })
    }

    pub fn query(&self, layer: usize, step: usize, frame: usize) -> Result<&Tensor> {
        Ok(&self.entry(layer, step, self.source_frame(frame))?.query)
    }

    /// Keys and values over the frame window `[i−1, i, i+1]`.
    pub fn keys_values(&self, layer: usize, step: usize, frame: usize) -> Result<(Tensor, Tensor)> {
        let frame = self.source_frame(frame);
        if frame >= self.frames {
            return Err(Error::MissingCache { layer, step, frame });
        }
        let window = frame_window(frame, self.frames);
        let parts: Vec<&FrameQkv> = window.iter().map(|&j| self.entry(layer, step, j)).collect::<Result<_>>()?;
        let k = Tensor::concat_rows(&[&parts[0].key, &parts[1].key, &parts[2].key])?;
        let v = Tensor::concat_rows(&[&parts[0].value, &parts[1].value, &parts[2].value])?;
        Ok((k, v))
    }

    /// Hash over every stored tensor's bit pattern, in key order.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for (key, qkv) in &self.entries {
            key.hash(&mut h);
            for t in [&qkv.query, &qkv.key, &qkv.value] {
                t.shape().hash(&mut h);
                t.data().iter().for_each(|v| v.to_bits().hash(&mut h));
            }
        }
        h.finish()
    }

    /// Writes one tensor file per (layer, timestep) holding `[frames, 3, tokens, width]`
    /// (query, key, value), plus an `index.json`.
    pub fn spill(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for &layer in &self.layers {
            for (step, &t) in self.timesteps.iter().enumerate() {
                let mut data = Vec::new();
                let mut shape = None;
                for frame in 0..self.frames {
                    let e = self.entry(layer, step, frame)?;
                    shape.get_or_insert_with(|| e.query.shape().to_vec());
                    for part in [&e.query, &e.key, &e.value] {
                        data.extend_from_slice(part.data());
                    }
                }
                let inner = shape.expect("at least one frame");
                let stacked = Tensor::new(vec![self.frames, 3, inner[0], inner[1]], data)?;
                write_tensor(&dir.join(spill_name(layer, t)), &stacked, DType::F64)?;
            }
        }
        let index = SpillIndex {
            provenance: self.provenance,
            layers: self.layers.clone(),
            timesteps: self.timesteps.clone(),
            frames: self.frames,
        };
        let json = serde_json::to_vec_pretty(&index).expect("index serialises");
        write_atomic(&dir.join("index.json"), &json)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let index_path = dir.join("index.json");
        let raw = std::fs::read(&index_path).map_err(|e| Error::io(&index_path, e))?;
        let index: SpillIndex =
            serde_json::from_slice(&raw).map_err(|e| Error::malformed(&index_path, e.to_string()))?;
        let mut cache = Self::new(index.provenance, index.layers, index.timesteps, index.frames);
        for &layer in &cache.layers.clone() {
            for (step, &t) in cache.timesteps.clone().iter().enumerate() {
                let path = dir.join(spill_name(layer, t));
                let stacked = read_tensor(&path)?;
                let &[frames, 3, rows, cols] = stacked.shape() else {
                    return Err(Error::malformed(&path, format!("unexpected cache shape {:?}", stacked.shape())));
                };
                if frames != cache.frames {
                    return Err(Error::malformed(&path, format!("{frames} frames, index says {}", cache.frames)));
                }
                let block = rows * cols;
                let d = stacked.data();
                for frame in 0..frames {
                    let part = |i: usize| {
                        let start = (frame * 3 + i) * block;
                        Tensor::new(vec![rows, cols], d[start..start + block].to_vec())
                    };
                    let qkv = FrameQkv { query: part(0)?, key: part(1)?, value: part(2)? };
                    cache.entries.insert((layer, step, frame), qkv);
                }
            }
        }
        Ok(cache)
    }
}

fn spill_name(layer: usize, t: Timestep) -> String {
    format!("layer{layer}_t{t:04}.stns")
}

#[derive(Serialize, Deserialize)]
struct SpillIndex {
    provenance: Provenance,
    layers: Vec<usize>,
    timesteps: Vec<Timestep>,
    frames: usize,
}

/// Runs one noise prediction with the given layers recording.
pub fn record_pass(backend: &ToyDenoiser, latents: &[Tensor], t: Timestep, layers: &[usize]) -> Result<NoisePrediction> {
    if let Some(&bad) = layers.iter().find(|&&l| l >= backend.num_layers()) {
        return Err(Error::Config(format!(
            "injection layer {bad} missing: backend has {} attention layers",
            backend.num_layers()
        )));
    }
    let hooks = AttentionHooks::record(layers, backend.num_layers());
    backend.predict_noise(latents, t, &hooks)
}

/// `K^m = lerp(K^{s0}, K^{s1}, α)` and likewise for `V`, over the frame window.
pub fn interpolate_kv(
    style0: &AttentionCache,
    style1: &AttentionCache,
    alpha: f64,
    layer: usize,
    step: usize,
    frame: usize,
) -> Result<(Tensor, Tensor)> {
    let (k0, v0) = style0.keys_values(layer, step, frame)?;
    if std::ptr::eq(style0, style1) {
        return Ok((k0, v0));
    }
    let (k1, v1) = style1.keys_values(layer, step, frame)?;
    Ok((lerp(&k0, &k1, alpha)?, lerp(&v0, &v1, alpha)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct InjectionPlan {
    pub layers: Vec<usize>,
    /// Queries are injected at every timestep `t >= query_end`.
    pub query_end: Timestep,
    pub alphas: Vec<f64>,
}

impl InjectionPlan {
    pub fn new(layers: Vec<usize>, query_end: Timestep, alphas: Vec<f64>, train_steps: usize) -> Result<Self> {
        if query_end < 0 || query_end as usize > train_steps {
            return Err(Error::Config(format!("t_qend {query_end} outside [0, {train_steps}]")));
        }
        if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::Config(format!("alpha {a} outside [0, 1]")));
        }
        Ok(Self { layers, query_end, alphas })
    }

    pub fn injects_query(&self, t: Timestep) -> bool {
        t >= self.query_end
    }
}

/// Hooks for denoising step `step` at timestep `t`: every injection layer
/// takes the interpolated style keys/values, and the content queries while
/// `t >= t_qend`.
pub fn build_hooks<'a>(
    plan: &InjectionPlan,
    content: &'a AttentionCache,
    styles: (&AttentionCache, &AttentionCache),
    step: usize,
    t: Timestep,
    total_layers: usize,
) -> Result<AttentionHooks<'a>> {
    let mut hooks = AttentionHooks::passthrough(total_layers);
    for &layer in &plan.layers {
        let per_frame = plan
            .alphas
            .iter()
            .enumerate()
            .map(|(frame, &alpha)| {
                let query = if plan.injects_query(t) {
                    Some(Cow::Borrowed(content.query(layer, step, frame)?))
                } else {
                    None
                };
                let (k, v) = interpolate_kv(styles.0, styles.1, alpha, layer, step, frame)?;
                Ok(Injection { query, key_value: Some((Cow::Owned(k), Cow::Owned(v))) })
            })
            .collect::<Result<Vec<_>>>()?;
        hooks.set(layer, LayerHook::Override(per_frame))?;
    }
    Ok(hooks)
}
