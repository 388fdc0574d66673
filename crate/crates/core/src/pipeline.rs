//! End-to-end morphing: invert the video and both style images, settle the α
//! schedule, then denoise the whole frame batch with injected attention and
//! AdaIN modulation.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adain::{apply_adain_in_loop, AdainSource, StatTrack, DEFAULT_EPS};
use crate::asdm::{
    build_alpha_schedule, find_alpha_mid, presample, smax, AlphaSchedule, DistanceCurves, DEFAULT_LAMBDA,
    DEFAULT_PRESAMPLE_STEPS,
};
use crate::backend::Codec;
use crate::backend::{AttentionHooks, DenoiserConfig, ToyDenoiser};
use crate::error::{Error, Result};
use crate::injection::{build_hooks, record_pass, AttentionCache, InjectionPlan, Provenance};
use crate::perceptual::{PerceptualNet, DEFAULT_SEED as DEFAULT_PERCEPTUAL_SEED};
use crate::schedule::{NoiseSchedule, Timestep, CLEAN, DEFAULT_SAMPLING_STEPS, DEFAULT_TRAIN_STEPS};
use crate::tensor::{lerp, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorphConfig {
    pub steps: usize,
    pub train_steps: usize,
    pub t_qend: Timestep,
    /// AdaIN runs while `t >= t_adain`; `train_steps + 1` switches it off.
    pub t_adain: Timestep,
    pub lambda_alpha: f64,
    pub asdm: bool,
    pub injection_layers: Vec<usize>,
    pub seed: u64,
    pub perceptual_seed: u64,
    pub adain_eps: f64,
    /// Use only the first `frames` video frames, if set.
    pub frames: Option<usize>,
    pub adain_source: AdainSource,
    pub presample_steps: usize,
}

impl Default for MorphConfig {
    fn default() -> Self {
        Self {
            steps: DEFAULT_SAMPLING_STEPS,
            train_steps: DEFAULT_TRAIN_STEPS,
            t_qend: 0,
            t_adain: 400,
            lambda_alpha: DEFAULT_LAMBDA,
            asdm: true,
            injection_layers: vec![0, 1],
            seed: 0,
            perceptual_seed: DEFAULT_PERCEPTUAL_SEED,
            adain_eps: DEFAULT_EPS,
            frames: None,
            adain_source: AdainSource::Statistics,
            presample_steps: DEFAULT_PRESAMPLE_STEPS,
        }
    }
}

impl MorphConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        let t_max = self.train_steps as Timestep;
        if self.train_steps == 0 || self.steps == 0 || self.steps > self.train_steps {
            return fail(format!("steps must be in [1, {}], got {}", self.train_steps, self.steps));
        }
        if !(0..=t_max).contains(&self.t_qend) {
            return fail(format!("t_qend {} outside [0, {t_max}]", self.t_qend));
        }
        if !(0..=t_max + 1).contains(&self.t_adain) {
            return fail(format!("t_adain {} outside [0, {}]", self.t_adain, t_max + 1));
        }
        if !(self.lambda_alpha.is_finite() && self.lambda_alpha >= 0.0) {
            return fail(format!("lambda_alpha {} must be finite and non-negative", self.lambda_alpha));
        }
        if !(self.adain_eps.is_finite() && self.adain_eps > 0.0) {
            return fail(format!("adain_eps {} must be finite and positive", self.adain_eps));
        }
        if self.injection_layers.is_empty() {
            return fail("injection_layers is empty".into());
        }
        let layers = DenoiserConfig::default().layers;
        if let Some(l) = self.injection_layers.iter().find(|&&l| l >= layers) {
            return fail(format!("injection layer {l} missing: backend has {layers} attention layers"));
        }
        let mut sorted = self.injection_layers.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.injection_layers.len() {
            return fail("injection_layers has duplicates".into());
        }
        if self.frames == Some(0) {
            return fail("frames must be at least 1".into());
        }
        if self.asdm && !(1..=self.steps).contains(&self.presample_steps) {
            return fail(format!("presample_steps must be in [1, {}], got {}", self.steps, self.presample_steps));
        }
        Ok(())
    }
}

/// Video inversion result.
#[derive(Clone, Debug)]
pub struct ContentInversion {
    /// Terminal latents `z_T`, one per frame.
    pub latents: Vec<Tensor>,
    pub cache: AttentionCache,
}

#[derive(Clone, Debug)]
pub struct StyleInversion {
    pub image: Tensor,
    pub latent: Tensor,
    pub cache: AttentionCache,
    pub track: StatTrack,
}

impl StyleInversion {
    pub fn view(&self) -> StyleView<'_> {
        StyleView { image: &self.image, cache: &self.cache, track: &self.track }
    }
}

/// What the denoising loop reads from a style anchor.
#[derive(Clone, Copy, Debug)]
pub struct StyleView<'a> {
    pub image: &'a Tensor,
    pub cache: &'a AttentionCache,
    pub track: &'a StatTrack,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Timings {
    pub invert_secs: f64,
    pub presample_secs: f64,
    pub denoise_secs: f64,
    pub decode_secs: f64,
}

#[derive(Clone, Debug)]
pub struct Morphed {
    pub alpha: AlphaSchedule,
    pub alpha_mid: Option<f64>,
    pub s_max: Option<f64>,
    pub curves: Option<DistanceCurves>,
    pub latents: Vec<Tensor>,
    pub frames: Vec<Tensor>,
    pub timings: Timings,
}

#[derive(Clone, Debug)]
pub struct MorphRun {
    pub content: ContentInversion,
    pub style0: StyleInversion,
    pub style1: StyleInversion,
    pub output: Morphed,
}

pub struct Pipeline {
    config: MorphConfig,
    schedule: NoiseSchedule,
    backend: ToyDenoiser,
    codec: Codec,
    perceptual: PerceptualNet,
}

impl Pipeline {
    pub fn new(config: MorphConfig) -> Result<Self> {
        config.validate()?;
        let schedule = NoiseSchedule::new(config.train_steps, config.steps)?;
        let backend = ToyDenoiser::new(DenoiserConfig {
            seed: config.seed,
            train_steps: config.train_steps,
            ..DenoiserConfig::default()
        })?;
        let perceptual = PerceptualNet::new(config.perceptual_seed);
        Ok(Self { config, schedule, backend, codec: Codec::new(), perceptual })
    }

    pub fn config(&self) -> &MorphConfig {
        &self.config
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn backend(&self) -> &ToyDenoiser {
        &self.backend
    }

    pub fn perceptual(&self) -> &PerceptualNet {
        &self.perceptual
    }

    pub fn encode_all(&self, images: &[Tensor]) -> Result<Vec<Tensor>> {
        images.iter().map(|im| self.codec.encode(im)).collect()
    }

    /// Decodes to images clamped into the pixel range `[−1, 1]`.
    pub fn decode_all(&self, latents: &[Tensor]) -> Result<Vec<Tensor>> {
        latents.iter().map(|z| Ok(self.codec.decode(z)?.map(|v| v.clamp(-1.0, 1.0)))).collect()
    }

    fn check_images(&self, images: &[Tensor], what: &str) -> Result<()> {
        let first = images.first().ok_or_else(|| Error::invalid(format!("{what} has no frames")))?;
        let (c, h, w) = first.dims3()?;
        if c != 3 || h == 0 || w == 0 || h % 8 != 0 || w % 8 != 0 {
            return Err(Error::invalid(format!("{what} frames must be [3, 8k, 8m], got {:?}", first.shape())));
        }
        if let Some(i) = images.iter().position(|im| im.shape() != first.shape()) {
            return Err(Error::invalid(format!(
                "{what} frame {i} has shape {:?}, expected {:?}",
                images[i].shape(),
                first.shape()
            )));
        }
        Ok(())
    }

    /// Runs the sampler backwards from the clean latents, recording attention
    /// at every step and, if asked, statistics for the AdaIN timesteps.
    fn invert_latents(
        &self,
        mut z: Vec<Tensor>,
        provenance: Provenance,
        mut track: Option<&mut StatTrack>,
    ) -> Result<(Vec<Tensor>, AttentionCache)> {
        let layers = &self.config.injection_layers;
        let timesteps = self.schedule.timesteps();
        let mut cache = AttentionCache::new(provenance, layers.clone(), timesteps.to_vec(), z.len());
        let mut t_prev = CLEAN;
        for step in (0..timesteps.len()).rev() {
            let t = timesteps[step];
            let mut prediction = record_pass(&self.backend, &z, t, layers)
                .map_err(|e| e.context(format!("inverting step {step} (t={t})")))?;
            cache.absorb(step, &mut prediction)?;
            for (frame, (zi, eps)) in z.iter_mut().zip(&prediction.eps).enumerate() {
                *zi = self.schedule.invert_step(zi, eps, t_prev, t)?;
                if !zi.is_finite() {
                    return Err(Error::NonFinite { step, timestep: t, frame });
                }
            }
            if let Some(track) = track.as_deref_mut() {
                if t >= self.config.t_adain {
                    track.insert(t, &z[0])?;
                }
            }
            t_prev = t;
        }
        Ok((z, cache))
    }

    pub fn invert_video(&self, frames: &[Tensor]) -> Result<ContentInversion> {
        self.check_images(frames, "video")?;
        let (latents, cache) = self.invert_latents(self.encode_all(frames)?, Provenance::Content, None)?;
        Ok(ContentInversion { latents, cache })
    }

    pub fn invert_style(&self, image: &Tensor, provenance: Provenance) -> Result<StyleInversion> {
        self.check_images(std::slice::from_ref(image), "style image")?;
        let mut track = StatTrack::new();
        let (mut latents, cache) = self.invert_latents(vec![self.codec.encode(image)?], provenance, Some(&mut track))?;
        Ok(StyleInversion { image: image.clone(), latent: latents.remove(0), cache, track })
    }

    /// Plain sampling from terminal latents, no injection and no AdaIN.
    pub fn reconstruct(&self, terminal: &[Tensor]) -> Result<Vec<Tensor>> {
        self.sample(terminal.to_vec(), None, None)
    }

    /// Injected denoising of the content latents under `alphas`. With
    /// `stop_after = Some(k)` the loop returns the clean-latent estimate made
    /// from the k-th noise prediction.
    pub fn denoise(
        &self,
        content: &ContentInversion,
        styles: (StyleView<'_>, StyleView<'_>),
        alphas: &AlphaSchedule,
        stop_after: Option<usize>,
    ) -> Result<Vec<Tensor>> {
        if alphas.len() != content.latents.len() {
            return Err(Error::invalid(format!(
                "{} alphas for {} frames",
                alphas.len(),
                content.latents.len()
            )));
        }
        let plan = InjectionPlan::new(
            self.config.injection_layers.clone(),
            self.config.t_qend,
            alphas.values().to_vec(),
            self.config.train_steps,
        )?;
        self.sample(content.latents.clone(), Some((&plan, content, styles)), stop_after)
    }

    fn sample(
        &self,
        mut z: Vec<Tensor>,
        guide: Option<(&InjectionPlan, &ContentInversion, (StyleView<'_>, StyleView<'_>))>,
        stop_after: Option<usize>,
    ) -> Result<Vec<Tensor>> {
        let layers = self.backend.num_layers();
        for (step, &t) in self.schedule.timesteps().iter().enumerate() {
            let at = |e: Error| e.context(format!("denoising step {step} (t={t})"));
            let hooks = match &guide {
                Some((plan, content, (s0, s1))) => {
                    for (frame, zi) in z.iter_mut().enumerate() {
                        *zi = apply_adain_in_loop(
                            zi,
                            (s0.track, s1.track),
                            plan.alphas[frame],
                            t,
                            self.config.t_adain,
                            self.config.adain_eps,
                            self.config.adain_source,
                        )
                        .map_err(|e| at(e.context(format!("adain on frame {frame}"))))?;
                    }
                    build_hooks(plan, &content.cache, (s0.cache, s1.cache), step, t, layers).map_err(at)?
                }
                None => AttentionHooks::passthrough(layers),
            };
            let eps = self.backend.predict_noise(&z, t, &hooks).map_err(at)?.eps;
            if stop_after == Some(step + 1) {
                return z.iter().zip(&eps).map(|(zi, e)| self.schedule.predict_z0(zi, e, t)).collect();
            }
            let t_prev = self.schedule.prev_timestep(step);
            for (frame, (zi, e)) in z.iter_mut().zip(&eps).enumerate() {
                *zi = self.schedule.denoise_step(zi, e, t, t_prev)?;
                if !zi.is_finite() {
                    return Err(Error::NonFinite { step, timestep: t, frame });
                }
            }
        }
        Ok(z)
    }

    /// Settles the α schedule (running the presample when enabled), then
    /// denoises and decodes the frames.
    pub fn run(&self, content: &ContentInversion, style0: StyleView<'_>, style1: StyleView<'_>) -> Result<Morphed> {
        let n = content.latents.len();
        let mut timings = Timings::default();
        let (alpha, alpha_mid, s_max, curves) = if self.config.asdm && n >= 2 {
            let start = Instant::now();
            let preview = presample(self, content, (style0, style1)).map_err(|e| e.context("presampling"))?;
            let curves = DistanceCurves::measure(&self.perceptual, &preview, style0.image, style1.image)?;
            let mid = find_alpha_mid(&curves);
            let schedule = build_alpha_schedule(n, mid, self.config.lambda_alpha)?;
            timings.presample_secs = start.elapsed().as_secs_f64();
            (schedule, Some(mid), Some(smax(mid, self.config.lambda_alpha)), Some(curves))
        } else {
            (AlphaSchedule::linear(n), None, None, None)
        };
        let start = Instant::now();
        let latents = self.denoise(content, (style0, style1), &alpha, None)?;
        timings.denoise_secs = start.elapsed().as_secs_f64();
        let start = Instant::now();
        let frames = self.decode_all(&latents)?;
        timings.decode_secs = start.elapsed().as_secs_f64();
        Ok(Morphed { alpha, alpha_mid, s_max, curves, latents, frames, timings })
    }

    pub fn morph(&self, video: &[Tensor], style0: &Tensor, style1: &Tensor) -> Result<MorphRun> {
        let frames = match self.config.frames {
            Some(n) if n < video.len() => &video[..n],
            _ => video,
        };
        if style0.shape() != style1.shape() {
            return Err(Error::invalid(format!(
                "style images differ in shape: {:?} vs {:?}",
                style0.shape(),
                style1.shape()
            )));
        }
        let start = Instant::now();
        let content = self.invert_video(frames).map_err(|e| e.context("inverting video"))?;
        let s0 = self.invert_style(style0, Provenance::Style0).map_err(|e| e.context("inverting style0"))?;
        let s1 = self.invert_style(style1, Provenance::Style1).map_err(|e| e.context("inverting style1"))?;
        let invert_secs = start.elapsed().as_secs_f64();
        let mut output = self.run(&content, s0.view(), s1.view())?;
        output.timings.invert_secs = invert_secs;
        Ok(MorphRun { content, style0: s0, style1: s1, output })
    }
}

/// `lerp(z_T^{s0}, z_T^{s1}, α)`.
pub fn initial_latent_interp(style0: &Tensor, style1: &Tensor, alpha: f64) -> Result<Tensor> {
    lerp(style0, style1, alpha)
}
