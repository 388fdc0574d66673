use stylemorph::adain::StatTrack;
use stylemorph::asdm::{presample, AlphaSchedule};
use stylemorph::fixtures::{cool_checks, moving_disc_video, warm_stripes};
use stylemorph::injection::Provenance;
use stylemorph::perceptual::{structure_distance, style_distance};
use stylemorph::pipeline::{initial_latent_interp, StyleView};
use stylemorph::tensor::channel_stats;
use stylemorph::{Error, MorphConfig, Pipeline, Tensor};

fn small() -> MorphConfig {
    MorphConfig { steps: 20, ..MorphConfig::default() }
}

#[test]
fn single_frame_video_morphs() {
    let p = Pipeline::new(small()).unwrap();
    let video = moving_disc_video(1, 32);
    let run = p.morph(&video, &warm_stripes(32), &cool_checks(32)).unwrap();
    assert_eq!(run.output.frames.len(), 1);
    assert_eq!(run.output.alpha.values(), &[0.0]);
    assert!(run.output.alpha_mid.is_none());
}

#[test]
fn output_count_matches_input_and_inversion_is_deterministic() {
    let p = Pipeline::new(small()).unwrap();
    let video = moving_disc_video(3, 32);
    let a = p.invert_video(&video).unwrap();
    let b = p.invert_video(&video).unwrap();
    assert!(a.cache.is_complete());
    assert_eq!(a.cache.fingerprint(), b.cache.fingerprint());
    for (x, y) in a.latents.iter().zip(&b.latents) {
        assert!(x.bits_eq(y));
    }
    let run = p.morph(&video, &warm_stripes(32), &cool_checks(32)).unwrap();
    assert_eq!(run.output.frames.len(), 3);
    assert_eq!(run.output.latents.len(), 3);
}

#[test]
fn style_tracks_cover_adain_steps() {
    let p = Pipeline::new(MorphConfig::default()).unwrap();
    let img = warm_stripes(32);
    let a = p.invert_style(&img, Provenance::Style0).unwrap();
    let b = p.invert_style(&img, Provenance::Style1).unwrap();
    assert_eq!(a.track.len(), 30);
    assert!(a.track.timesteps().all(|t| t >= 400));
    for t in a.track.timesteps() {
        assert_eq!(a.track.stats(t).unwrap(), b.track.stats(t).unwrap());
    }
    // The toy denoiser's noise estimates are small, so the inverted latent
    // stays near the data scale instead of reaching unit variance.
    let stats = channel_stats(&a.latent).unwrap();
    assert!(stats.mean.iter().all(|m| m.abs() < 0.5), "{:?}", stats.mean);
    assert!(stats.std.iter().all(|s| (0.02..0.6).contains(s)), "{:?}", stats.std);
}

#[test]
fn identical_styles_make_the_schedule_irrelevant() {
    let p = Pipeline::new(small()).unwrap();
    let video = moving_disc_video(4, 32);
    let content = p.invert_video(&video).unwrap();
    let style = p.invert_style(&warm_stripes(32), Provenance::Style0).unwrap();
    let other = p.invert_style(&warm_stripes(32), Provenance::Style1).unwrap();
    let linear = p.denoise(&content, (style.view(), other.view()), &AlphaSchedule::linear(4), None).unwrap();
    let hard = p.denoise(&content, (style.view(), other.view()), &AlphaSchedule::hard_switch(4), None).unwrap();
    for (a, b) in linear.iter().zip(&hard) {
        assert!(a.bits_eq(b));
    }
}

#[test]
fn asdm_is_a_no_op_for_symmetric_styles() {
    let video = moving_disc_video(4, 32);
    let style = warm_stripes(32);
    let on = Pipeline::new(small()).unwrap().morph(&video, &style, &style).unwrap();
    let off = Pipeline::new(MorphConfig { asdm: false, ..small() }).unwrap().morph(&video, &style, &style).unwrap();
    assert_eq!(on.output.alpha_mid, Some(0.5));
    assert_eq!(on.output.alpha, off.output.alpha);
    for (a, b) in on.output.frames.iter().zip(&off.output.frames) {
        assert!(a.bits_eq(b));
    }
}

#[test]
fn presample_of_static_clip_with_one_style_is_uniform() {
    let p = Pipeline::new(small()).unwrap();
    let video = vec![moving_disc_video(1, 32).remove(0); 4];
    let content = p.invert_video(&video).unwrap();
    let s0 = p.invert_style(&cool_checks(32), Provenance::Style0).unwrap();
    let s1 = p.invert_style(&cool_checks(32), Provenance::Style1).unwrap();
    let frames = presample(&p, &content, (s0.view(), s1.view())).unwrap();
    assert_eq!(frames.len(), 4);
    for f in &frames[1..] {
        assert!(f.max_abs_diff(&frames[0]) < 1e-10);
    }
}

#[test]
fn presample_of_degenerate_run_is_closer_to_source_than_twice_a_stylized_run() {
    let video = moving_disc_video(4, 32);
    let degenerate = Pipeline::new(MorphConfig { t_adain: 1001, asdm: false, ..MorphConfig::default() }).unwrap();
    let content = degenerate.invert_video(&video).unwrap();
    let empty = StatTrack::new();
    let view = StyleView { image: &video[0], cache: &content.cache, track: &empty };
    let preview = presample(&degenerate, &content, (view, view)).unwrap();
    let stylized = Pipeline::new(MorphConfig::default()).unwrap().morph(&video, &warm_stripes(32), &cool_checks(32)).unwrap();
    let net = degenerate.perceptual();
    let src = net.extract_all(&video).unwrap();
    let d_pre = structure_distance(&net.extract_all(&preview).unwrap(), &src).unwrap();
    let d_run = structure_distance(&net.extract_all(&stylized.output.frames).unwrap(), &src).unwrap();
    assert!(d_pre < 2.0 * d_run, "presample {d_pre} stylized run {d_run}");
}

#[test]
fn too_few_steps_for_presampling_is_a_config_error() {
    let err = Pipeline::new(MorphConfig { steps: 5, ..MorphConfig::default() }).err().unwrap();
    assert!(matches!(err, Error::Config(_)));
    assert!(Pipeline::new(MorphConfig { steps: 5, asdm: false, ..MorphConfig::default() }).is_ok());
}

#[test]
fn style_drift_is_monotone_on_a_static_clip() {
    let p = Pipeline::new(MorphConfig::default()).unwrap();
    let (s0, s1) = (warm_stripes(64), cool_checks(64));
    let video = vec![moving_disc_video(8, 64).remove(3); 8];
    let content = p.invert_video(&video).unwrap();
    let i0 = p.invert_style(&s0, Provenance::Style0).unwrap();
    let i1 = p.invert_style(&s1, Provenance::Style1).unwrap();
    let frames = p.decode_all(&p.denoise(&content, (i0.view(), i1.view()), &AlphaSchedule::linear(8), None).unwrap()).unwrap();
    let net = p.perceptual();
    let target = net.extract(&s0).unwrap();
    let d: Vec<f64> = frames.iter().map(|f| style_distance(&net.extract(f).unwrap(), &target).unwrap()).collect();
    let range = d.iter().cloned().fold(f64::MIN, f64::max) - d.iter().cloned().fold(f64::MAX, f64::min);
    for w in d.windows(2) {
        assert!(w[1] >= w[0] - 0.05 * range, "{d:?}");
    }
}

#[test]
fn mismatched_inputs_are_rejected() {
    let p = Pipeline::new(small()).unwrap();
    let mut video = moving_disc_video(2, 32);
    video.push(Tensor::zeros(&[3, 16, 16]));
    assert!(matches!(p.invert_video(&video), Err(Error::InvalidArgument(_))));
    assert!(p.invert_video(&[Tensor::zeros(&[3, 12, 12])]).is_err());
    assert!(p.invert_video(&[]).is_err());
    let err = p.morph(&moving_disc_video(2, 32), &warm_stripes(32), &cool_checks(64)).err().unwrap();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

#[test]
fn missing_layers_surface_with_step_context() {
    let narrow = Pipeline::new(MorphConfig { injection_layers: vec![0], ..small() }).unwrap();
    let wide = Pipeline::new(small()).unwrap();
    let video = moving_disc_video(2, 32);
    let content = wide.invert_video(&video).unwrap();
    let s0 = narrow.invert_style(&warm_stripes(32), Provenance::Style0).unwrap();
    let err = wide.denoise(&content, (s0.view(), s0.view()), &AlphaSchedule::linear(2), None).unwrap_err();
    assert!(matches!(err.root(), Error::MissingCache { layer: 1, .. }), "{err}");
    assert!(err.to_string().contains("denoising step 0"));
}

#[test]
fn non_finite_latents_abort_the_run() {
    let p = Pipeline::new(MorphConfig { asdm: false, ..small() }).unwrap();
    let mut content = p.invert_video(&moving_disc_video(2, 32)).unwrap();
    content.latents = content.latents.iter().map(|z| z.scale(1e306)).collect();
    let err = p.reconstruct(&content.latents).unwrap_err();
    assert!(matches!(err.root(), Error::NonFinite { .. }), "{err}");
}

#[test]
fn latent_interp_endpoints() {
    let a = moving_disc_video(1, 8).remove(0);
    let b = warm_stripes(8);
    assert!(initial_latent_interp(&a, &b, 0.0).unwrap().bits_eq(&a));
    assert!(initial_latent_interp(&a, &b, 1.0).unwrap().bits_eq(&b));
    let mid = initial_latent_interp(&a, &b, 0.5).unwrap();
    assert!(mid.max_abs_diff(&a.add(&b).unwrap().scale(0.5)) < 1e-15);
}

#[test]
fn latent_blend_source_runs() {
    let p = Pipeline::new(MorphConfig { adain_source: stylemorph::adain::AdainSource::LatentBlend, ..small() }).unwrap();
    let run = p.morph(&moving_disc_video(3, 32), &warm_stripes(32), &cool_checks(32)).unwrap();
    assert!(run.output.frames.iter().all(Tensor::is_finite));
}
