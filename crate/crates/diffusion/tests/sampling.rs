use nmrrecon_core::nus::{apply_mask, gen_mask};
use nmrrecon_core::synth::{synth_fid, PeakSpec, SyntheticSpectrumSpec};
use nmrrecon_core::{to_domain, ComplexGrid, Domain, NusMask};
use nmrrecon_diffusion::schedule::{ddpm_mean, gaussian};
use nmrrecon_diffusion::{
    conditioned_inpaint, ddpm_step, forward_noise, inpaint_batch, make_schedule, repaint_inpaint, InpaintJob,
    train, ModelParams, ScheduleConfig, Tensor, TrainConfig, UNetConfig, Variant,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn forward_noise_marginal_moments() {
    let s = make_schedule(200, 1e-4, 0.04).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x0 = Tensor::from_vec(&[10_000], vec![0.0f64; 10_000]);
    let shifted = Tensor::from_vec(&[10_000], vec![0.7f64; 10_000]);
    for t in [0, 20, 100, 199] {
        let eps = gaussian::<f64>(&[10_000], &mut rng);
        let x = forward_noise(&x0, t, &eps, &s).unwrap();
        let mean = x.data().iter().sum::<f64>() / 1e4;
        let var = x.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (1e4 - 1.0);
        let expected = 1.0 - s.alpha_bar[t];
        assert!((var - expected).abs() <= 0.05 * expected, "t={t}: variance {var} vs {expected}");

        let y = forward_noise(&shifted, t, &eps, &s).unwrap();
        let mean_y = y.data().iter().sum::<f64>() / 1e4;
        let target = s.alpha_bar[t].sqrt() * 0.7;
        assert!((mean_y - target).abs() <= 4.0 * (expected / 1e4).sqrt() + 1e-12, "t={t}: mean {mean_y} vs {target}");
    }
}

#[test]
fn reverse_mean_with_true_noise_is_the_posterior_mean() {
    let s = make_schedule(50, 0.01, 0.2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x0 = gaussian::<f64>(&[64], &mut rng);
    let eps = gaussian::<f64>(&[64], &mut rng);
    for t in [1, 7, 49] {
        let x_t = forward_noise(&x0, t, &eps, &s).unwrap();
        let mean = ddpm_mean(x_t.data(), eps.data(), t, &s);
        // closed form of q(x_{t-1} | x_t, x_0)
        let (ab, ab_prev) = (s.alpha_bar[t], s.alpha_bar[t - 1]);
        let c0 = ab_prev.sqrt() * s.beta[t] / (1.0 - ab);
        let ct = s.alpha[t].sqrt() * (1.0 - ab_prev) / (1.0 - ab);
        for i in 0..64 {
            let posterior = c0 * x0.data()[i] + ct * x_t.data()[i];
            assert!((mean[i] - posterior).abs() < 1e-12, "t={t}");
        }
    }
    // at t = 0 with the true noise the update returns x0 itself
    let x_1 = forward_noise(&x0, 0, &eps, &s).unwrap();
    let back = ddpm_step(&x_1, &eps, 0, &s, &mut rng).unwrap();
    for (a, b) in back.data().iter().zip(x0.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn reverse_step_stays_finite() {
    let s = make_schedule(200, 1e-4, 0.04).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for t in 0..200 {
        let x = gaussian::<f32>(&[2, 8], &mut rng).map(|v| v * 10.0);
        let e = gaussian::<f32>(&[2, 8], &mut rng);
        assert!(ddpm_step(&x, &e, t, &s, &mut rng).unwrap().all_finite());
    }
}

fn tiny_model(variant: Variant, domain: Domain) -> ModelParams {
    let cfg = UNetConfig { in_channels: variant.in_channels(), base_channels: 4, depth: 2, time_embed_dim: 8 };
    ModelParams::init(variant, domain, cfg, 5).unwrap()
}

fn observed(domain: Domain, ratio: f64, seed: u64) -> (ComplexGrid, NusMask) {
    let spec = SyntheticSpectrumSpec {
        peaks: vec![PeakSpec::new(0.25, 0.4, 1.0, 0.05), PeakSpec::new(0.6, 0.1, 0.5, 0.08)],
        noise_sigma: 0.01,
        seed,
    };
    let grid = to_domain(&synth_fid(&spec, 16, 16).unwrap(), domain).unwrap();
    let mask = gen_mask(16, ratio, seed).unwrap();
    (apply_mask(&grid, &mask).unwrap(), mask)
}

#[test]
fn kept_rows_survive_bit_exactly() {
    let s = make_schedule(20, 1e-3, 0.2).unwrap();
    for domain in [Domain::TT, Domain::TF] {
        let (obs, mask) = observed(domain, 0.6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let den = repaint_inpaint(&tiny_model(Variant::Denoising, domain), &obs, &mask, &s, 2, &mut rng).unwrap();
        let con = conditioned_inpaint(&tiny_model(Variant::Conditioned, domain), &obs, &mask, &s, &mut rng).unwrap();
        for out in [den, con] {
            assert_eq!(out.domain(), domain);
            for &r in &mask.kept {
                assert_eq!(out.row(r), obs.row(r));
            }
            assert!(out.is_finite());
        }
    }
}

#[test]
fn unmasked_input_is_reproduced() {
    let s = make_schedule(10, 1e-3, 0.2).unwrap();
    let (obs, mask) = observed(Domain::TF, 0.0, 8);
    assert_eq!(mask.kept.len(), 16);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = repaint_inpaint(&tiny_model(Variant::Denoising, Domain::TF), &obs, &mask, &s, 1, &mut rng).unwrap();
    let b = conditioned_inpaint(&tiny_model(Variant::Conditioned, Domain::TF), &obs, &mask, &s, &mut rng).unwrap();
    assert_eq!(a, obs);
    assert_eq!(b, obs);
}

#[test]
fn sampling_is_reproducible_and_batch_independent() {
    let s = make_schedule(15, 1e-3, 0.2).unwrap();
    for variant in [Variant::Denoising, Variant::Conditioned] {
        let model = tiny_model(variant, Domain::TT);
        let cases: Vec<_> = (0..3).map(|k| observed(Domain::TT, 0.5 + 0.1 * k as f64, k)).collect();
        let jobs: Vec<InpaintJob> = cases.iter().map(|(g, m)| InpaintJob { observed: g, mask: m }).collect();
        let mut rngs: Vec<ChaCha8Rng> = (0..3).map(|k| ChaCha8Rng::seed_from_u64(100 + k)).collect();
        let batched = inpaint_batch(&model, &jobs, &s, 1, &mut rngs).unwrap();
        for (k, job) in jobs.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
            let single = inpaint_batch(&model, std::slice::from_ref(job), &s, 1, std::slice::from_mut(&mut rng)).unwrap();
            assert_eq!(single[0], batched[k]);
        }
        let mut other = ChaCha8Rng::seed_from_u64(999);
        let different = inpaint_batch(&model, &jobs[..1], &s, 1, std::slice::from_mut(&mut other)).unwrap();
        assert_ne!(different[0], batched[0]);
    }
}

#[test]
fn pipelines_check_their_inputs() {
    let s = make_schedule(5, 1e-3, 0.2).unwrap();
    let (obs, mask) = observed(Domain::TT, 0.5, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let den = tiny_model(Variant::Denoising, Domain::TT);
    let con = tiny_model(Variant::Conditioned, Domain::TT);
    assert!(repaint_inpaint(&con, &obs, &mask, &s, 1, &mut rng).is_err());
    assert!(conditioned_inpaint(&den, &obs, &mask, &s, &mut rng).is_err());
    let tf = to_domain(&obs, Domain::TF).unwrap();
    assert!(repaint_inpaint(&den, &tf, &mask, &s, 1, &mut rng).is_err());
    let short = gen_mask(8, 0.5, 0).unwrap();
    assert!(repaint_inpaint(&den, &obs, &short, &s, 1, &mut rng).is_err());
    assert!(repaint_inpaint(&den, &obs, &mask, &s, 0, &mut rng).is_err());
}

#[test]
fn trained_model_carries_the_data_gain() {
    let grids: Vec<ComplexGrid> = (0..6).map(|s| observed(Domain::TF, 0.0, s).0).collect();
    let cfg = TrainConfig { n_steps: 3, batch_size: 2, split: (1.0, 0.0), checkpoint_every: 1, ..TrainConfig::default() };
    let unet = UNetConfig { in_channels: 2, base_channels: 4, depth: 2, time_embed_dim: 8 };
    let sched = ScheduleConfig { t: 10, ..ScheduleConfig::default() };
    let out = train(&grids, Domain::TF, Variant::Denoising, &cfg, &unet, &sched).unwrap();
    assert_eq!(out.report.losses.len(), 3);

    // every grid is unit-maximum before the gain, so the gain is 1/rms over all of them
    let (sum, n) = grids.iter().fold((0.0, 0usize), |(s, n), g| {
        let m = g.data().iter().map(|z| z.norm()).fold(0.0, f64::max);
        (s + g.data().iter().map(|z| (z / m).norm_sqr()).sum::<f64>(), n + 2 * g.data().len())
    });
    let want = (n as f64 / sum).sqrt();
    let got = out.checkpoint.model.data_gain;
    assert!((got - want).abs() < 1e-4 * want, "{got} vs {want}");

    let (obs, mask) = observed(Domain::TF, 0.6, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rec = repaint_inpaint(&out.checkpoint.model, &obs, &mask, &sched.build().unwrap(), 1, &mut rng).unwrap();
    assert!(rec.is_finite());
    for &r in &mask.kept {
        assert_eq!(rec.row(r), obs.row(r));
    }
}
