use geoguide_core::grid::Plane;
use geoguide_core::sampling::{
    downsample_mask, forward_noise, replace_latent, sag_sample, sag_sample_observed, Codec, LatentGrid,
    LatentMask, NoiseSchedule, OracleDenoiser, ReplacementNoise, SamplingConfig, ScheduleKind,
};
use geoguide_core::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KINDS: [ScheduleKind; 2] = [ScheduleKind::RectifiedFlow, ScheduleKind::VariancePreserving];

fn random_grid<R: Rng>(rng: &mut R, w: usize, h: usize, c: usize) -> LatentGrid {
    let values = (0..w * h * c).map(|_| rng.gen_range(-3.0..3.0)).collect();
    LatentGrid::new(w, h, c, values, 0).unwrap()
}

fn random_mask<R: Rng>(rng: &mut R, w: usize, h: usize, p: f64) -> LatentMask {
    LatentMask::from_plane(Plane::from_vec(w, h, (0..w * h).map(|_| rng.gen_bool(p)).collect()).unwrap())
}

fn config(kind: ScheduleKind, steps: usize, replace_steps: usize, seed: u64) -> SamplingConfig {
    SamplingConfig {
        steps,
        replace_steps,
        schedule: kind,
        seed,
        ..SamplingConfig::default()
    }
}

#[test]
fn replacement_matches_elementwise_formula_bit_for_bit() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let (w, h, c) = (rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..5));
        let z = random_grid(&mut rng, w, h, c);
        let zbar = random_grid(&mut rng, w, h, c);
        let p = rng.gen_range(0.0..=1.0);
        let mask = random_mask(&mut rng, w, h, p);
        let out = replace_latent(&z, &zbar, &mask).unwrap();
        for y in 0..h {
            for x in 0..w {
                let m = if *mask.mask.get(x, y) { 1.0f64 } else { 0.0 };
                for k in 0..c {
                    let i = (y * w + x) * c + k;
                    let expected = m * zbar.values[i] + (1.0 - m) * z.values[i];
                    assert_eq!(out.values[i].to_bits(), expected.to_bits());
                    let picked = if m == 1.0 { zbar.values[i] } else { z.values[i] };
                    assert_eq!(out.values[i], picked);
                }
            }
        }
    }
}

#[test]
fn unguided_oracle_run_reaches_its_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for kind in KINDS {
        let target = random_grid(&mut rng, 8, 6, 4);
        let guide = random_grid(&mut rng, 8, 6, 4);
        let mask = random_mask(&mut rng, 8, 6, 0.5);
        let cfg = config(kind, 25, 0, 7);
        let mut den = OracleDenoiser::new(target.clone());
        let out = sag_sample(&mut den, &cfg.schedule().unwrap(), &guide, &mask, &cfg).unwrap();
        assert!(out.events.is_empty());
        assert_eq!(out.latent.level, 0);
        assert!(out.latent.max_abs_diff(&target, None) < 1e-5);
    }
}

fn trajectory(den: &mut OracleDenoiser, guide: &LatentGrid, mask: &LatentMask, cfg: &SamplingConfig) -> Vec<LatentGrid> {
    let mut path = Vec::new();
    sag_sample_observed(den, &cfg.schedule().unwrap(), guide, mask, cfg, &mut |s| {
        path.push(s.latent.clone())
    })
    .unwrap();
    path
}

#[test]
fn agreeing_guidance_leaves_the_trajectory_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for kind in KINDS {
        let target = random_grid(&mut rng, 8, 6, 4);
        let full = LatentMask::full(8, 6);
        let free = trajectory(&mut OracleDenoiser::new(target.clone()), &target, &full, &config(kind, 25, 0, 5));
        let guided = trajectory(&mut OracleDenoiser::new(target.clone()), &target, &full, &config(kind, 25, 12, 5));
        assert_eq!(free.len(), 25);
        for (a, b) in free.iter().zip(&guided) {
            assert!(a.max_abs_diff(b, None) < 1e-9);
        }
        assert!(guided[24].max_abs_diff(&target, None) < 1e-5);
    }
}

#[test]
fn full_replacement_pins_the_result_to_the_guide() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for kind in KINDS {
        let target = random_grid(&mut rng, 8, 6, 4);
        let guide = random_grid(&mut rng, 8, 6, 4);
        let cfg = config(kind, 25, 25, 11);
        let mut den = OracleDenoiser::new(target);
        let out = sag_sample(&mut den, &cfg.schedule().unwrap(), &guide, &LatentMask::full(8, 6), &cfg).unwrap();
        assert_eq!(out.events.len(), 25);
        assert!(out.latent.max_abs_diff(&guide, None) < 1e-5);
    }
}

#[test]
fn masked_cells_follow_the_guide_and_the_rest_the_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for kind in KINDS {
        let target = random_grid(&mut rng, 10, 7, 3);
        let guide = random_grid(&mut rng, 10, 7, 3);
        let mask = random_mask(&mut rng, 10, 7, 0.4);
        let cfg = config(kind, 25, 25, 13);
        let mut den = OracleDenoiser::new(target.clone());
        let out = sag_sample(&mut den, &cfg.schedule().unwrap(), &guide, &mask, &cfg).unwrap();
        let unobserved = mask.mask.map(|m| !m);
        assert!(out.latent.max_abs_diff(&guide, Some(&mask.mask)) < 1e-5, "{kind:?}");
        assert!(out.latent.max_abs_diff(&target, Some(&unobserved)) < 1e-5, "{kind:?}");
    }
}

#[test]
fn forward_noise_variance_matches_the_schedule() {
    for kind in KINDS {
        let schedule = NoiseSchedule::new(kind, 25).unwrap();
        let zero = LatentGrid::zeros(64, 64, 16);
        for t in [1usize, 5, 13, 20, 25] {
            let eps = LatentGrid::gaussian(64, 64, 16, 99, t as u64);
            let z = forward_noise(&zero, t, &eps, &schedule).unwrap();
            let n = z.values.len() as f64;
            let mean = z.values.iter().sum::<f64>() / n;
            let var = z.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let tau = schedule.tau(t).unwrap();
            // Standard error of a sample variance is about sqrt(2 / n) relative.
            let tol = 5.0 * (2.0 / n).sqrt() * tau * tau;
            assert!((var - tau * tau).abs() <= tol, "{kind:?} t={t}: {var} vs {}", tau * tau);
            assert_eq!(tau, t as f64 / 25.0);
        }
    }
}

#[test]
fn default_run_replaces_during_the_first_twelve_of_twenty_five_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let target = random_grid(&mut rng, 4, 4, 2);
    let guide = random_grid(&mut rng, 4, 4, 2);
    let mask = random_mask(&mut rng, 4, 4, 0.5);
    let cfg = SamplingConfig::default();
    let mut den = OracleDenoiser::new(target);
    let out = sag_sample(&mut den, &cfg.schedule().unwrap(), &guide, &mask, &cfg).unwrap();
    assert_eq!(out.events.len(), 12);
    for (k, e) in out.events.iter().enumerate() {
        assert_eq!((e.step, e.t), (k + 1, 25 - k));
        assert_eq!(e.fraction, mask.fraction());
    }
}

#[test]
fn sampling_is_deterministic_per_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let target = random_grid(&mut rng, 6, 6, 3);
    let guide = random_grid(&mut rng, 6, 6, 3);
    let mask = random_mask(&mut rng, 6, 6, 0.5);
    let run = |seed| {
        let cfg = SamplingConfig {
            replacement_noise: ReplacementNoise::FreshPerStep,
            ..config(ScheduleKind::RectifiedFlow, 25, 12, seed)
        };
        trajectory(&mut OracleDenoiser::new(target.clone()), &guide, &mask, &cfg)
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1), run(2));
}

#[test]
fn block_codec_round_trip_is_the_block_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let image = Image::from_vec(32, 24, 3, (0..32 * 24 * 3).map(|_| rng.gen::<f32>()).collect()).unwrap();
    let codec = Codec::BlockMean { block: 8 };
    let back = codec.decode(&codec.encode(&image).unwrap()).unwrap();
    for y in 0..24 {
        for x in 0..32 {
            for c in 0..3 {
                let (bx, by) = (x / 8 * 8, y / 8 * 8);
                let mut sum = 0.0f64;
                for yy in by..by + 8 {
                    for xx in bx..bx + 8 {
                        sum += image.pixel(xx, yy)[c] as f64;
                    }
                }
                assert!((back.pixel(x, y)[c] as f64 - sum / 64.0).abs() < 1e-6);
            }
        }
    }
    let blocky = codec.decode(&codec.encode(&back).unwrap()).unwrap();
    assert_eq!(blocky, back);
    assert!(Codec::BlockMean { block: 7 }.encode(&image).is_err());
}

#[test]
fn mask_downsampling_thresholds() {
    let mut m = Plane::filled(16, 8, true);
    m.set(3, 3, false);
    let strict = downsample_mask(&m, 8, 1.0).unwrap();
    assert_eq!(strict.mask.data, vec![false, true]);
    let loose = downsample_mask(&m, 8, 0.9).unwrap();
    assert_eq!(loose.mask.data, vec![true, true]);
    assert_eq!(downsample_mask(&m, 1, 1.0).unwrap().mask, m);
    assert!(downsample_mask(&m, 3, 1.0).is_err());
}
