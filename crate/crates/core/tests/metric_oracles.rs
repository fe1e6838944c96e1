//! Metric values checked against direct arithmetic and brute force.

use nmrrecon_core::metrics::{
    hallucination_ratio, match_peaks, mse, pick_peaks, r2, snr, snr_ratio, Peak,
};
use nmrrecon_core::synth::{synth_fid, PeakSpec, SyntheticSpectrumSpec};
use nmrrecon_core::{to_domain, Complex64, ComplexGrid, Domain};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn real_grid(values: &[f64]) -> ComplexGrid {
    ComplexGrid::from_vec(4, 4, values.iter().map(|&v| Complex64::new(v, 0.0)).collect(), Domain::FF).unwrap()
}

#[test]
fn mse_and_r2_hand_fixture() {
    let reference = [3.0, 1.0, 0.0, 2.0, 1.0, 4.0, 1.0, 0.0, 0.0, 2.0, 1.0, 1.0, 2.0, 0.0, 3.0, 1.0];
    let mut perturbed = reference;
    perturbed[5] = 3.0;
    perturbed[14] = 2.0;
    let a = real_grid(&reference);
    let b = real_grid(&perturbed);
    // two entries off by one, normalised by the reference max 4: 2 * (1/4)^2 / 16
    assert!((mse(&a, &b).unwrap() - 2.0 * 0.0625 / 16.0).abs() < 1e-12);
    // mean = 22/16 = 1.375, total sum of squares = 52 - 16 * 1.375^2 = 21.75
    assert!((r2(&a, &b).unwrap() - (1.0 - 2.0 / 21.75)).abs() < 1e-12);

    let mut corrupted = reference;
    corrupted[0] = -1.0; // magnitude 1, residual 2
    let c = real_grid(&corrupted);
    assert!((r2(&a, &c).unwrap() - (1.0 - 4.0 / 21.75)).abs() < 1e-12);
}

#[test]
fn metrics_are_invariant_to_joint_rescaling() {
    let spec = SyntheticSpectrumSpec {
        peaks: vec![PeakSpec::new(0.2, 0.3, 1.0, 0.05), PeakSpec::new(0.7, 0.6, 0.5, 0.05)],
        noise_sigma: 0.02,
        seed: 1,
    };
    let a = to_domain(&synth_fid(&spec, 32, 32).unwrap(), Domain::FF).unwrap();
    let mut spec_b = spec.clone();
    spec_b.seed = 2;
    let b = to_domain(&synth_fid(&spec_b, 32, 32).unwrap(), Domain::FF).unwrap();
    let (m, r, s) = (mse(&a, &b).unwrap(), r2(&a, &b).unwrap(), snr_ratio(&a, &b).unwrap());
    for c in [0.01, 3.0, 250.0] {
        let (sa, sb) = (a.scale(c), b.scale(c));
        assert!((mse(&sa, &sb).unwrap() - m).abs() <= 1e-12 * m.max(1e-300));
        assert!((r2(&sa, &sb).unwrap() - r).abs() < 1e-12);
        assert!((snr_ratio(&sa, &sb).unwrap() - s).abs() < 1e-12 * s);
    }
}

fn noise_grid(rng: &mut ChaCha8Rng, n: usize, sigma: f64) -> ComplexGrid {
    ComplexGrid::from_fn(n, n, Domain::FF, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * sigma
    })
}

#[test]
fn snr_of_pure_noise_is_bounded() {
    // Monte Carlo calibration: max over 4096 Rayleigh magnitudes against the
    // scaled MAD sits around 6.
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let s = snr(&noise_grid(&mut rng, 64, 1.0)).unwrap();
        assert!((2.0..=8.0).contains(&s), "pure-noise snr {s}");
    }
}

fn mad(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let med = 0.5 * (values[n / 2 - 1] + values[n / 2]);
    let mut dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    0.5 * (dev[n / 2 - 1] + dev[n / 2])
}

#[test]
fn snr_detects_a_strong_peak() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut g = noise_grid(&mut rng, 64, 1.0);
    let noise_mad = mad(&mut g.magnitudes());
    g.set(20, 30, Complex64::new(100.0 * noise_mad, 0.0));
    assert!(snr(&g).unwrap() >= 50.0);
}

#[test]
fn extra_noise_lowers_snr_ratio() {
    let spec = SyntheticSpectrumSpec {
        peaks: vec![PeakSpec::new(0.25, 0.5, 1.0, 0.04)],
        noise_sigma: 0.01,
        seed: 3,
    };
    let reference = to_domain(&synth_fid(&spec, 64, 64).unwrap(), Domain::FF).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let extra = noise_grid(&mut rng, 64, 0.05);
    let mut noisy = reference.clone();
    for (a, b) in noisy.data_mut().iter_mut().zip(extra.data()) {
        *a += b;
    }
    assert!(snr_ratio(&reference, &noisy).unwrap() < 1.0);
    assert!(snr_ratio(&reference, &reference).unwrap() == 1.0);
}

#[test]
fn single_synthetic_peak_is_picked_at_its_bin() {
    for (fi, fd) in [(0.25, 0.5), (10.0 / 64.0, 50.0 / 64.0), (0.703125, 0.140625)] {
        let spec = SyntheticSpectrumSpec {
            peaks: vec![PeakSpec::new(fi, fd, 1.0, 0.05)],
            noise_sigma: 0.0,
            seed: 0,
        };
        let ff = to_domain(&synth_fid(&spec, 64, 64).unwrap(), Domain::FF).unwrap();
        let peaks = pick_peaks(&ff, 0.1).unwrap();
        assert_eq!(peaks.len(), 1, "{peaks:?}");
        assert_eq!(peaks[0].row, (fi * 64.0_f64).round() as usize);
        assert_eq!(peaks[0].col, (fd * 64.0_f64).round() as usize);
    }
}

#[test]
fn two_separated_peaks_are_both_picked() {
    let spec = SyntheticSpectrumSpec {
        peaks: vec![
            PeakSpec::new(16.0 / 64.0, 16.0 / 64.0, 1.0, 0.05),
            PeakSpec::new(20.0 / 64.0, 40.0 / 64.0, 0.5, 0.05),
        ],
        noise_sigma: 0.0,
        seed: 0,
    };
    let ff = to_domain(&synth_fid(&spec, 64, 64).unwrap(), Domain::FF).unwrap();
    let peaks = pick_peaks(&ff, 0.1).unwrap();
    assert_eq!(peaks.len(), 2, "{peaks:?}");
    assert_eq!((peaks[0].row, peaks[0].col), (16, 16));
    assert_eq!((peaks[1].row, peaks[1].col), (20, 40));
}

fn permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == items.len() {
        out.push(items.clone());
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, out);
        items.swap(k, i);
    }
}

#[test]
fn matching_equals_brute_force_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut perms = Vec::new();
    permutations(&mut (0..6).collect(), 0, &mut perms);
    assert_eq!(perms.len(), 720);
    for _ in 0..100 {
        let mut peak = || Peak {
            row: rng.random_range(0..64),
            col: rng.random_range(0..64),
            magnitude: 1.0,
        };
        let a: Vec<Peak> = (0..6).map(|_| peak()).collect();
        let b: Vec<Peak> = (0..6).map(|_| peak()).collect();
        let brute = perms
            .iter()
            .map(|p| (0..6).map(|i| a[i].distance(&b[p[i]])).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        // an infinite gate keeps every solved pair
        let m = match_peaks(&a, &b, f64::MAX).unwrap();
        assert_eq!(m.pairs.len(), 6);
        assert!((m.total_distance() - brute).abs() < 1e-9, "{} vs {}", m.total_distance(), brute);
        let h = hallucination_ratio(&match_peaks(&a, &b, 3.0).unwrap(), b.len());
        assert!((0.0..=1.0).contains(&h));
    }
}
