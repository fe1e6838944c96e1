use nmrrecon_core::synth::{synth_fid, PeakSpec, SyntheticSpectrumSpec};
use nmrrecon_core::{to_domain, transform, Axis, Complex64, ComplexGrid, Direction, Domain};
use proptest::prelude::*;

fn grid_strategy() -> impl Strategy<Value = ComplexGrid> {
    (1usize..40, 1usize..40).prop_flat_map(|(r, c)| {
        prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), r * c).prop_map(move |v| {
            let data = v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect();
            ComplexGrid::from_vec(r, c, data, Domain::TF).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn unitary_round_trip_and_parseval(g in grid_strategy()) {
        for (axis, first, second) in [
            (Axis::Direct, Direction::Inverse, Direction::Forward),
            (Axis::Indirect, Direction::Forward, Direction::Inverse),
        ] {
            let mid = transform(&g, axis, first).unwrap();
            let back = transform(&mid, axis, second).unwrap();
            prop_assert_eq!(back.domain(), Domain::TF);
            prop_assert!(back.relative_error(&g) <= 1e-10);
            if g.energy() > 0.0 {
                prop_assert!((mid.energy() - g.energy()).abs() <= 1e-10 * g.energy());
            }
        }
    }

    #[test]
    fn synthesis_is_linear_in_amplitude(a in 0.1f64..3.0, b in 0.1f64..3.0, fi in 0.0f64..1.0, fd in 0.0f64..1.0) {
        let peak = PeakSpec::new(fi, fd, 1.0, 0.04);
        let spec = |peaks: Vec<PeakSpec>| SyntheticSpectrumSpec { peaks, noise_sigma: 0.0, seed: 0 };
        let other = PeakSpec::new(1.0 - fi * 0.5, fd * 0.5, 1.0, 0.07);
        let both = synth_fid(&spec(vec![PeakSpec { amplitude: a, ..peak }, PeakSpec { amplitude: b, ..other }]), 16, 12).unwrap();
        let single_a = synth_fid(&spec(vec![peak]), 16, 12).unwrap().scale(a);
        let single_b = synth_fid(&spec(vec![other]), 16, 12).unwrap().scale(b);
        let mut sum = single_a.clone();
        for (s, v) in sum.data_mut().iter_mut().zip(single_b.data()) {
            *s += v;
        }
        prop_assert!(both.relative_error(&sum) < 1e-12);
    }
}

#[test]
fn single_peak_lands_on_expected_bin() {
    let spec = SyntheticSpectrumSpec {
        peaks: vec![PeakSpec::new(0.0, 0.25, 1.0, 0.05)],
        noise_sigma: 0.0,
        seed: 0,
    };
    let fid = synth_fid(&spec, 64, 64).unwrap();
    let tf = transform(&fid, Axis::Direct, Direction::Forward).unwrap();

    // brute-force DFT of each row, then mean magnitude per bin
    let n = 64;
    let mut mean_mag = vec![0.0; n];
    for i in 0..64 {
        for (k, slot) in mean_mag.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for t in 0..n {
                let ang = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                acc += fid.get(i, t) * Complex64::from_polar(1.0, ang);
            }
            *slot += (acc / (n as f64).sqrt()).norm() / 64.0;
        }
    }
    let oracle_bin = (0..n).max_by(|&a, &b| mean_mag[a].total_cmp(&mean_mag[b])).unwrap();
    assert_eq!(oracle_bin, 16);

    let fast_mean: Vec<f64> = (0..n).map(|k| (0..64).map(|i| tf.get(i, k).norm()).sum::<f64>() / 64.0).collect();
    let fast_bin = (0..n).max_by(|&a, &b| fast_mean[a].total_cmp(&fast_mean[b])).unwrap();
    assert_eq!(fast_bin, oracle_bin);
    for k in 0..n {
        assert!((fast_mean[k] - mean_mag[k]).abs() < 1e-10);
    }
}

#[test]
fn domain_round_trip_from_ff() {
    let spec = SyntheticSpectrumSpec {
        peaks: vec![PeakSpec::new(0.1, 0.2, 1.0, 0.03), PeakSpec::new(0.6, 0.9, 0.4, 0.06)],
        noise_sigma: 0.05,
        seed: 12,
    };
    let ff = to_domain(&synth_fid(&spec, 48, 40).unwrap(), Domain::FF).unwrap();
    let tt = to_domain(&ff, Domain::TT).unwrap();
    let back = to_domain(&tt, Domain::FF).unwrap();
    assert!(back.relative_error(&ff) < 1e-10);
    assert_eq!(
        to_domain(&ff, Domain::TF).unwrap(),
        transform(&ff, Axis::Indirect, Direction::Inverse).unwrap()
    );
}

#[test]
fn normalize_inverse_is_exact_enough() {
    let spec = SyntheticSpectrumSpec {
        peaks: vec![PeakSpec::new(0.3, 0.3, 2.5, 0.05)],
        noise_sigma: 0.1,
        seed: 7,
    };
    let g = synth_fid(&spec, 64, 64).unwrap();
    let (n, scale) = g.normalize().unwrap();
    assert!((n.max_magnitude() - 1.0).abs() < 1e-15);
    let back = n.scale(scale);
    for (a, b) in back.data().iter().zip(g.data()) {
        assert!((a - b).norm() <= 1e-12 * b.norm().max(1.0));
    }
}
