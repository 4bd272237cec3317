use dctchan::channel::LinearFilter;
use dctchan::dct::{dct, idct, truncation_mse};
use dctchan::neuron::{closed_form, DctModel, FeatureBasis, Indexing, InputLaw};
use dctchan::numerics::{dot, gen_eig_smallest, Mat};
use dctchan::{Rng, SampledFn, Snr};
use proptest::prelude::*;

fn signal() -> impl Strategy<Value = Vec<f64>> {
    (2usize..64).prop_flat_map(|n| prop::collection::vec(-100.0f64..100.0, n))
}

fn spd(n: usize, seed: u64) -> Mat {
    let mut rng = Rng::new(seed);
    let x = Mat::from_fn(n, n, |_, _| rng.uniform(-1.0, 1.0));
    Mat::from_fn(n, n, |i, j| {
        let s: f64 = (0..n).map(|k| x[(k, i)] * x[(k, j)]).sum();
        s + if i == j { 0.1 } else { 0.0 }
    })
}

proptest! {
    #[test]
    fn transform_preserves_energy(v in signal()) {
        let f = SampledFn::new(v).unwrap();
        let spec = dct(&f);
        let e = f.energy();
        prop_assert!((spec.energy() - e).abs() <= 1e-10 * e.max(1.0));
    }

    #[test]
    fn full_inverse_recovers_signal(v in signal()) {
        let n = v.len();
        let back = idct(&dct(&SampledFn::new(v.clone()).unwrap()), n).unwrap();
        for (a, b) in back.values().iter().zip(&v) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn truncation_error_steps_by_dropped_coefficient(v in signal()) {
        let n = v.len();
        let spec = dct(&SampledFn::new(v).unwrap());
        prop_assert!(truncation_mse(&spec, n).unwrap().abs() <= 1e-9);
        for q in 1..n {
            let drop = truncation_mse(&spec, q).unwrap() - truncation_mse(&spec, q + 1).unwrap();
            let want = spec.coeffs()[q].powi(2) / n as f64;
            prop_assert!((drop - want).abs() <= 1e-9 * (1.0 + want));
        }
    }

    #[test]
    fn features_bounded_and_prediction_bounded(
        q in 1usize..12,
        odd in any::<bool>(),
        x in 0.0f64..127.0,
        coeffs in prop::collection::vec(-5.0f64..5.0, 12),
    ) {
        let indexing = if odd { Indexing::Odd } else { Indexing::Standard };
        let basis = FeatureBasis::new(128, q, indexing).unwrap();
        let c = basis.features(x).unwrap();
        prop_assert!(c.iter().all(|v| v.abs() <= 1.0));
        let model = DctModel::from_coeffs(basis, coeffs[..q].to_vec()).unwrap();
        let l1: f64 = coeffs[..q].iter().map(|v| v.abs()).sum();
        prop_assert!(model.predict(x).unwrap().abs() <= l1 + 1e-12);
    }

    #[test]
    fn closed_form_is_linear_in_targets(seed in any::<u64>(), scale in -10.0f64..10.0) {
        let basis = FeatureBasis::standard(64, 5).unwrap();
        let mut rng = Rng::new(seed);
        let xs: Vec<f64> = (0..400).map(|_| rng.uniform(0.0, 63.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x / 9.0).sin() + rng.uniform(-0.1, 0.1)).collect();
        let scaled: Vec<f64> = ys.iter().map(|y| scale * y).collect();
        for law in [InputLaw::Uniform, InputLaw::General] {
            let a = closed_form(basis, &xs, &ys, law).unwrap();
            let b = closed_form(basis, &xs, &scaled, law).unwrap();
            for (u, v) in a.coeffs().iter().zip(b.coeffs()) {
                prop_assert!((scale * u - v).abs() <= 1e-9 * (1.0 + u.abs() * scale.abs()));
            }
        }
    }

    #[test]
    fn smallest_pencil_eigenpair(n in 1usize..7, sa in any::<u64>(), sb in any::<u64>()) {
        let (a, b) = (spd(n, sa), spd(n, sb));
        let (mu, v) = gen_eig_smallest(&a, &b).unwrap();
        let av = a.mat_vec(&v);
        let bv = b.mat_vec(&v);
        let scale = av.iter().map(|x| x.abs()).fold(1.0f64, f64::max);
        for (x, y) in av.iter().zip(&bv) {
            prop_assert!((x - mu * y).abs() <= 1e-8 * scale);
        }
        prop_assert!((dot(&v, &bv) - 1.0).abs() <= 1e-9);
        // No direction has a smaller Rayleigh quotient.
        let mut rng = Rng::new(sa ^ sb);
        for _ in 0..20 {
            let u: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
            prop_assert!(a.quad_form(&u) / b.quad_form(&u) >= mu - 1e-9 * mu.abs().max(1.0));
        }
    }

    #[test]
    fn filter_is_linear(
        xs in prop::collection::vec(-10.0f64..10.0, 1..60),
        c in -3.0f64..3.0,
    ) {
        let filt = LinearFilter::default_iir();
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x * (i as f64).cos()).collect();
        let sum: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| c * x + y).collect();
        let (fx, fy, fs) = (filt.apply(&xs), filt.apply(&ys), filt.apply(&sum));
        for i in 0..xs.len() {
            prop_assert!((c * fx[i] + fy[i] - fs[i]).abs() <= 1e-9 * (1.0 + fs[i].abs()));
        }
    }

    #[test]
    fn snr_text_round_trip(db in -60.0f64..120.0) {
        let s = Snr::Db(db);
        prop_assert_eq!(s.to_string().parse::<Snr>().unwrap(), s);
    }

    #[test]
    fn rng_streams_repeat(seed in any::<u64>()) {
        let mut a = Rng::new(seed);
        let mut b = Rng::new(seed);
        for _ in 0..16 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
            prop_assert_eq!(a.standard_normal().to_bits(), b.standard_normal().to_bits());
        }
    }
}
