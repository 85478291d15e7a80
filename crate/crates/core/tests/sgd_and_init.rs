use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spikesgd_core::model::{euclidean_grad_loss, loss, spherical_grad};
use spikesgd_core::pretraining::{
    bbp_limit_correlation, build_init, build_init_with, marcenko_pastur_edges, pca_top_eigenvector, random_sphere_init,
    InitOptions, PcaSign,
};
use spikesgd_core::sgd::{run_sgd, run_sgd_isotropic, seeded_rng, INIT_STREAM};
use spikesgd_core::{Activation, Frame, InitSpec, ModelParams, Sample, SgdConfig};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn h3() -> Activation {
    Activation::hermite(3).unwrap()
}

#[test]
fn per_sample_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let f = h3();
    let d = 12;
    let params = ModelParams::new(d, 1.0, 0.45, 0.3).unwrap();
    for _ in 0..20 {
        let x = random_sphere_init(d, &mut rng).unwrap();
        let s = params.sample(&f, &mut rng);
        let g = euclidean_grad_loss(&x, &s, &f).unwrap();
        let eps = 1e-6;
        for i in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += eps;
            xm[i] -= eps;
            let fd = (loss(&xp, &s, &f) - loss(&xm, &s, &f)) / (2.0 * eps);
            let scale = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-8);
            assert!((fd - g[i]).abs() / scale <= 1e-4, "coord {i}: {fd} vs {}", g[i]);
        }
    }
}

#[test]
fn pca_tracks_bbp_prediction() {
    let d = 400;
    let mut total = 0.0;
    for seed in 1..=5u64 {
        let params = ModelParams::new(d, 1.0, 0.45, 0.0).unwrap();
        let frame = Frame::from_params(&params);
        let mut rng = seeded_rng(seed, INIT_STREAM);
        let built = build_init_with(
            &InitSpec::Pca(20 * d),
            &params,
            &frame,
            &InitOptions::default(),
            &mut rng,
        )
        .unwrap();
        let c = dot(&built.x0, params.spike());
        assert!(c > 0.0, "aligned with the spike");
        total += c * c;
    }
    let mean = total / 5.0;
    assert!(
        (mean - bbp_limit_correlation(0.05, 1.0)).abs() <= 0.05,
        "mean |v.v_hat|^2 = {mean}"
    );
}

#[test]
fn null_top_eigenvalue_at_edge() {
    let (d, n) = (400, 1600);
    let params = ModelParams::new(d, 0.0, 1.0, 0.0).unwrap();
    let mut acc = 0.0;
    for seed in 1..=5u64 {
        let mut rng = seeded_rng(seed, INIT_STREAM);
        let mut data = vec![0.0; n * d];
        for row in data.chunks_exact_mut(d) {
            params.sample_features_into(&mut rng, row);
        }
        let est = pca_top_eigenvector(&data, d, 1e-8, 1000, &mut rng).unwrap();
        let c = dot(&est.v_hat, params.spike());
        assert!(c * c <= 0.1);
        acc += est.top_eigenvalue;
    }
    let mean = acc / 5.0;
    assert!(
        (mean - marcenko_pastur_edges(0.25).1).abs() <= 0.05,
        "mean top eigenvalue {mean}"
    );
}

#[test]
fn labeled_loss_sign_policy_picks_correct_sign() {
    let params = ModelParams::new(100, 2.0, 0.9, 0.0).unwrap();
    let frame = Frame::from_params(&params);
    let opts = InitOptions {
        pca_sign: PcaSign::LabeledLoss {
            activation: h3(),
            n_samples: 2000,
        },
        ..InitOptions::default()
    };
    let built = build_init_with(&InitSpec::Pca(4000), &params, &frame, &opts, &mut seeded_rng(3, 0)).unwrap();
    assert!(dot(&built.x0, params.v0()) > 0.5);
}

#[test]
fn random_init_is_spread_out() {
    let d = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut inside = 0;
    for _ in 0..1000 {
        let x = random_sphere_init(d, &mut rng).unwrap();
        if x[0].abs() <= 5.0 / (d as f64).sqrt() {
            inside += 1;
        }
    }
    assert!(inside >= 990);
}

#[test]
fn fixed_init_residual_is_isotropic() {
    let d = 20;
    let params = ModelParams::new(d, 1.0, 0.45, 0.0).unwrap();
    let frame = Frame::from_params(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 20_000;
    let (mut first, mut second) = (vec![0.0; d], vec![0.0; d]);
    for _ in 0..n {
        let x = build_init(&InitSpec::FixedCorrelation(0.3, 0.4), &params, &frame, &mut rng).unwrap();
        for i in 2..d {
            first[i] += x[i];
            second[i] += x[i] * x[i];
        }
    }
    // residual norm^2 = 0.75 spread over d - 2 coordinates
    let want = 0.75 / (d - 2) as f64;
    for i in 2..d {
        assert!((first[i] / n as f64).abs() < 0.01);
        assert!((second[i] / n as f64 - want).abs() < 0.1 * want);
    }
}

#[test]
fn runs_are_reproducible() {
    let params = ModelParams::new(60, 1.0, 0.45, 0.1).unwrap();
    let x0 = random_sphere_init(60, &mut seeded_rng(5, INIT_STREAM)).unwrap();
    let mut cfg = SgdConfig::new(5000, 0.5, 5);
    cfg.record_stride = 7;
    let a = run_sgd(&params, &h3(), &x0, &cfg).unwrap();
    let b = run_sgd(&params, &h3(), &x0, &cfg).unwrap();
    assert_eq!(a.trajectory.to_csv(), b.trajectory.to_csv());
    cfg.seed = 6;
    let c = run_sgd(&params, &h3(), &x0, &cfg).unwrap();
    assert_ne!(a.trajectory.to_csv(), c.trajectory.to_csv());
}

#[test]
fn linear_activation_recovers_quickly_from_random() {
    let d = 200;
    let params = ModelParams::new(d, 0.0, 1.0, 0.0).unwrap();
    let f = Activation::polynomial(spikesgd_core::Polynomial::identity());
    let x0 = random_sphere_init(d, &mut seeded_rng(1, INIT_STREAM)).unwrap();
    let r = run_sgd_isotropic(&params, &f, &x0, &SgdConfig::new(20 * d, 0.5, 1)).unwrap();
    assert!(r.recovered, "final {:?}", r.trajectory.final_state);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn spherical_projection_is_orthogonal_and_idempotent(seed in any::<u64>(), d in 2usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_sphere_init(d, &mut rng).unwrap();
        let g: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let p = spherical_grad(&x, &g).unwrap();
        prop_assert!(dot(&p, &x).abs() < 1e-12 * (1.0 + dot(&g, &g).sqrt()));
        let pp = spherical_grad(&x, &p).unwrap();
        for (a, b) in p.iter().zip(&pp) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn init_is_unit_norm(seed in any::<u64>(), m1 in -0.7f64..0.7, m2 in -0.7f64..0.7, eta in 0.01f64..=1.0) {
        let params = ModelParams::new(30, 1.0, 0.45, 0.0).unwrap();
        let frame = Frame::from_params(&params);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for spec in [InitSpec::Random, InitSpec::FixedCorrelation(m1, m2), InitSpec::Transfer(eta), InitSpec::Pca(60)] {
            let x = build_init(&spec, &params, &frame, &mut rng).unwrap();
            prop_assert!((dot(&x, &x).sqrt() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn sgd_keeps_unit_norm(seed in any::<u64>(), delta in 0.0f64..2.0) {
        let params = ModelParams::new(30, 1.0, 0.45, 0.2).unwrap();
        let x0 = random_sphere_init(30, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut cfg = SgdConfig::new(300, delta, seed);
        cfg.record_stride = 1;
        let r = run_sgd(&params, &h3(), &x0, &cfg).unwrap();
        for (_, s) in r.trajectory.states() {
            prop_assert!(s.norm_sq() <= 1.0 + 1e-9);
        }
        let max = r.trajectory.m1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(r.trajectory.sup_abs_m1 >= max);
    }

    #[test]
    fn init_spec_round_trips(m1 in -0.7f64..0.7, m2 in -0.7f64..0.7, n in 2usize..100_000, eta in 0.001f64..=1.0) {
        for spec in [InitSpec::Random, InitSpec::Pca(n), InitSpec::FixedCorrelation(m1, m2), InitSpec::Transfer(eta)] {
            let back: InitSpec = spec.to_string().parse().unwrap();
            prop_assert_eq!(back, spec);
        }
    }

    #[test]
    fn sample_loss_is_zero_at_target_without_noise(seed in any::<u64>()) {
        let params = ModelParams::new(16, 1.0, 0.45, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s: Sample = params.sample(&h3(), &mut rng);
        prop_assert_eq!(loss(params.v0(), &s, &h3()), 0.0);
    }
}
