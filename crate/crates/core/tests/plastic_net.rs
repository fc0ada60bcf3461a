mod common;

use common::{close, RefNet};
use evoplastic::plastic::{Activation, LayerOptions, PlasticNetwork};
use proptest::prelude::*;

fn plastic() -> LayerOptions {
    LayerOptions::default()
}

fn sizes_strategy() -> impl Strategy<Value = Vec<usize>> {
    (1usize..=3, 1usize..=3, 1usize..=3).prop_map(|(a, b, c)| vec![a, b, c])
}

#[test]
fn two_layer_scalar_net_matches_hand_transcription() {
    // 1 -> 1 -> 1, identity activation
    // layer: w, alpha, bias, mod_w, mod_b
    let theta = [0.5, 1.0, 0.1, 0.8, -0.2, -1.5, 0.7, 0.0, 1.2, 0.3];
    let template =
        PlasticNetwork::<f64>::zeros(&[1, 1, 1], Activation::Identity, plastic()).unwrap();
    let mut net = template.from_flat(&theta).unwrap();

    let (w1, a1, b1, mw1, mb1) = (0.5, 1.0, 0.1, 0.8, -0.2);
    let (w2, a2, b2, mw2, mb2) = (-1.5f64, 0.7, 0.0, 1.2, 0.3);
    let (mut h1, mut h2) = (0.0f64, 0.0f64);
    for obs in [2.0f64, -1.0, 0.5] {
        let x1 = (w1 + a1 * h1) * obs + b1;
        h1 = (h1 + (mw1 * x1 + mb1).tanh() * x1 * obs).clamp(-1.0, 1.0);
        let x2 = (w2 + a2 * h2) * x1 + b2;
        h2 = (h2 + (mw2 * x2 + mb2).tanh() * x2 * x1).clamp(-1.0, 1.0);
        let got = net.step(&[obs]).unwrap()[0];
        assert!(close(got, x2, 1e-12), "{got} vs {x2}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_reference_transcription(
        sizes in sizes_strategy(),
        seed in any::<u64>(),
        tanh in any::<bool>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let act = if tanh { Activation::Tanh } else { Activation::Identity };
        let template = PlasticNetwork::<f64>::zeros(&sizes, act, plastic()).unwrap();
        let theta: Vec<f64> = (0..template.genome_len()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut net = template.from_flat(&theta).unwrap();
        let mut reference = RefNet::from_genome(&sizes, &theta, 1.0, tanh);
        for _ in 0..50 {
            let obs: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.5..1.5)).collect();
            let a = net.step(&obs).unwrap();
            let b = reference.step(&obs);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(close(*x, *y, 1e-12), "{} vs {}", x, y);
            }
        }
    }

    #[test]
    fn trace_never_leaves_clip_bound(
        sizes in sizes_strategy(),
        theta_scale in 0.1f64..10.0,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let template = PlasticNetwork::<f64>::zeros(&sizes, Activation::Identity, plastic()).unwrap();
        let theta: Vec<f64> = (0..template.genome_len()).map(|_| rng.random_range(-theta_scale..theta_scale)).collect();
        let mut net = template.from_flat(&theta).unwrap();
        for _ in 0..200 {
            let obs: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-5.0..5.0)).collect();
            net.step(&obs).unwrap();
            for l in net.layers() {
                prop_assert!(l.trace().iter().all(|h| (-1.0..=1.0).contains(h)));
            }
        }
    }

    #[test]
    fn zero_alpha_is_history_free(sizes in sizes_strategy(), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut template = PlasticNetwork::<f64>::zeros(&sizes, Activation::Tanh, plastic()).unwrap();
        let theta: Vec<f64> = (0..template.genome_len()).map(|_| rng.random_range(-2.0..2.0)).collect();
        template = template.from_flat(&theta).unwrap();
        for l in template.layers_mut() {
            l.alpha_mut().iter_mut().for_each(|a| *a = 0.0);
        }
        let mut net = template.clone();
        let probe: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let first = net.step(&probe).unwrap();
        for _ in 0..20 {
            let obs: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-3.0..3.0)).collect();
            net.step(&obs).unwrap();
        }
        prop_assert_eq!(net.step(&probe).unwrap(), first);
    }

    #[test]
    fn zero_modulator_keeps_traces_zero(sizes in sizes_strategy(), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let template = PlasticNetwork::<f64>::zeros(&sizes, Activation::Tanh, plastic()).unwrap();
        let theta: Vec<f64> = (0..template.genome_len()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut net = template.from_flat(&theta).unwrap();
        for l in net.layers_mut() {
            l.modulator_weights_mut().iter_mut().for_each(|m| *m = 0.0);
            l.set_modulator_bias(0.0);
        }
        let probe: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let first = net.step(&probe).unwrap();
        for _ in 0..20 {
            let obs: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-3.0..3.0)).collect();
            net.step(&obs).unwrap();
        }
        prop_assert!(net.layers().iter().all(|l| l.trace().iter().all(|&h| h == 0.0)));
        prop_assert_eq!(net.step(&probe).unwrap(), first);
    }

    #[test]
    fn genome_round_trip_is_bitwise(
        sizes in prop::collection::vec(1usize..6, 2..5),
        plastic_flag in any::<bool>(),
        bias in any::<bool>(),
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let opts = LayerOptions { plastic: plastic_flag, bias, omega: 1.0 };
        let template = PlasticNetwork::<f64>::zeros(&sizes, Activation::Tanh, opts).unwrap();
        let per_layer: usize = sizes.windows(2).map(|p| {
            let n = p[0] * p[1];
            n + if bias { p[1] } else { 0 } + if plastic_flag { n + p[1] + 1 } else { 0 }
        }).sum();
        prop_assert_eq!(template.genome_len(), per_layer);
        let theta: Vec<f64> = (0..per_layer).map(|_| f64::from_bits(rng.random::<u64>() >> 2)).collect();
        let net = template.from_flat(&theta).unwrap();
        let back = net.to_flat();
        prop_assert_eq!(
            back.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            theta.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }
}
