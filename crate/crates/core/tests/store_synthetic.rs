use proptest::prelude::*;
use selfseed_core::eval::{classification_accuracy, Variant};
use selfseed_core::similarity::zero_shot_predict;
use selfseed_core::synthetic::{generate, SynthConfig};
use selfseed_core::{load_store, write_store};

fn zero_shot_accuracy(config: &SynthConfig) -> f64 {
    let store = generate(config).unwrap();
    let preds = zero_shot_predict(store.embeddings());
    classification_accuracy(
        &preds,
        store.ground_truth().unwrap(),
        config.num_classes,
        Variant::ZeroShot,
    )
    .unwrap()
    .accuracy
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 8,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn synthetic_store_round_trips_exactly(seed in any::<u64>(), bias in 0.0f64..1.0) {
        let config = SynthConfig {
            num_classes: 4,
            images_per_class: 50,
            clip_dim: 12,
            feature_dim: 6,
            label_bias: bias,
            rng_seed: seed,
            ..SynthConfig::default()
        };
        let store = generate(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_store(&store, dir.path()).unwrap();
        prop_assert_eq!(&load_store(dir.path()).unwrap(), &store);
        prop_assert_eq!(&load_store(&manifest).unwrap(), &store);
    }
}

#[test]
fn more_noise_means_worse_zero_shot() {
    let accuracy = |noise_sigma: f64| {
        (0..5)
            .map(|rng_seed| {
                zero_shot_accuracy(&SynthConfig {
                    noise_sigma,
                    rng_seed,
                    ..SynthConfig::default()
                })
            })
            .sum::<f64>()
            / 5.0
    };
    let levels = [0.05, 0.5, 1.0, 2.0];
    let acc: Vec<f64> = levels.iter().map(|&s| accuracy(s)).collect();
    assert!(acc.windows(2).all(|w| w[1] <= w[0]), "{acc:?}");
    assert_eq!(acc[0], 1.0);
    assert!(acc[3] < 0.9, "{acc:?}");
}

#[test]
fn label_bias_hurts_zero_shot() {
    let clean = SynthConfig::default();
    let biased = SynthConfig {
        label_bias: 1.0,
        confusion_strength: 0.9,
        ..SynthConfig::default()
    };
    assert!(zero_shot_accuracy(&biased) < zero_shot_accuracy(&clean));
}
