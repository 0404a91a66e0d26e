//! Metric definitions against direct computations, and the experiment
//! runner's bookkeeping.

use scu_core::data::generate_synthetic;
use scu_core::eval::{backdoor_accuracy, clean_accuracy, decode_mse, decode_subset, run_experiment};
use scu_core::{ChannelConfig, ChannelKind, CodecConfig, DownstreamClassifier, Error, ExperimentConfig, Method, Parameter,
    SemanticCodec};

fn channel() -> ChannelConfig {
    ChannelConfig::new(ChannelKind::Awgn, 5.0)
}

fn small_codec(input_dim: usize) -> SemanticCodec {
    let cfg = CodecConfig {
        input_dim,
        latent_dim: 4,
        hidden: vec![8],
        beta: 0.1,
    };
    SemanticCodec::new(&cfg, 9).unwrap()
}

/// A classifier whose output ignores its input and always favours `class`.
fn constant_classifier(input_dim: usize, classes: usize, class: usize) -> DownstreamClassifier {
    let mut clf = DownstreamClassifier::new(input_dim, 4, classes, 0).unwrap();
    let last = clf.network.layers.last_mut().unwrap();
    let shape = last.weight.tensor.shape().to_vec();
    last.weight = Parameter::new("w", &shape, vec![0.0; shape.iter().product()]).unwrap();
    let mut bias = vec![0.0; classes];
    bias[class] = 1.0;
    last.bias = Parameter::new("b", &[classes], bias).unwrap();
    clf
}

#[test]
fn decode_mse_matches_direct_summation_on_three_samples() {
    let data = generate_synthetic(3, 4, 4, 3, 1).unwrap();
    let codec = small_codec(16);
    let idx = [0, 1, 2];
    let decoded = decode_subset(&codec, &data, &idx, &channel(), 5).unwrap();
    let mut total = 0.0;
    for (row, &i) in idx.iter().enumerate() {
        for p in 0..16 {
            let d = data.image(i)[p] - decoded[row * 16 + p];
            total += d * d;
        }
    }
    let brute = total / (3.0 * 16.0);
    let mse = decode_mse(&codec, &data, &idx, &channel(), 5).unwrap();
    assert!((mse - brute).abs() < 1e-12, "{mse} vs {brute}");
}

#[test]
fn untrained_codec_error_is_bounded_by_one() {
    let data = generate_synthetic(50, 4, 4, 5, 2).unwrap();
    for seed in 0..5 {
        let codec = SemanticCodec::new(
            &CodecConfig {
                input_dim: 16,
                latent_dim: 3,
                hidden: vec![6],
                beta: 1.0,
            },
            seed,
        )
        .unwrap();
        let mse = decode_mse(&codec, &data, &data.all_indices(), &channel(), seed).unwrap();
        assert!((0.0..=1.0).contains(&mse), "{mse}");
    }
}

#[test]
fn constant_classifiers_give_exact_accuracies() {
    let classes = 5;
    let data = generate_synthetic(100, 4, 4, classes, 3).unwrap();
    let codec = small_codec(16);
    let all = data.all_indices();
    let target = constant_classifier(16, classes, 2);
    let other = constant_classifier(16, classes, 4);
    assert_eq!(backdoor_accuracy(&target, &codec, &data, &all, 2, &channel(), 0).unwrap(), 1.0);
    assert_eq!(backdoor_accuracy(&other, &codec, &data, &all, 2, &channel(), 0).unwrap(), 0.0);
    // Labels cycle through the classes, so each class holds exactly 1/classes of the set.
    let acc = clean_accuracy(&target, &codec, &data, &all, &channel(), 0).unwrap();
    assert_eq!(acc, 1.0 / classes as f64);
}

#[test]
fn empty_subsets_are_contract_errors() {
    let data = generate_synthetic(10, 4, 4, 2, 4).unwrap();
    let codec = small_codec(16);
    let clf = DownstreamClassifier::new(16, 4, 2, 0).unwrap();
    assert!(matches!(decode_mse(&codec, &data, &[], &channel(), 0), Err(Error::Contract(_))));
    assert!(matches!(backdoor_accuracy(&clf, &codec, &data, &[], 0, &channel(), 0), Err(Error::Contract(_))));
    assert!(matches!(clean_accuracy(&clf, &codec, &data, &[], &channel(), 0), Err(Error::Contract(_))));
}

#[test]
fn desk_cell_none_and_retrain() {
    let cfg = ExperimentConfig {
        methods: vec![Method::None, Method::Retrain],
        seeds: vec![0, 1],
        timing: false,
        ..ExperimentConfig::default()
    };
    let outcome = run_experiment(&cfg, 1).unwrap();
    assert!(outcome.failures.is_empty(), "{:?}", outcome.failures);
    assert_eq!(outcome.reports.len(), 4);
    for r in &outcome.reports {
        assert!(r.pre.backdoor_acc >= 0.85, "seed {}: pre backdoor {}", r.seed, r.pre.backdoor_acc);
        assert!(r.pre.clean_acc >= 0.85, "seed {}: pre clean {}", r.seed, r.pre.clean_acc);
        assert_eq!(r.runtime_s, 0.0);
        match r.method {
            Method::None => {
                assert_eq!(r.headline(), r.pre);
                assert!(r.curves.loss.is_empty());
            }
            Method::Retrain => {
                assert!(r.backdoor_acc <= 0.15, "seed {}: retrain backdoor {}", r.seed, r.backdoor_acc);
                assert_eq!(r.curves.loss.len(), cfg.train.epochs);
            }
            other => panic!("unexpected method {other}"),
        }
    }
}

#[test]
fn small_matrix_is_sorted_and_repeatable() {
    let cfg = ExperimentConfig::from_text(
        "dataset.n_train = 200\ndataset.n_test = 50\ncodec.hidden = 16\ntrain.epochs = 2\n\
         classifier.epochs = 2\nunlearn.epochs = 2\nedr = 0.1,0.05\nseeds = 3,1\n\
         method = vbu,scu,none\ntiming = false\n",
    )
    .unwrap();
    let first = run_experiment(&cfg, 2).unwrap();
    let second = run_experiment(&cfg, 1).unwrap();
    assert_eq!(first, second);
    let keys: Vec<(String, f64, u64)> = first.reports.iter().map(|r| (r.method.to_string(), r.edr, r.seed)).collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    assert_eq!(keys, sorted);
    assert_eq!(keys.len(), 3 * 2 * 2);
}
