use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
use streamcore::datasets::{
    gen_abrupt_drift, gen_biased_fair, gen_imbalanced_anomaly, AbruptDriftConfig, BiasedFairnessConfig,
    ImbalancedAnomalyConfig,
};
use streamcore::evaluation::{prequential_run, PrequentialConfig};
use streamcore::fairness::SensitiveSpec;
use streamcore::neural::{MlpClassifier, MlpConfig};
use streamcore::preprocessing::StandardScaler;
use streamcore::tree::{HoeffdingTree, HoeffdingTreeConfig};
use streamcore::{ClassId, Estimator, Pipeline};

fn mlp() -> Pipeline {
    Pipeline::new(
        vec![Box::new(StandardScaler::new())],
        Box::new(MlpClassifier::new(MlpConfig::default()).unwrap()),
    )
    .unwrap()
}

#[test]
fn repeated_runs_are_identical() {
    let cfg = AbruptDriftConfig {
        drift_positions: vec![1_500],
        seed: 4,
        ..Default::default()
    };
    let pc = PrequentialConfig::default();
    let a = prequential_run(&mut mlp(), gen_abrupt_drift(&cfg).unwrap().take(3_000), &pc).unwrap();
    let b = prequential_run(&mut mlp(), gen_abrupt_drift(&cfg).unwrap().take(3_000), &pc).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.summary, b.summary);
}

#[test]
fn drift_dents_rolling_accuracy_of_a_tree() {
    let cfg = AbruptDriftConfig {
        drift_positions: vec![5_000],
        seed: 2,
        ..Default::default()
    };
    let mut tree = HoeffdingTree::default();
    let run = prequential_run(
        &mut tree,
        gen_abrupt_drift(&cfg).unwrap().take(10_000),
        &PrequentialConfig::default(),
    )
    .unwrap();
    let at = |step: u64| run.records.iter().find(|r| r.step == step).unwrap().rolling_accuracy;
    assert!(at(5_000) > at(5_300), "{} vs {}", at(5_000), at(5_300));
}

#[test]
fn fairness_columns_follow_the_sensitive_spec() {
    let spec = SensitiveSpec::new("group", "deprived", "favored", ClassId(1));
    let mut tree = HoeffdingTree::new(HoeffdingTreeConfig::fair(spec.clone())).unwrap();
    let pc = PrequentialConfig {
        sensitive: Some(spec),
        ..Default::default()
    };
    let stream = gen_biased_fair(&BiasedFairnessConfig::default())
        .unwrap()
        .map(|s| s.instance)
        .take(2_000);
    let run = prequential_run(&mut tree, stream, &pc).unwrap();
    assert_eq!(run.records.len(), 20);
    for r in &run.records {
        let sp = r.statistical_parity.unwrap();
        let eo = r.equal_opportunity.unwrap();
        assert!((-1.0..=1.0).contains(&sp) && (-1.0..=1.0).contains(&eo));
    }
}

#[test]
fn anomaly_labels_evaluate_as_binary_classes() {
    let stream = gen_imbalanced_anomaly(&ImbalancedAnomalyConfig::default())
        .unwrap()
        .take(3_000);
    let pc = PrequentialConfig {
        positive: Some(ClassId(1)),
        ..Default::default()
    };
    let mut tree = HoeffdingTree::default();
    let run = prequential_run(&mut tree, stream, &pc).unwrap();
    assert!(run.error.is_none());
    assert!(run.summary.accuracy > 0.9);
    assert!(tree.memory_bytes() > 0);
}

proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]

    #[test]
    fn records_land_on_stride_multiples(n in 1usize..1_200, stride in 1u64..300, seed in 0u64..1_000) {
        let cfg = AbruptDriftConfig { seed, ..Default::default() };
        let pc = PrequentialConfig { stride, ..Default::default() };
        let mut tree = HoeffdingTree::default();
        let run = prequential_run(&mut tree, gen_abrupt_drift(&cfg).unwrap().take(n), &pc).unwrap();
        prop_assert_eq!(run.records.len() as u64, n as u64 / stride);
        prop_assert_eq!(run.summary.steps, n as u64);
        for (i, r) in run.records.iter().enumerate() {
            prop_assert_eq!(r.step, (i as u64 + 1) * stride);
            prop_assert!((0.0..=1.0).contains(&r.accuracy));
            prop_assert!((0.0..=1.0).contains(&r.rolling_accuracy));
        }
    }
}
