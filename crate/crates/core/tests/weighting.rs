use dataset_equity::gfl::weight_table;
use dataset_equity::likelihood::{cluster_probabilities, likelihood_histogram, scaled_likelihoods};
use dataset_equity::{gfl_weight, ClusterAssignment, GflParams, NoisePolicy, NOISE};
use proptest::prelude::*;

fn assignment(raw: &[i64]) -> ClusterAssignment {
    ClusterAssignment::from_raw_labels(raw, "test", serde_json::Value::Null)
}

/// Raw labels with at least one non-noise sample; -1 is noise.
fn labels_strategy() -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(-1i64..6, 1..120).prop_filter("needs a cluster", |v| v.iter().any(|&l| l >= 0))
}

fn policy_strategy() -> impl Strategy<Value = NoisePolicy> {
    prop_oneof![Just(NoisePolicy::Singleton), Just(NoisePolicy::MinCluster), Just(NoisePolicy::Unit)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn likelihood_is_probability_over_largest(raw in labels_strategy(), policy in policy_strategy()) {
        let a = assignment(&raw);
        let bank = scaled_likelihoods(&a, policy).unwrap();
        let probs = cluster_probabilities(&a).unwrap();
        let p_max = probs.values().copied().fold(0.0, f64::max);
        for (c, &l) in &bank.cluster_likelihood {
            prop_assert!((l - probs[c] / p_max).abs() <= 1e-15);
            prop_assert!(l > 0.0 && l <= 1.0);
        }
        prop_assert!(bank.cluster_likelihood.values().any(|&l| l == 1.0));
        let n: usize = raw.len();
        prop_assert!((probs.values().sum::<f64>() - (n - a.noise_count()) as f64 / n as f64).abs() < 1e-12);
        for (i, &l) in a.labels().iter().enumerate() {
            let v = bank.sample_likelihood[i];
            if l == NOISE {
                let want = match policy {
                    NoisePolicy::Singleton => 1.0 / bank.largest_cluster_size() as f64,
                    NoisePolicy::MinCluster => bank.cluster_likelihood.values().copied().fold(1.0, f64::min),
                    NoisePolicy::Unit => 1.0,
                };
                prop_assert_eq!(v, want);
            } else {
                prop_assert_eq!(v, bank.cluster_likelihood[&(l as usize)]);
            }
        }
    }

    /// Renaming cluster ids changes nothing per sample.
    #[test]
    fn likelihood_relabel_invariance(raw in labels_strategy(), shift in 1i64..50, policy in policy_strategy()) {
        let renamed: Vec<i64> = raw.iter().map(|&l| if l < 0 { l } else { 1000 - l * shift }).collect();
        let a = scaled_likelihoods(&assignment(&raw), policy).unwrap();
        let b = scaled_likelihoods(&assignment(&renamed), policy).unwrap();
        prop_assert_eq!(a.sample_likelihood, b.sample_likelihood);
    }

    /// Repeating the whole dataset k times keeps every cluster likelihood. A
    /// singleton noise sample stays a cluster of one, so its value shrinks by k.
    #[test]
    fn likelihood_under_dataset_repetition(raw in labels_strategy(), k in 2usize..5, policy in policy_strategy()) {
        let repeated: Vec<i64> = raw.iter().cycle().take(raw.len() * k).copied().collect();
        let a = scaled_likelihoods(&assignment(&raw), policy).unwrap();
        let b = scaled_likelihoods(&assignment(&repeated), policy).unwrap();
        let noise_singleton = 1.0 / b.largest_cluster_size() as f64;
        prop_assert_eq!(b.largest_cluster_size(), k * a.largest_cluster_size());
        for (i, &v) in b.sample_likelihood.iter().enumerate() {
            if raw[i % raw.len()] < 0 && policy == NoisePolicy::Singleton {
                prop_assert_eq!(v, noise_singleton);
            } else {
                prop_assert_eq!(v, a.sample_likelihood[i % raw.len()]);
            }
        }
    }

    #[test]
    fn histogram_counts_every_cluster(raw in labels_strategy(), bins in 1usize..40) {
        let bank = scaled_likelihoods(&assignment(&raw), NoisePolicy::Singleton).unwrap();
        let h = likelihood_histogram(&bank, bins).unwrap();
        prop_assert_eq!(h.len(), bins);
        prop_assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), bank.n_clusters());
        prop_assert!(h.last().unwrap().count >= 1);
    }

    #[test]
    fn gfl_weight_range_and_monotonicity(
        p in 0.0f64..=1.0,
        dp in 0.0f64..=1.0,
        eta in 0.0f64..20.0,
        gamma in 0.0f64..10.0,
    ) {
        let params = GflParams::new(eta, gamma).unwrap();
        let w = gfl_weight(p, &params).unwrap();
        prop_assert!(w >= params.floor() - 1e-15 && w <= 1.0 + 1e-15);
        let q = (p + dp).min(1.0);
        prop_assert!(gfl_weight(q, &params).unwrap() <= w + 1e-15);
        // larger eta pulls every weight toward 1
        let flatter = GflParams::new(eta + 1.0, gamma).unwrap();
        prop_assert!(gfl_weight(p, &flatter).unwrap() >= w - 1e-15);
    }

    #[test]
    fn weight_table_matches_pointwise_weights(raw in labels_strategy(), eta in 0.0f64..5.0, gamma in 0.0f64..6.0) {
        let bank = scaled_likelihoods(&assignment(&raw), NoisePolicy::Singleton).unwrap();
        let ids: Vec<String> = (0..raw.len()).map(|i| format!("s{i}")).collect();
        let params = GflParams::new(eta, gamma).unwrap();
        let table = weight_table(&ids, &bank, &params).unwrap();
        for (i, &w) in table.weights.iter().enumerate() {
            prop_assert_eq!(w, gfl_weight(bank.sample_likelihood[i], &params).unwrap());
        }
        // the most common mode always gets the smallest weight
        let min = table.weights.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(min, gfl_weight(1.0, &params).unwrap());
    }
}

#[test]
fn gfl_rejects_out_of_range_inputs() {
    let params = GflParams::default();
    assert!(gfl_weight(-0.01, &params).is_err());
    assert!(gfl_weight(1.01, &params).is_err());
    assert!(gfl_weight(f64::NAN, &params).is_err());
    assert!(GflParams::new(-1.0, 1.0).is_err());
    assert!(GflParams::new(1.0, f64::INFINITY).is_err());
}

#[test]
fn all_noise_has_no_likelihoods() {
    assert!(scaled_likelihoods(&assignment(&[-1, -1, -1]), NoisePolicy::Singleton).is_err());
}
