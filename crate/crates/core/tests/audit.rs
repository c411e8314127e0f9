use harmonize_core::audit::{
    assess_efficacy, leakage_experiment, EfficacyMode, EfficacyOptions, LeakageOptions, LeakageTask, Scale, Verdict,
};
use harmonize_core::simulate::{simulate_dataset, FeatureKind, SimulationConfig};

fn quick_efficacy(seed: u64) -> EfficacyOptions {
    let mut o = EfficacyOptions::at_scale(Scale::Desk, seed);
    o.scheme.repetitions = 4;
    o.n_perm = 39;
    o.gbt.n_rounds = 20;
    o
}

#[test]
fn strong_site_effect_is_detected_then_reduced() {
    let mut c = SimulationConfig::standard(FeatureKind::Ct, 3, 25, 4).unwrap();
    c.gamma_sd = 0.5;
    let (d, _) = simulate_dataset(&c).unwrap();
    let o = quick_efficacy(1);

    let raw = assess_efficacy(&d, EfficacyMode::Raw, &o).unwrap();
    assert_eq!(raw.permutation_p, 1.0 / 40.0);
    assert_eq!(raw.verdict, Verdict::NotReduced);
    assert!(raw.harmonized_samples.is_none() && raw.wilcoxon_p.is_none());
    assert_eq!(raw.null_distribution.len(), 39);

    let h = assess_efficacy(&d, EfficacyMode::HarmonizerInCv, &o).unwrap();
    assert_eq!(h.raw_samples, raw.raw_samples);
    let hs = h.harmonized_samples.as_ref().unwrap();
    assert!(hs.mean() < raw.raw_samples.mean());
    assert!(h.wilcoxon_p.unwrap() < 0.001);
    assert!(matches!(h.verdict, Verdict::Reduced | Verdict::Removed));
    let total: u64 = h.harmonized_confusion.as_ref().unwrap().counts.iter().flatten().sum();
    assert_eq!(total, 75 * 4);
}

#[test]
fn efficacy_is_reproducible() {
    let (d, _) = simulate_dataset(&SimulationConfig::preset("ct-k3-n25", 8).unwrap()).unwrap();
    let o = quick_efficacy(3);
    let a = assess_efficacy(&d, EfficacyMode::HarmonizeAll, &o).unwrap();
    let b = assess_efficacy(&d, EfficacyMode::HarmonizeAll, &o).unwrap();
    assert_eq!(a, b);
}

#[test]
fn leakage_arms_share_splits_and_order_as_expected() {
    let c = SimulationConfig::preset("ct-k3-n25", 2).unwrap();
    let mut o = LeakageOptions::at_scale(Scale::Desk, 5);
    o.repetitions = 8;
    let r = leakage_experiment(&c, LeakageTask::Site, &o).unwrap();
    assert_eq!(r.fingerprints.len(), 8);
    let distinct: std::collections::BTreeSet<u64> = r.fingerprints.iter().map(|f| f.holdout).collect();
    assert_eq!(distinct.len(), 8);
    assert!(r.internal_leaked.mean < r.external.mean);
    assert!(r.leakage_gap() > 0.0);
    assert_eq!(r.metric, "balanced_accuracy");

    o.not_leaked_arm = false;
    let without = leakage_experiment(&c, LeakageTask::Site, &o).unwrap();
    assert!(without.internal_not_leaked.is_none() && without.not_leaked_vs_external.is_none());
    assert_eq!(without.fingerprints, r.fingerprints);
    assert_eq!(without.internal_leaked, r.internal_leaked);
}

#[test]
fn age_task_reports_errors_in_years() {
    let c = SimulationConfig::preset("ct-k3-n25", 6).unwrap();
    let mut o = LeakageOptions::at_scale(Scale::Desk, 1);
    o.repetitions = 3;
    o.gbt.n_rounds = 20;
    let r = leakage_experiment(&c, LeakageTask::Age, &o).unwrap();
    assert_eq!(r.metric, "mean_absolute_error");
    assert!(r.external.values.iter().all(|&v| v > 0.0 && v < 70.0));
}
