use ssvep_core::config::{Classifier, NetworkPreset, RunConfig};
use ssvep_core::convnet::{ModelParams, NetworkSpec};
use ssvep_core::data::TrialStore;
use ssvep_core::harness::{prepare, run_experiment, run_subjects, Prepared};
use ssvep_core::synth::{generate_store, SynthConfig};
use ssvep_core::{AugmentMode, Error};

fn store(subjects: u16, snr_db: f64, trials: u16) -> TrialStore {
    let base = SynthConfig {
        snr_db,
        seed: 77,
        ..Default::default()
    };
    generate_store(&base, subjects, &[12.0, 15.0], trials).unwrap()
}

fn cfg(classifier: Classifier) -> RunConfig {
    RunConfig {
        classifier,
        seed: Some(3),
        ..Default::default()
    }
}

#[test]
fn fbcca_on_noiseless_store() {
    let s = store(10, f64::INFINITY, 6);
    let report = run_experiment(&cfg(Classifier::Fbcca), &s, None, 0).unwrap();
    assert_eq!(report.rows.len(), 10);
    assert!(report.mean_accuracy_pct() >= 99.0);
    assert!(report
        .rows
        .iter()
        .all(|r| r.metrics.confusion.total() == 120));
}

#[test]
fn majority_control_is_exactly_half() {
    let s = store(3, 0.0, 2);
    let report = run_experiment(&cfg(Classifier::Majority), &s, None, 0).unwrap();
    assert_eq!(report.mean_accuracy_pct(), 50.0);
    let mean = report
        .rows
        .iter()
        .map(|r| 100.0 * r.metrics.accuracy)
        .sum::<f64>()
        / 3.0;
    assert!((report.mean_accuracy_pct() - mean).abs() < 1e-12);
}

#[test]
fn svm_reports_identical_for_any_job_count() {
    let s = store(3, 0.0, 2);
    let mut c = cfg(Classifier::Svm);
    c.svm.max_epochs = 30;
    c.svm.patience = 10;
    c.augment = AugmentMode::TimeOnly;
    let a = run_experiment(&c, &s, None, 1).unwrap().to_csv();
    let b = run_experiment(&c, &s, None, 3).unwrap().to_csv();
    assert_eq!(a, b);
    assert!(a.starts_with("subject,classifier,accuracy_pct,f1_macro,tp,fp,fn,tn\n"));
}

#[test]
fn svm_learns_clean_signals() {
    let s = store(3, 20.0, 2);
    let mut c = cfg(Classifier::Svm);
    c.svm.max_epochs = 300;
    c.svm.patience = 50;
    let report = run_experiment(&c, &s, None, 0).unwrap();
    assert!(
        report.mean_accuracy_pct() > 90.0,
        "{}",
        report.summary_text()
    );
}

#[test]
fn transfer_cnn_requires_pretrained_parameters() {
    let s = store(2, 0.0, 1);
    let err = run_experiment(&cfg(Classifier::Cnn), &s, None, 0).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

fn quick_cnn(classifier: Classifier) -> RunConfig {
    let mut c = cfg(classifier);
    c.network = NetworkPreset::Tiny;
    c.use_regime = false;
    c.cnn.max_epochs = 3;
    c.cnn.patience = 3;
    c.cnn.batch_size = 16;
    c.test_subjects = Some(vec![2]);
    c
}

#[test]
fn transfer_keeps_prefix_frozen() {
    let s = store(2, 10.0, 1);
    let source = ModelParams::init(&NetworkSpec::tiny(), 99).unwrap();
    let runs = run_subjects(&quick_cnn(Classifier::Cnn), &s, Some(&source), 0).unwrap();
    let params = runs[0].model.params().unwrap();
    for name in ["conv1.weight", "conv1.bias"] {
        assert_eq!(
            params.get(name).unwrap().data,
            source.get(name).unwrap().data
        );
        assert!(params.get(name).unwrap().frozen);
    }
    assert_eq!(runs[0].test_ids.len(), 20);
    assert!(runs[0].test_ids.iter().all(|id| id.subject_id == 2));
}

#[test]
fn scratch_cnn_runs_and_logs() {
    let s = store(2, 10.0, 1);
    let runs = run_subjects(&quick_cnn(Classifier::CnnNoTransfer), &s, None, 0).unwrap();
    let log = runs[0].log.as_ref().unwrap();
    assert_eq!(log.epochs.len(), 3);
    assert!(log
        .to_csv()
        .starts_with("epoch,train_loss,val_loss,val_acc\n"));
}

#[test]
fn unknown_test_subject_is_a_data_error() {
    let s = store(2, 0.0, 1);
    let mut c = cfg(Classifier::Majority);
    c.test_subjects = Some(vec![7]);
    assert!(matches!(
        run_experiment(&c, &s, None, 0),
        Err(Error::Data(_))
    ));
}

#[test]
fn prepared_inputs_follow_classifier() {
    let s = store(2, 0.0, 1);
    assert!(
        matches!(prepare(&cfg(Classifier::Fbcca), &s).unwrap(), Prepared::Raw(v) if v.len() == 40)
    );
    assert!(
        matches!(prepare(&cfg(Classifier::Svm), &s).unwrap(), Prepared::Images(v) if v.len() == 40)
    );
}
