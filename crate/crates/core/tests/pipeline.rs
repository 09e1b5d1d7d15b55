use pqgdr::indices::DetectorConfig;
use pqgdr::pipeline::{evaluate, extract_features, noise_sweep, train, Grid};
use pqgdr::siggen::{make_dataset, ClassLabel, DatasetConfig, LabeledDataset, SnrPolicy};
use pqgdr::svm::SvmParams;
use pqgdr::waveio::{load_dataset, read_manifest, regenerate, save_dataset, SampleFormat};
use pqgdr::Error;

fn small(seed: u64, per_class: usize, snr: SnrPolicy) -> LabeledDataset {
    make_dataset(&DatasetConfig {
        per_class_count: per_class,
        master_seed: seed,
        snr,
        ..DatasetConfig::default()
    })
    .unwrap()
}

#[test]
fn dataset_directories_round_trip() {
    let ds = small(3, 2, SnrPolicy::Mixed { lo: 34.0, hi: 50.0 });
    for format in [SampleFormat::Csv, SampleFormat::Bin] {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path(), format).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), ds);
        assert_eq!(regenerate(&read_manifest(dir.path()).unwrap()).unwrap(), ds);
    }
}

#[test]
fn same_seed_same_manifest_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    save_dataset(&small(9, 1, SnrPolicy::Clean), a.path(), SampleFormat::Csv).unwrap();
    save_dataset(&small(9, 1, SnrPolicy::Clean), b.path(), SampleFormat::Csv).unwrap();
    let read = |d: &std::path::Path| std::fs::read(d.join("manifest.json")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn items_carry_their_class() {
    let ds = small(1, 3, SnrPolicy::Clean);
    assert_eq!(ds.len(), 30);
    for (c, n) in ds.class_counts() {
        assert_eq!(n, 3, "{c}");
    }
    for e in &ds.entries {
        assert_eq!(e.label, e.spec.label);
        assert_eq!(e.spec.magnitude_event.is_some(), e.label.has_sag() || e.label.has_swell());
        assert_eq!(e.spec.transient.is_some(), e.label.has_transient());
        assert_eq!(!e.spec.harmonics.is_empty(), e.label.has_harmonics());
        assert_eq!(e.spec.flicker.is_some(), e.label == ClassLabel::Flicker);
    }
}

#[test]
fn empty_dataset_is_rejected() {
    let mut ds = small(1, 1, SnrPolicy::Clean);
    ds.entries.clear();
    assert!(matches!(extract_features(&ds, &DetectorConfig::default()), Err(Error::Data(_))));
}

#[test]
fn clean_sines_have_null_gdr() {
    let mut ds = small(4, 6, SnrPolicy::Clean);
    for e in &mut ds.entries {
        e.spec.label = ClassLabel::Harmonics;
        e.spec.harmonics.clear();
        e.spec.magnitude_event = None;
        e.spec.transient = None;
        e.spec.flicker = None;
        e.waveform = pqgdr::siggen::synthesize(&e.spec).unwrap();
    }
    let f = extract_features(&ds, &DetectorConfig::default()).unwrap();
    assert_eq!(f.len(), ds.len());
    for v in &f.vectors {
        assert!(v.k2 < 0.5, "k2 {}", v.k2);
    }
}

#[test]
fn training_set_is_recovered_and_sweeps_have_one_row_per_level() {
    let cfg = DetectorConfig::default();
    let ds = small(21, 12, SnrPolicy::Clean);
    let feats = extract_features(&ds, &cfg).unwrap();
    assert!(feats.failures.is_empty());
    let (model, search) = train(&feats, &SvmParams::default(), Some(&Grid::default())).unwrap();
    assert_eq!(search.unwrap().points.len(), 15);
    assert_eq!(model.machines.len(), 45);

    let ev = evaluate(&model, &ds, &cfg).unwrap();
    assert_eq!(ev.matrix.total(), ds.len() as u64);
    assert!(ev.matrix.overall_accuracy() >= 99.0, "{}", ev.matrix.render());

    let one = LabeledDataset {
        entries: ds.entries.iter().filter(|e| e.label == ClassLabel::Flicker).cloned().collect(),
        ..ds.clone()
    };
    let m = evaluate(&model, &one, &cfg).unwrap().matrix;
    let rows: Vec<u64> = (0..10).map(|i| m.row_total(i)).collect();
    assert_eq!(rows.iter().filter(|&&r| r > 0).count(), 1);

    let sweep = noise_sweep(&model, &one, &[50.0, 30.0, 40.0, 34.0, 40.0], &cfg).unwrap();
    let snrs: Vec<f64> = sweep.rows.iter().map(|r| r.snr_db).collect();
    assert_eq!(snrs, vec![30.0, 34.0, 40.0, 50.0]);
    assert_eq!(sweep.to_csv().lines().count(), 5);
}

#[test]
fn unknown_test_class_is_a_configuration_error() {
    let cfg = DetectorConfig::default();
    let ds = small(2, 4, SnrPolicy::Clean);
    let keep = [ClassLabel::Sag, ClassLabel::Swell];
    let sub = LabeledDataset {
        entries: ds.entries.iter().filter(|e| keep.contains(&e.label)).cloned().collect(),
        ..ds.clone()
    };
    let (model, _) = train(&extract_features(&sub, &cfg).unwrap(), &SvmParams::default(), None).unwrap();
    assert!(matches!(evaluate(&model, &ds, &cfg), Err(Error::Config(_))));
}

#[test]
fn renoising_keeps_the_signals() {
    let ds = small(8, 1, SnrPolicy::Clean);
    let noisy = ds.renoised(Some(40.0)).unwrap();
    let back = noisy.renoised(None).unwrap();
    assert_eq!(back.entries.iter().map(|e| &e.waveform).collect::<Vec<_>>(),
               ds.entries.iter().map(|e| &e.waveform).collect::<Vec<_>>());
    assert_ne!(noisy.entries[0].waveform, ds.entries[0].waveform);
}
