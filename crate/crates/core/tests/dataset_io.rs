use p3d_inspect::data::{export_dataset, generate_synthetic_dataset, ingest_directory, Label, SynthConfig, GROUND_TRUTH_FILE};
use p3d_inspect::Error;

#[test]
fn export_then_ingest_round_trips() {
    let cfg = SynthConfig { n_defect: 5, n_non_defect: 4, size: 32, seed: 2, ..Default::default() };
    let (ds, _) = generate_synthetic_dataset(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    export_dataset(&ds, dir.path()).unwrap();
    assert!(dir.path().join(GROUND_TRUTH_FILE).is_file());
    let (back, report) = ingest_directory(dir.path()).unwrap();
    assert_eq!((report.defect, report.non_defect, report.skipped.len()), (5, 4, 0));
    assert_eq!(back.count(Label::Defect), 5);
    let mut a: Vec<_> = ds.items.iter().map(|i| (&i.source_id, i.image.data(), i.truth_box)).collect();
    let mut b: Vec<_> = back.items.iter().map(|i| (&i.source_id, i.image.data(), i.truth_box)).collect();
    a.sort_by_key(|t| t.0.clone());
    b.sort_by_key(|t| t.0.clone());
    assert_eq!(a, b);
}

#[test]
fn undecodable_files_are_skipped() {
    let cfg = SynthConfig { n_defect: 2, n_non_defect: 2, size: 32, seed: 3, ..Default::default() };
    let (ds, _) = generate_synthetic_dataset(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    export_dataset(&ds, dir.path()).unwrap();
    std::fs::write(dir.path().join("defect/broken.png"), b"not an image").unwrap();
    let (back, report) = ingest_directory(dir.path()).unwrap();
    assert_eq!(report.skipped.len(), 1);
    assert_eq!(back.len(), 4);
}

#[test]
fn missing_class_directory_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("defect")).unwrap();
    assert!(matches!(ingest_directory(dir.path()), Err(Error::Data(_))));
}

#[test]
fn ingest_is_idempotent() {
    let cfg = SynthConfig { n_defect: 3, n_non_defect: 3, size: 32, seed: 4, ..Default::default() };
    let (ds, _) = generate_synthetic_dataset(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    export_dataset(&ds, dir.path()).unwrap();
    assert_eq!(ingest_directory(dir.path()).unwrap().0, ingest_directory(dir.path()).unwrap().0);
}
