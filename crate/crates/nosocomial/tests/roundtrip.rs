use chrono::NaiveDate;
use nosocomial::ingest::{build_ward_data, parse_ward_files, serialize_ward, StudyWindow};
use nosocomial_core::simulate::{generate_synthetic_ward, SyntheticWardConfig};
use nosocomial_core::{ModelKind, Theta, WardData};

fn start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2001, 3, 1).unwrap()
}

fn write(ward: &WardData) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    let mut b = (Vec::new(), Vec::new(), Vec::new());
    serialize_ward(ward, start(), &mut b.0, &mut b.1, &mut b.2).unwrap();
    b
}

fn synthetic(seed: u64, readmission_probability: f64) -> WardData {
    let theta = Theta::new(0.7, 0.2, 0.01, 0.02, 0.004, ModelKind::Full);
    let mut cfg = SyntheticWardConfig::new(theta, seed);
    cfg.ward_id = "ICU-A".into();
    cfg.study_days = 200;
    cfg.readmission_probability = readmission_probability;
    generate_synthetic_ward(&cfg).unwrap().ward
}

#[test]
fn simulate_ingest_reserialize_is_identity() {
    for (seed, readmit) in [(1, 0.0), (2, 0.3), (3, 0.6)] {
        let ward = synthetic(seed, readmit);
        let files = write(&ward);
        let table = parse_ward_files(&files.0[..], &files.1[..], &files.2[..]).unwrap();
        let window = StudyWindow {
            start: start(),
            end: start() + chrono::Days::new(ward.study_length as u64),
            readmission_window: ward.readmission_window,
        };
        let (back, warnings) = build_ward_data(&table, "ICU-A", &window, Some(10)).unwrap();
        assert!(warnings.is_empty(), "{warnings:?}");
        assert_eq!(back, ward, "seed {seed}");
        assert_eq!(write(&back), files, "seed {seed}");
    }
}
