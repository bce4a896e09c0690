use std::path::PathBuf;

use pdforest::model::{parse_model, DumpFormat};
use pdforest::synth::{random_dataset, random_ensemble, rng};
use pdforest::*;

fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn load_model(name: &str) -> TreeEnsemble {
    let bytes = std::fs::read(fixture_path(name)).unwrap();
    parse_model(&bytes, DumpFormat::TreeDumpJson).unwrap()
}

#[test]
fn hand_computed_predictions() {
    let m = load_model("toy.json");
    assert_eq!(m.feature_names(), ["age", "income"]);
    // ties go to the `no` branch
    let cases = [
        ([29.0, 10000.0], 0.5 - 1.0 + 0.125),
        ([30.0, 49999.0], 0.5 + 0.25 - 0.125),
        ([30.0, 50000.0], 0.5 + 2.0 - 0.125),
        ([60.0, 50000.0], 0.5 + 1.0 - 0.125),
        ([45.0, 20000.0], 0.5 + 0.25 - 0.125),
        ([45.0, 19999.5], 0.5 + 0.25 + 0.125),
    ];
    for (row, want) in cases {
        assert_eq!(m.predict(&row).unwrap(), want, "row {row:?}");
    }
}

#[test]
fn dump_roundtrip_preserves_predictions() {
    let m = load_model("toy.json");
    let again = parse_model(
        m.to_dump_json().to_string().as_bytes(),
        DumpFormat::TreeDumpJson,
    )
    .unwrap();
    assert_eq!(m, again);
    assert_eq!(m.fingerprint(), again.fingerprint());
}

fn golden_fixture() -> (TreeEnsemble, Dataset) {
    (
        load_model("ensemble10.json"),
        load_csv(fixture_path("background.csv")).unwrap(),
    )
}

/// Writes the frozen ensemble and its brute-force reference values.
#[test]
#[ignore]
fn regenerate_goldens() {
    let mut r = rng(2024);
    let b = random_dataset(&mut r, 64, 5);
    let m = random_ensemble(&mut r, &b, 10, 4);
    std::fs::write(
        fixture_path("ensemble10.json"),
        serde_json::to_string_pretty(&m.to_dump_json()).unwrap(),
    )
    .unwrap();
    b.write_csv(std::fs::File::create(fixture_path("background.csv")).unwrap())
        .unwrap();
    let (m, b) = golden_fixture();
    let coalitions = [vec![0], vec![1, 3], vec![4, 2, 0], vec![3], vec![1, 2, 4]];
    let pdvs: Vec<serde_json::Value> = coalitions
        .iter()
        .enumerate()
        .map(|(i, fs)| {
            let row = b.row(i * 7);
            let c = Coalition::from_row(fs, &row).unwrap();
            serde_json::json!({
                "features": fs,
                "values": c.values(),
                "pdv": oracle_pdv(&m, &b, &c).unwrap(),
            })
        })
        .collect();
    let predictions: Vec<f64> = b.rows().take(10).map(|x| m.predict(&x).unwrap()).collect();
    let goldens = serde_json::json!({
        "mean_prediction": mean_prediction(&m, &b).unwrap(),
        "predictions": predictions,
        "pdv": pdvs,
    });
    std::fs::write(
        fixture_path("goldens.json"),
        serde_json::to_string_pretty(&goldens).unwrap(),
    )
    .unwrap();
}

#[test]
fn frozen_reference_values() {
    let (m, b) = golden_fixture();
    let goldens: serde_json::Value =
        serde_json::from_slice(&std::fs::read(fixture_path("goldens.json")).unwrap()).unwrap();
    let mean = goldens["mean_prediction"].as_f64().unwrap();
    assert!((mean_prediction(&m, &b).unwrap() - mean).abs() < 1e-9);
    for (x, p) in b.rows().zip(goldens["predictions"].as_array().unwrap()) {
        assert!((m.predict(&x).unwrap() - p.as_f64().unwrap()).abs() < 1e-12);
    }
    let engine = Engine::new(&m, EngineOptions::default()).unwrap();
    for g in goldens["pdv"].as_array().unwrap() {
        let fs: Vec<usize> = serde_json::from_value(g["features"].clone()).unwrap();
        let vs: Vec<f64> = serde_json::from_value(g["values"].clone()).unwrap();
        let want = g["pdv"].as_f64().unwrap();
        let c = Coalition::new(fs.clone(), vs.clone()).unwrap();
        assert!((oracle_pdv(&m, &b, &c).unwrap() - want).abs() < 1e-9);
        let mut row = vec![0.0; b.n_cols()];
        for (f, v) in fs.iter().zip(&vs) {
            row[*f] = *v;
        }
        let got = engine
            .evaluate_assignment(&Marginal::Background(&b), &row, &fs)
            .unwrap();
        assert!((got - want).abs() < 1e-9);
    }
}

#[test]
fn frozen_pdp_curve_matches_reference_points() {
    let (m, b) = golden_fixture();
    let r = wpdp(
        &m,
        &Marginal::Background(&b),
        5,
        Sampling::Quantile,
        &EngineOptions::default(),
    )
    .unwrap();
    for curve in &r.features {
        for p in &curve.points {
            let c = Coalition::new(vec![curve.feature], vec![p.value]).unwrap();
            assert!((p.pdv - oracle_pdv(&m, &b, &c).unwrap()).abs() < 1e-9);
        }
    }
}
