//! End-to-end runs through the public API, starting from model files.

use std::path::PathBuf;

use gwtail::julia::default_critical_angle;
use gwtail::model::{load_model, PgfModel};
use gwtail::montecarlo::sample_martingale;
use gwtail::quadrature::{density_quadrature_grid, QuadratureConfig};
use gwtail::series::{SeriesConfig, SeriesEvaluator};
use gwtail::spectral::{check_conditions, SpectralData};

fn model_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../models")
        .join(name)
}

#[test]
fn shipped_models_load_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for name in [
        "two_type_p1_3.json",
        "two_type_p2_3.json",
        "mixed_rational.json",
        "geometric.json",
        "cyclic_three_type.json",
    ] {
        let m = load_model(model_path(name)).unwrap();
        let copy = dir.path().join(name);
        std::fs::write(&copy, m.to_json_string()).unwrap();
        let back = load_model(&copy).unwrap();
        assert_eq!(back.to_json_string(), m.to_json_string(), "{name}");
    }
}

#[test]
fn series_matches_quadrature_from_file() {
    let m = load_model(model_path("two_type_p1_3.json")).unwrap();
    let sd = SpectralData::compute(&m).unwrap();
    let theta = default_critical_angle(&m, sd.right.as_slice()).unwrap().angle;
    assert!(check_conditions(&m, Some(theta)).all_pass());
    let xs = [0.3, 1.0, 2.0];
    let quad = density_quadrature_grid(&m, &QuadratureConfig::default(), &xs).unwrap();
    let cfg = SeriesConfig { m_cap: 30, ..SeriesConfig::default() };
    let ser = SeriesEvaluator::new(&m, &sd, &cfg).unwrap();
    for (j, &x) in xs.iter().enumerate() {
        let s = ser.density_series(x).unwrap();
        for i in 0..2 {
            let q = quad.values[j][i];
            assert!((s[i] - q).abs() <= 1e-6 * q.abs(), "x={x} i={i}: {} vs {q}", s[i]);
        }
    }
}

#[test]
fn simulated_mean_matches_perron_vector() {
    let m: PgfModel = load_model(model_path("two_type_p1_3.json")).unwrap();
    let sd = SpectralData::compute(&m).unwrap();
    let samples = sample_martingale(&m, &sd, 0, 14, 4000, 11).unwrap();
    let z = (samples.mean() - sd.right[0]) / samples.std_error();
    assert!(z.abs() < 4.0, "z = {z}");
}
