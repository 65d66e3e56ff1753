mod common;

use common::dirac;
use proptest::prelude::*;
use ramified::dimension::{
    dimensional_distance, evenly_concentrated, key_lemma_check, nested_minkowski_dim, sandwich_check,
    transport_dim_estimate, MeasureArg, NestedCollection, TransportProfile,
};
use ramified::fractal_catalog::{CatalogGenerator, Dyadic, NestedBoxMode};

#[test]
fn sandwich_holds_across_the_catalog() {
    let gens = [
        CatalogGenerator::Cantor,
        CatalogGenerator::fat_cantor(0.2).unwrap(),
        CatalogGenerator::self_similar(2, 0.3).unwrap(),
        CatalogGenerator::self_similar(4, 0.4).unwrap(),
        CatalogGenerator::dyadic(Dyadic::uniform(2)).unwrap(),
        CatalogGenerator::nested_box(4, 2, 9, NestedBoxMode::Determinate).unwrap(),
    ];
    for gen in gens {
        let r = sandwich_check(&gen).unwrap();
        assert!(r.sandwich_ok, "{r:?}");
    }
}

#[test]
fn random_nested_boxes_estimate_the_dimension() {
    // random offsets make the step costs fluctuate, so the fit is only close
    for seed in 0..4 {
        let gen = CatalogGenerator::nested_box(3, 2, 4, NestedBoxMode::Random(seed)).unwrap();
        let d = transport_dim_estimate(&gen).unwrap();
        assert!((d - 4f64.ln() / 3f64.ln()).abs() < 0.05, "seed {seed}: {d}");
    }
}

#[test]
fn uniform_dyadic_dimension_is_the_ambient_dimension() {
    for m in 1..=3 {
        let d = transport_dim_estimate(&CatalogGenerator::dyadic(Dyadic::uniform(m)).unwrap()).unwrap();
        assert!((d - m as f64).abs() < 1e-9, "m {m}: {d}");
    }
}

#[test]
fn nested_box_dimension() {
    let gen = CatalogGenerator::nested_box(3, 2, 7, NestedBoxMode::Determinate).unwrap();
    let d = transport_dim_estimate(&gen).unwrap();
    assert!((d - 7f64.ln() / 3f64.ln()).abs() < 1e-9, "{d}");
}

#[test]
fn profile_ratio_crosses_one_at_the_dimension() {
    let p = TransportProfile::from_generator(&CatalogGenerator::Cantor).unwrap();
    let alpha = 1.0 - 3f64.ln() / 2f64.ln();
    assert!(p.ratio(alpha - 0.01) > 1.0);
    assert!(p.ratio(alpha + 0.01) < 1.0);
    assert!((p.ratio(0.0) - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn key_condition_bound_tracks_minkowski_dimension() {
    let (f, masses) = NestedCollection::from_generator(&CatalogGenerator::Cantor, 8).unwrap();
    let beta = nested_minkowski_dim(&f, 8).unwrap();
    assert!((beta - 2f64.ln() / 3f64.ln()).abs() < 1e-12);
    assert_eq!(evenly_concentrated(&masses, &f), Some(1.0));
    let r = key_lemma_check(&masses, &f, 0.2, 1.0).unwrap();
    assert!(r.holds);
    let b = r.decay_factor.unwrap();
    assert!((b - 2f64.powf(0.8) / 3.0).abs() < 1e-12);
    assert!(r.margins.iter().all(|m| *m >= -1e-12));
}

#[test]
fn distances_against_atomic_measures() {
    let cantor = MeasureArg::Generator(CatalogGenerator::Cantor);
    let fat = MeasureArg::Generator(CatalogGenerator::fat_cantor(0.5).unwrap());
    let atom = MeasureArg::Atomic(dirac(&[0.5], 1.0));
    let d = dimensional_distance(&atom, &cantor).unwrap();
    assert!(d.exact);
    assert_eq!(d.value, dimensional_distance(&cantor, &atom).unwrap().value);
    assert_eq!(dimensional_distance(&cantor, &cantor).unwrap().value, 0.0);
    let mixed = dimensional_distance(&cantor, &fat).unwrap();
    assert!(!mixed.exact);
    let fat_dim = transport_dim_estimate(&CatalogGenerator::fat_cantor(0.5).unwrap()).unwrap();
    assert_eq!(mixed.value, d.value.max(fat_dim));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fat_cantor_dimension_formula(lambda in 0.02f64..0.9) {
        let d = transport_dim_estimate(&CatalogGenerator::fat_cantor(lambda).unwrap()).unwrap();
        let expected = 2f64.ln() / (2f64.ln() - (1.0 - lambda).ln());
        prop_assert!((d - expected).abs() < 1e-9, "{} vs {}", d, expected);
    }

    #[test]
    fn two_map_self_similar_dimension(sigma in 0.1f64..0.45) {
        let gen = CatalogGenerator::self_similar(2, sigma).unwrap();
        let d = transport_dim_estimate(&gen).unwrap();
        let expected = 2f64.ln() / -sigma.ln();
        prop_assert!((d - expected).abs() < 1e-6, "{} vs {}", d, expected);
    }
}
