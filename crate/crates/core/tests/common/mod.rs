#![allow(dead_code)]

use epc_pinn::data::{join_on_cadastre, FeatureSchema, JoinedSample};
use epc_pinn::physics::{BuildingType, EnvelopeState};
use epc_pinn::synth::{generate_cohort, Cohort, GeneratorConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random envelope with positive losses, drawn from broad ranges.
pub fn random_state(rng: &mut ChaCha8Rng) -> (EnvelopeState, f64, BuildingType) {
    let mut s = EnvelopeState::default();
    for i in 0..5 {
        s.area[i] = rng.random_range(5.0..3000.0);
        s.u_value[i] = rng.random_range(0.1..3.0);
    }
    s.air_exchange_rate = rng.random_range(0.1..1.5);
    s.specific_heat_gains = rng.random_range(0.0..40.0);
    let useful_area = rng.random_range(50.0..10000.0);
    let bt = if rng.random_bool(0.5) { BuildingType::Heavy } else { BuildingType::Light };
    (s, useful_area, bt)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cohort(n: usize, seed: u64, noisy: bool) -> Cohort {
    let cfg = GeneratorConfig {
        n_buildings: n,
        seed,
        consumption_noise: if noisy { 0.05 } else { 0.0 },
        audit_noise: if noisy { 0.02 } else { 0.0 },
        ..GeneratorConfig::default()
    };
    generate_cohort(&cfg).unwrap()
}

pub fn samples(n: usize, seed: u64, noisy: bool) -> Vec<JoinedSample> {
    let c = cohort(n, seed, noisy);
    let out = join_on_cadastre(
        &c.land,
        &c.audit_buildings,
        &c.audit_components,
        &c.consumption,
        &FeatureSchema::default(),
    );
    assert!(out.dropped.is_empty(), "{}", out.drop_report());
    out.samples
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
