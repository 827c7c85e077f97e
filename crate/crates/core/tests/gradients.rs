mod common;

use common::samples;
use epc_pinn::data::{energy_matrix, feature_matrix, target_matrix, FeatureSchema, JoinedSample, MinMaxScaler};
use epc_pinn::loss::{enhanced_loss, BuildingMeta, LossScalers};
use epc_pinn::nn::MlpModel;
use epc_pinn::physics::PhysicsConstants;
use epc_pinn::train::{fit_rows, TrainConfig};
use ndarray::Array2;
use rand::Rng;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut r = common::rng(seed);
    Array2::from_shape_fn((rows, cols), |_| r.random_range(-1.0..1.0))
}

fn worst_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Backward pass against central differences of `sum(G * predict(X))`.
fn check_network(dims: &[usize], tol: f64) {
    let mut model = MlpModel::init(dims, 11).unwrap();
    let x = random_matrix(6, dims[0], 12);
    let g = random_matrix(6, *dims.last().unwrap(), 13);
    let (_, cache) = model.forward(x.view()).unwrap();
    let analytic = model.backward(&cache, g.view()).unwrap().flatten();

    let objective = |m: &MlpModel| (m.predict(x.view()).unwrap() * &g).sum();
    let theta = model.flat_parameters();
    let mut numeric = vec![0.0; theta.len()];
    let h = 1e-6;
    for j in 0..theta.len() {
        let mut p = theta.clone();
        p[j] += h;
        model.set_flat_parameters(&p).unwrap();
        let fp = objective(&model);
        p[j] -= 2.0 * h;
        model.set_flat_parameters(&p).unwrap();
        let fm = objective(&model);
        numeric[j] = (fp - fm) / (2.0 * h);
    }
    let err = worst_relative_error(&analytic, &numeric, 1e-6);
    assert!(err <= tol, "{dims:?}: worst relative error {err:e}");
}

#[test]
fn network_gradient_small() {
    check_network(&[2, 3, 2], 1e-6);
}

#[test]
fn network_gradient_deep() {
    check_network(&[4, 8, 8, 12], 1e-5);
}

struct LossFixture {
    x: Array2<f64>,
    y: Array2<f64>,
    meta: Vec<BuildingMeta>,
    energy: Vec<f64>,
    targets: MinMaxScaler,
    energy_scaler: MinMaxScaler,
}

fn loss_fixture(all: &[JoinedSample]) -> LossFixture {
    let fit_rows: Vec<usize> = (0..all.len()).collect();
    let rows: Vec<usize> = (0..5).collect();
    let features = MinMaxScaler::fit(feature_matrix(all, &fit_rows).view()).unwrap();
    let targets = MinMaxScaler::fit(target_matrix(all, &fit_rows).view()).unwrap();
    let energy_scaler = MinMaxScaler::fit(energy_matrix(all, &fit_rows).view()).unwrap();
    LossFixture {
        x: features.transform(feature_matrix(all, &rows).view()).unwrap(),
        y: targets.transform(target_matrix(all, &rows).view()).unwrap(),
        meta: rows
            .iter()
            .map(|&i| BuildingMeta {
                useful_area: all[i].useful_area,
                building_type: all[i].building_type,
            })
            .collect(),
        energy: rows.iter().map(|&i| all[i].measured_energy).collect(),
        targets,
        energy_scaler,
    }
}

fn total_loss(f: &LossFixture, pred: &Array2<f64>) -> (f64, Array2<f64>) {
    let l = enhanced_loss(
        pred.view(),
        f.y.view(),
        &f.meta,
        &f.energy,
        LossScalers {
            targets: &f.targets,
            energy: &f.energy_scaler,
        },
        &PhysicsConstants::default(),
        1.0,
    )
    .unwrap();
    (l.total, l.gradient_wrt_predictions)
}

#[test]
fn loss_gradient_through_network() {
    let all = samples(40, 21, true);
    let f = loss_fixture(&all);
    let mut model = MlpModel::init(&[17, 16, 12], 4).unwrap();
    // shift outputs into the unclamped region
    let flat = model.flat_parameters();
    let n = flat.len();
    let mut shifted = flat;
    shifted[n - 12..].iter_mut().for_each(|b| *b = 0.5);
    model.set_flat_parameters(&shifted).unwrap();

    let (pred, cache) = model.forward(f.x.view()).unwrap();
    let (_, dpred) = total_loss(&f, &pred);
    let analytic = model.backward(&cache, dpred.view()).unwrap().flatten();

    let theta = model.flat_parameters();
    let h = 1e-6;
    let mut numeric = vec![0.0; theta.len()];
    for j in 0..theta.len() {
        let mut p = theta.clone();
        p[j] += h;
        model.set_flat_parameters(&p).unwrap();
        let lp = total_loss(&f, &model.predict(f.x.view()).unwrap()).0;
        p[j] -= 2.0 * h;
        model.set_flat_parameters(&p).unwrap();
        let lm = total_loss(&f, &model.predict(f.x.view()).unwrap()).0;
        numeric[j] = (lp - lm) / (2.0 * h);
    }
    let err = worst_relative_error(&analytic, &numeric, 1e-6);
    assert!(err <= 1e-4, "worst relative error {err:e}");
}

#[test]
fn loss_gradient_wrt_predictions() {
    let all = samples(40, 22, true);
    let f = loss_fixture(&all);
    let pred = &f.y + &random_matrix(5, 12, 30).mapv(|v| 0.05 * v);
    let (_, analytic) = total_loss(&f, &pred);
    let h = 1e-7;
    let mut worst: f64 = 0.0;
    for i in 0..5 {
        for j in 0..12 {
            let mut p = pred.clone();
            p[[i, j]] += h;
            let lp = total_loss(&f, &p).0;
            p[[i, j]] -= 2.0 * h;
            let lm = total_loss(&f, &p).0;
            let numeric = (lp - lm) / (2.0 * h);
            let a = analytic[[i, j]];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
        }
    }
    assert!(worst <= 1e-4, "worst relative error {worst:e}");
}

#[test]
fn overfits_ten_samples() {
    let all = samples(10, 8, false);
    let rows: Vec<usize> = (0..10).collect();
    let config = TrainConfig {
        max_epochs: 2000,
        seed: 3,
        ..TrainConfig::default()
    };
    let fit = fit_rows(&all, &rows, &config, &FeatureSchema::default(), 1e-3).unwrap();
    let last = *fit.loss_trace.last().unwrap();
    assert!(last < 1e-3, "loss {last} after {} epochs", fit.loss_trace.len());
}
