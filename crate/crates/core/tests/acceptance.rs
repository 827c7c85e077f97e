//! One test per acceptance criterion. Each prints an `ACCEPTANCE n` line
//! straight to stdout so it shows up even when libtest captures output.

mod common;

use std::collections::BTreeSet;
use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use common::{rel_err, rng, samples};
use epc_pinn::data::{energy_matrix, feature_matrix, target_matrix, FeatureSchema, JoinedSample, MinMaxScaler};
use epc_pinn::eval::{nrmse, r_squared, rmse, ENERGY_NAME};
use epc_pinn::loss::{enhanced_loss, BuildingMeta, LossScalers};
use epc_pinn::nn::{AdamState, EarlyStopState, Gradients, Layer, MlpModel, PlateauSchedulerState};
use epc_pinn::physics::{
    energy_consumption, energy_consumption_gradient, hguf_from_ratio, BuildingType, EnvelopeState, PhysicsConstants,
    STATE_DIM,
};
use epc_pinn::synth::{reference_energy_scalar, ReferenceConstants};
use epc_pinn::train::{
    cross_validate, cross_validate_with, fold_splits, fit_rows, FoldTrainer, NoObserver, PinnTrainer, TrainConfig,
    TrainObserver,
};
use ndarray::{array, Array2};
use rand::Rng;

fn report(n: u32, name: &str, pass: bool, detail: &str) {
    let line = format!("ACCEPTANCE {n} {name}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn energy(s: &EnvelopeState, v: f64, bt: BuildingType) -> f64 {
    energy_consumption(s, v, bt, &PhysicsConstants::default())
        .unwrap()
        .energy_consumption
}

#[test]
fn criterion_01_physics_oracle_equivalence() {
    let mut r = rng(101);
    let k = PhysicsConstants::default();
    let rk = ReferenceConstants::default();
    let cases: Vec<_> = (0..1000).map(|_| common::random_state(&mut r)).collect();
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (s, v, bt) in &cases {
        let tau = k.time_constant(*bt).unwrap();
        let reference =
            reference_energy_scalar(&s.area, &s.u_value, s.air_exchange_rate, s.specific_heat_gains, *v, tau, &rk);
        worst = worst.max(rel_err(energy(s, *v, *bt), reference));
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-9 && elapsed < Duration::from_secs(1);
    report(1, "physics oracle equivalence", pass, &format!("worst rel err {worst:.2e}, {elapsed:?}"));
    assert!(pass);
}

#[test]
fn criterion_02_worked_example() {
    let s = EnvelopeState {
        area: [100.0, 0.0, 0.0, 0.0, 0.0],
        u_value: [0.5, 0.0, 0.0, 0.0, 0.0],
        air_exchange_rate: 0.0,
        specific_heat_gains: 20.0,
    };
    let b = energy_consumption(&s, 100.0, BuildingType::Light, &PhysicsConstants::default()).unwrap();
    let checks = [
        ("envelope", b.envelope_total, 4354.56),
        ("bridges", b.thermal_bridges, 130.6368),
        ("losses", b.heat_loss_total, 4485.1968),
        ("gains", b.heat_gains_total, 2000.0),
        ("energy", b.energy_consumption, 3101.718),
    ];
    let failed: Vec<String> = checks
        .iter()
        .filter(|(_, got, want)| (got - want).abs() > 1e-3)
        .map(|(name, got, want)| format!("{name} {got:.4} vs {want}"))
        .collect();
    let pass = failed.is_empty();
    let detail = if pass { format!("energy {:.4}", b.energy_consumption) } else { failed.join(", ") };
    report(2, "worked example", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_03_hguf_properties() {
    let mut ok = hguf_from_ratio(0.0, 1.0, 1e-6) == 1.0;
    let mut worst_limit: f64 = 0.0;
    for tau in [0.5, 1.0, 2.0, 3.0] {
        ok &= hguf_from_ratio(0.0, tau, 1e-6) == 1.0;
        let limit = tau / (tau + 1.0);
        for r in [1.0 + 5e-7, 1.0 - 5e-7] {
            worst_limit = worst_limit.max((hguf_from_ratio(r, tau, 1e-6) - limit).abs());
        }
        let grid: Vec<f64> = (0..=1000).map(|i| hguf_from_ratio(i as f64 * 0.01, tau, 1e-6)).collect();
        ok &= grid.windows(2).all(|w| w[1] < w[0]);
    }
    let pass = ok && worst_limit <= 1e-6;
    report(3, "hguf properties", pass, &format!("worst limit gap {worst_limit:.2e}"));
    assert!(pass);
}

fn fd_relative(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn physics_gradient_error() -> f64 {
    let mut r = rng(104);
    let k = PhysicsConstants::default();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 100 {
        let (s, v, bt) = common::random_state(&mut r);
        let b = energy_consumption(&s, v, bt, &k).unwrap();
        if b.energy_consumption < 1.0 || (b.heat_gains_total / b.heat_loss_total - 1.0).abs() < 1e-3 {
            continue;
        }
        let analytic = energy_consumption_gradient(&s, v, bt, &k).unwrap();
        let x = s.to_array();
        for j in 0..STATE_DIM {
            let h = 1e-6 * x[j].abs().max(1e-3);
            let (mut plus, mut minus) = (x, x);
            plus[j] += h;
            minus[j] -= h;
            let numeric = (energy(&EnvelopeState::from_slice(&plus).unwrap(), v, bt)
                - energy(&EnvelopeState::from_slice(&minus).unwrap(), v, bt))
                / (2.0 * h);
            worst = worst.max(fd_relative(analytic[j], numeric));
        }
        checked += 1;
    }
    worst
}

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut r = rng(seed);
    Array2::from_shape_fn((rows, cols), |_| r.random_range(-1.0..1.0))
}

fn network_gradient_error() -> f64 {
    let mut model = MlpModel::init(&[2, 3, 2], 7).unwrap();
    let x = random_matrix(4, 2, 8);
    let g = random_matrix(4, 2, 9);
    let (_, cache) = model.forward(x.view()).unwrap();
    let analytic = model.backward(&cache, g.view()).unwrap().flatten();
    let theta = model.flat_parameters();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for j in 0..theta.len() {
        let mut p = theta.clone();
        p[j] += h;
        model.set_flat_parameters(&p).unwrap();
        let fp = (model.predict(x.view()).unwrap() * &g).sum();
        p[j] -= 2.0 * h;
        model.set_flat_parameters(&p).unwrap();
        let fm = (model.predict(x.view()).unwrap() * &g).sum();
        worst = worst.max(fd_relative(analytic[j], (fp - fm) / (2.0 * h)));
    }
    worst
}

fn loss_chain_error() -> f64 {
    let all = samples(40, 105, true);
    let every: Vec<usize> = (0..all.len()).collect();
    let rows: Vec<usize> = (0..5).collect();
    let fscale = MinMaxScaler::fit(feature_matrix(&all, &every).view()).unwrap();
    let tscale = MinMaxScaler::fit(target_matrix(&all, &every).view()).unwrap();
    let escale = MinMaxScaler::fit(energy_matrix(&all, &every).view()).unwrap();
    let x = fscale.transform(feature_matrix(&all, &rows).view()).unwrap();
    let y = tscale.transform(target_matrix(&all, &rows).view()).unwrap();
    let meta: Vec<BuildingMeta> = rows
        .iter()
        .map(|&i| BuildingMeta {
            useful_area: all[i].useful_area,
            building_type: all[i].building_type,
        })
        .collect();
    let measured: Vec<f64> = rows.iter().map(|&i| all[i].measured_energy).collect();
    let k = PhysicsConstants::default();
    let loss = |pred: &Array2<f64>| {
        enhanced_loss(
            pred.view(),
            y.view(),
            &meta,
            &measured,
            LossScalers {
                targets: &tscale,
                energy: &escale,
            },
            &k,
            1.0,
        )
        .unwrap()
    };

    let mut model = MlpModel::init(&[17, 16, 12], 5).unwrap();
    let mut theta = model.flat_parameters();
    let n = theta.len();
    // keep outputs away from the clamp at zero
    theta[n - 12..].iter_mut().for_each(|b| *b = 0.5);
    model.set_flat_parameters(&theta).unwrap();
    let (pred, cache) = model.forward(x.view()).unwrap();
    let analytic = model.backward(&cache, loss(&pred).gradient_wrt_predictions.view()).unwrap().flatten();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for j in 0..n {
        let mut p = theta.clone();
        p[j] += h;
        model.set_flat_parameters(&p).unwrap();
        let lp = loss(&model.predict(x.view()).unwrap()).total;
        p[j] -= 2.0 * h;
        model.set_flat_parameters(&p).unwrap();
        let lm = loss(&model.predict(x.view()).unwrap()).total;
        worst = worst.max(fd_relative(analytic[j], (lp - lm) / (2.0 * h)));
    }
    worst
}

#[test]
fn criterion_04_gradient_suites() {
    let start = Instant::now();
    let physics = physics_gradient_error();
    let network = network_gradient_error();
    let chain = loss_chain_error();
    let elapsed = start.elapsed();
    let pass = physics <= 1e-5 && network <= 1e-6 && chain <= 1e-4 && elapsed < Duration::from_secs(10);
    report(
        4,
        "gradient suites",
        pass,
        &format!("physics {physics:.2e}, network {network:.2e}, loss chain {chain:.2e}, {elapsed:?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_05_optimizer_and_schedules() {
    let mut m = MlpModel::from_layers(vec![Layer {
        weights: array![[0.0]],
        bias: array![0.0],
    }])
    .unwrap();
    let grads = Gradients {
        layers: vec![Layer {
            weights: array![[1.0]],
            bias: array![1.0],
        }],
    };
    let mut adam = AdamState::new(&m, 0.001);
    adam.step(&mut m, &grads, 0, 0).unwrap();
    let w = m.layers()[0].weights[[0, 0]];
    let adam_ok = (w - (-0.000999999)).abs() < 1e-9;

    let mut sched = PlateauSchedulerState::new(5, 0.1);
    let mut lr: f64 = 0.001;
    let mut reduced_at = None;
    for epoch in 1..=6 {
        lr = sched.step(1.0, lr);
        if reduced_at.is_none() && lr < 0.001 {
            reduced_at = Some(epoch);
        }
    }
    let sched_ok = reduced_at == Some(6) && (lr - 0.0001).abs() < 1e-15;

    let mut stop = EarlyStopState::new(8);
    stop.step(1.0, &m, 0);
    let stop_after = (1..=20).find(|&e| stop.step(1.0, &m, e));
    let stop_ok = stop_after == Some(8);

    let pass = adam_ok && sched_ok && stop_ok;
    report(
        5,
        "optimizer and schedules",
        pass,
        &format!("adam {w:.12}, lr reduced at epoch {reduced_at:?}, early stop after {stop_after:?} flat epochs"),
    );
    assert!(pass);
}

#[test]
fn criterion_06_overfit() {
    let all = samples(10, 106, false);
    let rows: Vec<usize> = (0..10).collect();
    let config = TrainConfig {
        max_epochs: 2000,
        seed: 6,
        ..TrainConfig::default()
    };
    let fit = fit_rows(&all, &rows, &config, &FeatureSchema::default(), 1e-3).unwrap();
    let last = *fit.loss_trace.last().unwrap();
    let pass = last < 1e-3 && fit.loss_trace.len() <= 2000;
    report(6, "overfit", pass, &format!("loss {last:.2e} after {} epochs", fit.loss_trace.len()));
    assert!(pass);
}

#[test]
fn criterion_07_synthetic_cross_validation() {
    let start = Instant::now();
    let config = TrainConfig {
        seed: 7,
        ..TrainConfig::default()
    };
    let energy_row = |noisy: bool| {
        let all = samples(1000, 107, noisy);
        let result = cross_validate(&all, &config, &FeatureSchema::default()).unwrap();
        result.report.aggregate.get(ENERGY_NAME).unwrap().clone()
    };
    let noisy = energy_row(true);
    let clean = energy_row(false);
    let elapsed = start.elapsed();
    let r2 = noisy.r_squared.unwrap();
    let nr = noisy.nrmse.unwrap();
    let clean_r2 = clean.r_squared.unwrap();
    let pass = r2.mean >= 0.85 && nr.mean <= 0.10 && clean_r2.mean >= 0.95 && elapsed <= Duration::from_secs(300);
    report(
        7,
        "synthetic cross-validation",
        pass,
        &format!(
            "noisy R2 {:.3} +- {:.3}, NRMSE {:.3} +- {:.3}; zero-noise R2 {:.3}; {elapsed:?}",
            r2.mean, r2.std, nr.mean, nr.std, clean_r2.mean
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_metric_hand_checks() {
    let (t, p) = ([0.0, 2.0], [1.0, 1.0]);
    let (r2, e, n) = (r_squared(&t, &p).unwrap(), rmse(&t, &p).unwrap(), nrmse(&t, &p).unwrap());
    let constant = [3.0, 3.0, 3.0];
    let undefined = matches!(
        r_squared(&constant, &[1.0, 2.0, 3.0]),
        Err(epc_pinn::Error::UndefinedMetric { .. })
    ) && matches!(nrmse(&constant, &[1.0, 2.0, 3.0]), Err(epc_pinn::Error::UndefinedMetric { .. }));
    let pass = r2.abs() < 1e-15 && (e - 1.0).abs() < 1e-15 && (n - 0.5).abs() < 1e-15 && undefined;
    report(8, "metric hand checks", pass, &format!("R2 {r2}, RMSE {e}, NRMSE {n}, constant truth undefined {undefined}"));
    assert!(pass);
}

#[test]
fn criterion_09_train_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"train": {"k_folds": 4, "max_epochs": 40}}"#).unwrap();
    let call = |args: &[&str]| {
        let mut full = vec!["epc-pinn"];
        full.extend_from_slice(args);
        epc_pinn::cli::run(full, &mut Vec::new(), &mut Vec::new())
    };
    let d = data.to_str().unwrap();
    assert_eq!(call(&["generate", "--n", "120", "--seed", "9", "--out", d]), 0);
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let code = call(&["train", "--config", cfg.to_str().unwrap(), "--seed", "9", "--data", d, "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0);
        outputs.push(std::fs::read(out.join("results.json")).unwrap());
    }
    let pass = outputs[0] == outputs[1];
    report(9, "train determinism", pass, &format!("results.json {} bytes", outputs[0].len()));
    assert!(pass);
}

#[derive(Default)]
struct LeakageProbe {
    tests: Vec<BTreeSet<usize>>,
    violations: Mutex<Vec<String>>,
    scaler_fits: Mutex<usize>,
    updates: Mutex<usize>,
}

impl LeakageProbe {
    fn check(&self, what: &str, fold: usize, rows: &[usize]) {
        if let Some(i) = rows.iter().find(|i| self.tests[fold].contains(i)) {
            self.violations.lock().unwrap().push(format!("{what} of fold {fold} saw test row {i}"));
        }
    }
}

impl TrainObserver for LeakageProbe {
    fn scaler_fit(&self, fold: usize, rows: &[usize]) {
        *self.scaler_fits.lock().unwrap() += 1;
        self.check("scaler fit", fold, rows);
    }

    fn parameter_update(&self, fold: usize, _epoch: usize, rows: &[usize]) {
        *self.updates.lock().unwrap() += 1;
        self.check("parameter update", fold, rows);
    }
}

fn perturb(sample: &mut JoinedSample) {
    sample.features.iter_mut().for_each(|f| *f = *f * 3.0 + 1.0);
    sample.target_state.u_value.iter_mut().for_each(|u| *u *= 2.0);
    sample.measured_energy *= 5.0;
}

#[test]
fn criterion_10_leakage_guard() {
    let all = samples(150, 110, true);
    let config = TrainConfig {
        k_folds: 5,
        max_epochs: 30,
        hidden_layers: vec![32, 32],
        seed: 10,
        ..TrainConfig::default()
    };
    let splits = fold_splits(all.len(), &config).unwrap();
    let probe = LeakageProbe {
        tests: splits.iter().map(|s| s.test.iter().copied().collect()).collect(),
        ..LeakageProbe::default()
    };
    cross_validate_with(&all, &config, &FeatureSchema::default(), &PinnTrainer, &probe).unwrap();
    let violations = probe.violations.lock().unwrap().clone();
    let fits = *probe.scaler_fits.lock().unwrap();
    let updates = *probe.updates.lock().unwrap();

    // changing only the held-out rows must not move anything learned on fold 0
    let schema = FeatureSchema::default();
    let base = PinnTrainer.train_fold(&all, &splits[0], &config, &schema, &NoObserver).unwrap();
    let mut altered = all.clone();
    for &i in &splits[0].test {
        perturb(&mut altered[i]);
    }
    let moved = PinnTrainer.train_fold(&altered, &splits[0], &config, &schema, &NoObserver).unwrap();
    let unchanged = base.history == moved.history && base.checkpoint == moved.checkpoint;

    let pass = violations.is_empty() && fits == config.k_folds && updates > 0 && unchanged;
    report(
        10,
        "leakage guard",
        pass,
        &format!(
            "{fits} scaler fits, {updates} updates, {} violations, fold 0 invariant to test rows {unchanged}",
            violations.len()
        ),
    );
    assert!(pass, "{violations:?}");
}
