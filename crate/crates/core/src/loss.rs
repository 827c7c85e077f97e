//! Physics-informed training loss.
//!
//! `total = mse_z + physics_weight * mse_y` where `mse_z` is the data-fit
//! error on the twelve scaled targets and `mse_y` compares the energy the
//! physics model reconstructs from the predictions with measured
//! consumption, both in scaled units.

use ndarray::{Array2, ArrayView, ArrayView2, Dimension, Zip};

use crate::data::MinMaxScaler;
use crate::error::{Error, Result};
use crate::physics::{self, BuildingType, EnvelopeState, PhysicsConstants, STATE_DIM};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildingMeta {
    pub useful_area: f64,
    pub building_type: BuildingType,
}

#[derive(Clone, Debug)]
pub struct LossValue {
    pub total: f64,
    pub mse_z: f64,
    pub mse_y: f64,
    pub gradient_wrt_predictions: Array2<f64>,
}

/// Scalers the loss needs to move between network space and physical units.
#[derive(Clone, Copy, Debug)]
pub struct LossScalers<'a> {
    pub targets: &'a MinMaxScaler,
    pub energy: &'a MinMaxScaler,
}

pub fn mse<D: Dimension>(a: ArrayView<'_, f64, D>, b: ArrayView<'_, f64, D>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::dimension(
            "mse operands",
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    if a.is_empty() {
        return Err(Error::Usage("mse of empty arrays".into()));
    }
    let mut sum = 0.0;
    Zip::from(&a).and(&b).for_each(|&x, &y| sum += (x - y) * (x - y));
    Ok(sum / a.len() as f64)
}

/// Inverse-scales one prediction row and clamps it at zero.
///
/// Returns the clamped state and, per coordinate, the derivative of the
/// clamped physical value with respect to the scaled prediction.
fn physical_state(scaler: &MinMaxScaler, row: ndarray::ArrayView1<f64>) -> (EnvelopeState, [f64; STATE_DIM]) {
    let mut values = [0.0; STATE_DIM];
    let mut slope = [0.0; STATE_DIM];
    for j in 0..STATE_DIM {
        let x = scaler.unscale_value(j, row[j]);
        if x > 0.0 {
            values[j] = x;
            slope[j] = scaler.range(j);
        }
    }
    (EnvelopeState::from_slice(&values).expect("fixed length"), slope)
}

fn check_scaled_inputs(
    predictions: &ArrayView2<f64>,
    targets: &ArrayView2<f64>,
    meta: &[BuildingMeta],
    measured_energy: &[f64],
    scalers: LossScalers<'_>,
) -> Result<()> {
    if !scalers.targets.fitted || !scalers.energy.fitted {
        return Err(Error::Usage("loss called with an unfitted scaler".into()));
    }
    if scalers.targets.width() != STATE_DIM || scalers.energy.width() != 1 {
        return Err(Error::dimension(
            "loss scaler widths",
            format!("({STATE_DIM}, 1)"),
            format!("({}, {})", scalers.targets.width(), scalers.energy.width()),
        ));
    }
    let n = predictions.nrows();
    if predictions.ncols() != STATE_DIM {
        return Err(Error::dimension("prediction width", STATE_DIM, predictions.ncols()));
    }
    if targets.dim() != predictions.dim() {
        return Err(Error::dimension(
            "target shape",
            format!("{:?}", predictions.dim()),
            format!("{:?}", targets.dim()),
        ));
    }
    if meta.len() != n || measured_energy.len() != n {
        return Err(Error::dimension(
            "per-row metadata",
            n,
            format!("{} meta rows, {} energies", meta.len(), measured_energy.len()),
        ));
    }
    if n == 0 {
        return Err(Error::Usage("loss over an empty batch".into()));
    }
    Ok(())
}

/// Energy (kWh/yr) the physics model assigns to each row of scaled predictions.
pub fn reconstruct_energy(
    predictions_scaled: ArrayView2<f64>,
    meta: &[BuildingMeta],
    target_scaler: &MinMaxScaler,
    consts: &PhysicsConstants,
) -> Result<Vec<f64>> {
    if !target_scaler.fitted {
        return Err(Error::Usage("scaler used before fit".into()));
    }
    if predictions_scaled.ncols() != STATE_DIM || meta.len() != predictions_scaled.nrows() {
        return Err(Error::dimension(
            "reconstruct_energy inputs",
            format!("(n={}, {STATE_DIM})", meta.len()),
            format!("{:?}", predictions_scaled.dim()),
        ));
    }
    predictions_scaled
        .rows()
        .into_iter()
        .zip(meta)
        .map(|(row, m)| {
            let (state, _) = physical_state(target_scaler, row);
            physics::energy_consumption(&state, m.useful_area, m.building_type, consts)
                .map(|b| b.energy_consumption)
        })
        .collect()
}

/// Enhanced loss and its exact gradient with respect to the scaled predictions.
#[allow(clippy::too_many_arguments)]
pub fn enhanced_loss(
    predictions_scaled: ArrayView2<f64>,
    targets_scaled: ArrayView2<f64>,
    meta: &[BuildingMeta],
    measured_energy: &[f64],
    scalers: LossScalers<'_>,
    consts: &PhysicsConstants,
    physics_weight: f64,
) -> Result<LossValue> {
    check_scaled_inputs(&predictions_scaled, &targets_scaled, meta, measured_energy, scalers)?;
    let n = predictions_scaled.nrows();
    let count = (n * STATE_DIM) as f64;

    let mse_z = mse(predictions_scaled, targets_scaled)?;
    let mut grad = Array2::zeros((n, STATE_DIM));
    Zip::from(&mut grad)
        .and(&predictions_scaled)
        .and(&targets_scaled)
        .for_each(|g, &p, &t| *g = 2.0 * (p - t) / count);

    let energy_range = scalers.energy.range(0);
    let mut sq_sum = 0.0;
    for (i, (row, m)) in predictions_scaled.rows().into_iter().zip(meta).enumerate() {
        let tau = consts.time_constant(m.building_type)?;
        let (state, slope) = physical_state(scalers.targets, row);
        let (parts, energy_grad) = physics::energy_with_gradient(&state, m.useful_area, tau, consts);
        let predicted = scalers.energy.scale_value(0, parts.energy_consumption);
        let measured = scalers.energy.scale_value(0, measured_energy[i]);
        if !predicted.is_finite() || !measured.is_finite() {
            return Err(Error::NonFinite {
                row: i,
                what: format!(
                    "reconstructed energy {} vs measured {}",
                    parts.energy_consumption, measured_energy[i]
                ),
            });
        }
        let residual = predicted - measured;
        sq_sum += residual * residual;

        let outer = physics_weight * 2.0 * residual / n as f64 / energy_range;
        for j in 0..STATE_DIM {
            grad[[i, j]] += outer * energy_grad[j] * slope[j];
        }
    }
    let mse_y = sq_sum / n as f64;
    let total = mse_z + physics_weight * mse_y;
    if !total.is_finite() || !grad.iter().all(|v| v.is_finite()) {
        let row = grad
            .rows()
            .into_iter()
            .position(|r| r.iter().any(|v| !v.is_finite()))
            .unwrap_or(0);
        return Err(Error::NonFinite {
            row,
            what: "loss gradient".into(),
        });
    }
    Ok(LossValue {
        total,
        mse_z,
        mse_y,
        gradient_wrt_predictions: grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn mse_hand_values() {
        let a = array![0.0, 2.0];
        let b = array![1.0, 1.0];
        assert_eq!(mse(a.view(), b.view()).unwrap(), 1.0);
        assert_eq!(mse(b.view(), a.view()).unwrap(), 1.0);
        assert_eq!(mse(a.view(), a.view()).unwrap(), 0.0);
        let c = array![1.0];
        assert!(matches!(mse(a.view(), c.view()), Err(Error::Dimension { .. })));
    }

    fn fixture() -> (Array2<f64>, MinMaxScaler, MinMaxScaler, Vec<BuildingMeta>, Vec<f64>) {
        let consts = PhysicsConstants::default();
        let states = [
            [300.0, 300.0, 900.0, 12.0, 150.0, 0.6, 0.4, 1.1, 2.5, 2.7, 0.6, 18.0],
            [500.0, 500.0, 1800.0, 20.0, 320.0, 0.3, 0.25, 0.8, 2.0, 1.8, 0.4, 22.0],
            [120.0, 120.0, 500.0, 6.0, 80.0, 0.9, 0.7, 1.3, 2.8, 2.9, 0.8, 12.0],
        ];
        let meta = vec![
            BuildingMeta { useful_area: 1100.0, building_type: BuildingType::Heavy },
            BuildingMeta { useful_area: 3000.0, building_type: BuildingType::Heavy },
            BuildingMeta { useful_area: 400.0, building_type: BuildingType::Light },
        ];
        let physical = Array2::from_shape_fn((3, STATE_DIM), |(i, j)| states[i][j]);
        let energy: Vec<f64> = (0..3)
            .map(|i| {
                let s = EnvelopeState::from_slice(&states[i]).unwrap();
                physics::energy_consumption(&s, meta[i].useful_area, meta[i].building_type, &consts)
                    .unwrap()
                    .energy_consumption
            })
            .collect();
        let ts = MinMaxScaler::fit(physical.view()).unwrap();
        let es = MinMaxScaler::fit(Array2::from_shape_vec((3, 1), energy.clone()).unwrap().view()).unwrap();
        (ts.transform(physical.view()).unwrap(), ts, es, meta, energy)
    }

    #[test]
    fn perfect_fit_is_zero() {
        let (scaled, ts, es, meta, energy) = fixture();
        let scalers = LossScalers { targets: &ts, energy: &es };
        let l = enhanced_loss(scaled.view(), scaled.view(), &meta, &energy, scalers, &PhysicsConstants::default(), 1.0).unwrap();
        assert!(l.total.abs() < 1e-20);
        assert!(l.gradient_wrt_predictions.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn data_term_isolated() {
        let (scaled, ts, es, meta, _) = fixture();
        let consts = PhysicsConstants::default();
        let mut pred = scaled.clone();
        pred[[0, 3]] += 0.1;
        // measured energy set to the reconstruction of the perturbed prediction
        let energy = reconstruct_energy(pred.view(), &meta, &ts, &consts).unwrap();
        let scalers = LossScalers { targets: &ts, energy: &es };
        let l = enhanced_loss(pred.view(), scaled.view(), &meta, &energy, scalers, &consts, 1.0).unwrap();
        assert_eq!(l.mse_y, 0.0);
        assert_eq!(l.total, l.mse_z);
        assert!((l.mse_z - 0.01 / 36.0).abs() < 1e-15);
    }

    #[test]
    fn unfitted_scaler_rejected() {
        let (scaled, ts, _, meta, energy) = fixture();
        let unfitted = MinMaxScaler::default();
        let scalers = LossScalers { targets: &ts, energy: &unfitted };
        let err = enhanced_loss(scaled.view(), scaled.view(), &meta, &energy, scalers, &PhysicsConstants::default(), 1.0)
            .unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn negative_predictions_clamped_with_zero_physics_gradient() {
        let (scaled, ts, es, meta, energy) = fixture();
        let mut pred = scaled.clone();
        // push row 2 door area below zero in physical units
        pred[[2, 3]] = -0.8;
        let scalers = LossScalers { targets: &ts, energy: &es };
        let consts = PhysicsConstants::default();
        let l = enhanced_loss(pred.view(), scaled.view(), &meta, &energy, scalers, &consts, 1.0).unwrap();
        let data_only = 2.0 * (pred[[2, 3]] - scaled[[2, 3]]) / 36.0;
        assert!((l.gradient_wrt_predictions[[2, 3]] - data_only).abs() < 1e-15);
    }

    #[test]
    fn weight_scales_physics_term() {
        let (scaled, ts, es, meta, energy) = fixture();
        let mut pred = scaled.clone();
        pred[[1, 2]] += 0.05;
        let scalers = LossScalers { targets: &ts, energy: &es };
        let consts = PhysicsConstants::default();
        let one = enhanced_loss(pred.view(), scaled.view(), &meta, &energy, scalers, &consts, 1.0).unwrap();
        let two = enhanced_loss(pred.view(), scaled.view(), &meta, &energy, scalers, &consts, 2.0).unwrap();
        assert!((two.total - (one.mse_z + 2.0 * one.mse_y)).abs() < 1e-15);
        assert!((one.total - one.mse_z - one.mse_y).abs() <= 1e-12);
    }
}
