use ndarray::{Array1, Array2, Zip};

use super::{Gradients, Layer, MlpModel};
use crate::error::{Error, Result};

/// Adam moments and hyperparameters for one model.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub first_moment: Vec<Layer>,
    pub second_moment: Vec<Layer>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

fn zeros_like(model: &MlpModel) -> Vec<Layer> {
    model
        .layers()
        .iter()
        .map(|l| Layer {
            weights: Array2::zeros(l.weights.raw_dim()),
            bias: Array1::zeros(l.bias.raw_dim()),
        })
        .collect()
}

impl AdamState {
    pub fn new(model: &MlpModel, learning_rate: f64) -> Self {
        AdamState {
            first_moment: zeros_like(model),
            second_moment: zeros_like(model),
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }

    /// One bias-corrected Adam update. `epoch` and `batch` only label errors.
    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients, epoch: usize, batch: usize) -> Result<()> {
        let shapes_match = grads.layers.len() == model.layers().len()
            && grads.layers.iter().zip(model.layers()).all(|(g, p)| {
                g.weights.dim() == p.weights.dim() && g.bias.dim() == p.bias.dim()
            });
        if !shapes_match || self.first_moment.len() != model.layers().len() {
            return Err(Error::dimension(
                "adam gradient shapes",
                format!("{:?}", model.layer_dims()),
                "mismatched layers",
            ));
        }
        if !grads.is_finite() {
            return Err(Error::Training {
                epoch,
                batch,
                message: "non-finite gradient".into(),
            });
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.learning_rate);
        let correction1 = 1.0 - b1.powi(t);
        let correction2 = 1.0 - b2.powi(t);
        let update = |p: &mut f64, &g: &f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };

        let layers = model.layers_mut();
        for (i, layer) in layers.iter_mut().enumerate() {
            let (m, v) = (&mut self.first_moment[i], &mut self.second_moment[i]);
            Zip::from(&mut layer.weights)
                .and(&grads.layers[i].weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(update);
            Zip::from(&mut layer.bias)
                .and(&grads.layers[i].bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(update);
        }

        if !model.is_finite() {
            return Err(Error::Training {
                epoch,
                batch,
                message: "parameters became non-finite after the update".into(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    // [1, 1] network: one weight and one bias, both starting at 0.
    fn scalar_model() -> MlpModel {
        let layer = Layer {
            weights: array![[0.0]],
            bias: array![0.0],
        };
        MlpModel::from_layers(vec![layer]).unwrap()
    }

    fn unit_grads() -> Gradients {
        Gradients {
            layers: vec![Layer {
                weights: array![[1.0]],
                bias: array![1.0],
            }],
        }
    }

    #[test]
    fn single_step() {
        let mut m = scalar_model();
        let mut adam = AdamState::new(&m, 0.001);
        adam.step(&mut m, &unit_grads(), 0, 0).unwrap();
        let expected = -0.001 / (1.0 + 1e-8);
        for p in m.flat_parameters() {
            assert!((p - expected).abs() < 1e-18);
        }
        assert_eq!(adam.step_count, 1);
    }

    #[test]
    fn two_steps_descend() {
        let mut m = scalar_model();
        let mut adam = AdamState::new(&m, 0.001);
        adam.step(&mut m, &unit_grads(), 0, 0).unwrap();
        let first = m.flat_parameters()[0];
        adam.step(&mut m, &unit_grads(), 1, 0).unwrap();
        let second = m.flat_parameters()[0];
        assert!(second < first);
        assert!((second - (-0.002 / (1.0 + 1e-8))).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut m = MlpModel::init(&[3, 4, 2], 2).unwrap();
        let before = m.flat_parameters();
        let mut adam = AdamState::new(&m, 0.001);
        let zeros = Gradients::zeros_like(&m);
        adam.step(&mut m, &zeros, 0, 0).unwrap();
        assert_eq!(m.flat_parameters(), before);
        assert_eq!(adam.step_count, 1);
    }

    #[test]
    fn non_finite_gradient_reports_location() {
        let mut m = scalar_model();
        let mut adam = AdamState::new(&m, 0.001);
        let mut g = unit_grads();
        g.layers[0].bias[0] = f64::NAN;
        let err = adam.step(&mut m, &g, 12, 3).unwrap_err();
        assert!(matches!(err, Error::Training { epoch: 12, batch: 3, .. }));
        assert_eq!(adam.step_count, 0);
    }
}
