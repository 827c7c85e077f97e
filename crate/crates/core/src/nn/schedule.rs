use super::MlpModel;

/// Reduce-on-plateau learning rate schedule driven by validation loss.
#[derive(Clone, Debug)]
pub struct PlateauSchedulerState {
    pub best_val_loss: f64,
    pub epochs_since_improvement: usize,
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
    /// An epoch improves only if `val_loss < best - threshold`.
    pub threshold: f64,
}

impl PlateauSchedulerState {
    pub fn new(patience: usize, factor: f64) -> Self {
        assert!(patience >= 1, "scheduler patience must be at least 1");
        assert!(factor > 0.0 && factor < 1.0, "scheduler factor must lie in (0, 1)");
        PlateauSchedulerState {
            best_val_loss: f64::INFINITY,
            epochs_since_improvement: 0,
            patience,
            factor,
            min_lr: 1e-7,
            threshold: 0.0,
        }
    }

    /// Returns the learning rate to use from the next epoch on.
    pub fn step(&mut self, val_loss: f64, learning_rate: f64) -> f64 {
        if val_loss < self.best_val_loss - self.threshold {
            self.best_val_loss = val_loss;
            self.epochs_since_improvement = 0;
            return learning_rate;
        }
        self.epochs_since_improvement += 1;
        if self.epochs_since_improvement >= self.patience {
            self.epochs_since_improvement = 0;
            return (learning_rate * self.factor).max(self.min_lr);
        }
        learning_rate
    }
}

/// Early stopping on validation loss with a snapshot of the best parameters.
#[derive(Clone, Debug)]
pub struct EarlyStopState {
    pub best_val_loss: f64,
    pub epochs_since_improvement: usize,
    pub patience: usize,
    pub threshold: f64,
    pub best_epoch: Option<usize>,
    pub best_parameters_snapshot: Option<MlpModel>,
}

impl EarlyStopState {
    pub fn new(patience: usize) -> Self {
        assert!(patience >= 1, "early stopping patience must be at least 1");
        EarlyStopState {
            best_val_loss: f64::INFINITY,
            epochs_since_improvement: 0,
            patience,
            threshold: 0.0,
            best_epoch: None,
            best_parameters_snapshot: None,
        }
    }

    /// Records `val_loss` for `epoch`; true once patience is exhausted.
    pub fn step(&mut self, val_loss: f64, model: &MlpModel, epoch: usize) -> bool {
        if val_loss < self.best_val_loss - self.threshold {
            self.best_val_loss = val_loss;
            self.epochs_since_improvement = 0;
            self.best_epoch = Some(epoch);
            self.best_parameters_snapshot = Some(model.clone());
        } else {
            self.epochs_since_improvement += 1;
        }
        self.should_stop()
    }

    pub fn should_stop(&self) -> bool {
        self.epochs_since_improvement >= self.patience
    }

    pub fn take_best(&mut self) -> Option<MlpModel> {
        self.best_parameters_snapshot.take()
    }
}
