use serde::{Deserialize, Serialize};

/// Stops after `patience` consecutive epochs without a strict improvement of
/// the validation loss. Epochs are numbered from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    pub epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: f64::INFINITY, best_epoch: 0, epoch: 0, since_best: 0 }
    }

    /// Records one epoch. Returns `(improved, stop)`.
    pub fn observe(&mut self, val_loss: f64) -> (bool, bool) {
        self.epoch += 1;
        let improved = val_loss < self.best;
        if improved {
            self.best = val_loss;
            self.best_epoch = self.epoch;
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        (improved, self.since_best >= self.patience)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(losses: impl IntoIterator<Item = f64>, patience: usize) -> Option<(usize, usize)> {
        let mut es = EarlyStopping::new(patience);
        for l in losses {
            if es.observe(l).1 {
                return Some((es.epoch, es.best_epoch));
            }
        }
        None
    }

    #[test]
    fn improving_then_flat() {
        let improving: Vec<f64> = (0..60).map(|e| 1.0 - 0.01 * e as f64).collect();
        let last = improving[59];
        let trace = improving.into_iter().chain(std::iter::repeat(last).take(440));
        assert_eq!(run(trace, 50), Some((110, 60)));
    }

    #[test]
    fn ties_do_not_count() {
        let trace = [1.0, 0.5, 0.5, 0.5];
        assert_eq!(run(trace, 2), Some((4, 2)));
    }

    #[test]
    fn late_improvement_resets() {
        let trace = [1.0, 2.0, 2.0, 0.9, 2.0, 2.0, 2.0];
        assert_eq!(run(trace, 3), Some((7, 4)));
    }

    #[test]
    fn never_stops_while_improving() {
        assert_eq!(run((0..500).map(|e| -(e as f64)), 50), None);
    }
}
