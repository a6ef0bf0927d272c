//! Reduce-on-plateau learning-rate schedule.

use crate::error::{Error, Result};

/// Multiplies the learning rate by `factor` after `patience` consecutive
/// epochs without a strict validation-loss improvement. The rate never
/// increases and is floored at `min_lr`. The schedule is a pure function
/// of the validation-loss sequence.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: u32,
    pub min_lr: f64,
    best: Option<f64>,
    stall: u32,
}

impl PlateauScheduler {
    pub fn new(factor: f64, patience: u32, min_lr: f64) -> Self {
        PlateauScheduler { factor, patience, min_lr, best: None, stall: 0 }
    }

    /// Once per epoch: feed the validation loss, get the (possibly
    /// reduced) learning rate back.
    pub fn update(&mut self, val_loss: f64, lr: f64) -> Result<f64> {
        if val_loss.is_nan() {
            return Err(Error::numeric("plateau scheduler: NaN validation loss"));
        }
        match self.best {
            Some(best) if val_loss >= best => {
                self.stall += 1;
                if self.stall >= self.patience {
                    self.stall = 0;
                    return Ok((lr * self.factor).max(self.min_lr));
                }
            }
            _ => {
                self.best = Some(val_loss);
                self.stall = 0;
            }
        }
        Ok(lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_scheduler() -> PlateauScheduler {
        PlateauScheduler::new(0.1, 5, 1e-12)
    }

    #[test]
    fn reduces_after_exactly_five_non_improving_epochs() {
        let mut sched = paper_scheduler();
        let mut lr = 1e-4;
        let losses = [1.0, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9];
        let mut trace = Vec::new();
        for loss in losses {
            lr = sched.update(loss, lr).unwrap();
            trace.push(lr);
        }
        // Unchanged through the fourth stalled epoch, reduced on the fifth.
        assert_eq!(&trace[..5], &[1e-4; 5]);
        assert_eq!(trace[5], 1e-4);
        assert_eq!(trace[6], 1e-4 * 0.1);
    }

    #[test]
    fn monotone_improvement_never_changes_lr() {
        let mut sched = paper_scheduler();
        let mut lr = 1e-4;
        for k in 0..50 {
            lr = sched.update(1.0 / (k + 1) as f64, lr).unwrap();
            assert_eq!(lr, 1e-4);
        }
    }

    #[test]
    fn lr_is_floored_at_min_lr() {
        let mut sched = PlateauScheduler::new(0.1, 1, 1e-6);
        let mut lr = 1e-5;
        for _ in 0..10 {
            lr = sched.update(1.0, lr).unwrap();
        }
        assert_eq!(lr, 1e-6);
    }

    #[test]
    fn nan_loss_is_a_numeric_error() {
        let mut sched = paper_scheduler();
        assert!(sched.update(f64::NAN, 1e-4).is_err());
    }

    #[test]
    fn schedule_is_a_pure_function_of_the_loss_sequence() {
        let losses = [0.8, 0.7, 0.7, 0.75, 0.7, 0.72, 0.71, 0.7, 0.69, 0.69, 0.69];
        let run = || {
            let mut sched = paper_scheduler();
            let mut lr = 1e-4;
            losses
                .iter()
                .map(|&l| {
                    lr = sched.update(l, lr).unwrap();
                    lr
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
