/// Stops once validation loss has failed to improve for `patience`
/// consecutive epochs.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, best_epoch: 0, stale: 0 }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> Verdict {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.stale = 0;
            return Verdict::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            Verdict::Stop
        } else {
            Verdict::Continue
        }
    }

    pub fn best(&self) -> (usize, f64) {
        (self.best_epoch, self.best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stop_epoch(losses: impl Iterator<Item = f64>, patience: usize) -> Option<usize> {
        let mut es = EarlyStopping::new(patience);
        for (i, l) in losses.enumerate() {
            if es.observe(i + 1, l) == Verdict::Stop {
                return Some(i + 1);
            }
        }
        None
    }

    #[test]
    fn strictly_worsening_loss_stops_at_patience_plus_one() {
        assert_eq!(stop_epoch((0..100).map(|e| e as f64), 10), Some(11));
        assert_eq!(stop_epoch((0..100).map(|e| e as f64), 1), Some(2));
    }

    #[test]
    fn improvement_resets_the_counter() {
        let losses = [5.0, 6.0, 6.0, 4.0, 7.0, 7.0, 7.0];
        assert_eq!(stop_epoch(losses.into_iter(), 3), Some(7));
        let mut es = EarlyStopping::new(3);
        for (i, l) in losses.iter().enumerate() {
            es.observe(i + 1, *l);
        }
        assert_eq!(es.best(), (4, 4.0));
    }

    #[test]
    fn equal_loss_is_not_an_improvement() {
        assert_eq!(stop_epoch([1.0, 1.0, 1.0].into_iter(), 2), Some(3));
    }
}
