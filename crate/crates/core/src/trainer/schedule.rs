/// State after one validation check of the plateau scheduler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateauStep {
    pub lr: f64,
    pub stall_counter: usize,
    pub best: f64,
}

/// Halve the learning rate once validation accuracy has failed to strictly
/// improve for `patience` consecutive checks.
pub fn plateau_step(best_so_far: f64, current: f64, stall_counter: usize, lr: f64, patience: usize) -> PlateauStep {
    if current > best_so_far {
        return PlateauStep {
            lr,
            stall_counter: 0,
            best: current,
        };
    }
    let counter = stall_counter + 1;
    if counter >= patience {
        PlateauStep {
            lr: lr / 2.0,
            stall_counter: 0,
            best: best_so_far,
        }
    } else {
        PlateauStep {
            lr,
            stall_counter: counter,
            best: best_so_far,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn improvement_resets() {
        let s = plateau_step(0.6, 0.65, 3, 0.001, 5);
        assert_eq!(s, PlateauStep { lr: 0.001, stall_counter: 0, best: 0.65 });
    }

    #[test]
    fn halves_after_patience() {
        let mut s = PlateauStep { lr: 0.001, stall_counter: 0, best: 0.7 };
        for epoch in 1..=5 {
            s = plateau_step(s.best, 0.69, s.stall_counter, s.lr, 5);
            if epoch < 5 {
                assert_eq!(s.lr, 0.001);
                assert_eq!(s.stall_counter, epoch);
            }
        }
        assert_eq!(s.lr, 0.0005);
        assert_eq!(s.stall_counter, 0);
    }

    #[test]
    fn tie_is_not_improvement() {
        let s = plateau_step(0.7, 0.7, 0, 0.001, 5);
        assert_eq!(s.stall_counter, 1);
        assert_eq!(s.best, 0.7);
    }
}
