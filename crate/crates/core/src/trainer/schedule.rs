use std::f64::consts::PI;

/// Learning rate as a function of the optimizer step.
pub trait LrSchedule {
    fn lr_at(&self, step: u64, total_steps: u64) -> f64;
}

/// Linear warmup from 0 to `lr_max` over `warmup_steps`, then cosine decay to
/// `lr_min` at `total_steps`. Steps past the end clamp to `lr_min`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarmupCosine {
    pub lr_max: f64,
    pub lr_min: f64,
    pub warmup_steps: u64,
}

impl LrSchedule for WarmupCosine {
    fn lr_at(&self, step: u64, total_steps: u64) -> f64 {
        if step > total_steps {
            return self.lr_min;
        }
        if step <= self.warmup_steps && self.warmup_steps > 0 {
            return self.lr_max * step as f64 / self.warmup_steps as f64;
        }
        let decay_steps = total_steps.saturating_sub(self.warmup_steps);
        if decay_steps == 0 {
            return self.lr_min;
        }
        let progress = (step - self.warmup_steps) as f64 / decay_steps as f64;
        self.lr_min + 0.5 * (self.lr_max - self.lr_min) * (1.0 + (PI * progress).cos())
    }
}

/// Multiplies the rate by `gamma` every `every` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDecay {
    pub lr: f64,
    pub gamma: f64,
    pub every: u64,
}

impl LrSchedule for StepDecay {
    fn lr_at(&self, step: u64, _total_steps: u64) -> f64 {
        let drops = step.checked_div(self.every).unwrap_or(0);
        self.lr * self.gamma.powi(drops.min(i32::MAX as u64) as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: WarmupCosine = WarmupCosine {
        lr_max: 1e-3,
        lr_min: 1e-5,
        warmup_steps: 10,
    };

    #[test]
    fn warmup_and_cosine_examples() {
        assert_eq!(S.lr_at(0, 110), 0.0);
        assert_eq!(S.lr_at(5, 110), 5e-4);
        assert_eq!(S.lr_at(10, 110), 1e-3);
        let mid = S.lr_at(60, 110);
        assert!((mid - (1e-3 + 1e-5) / 2.0).abs() < 1e-12);
        assert!((S.lr_at(110, 110) - 1e-5).abs() < 1e-18);
        assert_eq!(S.lr_at(500, 110), 1e-5);
    }

    #[test]
    fn monotone_after_warmup() {
        let mut prev = f64::INFINITY;
        for step in 10..=110 {
            let lr = S.lr_at(step, 110);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn no_warmup_starts_at_max() {
        let s = WarmupCosine {
            warmup_steps: 0,
            ..S
        };
        assert_eq!(s.lr_at(0, 100), 1e-3);
    }

    #[test]
    fn step_decay() {
        let s = StepDecay {
            lr: 1.0,
            gamma: 0.5,
            every: 10,
        };
        assert_eq!(s.lr_at(9, 0), 1.0);
        assert_eq!(s.lr_at(25, 0), 0.25);
    }
}
