//! Learning-rate schedules: Noam warmup/inverse-sqrt decay, validation-based
//! annealing, and constant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Noam,
    ValidationAnneal,
    Constant,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    pub warmup_steps: u64,
    pub peak_lr: f64,
    pub anneal_factor: f64,
    pub improvement_threshold: f64,
}

impl ScheduleConfig {
    pub fn noam(peak_lr: f64, warmup_steps: u64) -> Self {
        ScheduleConfig {
            kind: ScheduleKind::Noam,
            warmup_steps,
            peak_lr,
            anneal_factor: 0.5,
            improvement_threshold: 0.0,
        }
    }

    pub fn constant(lr: f64) -> Self {
        ScheduleConfig {
            kind: ScheduleKind::Constant,
            warmup_steps: 1,
            peak_lr: lr,
            anneal_factor: 0.5,
            improvement_threshold: 0.0,
        }
    }

    pub fn validation_anneal(lr: f64, anneal_factor: f64, improvement_threshold: f64) -> Self {
        ScheduleConfig {
            kind: ScheduleKind::ValidationAnneal,
            warmup_steps: 1,
            peak_lr: lr,
            anneal_factor,
            improvement_threshold,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps == 0 {
            return Err(Error::Config("warmup_steps must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.anneal_factor) || self.anneal_factor == 0.0 {
            return Err(Error::Config("anneal_factor must be in (0, 1)".into()));
        }
        if self.peak_lr <= 0.0 {
            return Err(Error::Config("peak_lr must be positive".into()));
        }
        Ok(())
    }
}

/// Learning rate at `step` (1-based). For validation annealing,
/// `validation_history` holds the per-evaluation metric values seen so far
/// (lower is better); the rate is multiplied by `anneal_factor` each time an
/// evaluation improved on its predecessor by less than the threshold.
pub fn lr_at(schedule: &ScheduleConfig, step: u64, validation_history: &[f64]) -> f64 {
    debug_assert!(step >= 1);
    match schedule.kind {
        ScheduleKind::Constant => schedule.peak_lr,
        ScheduleKind::Noam => {
            let s = step as f64;
            let w = schedule.warmup_steps as f64;
            schedule.peak_lr * (s / w).min((w / s).sqrt())
        }
        ScheduleKind::ValidationAnneal => {
            let mut lr = schedule.peak_lr;
            for pair in validation_history.windows(2) {
                let improvement = pair[0] - pair[1];
                if improvement < schedule.improvement_threshold {
                    lr *= schedule.anneal_factor;
                }
            }
            lr
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noam_peak_at_warmup() {
        let s = ScheduleConfig::noam(2e-3, 25000);
        assert_eq!(lr_at(&s, 25000, &[]), 2e-3);
    }

    #[test]
    fn noam_inverse_sqrt_after_warmup() {
        let s = ScheduleConfig::noam(1e-3, 25000);
        assert!((lr_at(&s, 100000, &[]) - 0.5e-3).abs() < 1e-12);
    }

    #[test]
    fn noam_linear_before_warmup() {
        let s = ScheduleConfig::noam(1e-3, 1000);
        assert!((lr_at(&s, 100, &[]) - 1e-4).abs() < 1e-12);
    }

    #[test]
    fn anneal_triggers_on_stagnant_validation() {
        let s = ScheduleConfig::validation_anneal(1.0, 0.5, 0.1);
        assert_eq!(lr_at(&s, 1, &[10.0, 10.0]), 0.5);
        assert_eq!(lr_at(&s, 1, &[10.0, 9.0]), 1.0);
        assert_eq!(lr_at(&s, 1, &[10.0, 10.0, 9.99]), 0.25);
    }

    #[test]
    fn constant_ignores_everything() {
        let s = ScheduleConfig::constant(0.7);
        assert_eq!(lr_at(&s, 1, &[]), 0.7);
        assert_eq!(lr_at(&s, 99999, &[5.0, 4.0]), 0.7);
    }
}
