//! Learning-rate schedules: step decay, multi-step decay, and cosine
//! annealing with warm restarts.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    /// lr = lr0 · factor^⌊unit / period⌋
    StepDecay { period: u64, factor: f64 },
    /// lr = lr0 · factor^(number of milestones ≤ unit)
    MultiStep { milestones: Vec<u64>, factor: f64 },
    /// lr = η_min + ½(lr0 − η_min)(1 + cos(π·t/T)), t = unit mod T
    CosineRestarts { eta_min: f64, period: u64 },
}

impl Schedule {
    pub fn validate(&self, lr0: f64) -> Result<()> {
        match self {
            Schedule::StepDecay { period, factor } => {
                if *period == 0 || !(0.0..1.0).contains(factor) {
                    return Err(Error::Config(format!(
                        "step decay needs period >= 1 and factor in (0,1), got {period}/{factor}"
                    )));
                }
            }
            Schedule::MultiStep { milestones, factor } => {
                if !(0.0..1.0).contains(factor) {
                    return Err(Error::Config(format!(
                        "multi-step factor must lie in (0,1), got {factor}"
                    )));
                }
                if milestones.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Config("milestones must strictly increase".into()));
                }
            }
            Schedule::CosineRestarts { eta_min, period } => {
                if *period == 0 {
                    return Err(Error::Config("cosine restart period must be >= 1".into()));
                }
                if *eta_min > lr0 {
                    return Err(Error::Config(format!(
                        "eta_min {eta_min} exceeds initial learning rate {lr0}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Learning rate at schedule unit `t` (epoch or iteration, depending on
    /// how the caller counts).
    pub fn lr(&self, lr0: f64, t: u64) -> f64 {
        match self {
            Schedule::StepDecay { period, factor } => lr0 * factor.powi((t / period) as i32),
            Schedule::MultiStep { milestones, factor } => {
                let passed = milestones.iter().filter(|&&m| t >= m).count();
                lr0 * factor.powi(passed as i32)
            }
            Schedule::CosineRestarts { eta_min, period } => {
                let tt = (t % period) as f64;
                eta_min
                    + 0.5 * (lr0 - eta_min) * (1.0 + (std::f64::consts::PI * tt / *period as f64).cos())
            }
        }
    }
}
