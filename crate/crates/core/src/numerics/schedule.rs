use serde::{Deserialize, Serialize};

/// Half-cosine interpolation from `start` to `end` over `total_steps`,
/// holding `end` afterwards. Used both for decays and for warmups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineSchedule {
    pub start: f64,
    pub end: f64,
    pub total_steps: u64,
}

impl CosineSchedule {
    pub fn new(start: f64, end: f64, total_steps: u64) -> Self {
        Self { start, end, total_steps }
    }

    pub fn value(&self, step: u64) -> f64 {
        if step >= self.total_steps {
            return self.end;
        }
        let t = step as f64 / self.total_steps as f64;
        self.end + (self.start - self.end) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

pub fn schedule_value(s: &CosineSchedule, step: u64) -> f64 {
    s.value(step)
}
