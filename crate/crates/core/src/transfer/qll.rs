use serde::{Deserialize, Serialize};

use crate::dnn::{LearningRateProfile, Network};
use crate::error::{Error, Result};

/// Quasi-liquid-layer ramp over parameterized-layer positions (1-based positions
/// in the layer stack, counting only fully connected layers' slots).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QllSchedule {
    /// First liquid position.
    pub first_liquid: usize,
    /// Last position, trained at the full `top_rate`.
    pub last: usize,
    pub top_rate: f64,
    /// Ramp value at `first_liquid`; the ramp is linear up to 1 at `last`.
    pub ramp_start: f64,
}

impl Default for QllSchedule {
    fn default() -> Self {
        QllSchedule {
            first_liquid: 4,
            last: 8,
            top_rate: 0.7e-4,
            ramp_start: 5.0 / 7.0,
        }
    }
}

impl QllSchedule {
    /// Only the output layer is trainable.
    pub fn hard_switch(last: usize, top_rate: f64) -> Self {
        QllSchedule {
            first_liquid: last,
            last,
            top_rate,
            ramp_start: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.first_liquid > self.last {
            return Err(Error::config(format!(
                "first liquid layer {} lies above the last layer {}",
                self.first_liquid, self.last
            )));
        }
        if !(self.top_rate >= 0.0 && self.top_rate.is_finite()) {
            return Err(Error::config("QLL top rate must be a nonnegative number"));
        }
        if !(0.0..=1.0).contains(&self.ramp_start) {
            return Err(Error::config("QLL ramp start must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Ramp value `g(n)`; 0 outside `[first_liquid, last]`.
    pub fn ramp(&self, n: usize) -> f64 {
        if n < self.first_liquid || n > self.last {
            return 0.0;
        }
        if self.first_liquid == self.last {
            return 1.0;
        }
        let t = (n - self.first_liquid) as f64 / (self.last - self.first_liquid) as f64;
        self.ramp_start + (1.0 - self.ramp_start) * t
    }

    pub fn rate(&self, n: usize) -> f64 {
        self.top_rate * self.ramp(n)
    }
}

/// Rates for the parameterized layers found at `positions`.
pub fn qll_rates(schedule: &QllSchedule, positions: &[usize]) -> Result<LearningRateProfile> {
    schedule.validate()?;
    Ok(LearningRateProfile(
        positions.iter().map(|&n| schedule.rate(n)).collect(),
    ))
}

pub fn qll_rates_for(schedule: &QllSchedule, net: &Network) -> Result<LearningRateProfile> {
    qll_rates(schedule, &net.parameterized_positions())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_anchors() {
        let s = QllSchedule::default();
        let r = qll_rates(&s, &[2, 4, 6, 8]).unwrap();
        let want = [0.0, 0.5e-4, 0.6e-4, 0.7e-4];
        for (a, b) in r.rates().iter().zip(want) {
            assert!((a - b).abs() < 1e-18, "{a} vs {b}");
        }
        assert_eq!(s.rate(8), 0.7e-4);
        assert_eq!(s.rate(3), 0.0);
        assert_eq!(s.rate(9), 0.0);
    }

    #[test]
    fn hard_switch_freezes_all_but_last() {
        let r = qll_rates(&QllSchedule::hard_switch(8, 1e-3), &[2, 4, 6, 8]).unwrap();
        assert_eq!(r.rates(), &[0.0, 0.0, 0.0, 1e-3]);
    }

    #[test]
    fn inverted_schedule_rejected() {
        let s = QllSchedule {
            first_liquid: 9,
            ..QllSchedule::default()
        };
        assert!(qll_rates(&s, &[2]).is_err());
    }
}
