//! Compensated (Kahan) summation.
//!
//! Every sum over outcomes or observations in this crate goes through
//! [`CompensatedSum`] so results do not depend on vector length or
//! accumulation order at the level the tests can observe.

/// Kahan accumulator. Saturates cleanly when fed non-finite values instead of
/// poisoning the compensation term with `inf - inf`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        if !value.is_finite() || !self.sum.is_finite() {
            self.sum += value;
            self.compensation = 0.0;
            return;
        }
        let y = value - self.compensation;
        let t = self.sum + y;
        self.compensation = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }

    pub fn of(values: impl IntoIterator<Item = f64>) -> f64 {
        let mut acc = Self::new();
        for v in values {
            acc.add(v);
        }
        acc.value()
    }
}

/// Compensated mean; `NaN` on an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    CompensatedSum::of(values.iter().copied()) / values.len() as f64
}
