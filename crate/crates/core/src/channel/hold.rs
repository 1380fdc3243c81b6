use nalgebra::DVector;

/// Silence after which held values start decaying, s.
pub const HOLD_TIMEOUT: f64 = 0.1;
/// Time constant of the decay after the timeout, s.
pub const HOLD_DECAY: f64 = 0.02;

/// Zero-order hold of the last received vector with a safety decay.
#[derive(Clone, Debug, PartialEq)]
pub struct StaleHold {
    value: DVector<f64>,
    received: Option<f64>,
}

impl StaleHold {
    pub fn new(n: usize) -> Self {
        Self {
            value: DVector::zeros(n),
            received: None,
        }
    }

    pub fn update(&mut self, value: DVector<f64>, now: f64) {
        self.value = value;
        self.received = Some(now);
    }

    /// Held value; after [`HOLD_TIMEOUT`] of silence it decays
    /// exponentially towards zero.
    pub fn get(&self, now: f64) -> DVector<f64> {
        match self.received {
            None => DVector::zeros(self.value.len()),
            Some(t) => {
                let silence = now - t;
                if silence <= HOLD_TIMEOUT {
                    self.value.clone()
                } else {
                    &self.value * (-(silence - HOLD_TIMEOUT) / HOLD_DECAY).exp()
                }
            }
        }
    }

    /// Raw held value without decay.
    pub fn last(&self) -> &DVector<f64> {
        &self.value
    }

    pub fn age(&self, now: f64) -> Option<f64> {
        self.received.map(|t| now - t)
    }
}
