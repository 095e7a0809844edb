//! Sensor fault signals.

use serde::{Deserialize, Serialize};
use sfe_core::{Error, Matrix, Result};

/// One fault channel, a function of the absolute sample index `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FaultSignal {
    Constant {
        value: f64,
    },
    /// `value` from sample `at` on.
    Step {
        at: usize,
        value: f64,
    },
    /// `amplitude · sin(frequency · π · k + phase)`.
    Sinusoid {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl FaultSignal {
    pub fn value(&self, k: usize) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::Step { at, value } => {
                if k >= at {
                    value
                } else {
                    0.0
                }
            }
            Self::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => amplitude * (frequency * std::f64::consts::PI * k as f64 + phase).sin(),
        }
    }
}

/// Faults on a fixed set of sensors, zero before `onset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultScenario {
    pub onset: usize,
    /// One signal per faulty sensor, in sensor order.
    pub signals: Vec<FaultSignal>,
}

impl Default for FaultScenario {
    /// Sinusoid on the first faulty sensor and a unit step on the second,
    /// both zero up to and including sample 50.
    fn default() -> Self {
        Self {
            onset: 51,
            signals: vec![
                FaultSignal::Sinusoid {
                    amplitude: 1.0,
                    frequency: 0.1,
                    phase: 0.0,
                },
                FaultSignal::Constant { value: 1.0 },
            ],
        }
    }
}

impl FaultScenario {
    pub fn faults(&self) -> usize {
        self.signals.len()
    }

    /// `n × n_f` fault series.
    pub fn series(&self, n: usize, n_f: usize) -> Result<Matrix> {
        if self.signals.len() != n_f {
            return Err(Error::validation(format!(
                "scenario has {} fault signals for {n_f} faulty sensors",
                self.signals.len()
            )));
        }
        Ok(Matrix::from_fn(n, n_f, |k, j| {
            if k < self.onset {
                0.0
            } else {
                self.signals[j].value(k)
            }
        }))
    }
}
