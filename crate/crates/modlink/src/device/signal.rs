//! Programmable signal sources standing in for physical sensors.

use serde::{Deserialize, Serialize};

/// Where a simulated sensor channel gets its raw readings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SignalSource {
    /// Always the same raw value.
    Constant { raw: u16 },
    /// Sinusoid between `min` and `max` with the given period. Sampled at
    /// integer milliseconds as
    /// `round((min+max)/2 + (max-min)/2 * sin(2*pi*t/period))`,
    /// ties rounded to even.
    Sine { min: u16, max: u16, period_ms: u32 },
    /// Cycles through `values`, dwelling `dwell_ms` on each, forever.
    Step { values: Vec<u16>, dwell_ms: u32 },
    /// Timestamped samples. Between samples the latest value at or before
    /// `t` holds; before the first sample the first value holds; after the
    /// last it holds forever unless `looped`, which wraps time modulo the
    /// last timestamp.
    Trace {
        samples: Vec<(u64, u16)>,
        #[serde(default)]
        looped: bool,
    },
    /// Set externally via [`crate::device::Device::set_signal`].
    Manual { raw: u16 },
}

impl SignalSource {
    /// Raw value at virtual time `t_ms`. Total: degenerate parameters
    /// (empty lists, zero periods) fall back to a constant.
    pub fn sample(&self, t_ms: u64) -> u16 {
        match self {
            SignalSource::Constant { raw } | SignalSource::Manual { raw } => *raw,
            SignalSource::Sine {
                min,
                max,
                period_ms,
            } => {
                if *period_ms == 0 || min >= max {
                    return *min;
                }
                let center = (f64::from(*min) + f64::from(*max)) / 2.0;
                let amplitude = (f64::from(*max) - f64::from(*min)) / 2.0;
                let phase = (t_ms % u64::from(*period_ms)) as f64 / f64::from(*period_ms);
                let value = center + amplitude * (2.0 * std::f64::consts::PI * phase).sin();
                let rounded = value.round_ties_even();
                (rounded.clamp(f64::from(*min), f64::from(*max))) as u16
            }
            SignalSource::Step { values, dwell_ms } => {
                if values.is_empty() {
                    return 0;
                }
                if *dwell_ms == 0 {
                    return values[0];
                }
                let index = (t_ms / u64::from(*dwell_ms)) as usize % values.len();
                values[index]
            }
            SignalSource::Trace { samples, looped } => {
                if samples.is_empty() {
                    return 0;
                }
                let mut t = t_ms;
                if *looped {
                    let span = samples.last().unwrap().0;
                    if span > 0 {
                        t %= span;
                    }
                }
                // Latest sample with timestamp <= t; the first value holds
                // before the trace begins.
                let idx = samples.partition_point(|(ts, _)| *ts <= t);
                if idx == 0 {
                    samples[0].1
                } else {
                    samples[idx - 1].1
                }
            }
        }
    }
}
