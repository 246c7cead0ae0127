//! Deterministic waveforms used as truth unknown inputs.

use serde::{Deserialize, Serialize};

use crate::lincore::Vector;
use crate::sysmodel::Signal;

/// Sawtooth rising from −1 to 1 over each period, zero at multiples of
/// the period.
pub fn sawtooth(t: f64, period: f64) -> f64 {
    let x = t / period;
    2.0 * (x - (x + 0.5).floor())
}

/// Triangle wave in `[−1, 1]` with value 0 at `t = 0`.
pub fn triangle(t: f64, period: f64) -> f64 {
    let x = t / period + 0.25;
    let frac = x - x.floor();
    if frac < 0.5 {
        4.0 * frac - 1.0
    } else {
        3.0 - 4.0 * frac
    }
}

/// Linear chirp `sin(2π(f₀t + ½kt²))`.
pub fn chirp(t: f64, f0: f64, rate: f64) -> f64 {
    (2.0 * std::f64::consts::PI * (f0 * t + 0.5 * rate * t * t)).sin()
}

/// Scalar waveform description, serializable for custom scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Waveform {
    Constant {
        value: f64,
    },
    /// `amplitude · sin(frequency · t + phase) + offset`, frequency in rad per time unit.
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        offset: f64,
    },
    Sawtooth {
        amplitude: f64,
        period: f64,
        #[serde(default)]
        offset: f64,
    },
    Triangle {
        amplitude: f64,
        period: f64,
    },
    Chirp {
        amplitude: f64,
        f0: f64,
        rate: f64,
    },
    /// The inner waveform on `[start, end)`, zero elsewhere.
    Window {
        start: f64,
        end: f64,
        inner: Box<Waveform>,
    },
    Sum {
        terms: Vec<Waveform>,
    },
}

impl Waveform {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Waveform::Constant { value } => *value,
            Waveform::Sine {
                amplitude,
                frequency,
                phase,
                offset,
            } => amplitude * (frequency * t + phase).sin() + offset,
            Waveform::Sawtooth {
                amplitude,
                period,
                offset,
            } => amplitude * sawtooth(t, *period) + offset,
            Waveform::Triangle { amplitude, period } => amplitude * triangle(t, *period),
            Waveform::Chirp {
                amplitude,
                f0,
                rate,
            } => amplitude * chirp(t, *f0, *rate),
            Waveform::Window { start, end, inner } => {
                if t >= *start && t < *end {
                    inner.eval(t)
                } else {
                    0.0
                }
            }
            Waveform::Sum { terms } => terms.iter().map(|w| w.eval(t)).sum(),
        }
    }
}

/// Vector signal whose components are the given waveforms.
pub fn waveform_signal(components: Vec<Waveform>) -> Signal {
    let dim = components.len();
    Signal::from_fn(dim, move |t| {
        Vector::from_iterator(dim, components.iter().map(|w| w.eval(t)))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn waveform_shapes() {
        assert_abs_diff_eq!(sawtooth(0.0, 2.0), 0.0);
        assert_abs_diff_eq!(sawtooth(0.5, 2.0), 0.5);
        assert_abs_diff_eq!(sawtooth(1.5, 2.0), -0.5);
        assert_abs_diff_eq!(triangle(0.0, 4.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(triangle(1.0, 4.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(triangle(3.0, 4.0), -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(chirp(0.0, 1.0, 1.0), 0.0);
    }

    #[test]
    fn waveform_json_round_trip() {
        let w = Waveform::Sum {
            terms: vec![
                Waveform::Sine {
                    amplitude: 1.0,
                    frequency: 2.0,
                    phase: 0.1,
                    offset: 0.0,
                },
                Waveform::Window {
                    start: 1.0,
                    end: 2.0,
                    inner: Box::new(Waveform::Constant { value: 3.0 }),
                },
            ],
        };
        let s = serde_json::to_string(&w).unwrap();
        let back: Waveform = serde_json::from_str(&s).unwrap();
        assert_eq!(w, back);
        assert_abs_diff_eq!(back.eval(1.5), (3.0f64 + 0.1).sin() + 3.0, epsilon = 1e-15);
    }
}
