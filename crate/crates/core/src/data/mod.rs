//! Decay-curve data model, windowed chargeability and synthetic corpora.

mod csv;
mod synth;

pub use self::csv::{read_decays, read_decays_from, write_decays, write_decays_to};
pub use self::synth::{
    contaminate, contaminate_with, generate_ground_truth, synthesize, Contamination,
    SyntheticSpec,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid window scheme: {0}")]
    InvalidScheme(String),
    #[error("decay `{id}` has {found} windows, scheme expects d={expected}")]
    WindowCount {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("decay `{id}` window m{window} is not finite")]
    NonFinite { id: String, window: usize },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: String,
        message: String,
    },
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("bad file header: {0}")]
    Header(String),
    #[error("decays in one file must share a window scheme")]
    MixedSchemes,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] ::csv::Error),
}

/// Timing of the receiver's integration windows after current shut-off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowScheme {
    pub delay_ms: f64,
    pub window_ms: f64,
    pub count: usize,
}

impl Default for WindowScheme {
    fn default() -> Self {
        Self {
            delay_ms: 120.0,
            window_ms: 40.0,
            count: 20,
        }
    }
}

impl WindowScheme {
    pub fn new(delay_ms: f64, window_ms: f64, count: usize) -> Result<Self, DataError> {
        if !(delay_ms > 0.0 && delay_ms.is_finite()) {
            return Err(DataError::InvalidScheme(format!(
                "delay_ms must be > 0, got {delay_ms}"
            )));
        }
        if !(window_ms > 0.0 && window_ms.is_finite()) {
            return Err(DataError::InvalidScheme(format!(
                "window_ms must be > 0, got {window_ms}"
            )));
        }
        if count < 2 {
            return Err(DataError::InvalidScheme(format!(
                "at least 2 windows required, got {count}"
            )));
        }
        Ok(Self {
            delay_ms,
            window_ms,
            count,
        })
    }

    /// Window centre times in seconds.
    pub fn midpoints_s(&self) -> Vec<f64> {
        (0..self.count)
            .map(|j| (self.delay_ms + self.window_ms * (j as f64 + 0.5)) * 1e-3)
            .collect()
    }
}

/// One IP measurement: `d` windowed chargeabilities in mV/V plus metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpDecay {
    pub id: String,
    pub windows: Vec<f64>,
    pub vp_mv: Option<f64>,
    pub current_ma: Option<f64>,
    /// Empirical confidence score in percent, when the survey provides one.
    pub label: Option<f64>,
    pub scheme: WindowScheme,
}

impl IpDecay {
    pub fn new(
        id: impl Into<String>,
        windows: Vec<f64>,
        scheme: WindowScheme,
    ) -> Result<Self, DataError> {
        let decay = Self {
            id: id.into(),
            windows,
            vp_mv: None,
            current_ma: None,
            label: None,
            scheme,
        };
        decay.validate()?;
        Ok(decay)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.windows.len() != self.scheme.count {
            return Err(DataError::WindowCount {
                id: self.id.clone(),
                expected: self.scheme.count,
                found: self.windows.len(),
            });
        }
        if let Some(j) = self.windows.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite {
                id: self.id.clone(),
                window: j + 1,
            });
        }
        Ok(())
    }

    /// Same decay with different window values (metadata kept).
    pub fn with_windows(&self, windows: Vec<f64>) -> Self {
        Self {
            windows,
            ..self.clone()
        }
    }

    pub fn average_chargeability(&self) -> f64 {
        average_chargeability(&self.windows)
    }
}

/// Mean of the window chargeabilities.
///
/// Instrument windows are already normalized by primary voltage and window
/// length, so the average chargeability is their arithmetic mean.
pub fn average_chargeability(windows: &[f64]) -> f64 {
    windows.iter().sum::<f64>() / windows.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_windows_average_to_the_constant() {
        assert_eq!(average_chargeability(&[5.0; 20]), 5.0);
    }

    #[test]
    fn ramp_average() {
        let ramp: Vec<f64> = (1..=20).rev().map(f64::from).collect();
        assert_eq!(ramp[0], 20.0);
        assert_eq!(average_chargeability(&ramp), 10.5);
    }

    #[test]
    fn two_window_scheme() {
        let scheme = WindowScheme::new(120.0, 40.0, 2).unwrap();
        let d = IpDecay::new("a", vec![3.0, 1.0], scheme).unwrap();
        assert_eq!(d.average_chargeability(), 2.0);
    }

    #[test]
    fn scheme_validation() {
        assert!(WindowScheme::new(0.0, 40.0, 20).is_err());
        assert!(WindowScheme::new(120.0, -1.0, 20).is_err());
        assert!(WindowScheme::new(120.0, 40.0, 1).is_err());
        let s = WindowScheme::default();
        assert_eq!((s.delay_ms, s.window_ms, s.count), (120.0, 40.0, 20));
        let mid = s.midpoints_s();
        assert!((mid[0] - 0.14).abs() < 1e-15);
        assert!((mid[19] - 0.90).abs() < 1e-12);
    }

    #[test]
    fn decay_validation() {
        let s = WindowScheme::default();
        assert!(matches!(
            IpDecay::new("x", vec![1.0; 19], s),
            Err(DataError::WindowCount { expected: 20, found: 19, .. })
        ));
        let mut w = vec![1.0; 20];
        w[4] = f64::NAN;
        assert!(matches!(
            IpDecay::new("x", w, s),
            Err(DataError::NonFinite { window: 5, .. })
        ));
        // negative values are legal at low S/N
        assert!(IpDecay::new("x", vec![-0.5; 20], s).is_ok());
    }

    proptest! {
        #[test]
        fn average_is_affine(
            xs in prop::collection::vec(-50.0f64..50.0, 2..30),
            a in -5.0f64..5.0,
            b in -10.0f64..10.0,
        ) {
            let mapped: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let lhs = average_chargeability(&mapped);
            let rhs = a * average_chargeability(&xs) + b;
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }
    }
}
