//! Directional symbols and scored guidance shared by the parser, the
//! simulated humans and the environment.

use std::fmt;

use serde::{Deserialize, Serialize};

/// One egocentric direction: `U` straight on, `D` reverse, `L` left, `R` right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DirectionalSymbol {
    U,
    D,
    L,
    R,
}

impl DirectionalSymbol {
    pub const ALL: [DirectionalSymbol; 4] = [Self::U, Self::D, Self::L, Self::R];

    /// Observation code: U=1, D=2, L=3, R=4 (0 is reserved for padding).
    pub fn code(self) -> u8 {
        match self {
            Self::U => 1,
            Self::D => 2,
            Self::L => 3,
            Self::R => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Self::U),
            2 => Some(Self::D),
            3 => Some(Self::L),
            4 => Some(Self::R),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Self::U => 'U',
            Self::D => 'D',
            Self::L => 'L',
            Self::R => 'R',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'U' => Some(Self::U),
            'D' => Some(Self::D),
            'L' => Some(Self::L),
            'R' => Some(Self::R),
            _ => None,
        }
    }
}

impl fmt::Display for DirectionalSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Symbols with per-symbol confidence and their mean, the human trust `tau_h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ScoredGuidance {
    symbols: Vec<DirectionalSymbol>,
    confidences: Vec<f64>,
    tau_h: f64,
}

impl ScoredGuidance {
    /// Builds guidance from parallel symbol/confidence lists.
    ///
    /// Panics when the lengths differ or a confidence lies outside `(0, 1]`.
    pub fn new(symbols: Vec<DirectionalSymbol>, confidences: Vec<f64>) -> Self {
        assert_eq!(
            symbols.len(),
            confidences.len(),
            "one confidence per symbol"
        );
        assert!(
            confidences.iter().all(|&c| c > 0.0 && c <= 1.0),
            "confidences must lie in (0, 1]: {confidences:?}"
        );
        let tau_h = if confidences.is_empty() {
            0.0
        } else {
            confidences.iter().sum::<f64>() / confidences.len() as f64
        };
        Self {
            symbols,
            confidences,
            tau_h,
        }
    }

    pub fn uniform(symbols: Vec<DirectionalSymbol>, confidence: f64) -> Self {
        let confidences = vec![confidence; symbols.len()];
        Self::new(symbols, confidences)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn symbols(&self) -> &[DirectionalSymbol] {
        &self.symbols
    }

    pub fn confidences(&self) -> &[f64] {
        &self.confidences
    }

    pub fn tau_h(&self) -> f64 {
        self.tau_h
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Keeps at most `l_max` leading symbols and recomputes `tau_h`.
    pub fn truncated(mut self, l_max: usize) -> Self {
        if self.symbols.len() > l_max {
            self.symbols.truncate(l_max);
            self.confidences.truncate(l_max);
            return Self::new(self.symbols, self.confidences);
        }
        self
    }
}

pub fn symbols_to_string(symbols: &[DirectionalSymbol]) -> String {
    symbols
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(",")
}
