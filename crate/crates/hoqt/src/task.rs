//! Task identifiers shared by the protocol simulator, the SDP engine and the
//! command line, plus a small exact-rational type for closed-form values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::HoqtError;

/// Higher-order transformation of an isometry `V ∈ 𝕍_iso(d, D)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Any map `W` with `W ∘ V = 1_d`.
    Inversion,
    /// A CP map `V_pcc` with `V_pccᵀ ∘ V = 1_d`.
    PseudoCc,
    /// The complex conjugate `V*`.
    Cc,
    /// The transposed map `Vᵀ`.
    Transposition,
    /// Inversion whose failure branch hands back `V` itself.
    SuccessOrDraw,
}

impl Task {
    pub const ALL: [Task; 5] = [Task::Inversion, Task::PseudoCc, Task::Cc, Task::Transposition, Task::SuccessOrDraw];

    pub fn name(self) -> &'static str {
        match self {
            Task::Inversion => "inversion",
            Task::PseudoCc => "pseudo_cc",
            Task::Cc => "cc",
            Task::Transposition => "transposition",
            Task::SuccessOrDraw => "success_or_draw",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = HoqtError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "inversion" | "inverse" => Ok(Task::Inversion),
            "pseudo_cc" | "pcc" => Ok(Task::PseudoCc),
            "cc" | "conjugation" | "complex_conjugation" => Ok(Task::Cc),
            "transposition" | "transpose" => Ok(Task::Transposition),
            "success_or_draw" | "sod" => Ok(Task::SuccessOrDraw),
            other => Err(HoqtError::InvalidArgument(format!("unknown task `{other}`"))),
        }
    }
}

/// Non-negative rational in lowest terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rational {
    pub num: u64,
    pub den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Rational {
    /// Panics when `den == 0`.
    pub fn new(num: u64, den: u64) -> Self {
        assert!(den != 0, "zero denominator");
        let g = gcd(num, den).max(1);
        Rational { num: num / g, den: den / g }
    }

    pub fn zero() -> Self {
        Rational { num: 0, den: 1 }
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}
