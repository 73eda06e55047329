//! Test functionals `φ(d(i,j), x_i)` evaluated on k sampled leaves.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TestFunctional {
    /// `φ ≡ 1`.
    Const,
    /// `1{d(1,2) <= a}`; identically 1 when `k = 1`.
    DistIndicator(f64),
    /// `Π_i min(x_i, cap)^p`.
    MarkPower { p: f64, cap: f64 },
}

impl TestFunctional {
    /// `dist` is the row-major `k×k` distance matrix, `marks` the `k` leaf
    /// marks.
    pub fn eval(&self, dist: &[f64], marks: &[f64]) -> f64 {
        let k = marks.len();
        match *self {
            TestFunctional::Const => 1.0,
            TestFunctional::DistIndicator(a) => {
                if k < 2 || dist[1] <= a {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunctional::MarkPower { p, cap } => {
                marks.iter().map(|&x| x.min(cap).powf(p)).product()
            }
        }
    }
}

fn args(s: &str, name: &str) -> Option<Vec<f64>> {
    let inner = s.strip_prefix(name)?.trim().strip_prefix('(')?.strip_suffix(')')?;
    inner.split(',').map(|a| a.trim().parse::<f64>().ok()).collect()
}

impl FromStr for TestFunctional {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let s = s.trim();
        let bad = || Error::UnknownFunctional(s.to_string());
        if s == "const" {
            return Ok(TestFunctional::Const);
        }
        if s.starts_with("dist_indicator") {
            return match args(s, "dist_indicator").as_deref() {
                Some(&[a]) if a.is_finite() => Ok(TestFunctional::DistIndicator(a)),
                _ => Err(bad()),
            };
        }
        if s.starts_with("mark_power") {
            return match args(s, "mark_power").as_deref() {
                Some(&[p, cap]) if p.is_finite() && cap > 0.0 => {
                    Ok(TestFunctional::MarkPower { p, cap })
                }
                _ => Err(bad()),
            };
        }
        Err(bad())
    }
}

impl fmt::Display for TestFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunctional::Const => write!(f, "const"),
            TestFunctional::DistIndicator(a) => write!(f, "dist_indicator({a})"),
            TestFunctional::MarkPower { p, cap } => write!(f, "mark_power({p},{cap})"),
        }
    }
}

impl TryFrom<String> for TestFunctional {
    type Error = Error;
    fn try_from(s: String) -> Result<Self, Error> {
        s.parse()
    }
}

impl From<TestFunctional> for String {
    fn from(f: TestFunctional) -> String {
        f.to_string()
    }
}
