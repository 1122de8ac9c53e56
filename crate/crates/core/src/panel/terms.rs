//! Column references used by model specifications.
//!
//! A term is a product of factors joined by `*`. Each factor names a column
//! and optionally a time: `K1` is the value at the stage being modelled,
//! `K1@0` the value at time 0 and `K1@t-1` the value one step before the
//! stage. Baseline columns ignore the time part.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PanelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimeRef {
    Current,
    At(usize),
    Offset(i64),
}

impl TimeRef {
    /// Absolute time for a stage, `None` when it falls before time 0.
    pub fn resolve(self, stage: usize) -> Option<usize> {
        match self {
            TimeRef::Current => Some(stage),
            TimeRef::At(t) => Some(t),
            TimeRef::Offset(d) => usize::try_from(stage as i64 + d).ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Factor {
    pub column: String,
    pub time: TimeRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Term {
    pub factors: Vec<Factor>,
}

/// Read access to one subject's trajectory.
pub trait History {
    fn get(&self, column: &str, time: usize) -> Option<f64>;
}

impl Term {
    pub fn column(name: &str) -> Self {
        Self {
            factors: vec![Factor {
                column: name.to_string(),
                time: TimeRef::Current,
            }],
        }
    }

    /// Product of the factor values; `None` if any factor is unavailable.
    pub fn eval<H: History + ?Sized>(&self, h: &H, stage: usize) -> Option<f64> {
        let mut v = 1.0;
        for f in &self.factors {
            v *= h.get(&f.column, f.time.resolve(stage)?)?;
        }
        Some(v)
    }

    pub fn columns(&self) -> impl Iterator<Item = &str> {
        self.factors.iter().map(|f| f.column.as_str())
    }
}

fn parse_time(s: &str) -> Option<TimeRef> {
    if s == "t" {
        return Some(TimeRef::Offset(0));
    }
    if let Some(rest) = s.strip_prefix("t-") {
        return rest.parse::<i64>().ok().map(|d| TimeRef::Offset(-d));
    }
    if let Some(rest) = s.strip_prefix("t+") {
        return rest.parse::<i64>().ok().map(TimeRef::Offset);
    }
    s.parse::<usize>().ok().map(TimeRef::At)
}

impl FromStr for Term {
    type Err = PanelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PanelError::BadTerm(s.to_string());
        let mut factors = Vec::new();
        for part in s.split('*') {
            let part = part.trim();
            let (name, time) = match part.split_once('@') {
                Some((n, t)) => (n.trim(), parse_time(t.trim()).ok_or_else(bad)?),
                None => (part, TimeRef::Current),
            };
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(bad());
            }
            factors.push(Factor {
                column: name.to_string(),
                time,
            });
        }
        Ok(Self { factors })
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, fac) in self.factors.iter().enumerate() {
            if k > 0 {
                f.write_str("*")?;
            }
            f.write_str(&fac.column)?;
            match fac.time {
                TimeRef::Current => {}
                TimeRef::At(t) => write!(f, "@{t}")?,
                TimeRef::Offset(0) => f.write_str("@t")?,
                TimeRef::Offset(d) if d < 0 => write!(f, "@t{d}")?,
                TimeRef::Offset(d) => write!(f, "@t+{d}")?,
            }
        }
        Ok(())
    }
}

impl TryFrom<String> for Term {
    type Error = PanelError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Term> for String {
    fn from(t: Term) -> String {
        t.to_string()
    }
}

/// Parse a list of term strings.
pub fn parse_terms<S: AsRef<str>>(items: &[S]) -> Result<Vec<Term>, PanelError> {
    items.iter().map(|s| s.as_ref().parse()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    struct Map(HashMap<(String, usize), f64>);

    impl History for Map {
        fn get(&self, column: &str, time: usize) -> Option<f64> {
            self.0.get(&(column.to_string(), time)).copied()
        }
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["K1", "K1@0", "A@1*dN@1*K1@1", "Y@t-1", "K2@t+1", "Y@t"] {
            let t: Term = s.parse().unwrap();
            assert_eq!(t.to_string(), s);
        }
        assert!("K1@x".parse::<Term>().is_err());
        assert!("".parse::<Term>().is_err());
        assert!("a**b".parse::<Term>().is_err());
    }

    #[test]
    fn evaluation_multiplies_factors() {
        let mut m = HashMap::new();
        m.insert(("K1".to_string(), 1), 2.0);
        m.insert(("dN".to_string(), 1), 1.0);
        m.insert(("Y".to_string(), 0), 5.0);
        let h = Map(m);
        let t: Term = "K1@t*dN*Y@t-1".parse().unwrap();
        assert_eq!(t.eval(&h, 1), Some(10.0));
        assert_eq!(t.eval(&h, 2), None);
        let early: Term = "Y@t-2".parse().unwrap();
        assert_eq!(early.eval(&h, 1), None);
    }
}
