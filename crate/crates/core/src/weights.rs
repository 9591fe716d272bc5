//! Class weights for the weighted cross-entropy loss.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, LabelCounts};
use crate::error::{Error, Result};

/// Default offset of the log-inverse scheme.
pub const LOG_INVERSE_EPSILON: f64 = 1.05;
/// Base of the logarithm in the log-inverse scheme (natural log).
pub const LOG_INVERSE_BASE: f64 = std::f64::consts::E;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    Balanced,
    LogInverse,
    Manual,
}

/// Per-class loss weights in [`Label`] index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeightSpec {
    pub scheme: WeightScheme,
    pub weights: [f64; 3],
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl ClassWeightSpec {
    pub fn weight(&self, label: Label) -> f64 {
        self.weights[label.index()]
    }

    /// All-ones weights, i.e. plain cross-entropy.
    pub fn uniform() -> Self {
        ClassWeightSpec {
            scheme: WeightScheme::Manual,
            weights: [1.0; 3],
            params: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(w) = self.weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "class weights must be positive and finite, got {w}"
            )));
        }
        Ok(())
    }
}

fn check_counts(counts: &LabelCounts) -> Result<()> {
    if let Some(l) = Label::ALL.iter().find(|&&l| counts[l] == 0) {
        return Err(Error::InvalidArgument(format!(
            "class {l:?} has zero samples; its weight is undefined"
        )));
    }
    Ok(())
}

/// `w_c = N / (K * n_c)` with `K = 3`.
pub fn balanced_weights(counts: &LabelCounts) -> Result<ClassWeightSpec> {
    check_counts(counts)?;
    let n = counts.total() as f64;
    let k = Label::COUNT as f64;
    let weights = Label::ALL.map(|l| n / (k * counts[l] as f64));
    Ok(ClassWeightSpec {
        scheme: WeightScheme::Balanced,
        weights,
        params: BTreeMap::new(),
    })
}

/// `w_c = 1 / ln(n_c + epsilon)`, with `n_c` the raw class count.
pub fn log_inverse_weights(counts: &LabelCounts, epsilon: f64) -> Result<ClassWeightSpec> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    check_counts(counts)?;
    let mut weights = [0.0; 3];
    for l in Label::ALL {
        let denom = (counts[l] as f64 + epsilon).ln();
        if denom <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "ln({} + {epsilon}) is not positive for class {l:?}",
                counts[l]
            )));
        }
        weights[l.index()] = 1.0 / denom;
    }
    let mut params = BTreeMap::new();
    params.insert("epsilon".to_string(), epsilon);
    Ok(ClassWeightSpec {
        scheme: WeightScheme::LogInverse,
        weights,
        params,
    })
}

pub fn manual_weights(vector: &[f64]) -> Result<ClassWeightSpec> {
    let weights: [f64; 3] = vector.try_into().map_err(|_| {
        Error::InvalidArgument(format!("expected 3 class weights, got {}", vector.len()))
    })?;
    let spec = ClassWeightSpec {
        scheme: WeightScheme::Manual,
        weights,
        params: BTreeMap::new(),
    };
    spec.validate()?;
    Ok(spec)
}

/// Weight selection as given on the command line: `balanced`, `log`,
/// `log:<epsilon>` or `manual:w0,w1,w2`. Formula schemes are resolved
/// against training-set counts later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum WeightChoice {
    Balanced,
    LogInverse { epsilon: f64 },
    Manual([f64; 3]),
}

impl WeightChoice {
    pub fn resolve(&self, counts: &LabelCounts) -> Result<ClassWeightSpec> {
        match self {
            WeightChoice::Balanced => balanced_weights(counts),
            WeightChoice::LogInverse { epsilon } => log_inverse_weights(counts, *epsilon),
            WeightChoice::Manual(w) => manual_weights(w),
        }
    }
}

impl FromStr for WeightChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, tail) = match s.split_once(':') {
            Some((h, t)) => (h, Some(t)),
            None => (s, None),
        };
        match (head, tail) {
            ("balanced", None) => Ok(WeightChoice::Balanced),
            ("log", None) => Ok(WeightChoice::LogInverse {
                epsilon: LOG_INVERSE_EPSILON,
            }),
            ("log", Some(eps)) => {
                let epsilon: f64 = eps
                    .parse()
                    .map_err(|_| Error::Config(format!("bad epsilon in {s:?}")))?;
                Ok(WeightChoice::LogInverse { epsilon })
            }
            ("manual", Some(v)) => {
                let ws = v
                    .split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::Config(format!("bad weight vector in {s:?}")))?;
                let spec = manual_weights(&ws)?;
                Ok(WeightChoice::Manual(spec.weights))
            }
            _ => Err(Error::Config(format!(
                "unknown weights {s:?}; expected balanced, log or manual:w0,w1,w2"
            ))),
        }
    }
}

impl fmt::Display for WeightChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightChoice::Balanced => f.write_str("balanced"),
            WeightChoice::LogInverse { epsilon } => write!(f, "log:{epsilon}"),
            WeightChoice::Manual([a, b, c]) => write!(f, "manual:{a},{b},{c}"),
        }
    }
}

impl TryFrom<String> for WeightChoice {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<WeightChoice> for String {
    fn from(w: WeightChoice) -> String {
        w.to_string()
    }
}
