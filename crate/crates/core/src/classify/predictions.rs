use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub sample_id: String,
    pub label: Label,
    pub probs: [f64; 3],
}

/// Predictions of one fold model: a label and softmax vector per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub model_id: usize,
    pub rows: Vec<PredictionRow>,
}

const HEADER: [&str; 5] = ["sample_id", "label", "p_no", "p_some", "p_yes"];

impl PredictionSet {
    pub fn labels(&self) -> Vec<Label> {
        self.rows.iter().map(|r| r.label).collect()
    }

    /// Checks that every vector is a distribution and that the label is its
    /// argmax.
    pub fn validate(&self) -> Result<()> {
        for r in &self.rows {
            let s: f64 = r.probs.iter().sum();
            if r.probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!(
                    "sample {:?}: {:?} is not a probability vector",
                    r.sample_id, r.probs
                )));
            }
            if super::argmax(&r.probs) != r.label {
                return Err(Error::Validation(format!(
                    "sample {:?}: label {} is not the argmax of {:?}",
                    r.sample_id, r.label, r.probs
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.sample_id.clone(),
                r.label.as_str().to_string(),
                r.probs[0].to_string(),
                r.probs[1].to_string(),
                r.probs[2].to_string(),
            ])?;
        }
        w.into_inner()
            .map_err(|e| Error::io("flushing prediction CSV", e.into_error()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_csv()?)
    }

    pub fn load(path: &Path, model_id: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        if headers.iter().ne(HEADER) {
            return Err(Error::Validation(format!(
                "{}: unexpected prediction header {:?}",
                path.display(),
                headers
            )));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i].parse().map_err(|_| {
                    Error::Validation(format!("{}: bad probability {:?}", path.display(), &rec[i]))
                })
            };
            rows.push(PredictionRow {
                sample_id: rec[0].to_string(),
                label: rec[1].parse()?,
                probs: [num(2)?, num(3)?, num(4)?],
            });
        }
        let set = PredictionSet { model_id, rows };
        set.validate()?;
        Ok(set)
    }
}
