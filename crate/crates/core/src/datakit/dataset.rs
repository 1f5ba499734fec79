use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Rows of `(features, targets)` with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        target_names: Vec<String>,
        x: Vec<Vec<f64>>,
        y: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let ds = Self {
            feature_names,
            target_names,
            x,
            y,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_names.is_empty() || self.target_names.is_empty() {
            return Err(Error::Data("need at least one feature and one target".into()));
        }
        let mut seen = HashSet::new();
        for name in self.feature_names.iter().chain(&self.target_names) {
            if !seen.insert(name.as_str()) {
                return Err(Error::Data(format!("duplicate column name `{name}`")));
            }
        }
        check_len("target rows", self.x.len(), self.y.len())?;
        if self.x.is_empty() {
            return Err(Error::Data("dataset has no rows".into()));
        }
        for (xi, yi) in self.x.iter().zip(&self.y) {
            check_len("feature row", self.n_features(), xi.len())?;
            check_len("target row", self.n_targets(), yi.len())?;
            if xi.iter().chain(yi).any(|v| !v.is_finite()) {
                return Err(Error::Data("non-finite value in dataset".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_targets(&self) -> usize {
        self.target_names.len()
    }

    /// Rows at `indices`, in that order. An empty selection is allowed here
    /// so splits with a zero-sized part can still be represented.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            feature_names: self.feature_names.clone(),
            target_names: self.target_names.clone(),
            x: indices.iter().map(|&i| self.x[i].clone()).collect(),
            y: indices.iter().map(|&i| self.y[i].clone()).collect(),
        }
    }

    /// Per-feature `(min, max)` over all rows.
    pub fn feature_ranges(&self) -> Vec<(f64, f64)> {
        (0..self.n_features())
            .map(|j| {
                self.x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                    (lo.min(r[j]), hi.max(r[j]))
                })
            })
            .collect()
    }
}

/// Result of reading a CSV file: the usable rows plus how many were dropped.
#[derive(Debug, Clone)]
pub struct CsvIngest {
    pub dataset: Dataset,
    pub dropped: usize,
}

pub fn ingest_csv(path: impl AsRef<Path>, target_columns: &[&str]) -> Result<CsvIngest> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, target_columns)
}

/// Reads a headed CSV. Target columns are taken by name; every other column
/// becomes a feature in header order. Rows with a missing or non-numeric
/// cell (including `NaN`/`inf`) are dropped and counted.
pub fn ingest_reader<R: Read>(reader: R, target_columns: &[&str]) -> Result<CsvIngest> {
    if target_columns.is_empty() {
        return Err(Error::Data("no target columns given".into()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header.is_empty() || header.iter().any(String::is_empty) {
        return Err(Error::Data("unparseable header row".into()));
    }

    let mut target_idx = Vec::with_capacity(target_columns.len());
    for &t in target_columns {
        let i = header
            .iter()
            .position(|h| h == t)
            .ok_or_else(|| Error::Data(format!("unknown target column `{t}`")))?;
        target_idx.push(i);
    }
    let feature_idx: Vec<usize> = (0..header.len()).filter(|i| !target_idx.contains(i)).collect();

    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut dropped = 0;
    for record in rdr.records() {
        let record = record?;
        let parse = |i: usize| -> Option<f64> {
            record
                .get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
        };
        let row: Option<Vec<f64>> = feature_idx.iter().map(|&i| parse(i)).collect();
        let targets: Option<Vec<f64>> = target_idx.iter().map(|&i| parse(i)).collect();
        match (row, targets) {
            (Some(r), Some(t)) if record.len() == header.len() => {
                x.push(r);
                y.push(t);
            }
            _ => dropped += 1,
        }
    }
    if x.is_empty() {
        return Err(Error::Data(format!("zero usable rows ({dropped} dropped)")));
    }

    let dataset = Dataset::new(
        feature_idx.iter().map(|&i| header[i].clone()).collect(),
        target_idx.iter().map(|&i| header[i].clone()).collect(),
        x,
        y,
    )?;
    Ok(CsvIngest { dataset, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_line_csv() {
        let got = ingest_reader("a,b,y\n1,2,3\n4,5,6".as_bytes(), &["y"]).unwrap();
        assert_eq!(got.dropped, 0);
        assert_eq!(got.dataset.feature_names, vec!["a", "b"]);
        assert_eq!(got.dataset.x, vec![vec![1.0, 2.0], vec![4.0, 5.0]]);
        assert_eq!(got.dataset.y, vec![vec![3.0], vec![6.0]]);
    }

    #[test]
    fn nan_and_missing_rows_are_dropped() {
        let got = ingest_reader("a,b,y\n1,NaN,3\n4,5,6\n7,,9\n".as_bytes(), &["y"]).unwrap();
        assert_eq!(got.dropped, 2);
        assert_eq!(got.dataset.len(), 1);

        let got = ingest_reader("a,b,y\n1,NaN,3\n4,5,6\n".as_bytes(), &["y"]).unwrap();
        assert_eq!(got.dropped, 1);
    }

    #[test]
    fn target_in_middle_keeps_header_order() {
        let got = ingest_reader("p,t,q\n1,2,3\n".as_bytes(), &["t"]).unwrap();
        assert_eq!(got.dataset.feature_names, vec!["p", "q"]);
        assert_eq!(got.dataset.x[0], vec![1.0, 3.0]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            ingest_reader("a,b\n1,2\n".as_bytes(), &["y"]),
            Err(Error::Data(_))
        ));
        assert!(matches!(
            ingest_reader("a,y\nx,2\n".as_bytes(), &["y"]),
            Err(Error::Data(_))
        ));
        assert!(ingest_reader("a,a,y\n1,2,3\n".as_bytes(), &["y"]).is_err());
    }
}
