use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower-triangular record: row `i` holds accuracy on domains `0..=i`
/// measured right after learning domain `i`. Rows are append-only.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccuracyMatrix {
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut m = Self::new();
        for r in rows {
            m.push_row(r)?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.rows.len() + 1 {
            return Err(Error::Validation(format!(
                "row {} of the accuracy matrix needs {} entries, got {}",
                self.rows.len(),
                self.rows.len() + 1,
                row.len()
            )));
        }
        if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!("accuracy {v} is outside [0, 1]")));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.rows.iter().enumerate().map(|(i, r)| r[i]).collect()
    }

    /// Comma-separated rows, blank cells above the diagonal.
    pub fn to_csv(&self) -> String {
        let t = self.rows.len();
        let mut out = String::from("after_domain");
        for j in 0..t {
            out.push_str(&format!(",domain_{j}"));
        }
        out.push('\n');
        for (i, r) in self.rows.iter().enumerate() {
            out.push_str(&i.to_string());
            for j in 0..t {
                out.push(',');
                if let Some(v) = r.get(j) {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Average accuracy over the last row and average forgetting
/// `mean_{j<T}(M[T][j] − M[j][j])`, zero when only one domain was learned.
pub fn metrics(m: &AccuracyMatrix) -> Result<(f64, f64)> {
    let Some(last) = m.rows.last() else {
        return Err(Error::Validation("metrics need at least one learned domain".into()));
    };
    let t = m.rows.len();
    let aa = last.iter().sum::<f64>() / t as f64;
    if t == 1 {
        return Ok((aa, 0.0));
    }
    let af = (0..t - 1).map(|j| last[j] - m.rows[j][j]).sum::<f64>() / (t - 1) as f64;
    Ok((aa, af))
}
