//! Time-indexed panel of asset returns.

use chrono::NaiveDate;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `T × N` matrix of returns with one row per date and one column per asset.
///
/// The same container holds macro predictors (one column per state variable).
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    pub dates: Vec<NaiveDate>,
    pub asset_ids: Vec<String>,
    pub values: DMatrix<f64>,
}

impl ReturnPanel {
    pub fn new(dates: Vec<NaiveDate>, asset_ids: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != dates.len() {
            return Err(Error::Dimension(format!(
                "{} dates but {} rows",
                dates.len(),
                values.nrows()
            )));
        }
        if values.ncols() != asset_ids.len() {
            return Err(Error::Dimension(format!(
                "{} identifiers but {} columns",
                asset_ids.len(),
                values.ncols()
            )));
        }
        if let Some(w) = dates.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Parse(format!(
                "dates must be strictly increasing (row {} = {}, row {} = {})",
                w + 1,
                dates[w],
                w + 2,
                dates[w + 1]
            )));
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            let (r, c) = (idx % values.nrows(), idx / values.nrows());
            return Err(Error::Parse(format!("non-finite value at row {}, column {}", r + 1, c + 1)));
        }
        Ok(ReturnPanel { dates, asset_ids, values })
    }

    /// Panel with synthetic weekly dates starting on 2000-01-07 and ids `asset_1..`.
    pub fn from_matrix(values: DMatrix<f64>, prefix: &str) -> Self {
        let start = NaiveDate::from_ymd_opt(2000, 1, 7).expect("valid date");
        let dates = (0..values.nrows())
            .map(|t| start + chrono::Duration::weeks(t as i64))
            .collect();
        let asset_ids = (1..=values.ncols()).map(|i| format!("{prefix}_{i}")).collect();
        ReturnPanel { dates, asset_ids, values }
    }

    pub fn n_periods(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.values.ncols()
    }

    /// Checks that `other` covers exactly the same dates.
    pub fn check_aligned(&self, other: &ReturnPanel) -> Result<()> {
        if self.dates != other.dates {
            return Err(Error::Dimension(format!(
                "panels are not aligned in time ({} vs {} rows)",
                self.n_periods(),
                other.n_periods()
            )));
        }
        Ok(())
    }
}
