//! The sweep CSV: one row per (run, layer) plus an `ALL` summary row.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::pruning::Method;
use crate::treatments::Treatment;

pub const CSV_HEADER: &str =
    "network,method,treatment,sparsity,init_seed,treat_seed,score_seed,layer,wd,kept_count,avg_wd,test_acc,error";

pub const SUMMARY_LAYER: &str = "ALL";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub network: String,
    pub method: Method,
    pub treatment: Treatment,
    pub sparsity: f64,
    pub init_seed: u64,
    pub treat_seed: u64,
    pub score_seed: u64,
    /// Layer index, or `ALL` on the summary row.
    pub layer: String,
    pub wd: Option<f64>,
    pub kept_count: Option<usize>,
    pub avg_wd: Option<f64>,
    pub test_acc: Option<f64>,
    pub error: String,
}

impl CsvRow {
    pub fn is_summary(&self) -> bool {
        self.layer == SUMMARY_LAYER
    }

    pub fn layer_index(&self) -> Option<usize> {
        self.layer.parse().ok()
    }

    /// Numeric layers in order, then the summary row.
    fn layer_rank(&self) -> (u8, usize) {
        match self.layer_index() {
            Some(i) => (0, i),
            None => (1, 0),
        }
    }

    pub fn sort_cmp(&self, other: &Self) -> Ordering {
        (&self.network, self.method, self.treatment)
            .cmp(&(&other.network, other.method, other.treatment))
            .then(self.sparsity.total_cmp(&other.sparsity))
            .then((self.init_seed, self.treat_seed, self.score_seed).cmp(&(other.init_seed, other.treat_seed, other.score_seed)))
            .then(self.layer_rank().cmp(&other.layer_rank()))
    }
}

pub fn sort_rows(rows: &mut [CsvRow]) {
    rows.sort_by(CsvRow::sort_cmp);
}

pub fn write_csv(rows: &[CsvRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}
