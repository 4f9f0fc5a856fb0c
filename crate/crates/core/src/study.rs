//! How far the median-based minimizer lands from the numeric optimum.
//!
//! Each sample draws a random subset of the supplied ground truths (size
//! uniform in `1..=min(max_size, n)`, without replacement) and compares
//! [`approx_minimize`] with [`exact_minimize`] on it.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chroma::{Chromaticity, DistanceMeasure};
use crate::error::{Error, Result};
use crate::eval::quantile;
use crate::io::format_sig;
use crate::minimize::{approx_minimize, exact_minimize};
use crate::seed::stream;

/// Exact costs at or below this count as zero; the relative error is then 0.
pub const ZERO_COST: f64 = 1e-12;
pub const DEFAULT_MAX_SUBSET: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub sample: usize,
    pub size: usize,
    pub approx_cost: f64,
    pub exact_cost: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub median: f64,
    pub p75: f64,
    pub p95: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub measure: String,
    pub rows: Vec<StudyRow>,
    pub summary: StudySummary,
}

impl StudyReport {
    /// Per-sample rows followed by four summary rows keyed `median`, `p75`,
    /// `p95`, `max` in the `sample` column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample,size,approx_cost,exact_cost,rel_error\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.sample,
                r.size,
                format_sig(r.approx_cost, 9),
                format_sig(r.exact_cost, 9),
                format_sig(r.rel_error, 9)
            ));
        }
        let s = &self.summary;
        for (k, v) in [("median", s.median), ("p75", s.p75), ("p95", s.p95), ("max", s.max)] {
            out.push_str(&format!("{k},,,,{}\n", format_sig(v, 9)));
        }
        out
    }
}

pub fn relative_error(approx: f64, exact: f64) -> f64 {
    if exact <= ZERO_COST {
        0.0
    } else {
        (approx - exact) / exact
    }
}

pub fn approximation_study(
    truths: &[Chromaticity],
    m: &DistanceMeasure,
    samples: usize,
    max_size: usize,
    seed: u64,
) -> Result<StudyReport> {
    if truths.is_empty() {
        return Err(Error::EmptySet);
    }
    if samples == 0 || max_size == 0 {
        return Err(Error::InvalidParams("samples and subset size must be positive".into()));
    }
    let cap = max_size.min(truths.len());
    let rows = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<StudyRow> {
            let mut rng = stream(seed, i as u64);
            let size = rng.random_range(1..=cap);
            let subset: Vec<Chromaticity> = sample(&mut rng, truths.len(), size).iter().map(|k| truths[k]).collect();
            let a = approx_minimize(&subset, m)?.cost;
            let e = exact_minimize(&subset, m)?.cost;
            Ok(StudyRow {
                sample: i,
                size,
                approx_cost: a,
                exact_cost: e,
                rel_error: relative_error(a, e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rel: Vec<f64> = rows.iter().map(|r| r.rel_error).collect();
    rel.sort_by(f64::total_cmp);
    let summary = StudySummary {
        median: quantile(&rel, 0.5),
        p75: quantile(&rel, 0.75),
        p95: quantile(&rel, 0.95),
        max: rel[rel.len() - 1],
    };
    Ok(StudyReport {
        measure: m.name().into(),
        rows,
        summary,
    })
}
