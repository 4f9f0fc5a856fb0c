//! Cross-validation and error statistics.
//!
//! Quantiles use linear interpolation between order statistics (the common
//! "type 7" rule). The best/worst 25% means average the `⌈n/4⌉` smallest or
//! largest errors. Errors from every run are pooled before summarizing.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chroma::{distance, DistanceMeasure};
use crate::ensemble::{train, train_baseline, Ensemble};
use crate::error::{Error, Result};
use crate::io::{format_sig, to_json_string};
use crate::seed::{mix_seed, stream};
use crate::tree::{FitParams, LabeledExample};

/// Location and tail statistics of a set of per-image errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub trimean: f64,
    pub best25_mean: f64,
    pub worst25_mean: f64,
}

impl StatsSummary {
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            n: self.n,
            mean: self.mean * s,
            median: self.median * s,
            trimean: self.trimean * s,
            best25_mean: self.best25_mean * s,
            worst25_mean: self.worst25_mean * s,
        }
    }
}

/// Type-7 quantile of ascending `sorted`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(errors: &[f64]) -> Result<StatsSummary> {
    if errors.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut v = errors.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let quarter = n.div_ceil(4);
    let mean_of = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let (q1, q2, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
    Ok(StatsSummary {
        n,
        mean: mean_of(&v),
        median: q2,
        trimean: (q1 + 2.0 * q2 + q3) / 4.0,
        best25_mean: mean_of(&v[..quarter]),
        worst25_mean: mean_of(&v[n - quarter..]),
    })
}

/// Repeated k-fold plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub k: usize,
    pub runs: usize,
    pub seed: u64,
}

impl Default for CvPlan {
    fn default() -> Self {
        Self { k: 10, runs: 30, seed: 0 }
    }
}

/// Shuffles `0..n` with the run's seed and cuts it into `k` contiguous
/// blocks whose sizes differ by at most one.
pub fn make_folds(n: usize, plan: &CvPlan, run: usize) -> Result<Vec<Vec<usize>>> {
    if plan.k < 2 {
        return Err(Error::InvalidPlan(format!("need at least 2 folds, got {}", plan.k)));
    }
    if n < plan.k {
        return Err(Error::InvalidPlan(format!("{n} examples cannot fill {} folds", plan.k)));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(plan.seed, run as u64));
    let (base, extra) = (n / plan.k, n % plan.k);
    let mut folds = Vec::with_capacity(plan.k);
    let mut start = 0;
    for f in 0..plan.k {
        let len = base + usize::from(f < extra);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// Which model family a cross-validation trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CvMethod {
    Multivariate,
    Baseline,
}

impl CvMethod {
    pub fn name(&self) -> &'static str {
        match self {
            CvMethod::Multivariate => "multivariate",
            CvMethod::Baseline => "baseline",
        }
    }
}

/// What to train in every fold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvConfig {
    /// Measure the multivariate trees are fit on.
    pub measure: DistanceMeasure,
    pub params: FitParams,
    /// Trees (multivariate) or repeats (baseline).
    pub num_trees: usize,
    pub method: CvMethod,
}

/// Held-out errors of one example in one run, under all five measures in
/// [`DistanceMeasure::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRecord {
    pub run: usize,
    pub fold: usize,
    pub index: usize,
    pub errors: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSummary {
    pub measure: String,
    /// Factor already applied to the statistics.
    pub scale: f64,
    pub stats: StatsSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub method: CvMethod,
    pub fit_measure: String,
    pub plan: CvPlan,
    pub summaries: Vec<MeasureSummary>,
    pub records: Vec<CvRecord>,
    /// Baseline predictions that had to be clamped onto the simplex.
    pub clamp_events: u64,
}

impl CvReport {
    /// Unscaled summary for one measure.
    pub fn summary(&self, m: &DistanceMeasure) -> Option<StatsSummary> {
        self.summaries
            .iter()
            .find(|s| s.measure == m.name())
            .map(|s| s.stats.scaled(1.0 / s.scale))
    }

    /// Pooled raw errors for one measure, in record order.
    pub fn errors(&self, m: &DistanceMeasure) -> Vec<f64> {
        let k = DistanceMeasure::ALL
            .iter()
            .position(|x| x.name() == m.name())
            .expect("every measure is in ALL");
        self.records.iter().map(|r| r.errors[k]).collect()
    }

    /// `measure,method,mean,median,trimean,best25,worst25,scale`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("measure,method,mean,median,trimean,best25,worst25,scale\n");
        for s in &self.summaries {
            let st = &s.stats;
            let cells: Vec<String> = [st.mean, st.median, st.trimean, st.best25_mean, st.worst25_mean]
                .iter()
                .map(|v| format_sig(*v, 9))
                .collect();
            out.push_str(&format!(
                "{},{},{},{}\n",
                s.measure,
                self.method.name(),
                cells.join(","),
                format_sig(s.scale, 3)
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        to_json_string(self)
    }
}

/// Trains on `k − 1` folds and scores the held-out fold, for every fold of
/// every run. Fold assignment depends only on `plan`, so different methods
/// evaluated with the same plan see the same partitions.
pub fn cross_validate(examples: &[LabeledExample], cfg: &CvConfig, plan: &CvPlan) -> Result<CvReport> {
    if plan.runs == 0 {
        return Err(Error::InvalidPlan("need at least one run".into()));
    }
    let folds = (0..plan.runs)
        .map(|run| make_folds(examples.len(), plan, run))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..plan.runs).flat_map(|r| (0..plan.k).map(move |f| (r, f))).collect();
    let results = jobs
        .par_iter()
        .map(|&(run, fold)| -> Result<(Vec<CvRecord>, u64)> {
            let test = &folds[run][fold];
            let mut held = vec![false; examples.len()];
            for &i in test {
                held[i] = true;
            }
            let train_set: Vec<LabeledExample> = examples
                .iter()
                .zip(&held)
                .filter(|(_, h)| !**h)
                .map(|(e, _)| e.clone())
                .collect();
            let seed = mix_seed(mix_seed(plan.seed, run as u64), fold as u64);
            let ens: Ensemble = match cfg.method {
                CvMethod::Multivariate => train(&train_set, &cfg.measure, &cfg.params, cfg.num_trees, seed)?,
                CvMethod::Baseline => train_baseline(&train_set, &cfg.params, cfg.num_trees, seed)?,
            };
            let mut sorted = test.clone();
            sorted.sort_unstable();
            let mut records = Vec::with_capacity(sorted.len());
            for index in sorted {
                let e = &examples[index];
                let est = ens.predict(&e.features)?;
                let mut errors = [0.0; 5];
                for (slot, m) in errors.iter_mut().zip(DistanceMeasure::ALL.iter()) {
                    *slot = distance(m, &est, &e.truth)?;
                }
                records.push(CvRecord { run, fold, index, errors });
            }
            Ok((records, ens.clamp_count()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::with_capacity(examples.len() * plan.runs);
    let mut clamp_events = 0;
    for (r, c) in results {
        records.extend(r);
        clamp_events += c;
    }
    records.sort_by_key(|r| (r.run, r.index));

    let mut summaries = Vec::new();
    for (k, m) in DistanceMeasure::ALL.iter().enumerate() {
        let errs: Vec<f64> = records.iter().map(|r| r.errors[k]).collect();
        summaries.push(MeasureSummary {
            measure: m.name().into(),
            scale: m.report_scale(),
            stats: summarize(&errs)?.scaled(m.report_scale()),
        });
    }
    Ok(CvReport {
        method: cfg.method,
        fit_measure: cfg.measure.name().into(),
        plan: *plan,
        summaries,
        records,
        clamp_events,
    })
}

/// Node counts of an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeSizeReport {
    pub trees: usize,
    pub mean_nodes_per_tree: f64,
    pub total_nodes: usize,
}

pub fn tree_size_report(ens: &Ensemble) -> TreeSizeReport {
    let counts = ens.node_counts();
    let total: usize = counts.iter().sum();
    TreeSizeReport {
        trees: counts.len(),
        mean_nodes_per_tree: total as f64 / counts.len().max(1) as f64,
        total_nodes: total,
    }
}
