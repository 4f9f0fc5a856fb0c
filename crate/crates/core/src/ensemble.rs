//! Ensembles of randomized trees and the model file format.
//!
//! Multivariate ensembles combine the per-tree chromaticities with the same
//! median minimizer used for leaf labels. The baseline ensemble fits separate
//! squared-error trees for `r` and `g` on each feature pair, averages them,
//! and reconstructs `b = 1 − r − g`.
//!
//! Each tree `i` draws from its own generator seeded with
//! [`mix_seed`](crate::seed::mix_seed)`(master_seed, i)`, so training is
//! reproducible and independent of how many worker threads run it.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chroma::{normalize, Chromaticity, DistanceMeasure, EPS_DIV};
use crate::error::{Error, Result};
use crate::io::to_json_string;
use crate::minimize::approx_minimize;
use crate::seed::stream;
use crate::tree::{fit_mv, fit_uv_on, FitParams, LabeledExample, MvTree, Node, Tree, UvTree};

pub const FORMAT_VERSION: u32 = 1;

/// Trees per ensemble unless told otherwise.
pub const DEFAULT_NUM_TREES: usize = 30;

/// A pair of univariate trees predicting `r` and `g` from one feature pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineMember {
    pub pair: [usize; 2],
    pub r_tree: UvTree,
    pub g_tree: UvTree,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Members {
    Multivariate(Vec<MvTree>),
    Baseline(Vec<BaselineMember>),
}

/// A trained ensemble. Immutable apart from the baseline clamp counter.
#[derive(Debug)]
pub struct Ensemble {
    pub members: Members,
    /// Measure the trees were fit on (multivariate) or are evaluated with
    /// (baseline).
    pub measure: DistanceMeasure,
    pub params: FitParams,
    /// Trees for multivariate ensembles, repeats for the baseline.
    pub num_trees: usize,
    pub master_seed: u64,
    pub feature_names: Vec<String>,
    clamp_events: AtomicU64,
}

impl Clone for Ensemble {
    fn clone(&self) -> Self {
        Self {
            members: self.members.clone(),
            measure: self.measure,
            params: self.params,
            num_trees: self.num_trees,
            master_seed: self.master_seed,
            feature_names: self.feature_names.clone(),
            clamp_events: AtomicU64::new(self.clamp_count()),
        }
    }
}

impl PartialEq for Ensemble {
    fn eq(&self, other: &Self) -> bool {
        self.members == other.members
            && self.measure == other.measure
            && self.params == other.params
            && self.num_trees == other.num_trees
            && self.master_seed == other.master_seed
            && self.feature_names == other.feature_names
    }
}

fn default_names(dim: usize) -> Vec<String> {
    (0..dim).map(|i| format!("f{i}")).collect()
}

fn dimension_of(examples: &[LabeledExample]) -> Result<usize> {
    let dim = examples.first().ok_or(Error::EmptySet)?.features.len();
    if let Some(bad) = examples.iter().find(|e| e.features.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            got: bad.features.len(),
        });
    }
    Ok(dim)
}

/// Trains `num_trees` multivariate trees fit on `m`.
pub fn train(
    examples: &[LabeledExample],
    m: &DistanceMeasure,
    params: &FitParams,
    num_trees: usize,
    master_seed: u64,
) -> Result<Ensemble> {
    let dim = dimension_of(examples)?;
    params.validate()?;
    if num_trees == 0 {
        return Err(Error::InvalidParams("an ensemble needs at least one tree".into()));
    }
    let trees = (0..num_trees)
        .into_par_iter()
        .map(|i| fit_mv(examples, m, params, &mut stream(master_seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        members: Members::Multivariate(trees),
        measure: *m,
        params: *params,
        num_trees,
        master_seed,
        feature_names: default_names(dim),
        clamp_events: AtomicU64::new(0),
    })
}

/// Trains the independent-`r`/`g` baseline: for every repeat and every
/// feature pair `(2k, 2k + 1)`, one squared-error tree for `r` and one for
/// `g`, each restricted to that pair's two features.
pub fn train_baseline(
    examples: &[LabeledExample],
    params: &FitParams,
    num_repeats: usize,
    master_seed: u64,
) -> Result<Ensemble> {
    let dim = dimension_of(examples)?;
    params.validate()?;
    if num_repeats == 0 {
        return Err(Error::InvalidParams("the baseline needs at least one repeat".into()));
    }
    if dim % 2 != 0 {
        return Err(Error::InvalidParams(format!(
            "baseline features come in (r, g) pairs; got {dim} features"
        )));
    }
    let n_pairs = dim / 2;
    let rows: Vec<Vec<f64>> = examples.iter().map(|e| e.features.clone()).collect();
    let r: Vec<f64> = examples.iter().map(|e| e.truth.r()).collect();
    let g: Vec<f64> = examples.iter().map(|e| e.truth.g()).collect();
    let members = (0..num_repeats * n_pairs)
        .into_par_iter()
        .map(|slot| {
            let k = slot % n_pairs;
            let pair = [2 * k, 2 * k + 1];
            let base = 2 * slot as u64;
            let r_tree = fit_uv_on(&rows, &r, &pair, params, &mut stream(master_seed, base))?;
            let g_tree = fit_uv_on(&rows, &g, &pair, params, &mut stream(master_seed, base + 1))?;
            Ok(BaselineMember { pair, r_tree, g_tree })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        members: Members::Baseline(members),
        measure: DistanceMeasure::Recovery,
        params: *params,
        num_trees: num_repeats,
        master_seed,
        feature_names: default_names(dim),
        clamp_events: AtomicU64::new(0),
    })
}

impl Ensemble {
    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_features() {
            return Err(Error::Dimension {
                expected: self.n_features(),
                got: names.len(),
            });
        }
        self.feature_names = names;
        Ok(self)
    }

    /// Sets the measure a baseline ensemble is evaluated with. Multivariate
    /// ensembles keep the measure they were fit on.
    pub fn with_measure(mut self, m: DistanceMeasure) -> Self {
        if self.is_baseline() {
            self.measure = m;
        }
        self
    }

    pub fn is_baseline(&self) -> bool {
        matches!(self.members, Members::Baseline(_))
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Number of fitted trees (two per baseline member).
    pub fn tree_count(&self) -> usize {
        match &self.members {
            Members::Multivariate(t) => t.len(),
            Members::Baseline(b) => 2 * b.len(),
        }
    }

    /// Node counts of every fitted tree, in storage order.
    pub fn node_counts(&self) -> Vec<usize> {
        match &self.members {
            Members::Multivariate(t) => t.iter().map(|t| t.root.node_count()).collect(),
            Members::Baseline(b) => b
                .iter()
                .flat_map(|m| [m.r_tree.root.node_count(), m.g_tree.root.node_count()])
                .collect(),
        }
    }

    fn check_dim(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.n_features() {
            return Err(Error::Dimension {
                expected: self.n_features(),
                got: features.len(),
            });
        }
        Ok(())
    }

    /// Per-tree predictions of a multivariate ensemble.
    pub fn tree_predictions(&self, features: &[f64]) -> Result<Vec<Chromaticity>> {
        self.check_dim(features)?;
        match &self.members {
            Members::Multivariate(trees) => trees.iter().map(|t| t.predict(features)).collect(),
            Members::Baseline(_) => Err(Error::InvalidParams(
                "baseline ensembles have no per-tree chromaticities".into(),
            )),
        }
    }

    /// Combined illuminant estimate.
    pub fn predict(&self, features: &[f64]) -> Result<Chromaticity> {
        match &self.members {
            Members::Multivariate(_) => {
                let s = self.tree_predictions(features)?;
                Ok(approx_minimize(&s, &self.measure)?.estimate)
            }
            Members::Baseline(_) => self.predict_baseline(features),
        }
    }

    /// Baseline estimate: mean `r`, mean `g`, `b = 1 − r − g`. Components
    /// below [`EPS_DIV`] are raised to it and the triple renormalized; each
    /// such event increments [`clamp_count`](Self::clamp_count).
    pub fn predict_baseline(&self, features: &[f64]) -> Result<Chromaticity> {
        self.check_dim(features)?;
        let Members::Baseline(members) = &self.members else {
            return Err(Error::InvalidParams("not a baseline ensemble".into()));
        };
        let n = members.len() as f64;
        let mut r = 0.0;
        let mut g = 0.0;
        for m in members {
            r += m.r_tree.predict(features)?;
            g += m.g_tree.predict(features)?;
        }
        Ok(self.reconstruct(r / n, g / n))
    }

    fn reconstruct(&self, r: f64, g: f64) -> Chromaticity {
        let raw = [r, g, 1.0 - r - g];
        if raw.iter().all(|c| *c >= EPS_DIV) {
            if let Ok(c) = Chromaticity::new(raw[0], raw[1], raw[2]) {
                return c;
            }
        }
        self.clamp_events.fetch_add(1, Ordering::Relaxed);
        log::warn!("baseline prediction {raw:?} left the simplex; clamping");
        // Pin low components at the floor and rescale the rest to fill the
        // remaining mass.
        let low = raw.iter().filter(|c| **c < EPS_DIV).count();
        let rest: f64 = raw.iter().filter(|c| **c >= EPS_DIV).sum();
        let scale = (1.0 - low as f64 * EPS_DIV) / rest;
        let fixed = raw.map(|c| if c < EPS_DIV { EPS_DIV } else { c * scale });
        Chromaticity::new(fixed[0], fixed[1], fixed[2])
            .or_else(|_| normalize(fixed))
            .expect("clamped components are positive")
    }

    /// How many baseline predictions needed clamping so far.
    pub fn clamp_count(&self) -> u64 {
        self.clamp_events.load(Ordering::Relaxed)
    }

    pub fn to_json(&self) -> Result<String> {
        to_json_string(&ModelFile::from(self))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<ModelFile>(text)?.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Free-function form of [`Ensemble::predict`].
pub fn predict(ens: &Ensemble, features: &[f64]) -> Result<Chromaticity> {
    ens.predict(features)
}

/// Free-function form of [`Ensemble::predict_baseline`].
pub fn predict_baseline(ens: &Ensemble, features: &[f64]) -> Result<Chromaticity> {
    ens.predict_baseline(features)
}

#[derive(Serialize, Deserialize)]
struct BaselineFile {
    pair: [usize; 2],
    r: Node<f64>,
    g: Node<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    kind: String,
    measure: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<[f64; 3]>,
    params: FitParams,
    num_trees: usize,
    master_seed: u64,
    feature_names: Vec<String>,
    trees: serde_json::Value,
}

impl From<&Ensemble> for ModelFile {
    fn from(e: &Ensemble) -> Self {
        let (kind, trees) = match &e.members {
            Members::Multivariate(t) => (
                "multivariate",
                serde_json::to_value(t.iter().map(|t| &t.root).collect::<Vec<_>>()),
            ),
            Members::Baseline(b) => (
                "baseline",
                serde_json::to_value(
                    b.iter()
                        .map(|m| BaselineFile {
                            pair: m.pair,
                            r: m.r_tree.root.clone(),
                            g: m.g_tree.root.clone(),
                        })
                        .collect::<Vec<_>>(),
                ),
            ),
        };
        ModelFile {
            format_version: FORMAT_VERSION,
            kind: kind.into(),
            measure: e.measure.name().into(),
            weights: e.measure.weights(),
            params: e.params,
            num_trees: e.num_trees,
            master_seed: e.master_seed,
            feature_names: e.feature_names.clone(),
            trees: trees.expect("tree nodes always serialize"),
        }
    }
}

impl TryFrom<ModelFile> for Ensemble {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format_version {}",
                f.format_version
            )));
        }
        let mut measure: DistanceMeasure = f.measure.parse()?;
        if let Some(w) = f.weights {
            measure = DistanceMeasure::perceptual_with(w)?;
        }
        let n_features = f.feature_names.len();
        let check = |max: Option<usize>| match max {
            Some(j) if j >= n_features => Err(Error::Format(format!(
                "tree tests feature {j} but the model has {n_features} features"
            ))),
            _ => Ok(()),
        };
        let members = match f.kind.as_str() {
            "multivariate" => {
                let roots: Vec<Node<Chromaticity>> = serde_json::from_value(f.trees)?;
                for r in &roots {
                    check(r.max_feature())?;
                }
                Members::Multivariate(roots.into_iter().map(|root| Tree { root, n_features }).collect())
            }
            "baseline" => {
                let files: Vec<BaselineFile> = serde_json::from_value(f.trees)?;
                let mut out = Vec::with_capacity(files.len());
                for b in files {
                    check(b.r.max_feature())?;
                    check(b.g.max_feature())?;
                    out.push(BaselineMember {
                        pair: b.pair,
                        r_tree: Tree { root: b.r, n_features },
                        g_tree: Tree { root: b.g, n_features },
                    });
                }
                Members::Baseline(out)
            }
            other => return Err(Error::Format(format!("unknown model kind `{other}`"))),
        };
        Ok(Ensemble {
            members,
            measure,
            params: f.params,
            num_trees: f.num_trees,
            master_seed: f.master_seed,
            feature_names: f.feature_names,
            clamp_events: AtomicU64::new(0),
        })
    }
}
