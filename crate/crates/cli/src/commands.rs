use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use illumtree::chroma::{distance, normalize, Chromaticity, DistanceMeasure};
use illumtree::ensemble::{self, Ensemble, DEFAULT_NUM_TREES};
use illumtree::eval::{cross_validate, tree_size_report, CvConfig, CvMethod, CvPlan};
use illumtree::features::{extract_features, load_image, CameraProfile, Rect};
use illumtree::io::{feature_names, format_sig, FeatureRow, FeatureTable, CSV_DIGITS};
use illumtree::study::approximation_study;
use illumtree::synth::{generate, SynthConfig};
use illumtree::tree::FitParams;
use log::{info, warn};
use rayon::prelude::*;

use crate::config::FileConfig;
use crate::{ApproxArgs, CrossvalArgs, ExtractArgs, FitArgs, PredictArgs, SynthArgs, TrainArgs, TreeSizeArgs};

/// Usage problems exit with status 2, everything else with 1.
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<illumtree::Error> for Failure {
    fn from(e: illumtree::Error) -> Self {
        Failure::Data(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(msg.to_string())
}

fn parse_measure(name: &str) -> Result<DistanceMeasure, Failure> {
    name.parse().map_err(usage)
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_table(path: &Path) -> anyhow::Result<FeatureTable> {
    FeatureTable::load(path).with_context(|| format!("reading {}", path.display()))
}

/// Flag, then config file, then built-in default.
struct Fit {
    measure: DistanceMeasure,
    baseline: bool,
    trees: usize,
    seed: u64,
    params: FitParams,
}

fn resolve_fit(a: &FitArgs, file: &FileConfig) -> Result<Fit, Failure> {
    let f = &file.fit;
    let d = FitParams::default();
    let measure = parse_measure(a.measure.as_deref().or(f.measure.as_deref()).unwrap_or("recovery"))?;
    let params = FitParams {
        min_parent_size: a.min_parent.or(f.min_parent).unwrap_or(d.min_parent_size),
        min_leaf_size: a.min_leaf.or(f.min_leaf).unwrap_or(d.min_leaf_size),
        error_threshold: a.threshold.or(f.threshold).unwrap_or(d.error_threshold),
        rand_pct: a.rand_pct.or(f.rand_pct).unwrap_or(d.rand_pct),
    };
    params.validate().map_err(usage)?;
    let trees = a.trees.or(f.trees).unwrap_or(DEFAULT_NUM_TREES);
    if trees == 0 {
        return Err(usage("--trees must be at least 1"));
    }
    Ok(Fit {
        measure,
        baseline: a.baseline,
        trees,
        seed: a.seed.or(f.seed).unwrap_or(0),
        params,
    })
}

fn image_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "ppm")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn image_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn read_truths(path: &Path) -> anyhow::Result<HashMap<String, Chromaticity>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["image_id", "r", "g", "b"] {
        bail!("{}: header must be image_id,r,g,b", path.display());
    }
    let mut out = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> anyhow::Result<f64> {
            rec[i].trim().parse().map_err(|_| anyhow!("{}: bad number `{}`", path.display(), &rec[i]))
        };
        out.insert(rec[0].to_string(), normalize([num(1)?, num(2)?, num(3)?])?);
    }
    Ok(out)
}

pub fn extract(a: ExtractArgs, file: &FileConfig) -> Outcome {
    let mut cfg = file.features;
    cfg.include_sg |= a.sg;
    let profile = CameraProfile::load(&a.profile).with_context(|| format!("reading {}", a.profile.display()))?;
    let masks: HashMap<String, Vec<Rect>> = match &a.masks {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => HashMap::new(),
    };
    let truths = match &a.truth {
        Some(p) => read_truths(p)?,
        None => HashMap::new(),
    };
    let files = image_files(&a.images)?;
    if files.is_empty() {
        return Err(anyhow!("no .png or .ppm files in {}", a.images.display()).into());
    }
    info!("extracting features from {} images", files.len());
    let rows = files
        .par_iter()
        .map(|path| -> anyhow::Result<FeatureRow> {
            let id = image_id(path);
            let rects = masks.get(&id).map(Vec::as_slice).unwrap_or(&[]);
            let img = load_image(path, &profile, rects).with_context(|| format!("loading {}", path.display()))?;
            let features = extract_features(&img, &cfg).with_context(|| format!("features of {}", path.display()))?;
            Ok(FeatureRow {
                truth: truths.get(&id).copied(),
                image_id: id,
                features,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let missing = rows.iter().filter(|r| r.truth.is_none()).count();
    if a.truth.is_some() && missing > 0 {
        warn!("{missing} images have no ground truth");
    }
    let mut table = FeatureTable::new(feature_names(cfg.include_sg));
    table.comments.push(format!("camera: {}", profile.name));
    table.comments.push(format!("features: {}", cfg.describe()));
    table.rows = rows;
    table.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

pub fn synth(a: SynthArgs, file: &FileConfig) -> Outcome {
    let base = &file.synth;
    let cfg = SynthConfig {
        n: a.n.unwrap_or(base.n),
        seed: a.seed.unwrap_or(base.seed),
        noise: a.noise.unwrap_or(base.noise),
        correlation: a.correlation.unwrap_or(base.correlation),
        ..base.clone()
    };
    cfg.validate().map_err(usage)?;
    let table = generate(&cfg)?;
    table.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}

pub fn train(a: TrainArgs, file: &FileConfig) -> Outcome {
    let fit = resolve_fit(&a.fit, file)?;
    let table = load_table(&a.data)?;
    let examples = table.labeled()?;
    info!(
        "training {} {} on {} examples",
        fit.trees,
        if fit.baseline { "baseline repeats" } else { "trees" },
        examples.len()
    );
    let ens = if fit.baseline {
        ensemble::train_baseline(&examples, &fit.params, fit.trees, fit.seed)?.with_measure(fit.measure)
    } else {
        ensemble::train(&examples, &fit.measure, &fit.params, fit.trees, fit.seed)?
    };
    let ens = ens.with_feature_names(table.feature_names.clone())?;
    write_file(&a.out, &ens.to_json()?)?;
    Ok(())
}

pub fn predict(a: PredictArgs) -> Outcome {
    let measure = a.measure.as_deref().map(parse_measure).transpose()?;
    let ens = Ensemble::load(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let table = load_table(&a.data)?;
    if table.feature_names != ens.feature_names {
        if table.feature_names.len() != ens.feature_names.len() {
            return Err(anyhow!(
                "model expects {} features, {} has {}",
                ens.feature_names.len(),
                a.data.display(),
                table.feature_names.len()
            )
            .into());
        }
        warn!("feature column names differ from the model's");
    }
    let measure = measure.unwrap_or(ens.measure);
    let with_errors = table.rows.iter().any(|r| r.truth.is_some());
    let mut w = csv::Writer::from_path(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let mut header = vec!["image_id", "r", "g", "b"];
    if with_errors {
        header.extend(["error_measure", "error"]);
    }
    w.write_record(&header).context("writing predictions")?;
    for row in &table.rows {
        let est = ens.predict(&row.features).with_context(|| format!("predicting `{}`", row.image_id))?;
        let mut rec = vec![row.image_id.clone()];
        rec.extend(est.as_array().iter().map(|v| format_sig(*v, CSV_DIGITS)));
        if with_errors {
            match row.truth {
                Some(t) => {
                    rec.push(measure.name().to_string());
                    rec.push(format_sig(distance(&measure, &est, &t)?, CSV_DIGITS));
                }
                None => rec.extend([String::new(), String::new()]),
            }
        }
        w.write_record(&rec).context("writing predictions")?;
    }
    w.flush().context("writing predictions")?;
    if ens.clamp_count() > 0 {
        warn!("{} baseline predictions were clamped onto the simplex", ens.clamp_count());
    }
    Ok(())
}

pub fn crossval(a: CrossvalArgs, file: &FileConfig) -> Outcome {
    let fit = resolve_fit(&a.fit, file)?;
    let d = CvPlan::default();
    let plan = CvPlan {
        k: a.folds.or(file.crossval.folds).unwrap_or(d.k),
        runs: a.runs.or(file.crossval.runs).unwrap_or(d.runs),
        seed: fit.seed,
    };
    if plan.k < 2 || plan.runs == 0 {
        return Err(usage("need --folds >= 2 and --runs >= 1"));
    }
    let examples = load_table(&a.data)?.labeled()?;
    let cfg = CvConfig {
        measure: fit.measure,
        params: fit.params,
        num_trees: fit.trees,
        method: if fit.baseline { CvMethod::Baseline } else { CvMethod::Multivariate },
    };
    info!("{}-fold cross-validation, {} runs, {} examples", plan.k, plan.runs, examples.len());
    let report = cross_validate(&examples, &cfg, &plan)?;
    if report.clamp_events > 0 {
        warn!("{} baseline predictions were clamped onto the simplex", report.clamp_events);
    }
    write_file(&a.out, &report.to_csv())?;
    if let Some(path) = &a.json {
        write_file(path, &report.to_json()?)?;
    }
    Ok(())
}

pub fn approx_error(a: ApproxArgs) -> Outcome {
    let m = parse_measure(&a.measure)?;
    if a.samples == 0 || a.max_size == 0 {
        return Err(usage("--samples and --max-size must be positive"));
    }
    let table = load_table(&a.data)?;
    let truths: Vec<Chromaticity> = table.rows.iter().filter_map(|r| r.truth).collect();
    if truths.is_empty() {
        return Err(anyhow!("{} has no ground-truth illuminants", a.data.display()).into());
    }
    let report = approximation_study(&truths, &m, a.samples, a.max_size, a.seed)?;
    info!(
        "median relative error {:.4}%, max {:.4}%",
        100.0 * report.summary.median,
        100.0 * report.summary.max
    );
    write_file(&a.out, &report.to_csv())?;
    Ok(())
}

pub fn tree_size(a: TreeSizeArgs) -> Outcome {
    // (method, measure) -> (sum of mean tree sizes, sum of ensemble sizes, models)
    let mut groups: Vec<((String, String), (f64, f64, usize))> = Vec::new();
    for path in &a.models {
        let ens = Ensemble::load(path).with_context(|| format!("reading {}", path.display()))?;
        let rep = tree_size_report(&ens);
        let key = if ens.is_baseline() {
            ("baseline".to_string(), "all".to_string())
        } else {
            ("multivariate".to_string(), ens.measure.name().to_string())
        };
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, acc)) => {
                acc.0 += rep.mean_nodes_per_tree;
                acc.1 += rep.total_nodes as f64;
                acc.2 += 1;
            }
            None => groups.push((key, (rep.mean_nodes_per_tree, rep.total_nodes as f64, 1))),
        }
    }
    let mut out = String::from("method,measure,tree,ensemble\n");
    for ((method, measure), (tree, total, n)) in groups {
        let n = n as f64;
        out.push_str(&format!("{method},{measure},{:.1},{:.1}\n", tree / n, total / n));
    }
    match &a.out {
        Some(path) => write_file(path, &out)?,
        None => print!("{out}"),
    }
    Ok(())
}
