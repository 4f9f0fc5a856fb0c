//! Chromaticities on the 2-simplex and the white-balance distance measures.
//!
//! Every illuminant, whether ground truth or estimate, is handled as a
//! normalized RGB triple `(r, g, b)` with `r + g + b = 1`. The five distance
//! measures compare an estimate against a ground truth:
//!
//! | measure | units | range |
//! |---------|-------|-------|
//! | recovery angular | degrees | `[0, 180]` |
//! | reproduction angular | degrees | `[0, 180]` |
//! | taxicab | unitless | `[0, 2]` |
//! | euclidean | unitless | `[0, √2]` |
//! | perceptual euclidean | unitless | `[0, 1]` |
//!
//! The reproduction error is asymmetric: the estimate defines the diagonal
//! correction `diag(ĝ/r̂, 1, ĝ/b̂)` applied to the ground truth, and the angle
//! is measured between the corrected truth and achromatic gray.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest estimate component accepted by the reproduction error.
pub const EPS_DIV: f64 = 1e-9;

/// Tolerance on `r + g + b = 1` accepted by [`Chromaticity::new`].
pub const SUM_TOLERANCE: f64 = 1e-6;

/// Default channel weights of the perceptual Euclidean error.
pub const PERCEPTUAL_WEIGHTS: [f64; 3] = [0.21, 0.71, 0.08];

/// A normalized RGB triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct Chromaticity {
    rgb: [f64; 3],
}

impl Chromaticity {
    /// Wraps a triple that already lies on the simplex (within
    /// [`SUM_TOLERANCE`]). Components are stored as given.
    pub fn new(r: f64, g: f64, b: f64) -> Result<Self> {
        let rgb = [r, g, b];
        if rgb.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidChromaticity(format!(
                "components must be finite and nonnegative, got {rgb:?}"
            )));
        }
        let sum = r + g + b;
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidChromaticity(format!(
                "components sum to {sum}, expected 1"
            )));
        }
        Ok(Self { rgb })
    }

    /// Builds a chromaticity from `(r, g)` with `b = 1 − r − g`.
    pub fn from_rg(r: f64, g: f64) -> Result<Self> {
        Self::new(r, g, 1.0 - r - g)
    }

    /// The uniform gray chromaticity `(1/3, 1/3, 1/3)`.
    pub fn gray() -> Self {
        Self {
            rgb: [1.0 / 3.0; 3],
        }
    }

    pub fn r(&self) -> f64 {
        self.rgb[0]
    }

    pub fn g(&self) -> f64 {
        self.rgb[1]
    }

    pub fn b(&self) -> f64 {
        self.rgb[2]
    }

    pub fn as_array(&self) -> [f64; 3] {
        self.rgb
    }

    /// Smallest of the three components.
    pub fn min_component(&self) -> f64 {
        self.rgb[0].min(self.rgb[1]).min(self.rgb[2])
    }
}

impl TryFrom<[f64; 3]> for Chromaticity {
    type Error = Error;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<Chromaticity> for [f64; 3] {
    fn from(c: Chromaticity) -> Self {
        c.rgb
    }
}

impl fmt::Display for Chromaticity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.4}, {:.4}, {:.4})", self.rgb[0], self.rgb[1], self.rgb[2])
    }
}

/// Divides a nonnegative RGB triple by its component sum.
pub fn normalize(v: [f64; 3]) -> Result<Chromaticity> {
    if v.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::InvalidChromaticity(format!(
            "cannot normalize {v:?}: components must be finite and nonnegative"
        )));
    }
    let sum = v[0] + v[1] + v[2];
    if sum <= 0.0 {
        return Err(Error::InvalidChromaticity(
            "cannot normalize an all-zero triple".into(),
        ));
    }
    Ok(Chromaticity {
        rgb: [v[0] / sum, v[1] / sum, v[2] / sum],
    })
}

/// Which white-balance error is being measured or minimized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistanceMeasure {
    /// Angle between estimate and truth, in degrees.
    Recovery,
    /// Angle between the estimate-corrected truth and gray, in degrees.
    Reproduction,
    /// Sum of absolute component differences.
    Taxicab,
    /// Euclidean distance between chromaticities.
    Euclidean,
    /// Channel-weighted Euclidean distance.
    PerceptualEuclidean { weights: [f64; 3] },
}

impl DistanceMeasure {
    /// All five measures, perceptual with its default weights.
    pub const ALL: [DistanceMeasure; 5] = [
        DistanceMeasure::Recovery,
        DistanceMeasure::Reproduction,
        DistanceMeasure::Taxicab,
        DistanceMeasure::Euclidean,
        DistanceMeasure::PerceptualEuclidean {
            weights: PERCEPTUAL_WEIGHTS,
        },
    ];

    /// Perceptual Euclidean error with the default `(0.21, 0.71, 0.08)` weights.
    pub fn perceptual() -> Self {
        DistanceMeasure::PerceptualEuclidean {
            weights: PERCEPTUAL_WEIGHTS,
        }
    }

    /// Perceptual Euclidean error with custom weights. Weights must be
    /// nonnegative and sum to one.
    pub fn perceptual_with(weights: [f64; 3]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || (weights.iter().sum::<f64>() - 1.0).abs() > SUM_TOLERANCE
        {
            return Err(Error::InvalidParams(format!(
                "perceptual weights must be nonnegative and sum to 1, got {weights:?}"
            )));
        }
        Ok(DistanceMeasure::PerceptualEuclidean { weights })
    }

    /// Short name used on the command line and in model and report files.
    pub fn name(&self) -> &'static str {
        match self {
            DistanceMeasure::Recovery => "recovery",
            DistanceMeasure::Reproduction => "reproduction",
            DistanceMeasure::Taxicab => "taxicab",
            DistanceMeasure::Euclidean => "euclidean",
            DistanceMeasure::PerceptualEuclidean { .. } => "ped",
        }
    }

    pub fn weights(&self) -> Option<[f64; 3]> {
        match self {
            DistanceMeasure::PerceptualEuclidean { weights } => Some(*weights),
            _ => None,
        }
    }

    pub fn is_angular(&self) -> bool {
        matches!(self, DistanceMeasure::Recovery | DistanceMeasure::Reproduction)
    }

    /// Factor applied to values of this measure in printed summaries.
    pub fn report_scale(&self) -> f64 {
        match self {
            DistanceMeasure::PerceptualEuclidean { .. } => 100.0,
            _ => 1.0,
        }
    }

    /// Factor converting raw values to the units the node error threshold is
    /// stated in: degrees for the angular measures, hundredths of a
    /// chromaticity unit for the others.
    pub fn threshold_scale(&self) -> f64 {
        if self.is_angular() {
            1.0
        } else {
            100.0
        }
    }

    /// Whether `est` may be used as the estimate argument.
    pub(crate) fn check_estimate(&self, est: &Chromaticity) -> Result<()> {
        if matches!(self, DistanceMeasure::Reproduction) && est.min_component() < EPS_DIV {
            return Err(Error::DegenerateEstimate {
                value: est.min_component(),
            });
        }
        Ok(())
    }

    /// Formula evaluation without the estimate check.
    #[inline]
    pub(crate) fn eval(&self, est: &[f64; 3], truth: &[f64; 3]) -> f64 {
        match self {
            DistanceMeasure::Recovery => {
                let dot = est[0] * truth[0] + est[1] * truth[1] + est[2] * truth[2];
                let ne = (est[0] * est[0] + est[1] * est[1] + est[2] * est[2]).sqrt();
                let nt = (truth[0] * truth[0] + truth[1] * truth[1] + truth[2] * truth[2]).sqrt();
                angle_degrees(dot / (ne * nt))
            }
            DistanceMeasure::Reproduction => {
                let q = [truth[0] / est[0], truth[1] / est[1], truth[2] / est[2]];
                let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
                angle_degrees((q[0] + q[1] + q[2]) / (norm * 3f64.sqrt()))
            }
            DistanceMeasure::Taxicab => {
                (est[0] - truth[0]).abs() + (est[1] - truth[1]).abs() + (est[2] - truth[2]).abs()
            }
            DistanceMeasure::Euclidean => {
                let d = [est[0] - truth[0], est[1] - truth[1], est[2] - truth[2]];
                (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
            }
            DistanceMeasure::PerceptualEuclidean { weights: w } => {
                let d = [est[0] - truth[0], est[1] - truth[1], est[2] - truth[2]];
                (w[0] * d[0] * d[0] + w[1] * d[1] * d[1] + w[2] * d[2] * d[2]).sqrt()
            }
        }
    }
}

#[inline]
fn angle_degrees(cos: f64) -> f64 {
    // Round-off can push the cosine of identical vectors just past 1.
    cos.clamp(-1.0, 1.0).acos().to_degrees()
}

impl fmt::Display for DistanceMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistanceMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "recovery" | "angular" => Ok(DistanceMeasure::Recovery),
            "reproduction" | "rep" => Ok(DistanceMeasure::Reproduction),
            "taxicab" | "l1" => Ok(DistanceMeasure::Taxicab),
            "euclidean" | "l2" => Ok(DistanceMeasure::Euclidean),
            "ped" | "perceptual" => Ok(DistanceMeasure::perceptual()),
            other => Err(Error::InvalidParams(format!("unknown distance measure `{other}`"))),
        }
    }
}

/// Distance of the estimate `est` from the ground truth `truth` under `m`.
///
/// Angular measures are returned in degrees. The reproduction error rejects
/// estimates with a component below [`EPS_DIV`].
pub fn distance(m: &DistanceMeasure, est: &Chromaticity, truth: &Chromaticity) -> Result<f64> {
    m.check_estimate(est)?;
    Ok(m.eval(&est.rgb, &truth.rgb))
}
