//! Minimizing the summed distance from one chromaticity to a set of targets.
//!
//! Tree fitting and ensemble combination both need
//! `argmin_ê Σ dist(ê, eᵢ)` over the simplex. [`approx_minimize`] answers it
//! with the componentwise median renormalized onto the simplex, which is what
//! training and prediction use. [`exact_minimize`] is a slow numerical search
//! kept for verification and for the approximation-error study.

use serde::{Deserialize, Serialize};

use crate::chroma::{normalize, Chromaticity, DistanceMeasure, EPS_DIV};
use crate::error::{Error, Result};

/// How a [`MinimizeResult`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    ApproxMedian,
    ExactNumeric,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeResult {
    pub estimate: Chromaticity,
    /// `total_cost(estimate, targets, measure)`.
    pub cost: f64,
    pub method: Method,
}

/// Sum of `distance(m, candidate, t)` over all targets.
pub fn total_cost(candidate: &Chromaticity, targets: &[Chromaticity], m: &DistanceMeasure) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::EmptySet);
    }
    m.check_estimate(candidate)?;
    let c = candidate.as_array();
    Ok(targets.iter().map(|t| m.eval(&c, &t.as_array())).sum())
}

/// Median of a slice, averaging the two middle order statistics for even
/// lengths. Reorders the slice.
pub(crate) fn median_in_place(values: &mut [f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let n = values.len();
    let mid = n / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (below + upper)
    }
}

/// Componentwise median of the targets, before renormalization.
pub fn componentwise_median(targets: &[Chromaticity]) -> Result<[f64; 3]> {
    if targets.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut column = Vec::with_capacity(targets.len());
    let mut out = [0.0; 3];
    for (k, slot) in out.iter_mut().enumerate() {
        column.clear();
        column.extend(targets.iter().map(|t| t.as_array()[k]));
        *slot = median_in_place(&mut column);
    }
    Ok(out)
}

/// Median-then-normalize approximation. The estimate does not depend on `m`;
/// only the reported cost does.
pub fn approx_minimize(targets: &[Chromaticity], m: &DistanceMeasure) -> Result<MinimizeResult> {
    let estimate = match targets {
        // Already normalized; renormalizing could move it by an ulp.
        [only] => *only,
        _ => normalize(componentwise_median(targets)?)?,
    };
    Ok(MinimizeResult {
        estimate,
        cost: total_cost(&estimate, targets, m)?,
        method: Method::ApproxMedian,
    })
}

/// Componentwise mean, which already lies on the simplex.
pub fn mean_minimize(targets: &[Chromaticity], m: &DistanceMeasure) -> Result<MinimizeResult> {
    if targets.is_empty() {
        return Err(Error::EmptySet);
    }
    let n = targets.len() as f64;
    let mut sum = [0.0; 3];
    for t in targets {
        for (s, v) in sum.iter_mut().zip(t.as_array()) {
            *s += v;
        }
    }
    let estimate = normalize([sum[0] / n, sum[1] / n, sum[2] / n])?;
    Ok(MinimizeResult {
        estimate,
        cost: total_cost(&estimate, targets, m)?,
        method: Method::Mean,
    })
}

/// Grid step of the coarse search, before capping the grid size.
pub const EXACT_COARSE_STEP: f64 = 1e-3;
/// Margin added around the targets' bounding box in `(r, g)`.
pub const EXACT_BOX_MARGIN: f64 = 0.05;
/// Refinement stops once the step drops below this.
pub const EXACT_MIN_STEP: f64 = 1e-7;
/// Upper bound on coarse grid points per axis; wide boxes get a larger step.
pub const EXACT_MAX_GRID: usize = 100;

/// Numerical minimizer over the simplex: a coarse grid over the targets'
/// expanded bounding box followed by compass refinement on the 3×3
/// neighborhood, halving the step until it falls below [`EXACT_MIN_STEP`].
pub fn exact_minimize(targets: &[Chromaticity], m: &DistanceMeasure) -> Result<MinimizeResult> {
    if targets.is_empty() {
        return Err(Error::EmptySet);
    }
    let pts: Vec<[f64; 3]> = targets.iter().map(|t| t.as_array()).collect();
    let floor = if matches!(m, DistanceMeasure::Reproduction) {
        EPS_DIV
    } else {
        0.0
    };
    let cost_at = |r: f64, g: f64| -> Option<f64> {
        let b = 1.0 - r - g;
        if r < floor || g < floor || b < floor {
            return None;
        }
        let c = [r, g, b];
        Some(pts.iter().map(|t| m.eval(&c, t)).sum())
    };

    let (mut r_lo, mut r_hi, mut g_lo, mut g_hi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &pts {
        r_lo = r_lo.min(p[0]);
        r_hi = r_hi.max(p[0]);
        g_lo = g_lo.min(p[1]);
        g_hi = g_hi.max(p[1]);
    }
    let r_lo = (r_lo - EXACT_BOX_MARGIN).max(0.0);
    let r_hi = (r_hi + EXACT_BOX_MARGIN).min(1.0);
    let g_lo = (g_lo - EXACT_BOX_MARGIN).max(0.0);
    let g_hi = (g_hi + EXACT_BOX_MARGIN).min(1.0);
    let extent = (r_hi - r_lo).max(g_hi - g_lo);
    let step = EXACT_COARSE_STEP.max(extent / EXACT_MAX_GRID as f64);

    let mut best: Option<(f64, f64, f64)> = None;
    let nr = ((r_hi - r_lo) / step).floor() as usize;
    let ng = ((g_hi - g_lo) / step).floor() as usize;
    for i in 0..=nr {
        let r = r_lo + i as f64 * step;
        for j in 0..=ng {
            let g = g_lo + j as f64 * step;
            if let Some(c) = cost_at(r, g) {
                if best.is_none_or(|(_, _, bc)| c < bc) {
                    best = Some((r, g, c));
                }
            }
        }
    }
    let (mut r, mut g, mut cost) = match best {
        Some(b) => b,
        None => {
            let r = 1.0 / 3.0;
            let c = cost_at(r, r).ok_or(Error::EmptySet)?;
            (r, r, c)
        }
    };

    let mut h = step / 2.0;
    while h >= EXACT_MIN_STEP {
        loop {
            let mut moved = false;
            for (dr, dg) in NEIGHBORS {
                let (nr, ng) = (r + dr * h, g + dg * h);
                if let Some(c) = cost_at(nr, ng) {
                    if c < cost {
                        r = nr;
                        g = ng;
                        cost = c;
                        moved = true;
                    }
                }
            }
            if !moved {
                break;
            }
        }
        h /= 2.0;
    }

    let estimate = Chromaticity::new(r, g, (1.0 - r - g).max(0.0))?;
    Ok(MinimizeResult {
        estimate,
        cost: total_cost(&estimate, targets, m)?,
        method: Method::ExactNumeric,
    })
}

const NEIGHBORS: [(f64, f64); 8] = [
    (-1.0, -1.0),
    (-1.0, 0.0),
    (-1.0, 1.0),
    (0.0, -1.0),
    (0.0, 1.0),
    (1.0, -1.0),
    (1.0, 0.0),
    (1.0, 1.0),
];
