//! Synthetic feature datasets for running the pipeline without an image corpus.
//!
//! Ground truths are drawn along a bowed warm-to-cool illuminant locus with a
//! small perpendicular spread. Each of the four feature pairs is the truth's
//! `(r, g)` plus bivariate Gaussian noise whose `r`/`g` components are
//! correlated; pairs differ in noise scale, standing in for estimators of
//! unequal quality. Noisy pairs are projected back onto the simplex.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::chroma::Chromaticity;
use crate::error::{Error, Result};
use crate::io::{feature_names, FeatureRow, FeatureTable};
use crate::seed::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    /// Base noise standard deviation, multiplied by each pair's scale.
    pub noise: f64,
    /// Correlation between the `r` and `g` noise of one pair.
    pub correlation: f64,
    pub pair_scales: [f64; 4],
    /// Locus end points as `(r, g)`.
    pub warm: [f64; 2],
    pub cool: [f64; 2],
    /// Extra `g` at the middle of the locus.
    pub bow: f64,
    /// Standard deviation of the offset perpendicular to the locus.
    pub spread: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 500,
            seed: 0,
            noise: 0.02,
            correlation: 0.6,
            pair_scales: [1.0, 2.0, 4.0, 8.0],
            warm: [0.46, 0.41],
            cool: [0.22, 0.40],
            bow: 0.04,
            spread: 0.01,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.into()));
        if self.n == 0 {
            return bad("synthetic dataset needs at least one example");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be a finite non-negative number");
        }
        if !(-1.0..=1.0).contains(&self.correlation) {
            return bad("correlation must lie in [-1, 1]");
        }
        if self.pair_scales.iter().any(|s| !(*s >= 0.0 && s.is_finite())) || !(self.spread >= 0.0) {
            return bad("noise scales must be finite and non-negative");
        }
        for p in [self.warm, self.cool] {
            Chromaticity::from_rg(p[0], p[1]).map_err(|_| Error::InvalidParams("locus end point off the simplex".into()))?;
        }
        Ok(())
    }

    fn describe(&self) -> String {
        format!(
            "synthetic: n={} seed={} noise={} correlation={} pair_scales={:?} warm={:?} cool={:?} bow={} spread={}",
            self.n, self.seed, self.noise, self.correlation, self.pair_scales, self.warm, self.cool, self.bow, self.spread
        )
    }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Clamps `(r, g)` into the closed triangle `r, g ≥ 0, r + g ≤ 1`.
fn onto_simplex(r: f64, g: f64) -> (f64, f64) {
    let (r, g) = (r.clamp(0.0, 1.0), g.clamp(0.0, 1.0));
    let s = r + g;
    if s > 1.0 {
        (r / s, g / s)
    } else {
        (r, g)
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<FeatureTable> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, 0);
    let rho = cfg.correlation;
    let ortho = (1.0 - rho * rho).sqrt();
    let (dr, dg) = (cfg.cool[0] - cfg.warm[0], cfg.cool[1] - cfg.warm[1]);
    let len = dr.hypot(dg);
    let (nr, ng) = if len > 0.0 { (-dg / len, dr / len) } else { (0.0, 0.0) };

    let mut table = FeatureTable::new(feature_names(false));
    table.comments.push(cfg.describe());
    let width = cfg.n.to_string().len().max(4);
    for i in 0..cfg.n {
        let t: f64 = rng.random();
        let off = cfg.spread * normal(&mut rng);
        let r = cfg.warm[0] + t * dr + off * nr;
        let g = cfg.warm[1] + t * dg + cfg.bow * 4.0 * t * (1.0 - t) + off * ng;
        let (r, g) = onto_simplex(r, g);
        let truth = Chromaticity::from_rg(r, g)?;
        let mut features = Vec::with_capacity(8);
        for scale in cfg.pair_scales {
            let s = cfg.noise * scale;
            let (z1, z2) = (normal(&mut rng), normal(&mut rng));
            let (fr, fg) = onto_simplex(r + s * z1, g + s * (rho * z1 + ortho * z2));
            features.push(fr);
            features.push(fg);
        }
        table.rows.push(FeatureRow {
            image_id: format!("syn{i:0width$}"),
            features,
            truth: Some(truth),
        });
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_bytes() {
        let cfg = SynthConfig { n: 100, seed: 1, ..Default::default() };
        let (mut a, mut b) = (Vec::new(), Vec::new());
        generate(&cfg).unwrap().write(&mut a).unwrap();
        generate(&cfg).unwrap().write(&mut b).unwrap();
        assert_eq!(a, b);
        let mut c = Vec::new();
        generate(&SynthConfig { seed: 2, ..cfg }).unwrap().write(&mut c).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn parameters_are_recorded_and_rows_valid() {
        let cfg = SynthConfig { n: 300, seed: 4, noise: 0.2, ..Default::default() };
        let t = generate(&cfg).unwrap();
        assert!(t.comments[0].contains("noise=0.2"));
        assert_eq!(t.rows.len(), 300);
        for row in &t.rows {
            assert_eq!(row.features.len(), 8);
            for pair in row.features.chunks(2) {
                assert!(pair[0] >= 0.0 && pair[1] >= 0.0 && pair[0] + pair[1] <= 1.0 + 1e-12);
            }
            let truth = row.truth.unwrap();
            assert!((0.15..0.55).contains(&truth.r()), "{truth:?}");
        }
    }

    #[test]
    fn noise_free_features_equal_truth() {
        let cfg = SynthConfig { n: 20, noise: 0.0, ..Default::default() };
        for row in generate(&cfg).unwrap().rows {
            let t = row.truth.unwrap();
            for pair in row.features.chunks(2) {
                assert!((pair[0] - t.r()).abs() < 1e-15 && (pair[1] - t.g()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn pair_noise_has_requested_correlation() {
        let cfg = SynthConfig { n: 4000, seed: 9, ..Default::default() };
        let rows = generate(&cfg).unwrap().rows;
        let (dr, dg): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .map(|r| {
                let t = r.truth.unwrap();
                (r.features[0] - t.r(), r.features[1] - t.g())
            })
            .unzip();
        let n = dr.len() as f64;
        let cov: f64 = dr.iter().zip(&dg).map(|(a, b)| a * b).sum::<f64>() / n;
        let sd = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
        let corr = cov / (sd(&dr) * sd(&dg));
        assert!((corr - 0.6).abs() < 0.05, "{corr}");
        assert!((sd(&dr) - 0.02).abs() < 0.002);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(generate(&SynthConfig { n: 0, ..Default::default() }).is_err());
        assert!(generate(&SynthConfig { correlation: 1.5, ..Default::default() }).is_err());
        assert!(generate(&SynthConfig { noise: -1.0, ..Default::default() }).is_err());
    }
}
