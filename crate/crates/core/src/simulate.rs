//! Synthetic multi-site data with known site effects:
//! `y_ijf = α_f + β1·x_ij + β2·x_ij² + γ_if + δ_if·ε_ijf`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Covariate, Dataset};
use crate::error::{Error, Result};

pub const BETA1: f64 = -0.0009;
pub const BETA2: f64 = -0.00005;
pub const INV_GAMMA_SCALE: f64 = 50.0;
pub const DEFAULT_FEATURES: usize = 11;

/// Which feature family a preset imitates; only the baseline level differs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    /// Cortical thickness.
    Ct,
    /// Fractal dimension.
    Fd,
}

impl FeatureKind {
    pub fn baseline(self) -> f64 {
        match self {
            FeatureKind::Ct => 2.5,
            FeatureKind::Fd => 2.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Subjects per site.
    pub n_per_site: usize,
    /// Baseline level per feature; its length is the feature count.
    pub alpha: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub age_range: (f64, f64),
    pub gamma_sd: f64,
    /// One inverse-gamma shape per site; its length is the site count.
    pub inv_gamma_shapes: Vec<f64>,
    pub inv_gamma_scale: f64,
    pub epsilon_sd: f64,
    /// Forces δ ≡ 1 (no scale effect) regardless of the shapes.
    pub unit_scale: bool,
    pub seed: u64,
}

/// Inverse-gamma shapes used for `k` sites in the reference experiments.
pub fn reference_shapes(k: usize) -> Option<Vec<f64>> {
    match k {
        3 => Some(vec![46.0, 51.0, 56.0]),
        10 => Some((0..10).map(|i| 40.0 + 2.0 * i as f64).collect()),
        36 => {
            let mut s: Vec<f64> = (10..=40).step_by(2).map(f64::from).collect();
            s.extend((41..=50).map(f64::from));
            s.extend((52..=70).step_by(2).map(f64::from));
            Some(s)
        }
        _ => None,
    }
}

/// Site counts and per-site sizes covered by presets.
pub const PRESET_SITES: [usize; 3] = [3, 10, 36];
pub const PRESET_SIZES: [usize; 4] = [25, 50, 100, 250];

impl SimulationConfig {
    pub fn standard(kind: FeatureKind, k: usize, n_per_site: usize, seed: u64) -> Result<Self> {
        let shapes =
            reference_shapes(k).ok_or_else(|| Error::InvalidArgument(format!("no reference shapes for k = {k}")))?;
        let c = Self {
            n_per_site,
            alpha: vec![kind.baseline(); DEFAULT_FEATURES],
            beta1: BETA1,
            beta2: BETA2,
            age_range: (20.0, 90.0),
            gamma_sd: 0.1,
            inv_gamma_shapes: shapes,
            inv_gamma_scale: INV_GAMMA_SCALE,
            epsilon_sd: 0.1,
            unit_scale: false,
            seed,
        };
        c.validate()?;
        Ok(c)
    }

    /// Named preset such as `ct-k36-n25` or `fd-k3-n250`.
    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown preset '{name}' (expected e.g. ct-k36-n25)"));
        let mut parts = name.split('-');
        let kind = match parts.next() {
            Some("ct") => FeatureKind::Ct,
            Some("fd") => FeatureKind::Fd,
            _ => return Err(bad()),
        };
        let k: usize = parts
            .next()
            .and_then(|p| p.strip_prefix('k'))
            .and_then(|v| v.parse().ok())
            .ok_or_else(bad)?;
        let n: usize = parts
            .next()
            .and_then(|p| p.strip_prefix('n'))
            .and_then(|v| v.parse().ok())
            .ok_or_else(bad)?;
        if parts.next().is_some() || !PRESET_SITES.contains(&k) || !PRESET_SIZES.contains(&n) {
            return Err(bad());
        }
        Self::standard(kind, k, n, seed)
    }

    pub fn preset_names() -> Vec<String> {
        let mut out = Vec::new();
        for kind in ["ct", "fd"] {
            for k in PRESET_SITES {
                for n in PRESET_SIZES {
                    out.push(format!("{kind}-k{k}-n{n}"));
                }
            }
        }
        out
    }

    pub fn n_sites(&self) -> usize {
        self.inv_gamma_shapes.len()
    }

    pub fn n_features(&self) -> usize {
        self.alpha.len()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.n_sites() == 0 || self.n_per_site == 0 || self.n_features() == 0 {
            return fail("sites, subjects per site and features must all be >= 1");
        }
        if !self.unit_scale && self.inv_gamma_shapes.iter().any(|&s| !(s > 2.0 && s.is_finite())) {
            return fail("inverse-gamma shapes must be finite and > 2");
        }
        if !(self.inv_gamma_scale > 0.0 && self.inv_gamma_scale.is_finite()) {
            return fail("inverse-gamma scale must be positive");
        }
        if !(self.gamma_sd >= 0.0 && self.epsilon_sd >= 0.0) {
            return fail("gamma_sd and epsilon_sd must be >= 0");
        }
        if !(self.age_range.0 < self.age_range.1) {
            return fail("age range must satisfy lo < hi");
        }
        if self
            .alpha
            .iter()
            .chain([&self.beta1, &self.beta2])
            .any(|v| !v.is_finite())
        {
            return fail("coefficients must be finite");
        }
        Ok(())
    }

    pub fn site_name(i: usize) -> String {
        format!("site{:02}", i + 1)
    }

    pub fn feature_name(f: usize) -> String {
        format!("feature{:02}", f + 1)
    }
}

/// Injected site effects, `[site][feature]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTruth {
    pub sites: Vec<String>,
    pub features: Vec<String>,
    pub gamma: Vec<Vec<f64>>,
    pub delta: Vec<Vec<f64>>,
    pub config: SimulationConfig,
}

/// Generates `k · n` subjects. Each site draws from its own random stream, so
/// a site's values depend only on the seed and the site index.
pub fn simulate_dataset(c: &SimulationConfig) -> Result<(Dataset, SimulationTruth)> {
    c.validate()?;
    let (k, n, v) = (c.n_sites(), c.n_per_site, c.n_features());
    let (lo, hi) = c.age_range;
    let mut ids = Vec::with_capacity(k * n);
    let mut sites = Vec::with_capacity(k * n);
    let mut ages = Vec::with_capacity(k * n);
    let mut y = DMatrix::zeros(k * n, v);
    let mut gamma = Vec::with_capacity(k);
    let mut delta = Vec::with_capacity(k);
    for i in 0..k {
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        rng.set_stream(i as u64 + 1);
        let g: Vec<f64> = (0..v)
            .map(|_| c.gamma_sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let d: Vec<f64> = if c.unit_scale {
            vec![1.0; v]
        } else {
            let dist = Gamma::new(c.inv_gamma_shapes[i], 1.0)
                .map_err(|e| Error::InvalidArgument(format!("inverse-gamma shape: {e}")))?;
            (0..v).map(|_| c.inv_gamma_scale / dist.sample(&mut rng)).collect()
        };
        let name = SimulationConfig::site_name(i);
        for j in 0..n {
            let row = i * n + j;
            let x: f64 = rng.random_range(lo..hi);
            for f in 0..v {
                let e: f64 = c.epsilon_sd * rng.sample::<f64, _>(StandardNormal);
                y[(row, f)] = c.alpha[f] + c.beta1 * x + c.beta2 * x * x + g[f] + d[f] * e;
            }
            ids.push(format!("{name}-{:04}", j + 1));
            sites.push(name.clone());
            ages.push(x);
        }
        gamma.push(g);
        delta.push(d);
    }
    let features: Vec<String> = (0..v).map(SimulationConfig::feature_name).collect();
    let data = Dataset::new(ids, &sites, vec![Covariate::numeric("age", ages)], features.clone(), y)?;
    let truth = SimulationTruth {
        sites: (0..k).map(SimulationConfig::site_name).collect(),
        features,
        gamma,
        delta,
        config: c.clone(),
    };
    Ok((data, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_shape_sets() {
        assert_eq!(reference_shapes(3).unwrap(), vec![46.0, 51.0, 56.0]);
        let s10 = reference_shapes(10).unwrap();
        assert_eq!((s10.len(), s10[0], s10[9]), (10, 40.0, 58.0));
        let s36 = reference_shapes(36).unwrap();
        assert_eq!(s36.len(), 36);
        assert!(s36.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(
            (s36[0], s36[15], s36[16], s36[25], s36[26], s36[35]),
            (10.0, 40.0, 41.0, 50.0, 52.0, 70.0)
        );
        assert!(reference_shapes(4).is_none());
    }

    #[test]
    fn presets_parse() {
        assert_eq!(SimulationConfig::preset_names().len(), 24);
        let c = SimulationConfig::preset("fd-k10-n50", 3).unwrap();
        assert_eq!((c.n_sites(), c.n_per_site, c.alpha[0]), (10, 50, 2.6));
        for bad in ["ct-k4-n25", "xx-k3-n25", "ct-k3-n26", "ct-k3", "ct-k3-n25-z"] {
            assert!(SimulationConfig::preset(bad, 0).is_err(), "{bad}");
        }
    }

    #[test]
    fn noiseless_model_is_exact() {
        let mut c = SimulationConfig::standard(FeatureKind::Ct, 3, 20, 5).unwrap();
        c.gamma_sd = 0.0;
        c.epsilon_sd = 0.0;
        c.unit_scale = true;
        let (d, truth) = simulate_dataset(&c).unwrap();
        let age = d.numeric_covariate("age").unwrap();
        for (r, &x) in age.iter().enumerate() {
            for f in 0..d.n_features() {
                assert_eq!(d.features()[(r, f)], 2.5 + BETA1 * x + BETA2 * x * x);
            }
        }
        assert!(truth.delta.iter().flatten().all(|&v| v == 1.0));
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let c = SimulationConfig::preset("ct-k10-n25", 11).unwrap();
        let (a, ta) = simulate_dataset(&c).unwrap();
        let (b, tb) = simulate_dataset(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (other, _) = simulate_dataset(&SimulationConfig { seed: 12, ..c }).unwrap();
        assert_ne!(a.features(), other.features());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = SimulationConfig::standard(FeatureKind::Ct, 3, 5, 0).unwrap();
        let bad = [
            SimulationConfig {
                inv_gamma_shapes: vec![2.0, 5.0, 6.0],
                ..base.clone()
            },
            SimulationConfig {
                epsilon_sd: -1.0,
                ..base.clone()
            },
            SimulationConfig {
                age_range: (5.0, 5.0),
                ..base.clone()
            },
            SimulationConfig {
                alpha: vec![],
                ..base.clone()
            },
        ];
        for c in bad {
            assert!(simulate_dataset(&c).is_err());
        }
    }
}
