//! Scenario configuration files (TOML).
//!
//! ```toml
//! name = "impurity-d10"
//! kind = "impurities"        # homogeneous | impurities | harmonic | random-sample
//! t = 1.0
//! U = 4.0                    # or a list, swept as an outer loop
//! d = 10
//! n_up = 2
//! n_down = 2
//!
//! [impurities]
//! sites = [4, 5]             # 0-based
//! V = { start = 0.0, stop = 20.0, step = 0.5 }
//!
//! [solver]
//! inversion = "auto"         # true | false | "auto" (on for d <= 14)
//!
//! [output]
//! path = "impurity-d10.csv"
//! ```
//!
//! Homogeneous and random-sample scenarios may give `sizes = [4, 6, 8]`
//! instead of `d`, `n_up`, `n_down`; each size is filled with `N = d/2`
//! particles, `n_up = ceil(N/2)`, `n_down = floor(N/2)`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::hamiltonian::DEFAULT_MAX_DIMENSION;
use crate::hilbert::{SpinSector, MAX_SITES};

/// Largest chain for which inversion runs under `inversion = "auto"`.
pub const AUTO_INVERSION_MAX_D: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Homogeneous,
    Impurities,
    Harmonic,
    RandomSample,
}

impl ScenarioKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::Homogeneous => "homogeneous",
            ScenarioKind::Impurities => "impurities",
            ScenarioKind::Harmonic => "harmonic",
            ScenarioKind::RandomSample => "random-sample",
        }
    }
}

/// Explicit list of values or an arithmetic range including both ends.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Grid {
    pub fn values(&self, key: &str) -> Result<Vec<f64>> {
        let values = match self {
            Grid::List(v) => v.clone(),
            Grid::Range { start, stop, step } => {
                if !(*step > 0.0) || !start.is_finite() || !stop.is_finite() {
                    return Err(Error::config(key, "range needs finite bounds and step > 0"));
                }
                let count = ((stop - start) / step + 1e-9).floor();
                if count < 0.0 {
                    return Err(Error::config(key, "range stop lies below start"));
                }
                (0..=count as usize).map(|i| start + i as f64 * step).collect()
            }
        };
        if values.is_empty() {
            return Err(Error::config(key, "grid is empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config(key, "grid values must be finite"));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config(key, "grid must be strictly increasing"));
        }
        Ok(values)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum InversionSetting {
    Flag(bool),
    Mode(AutoMode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoMode {
    Auto,
}

impl Default for InversionSetting {
    fn default() -> Self {
        InversionSetting::Mode(AutoMode::Auto)
    }
}

impl InversionSetting {
    pub fn enabled_for(&self, d: usize) -> bool {
        match self {
            InversionSetting::Flag(on) => *on,
            InversionSetting::Mode(AutoMode::Auto) => d <= AUTO_INVERSION_MAX_D,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpuritySection {
    pub sites: Vec<usize>,
    #[serde(rename = "V")]
    pub v: Grid,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarmonicSection {
    pub k: Grid,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSection {
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub inversion: InversionSetting,
    pub max_dim: usize,
    pub ks_tol: f64,
    pub ks_max_iter: usize,
    pub inversion_threshold: f64,
    pub inversion_max_iter: usize,
    pub inversion_mixing: f64,
    pub empty_floor: f64,
    /// Relative Lanczos residual tolerance; chosen from the sector size when absent.
    pub lanczos_tol: Option<f64>,
    pub lanczos_max_iter: usize,
    /// Memory for stored Lanczos vectors, in MiB.
    pub krylov_memory_mib: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            inversion: InversionSetting::default(),
            max_dim: DEFAULT_MAX_DIMENSION,
            ks_tol: 1e-10,
            ks_max_iter: 20_000,
            inversion_threshold: 1e-8,
            inversion_max_iter: 50_000,
            inversion_mixing: 0.2,
            empty_floor: 1e-6,
            lanczos_tol: None,
            lanczos_max_iter: 2000,
            krylov_memory_mib: 512,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
    pub trace_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub kind: ScenarioKind,
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(rename = "U")]
    pub u: OneOrMany,
    pub d: Option<usize>,
    pub n_up: Option<usize>,
    pub n_down: Option<usize>,
    pub sizes: Option<Vec<usize>>,
    pub impurities: Option<ImpuritySection>,
    pub harmonic: Option<HarmonicSection>,
    pub random: Option<RandomSection>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_t() -> f64 {
    1.0
}

/// Sector filled with `N = d/2` particles, the extra one spin-up for odd `N`.
pub fn half_filling_sector(d: usize) -> Result<SpinSector> {
    let n = d / 2;
    SpinSector::new(d, n.div_ceil(2), n / 2)
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let key = e
                .span()
                .map(|s| text[s].split(['=', '\n']).next().unwrap_or("").trim().to_string())
                .filter(|k| !k.is_empty())
                .unwrap_or_else(|| "<document>".into());
            Error::config(key, e.message().to_string())
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or(self.kind.as_str())
    }

    pub fn u_values(&self) -> Vec<f64> {
        self.u.values()
    }

    /// Spin sectors covered by the scenario, in output order.
    pub fn sectors(&self) -> Result<Vec<SpinSector>> {
        match (&self.sizes, self.d) {
            (Some(_), Some(_)) => Err(Error::config("sizes", "give either sizes or d, not both")),
            (Some(sizes), None) => {
                if !matches!(self.kind, ScenarioKind::Homogeneous | ScenarioKind::RandomSample) {
                    return Err(Error::config(
                        "sizes",
                        "only homogeneous and random-sample scenarios sweep sizes",
                    ));
                }
                if self.n_up.is_some() || self.n_down.is_some() {
                    return Err(Error::config("n_up", "fillings are fixed by sizes"));
                }
                if sizes.is_empty() || sizes.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::config("sizes", "must be non-empty and strictly increasing"));
                }
                sizes
                    .iter()
                    .map(|&d| {
                        check_d(d)?;
                        half_filling_sector(d).map_err(|e| Error::config("sizes", e.to_string()))
                    })
                    .collect()
            }
            (None, Some(d)) => {
                check_d(d)?;
                let n_up = self.n_up.ok_or_else(|| Error::config("n_up", "missing"))?;
                let n_down = self.n_down.ok_or_else(|| Error::config("n_down", "missing"))?;
                if n_up > d {
                    return Err(Error::config("n_up", format!("{n_up} exceeds d = {d}")));
                }
                if n_down > d {
                    return Err(Error::config("n_down", format!("{n_down} exceeds d = {d}")));
                }
                if n_up + n_down == 0 {
                    return Err(Error::config("n_up", "at least one particle required"));
                }
                let s = SpinSector::new(d, n_up, n_down).map_err(|e| Error::config("d", e.to_string()))?;
                Ok(vec![s])
            }
            (None, None) => Err(Error::config("d", "missing (or give sizes)")),
        }
    }

    /// Checks everything that can be checked without numerical work.
    pub fn validate(&self) -> Result<()> {
        self.validate_with_max_dim(self.solver.max_dim)
    }

    pub fn validate_with_max_dim(&self, max_dim: usize) -> Result<()> {
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(Error::config("t", "must be positive"));
        }
        let us = self.u_values();
        if us.is_empty() {
            return Err(Error::config("U", "no values"));
        }
        if us.iter().any(|u| !(*u >= 0.0) || !u.is_finite()) {
            return Err(Error::config("U", "must be finite and >= 0"));
        }
        let sectors = self.sectors()?;
        for s in &sectors {
            let dim = s.dimension_u128();
            if dim > max_dim as u128 {
                return Err(Error::config(
                    "d",
                    format!(
                        "sector {s} has dimension {dim}, above the exact-diagonalization limit {max_dim}; \
                         chains of this size need DMRG, which is not supported"
                    ),
                ));
            }
        }

        let sec = &self.solver;
        if !(sec.ks_tol > 0.0) {
            return Err(Error::config("solver.ks_tol", "must be positive"));
        }
        if !(sec.inversion_threshold > 0.0) {
            return Err(Error::config("solver.inversion_threshold", "must be positive"));
        }
        if !(sec.inversion_mixing > 0.0 && sec.inversion_mixing <= 1.0) {
            return Err(Error::config("solver.inversion_mixing", "must lie in (0, 1]"));
        }
        if !(sec.empty_floor >= 0.0 && sec.empty_floor < 1.0) {
            return Err(Error::config("solver.empty_floor", "must lie in [0, 1)"));
        }
        if let Some(tol) = sec.lanczos_tol {
            if !(tol > 0.0) {
                return Err(Error::config("solver.lanczos_tol", "must be positive"));
            }
        }
        if sec.krylov_memory_mib == 0 {
            return Err(Error::config("solver.krylov_memory_mib", "must be positive"));
        }

        let expect = |present: bool, section: &str, wanted: bool| -> Result<()> {
            match (present, wanted) {
                (false, true) => Err(Error::config(section, format!("section required for kind {}", self.kind.as_str()))),
                (true, false) => Err(Error::config(section, format!("section not used by kind {}", self.kind.as_str()))),
                _ => Ok(()),
            }
        };
        expect(self.impurities.is_some(), "impurities", self.kind == ScenarioKind::Impurities)?;
        expect(self.harmonic.is_some(), "harmonic", self.kind == ScenarioKind::Harmonic)?;
        expect(self.random.is_some(), "random", self.kind == ScenarioKind::RandomSample)?;

        if let Some(imp) = &self.impurities {
            let d = sectors[0].d();
            let mut seen = vec![false; d];
            for &site in &imp.sites {
                if site >= d {
                    return Err(Error::config(
                        "impurities.sites",
                        format!("site {site} outside the chain [0, {d})"),
                    ));
                }
                if std::mem::replace(&mut seen[site], true) {
                    return Err(Error::config("impurities.sites", format!("site {site} listed twice")));
                }
            }
            imp.v.values("impurities.V")?;
        }
        if let Some(h) = &self.harmonic {
            let ks = h.k.values("harmonic.k")?;
            if ks[0] < 0.0 {
                return Err(Error::config("harmonic.k", "must be >= 0"));
            }
        }
        if let Some(r) = &self.random {
            if r.samples == 0 {
                return Err(Error::config("random.samples", "must be at least 1"));
            }
        }
        Ok(())
    }
}

fn check_d(d: usize) -> Result<()> {
    if !(2..=MAX_SITES).contains(&d) {
        return Err(Error::config("d", format!("{d} outside [2, {MAX_SITES}]")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const IMPURITY: &str = r#"
kind = "impurities"
U = 4.0
d = 10
n_up = 2
n_down = 2

[impurities]
sites = [4, 5]
V = { start = 0.0, stop = 2.0, step = 0.5 }
"#;

    #[test]
    fn parses_impurity_config() {
        let c = ScenarioConfig::from_toml_str(IMPURITY).unwrap();
        c.validate().unwrap();
        assert_eq!(c.t, 1.0);
        assert_eq!(c.name(), "impurities");
        assert_eq!(
            c.impurities.unwrap().v.values("V").unwrap(),
            vec![0.0, 0.5, 1.0, 1.5, 2.0]
        );
    }

    #[test]
    fn unknown_key_rejected() {
        let text = IMPURITY.replace("d = 10", "d = 10\nbogus = 1");
        match ScenarioConfig::from_toml_str(&text) {
            Err(Error::Config { message, .. }) => assert!(message.contains("bogus"), "{message}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn out_of_range_site_names_key() {
        let text = IMPURITY.replace("sites = [4, 5]", "sites = [4, 25]");
        let c = ScenarioConfig::from_toml_str(&text).unwrap();
        match c.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "impurities.sites"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_site_rejected() {
        let text = IMPURITY.replace("sites = [4, 5]", "sites = [4, 4]");
        assert!(ScenarioConfig::from_toml_str(&text).unwrap().validate().is_err());
    }

    #[test]
    fn grids_must_increase() {
        assert!(Grid::List(vec![0.0, 1.0, 1.0]).values("V").is_err());
        assert!(Grid::List(vec![]).values("V").is_err());
        assert!(Grid::Range { start: 0.0, stop: 1.0, step: 0.0 }.values("V").is_err());
        let v = Grid::Range { start: 0.05, stop: 5.0, step: 0.05 }.values("k").unwrap();
        assert_eq!(v.len(), 100);
        assert_close!(*v.last().unwrap(), 5.0, 1e-12);
    }

    #[test]
    fn sizes_fill_half() {
        let c = ScenarioConfig::from_toml_str("kind = \"homogeneous\"\nU = 4.0\nsizes = [4, 6]\n").unwrap();
        let s = c.sectors().unwrap();
        assert_eq!((s[0].n_up(), s[0].n_down()), (1, 1));
        assert_eq!((s[1].n_up(), s[1].n_down()), (2, 1));
    }

    #[test]
    fn oversized_sector_mentions_dmrg() {
        let text = IMPURITY
            .replace("d = 10", "d = 30")
            .replace("n_up = 2", "n_up = 6")
            .replace("n_down = 2", "n_down = 6");
        match ScenarioConfig::from_toml_str(&text).unwrap().validate() {
            Err(Error::Config { message, .. }) => assert!(message.contains("DMRG")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn section_must_match_kind() {
        let text = IMPURITY.replace("kind = \"impurities\"", "kind = \"harmonic\"");
        assert!(ScenarioConfig::from_toml_str(&text).unwrap().validate().is_err());
    }

    #[test]
    fn inversion_auto_threshold() {
        let auto = InversionSetting::default();
        assert!(auto.enabled_for(14));
        assert!(!auto.enabled_for(20));
        assert!(!InversionSetting::Flag(false).enabled_for(4));
    }

    #[test]
    fn u_list_accepted() {
        let text = IMPURITY.replace("U = 4.0", "U = [2.0, 4.0, 8.0]");
        let c = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(c.u_values(), vec![2.0, 4.0, 8.0]);
    }
}
