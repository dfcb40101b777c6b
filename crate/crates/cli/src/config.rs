//! Experiment configuration: TOML sections, `--set` overrides and
//! cross-field validation.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use plapflow::graph::{build_lattice_ball, WeightEntry};
use plapflow::{DensityProfile, ScalingToolkit, WeightScheme, WeightedGraph};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Large-time decay of a single solution; needs the density window below `p`.
    #[default]
    Decay,
    /// Universal bound across amplitudes; needs `α > p`.
    Universal,
    /// Heat-equation reference runs at `p = 2`.
    Linear,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub graph: GraphSection,
    #[serde(default)]
    pub density: DensitySection,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub initial_data: InitialSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub verify: VerifySection,
    /// Directory of the config file; relative input paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    #[serde(alias = "N")]
    pub dim: usize,
    #[serde(alias = "R")]
    pub radius: usize,
    #[serde(default = "default_scheme")]
    pub weight_scheme: String,
    /// Edge overrides for `weight_scheme = "custom"`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<WeightSpec>,
}

fn default_scheme() -> String {
    "unit".into()
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub from: Vec<i64>,
    pub to: Vec<i64>,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    #[default]
    Constant,
    Power,
    PowerLog,
    Table,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySection {
    #[serde(default)]
    pub family: DensityKind,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    /// `(s, ρ)` knots for `family = "table"`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub table: Vec<[f64; 2]>,
    /// Monotonicity window `[α₁, α₂]`; defaults to `[α, α]` for power and
    /// `[0, 0]` for constant densities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSection {
    pub p: f64,
    #[serde(alias = "T")]
    pub horizon: f64,
    pub theta: f64,
    pub snapshots: usize,
    pub linear_mode: bool,
    pub leak_threshold: f64,
    /// Fixed step; adaptive when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

impl Default for FlowSection {
    fn default() -> Self {
        Self { p: 2.5, horizon: 10.0, theta: 0.5, snapshots: 200, linear_mode: false, leak_threshold: 1e-8, dt: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    #[default]
    Delta,
    Box,
    Gaussian,
    FromFile,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub kind: InitialKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    pub scales: Vec<f64>,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self { kind: InitialKind::Delta, radius: None, width: None, file: None, scales: vec![1.0] }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub window_fraction: f64,
    /// Moment exponent override; universal runs otherwise take the default ν.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    /// Allowed gap between fitted and predicted decay exponents.
    pub exponent_tolerance: f64,
    /// Budget on the worst late-window universal spread.
    pub spread_budget: f64,
    /// Optional budget on max/min of Q(t) over the late window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_ratio_budget: Option<f64>,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self { window_fraction: 0.4, nu: None, exponent_tolerance: 0.1, spread_budget: 2.0, q_ratio_budget: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Sobolev,
    FaberKrahn,
    Gn,
    Lemma21,
    Lemma24,
    Caccioppoli,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Sobolev => "sobolev",
            Suite::FaberKrahn => "faber_krahn",
            Suite::Gn => "gn",
            Suite::Lemma21 => "lemma21",
            Suite::Lemma24 => "lemma24",
            Suite::Caccioppoli => "caccioppoli",
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub suites: Vec<Suite>,
    pub trials: usize,
    pub polish_sweeps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sobolev_budget: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faber_krahn_budget: Option<f64>,
    pub gn_q: f64,
    pub gn_r: f64,
    /// Budget on max/median of the required GN constants.
    pub gn_spread_budget: f64,
    pub lemma21_beta: f64,
    /// Radii of the partial sums; defaults to `R/4, R/2, R`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma21_radii: Option<Vec<usize>>,
    /// Budget on the max/min band (`β < N`) or the tail ratio (`β > N`).
    pub lemma21_budget: f64,
    pub lemma24_gammas: Vec<f64>,
    pub lemma24_radii: Vec<f64>,
    pub caccioppoli_samples: usize,
    pub caccioppoli_q: f64,
    pub caccioppoli_h: f64,
    pub caccioppoli_range: [f64; 2],
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            suites: vec![Suite::Sobolev, Suite::FaberKrahn, Suite::Lemma21, Suite::Lemma24, Suite::Caccioppoli],
            trials: 200,
            polish_sweeps: 2,
            sobolev_budget: None,
            faber_krahn_budget: None,
            gn_q: 2.0,
            gn_r: 1.0,
            gn_spread_budget: 10.0,
            lemma21_beta: 1.0,
            lemma21_radii: None,
            lemma21_budget: 2.0,
            lemma24_gammas: vec![1.0, 1.5, 2.0, 4.0, 10.0, 100.0],
            lemma24_radii: vec![1.0, 2.0, 5.0, 10.0, 100.0, 1000.0],
            caccioppoli_samples: 10_000,
            caccioppoli_q: 1.0,
            caccioppoli_h: 1.0,
            caccioppoli_range: [0.0, 10.0],
        }
    }
}

/// Parses a `--set` value as a TOML value, falling back to a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) =
        assignment.split_once('=').ok_or_else(|| anyhow!("--set expects key=value, got `{assignment}`"))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|k| k.is_empty()) {
        bail!("--set key `{key}` has an empty component");
    }
    let (last, parents) = path.split_last().expect("split yields at least one component");
    let mut table = root;
    for part in parents {
        let entry = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| anyhow!("--set key `{key}`: `{part}` is not a section"))?;
    }
    table.insert(last.to_string(), parse_override_value(raw.trim()));
    Ok(())
}

impl ExperimentConfig {
    /// Reads, overrides and validates a config file.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::from_text(&text, overrides).with_context(|| format!("config {}", path.display()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn from_text(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| anyhow!("{e}"))?;
        // The typed parse of the file text keeps line/column in field errors.
        let typed = toml::from_str::<Self>(text).map_err(|e| anyhow!("{e}"));
        let cfg = if overrides.is_empty() {
            typed?
        } else {
            for o in overrides {
                apply_override(&mut table, o)?;
            }
            match toml::Value::Table(table).try_into::<Self>() {
                Ok(cfg) => cfg,
                Err(e) => return Err(typed.err().unwrap_or_else(|| anyhow!("after --set overrides: {e}"))),
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn alpha_window(&self) -> Option<(f64, f64)> {
        if let Some([lo, hi]) = self.density.window {
            return Some((lo, hi));
        }
        match self.density.family {
            DensityKind::Constant => Some((0.0, 0.0)),
            DensityKind::Power => Some((self.density.alpha, self.density.alpha)),
            DensityKind::PowerLog | DensityKind::Table => None,
        }
    }

    /// Tail exponent of the density (`0` for constant and table densities).
    pub fn alpha(&self) -> f64 {
        match self.density.family {
            DensityKind::Power | DensityKind::PowerLog => self.density.alpha,
            DensityKind::Constant | DensityKind::Table => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.graph;
        if !(1..=plapflow::graph::MAX_DIMENSION).contains(&g.dim) {
            bail!("graph.dim: must be in 1..={}, got {}", plapflow::graph::MAX_DIMENSION, g.dim);
        }
        if g.radius == 0 {
            bail!("graph.radius: must be positive");
        }
        match g.weight_scheme.as_str() {
            "unit" if !g.weights.is_empty() => bail!("graph.weights: given but weight_scheme is \"unit\""),
            "unit" | "custom" => {}
            other => bail!("graph.weight_scheme: expected \"unit\" or \"custom\", got \"{other}\""),
        }

        let f = &self.flow;
        if f.linear_mode {
            if f.p != 2.0 {
                bail!("flow.linear_mode: linear mode runs p = 2, got p = {}", f.p);
            }
        } else if !(f.p > 2.0) {
            bail!("flow.p: need p > 2 (p = 2 only with flow.linear_mode = true), got p = {}", f.p);
        }
        if !(f.horizon > 0.0) || !f.horizon.is_finite() {
            bail!("flow.horizon: must be positive, got {}", f.horizon);
        }
        if !(f.theta > 0.0 && f.theta <= 1.0) {
            bail!("flow.theta: must lie in (0, 1], got {}", f.theta);
        }
        if f.snapshots < 2 {
            bail!("flow.snapshots: need at least 2, got {}", f.snapshots);
        }

        let d = &self.density;
        if matches!(d.family, DensityKind::Power | DensityKind::PowerLog) && !(d.alpha >= 0.0) {
            bail!("density.alpha: must be >= 0, got {}", d.alpha);
        }
        if d.family == DensityKind::Table && d.table.is_empty() {
            bail!("density.table: required for family = \"table\"");
        }
        let alpha = self.alpha();
        match self.experiment {
            ExperimentKind::Decay => {
                if !(alpha < f.p) {
                    bail!(
                        "experiment = \"decay\" needs the H1 window below p (alpha < p), got alpha = {alpha}, p = {}",
                        f.p
                    );
                }
                if let Some((_, hi)) = self.alpha_window() {
                    if !(hi < f.p) {
                        bail!("density.window: H1 window needs alpha2 < p, got alpha2 = {hi}, p = {}", f.p);
                    }
                }
            }
            ExperimentKind::Universal => {
                if !(alpha > f.p) {
                    bail!(
                        "experiment = \"universal\" needs alpha > p for the summability condition, got alpha = {alpha}, p = {}",
                        f.p
                    );
                }
            }
            ExperimentKind::Linear => {
                if !f.linear_mode {
                    bail!("experiment = \"linear\" needs flow.linear_mode = true");
                }
            }
        }

        let init = &self.initial_data;
        if init.scales.is_empty() {
            bail!("initial_data.scales: need at least one amplitude scale");
        }
        if init.scales.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            bail!("initial_data.scales: every scale must be positive and finite");
        }
        let mut names: Vec<String> = init.scales.iter().map(|s| scale_label(*s)).collect();
        names.sort();
        names.dedup();
        if names.len() != init.scales.len() {
            bail!("initial_data.scales: scales must be distinct");
        }
        match init.kind {
            InitialKind::Delta => {}
            InitialKind::Box => match init.radius {
                Some(r) if r <= g.radius => {}
                Some(r) => bail!("initial_data.radius: {r} exceeds graph radius {}", g.radius),
                None => bail!("initial_data.radius: required for kind = \"box\""),
            },
            InitialKind::Gaussian => match init.width {
                Some(w) if w > 0.0 => {}
                Some(w) => bail!("initial_data.width: must be positive, got {w}"),
                None => bail!("initial_data.width: required for kind = \"gaussian\""),
            },
            InitialKind::FromFile => {
                if init.file.is_none() {
                    bail!("initial_data.file: required for kind = \"from_file\"");
                }
            }
        }

        let a = &self.analysis;
        if !(a.window_fraction > 0.0 && a.window_fraction <= 1.0) {
            bail!("analysis.window_fraction: must lie in (0, 1], got {}", a.window_fraction);
        }
        if let Some(nu) = a.nu {
            if !(nu > 0.0) {
                bail!("analysis.nu: must be positive, got {nu}");
            }
        }
        if !(a.exponent_tolerance >= 0.0) || !(a.spread_budget >= 1.0) {
            bail!("analysis: exponent_tolerance must be >= 0 and spread_budget >= 1");
        }

        let v = &self.verify;
        if v.trials == 0 {
            bail!("verify.trials: must be positive");
        }
        if v.suites.contains(&Suite::Gn) && !(v.gn_r > 0.0 && v.gn_r < v.gn_q && v.gn_q < f.p) {
            bail!("verify.gn_q: suite gn needs 0 < r < q < p, got r = {}, q = {}, p = {}", v.gn_r, v.gn_q, f.p);
        }
        if v.suites.contains(&Suite::Lemma21) {
            if let Some(radii) = &v.lemma21_radii {
                if radii.is_empty() || radii.iter().any(|&n| n == 0 || n > g.radius) {
                    bail!("verify.lemma21_radii: radii must lie in 1..={}", g.radius);
                }
            }
        }
        if v.suites.contains(&Suite::Caccioppoli) {
            let [lo, hi] = v.caccioppoli_range;
            if !(lo < hi) || v.caccioppoli_samples == 0 {
                bail!("verify.caccioppoli_range: need lo < hi and a positive sample count");
            }
        }
        Ok(())
    }

    pub fn graph(&self) -> Result<WeightedGraph> {
        let scheme = match self.graph.weight_scheme.as_str() {
            "custom" => WeightScheme::Custom(
                self.graph
                    .weights
                    .iter()
                    .map(|w| WeightEntry { from: w.from.clone(), to: w.to.clone(), weight: w.weight })
                    .collect(),
            ),
            _ => WeightScheme::Unit,
        };
        Ok(build_lattice_ball(self.graph.dim, self.graph.radius, &scheme)?)
    }

    pub fn profile(&self) -> Result<DensityProfile> {
        let d = &self.density;
        Ok(match d.family {
            DensityKind::Constant => DensityProfile::constant(),
            DensityKind::Power => DensityProfile::power(d.alpha)?,
            DensityKind::PowerLog => DensityProfile::power_log(d.alpha, d.beta)?,
            DensityKind::Table => DensityProfile::table(d.table.iter().map(|[s, r]| (*s, *r)).collect())?,
        })
    }

    /// Scaling toolkit on the configured window; fails where the window is
    /// undefined or outside `0 ≤ α₁ ≤ α₂ < p < N`.
    pub fn toolkit(&self) -> Result<ScalingToolkit> {
        let (lo, hi) = self
            .alpha_window()
            .ok_or_else(|| anyhow!("density.window: required for {:?} densities", self.density.family))?;
        Ok(ScalingToolkit::new(self.flow.p, self.graph.dim, self.profile()?, lo, hi)?)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}

/// File-name label of an amplitude scale (`1`, `10`, `0.5`).
pub fn scale_label(s: f64) -> String {
    format!("{s}")
}
