//! Experiment configuration: a TOML file, validated with line-precise errors.
//!
//! Precedence: built-in defaults < config file < command-line flags.

use crate::error::{LabError, Result};
use crate::geodesic::FinderOptions;
use crate::hyperbolic::{GroupPresentation, Mobius};
use crate::livsic::LivsicOptions;
use crate::ode::Tolerance;
use crate::surface::Surface;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub surface: SurfaceSpec,
    /// Homotopy classes as words in the generator names (capital = inverse).
    #[serde(default = "default_classes")]
    pub classes: Vec<String>,
    #[serde(default)]
    pub perturbation: PerturbationSpec,
    #[serde(default = "default_ladder")]
    pub eps_ladder: Vec<f64>,
    #[serde(default)]
    pub indicial: IndicialSpec,
    #[serde(default)]
    pub livsic: LivsicSpec,
    #[serde(default)]
    pub flow: FlowSpec,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_classes() -> Vec<String> {
    ["ab", "a", "b", "aB", "aab"].iter().map(|s| s.to_string()).collect()
}
fn default_ladder() -> Vec<f64> {
    vec![1e-2, 3e-3, 1e-3, 3e-4]
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_seed() -> u64 {
    20240611
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            surface: SurfaceSpec::default(),
            classes: default_classes(),
            perturbation: PerturbationSpec::default(),
            eps_ladder: default_ladder(),
            indicial: IndicialSpec::default(),
            livsic: LivsicSpec::default(),
            flow: FlowSpec::default(),
            tolerances: ToleranceSpec::default(),
            output_dir: default_out(),
            seed: default_seed(),
        }
    }
}

/// A named preset or an explicit list of generators `[a, b, c, d]`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    pub preset: Option<String>,
    pub generators: Option<Vec<[f64; 4]>>,
    pub names: Option<Vec<String>>,
    pub cusp_height: Option<f64>,
}

impl Default for SurfaceSpec {
    fn default() -> Self {
        SurfaceSpec { preset: Some("one-cusp-genus-1".into()), generators: None, names: None, cusp_height: None }
    }
}

impl SurfaceSpec {
    pub fn group(&self) -> Result<GroupPresentation> {
        match (&self.preset, &self.generators) {
            (Some(_), Some(_)) => Err(LabError::input("surface: give either preset or generators, not both")),
            (Some(p), None) => GroupPresentation::preset(p),
            (None, Some(gens)) => {
                let names = match &self.names {
                    Some(n) => n.clone(),
                    None => (0..gens.len()).map(|i| ((b'a' + i as u8) as char).to_string()).collect(),
                };
                let ms = gens.iter().map(|g| Mobius::new(g[0], g[1], g[2], g[3])).collect::<Result<Vec<_>>>()?;
                GroupPresentation::new(ms, names)
            }
            (None, None) => Err(LabError::input("surface: preset or generators required")),
        }
    }

    pub fn build(&self) -> Result<Surface> {
        Surface::new(self.group()?, self.cusp_height)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKind {
    ConformalBump,
    Mode0Power,
    CustomTable,
    Potential,
}

/// Metric perturbation `f` (and the tensor fed to the X-ray transform).
///
/// * `conformal-bump`: `amplitude · χ · g` for a bump of `radius` at `center`.
/// * `mode0-power`: `y^{−decay}(a dy² + b dy dθ + c dθ²)/y²` in the cusp,
///   coefficients `[a, b, c]`.
/// * `custom-table`: sum of conformal bumps, one `[x, y, radius, amplitude]` row each.
/// * `potential`: `amplitude · Dp` for the bump 1-form `p = χ(a dy/y + b dx/y)`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    #[serde(default = "default_kind")]
    pub kind: PerturbationKind,
    #[serde(default = "default_center")]
    pub center: [f64; 2],
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "default_decay")]
    pub decay: f64,
    #[serde(default = "default_coefficients")]
    pub coefficients: [f64; 3],
    #[serde(default)]
    pub table: Vec<[f64; 4]>,
}

fn default_kind() -> PerturbationKind {
    PerturbationKind::ConformalBump
}
fn default_center() -> [f64; 2] {
    [-0.25, 0.2]
}
fn default_radius() -> f64 {
    0.35
}
fn one() -> f64 {
    1.0
}
fn default_decay() -> f64 {
    2.0
}
fn default_coefficients() -> [f64; 3] {
    [1.0, 0.0, 1.0]
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        PerturbationSpec {
            kind: default_kind(),
            center: default_center(),
            radius: default_radius(),
            amplitude: 1.0,
            decay: default_decay(),
            coefficients: default_coefficients(),
            table: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct IndicialSpec {
    #[serde(default = "default_d")]
    pub d: usize,
    /// Defaults to 0.05 and d − 0.05.
    pub re_min: Option<f64>,
    pub re_max: Option<f64>,
    #[serde(default = "default_im_max")]
    pub im_max: f64,
    #[serde(default = "default_n")]
    pub n_re: usize,
    #[serde(default = "default_n")]
    pub n_im: usize,
    /// Random strip points for the H recurrence check.
    #[serde(default = "default_identity_points")]
    pub identity_points: usize,
}

fn default_d() -> usize {
    1
}
fn default_im_max() -> f64 {
    20.0
}
fn default_n() -> usize {
    50
}
fn default_identity_points() -> usize {
    20
}

impl Default for IndicialSpec {
    fn default() -> Self {
        IndicialSpec {
            d: 1,
            re_min: None,
            re_max: None,
            im_max: default_im_max(),
            n_re: default_n(),
            n_im: default_n(),
            identity_points: default_identity_points(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum LivsicInput {
    /// `Xv` for a bump 1-form `v`.
    Coboundary,
    /// `f ≡ 1`.
    Constant,
    /// `Xv + 2^{−k} h₀` for the listed `k`, with the interpolation report.
    Family,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LivsicSpec {
    #[serde(default = "default_livsic_eps")]
    pub eps: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_word_len")]
    pub max_word_len: usize,
    #[serde(default = "default_candidates")]
    pub max_candidates: usize,
    #[serde(default = "default_grid")]
    pub grid: [usize; 3],
    #[serde(default = "default_input")]
    pub input: LivsicInput,
    #[serde(default = "default_family")]
    pub family: Vec<u32>,
}

fn default_livsic_eps() -> f64 {
    1e-3
}
fn default_eta() -> f64 {
    0.1
}
fn default_beta() -> f64 {
    0.3
}
fn default_nu() -> f64 {
    0.25
}
fn default_delta() -> f64 {
    0.25
}
fn default_word_len() -> usize {
    10
}
fn default_candidates() -> usize {
    48
}
fn default_grid() -> [usize; 3] {
    [12, 12, 16]
}
fn default_input() -> LivsicInput {
    LivsicInput::Coboundary
}
fn default_family() -> Vec<u32> {
    vec![0, 1, 2, 3, 4]
}

impl Default for LivsicSpec {
    fn default() -> Self {
        LivsicSpec {
            eps: default_livsic_eps(),
            eta: default_eta(),
            beta: default_beta(),
            nu: default_nu(),
            delta: default_delta(),
            max_word_len: default_word_len(),
            max_candidates: default_candidates(),
            grid: default_grid(),
            input: default_input(),
            family: default_family(),
        }
    }
}

impl LivsicSpec {
    pub fn options(&self) -> LivsicOptions {
        LivsicOptions {
            eps: self.eps,
            eta: self.eta,
            beta: self.beta,
            nu: self.nu,
            delta: self.delta,
            max_word_len: self.max_word_len,
            max_candidates: self.max_candidates,
            grid: self.grid,
            ..LivsicOptions::default()
        }
    }
}

/// Trajectory dump of the flow of `g + eps·f` from `start = [x, y, ψ]`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    #[serde(default = "default_start")]
    pub start: [f64; 3],
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub eps: f64,
}

fn default_start() -> [f64; 3] {
    [0.1, 0.3, 0.4]
}
fn default_t_max() -> f64 {
    10.0
}
fn default_dt() -> f64 {
    0.1
}

impl Default for FlowSpec {
    fn default() -> Self {
        FlowSpec { start: default_start(), t_max: default_t_max(), dt: default_dt(), eps: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    #[serde(default = "default_rtol")]
    pub ode_rtol: f64,
    #[serde(default = "default_atol")]
    pub ode_atol: f64,
    #[serde(default = "default_grad")]
    pub grad_tol: f64,
}

fn default_rtol() -> f64 {
    1e-12
}
fn default_atol() -> f64 {
    1e-13
}
fn default_grad() -> f64 {
    1e-9
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        ToleranceSpec { ode_rtol: default_rtol(), ode_atol: default_atol(), grad_tol: default_grad() }
    }
}

impl ToleranceSpec {
    pub fn ode(&self) -> Tolerance {
        Tolerance { rtol: self.ode_rtol, atol: self.ode_atol, ..Tolerance::default() }
    }

    pub fn finder(&self) -> FinderOptions {
        FinderOptions { grad_tol: self.grad_tol, ode_tol: self.ode(), ..FinderOptions::default() }
    }

    pub fn scaled(&self, x: f64) -> ToleranceSpec {
        ToleranceSpec { ode_rtol: self.ode_rtol * x, ode_atol: self.ode_atol * x, grad_tol: self.grad_tol * x }
    }
}

/// Parsed configuration together with its source text (for error locations).
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub source: Option<String>,
}

impl LoadedConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Io(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let at = e.span().map(|s| line_col(text, s.start));
            match at {
                Some((l, c)) => LabError::input(format!("config line {l}, column {c}: {}", e.message().trim())),
                None => LabError::input(format!("config: {}", e.message().trim())),
            }
        })?;
        let loaded = LoadedConfig { config, source: Some(text.to_string()) };
        loaded.validate()?;
        Ok(loaded)
    }

    pub fn defaults() -> Self {
        LoadedConfig { config: ExperimentConfig::default(), source: None }
    }

    /// `config line N: …` when the key is present in the file.
    fn err(&self, section: Option<&str>, key: &str, msg: String) -> LabError {
        let path = match section {
            Some(s) => format!("{s}.{key}"),
            None => key.to_string(),
        };
        match self.source.as_deref().and_then(|s| locate_key(s, section, key)) {
            Some(line) => LabError::input(format!("config line {line}: {path} {msg}")),
            None => LabError::input(format!("config: {path} {msg}")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        let t = &c.tolerances;
        for (k, v) in [("ode_rtol", t.ode_rtol), ("ode_atol", t.ode_atol), ("grad_tol", t.grad_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(self.err(Some("tolerances"), k, format!("must be > 0 (got {v})")));
            }
        }
        if c.eps_ladder.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(self.err(None, "eps_ladder", "values must be positive".into()));
        }
        if let Some(h) = c.surface.cusp_height {
            if !(h > 0.0) {
                return Err(self.err(Some("surface"), "cusp_height", format!("must be > 0 (got {h})")));
            }
        }
        let p = &c.perturbation;
        if !(p.radius > 0.0) {
            return Err(self.err(Some("perturbation"), "radius", format!("must be > 0 (got {})", p.radius)));
        }
        if !(p.center[1] > 0.0) {
            return Err(self.err(Some("perturbation"), "center", "needs y > 0".into()));
        }
        if !(p.decay >= 0.0) {
            return Err(self.err(Some("perturbation"), "decay", format!("must be ≥ 0 (got {})", p.decay)));
        }
        if p.kind == PerturbationKind::CustomTable && p.table.is_empty() {
            return Err(self.err(
                Some("perturbation"),
                "table",
                "needs at least one [x, y, radius, amplitude] row".into(),
            ));
        }
        if p.table.iter().any(|r| !(r[1] > 0.0 && r[2] > 0.0)) {
            return Err(self.err(Some("perturbation"), "table", "rows need y > 0 and radius > 0".into()));
        }
        let ind = &c.indicial;
        if ind.d == 0 {
            return Err(self.err(Some("indicial"), "d", "must be ≥ 1 (got 0)".into()));
        }
        if ind.n_re == 0 || ind.n_im == 0 {
            return Err(self.err(Some("indicial"), if ind.n_re == 0 { "n_re" } else { "n_im" }, "must be ≥ 1".into()));
        }
        if !(ind.im_max >= 0.0) {
            return Err(self.err(Some("indicial"), "im_max", "must be ≥ 0".into()));
        }
        if let (Some(lo), Some(hi)) = (ind.re_min, ind.re_max) {
            if lo > hi {
                return Err(self.err(Some("indicial"), "re_min", format!("exceeds re_max ({lo} > {hi})")));
            }
        }
        let l = &c.livsic;
        let checks: [(&str, bool, String); 6] = [
            ("eps", l.eps > 0.0 && l.eps < 1.0, format!("must lie in (0, 1) (got {})", l.eps)),
            ("eta", l.eta > 0.0, format!("must be > 0 (got {})", l.eta)),
            ("beta", l.beta > 0.0 && l.beta < 0.5, format!("must lie in (0, 1/2) (got {})", l.beta)),
            ("nu", l.nu > 0.0, format!("must be > 0 (got {})", l.nu)),
            ("delta", l.delta > 0.0, format!("must be > 0 (got {})", l.delta)),
            ("max_candidates", l.max_candidates > 0, "must be ≥ 1".into()),
        ];
        for (k, ok, msg) in checks {
            if !ok {
                return Err(self.err(Some("livsic"), k, msg));
            }
        }
        if l.grid.contains(&0) {
            return Err(self.err(Some("livsic"), "grid", "entries must be ≥ 1".into()));
        }
        let f = &c.flow;
        if !(f.start[1] > 0.0) {
            return Err(self.err(Some("flow"), "start", "needs y > 0".into()));
        }
        if !(f.dt > 0.0) || !(f.t_max >= 0.0) {
            return Err(self.err(Some("flow"), if f.dt > 0.0 { "t_max" } else { "dt" }, "must be positive".into()));
        }
        Ok(())
    }

    /// 1-based line of `class[index]` in the file, if it can be found.
    pub fn class_line(&self, index: usize) -> Option<usize> {
        let src = self.source.as_deref()?;
        let start = locate_key(src, None, "classes")?;
        let word = self.config.classes.get(index)?;
        let quoted = format!("\"{word}\"");
        src.lines().enumerate().skip(start - 1).find(|(_, l)| l.contains(&quoted)).map(|(i, _)| i + 1)
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.chars().count(), |i| before[i + 1..].chars().count()) + 1;
    (line, col)
}

/// Line of `key = …` inside `[section]` (or before any section header).
fn locate_key(src: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = Some(line.trim_matches(|c| c == '[' || c == ']').trim().to_string());
            continue;
        }
        let Some((k, _)) = line.split_once('=') else { continue };
        if k.trim() == key && current.as_deref() == section {
            return Some(i + 1);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        LoadedConfig::defaults().validate().unwrap();
        let c = LoadedConfig::from_str("").unwrap();
        assert_eq!(c.config, ExperimentConfig::default());
    }

    #[test]
    fn syntax_errors_name_the_line() {
        let e = LoadedConfig::from_str("seed = 3\nclasses = [\"a\",\n  \"b\"\n[tolerances]\n").unwrap_err();
        assert!(e.to_string().contains("config line"), "{e}");
        let e = LoadedConfig::from_str("seed = 1\nbogus = 2\n").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }

    #[test]
    fn semantic_errors_name_the_line() {
        let src = "seed = 1\n\n[tolerances]\node_rtol = 1e-10\ngrad_tol = -1.0\n";
        let e = LoadedConfig::from_str(src).unwrap_err();
        assert_eq!(e.to_string(), "invalid input: config line 5: tolerances.grad_tol must be > 0 (got -1)");
        let e = LoadedConfig::from_str("[indicial]\nd = 0\n").unwrap_err();
        assert!(e.to_string().contains("config line 2: indicial.d"), "{e}");
    }

    #[test]
    fn class_lines_are_found() {
        let c = LoadedConfig::from_str("classes = [\n  \"a\",\n  \"xyz\",\n]\n").unwrap();
        assert_eq!(c.class_line(1), Some(3));
    }

    #[test]
    fn explicit_generators() {
        let src = "[surface]\ngenerators = [[1.0, 2.0, 0.0, 1.0], [1.0, 0.0, 2.0, 1.0]]\n";
        let c = LoadedConfig::from_str(src).unwrap();
        let s = c.config.surface.build().unwrap();
        assert!((s.width - 2.0).abs() < 1e-12);
        let both = "[surface]\npreset = \"thrice-punctured\"\ngenerators = [[1.0, 2.0, 0.0, 1.0]]\n";
        let c = LoadedConfig::from_str(both).unwrap();
        assert!(c.config.surface.build().is_err());
    }

    #[test]
    fn scaling_tolerances() {
        let t = ToleranceSpec::default().scaled(10.0);
        assert!((t.ode_rtol - 1e-11).abs() < 1e-25 && (t.grad_tol - 1e-8).abs() < 1e-22);
    }
}
