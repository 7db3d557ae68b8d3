//! TOML experiment descriptions and the shipped figure presets.
//!
//! ```toml
//! run_id = "bump-alpha0"
//! command = "simulate"
//! mass = 4.0
//!
//! [model]
//! variant = "single_factor"
//! kernel = "gaussian"
//! alpha = 0.0
//! m = "rational_bump"
//!
//! [grid]
//! R = 10.0
//! M = 401
//!
//! [time]
//! T = 4000.0
//! scheme = "rk4"
//! ```
//!
//! Profiles are written as a bare name (`"two_patch"`), a name with
//! parameters (`{ name = "exponential", a = 0.0693 }`), an expression in `x`
//! (`{ expr = "1 + x^2/100" }`) or a table of points
//! (`{ table = [[-10, 1.0], [10, 2.0]] }`).

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::jumpmodel::JumpRateModel;
use crate::kernels::DispersalKernel;
use crate::local::LocalDiffusionSpec;
use crate::profile::Profile;
use crate::timestep::Scheme;

/// Environment variable that overrides the output root.
pub const OUTPUT_ENV: &str = "NDL_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    SimulateLocal,
    Steady,
    Predict,
    LimitStudy,
    Moments,
    StratCheck,
    Tails,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::SimulateLocal => "simulate-local",
            Command::Steady => "steady",
            Command::Predict => "predict",
            Command::LimitStudy => "limit-study",
            Command::Moments => "moments",
            Command::StratCheck => "strat-check",
            Command::Tails => "tails",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::invalid(format!("unknown command `{s}`")))
    }
}

/// One run, or a sweep of runs, read from a TOML file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run_id: String,
    /// Subcommand used when the file is run as a preset.
    pub command: Option<Command>,
    pub preset: Option<String>,
    /// Total mass `h Σ u` of the initial datum.
    #[serde(default = "default_mass")]
    pub mass: f64,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    pub sweep: Option<SweepConfig>,
    pub law: Option<LawConfig>,
    pub study: Option<StudyConfig>,
    pub strat: Option<StratConfig>,
    pub tails: Option<TailsConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_mass() -> f64 {
    4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    Homogeneous,
    #[default]
    SingleFactor,
    TwoFactor,
    Stratonovich,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default)]
    pub variant: VariantName,
    #[serde(default = "default_kernel")]
    pub kernel: String,
    pub alpha: Option<f64>,
    pub alpha_prime: Option<f64>,
    pub m: Option<ProfileSpec>,
    pub nu: Option<ProfileSpec>,
    pub g: Option<ProfileSpec>,
    pub h: Option<ProfileSpec>,
}

fn default_kernel() -> String {
    "gaussian".into()
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: VariantName::Homogeneous,
            kernel: default_kernel(),
            alpha: None,
            alpha_prime: None,
            m: None,
            nu: None,
            g: None,
            h: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Name(String),
    Expr { expr: String },
    Table { table: Vec<[f64; 2]> },
    Named {
        name: String,
        #[serde(flatten)]
        params: BTreeMap<String, f64>,
    },
}

impl ProfileSpec {
    pub fn build(&self, field: &str) -> Result<Profile> {
        let cfg = |message: String| Error::Config {
            field: field.to_string(),
            message,
        };
        match self {
            ProfileSpec::Name(name) => named_profile(name, &BTreeMap::new()).map_err(cfg),
            ProfileSpec::Named { name, params } => named_profile(name, params).map_err(cfg),
            ProfileSpec::Expr { expr } => Profile::expr(expr).map_err(|e| cfg(e.to_string())),
            ProfileSpec::Table { table } => {
                let pts: Vec<(f64, f64)> = table.iter().map(|p| (p[0], p[1])).collect();
                Profile::table(&pts).map_err(|e| cfg(e.to_string()))
            }
        }
    }
}

fn named_profile(name: &str, params: &BTreeMap<String, f64>) -> std::result::Result<Profile, String> {
    let allowed: &[&str] = match name {
        "rational_bump" | "two_patch" => &["scale"],
        "quadratic_growth" | "constant" => &["c", "scale"],
        "exponential" | "gaussian" => &["a", "scale"],
        _ => return Err(format!("unknown profile `{name}`")),
    };
    if let Some(bad) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(format!("profile `{name}` takes no parameter `{bad}`"));
    }
    let need = |k: &str| params.get(k).copied().ok_or_else(|| format!("profile `{name}` needs `{k}`"));
    let p = match name {
        "rational_bump" => Profile::RationalBump,
        "two_patch" => Profile::TwoPatch,
        "quadratic_growth" => Profile::QuadraticGrowth {
            c: params.get("c").copied().unwrap_or(0.01),
        },
        "constant" => Profile::constant(need("c")?),
        "exponential" => Profile::Exponential { a: need("a")? },
        _ => Profile::GaussianProfile { a: need("a")? },
    };
    Ok(match params.get("scale") {
        Some(&s) => p.scaled(s),
        None => p,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "R")]
    pub radius: f64,
    #[serde(rename = "M")]
    pub nodes: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            radius: 10.0,
            nodes: 401,
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid1D> {
        Grid1D::new(self.radius, self.nodes).map_err(|e| Error::Config {
            field: "grid".into(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(rename = "T")]
    pub t_end: f64,
    /// Defaults to the operator's own default step.
    pub dt: Option<f64>,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default)]
    pub snapshots: Vec<f64>,
}

fn default_scheme() -> Scheme {
    Scheme::Rk4
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            t_end: 4000.0,
            dt: None,
            scheme: Scheme::Rk4,
            snapshots: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    /// Constant on the grid.
    #[default]
    Uniform,
    /// The model's `m`.
    M,
    /// `(1 − (x/2)²)⁴` on `|x| < 2`.
    Bump,
    /// The expression in `expr`.
    Expr,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default)]
    pub kind: InitialKind,
    pub expr: Option<String>,
    /// Rescale to `mass`; when false the datum is used as given.
    #[serde(default = "yes")]
    pub normalize: bool,
}

fn yes() -> bool {
    true
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            kind: InitialKind::Uniform,
            expr: None,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub alpha: Option<Vec<f64>>,
    pub kernels: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawConfig {
    pub q: f64,
    pub q_prime: Option<f64>,
    #[serde(rename = "D")]
    pub d: ProfileSpec,
    pub nu: Option<ProfileSpec>,
}

impl LawConfig {
    pub fn build(&self) -> Result<LocalDiffusionSpec> {
        let d = self.d.build("law.D")?;
        match (self.q_prime, &self.nu) {
            (None, None) => Ok(LocalDiffusionSpec::single(self.q, d)),
            (Some(qp), Some(nu)) => Ok(LocalDiffusionSpec::two_factor(self.q, qp, d, nu.build("law.nu")?)),
            _ => Err(Error::Config {
                field: "law".into(),
                message: "q_prime and nu must be given together".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(rename = "T", default = "one")]
    pub t_end: f64,
}

fn default_epsilons() -> Vec<f64> {
    vec![0.4, 0.2, 0.1, 0.05]
}

fn one() -> f64 {
    1.0
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            epsilons: default_epsilons(),
            t_end: 1.0,
        }
    }
}

/// Grid sizes for `strat-check`, each halving the previous spacing; the
/// resource is `model.h` and the domain is `[grid]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StratConfig {
    #[serde(rename = "M", default = "default_strat_nodes")]
    pub nodes: Vec<usize>,
}

fn default_strat_nodes() -> Vec<usize> {
    vec![101, 201, 401, 801]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailsConfig {
    #[serde(default = "default_tail_kernels")]
    pub kernels: Vec<String>,
    #[serde(default)]
    pub x0: f64,
    /// Differences `u_i − u_j` to record, as 1-based kernel positions.
    #[serde(default = "default_pairs")]
    pub pairs: Vec<[usize; 2]>,
}

fn default_tail_kernels() -> Vec<String> {
    ["gaussian", "laplace", "quartic", "heavy_tail"].map(String::from).to_vec()
}

fn default_pairs() -> Vec<[usize; 2]> {
    vec![[4, 3], [3, 2]]
}

impl Default for TailsConfig {
    fn default() -> Self {
        Self {
            kernels: default_tail_kernels(),
            x0: 0.0,
            pairs: default_pairs(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_out() }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config {
            field: e.span().map(|s| locate(text, s.start)).unwrap_or_else(|| "<file>".into()),
            message: e.message().to_string(),
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config { field, message } => Error::Config {
                field: format!("{}:{field}", path.display()),
                message,
            },
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    fn check(&self) -> Result<()> {
        let bad = |field: &str, message: String| {
            Err(Error::Config {
                field: field.into(),
                message,
            })
        };
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) || self.run_id.starts_with('.') {
            return bad("run_id", format!("`{}` is not a plain directory name", self.run_id));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return bad("mass", format!("{} must be positive", self.mass));
        }
        if !(self.time.t_end >= 0.0 && self.time.t_end.is_finite()) {
            return bad("time.T", format!("{} must be nonnegative", self.time.t_end));
        }
        if let Some(dt) = self.time.dt {
            if !(dt > 0.0) {
                return bad("time.dt", format!("{dt} must be positive"));
            }
        }
        if self.initial.kind == InitialKind::Expr && self.initial.expr.is_none() {
            return bad("initial.expr", "required when kind = \"expr\"".into());
        }
        Ok(())
    }

    /// The output directory of this run under `root`, or under the configured
    /// directory (itself overridden by `NDL_OUT`) when `root` is `None`.
    pub fn run_dir(&self, root: Option<&Path>) -> PathBuf {
        let base = match root {
            Some(r) => r.to_path_buf(),
            None => std::env::var_os(OUTPUT_ENV).map(PathBuf::from).unwrap_or_else(|| self.output.dir.clone()),
        };
        base.join(&self.run_id)
    }

    pub fn kernel(&self) -> Result<DispersalKernel> {
        DispersalKernel::from_name(&self.model.kernel).map_err(|e| match e {
            Error::InvalidInput(message) => Error::Config {
                field: "model.kernel".into(),
                message,
            },
            other => other,
        })
    }

    fn profile(&self, spec: &Option<ProfileSpec>, field: &str) -> Result<Profile> {
        spec.as_ref()
            .ok_or_else(|| Error::Config {
                field: field.into(),
                message: "required for this variant".into(),
            })?
            .build(field)
    }

    fn need(&self, v: Option<f64>, field: &str) -> Result<f64> {
        v.ok_or_else(|| Error::Config {
            field: field.into(),
            message: "required for this variant".into(),
        })
    }

    /// Builds the jump-rate model; Stratonovich models are tabulated on `grid`.
    pub fn build_model(&self, grid: &Grid1D) -> Result<JumpRateModel> {
        let k = self.kernel()?;
        let mc = &self.model;
        let model = match mc.variant {
            VariantName::Homogeneous => Ok(JumpRateModel::homogeneous(k)),
            VariantName::SingleFactor => JumpRateModel::single_factor(
                k,
                self.need(mc.alpha, "model.alpha")?,
                self.profile(&mc.m, "model.m")?,
            ),
            VariantName::TwoFactor => JumpRateModel::two_factor(
                k,
                self.need(mc.alpha, "model.alpha")?,
                self.need(mc.alpha_prime, "model.alpha_prime")?,
                self.profile(&mc.nu, "model.nu")?,
                self.profile(&mc.g, "model.g")?,
            ),
            VariantName::Stratonovich => JumpRateModel::stratonovich(k, self.profile(&mc.h, "model.h")?, grid),
        };
        model.map_err(|e| match e {
            Error::InvalidInput(message) => Error::Config {
                field: "model".into(),
                message,
            },
            other => other,
        })
    }

    /// The local law: the `[law]` table when present, otherwise the law the
    /// model focuses to.
    pub fn build_law(&self, grid: &Grid1D) -> Result<LocalDiffusionSpec> {
        match &self.law {
            Some(l) => l.build(),
            None => LocalDiffusionSpec::from_model(&self.build_model(grid)?),
        }
    }

    /// The initial datum on `grid`.
    pub fn initial_state(&self, grid: &Grid1D) -> Result<Vec<f64>> {
        let u: Vec<f64> = match self.initial.kind {
            InitialKind::Uniform => vec![1.0; grid.len()],
            InitialKind::M => {
                let m = self.profile(&self.model.m, "model.m")?;
                grid.nodes().iter().map(|&x| m.try_eval(x)).collect::<Result<_>>()?
            }
            InitialKind::Bump => grid.sample(crate::analysis::limit_initial_datum),
            InitialKind::Expr => {
                let p = Profile::expr(self.initial.expr.as_deref().unwrap_or_default()).map_err(|e| Error::Config {
                    field: "initial.expr".into(),
                    message: e.to_string(),
                })?;
                grid.sample(|x| p.eval(x))
            }
        };
        if u.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config {
                field: "initial".into(),
                message: "initial datum must be finite and nonnegative on the grid".into(),
            });
        }
        let total = grid.mass(&u);
        if !(total > 0.0) {
            return Err(Error::Config {
                field: "initial".into(),
                message: "initial datum has zero mass".into(),
            });
        }
        Ok(if self.initial.normalize {
            u.iter().map(|v| v * self.mass / total).collect()
        } else {
            u
        })
    }

    /// Expands `[sweep]` into one config per member; run ids gain a suffix.
    pub fn members(&self) -> Vec<ExperimentConfig> {
        let Some(sweep) = &self.sweep else {
            return vec![self.clone()];
        };
        let mut out = vec![self.clone()];
        if let Some(alphas) = &sweep.alpha {
            out = out
                .iter()
                .flat_map(|c| {
                    alphas.iter().map(move |&a| {
                        let mut m = c.clone();
                        m.model.alpha = Some(a);
                        m.run_id = format!("{}-alpha{a}", c.run_id);
                        m
                    })
                })
                .collect();
        }
        if let Some(kernels) = &sweep.kernels {
            out = out
                .iter()
                .flat_map(|c| {
                    kernels.iter().map(move |k| {
                        let mut m = c.clone();
                        m.model.kernel = k.clone();
                        m.run_id = format!("{}-{}", c.run_id, k.replace([':', '/', '\\'], "_"));
                        m
                    })
                })
                .collect();
        }
        for m in &mut out {
            m.sweep = None;
        }
        out
    }
}

/// `line L, column C` of a byte offset.
fn locate(text: &str, offset: usize) -> String {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    format!("line {line}, column {col}")
}

macro_rules! presets {
    ($($name:literal),* $(,)?) => {
        /// Names and TOML sources of the shipped presets.
        pub const PRESETS: &[(&str, &str)] = &[
            $(($name, include_str!(concat!("../../../presets/", $name, ".toml")))),*
        ];
    };
}

presets!(
    "fig1-left",
    "fig1-right",
    "fig2-left",
    "fig2-right",
    "fig3-left",
    "fig3-right",
    "fig4",
    "fig5",
    "fig6",
    "fig7",
    "fig8",
    "limit-chapman",
    "limit-fick",
    "limit-q2",
    "limit-two-factor",
    "strat-check",
);

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let (_, src) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::invalid(format!("unknown preset `{name}`")))?;
    let mut cfg = ExperimentConfig::from_toml(src)?;
    cfg.preset = Some(name.to_string());
    Ok(cfg)
}
