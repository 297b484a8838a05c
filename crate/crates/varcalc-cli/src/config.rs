//! Run configuration, merged in precedence order:
//! built-in defaults ← preset ← JSON config file ← command-line flags.

use std::f64::consts::FRAC_1_SQRT_2;
use std::path::PathBuf;

use serde::Deserialize;

/// Errors with an exit-code contract: configuration problems exit with 2,
/// failures during execution (numerical or I/O) exit with 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config error",
            CliError::Runtime(_) => "runtime failure",
        }
    }
}

impl From<varcalc::Error> for CliError {
    fn from(e: varcalc::Error) -> CliError {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// The configurable commands of the binary (`verify-all` takes no
/// configuration and is dispatched directly).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommandKind {
    Energy,
    Residual,
    PerelmanProfile,
    Classify,
    Geodesic,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Energy => "energy",
            CommandKind::Residual => "residual",
            CommandKind::PerelmanProfile => "perelman-profile",
            CommandKind::Classify => "classify",
            CommandKind::Geodesic => "geodesic",
        }
    }
}

/// A field given either by built-in name or as a coefficient list in the
/// chart's smooth probe basis (9 coefficients on sphere charts, 6 on 2-D
/// flat boxes).
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Named(String),
    Coefficients(Vec<f64>),
}

/// Schema of the JSON config document. Unknown keys are rejected; keys
/// that the invoked command does not consume are ignored.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Command the document is written for; must match the invoked
    /// subcommand when present.
    pub command: Option<String>,
    /// Preset to start from (may also be given as `--preset`).
    pub preset: Option<String>,
    /// Chart: `s2`, `s3`, `polar-annulus`, `flat-box`.
    pub chart: Option<String>,
    /// Functional: `dirichlet`, `perelman`.
    pub functional: Option<String>,
    /// Boundary integrand: `none`, `flux-2v`.
    pub boundary: Option<String>,
    /// Single field (shorthand for `fields` with one entry).
    pub field: Option<FieldSpec>,
    /// Fields for the energy table, one row each.
    pub fields: Option<Vec<FieldSpec>>,
    /// Probe directions for classification: `default`, `random`.
    pub probes: Option<String>,
    /// Number of probe directions.
    pub probe_count: Option<usize>,
    /// Per-axis Gauss order (quadrature) or per-axis node count
    /// (residual lattices).
    pub grid_order: Option<usize>,
    /// ODE / shooting tolerance.
    pub tol: Option<f64>,
    /// Start offset of the profile integration.
    pub epsilon: Option<f64>,
    /// Finite-difference step applied to fields without analytic partials.
    pub fd_step: Option<f64>,
    /// Constant-field scan range (energy command): `E(v ≡ k)` rows.
    pub k_min: Option<i64>,
    pub k_max: Option<i64>,
    /// Conserved cyclic momentum of a geodesic.
    pub gamma: Option<f64>,
    /// Azimuth phase of a geodesic (`δ` on S², `β` on S³).
    pub phase: Option<f64>,
    /// Geodesic branch: `principal`, `extended`.
    pub branch: Option<String>,
    /// Geodesic mode: `closed_form`, `shoot`, `compare`.
    pub mode: Option<String>,
    /// Closed-form sample count.
    pub samples: Option<usize>,
    /// Arclength of a shot geodesic.
    pub length: Option<f64>,
    /// Output path (stdout when absent).
    pub out: Option<PathBuf>,
    /// Output format: `csv`, `json`.
    pub format: Option<String>,
}

macro_rules! overlay_fields {
    ($dst:expr, $src:expr, $($field:ident),+ $(,)?) => {
        $(if $src.$field.is_some() { $dst.$field = $src.$field; })+
    };
}

impl RunConfig {
    /// Overwrite every key that `src` sets.
    pub fn overlay(&mut self, src: RunConfig) {
        overlay_fields!(
            self, src, command, preset, chart, functional, boundary, field, fields, probes,
            probe_count, grid_order, tol, epsilon, fd_step, k_min, k_max, gamma, phase, branch,
            mode, samples, length, out, format,
        );
    }
}

/// Built-in presets; each carries the command it belongs to and encodes the
/// reference constants of the experiment it reproduces.
pub fn preset(name: &str) -> Option<(CommandKind, RunConfig)> {
    let mut cfg = RunConfig::default();
    let kind = match name {
        "perelman-kscan" => {
            cfg.chart = Some("s2".into());
            cfg.functional = Some("perelman".into());
            cfg.grid_order = Some(32);
            cfg.k_min = Some(0);
            cfg.k_max = Some(10);
            CommandKind::Energy
        }
        "perelman-profile" => {
            cfg.epsilon = Some(1e-6);
            cfg.tol = Some(1e-12);
            CommandKind::PerelmanProfile
        }
        "laplace-radial" => {
            cfg.chart = Some("polar-annulus".into());
            cfg.functional = Some("dirichlet".into());
            cfg.field = Some(FieldSpec::Named("ln-r".into()));
            cfg.grid_order = Some(12);
            CommandKind::Residual
        }
        "s2-geodesic" => {
            cfg.chart = Some("s2".into());
            cfg.gamma = Some(FRAC_1_SQRT_2);
            cfg.phase = Some(0.0);
            cfg.branch = Some("principal".into());
            cfg.mode = Some("compare".into());
            cfg.samples = Some(201);
            cfg.tol = Some(1e-12);
            cfg.length = Some(1.0);
            CommandKind::Geodesic
        }
        "s3-geodesic" => {
            cfg.chart = Some("s3".into());
            cfg.gamma = Some(FRAC_1_SQRT_2);
            cfg.phase = Some(0.0);
            cfg.branch = Some("principal".into());
            cfg.mode = Some("closed_form".into());
            cfg.samples = Some(400);
            CommandKind::Geodesic
        }
        "neumann-demo" => {
            cfg.chart = Some("flat-box".into());
            cfg.functional = Some("dirichlet".into());
            cfg.boundary = Some("flux-2v".into());
            cfg.field = Some(FieldSpec::Named("coordinate-0".into()));
            cfg.grid_order = Some(8);
            CommandKind::Residual
        }
        _ => return None,
    };
    Some((kind, cfg))
}

/// Flag overrides accepted by every data-producing subcommand.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct CommonArgs {
    /// JSON config document (schema-checked; unknown keys rejected).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named preset to start from.
    #[arg(long)]
    pub preset: Option<String>,
    /// Per-axis Gauss order / lattice node count.
    #[arg(long = "grid-order")]
    pub grid_order: Option<usize>,
    /// ODE / shooting tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Output path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_parser = ["csv", "json"])]
    pub format: Option<String>,
}

/// Merge defaults ← preset ← config file ← flags for the given command.
pub fn resolve(kind: CommandKind, args: &CommonArgs) -> CliResult<RunConfig> {
    let file_cfg: Option<RunConfig> = match &args.config {
        None => None,
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read config {}: {e}", path.display()))
            })?;
            let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| {
                CliError::Config(format!("invalid config {}: {e}", path.display()))
            })?;
            Some(cfg)
        }
    };

    let mut merged = RunConfig::default();
    let preset_name = args
        .preset
        .clone()
        .or_else(|| file_cfg.as_ref().and_then(|c| c.preset.clone()));
    if let Some(name) = preset_name {
        let (preset_kind, preset_cfg) = preset(&name)
            .ok_or_else(|| CliError::Config(format!("unknown preset '{name}'")))?;
        if preset_kind != kind {
            return Err(CliError::Config(format!(
                "preset '{name}' belongs to the '{}' command, not '{}'",
                preset_kind.name(),
                kind.name()
            )));
        }
        merged.overlay(preset_cfg);
    }

    if let Some(cfg) = file_cfg {
        if let Some(cmd) = &cfg.command {
            if cmd != kind.name() {
                return Err(CliError::Config(format!(
                    "config is for command '{cmd}', but '{}' was invoked",
                    kind.name()
                )));
            }
        }
        merged.overlay(cfg);
    }

    let mut flag_cfg = RunConfig::default();
    flag_cfg.grid_order = args.grid_order;
    flag_cfg.tol = args.tol;
    flag_cfg.out = args.out.clone();
    flag_cfg.format = args.format.clone();
    merged.overlay(flag_cfg);

    validate(kind, &merged)?;
    Ok(merged)
}

fn check_name(key: &str, value: &Option<String>, allowed: &[&str]) -> CliResult<()> {
    if let Some(v) = value {
        if !allowed.contains(&v.as_str()) {
            return Err(CliError::Config(format!(
                "unknown {key} '{v}' (expected one of {})",
                allowed.join(", ")
            )));
        }
    }
    Ok(())
}

fn check_finite(key: &str, value: Option<f64>) -> CliResult<()> {
    if let Some(v) = value {
        if !v.is_finite() {
            return Err(CliError::Config(format!("{key} must be finite, got {v}")));
        }
    }
    Ok(())
}

/// Schema-level validation before any numerics run.
fn validate(kind: CommandKind, cfg: &RunConfig) -> CliResult<()> {
    check_name("chart", &cfg.chart, &["s2", "s3", "polar-annulus", "flat-box"])?;
    check_name("functional", &cfg.functional, &["dirichlet", "perelman"])?;
    check_name("boundary", &cfg.boundary, &["none", "flux-2v"])?;
    check_name("probes", &cfg.probes, &["default", "random"])?;
    check_name("branch", &cfg.branch, &["principal", "extended"])?;
    check_name("mode", &cfg.mode, &["closed_form", "closed-form", "shoot", "compare"])?;
    check_name("format", &cfg.format, &["csv", "json"])?;
    check_finite("tol", cfg.tol)?;
    check_finite("epsilon", cfg.epsilon)?;
    check_finite("fd_step", cfg.fd_step)?;
    check_finite("gamma", cfg.gamma)?;
    check_finite("phase", cfg.phase)?;
    check_finite("length", cfg.length)?;
    if let Some(order) = cfg.grid_order {
        if order == 0 || order > 256 {
            return Err(CliError::Config(format!(
                "grid_order must lie in 1..=256, got {order}"
            )));
        }
    }
    if let (Some(k0), Some(k1)) = (cfg.k_min, cfg.k_max) {
        if k1 < k0 {
            return Err(CliError::Config(format!(
                "k_max = {k1} is below k_min = {k0}"
            )));
        }
    }
    if kind == CommandKind::Geodesic {
        let chart = cfg.chart.as_deref().unwrap_or("s3");
        if chart != "s2" && chart != "s3" {
            return Err(CliError::Config(format!(
                "geodesics need chart s2 or s3, got '{chart}'"
            )));
        }
        let gamma = cfg.gamma.unwrap_or(FRAC_1_SQRT_2);
        let mode = cfg.mode.as_deref().unwrap_or("closed_form");
        let gamma_ok = match chart {
            "s2" => gamma.abs() <= 1.0,
            _ => gamma.abs() < 1.0,
        };
        if !gamma_ok {
            return Err(CliError::Config(format!(
                "gamma = {gamma} is outside the admissible range for {chart}"
            )));
        }
        if mode == "compare" && !(gamma.abs() > 0.0 && gamma.abs() < 1.0) {
            return Err(CliError::Config(
                "compare mode needs 0 < |gamma| < 1 (a proper latitude graph)".into(),
            ));
        }
    }
    if kind == CommandKind::Classify {
        if let Some(f) = &cfg.format {
            if f == "csv" {
                return Err(CliError::Config(
                    "classification reports are emitted as json only".into(),
                ));
            }
        }
    }
    Ok(())
}
