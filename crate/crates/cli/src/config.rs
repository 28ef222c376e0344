//! Analysis configuration: one TOML document holding the grid, the converters
//! and per-command study options.

use std::fmt;
use std::path::Path;

use gscr_core::network::{Branch, BuildOptions, DeviceSpec, GridSpec, System, Weighting, GROUND};
use gscr_core::smallsignal::{ControlMode, DeviceModel, Pathway, PiGains};
use gscr_core::studies::{CalibrationSpec, ParamPath, RandomSystemOptions};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigErrorKind {
    Io,
    Syntax,
    Schema,
    UnknownKey,
    CrossReference,
    Validation,
}

impl fmt::Display for ConfigErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConfigErrorKind::Io => "cannot read config",
            ConfigErrorKind::Syntax => "syntax error",
            ConfigErrorKind::Schema => "schema error",
            ConfigErrorKind::UnknownKey => "unknown key",
            ConfigErrorKind::CrossReference => "cross-reference error",
            ConfigErrorKind::Validation => "validation error",
        })
    }
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("{path}: {kind}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub kind: ConfigErrorKind,
    pub message: String,
}

fn default_frequency() -> f64 {
    50.0
}

fn one() -> f64 {
    1.0
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Base {
    #[serde(default = "default_frequency")]
    pub frequency_hz: f64,
    /// System power base in MVA; device capacities are per-unit on it.
    #[serde(default = "one")]
    pub s_base: f64,
}

impl Default for Base {
    fn default() -> Self {
        Base { frequency_hz: default_frequency(), s_base: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub buses: Vec<String>,
    pub branches: Vec<Branch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub current: PiGains,
    /// PI block of the phase-locked loop.
    pub pll: PiGains,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<PiGains>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dc_voltage: Option<PiGains>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub bus: String,
    pub s_b: f64,
    pub p_b: f64,
    #[serde(default)]
    pub q_b: f64,
    #[serde(default = "one")]
    pub u: f64,
    pub control_mode: ControlMode,
    pub gains: Gains,
    pub l_f: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub c_f: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_dc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_dc: Option<f64>,
}

impl Device {
    pub fn label(&self, i: usize) -> String {
        self.name.clone().unwrap_or_else(|| format!("VSC{}", i + 1))
    }

    fn model(&self, frequency_hz: f64) -> DeviceModel {
        DeviceModel {
            control_mode: self.control_mode,
            current: self.gains.current,
            pll: self.gains.pll,
            power: self.gains.power,
            dc_voltage: self.gains.dc_voltage,
            l_f: self.l_f,
            c_f: self.c_f,
            c_dc: self.c_dc,
            u_dc: self.u_dc,
            base_frequency: frequency_hz,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Critical SCR the dc-link capacitance is fitted to.
    pub target: f64,
    pub c_dc_bracket: [f64; 2],
}

/// `points` evenly spaced values from `start` to `stop` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Range {
    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => vec![],
            1 => vec![self.start],
            n => (0..n).map(|i| self.start + (self.stop - self.start) * i as f64 / (n - 1) as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CscrStudy {
    #[serde(default = "CscrStudy::default_bracket")]
    pub bracket: [f64; 2],
    /// Damping-ratio sweep over SCR.
    #[serde(default = "CscrStudy::default_sweep")]
    pub sweep: Range,
}

impl CscrStudy {
    fn default_bracket() -> [f64; 2] {
        [1.0, 10.0]
    }

    fn default_sweep() -> Range {
        Range { start: 1.0, stop: 10.0, points: 91 }
    }
}

impl Default for CscrStudy {
    fn default() -> Self {
        CscrStudy { bracket: Self::default_bracket(), sweep: Self::default_sweep() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepStudy {
    /// `scr` for the damping sweep of the weakest equivalent system, otherwise
    /// `p_b:<i>`, `s_b:<i>` or `branch:<k>` (1-based).
    #[serde(default = "SweepStudy::default_path")]
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<Range>,
}

impl SweepStudy {
    fn default_path() -> String {
        "p_b:1".into()
    }
}

impl Default for SweepStudy {
    fn default() -> Self {
        SweepStudy { path: Self::default_path(), values: None, range: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModesStudy {
    /// Also solve the model with explicit branch-current states.
    #[serde(default = "yes")]
    pub include_full: bool,
    /// Stability verdict (index route cross-checked against the spectrum).
    #[serde(default = "yes")]
    pub verdict: bool,
}

fn yes() -> bool {
    true
}

impl Default for ModesStudy {
    fn default() -> Self {
        ModesStudy { include_full: true, verdict: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyStudy {
    #[serde(default = "VerifyStudy::default_seed")]
    pub seed: u64,
    /// Randomized systems for the verdict-consistency suite.
    #[serde(default = "VerifyStudy::default_verdict_systems")]
    pub verdict_systems: usize,
    /// Randomized systems for the sensitivity suite.
    #[serde(default = "VerifyStudy::default_sensitivity_systems")]
    pub sensitivity_systems: usize,
    #[serde(default = "VerifyStudy::default_fd_step")]
    pub fd_step: f64,
    #[serde(default = "VerifyStudy::default_fd_tolerance")]
    pub fd_tolerance: f64,
    /// Angle spread for the coupling-size check.
    #[serde(default = "VerifyStudy::default_theta_spread")]
    pub theta_spread: f64,
    #[serde(default = "VerifyStudy::default_frobenius_limit")]
    pub frobenius_limit: f64,
    #[serde(default)]
    pub random: RandomSystemOptions,
}

impl VerifyStudy {
    fn default_seed() -> u64 {
        1
    }
    fn default_verdict_systems() -> usize {
        50
    }
    fn default_sensitivity_systems() -> usize {
        200
    }
    fn default_fd_step() -> f64 {
        1e-5
    }
    fn default_fd_tolerance() -> f64 {
        1e-5
    }
    fn default_theta_spread() -> f64 {
        0.02
    }
    fn default_frobenius_limit() -> f64 {
        0.05
    }
}

impl Default for VerifyStudy {
    fn default() -> Self {
        VerifyStudy {
            seed: Self::default_seed(),
            verdict_systems: Self::default_verdict_systems(),
            sensitivity_systems: Self::default_sensitivity_systems(),
            fd_step: Self::default_fd_step(),
            fd_tolerance: Self::default_fd_tolerance(),
            theta_spread: Self::default_theta_spread(),
            frobenius_limit: Self::default_frobenius_limit(),
            random: RandomSystemOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Study {
    /// Operating-point weighting of the OgSCR matrix.
    #[serde(default)]
    pub weighting: Weighting,
    #[serde(default)]
    pub pathway: Pathway,
    #[serde(default)]
    pub include_filter_shunt: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
    #[serde(default)]
    pub cscr: CscrStudy,
    #[serde(default)]
    pub sweep: SweepStudy,
    #[serde(default)]
    pub modes: ModesStudy,
    #[serde(default)]
    pub verify: VerifyStudy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    #[serde(default)]
    pub base: Base,
    pub grid: Grid,
    pub devices: Vec<Device>,
    #[serde(default)]
    pub study: Study,
}

/// A parsed and validated configuration.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub path: String,
    pub config: AnalysisConfig,
    /// Keys absent from the file and filled with defaults.
    pub defaults_applied: Vec<String>,
    /// Unknown keys tolerated in lenient mode.
    pub warnings: Vec<String>,
    pub hash: String,
}

/// Reads `path`; a path that does not exist but names a bundled configuration
/// loads that one.
pub fn load(path: &Path, strict: bool) -> Result<Loaded, ConfigError> {
    if !path.exists() {
        if let Some(text) = path.to_str().and_then(bundled) {
            return parse_str(text, &format!("{} (bundled)", path.display()), strict);
        }
    }
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: shown.clone(),
        kind: ConfigErrorKind::Io,
        message: e.to_string(),
    })?;
    parse_str(&text, &shown, strict)
}

pub fn parse_str(text: &str, path: &str, strict: bool) -> Result<Loaded, ConfigError> {
    let err = |kind, message: String| ConfigError { path: path.to_string(), kind, message };
    let raw: toml::Table = toml::from_str(text).map_err(|e| err(ConfigErrorKind::Syntax, e.message().to_string()))?;

    let mut unknown = Vec::new();
    let de = toml::Deserializer::new(text);
    let mut track = |p: serde_ignored::Path| unknown.push(p.to_string());
    let ignored = serde_ignored::Deserializer::new(de, &mut track);
    let config: AnalysisConfig = serde_path_to_error::deserialize(ignored).map_err(|e| {
        let at = e.path().to_string();
        let inner = e.into_inner();
        err(ConfigErrorKind::Schema, format!("at `{at}`: {}", inner.message()))
    })?;
    if strict && !unknown.is_empty() {
        return Err(err(
            ConfigErrorKind::UnknownKey,
            unknown.iter().map(|k| format!("`{k}`")).collect::<Vec<_>>().join(", "),
        ));
    }
    let warnings = unknown.into_iter().map(|k| format!("ignoring unknown key `{k}`")).collect();

    validate(&config).map_err(|(kind, m)| err(kind, m))?;

    let resolved = toml::Table::try_from(&config).map_err(|e| err(ConfigErrorKind::Schema, e.to_string()))?;
    let mut defaults_applied = Vec::new();
    missing_keys(&raw, &resolved, "", &mut defaults_applied);
    Ok(Loaded { path: path.to_string(), hash: config_hash(&config), config, defaults_applied, warnings })
}

/// SHA-256 of the resolved configuration in canonical JSON form.
pub fn config_hash(config: &AnalysisConfig) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    format!("{:x}", Sha256::digest(&json))
}

pub fn to_toml(config: &AnalysisConfig) -> String {
    toml::to_string(config).expect("config serializes")
}

fn missing_keys(raw: &toml::Table, resolved: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in resolved {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (raw.get(k), v) {
            (None, _) => out.push(path),
            (Some(toml::Value::Table(r)), toml::Value::Table(t)) => missing_keys(r, t, &path, out),
            (Some(toml::Value::Array(r)), toml::Value::Array(t)) => {
                for (i, (a, b)) in r.iter().zip(t).enumerate() {
                    if let (toml::Value::Table(a), toml::Value::Table(b)) = (a, b) {
                        missing_keys(a, b, &format!("{path}[{i}]"), out);
                    }
                }
            }
            _ => {}
        }
    }
}

type Invalid = (ConfigErrorKind, String);

fn validate(c: &AnalysisConfig) -> Result<(), Invalid> {
    use ConfigErrorKind::{CrossReference, Validation};
    let bad = |m: String| Err((Validation, m));
    if !(c.base.frequency_hz > 0.0 && c.base.frequency_hz.is_finite()) {
        return bad(format!("base.frequency_hz must be positive, got {}", c.base.frequency_hz));
    }
    if !(c.base.s_base > 0.0 && c.base.s_base.is_finite()) {
        return bad(format!("base.s_base must be positive, got {}", c.base.s_base));
    }
    if c.devices.is_empty() {
        return bad("devices: at least one device is required".into());
    }
    for (k, br) in c.grid.branches.iter().enumerate() {
        for end in [&br.from, &br.to] {
            if end != GROUND && !c.grid.buses.contains(end) {
                return Err((CrossReference, format!("grid.branches[{k}] references unknown bus {end:?}")));
            }
        }
    }
    for (i, d) in c.devices.iter().enumerate() {
        if !c.grid.buses.contains(&d.bus) {
            return Err((CrossReference, format!("devices[{i}] references unknown bus {:?}", d.bus)));
        }
        if c.devices[..i].iter().any(|o| o.bus == d.bus) {
            return bad(format!("devices[{i}]: bus {:?} already has a device", d.bus));
        }
    }
    if let Some(cal) = &c.study.calibration {
        let [lo, hi] = cal.c_dc_bracket;
        if !(lo > 0.0 && hi > lo && cal.target > 0.0) {
            return bad(format!(
                "study.calibration: need 0 < c_dc_bracket[0] < c_dc_bracket[1] and target > 0, got [{lo}, {hi}], {}",
                cal.target
            ));
        }
        if c.devices.iter().any(|d| d.control_mode != ControlMode::DcVoltage) {
            return bad("study.calibration needs dc_voltage devices".into());
        }
    }
    let [lo, hi] = c.study.cscr.bracket;
    if !(lo > 0.0 && hi > lo) {
        return bad(format!("study.cscr.bracket must satisfy 0 < lo < hi, got [{lo}, {hi}]"));
    }
    let s = &c.study.sweep;
    if s.values.is_some() && s.range.is_some() {
        return bad("study.sweep: give either values or range, not both".into());
    }
    if s.path != "scr" {
        let p: ParamPath =
            s.path.parse().map_err(|e: gscr_core::Error| (Validation, format!("study.sweep.path: {e}")))?;
        let (i, n, what) = match p {
            ParamPath::Power(i) | ParamPath::Capacity(i) => (i, c.devices.len(), "device"),
            ParamPath::Branch(k) => (k, c.grid.branches.len(), "branch"),
        };
        if i >= n {
            return Err((CrossReference, format!("study.sweep.path {:?}: no {what} {} (have {n})", s.path, i + 1)));
        }
    }
    let v = &c.study.verify;
    if !(v.fd_step > 0.0 && v.fd_step < 0.1) {
        return bad(format!("study.verify.fd_step must be in (0, 0.1), got {}", v.fd_step));
    }
    if !(v.theta_spread >= 0.0 && v.theta_spread < 1.0) {
        return bad(format!("study.verify.theta_spread must be in [0, 1), got {}", v.theta_spread));
    }
    // Build once so that grid and device errors surface as configuration errors.
    build_system(c, placeholder_c_dc(c)).map_err(|e| (Validation, e.to_string()))?;
    Ok(())
}

fn placeholder_c_dc(c: &AnalysisConfig) -> Option<f64> {
    c.study.calibration.map(|cal| cal.c_dc_bracket[0])
}

impl AnalysisConfig {
    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            base_frequency: self.base.frequency_hz,
            buses: self.grid.buses.clone(),
            branches: self.grid.branches.clone(),
        }
    }

    /// Converter model of device `i`, with `c_dc` (when given) replacing the
    /// configured dc-link capacitance.
    pub fn model(&self, i: usize, c_dc: Option<f64>) -> DeviceModel {
        let mut m = self.devices[i].model(self.base.frequency_hz);
        if c_dc.is_some() {
            m.c_dc = c_dc;
        }
        m
    }

    pub fn labels(&self) -> Vec<String> {
        self.devices.iter().enumerate().map(|(i, d)| d.label(i)).collect()
    }

    pub fn calibration_spec(&self) -> Option<CalibrationSpec> {
        self.study.calibration.map(|c| CalibrationSpec {
            target: c.target,
            c_dc_bracket: c.c_dc_bracket,
            scr_bracket: self.study.cscr.bracket,
        })
    }

    pub fn sweep_values(&self) -> Vec<f64> {
        let s = &self.study.sweep;
        match (&s.values, &s.range) {
            (Some(v), _) => v.clone(),
            (None, Some(r)) => r.values(),
            (None, None) => Range { start: 0.5, stop: 1.2, points: 41 }.values(),
        }
    }
}

/// The system described by `c`, with `c_dc` (when given) on every device.
pub fn build_system(c: &AnalysisConfig, c_dc: Option<f64>) -> gscr_core::Result<System> {
    let devices = c
        .devices
        .iter()
        .enumerate()
        .map(|(i, d)| DeviceSpec {
            bus: d.bus.clone(),
            s_b: d.s_b,
            p_b: d.p_b,
            q_b: d.q_b,
            u: d.u,
            model: c.model(i, c_dc),
        })
        .collect();
    System::with_options(c.grid_spec(), devices, BuildOptions { include_filter_shunt: c.study.include_filter_shunt })
}

pub const BUNDLED: [(&str, &str); 2] = [
    ("paper_5vsc", include_str!("../configs/paper_5vsc.toml")),
    ("single_vsc", include_str!("../configs/single_vsc.toml")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
