//! Command dispatch: turns a loaded configuration into a report bundle.

use clap::ValueEnum;
use gscr_core::network::{Branch, DeviceSpec, GridSpec, System, ValueKind, Weighting};
use gscr_core::par::Exec;
use gscr_core::reference;
use gscr_core::smallsignal::{frobenius_check, mpeis_modes, NetworkFrequencyCoeffs, NetworkModel, Pathway};
use gscr_core::strength::{participation, scr_single, sensitivities, IndexKind, SensitivityReport};
use gscr_core::studies::{
    calibrate_dc_link, cscr_search, decoupling_verify, index_eigensystem, modes_study, operating_point_with_spread,
    param_sweep, random_system, scr_sweep, sensitivity_audit, stability_assess, Calibration, CriticalIndex,
    DecouplingReport, ModesReport, ParamPath, StabilityVerdict, SvisLoading, SweepResult,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{build_system, AnalysisConfig, ConfigError, Loaded};

pub const TOOL: &str = "gscr";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// gSCR/OgSCR spectra, participation factors and sensitivities
    Strength,
    /// Decoupled and multi-infeed spectra with a stability verdict
    Modes,
    /// Critical SCR and the damping-vs-SCR sweep
    Cscr,
    /// Parameter or SCR sweep
    Sweep,
    /// Decoupling report and invariant suite
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Strength => "strength",
            Command::Modes => "modes",
            Command::Cscr => "cscr",
            Command::Sweep => "sweep",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {message}")]
    Compute { path: String, message: String },
    #[error("{0}")]
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Compute { .. } | RunError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceBlock {
    pub config: String,
    pub config_hash: String,
    pub defaults_applied: Vec<String>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
    pub resolved: AnalysisConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub provenance: ProvenanceBlock,
    pub report: Report,
}

impl ReportBundle {
    /// A verdict computed for this report disagrees with its spectrum.
    pub fn inconsistent(&self) -> bool {
        match &self.report {
            Report::Modes(m) => m.verdict.as_ref().is_some_and(|v| !v.consistent),
            Report::Verify(v) => {
                v.verdict.as_ref().is_some_and(|v| !v.consistent) || !v.random_verdicts.disagreements.is_empty()
            }
            _ => false,
        }
    }

    /// Failed entries of the invariant suite.
    pub fn failed_checks(&self) -> Vec<&Check> {
        match &self.report {
            Report::Verify(v) => v.checks.iter().filter(|c| !c.passed).collect(),
            _ => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Report {
    Strength(StrengthReport),
    Modes(ModesOutput),
    Cscr(CscrReport),
    Sweep(SweepResult),
    Verify(VerifyReport),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceParticipation {
    pub device: String,
    pub bus: String,
    pub raw: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrengthReport {
    pub weighting: Weighting,
    /// How branch values were read: `reactance`, `susceptance` or `mixed`.
    pub branch_values: String,
    pub gscr: f64,
    pub ogscr: f64,
    pub gscr_eigenvalues: Vec<f64>,
    pub ogscr_eigenvalues: Vec<f64>,
    /// OgSCR spectrum under the other weighting, for comparison.
    pub alternative_weighting: Weighting,
    pub alternative_eigenvalues: Vec<f64>,
    /// Participation in the weakest OgSCR mode, in device order.
    pub participation: Vec<DeviceParticipation>,
    pub sensitivities: Vec<SensitivityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModesOutput {
    #[serde(flatten)]
    pub modes: ModesReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<StabilityVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CscrReport {
    pub loading: SvisLoading,
    pub critical: CriticalIndex,
    pub sweep: SweepResult,
    /// SCR values (cell midpoints) where the rightmost real part changes sign.
    pub crossings: Vec<f64>,
    /// Damping strictly increases over the sweep points above the critical SCR.
    pub zeta_increasing_above_critical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomCase {
    pub system: usize,
    pub index_value: f64,
    pub critical: f64,
    pub max_real_part: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomVerdicts {
    pub seed: u64,
    pub systems: usize,
    pub stable: usize,
    pub disagreements: Vec<RandomCase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decoupling: Option<DecouplingReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<StabilityVerdict>,
    pub checks: Vec<Check>,
    pub random_verdicts: RandomVerdicts,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub exec: Exec,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { exec: Exec::Parallel }
    }
}

struct Ctx<'a> {
    loaded: &'a Loaded,
    exec: Exec,
}

impl Ctx<'_> {
    fn cfg(&self) -> &AnalysisConfig {
        &self.loaded.config
    }

    fn fail(&self, e: impl std::fmt::Display) -> RunError {
        RunError::Compute { path: self.loaded.path.clone(), message: e.to_string() }
    }

    /// System with dynamic data complete, calibrating the dc link when asked.
    fn dynamic_system(&self) -> Result<(System, Option<CriticalIndex>), RunError> {
        let cfg = self.cfg();
        match cfg.calibration_spec() {
            Some(spec) => {
                let base = cfg.model(0, Some(spec.c_dc_bracket[0]));
                let (model, crit) = calibrate_dc_link(&base, SvisLoading::default(), spec).map_err(|e| self.fail(e))?;
                let sys = build_system(cfg, model.c_dc).map_err(|e| self.fail(e))?;
                Ok((sys, Some(crit)))
            }
            None => Ok((build_system(cfg, None).map_err(|e| self.fail(e))?, None)),
        }
    }

    /// System for the static indices only; the dc link does not enter them.
    fn static_system(&self) -> Result<System, RunError> {
        let c_dc = self.cfg().calibration_spec().map(|s| s.c_dc_bracket[0]);
        build_system(self.cfg(), c_dc).map_err(|e| self.fail(e))
    }
}

pub fn run(command: Command, loaded: &Loaded, opts: RunOptions) -> Result<ReportBundle, RunError> {
    let ctx = Ctx { loaded, exec: opts.exec };
    let (report, calibration) = match command {
        Command::Strength => (Report::Strength(strength(&ctx)?), None),
        Command::Modes => {
            let (sys, crit) = ctx.dynamic_system()?;
            (Report::Modes(modes(&ctx, &sys)?), crit.and_then(|c| c.calibration))
        }
        Command::Cscr => {
            let (sys, crit) = ctx.dynamic_system()?;
            let cal = crit.as_ref().and_then(|c| c.calibration);
            (Report::Cscr(cscr(&ctx, &sys, crit)?), cal)
        }
        Command::Sweep => {
            let path = &ctx.cfg().study.sweep.path;
            if path == "scr" {
                let (sys, crit) = ctx.dynamic_system()?;
                let values = ctx.cfg().sweep_values();
                let r = scr_sweep(&sys.devices[0].model, SvisLoading::default(), &values, ctx.exec)
                    .map_err(|e| ctx.fail(e))?;
                (Report::Sweep(r), crit.and_then(|c| c.calibration))
            } else {
                let (sys, crit) = ctx.dynamic_system()?;
                let p: ParamPath = path.parse().map_err(|e| ctx.fail(e))?;
                let r = param_sweep(&sys, &p, &ctx.cfg().sweep_values(), ctx.exec).map_err(|e| ctx.fail(e))?;
                (Report::Sweep(r), crit.and_then(|c| c.calibration))
            }
        }
        Command::Verify => {
            let (sys, crit) = ctx.dynamic_system()?;
            (Report::Verify(verify(&ctx, &sys)?), crit.and_then(|c| c.calibration))
        }
    };
    Ok(ReportBundle {
        tool: TOOL.into(),
        version: VERSION.into(),
        command,
        provenance: ProvenanceBlock {
            config: loaded.path.clone(),
            config_hash: loaded.hash.clone(),
            defaults_applied: loaded.defaults_applied.clone(),
            warnings: loaded.warnings.clone(),
            calibration,
            resolved: loaded.config.clone(),
        },
        report,
    })
}

fn branch_values(grid: &GridSpec) -> String {
    let r = grid.branches.iter().filter(|b| b.value_kind == ValueKind::Reactance).count();
    match r {
        0 => "susceptance".into(),
        r if r == grid.branches.len() => "reactance".into(),
        _ => "mixed".into(),
    }
}

fn strength(ctx: &Ctx) -> Result<StrengthReport, RunError> {
    let sys = ctx.static_system()?;
    let weighting = ctx.cfg().study.weighting;
    let alternative = match weighting {
        Weighting::AbsolutePower => Weighting::PerUnitPower,
        Weighting::PerUnitPower => Weighting::AbsolutePower,
    };
    let eig = |k| index_eigensystem(&sys, k).map_err(|e| ctx.fail(e));
    let g = eig(IndexKind::Gscr)?;
    let o = eig(IndexKind::Ogscr(weighting))?;
    let alt = eig(IndexKind::Ogscr(alternative))?;
    let row = participation(&o, 1).map_err(|e| ctx.fail(e))?;
    let labels = ctx.cfg().labels();
    let participation = (0..sys.n())
        .map(|i| DeviceParticipation {
            device: labels[i].clone(),
            bus: sys.devices[i].bus.clone(),
            raw: row.raw[i],
            normalized: row.normalized[i],
        })
        .collect();
    let sens = |e, k| sensitivities(e, &sys.grid, &sys.devices, k).map_err(|e| ctx.fail(e));
    Ok(StrengthReport {
        weighting,
        branch_values: branch_values(&sys.grid),
        gscr: g.eigenvalues[0],
        ogscr: o.eigenvalues[0],
        gscr_eigenvalues: g.eigenvalues.clone(),
        ogscr_eigenvalues: o.eigenvalues.clone(),
        alternative_weighting: alternative,
        alternative_eigenvalues: alt.eigenvalues.clone(),
        participation,
        sensitivities: vec![sens(&g, IndexKind::Gscr)?, sens(&o, IndexKind::Ogscr(weighting))?],
    })
}

fn identical_devices(sys: &System) -> bool {
    sys.devices.iter().all(|d| d.model == sys.devices[0].model)
}

fn verdict(ctx: &Ctx, sys: &System) -> Result<Option<StabilityVerdict>, RunError> {
    if !identical_devices(sys) {
        return Ok(None);
    }
    let cfg = ctx.cfg();
    stability_assess(sys, &sys.rated_op(), cfg.study.pathway, cfg.study.cscr.bracket, ctx.exec)
        .map(Some)
        .map_err(|e| ctx.fail(e))
}

fn modes(ctx: &Ctx, sys: &System) -> Result<ModesOutput, RunError> {
    let study = &ctx.cfg().study.modes;
    let modes = modes_study(sys, &sys.rated_op(), study.include_full, ctx.exec).map_err(|e| ctx.fail(e))?;
    let verdict = if study.verdict { verdict(ctx, sys)? } else { None };
    Ok(ModesOutput { modes, verdict })
}

fn cscr(ctx: &Ctx, sys: &System, calibrated: Option<CriticalIndex>) -> Result<CscrReport, RunError> {
    let cfg = ctx.cfg();
    let model = &sys.devices[0].model;
    let loading = SvisLoading::default();
    let critical = match calibrated {
        Some(c) => c,
        None => cscr_search(model, loading, cfg.study.cscr.bracket).map_err(|e| ctx.fail(e))?,
    };
    let sweep = scr_sweep(model, loading, &cfg.study.cscr.sweep.values(), ctx.exec).map_err(|e| ctx.fail(e))?;
    let p = &sweep.points;
    let crossings = p
        .windows(2)
        .filter(|w| (w[0].mode_re > 0.0) != (w[1].mode_re > 0.0))
        .map(|w| 0.5 * (w[0].param_value + w[1].param_value))
        .collect();
    let above: Vec<_> = p.iter().filter(|q| q.param_value >= critical.value).collect();
    let zeta_increasing_above_critical = above.windows(2).all(|w| w[1].index_or_zeta > w[0].index_or_zeta);
    Ok(CscrReport { loading, critical, sweep, crossings, zeta_increasing_above_critical })
}

fn check(name: &str, value: f64, limit: f64, passed: bool) -> Check {
    Check { name: name.into(), passed, value, limit }
}

fn verify(ctx: &Ctx, sys: &System) -> Result<VerifyReport, RunError> {
    let cfg = ctx.cfg();
    let v = &cfg.study.verify;
    let model = sys.devices[0].model.clone();
    let mut checks = Vec::new();
    let mut notes = Vec::new();

    let nf = NetworkFrequencyCoeffs::new(sys.omega0());
    let lhs = &(&nf.alpha * &nf.alpha) + &(&nf.beta * &nf.beta);
    let ab = lhs.approx_eq(&nf.alpha, 1e-14);
    checks.push(check("alpha_beta_identity", if ab { 0.0 } else { 1.0 }, 0.0, ab));

    let single = single_device_gap(&sys.devices[0]).map_err(|e| ctx.fail(e))?;
    checks.push(check("gscr_equals_scr_single_device", single, 1e-14, single <= 1e-14));

    let mut unit = sys.clone();
    for d in &mut unit.devices {
        d.p_b = 1.0;
    }
    let g = index_eigensystem(&unit, IndexKind::Gscr).map_err(|e| ctx.fail(e))?.eigenvalues[0];
    let o =
        index_eigensystem(&unit, IndexKind::Ogscr(Weighting::AbsolutePower)).map_err(|e| ctx.fail(e))?.eigenvalues[0];
    let gap = ((g - o) / g).abs();
    checks.push(check("ogscr_equals_gscr_identity_weighting", gap, 1e-12, gap <= 1e-12));

    for kind in [IndexKind::Gscr, IndexKind::Ogscr(Weighting::AbsolutePower), IndexKind::Ogscr(Weighting::PerUnitPower)]
    {
        let a = sensitivity_audit(sys, kind, v.fd_step).map_err(|e| ctx.fail(e))?;
        let name = match kind {
            IndexKind::Gscr => "sensitivity_fd_gscr",
            IndexKind::Ogscr(Weighting::AbsolutePower) => "sensitivity_fd_ogscr_absolute_power",
            IndexKind::Ogscr(Weighting::PerUnitPower) => "sensitivity_fd_ogscr_per_unit_power",
        };
        checks.push(check(name, a.max_relative_error, v.fd_tolerance, a.max_relative_error <= v.fd_tolerance));
        checks.push(check(&format!("{name}_signs"), 0.0, 0.0, a.signs_hold));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(v.seed);
    let (mut worst, mut signs) = (0.0f64, true);
    for _ in 0..v.sensitivity_systems {
        let s = random_system(&mut rng, &model, &v.random).map_err(|e| ctx.fail(e))?;
        let a =
            sensitivity_audit(&s, IndexKind::Ogscr(Weighting::AbsolutePower), v.fd_step).map_err(|e| ctx.fail(e))?;
        worst = worst.max(a.max_relative_error);
        signs &= a.signs_hold;
    }
    checks.push(check("sensitivity_fd_random_systems", worst, v.fd_tolerance, worst <= v.fd_tolerance));
    checks.push(check("sensitivity_signs_random_systems", 0.0, 0.0, signs));

    let (decoupling, verdict) = if identical_devices(sys) {
        let rep = decoupling_verify(sys, &sys.rated_op(), ctx.exec).map_err(|e| ctx.fail(e))?;
        // The limit shown is the tightest per-mode tolerance.
        let tol =
            |t: &gscr_core::studies::MatchTable| t.matches.iter().map(|m| m.tolerance).fold(f64::INFINITY, f64::min);
        checks.push(check(
            "svis_modes_in_simplified_spectrum",
            rep.simplified.max_distance,
            tol(&rep.simplified),
            rep.simplified.all_within,
        ));
        checks.push(check("svis_modes_in_full_spectrum", rep.full.max_distance, tol(&rep.full), rep.full.all_within));
        let unmatched = rep.counts.unmatched_full as f64;
        checks.push(check(
            "unmatched_line_modes",
            unmatched,
            rep.counts.expected_line_modes as f64,
            rep.counts.unmatched_full == rep.counts.expected_line_modes,
        ));
        checks.push(check("frobenius_ratio_flat", rep.frobenius.max_ratio, 0.0, rep.frobenius.max_ratio == 0.0));
        let op = operating_point_with_spread(sys, v.theta_spread).map_err(|e| ctx.fail(e))?;
        let ms = mpeis_modes(sys, &op, NetworkModel::Simplified).map_err(|e| ctx.fail(e))?;
        let r = frobenius_check(sys, &op, &ms).map_err(|e| ctx.fail(e))?.max_ratio;
        checks.push(check("frobenius_ratio_at_theta_spread", r, v.frobenius_limit, r < v.frobenius_limit));
        (Some(rep), verdict(ctx, sys)?)
    } else {
        notes.push("devices differ; decoupling checks and verdict skipped".into());
        (None, None)
    };

    let k3 = reference::complete_graph(&model, 3, 0.2, 0.3).map_err(|e| ctx.fail(e))?;
    let rep = decoupling_verify(&k3, &k3.rated_op(), ctx.exec).map_err(|e| ctx.fail(e))?;
    let n = rep.full.unmatched.len();
    checks.push(check("complete_graph_3_unmatched_modes", n as f64, 6.0, n == 6));

    let mut rng = ChaCha8Rng::seed_from_u64(v.seed.wrapping_add(1));
    let mut disagreements = Vec::new();
    let mut stable = 0;
    for i in 0..v.verdict_systems {
        let s = random_system(&mut rng, &model, &v.random).map_err(|e| ctx.fail(e))?;
        let vd = stability_assess(&s, &s.rated_op(), Pathway::Ogscr, cfg.study.cscr.bracket, ctx.exec)
            .map_err(|e| ctx.fail(e))?;
        stable += vd.stable as usize;
        if !vd.consistent {
            disagreements.push(RandomCase {
                system: i,
                index_value: vd.index_value,
                critical: vd.critical.value,
                max_real_part: vd.max_real_part,
            });
        }
    }
    let random_verdicts =
        RandomVerdicts { seed: v.seed.wrapping_add(1), systems: v.verdict_systems, stable, disagreements };
    Ok(VerifyReport { decoupling, verdict, checks, random_verdicts, notes })
}

/// `|gSCR − SCR|/SCR` for the device alone behind a reactance of 0.4.
fn single_device_gap(d: &DeviceSpec) -> gscr_core::Result<f64> {
    let grid = GridSpec::new(&["1"], vec![Branch::reactance("1", "0", 0.4)]);
    let sys = System::new(
        GridSpec { base_frequency: d.model.base_frequency, ..grid },
        vec![DeviceSpec { bus: "1".into(), ..d.clone() }],
    )?;
    let g = index_eigensystem(&sys, IndexKind::Gscr)?.eigenvalues[0];
    let scr = scr_single(d.s_b, 0.4)?;
    Ok(((g - scr) / scr).abs())
}
