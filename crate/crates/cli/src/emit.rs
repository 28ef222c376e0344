//! Report emission: one JSON document, CSV plot-data files, or text tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use gscr_core::smallsignal::{Mode, ModeSet};
use gscr_core::studies::{MatchTable, SweepResult};

use crate::run::{Report, ReportBundle, RunError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

pub const SWEEP_COLUMNS: [&str; 4] = ["param_value", "index_or_zeta", "mode_re", "mode_im"];
pub const SPECTRA_COLUMNS: [&str; 5] = ["re", "im", "zeta", "freq_hz", "provenance"];

pub fn to_json(bundle: &ReportBundle) -> String {
    let mut s = serde_json::to_string_pretty(bundle).expect("report serializes");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> serde_json::Result<ReportBundle> {
    serde_json::from_str(text)
}

/// Named outputs for `format`; the first one is the primary output.
pub fn render(bundle: &ReportBundle, format: Format) -> Vec<(String, String)> {
    let cmd = bundle.command.name();
    match format {
        Format::Json => vec![(format!("{cmd}.json"), to_json(bundle))],
        Format::Table => vec![(format!("{cmd}.txt"), table(bundle))],
        Format::Csv => csv_files(bundle),
    }
}

/// Writes every output of `format` into `dir`.
pub fn write_all(bundle: &ReportBundle, format: Format, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let io = |p: &Path, e: std::io::Error| RunError::Io(format!("{}: {e}", p.display()));
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut written = Vec::new();
    for (name, body) in render(bundle, format) {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| io(&p, e))?;
        written.push(p);
    }
    Ok(written)
}

/// Six significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    if (-4..6).contains(&e) {
        format!("{:.*}", (5 - e).max(0) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn sweep_csv(s: &SweepResult) -> String {
    csv_text(
        &SWEEP_COLUMNS,
        s.points.iter().map(|p| vec![num(p.param_value), num(p.index_or_zeta), num(p.mode_re), num(p.mode_im)]),
    )
}

fn spectra_rows(sets: &[&ModeSet]) -> Vec<Vec<String>> {
    sets.iter()
        .flat_map(|ms| {
            ms.modes
                .iter()
                .map(move |m| vec![num(m.re), num(m.im), num(m.zeta), num(m.freq_hz), ms.provenance.to_string()])
        })
        .collect()
}

fn match_rows(t: &MatchTable) -> Vec<Vec<String>> {
    t.matches
        .iter()
        .map(|m| {
            let (re, im) = m.full_mode.map(|f| (num(f.re), num(f.im))).unwrap_or_default();
            vec![
                t.provenance.to_string(),
                m.svis.to_string(),
                num(m.svis_mode.re),
                num(m.svis_mode.im),
                re,
                im,
                m.distance.map(num).unwrap_or_default(),
                num(m.tolerance),
                m.within.to_string(),
            ]
        })
        .collect()
}

fn csv_files(bundle: &ReportBundle) -> Vec<(String, String)> {
    match &bundle.report {
        Report::Strength(r) => {
            let eig = csv_text(
                &["mode", "gscr", "ogscr", "ogscr_alternative"],
                (0..r.gscr_eigenvalues.len()).map(|i| {
                    vec![
                        (i + 1).to_string(),
                        num(r.gscr_eigenvalues[i]),
                        num(r.ogscr_eigenvalues[i]),
                        num(r.alternative_eigenvalues[i]),
                    ]
                }),
            );
            let part = csv_text(
                &["device", "bus", "raw", "normalized"],
                r.participation.iter().map(|p| vec![p.device.clone(), p.bus.clone(), num(p.raw), num(p.normalized)]),
            );
            vec![("eigenvalues.csv".into(), eig), ("participation.csv".into(), part)]
        }
        Report::Modes(m) => {
            let mut sets: Vec<&ModeSet> = m.modes.svis.iter().map(|r| &r.modes).collect();
            sets.push(&m.modes.simplified);
            sets.extend(m.modes.full.as_ref());
            vec![("spectra.csv".into(), csv_text(&SPECTRA_COLUMNS, spectra_rows(&sets)))]
        }
        Report::Cscr(c) => vec![("cscr_sweep.csv".into(), sweep_csv(&c.sweep))],
        Report::Sweep(s) => vec![("sweep.csv".into(), sweep_csv(s))],
        Report::Verify(v) => {
            let checks = csv_text(
                &["name", "passed", "value", "limit"],
                v.checks.iter().map(|c| vec![c.name.clone(), c.passed.to_string(), num(c.value), num(c.limit)]),
            );
            let mut out = vec![("checks.csv".into(), checks)];
            if let Some(d) = &v.decoupling {
                let rows = match_rows(&d.simplified).into_iter().chain(match_rows(&d.full));
                let header = [
                    "provenance",
                    "svis",
                    "svis_re",
                    "svis_im",
                    "full_re",
                    "full_im",
                    "distance",
                    "tolerance",
                    "within",
                ];
                out.push(("matches.csv".into(), csv_text(&header, rows)));
            }
            out
        }
    }
}

/// Left-aligned text columns.
fn grid(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let s: Vec<String> = cells.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect();
        s.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out += &line(width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect());
    for r in rows {
        out += &line(r.iter().map(String::as_str).collect());
    }
    out
}

fn mode_cells(m: &Mode) -> Vec<String> {
    vec![sig6(m.re), sig6(m.im), sig6(m.zeta), sig6(m.freq_hz)]
}

fn mode_str(m: &Mode) -> String {
    let sign = if m.im < 0.0 { '-' } else { '+' };
    format!("{}{sign}{}j (zeta {}, {} Hz)", sig6(m.re), sig6(m.im.abs()), sig6(m.zeta), sig6(m.freq_hz))
}

fn spectrum_table(ms: &ModeSet) -> String {
    let rows: Vec<Vec<String>> = ms.modes.iter().filter(|m| m.im >= 0.0).map(mode_cells).collect();
    grid(&["re", "im", "zeta", "freq_hz"], &rows)
}

fn table(bundle: &ReportBundle) -> String {
    let mut t = String::new();
    let p = &bundle.provenance;
    let _ = writeln!(
        t,
        "{} {} {}  config {}  sha256 {}",
        bundle.tool,
        bundle.version,
        bundle.command.name(),
        p.config,
        &p.config_hash[..12]
    );
    if let Some(c) = &p.calibration {
        let _ = writeln!(
            t,
            "dc link calibrated: C_dc = {} at U_dc = {} for critical SCR {}",
            sig6(c.c_dc),
            sig6(c.u_dc),
            sig6(c.target)
        );
    }
    t.push('\n');
    match &bundle.report {
        Report::Strength(r) => {
            let _ = writeln!(t, "gSCR  {}", sig6(r.gscr));
            let _ = writeln!(
                t,
                "OgSCR {}  (weighting {}, branch values read as {})",
                sig6(r.ogscr),
                weighting(r.weighting),
                r.branch_values
            );
            t.push('\n');
            let alt = format!("ogscr ({})", weighting(r.alternative_weighting));
            let rows: Vec<Vec<String>> = (0..r.gscr_eigenvalues.len())
                .map(|i| {
                    vec![
                        (i + 1).to_string(),
                        sig6(r.gscr_eigenvalues[i]),
                        sig6(r.ogscr_eigenvalues[i]),
                        sig6(r.alternative_eigenvalues[i]),
                    ]
                })
                .collect();
            t += &grid(&["mode", "gscr", "ogscr", &alt], &rows);
            t += "\nParticipation in the weakest mode\n";
            let mut part = r.participation.clone();
            part.sort_by(|a, b| b.normalized.total_cmp(&a.normalized));
            let rows: Vec<Vec<String>> =
                part.iter().map(|p| vec![p.device.clone(), p.bus.clone(), sig6(p.normalized), sig6(p.raw)]).collect();
            t += &grid(&["device", "bus", "normalized", "raw"], &rows);
            for s in &r.sensitivities {
                let _ = writeln!(t, "\nSensitivities of {}", index_name(s.kind));
                let rows: Vec<Vec<String>> = r
                    .participation
                    .iter()
                    .enumerate()
                    .map(|(i, p)| vec![p.device.clone(), sig6(s.capacity[i]), sig6(s.power[i])])
                    .collect();
                t += &grid(&["device", "d/dS_B", "d/dP_b"], &rows);
                let rows: Vec<Vec<String>> = s
                    .branches
                    .iter()
                    .map(|b| vec![(b.branch + 1).to_string(), format!("{}-{}", b.from, b.to), sig6(b.d_db)])
                    .collect();
                t += &grid(&["branch", "ends", "d/db"], &rows);
                for w in &s.warnings {
                    let _ = writeln!(t, "warning: {w}");
                }
            }
        }
        Report::Modes(m) => {
            if let Some(w) = &m.modes.weakest {
                let _ = writeln!(t, "weakest mode {}", mode_str(w));
            }
            if let Some(v) = &m.verdict {
                let _ = writeln!(
                    t,
                    "verdict: index {} critical {} margin {} -> {}; spectrum max Re {} -> {}{}",
                    sig6(v.index_value),
                    sig6(v.critical.value),
                    sig6(v.margin),
                    if v.stable { "stable" } else { "unstable" },
                    sig6(v.max_real_part),
                    if v.spectral_stable { "stable" } else { "unstable" },
                    if v.consistent { "" } else { "  INCONSISTENT" }
                );
            }
            for n in &m.modes.notes {
                let _ = writeln!(t, "note: {n}");
            }
            t += "\nEquivalent single-infeed systems\n";
            let rows: Vec<Vec<String>> = m
                .modes
                .svis
                .iter()
                .map(|r| {
                    let w = r.modes.weakest_oscillatory();
                    vec![
                        r.svis.index.to_string(),
                        sig6(r.svis.lambda),
                        w.map(|w| sig6(w.re)).unwrap_or_default(),
                        w.map(|w| sig6(w.im)).unwrap_or_default(),
                        w.map(|w| sig6(w.zeta)).unwrap_or_default(),
                    ]
                })
                .collect();
            t += &grid(&["svis", "scr", "weakest_re", "weakest_im", "zeta"], &rows);
            let _ = writeln!(t, "\nSimplified multi-infeed spectrum (upper half plane)");
            t += &spectrum_table(&m.modes.simplified);
            if let Some(f) = &m.modes.full {
                let _ = writeln!(t, "\nSpectrum with branch-current states (upper half plane)");
                t += &spectrum_table(f);
            }
        }
        Report::Cscr(c) => {
            let k = &c.critical;
            let _ = writeln!(
                t,
                "critical SCR {}  (bracket [{}, {}], {:?} crossing)",
                sig6(k.value),
                sig6(k.bracket[0]),
                sig6(k.bracket[1]),
                k.kind
            );
            let _ = writeln!(t, "crossing mode {}", mode_str(&k.crossing));
            let _ = writeln!(
                t,
                "sign changes on the sweep grid near SCR {:?}",
                c.crossings.iter().map(|x| sig6(*x)).collect::<Vec<_>>()
            );
            let _ = writeln!(t, "damping strictly increasing above critical: {}\n", c.zeta_increasing_above_critical);
            t += &sweep_table(&c.sweep);
        }
        Report::Sweep(s) => t += &sweep_table(s),
        Report::Verify(v) => {
            let rows: Vec<Vec<String>> = v
                .checks
                .iter()
                .map(|c| {
                    vec![c.name.clone(), if c.passed { "pass" } else { "FAIL" }.into(), sig6(c.value), sig6(c.limit)]
                })
                .collect();
            t += &grid(&["check", "result", "value", "limit"], &rows);
            let r = &v.random_verdicts;
            let _ = writeln!(
                t,
                "\nrandom verdicts: {} systems, {} stable, {} disagreements",
                r.systems,
                r.stable,
                r.disagreements.len()
            );
            if let Some(d) = &v.decoupling {
                let c = &d.counts;
                let _ = writeln!(
                    t,
                    "modes: {} svis, {} simplified, {} with branch states, {} unmatched (expected {})",
                    c.svis_modes, c.simplified_modes, c.full_modes, c.unmatched_full, c.expected_line_modes
                );
                let _ = writeln!(
                    t,
                    "max match distance: simplified {}, full {}",
                    sig6(d.simplified.max_distance),
                    sig6(d.full.max_distance)
                );
            }
            for n in &v.notes {
                let _ = writeln!(t, "note: {n}");
            }
        }
    }
    t
}

fn sweep_table(s: &SweepResult) -> String {
    let rows: Vec<Vec<String>> = s
        .points
        .iter()
        .map(|p| {
            let f = |x: f64| if x.is_nan() { String::new() } else { sig6(x) };
            vec![f(p.param_value), f(p.index_or_zeta), f(p.mode_re), f(p.mode_im)]
        })
        .collect();
    format!("{} against {}\n", s.quantity, s.path) + &grid(&SWEEP_COLUMNS, &rows)
}

fn weighting(w: gscr_core::network::Weighting) -> &'static str {
    match w {
        gscr_core::network::Weighting::AbsolutePower => "absolute_power",
        gscr_core::network::Weighting::PerUnitPower => "per_unit_power",
    }
}

fn index_name(k: gscr_core::strength::IndexKind) -> String {
    match k {
        gscr_core::strength::IndexKind::Gscr => "gSCR".into(),
        gscr_core::strength::IndexKind::Ogscr(w) => format!("OgSCR ({})", weighting(w)),
    }
}
