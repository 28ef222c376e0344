use std::path::Path;
use std::process::{Command as Proc, Output};

use gscr_cli::config::{bundled, to_toml};
use gscr_cli::emit::{from_json, render, to_json};
use gscr_cli::{parse_str, run, Command, ConfigErrorKind, Format, Report, RunOptions};
use gscr_core::par::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BIN: &str = env!("CARGO_BIN_EXE_gscr");

fn paper() -> &'static str {
    bundled("paper_5vsc").unwrap()
}

fn gscr(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = Proc::new(BIN);
    c.args(args).env_remove("GSCR_THREADS");
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn bundled_config_round_trips() {
    for name in ["paper_5vsc", "single_vsc"] {
        let a = parse_str(bundled(name).unwrap(), name, true).unwrap();
        let text = to_toml(&a.config);
        let b = parse_str(&text, name, true).unwrap();
        assert_eq!(a.config, b.config);
        assert_eq!(a.hash, b.hash);
        assert_eq!(to_toml(&b.config), text);
        assert!(b.defaults_applied.is_empty(), "{:?}", b.defaults_applied);
    }
}

#[test]
fn defaults_are_recorded() {
    let l = parse_str(bundled("single_vsc").unwrap(), "single", true).unwrap();
    for key in ["study.weighting", "study.verify", "devices[0].q_b", "devices[0].u", "base.s_base"] {
        assert!(l.defaults_applied.iter().any(|d| d == key), "{key} missing from {:?}", l.defaults_applied);
    }
    assert!(!l.defaults_applied.iter().any(|d| d == "study.calibration"));
}

#[test]
fn json_round_trip_is_byte_identical() {
    for (cfg, cmd) in [
        ("paper_5vsc", Command::Strength),
        ("paper_5vsc", Command::Modes),
        ("paper_5vsc", Command::Sweep),
        ("single_vsc", Command::Cscr),
        ("single_vsc", Command::Sweep),
    ] {
        let l = parse_str(bundled(cfg).unwrap(), cfg, true).unwrap();
        let b = run(cmd, &l, RunOptions::default()).unwrap();
        let a = to_json(&b);
        let back = from_json(&a).unwrap();
        assert_eq!(to_json(&back), a, "{cfg} {cmd:?}");
    }
}

#[test]
fn runs_are_deterministic_across_thread_settings() {
    let a = gscr(&["modes", "--config", "paper_5vsc"], &[]);
    let b = gscr(&["modes", "--config", "paper_5vsc", "--threads", "1"], &[]);
    let c = gscr(&["modes", "--config", "paper_5vsc"], &[("GSCR_THREADS", "3")]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    let l = parse_str(paper(), "p", true).unwrap();
    let seq = run(Command::Modes, &l, RunOptions { exec: Exec::Sequential }).unwrap();
    let par = run(Command::Modes, &l, RunOptions { exec: Exec::Parallel }).unwrap();
    assert_eq!(to_json(&seq), to_json(&par));
}

#[test]
fn sweep_csv_has_header_plus_points() {
    let dir = tempfile::tempdir().unwrap();
    let out = gscr(&["sweep", "--config", "paper_5vsc", "--format", "csv", "--out", dir.path().to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut r = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), ["param_value", "index_or_zeta", "mode_re", "mode_im"]);
    assert_eq!(r.records().count(), 41);
    assert_eq!(text.lines().count(), 42);
}

#[test]
fn spectra_csv_columns() {
    let l = parse_str(paper(), "p", true).unwrap();
    let b = run(Command::Modes, &l, RunOptions::default()).unwrap();
    let files = render(&b, Format::Csv);
    assert_eq!(files[0].0, "spectra.csv");
    let mut r = csv::Reader::from_reader(files[0].1.as_bytes());
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), ["re", "im", "zeta", "freq_hz", "provenance"]);
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    let Report::Modes(m) = &b.report else { panic!() };
    let total: usize = m.modes.svis.iter().map(|s| s.modes.len()).sum::<usize>()
        + m.modes.simplified.len()
        + m.modes.full.as_ref().map_or(0, |f| f.len());
    assert_eq!(rows.len(), total);
    assert!(rows.iter().any(|r| &r[4] == "svis(1)"));
    assert!(rows.iter().any(|r| &r[4] == "line_states"));
}

#[test]
fn participation_table_is_sorted() {
    let out = gscr(&["strength", "--config", "paper_5vsc", "--format", "table"], &[]);
    let text = String::from_utf8(out.stdout).unwrap();
    let start = text.find("Participation").unwrap();
    let order: Vec<&str> =
        text[start..].lines().skip(3).take(5).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(order, ["VSC4", "VSC2", "VSC1", "VSC3", "VSC5"]);
    // Six significant digits.
    assert!(text.contains("6.09372"));
}

/// Inserts `key = value` into the `k`-th table of a depth-first walk.
fn insert_at(
    v: &mut toml::Value,
    k: &mut usize,
    key: &mut dyn FnMut(&toml::Table) -> String,
    val: &toml::Value,
) -> bool {
    match v {
        toml::Value::Table(t) => {
            if *k == 0 {
                let name = key(t);
                t.insert(name, val.clone());
                return true;
            }
            *k -= 1;
            t.iter_mut().any(|(_, c)| insert_at(c, k, key, val))
        }
        toml::Value::Array(a) => a.iter_mut().any(|c| insert_at(c, k, key, val)),
        _ => false,
    }
}

fn count_tables(v: &toml::Value) -> usize {
    match v {
        toml::Value::Table(t) => 1 + t.values().map(count_tables).sum::<usize>(),
        toml::Value::Array(a) => a.iter().map(count_tables).sum(),
        _ => 0,
    }
}

#[test]
fn strict_mode_rejects_every_unknown_key() {
    let base: toml::Value = toml::from_str(paper()).unwrap();
    let n = count_tables(&base);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..100 {
        let mut doc = base.clone();
        let mut k = rng.random_range(0..n);
        let misspell = rng.random_bool(0.5);
        let tag: u32 = rng.random();
        let mut inserted = String::new();
        let mut key = |t: &toml::Table| {
            let name = match t.keys().next() {
                Some(first) if misspell => format!("{first}{}", ["s", "_", "x"][tag as usize % 3]),
                _ => format!("extra_{tag:x}"),
            };
            inserted = name.clone();
            name
        };
        let val = match case % 3 {
            0 => toml::Value::Integer(rng.random_range(-5..5)),
            1 => toml::Value::Float(rng.random()),
            _ => toml::Value::String("on".into()),
        };
        assert!(insert_at(&mut doc, &mut k, &mut key, &val));
        let text = toml::to_string(&doc).unwrap();
        let err = parse_str(&text, "mutated", true).unwrap_err();
        assert_eq!(err.kind, ConfigErrorKind::UnknownKey, "case {case}: {err}");
        assert!(err.message.contains(&inserted), "case {case}: {err} lacks {inserted}");
        let lenient = parse_str(&text, "mutated", false).unwrap();
        assert!(lenient.warnings.iter().any(|w| w.contains(&inserted)));
    }
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let unknown_bus = paper().replacen("bus = \"3\"", "bus = \"X\"", 1);
    let p = write(dir.path(), "bus.toml", &unknown_bus);
    let out = gscr(&["strength", "--config", &p], &[]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("cross-reference") && msg.contains("\"X\"") && msg.contains(&p), "{msg}");

    let l = parse_str(&unknown_bus, "bus", true).unwrap_err();
    assert_eq!(l.kind, ConfigErrorKind::CrossReference);

    let i = paper().find("[[devices]]").unwrap();
    let j = paper().find("[study]").unwrap();
    let empty = format!("devices = []\n{}{}", &paper()[..i], &paper()[j..]);
    let e = parse_str(&empty, "empty", true).unwrap_err();
    assert_eq!(e.kind, ConfigErrorKind::Validation);
    let p = write(dir.path(), "empty.toml", &empty);
    assert_eq!(gscr(&["strength", "--config", &p], &[]).status.code(), Some(2));

    let typo = paper().replacen("s_b = 1.5", "s_b = \"big\"", 1);
    let e = parse_str(&typo, "typo", true).unwrap_err();
    assert_eq!(e.kind, ConfigErrorKind::Schema);
    assert!(e.message.contains("devices[0].s_b") && e.message.contains("f64"), "{e}");

    let ungrounded = bundled("single_vsc").unwrap().replace("to = \"0\"", "to = \"1\"");
    assert_eq!(parse_str(&ungrounded, "u", true).unwrap_err().kind, ConfigErrorKind::Validation);

    let no_dc = bundled("single_vsc")
        .unwrap()
        .replace("[study.calibration]\ntarget = 2.86\nc_dc_bracket = [0.02, 0.0375]\n", "");
    let e = parse_str(&no_dc, "no_dc", true).unwrap_err();
    assert!(e.message.contains("C_dc"), "{e}");

    let p = write(dir.path(), "extra.toml", &paper().replace("[study]\n", "[study]\nwieghting = 1\n"));
    assert_eq!(gscr(&["strength", "--config", &p, "--strict"], &[]).status.code(), Some(2));
    let lenient = gscr(&["strength", "--config", &p], &[]);
    assert_eq!(lenient.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&lenient.stderr).contains("study.wieghting"));

    assert_eq!(gscr(&["strength", "--config", "no/such/file.toml"], &[]).status.code(), Some(2));
}

#[test]
fn computation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = bundled("single_vsc").unwrap().replace("c_dc_bracket = [0.02, 0.0375]", "c_dc_bracket = [0.038, 0.05]");
    let p = write(dir.path(), "cal.toml", &bad);
    let out = gscr(&["cscr", "--config", &p], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(&p));

    let blocker = write(dir.path(), "file", "");
    let out = gscr(&["strength", "--config", "paper_5vsc", "--out", &format!("{blocker}/sub")], &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn inconsistent_verdict_exits_with_three() {
    // SCR 1.2 lies in the low-SCR stable window, where the index rule does not hold.
    let dir = tempfile::tempdir().unwrap();
    let text = bundled("single_vsc").unwrap().replace("value = 0.25", &format!("value = {}", 1.0 / 1.2));
    let p = write(dir.path(), "window.toml", &text);
    let out = gscr(&["modes", "--config", &p], &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let b = from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let Report::Modes(m) = b.report else { panic!() };
    let v = m.verdict.unwrap();
    assert!(!v.stable && v.spectral_stable && !v.consistent);
}

#[test]
fn strength_report_records_choices() {
    let out = gscr(&["strength", "--config", "paper_5vsc"], &[]);
    let b = from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(b.provenance.config_hash.len(), 64);
    assert!(b.provenance.calibration.is_none());
    let Report::Strength(s) = b.report else { panic!() };
    assert_eq!(s.branch_values, "reactance");
    assert!((s.ogscr - 6.0944).abs() < 1e-3);
    let j = serde_json::to_value(s.weighting).unwrap();
    assert_eq!(j, "absolute_power");
}

#[test]
fn single_device_cscr() {
    let out = gscr(&["cscr", "--config", "single_vsc"], &[]);
    assert_eq!(out.status.code(), Some(0));
    let b = from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let Report::Cscr(c) = b.report else { panic!() };
    assert!((c.critical.value - 2.86).abs() < 0.15);
    assert!(c.zeta_increasing_above_critical);
    assert!(c.sweep.points.windows(2).all(|w| w[1].index_or_zeta > w[0].index_or_zeta));
    assert!(b.provenance.calibration.is_some());
}

#[test]
fn verify_passes_on_reference_config() {
    let out = gscr(&["verify", "--config", "paper_5vsc", "--format", "table"], &[]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}\n{}", String::from_utf8_lossy(&out.stderr));
    assert!(!text.contains("FAIL"));
    assert!(text.contains("0 disagreements"));
}
