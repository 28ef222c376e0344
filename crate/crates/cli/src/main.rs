use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use gscr_cli::{config, emit, exit, run, Command, Format, RunOptions};
use gscr_core::par::Exec;

#[derive(Parser)]
#[command(name = "gscr", version, about = "Grid strength and small-signal stability of multi-converter grids")]
struct Cli {
    command: Command,
    /// Analysis configuration (TOML), or the name of a bundled one
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write outputs into this directory instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reject unknown configuration keys instead of warning
    #[arg(long)]
    strict: bool,
    /// Worker threads; 1 runs everything on the calling thread
    #[arg(long, env = "GSCR_THREADS")]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(real_main(cli) as u8)
}

fn real_main(cli: Cli) -> i32 {
    let exec = match cli.threads {
        Some(1) => Exec::Sequential,
        Some(n) if n > 1 => {
            #[cfg(feature = "parallel")]
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("warning: {e}");
            }
            Exec::Parallel
        }
        _ => Exec::Parallel,
    };

    let loaded = match config::load(&cli.config, cli.strict) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return exit::CONFIG;
        }
    };
    for w in &loaded.warnings {
        eprintln!("warning: {}: {w}", loaded.path);
    }

    let bundle = match run(cli.command, &loaded, RunOptions { exec }) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };

    match &cli.out {
        Some(dir) => match emit::write_all(&bundle, cli.format, dir) {
            Ok(files) => {
                for f in files {
                    eprintln!("wrote {}", f.display());
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                return e.exit_code();
            }
        },
        None => {
            let (_, body) = emit::render(&bundle, cli.format).swap_remove(0);
            print!("{body}");
        }
    }

    if bundle.inconsistent() {
        eprintln!("error: {}: stability verdict disagrees with the computed spectrum", loaded.path);
        return exit::INCONSISTENT;
    }
    let failed = bundle.failed_checks();
    if !failed.is_empty() {
        let names: Vec<&str> = failed.iter().map(|c| c.name.as_str()).collect();
        eprintln!("error: {}: invariant checks failed: {}", loaded.path, names.join(", "));
        return exit::COMPUTATION;
    }
    exit::OK
}
