mod args;
mod error;
mod fit;
mod ingest;
mod lab;
mod manifest;
mod output;

use std::path::Path;
use std::process::ExitCode;
use std::time::SystemTime;

use clap::Parser;

use args::{Cli, Command};
use error::{CliError, CliResult};
use fit::FitConfig;
use lab::LabConfig;
use manifest::{DataFingerprint, RunConfig, RunManifest};
use output::{prepare_dir, write_json};

fn run_fit(cfg: FitConfig, out: &Path) -> CliResult<()> {
    let started = SystemTime::now();
    let result = fit::run(&cfg, out)?;
    for c in &result.chains {
        println!(
            "chain {}: {} draws, acceptance {:.3}, max drift {:.1e}",
            c.chain,
            c.len(),
            c.acceptance_rate(),
            c.max_trace_drift
        );
    }
    let data = DataFingerprint {
        path: cfg.data.clone(),
        len: result.data_len,
        sha256: result.sha256,
    };
    let seeds = vec![cfg.seed];
    let m = RunManifest::new(RunConfig::Fit(cfg), Some(data), seeds, started);
    write_json(&out.join("manifest.json"), &m)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn run_lab(cfg: LabConfig, out: &Path) -> CliResult<()> {
    let started = SystemTime::now();
    let report = lab::run(&cfg, out)?;
    for c in &report.checks {
        println!(
            "{:<5} {}: {:.4} (target {} ± {})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.target,
            c.tolerance
        );
    }
    let seeds = cfg.seeds();
    let m = RunManifest::new(RunConfig::Lab(cfg), None, seeds, started);
    write_json(&out.join("manifest.json"), &m)?;
    println!(
        "{}: {}",
        report.experiment,
        if report.passed {
            "all checks passed"
        } else {
            "some checks failed"
        }
    );
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be positive".into()));
        }
        pool = pool.num_threads(w);
    }
    pool.build_global().map_err(|e| CliError::Usage(e.to_string()))?;
    match cli.command {
        Command::Fit(a) => {
            let cfg = FitConfig::from_args(&a)?;
            prepare_dir(&a.out, a.force)?;
            run_fit(cfg, &a.out)
        }
        Command::Lab(a) => {
            let cfg = LabConfig::from_args(&a)?;
            prepare_dir(&a.out, a.force)?;
            run_lab(cfg, &a.out)
        }
        Command::Replay(a) => {
            let m = RunManifest::load(&a.manifest)?;
            if let (RunConfig::Fit(cfg), Some(d)) = (&m.run, &m.data) {
                let (_, sha) = ingest::read_file(&cfg.data)?;
                if sha != d.sha256 {
                    return Err(CliError::Data(format!(
                        "{} has changed since the manifest was written",
                        cfg.data.display()
                    )));
                }
            }
            if m.version != env!("CARGO_PKG_VERSION") {
                eprintln!(
                    "warning: manifest written by version {}, running {}",
                    m.version,
                    env!("CARGO_PKG_VERSION")
                );
            }
            prepare_dir(&a.out, a.force)?;
            match m.run {
                RunConfig::Fit(cfg) => run_fit(cfg, &a.out),
                RunConfig::Lab(cfg) => run_lab(cfg, &a.out),
            }
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qpyramid: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
