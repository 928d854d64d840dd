use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use drcons::harness::acceptance::{run_criterion, CriterionResult, C4_TOL, C5_TOL, C6_TOL};
use drcons::harness::diag::{covariance_trial, gradcheck_trial, kappa_trial, DEFAULT_DIAG_H};
use drcons::harness::{run_scenario_with_jobs, write_outputs, LedgerAudit, OutputFormat, RunManifest, Scenario};
use drcons::Rng;

#[derive(Parser)]
#[command(name = "drcons", version, about = "Seeded DRC-ONS experiments, diagnostics and the acceptance suite")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed override: replaces a scenario's seed list, or offsets the acceptance and diag seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path without extension.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every available core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell of a scenario file.
    Run { scenario: PathBuf },
    /// Run the acceptance criteria.
    Acceptance {
        /// Comma-separated criterion ids; default all ten.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
    /// Randomized numerical diagnostics.
    Diag {
        #[arg(value_enum)]
        check: DiagCheck,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Context steps for the covariance check.
        #[arg(long, default_value_t = 200)]
        horizon: usize,
        /// Markov truncation for the covariance check.
        #[arg(long, default_value_t = DEFAULT_DIAG_H)]
        h: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DiagCheck {
    Kappa,
    Covariance,
    Gradcheck,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(2);
    }
    let outcome = match &cli.command {
        Command::Run { scenario } => run(&cli, scenario),
        Command::Acceptance { only } => acceptance(&cli, only),
        Command::Diag { check, trials, horizon, h } => diag(&cli, *check, *trials, *horizon, *h),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli, path: &Path) -> Result<bool> {
    let mut scenario = Scenario::from_path(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = cli.seed {
        scenario.seeds = vec![seed];
    }
    let base = match (&cli.out, &scenario.output) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => PathBuf::from(p),
        (None, None) => PathBuf::from("results").join(&scenario.id),
    };
    let out = run_scenario_with_jobs(&scenario, cli.jobs, None)?;
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed_override: cli.seed,
        jobs: rayon::current_num_threads(),
        cells: out.timings.len(),
        rows: out.rows.len(),
        failed: out.failed(),
        timings: out.timings.clone(),
        scenario,
        results: None,
    };
    let written = write_outputs(&base, cli.format.into(), manifest, &out.rows)?;
    for row in out.rows.iter().filter(|r| r.status == drcons::harness::Status::Failed) {
        eprintln!("failed: seed={} T={} param={:?}: {}", row.seed, row.horizon, row.param, row.reason);
    }
    let names: Vec<String> = written.iter().map(|p| p.display().to_string()).collect();
    println!("{} rows, {} failed; wrote {}", out.rows.len(), out.failed(), names.join(", "));
    Ok(out.failed() == 0)
}

fn acceptance(cli: &Cli, only: &[u8]) -> Result<bool> {
    let ids: Vec<u8> = if only.is_empty() { (1..=10).collect() } else { only.to_vec() };
    if let Some(bad) = ids.iter().find(|&&id| !(1..=10).contains(&id)) {
        bail!("criterion ids run from 1 to 10, got {bad}");
    }
    let base = cli.seed.unwrap_or(0);
    let audit = LedgerAudit::default();
    let mut results = Vec::new();
    // C10 reads the shared ledger audit, so it goes last.
    let mut ordered = ids.clone();
    ordered.sort_by_key(|&id| (id == 10, id));
    for id in ordered {
        let r = run_criterion(id, base, &audit);
        println!("{r}");
        results.push(r);
    }
    let passed = results.iter().filter(|r| r.passed).count();
    println!("acceptance: {passed}/{} passed", results.len());
    if let Some(base) = &cli.out {
        write_records(base, cli.format, &results, |r: &CriterionResult| vec![
            r.id.to_string(),
            r.name.to_string(),
            r.passed.to_string(),
            format!("{:.3}", r.seconds),
            r.detail.clone(),
        ], &["id", "name", "passed", "seconds", "detail"])?;
    }
    Ok(passed == results.len())
}

#[derive(Serialize)]
struct DiagRow {
    trial: usize,
    seed: u64,
    value: f64,
    bound: f64,
    passed: bool,
}

fn diag(cli: &Cli, check: DiagCheck, trials: usize, horizon: usize, h: usize) -> Result<bool> {
    let base = cli.seed.unwrap_or(0);
    let mut rows = Vec::with_capacity(trials);
    for trial in 0..trials {
        let seed = base + trial as u64;
        let mut rng = Rng::new(seed);
        let (value, bound, passed) = match check {
            DiagCheck::Kappa => {
                let k = kappa_trial(&mut rng)?;
                (k.kappa, k.bound, k.margin >= -C4_TOL)
            }
            DiagCheck::Covariance => {
                let c = covariance_trial(&mut rng, horizon, h)?;
                (c.gap, -C5_TOL, c.gap >= -C5_TOL)
            }
            DiagCheck::Gradcheck => {
                let e = gradcheck_trial(&mut rng)?;
                (e, C6_TOL, e < C6_TOL)
            }
        };
        rows.push(DiagRow { trial, seed, value, bound, passed });
    }
    let header = ["trial", "seed", "value", "bound", "passed"];
    let to_fields = |r: &DiagRow| vec![r.trial.to_string(), r.seed.to_string(), r.value.to_string(), r.bound.to_string(), r.passed.to_string()];
    match &cli.out {
        Some(base) => write_records(base, cli.format, &rows, to_fields, &header)?,
        None => print_records(cli.format, &rows, to_fields, &header)?,
    }
    let ok = rows.iter().filter(|r| r.passed).count();
    eprintln!("{ok}/{trials} trials within tolerance");
    Ok(ok == trials)
}

fn render<T: Serialize>(format: Format, rows: &[T], fields: impl Fn(&T) -> Vec<String>, header: &[&str]) -> Result<String> {
    Ok(match format {
        Format::Json => serde_json::to_string_pretty(rows)? + "\n",
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(header)?;
            for r in rows {
                w.write_record(fields(r))?;
            }
            String::from_utf8(w.into_inner().context("flushing CSV")?)?
        }
    })
}

fn print_records<T: Serialize>(format: Format, rows: &[T], fields: impl Fn(&T) -> Vec<String>, header: &[&str]) -> Result<()> {
    print!("{}", render(format, rows, fields, header)?);
    Ok(())
}

fn write_records<T: Serialize>(base: &Path, format: Format, rows: &[T], fields: impl Fn(&T) -> Vec<String>, header: &[&str]) -> Result<()> {
    let path = base.with_extension(match format {
        Format::Csv => "csv",
        Format::Json => "json",
    });
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&path, render(format, rows, fields, header)?).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}
