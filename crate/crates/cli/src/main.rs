use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pwomm::harness::experiment::{aggregate, poles_for};
use pwomm::harness::report::write_rows;
use pwomm::harness::{build_problem, run_cell, run_experiment, ExperimentConfig, Method, TestId};
use pwomm::potential::sample_potential;
use pwomm::SpectralGrid;

#[derive(Parser)]
#[command(name = "pwomm", version, about = "Preconditioned orbital minimization benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the sampled potential of one lattice as `index,x,y,value` CSV.
    Gen(Common),
    /// Run one (ℓ, method, seed) cell and print its table row.
    Solve(Common),
    /// Run the full (ℓ, method, seed) grid and write the table.
    Bench(Common),
    /// Export the pole set for one lattice; the indicator error goes to stderr.
    Poles(Common),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// test1, test2, test3 or custom.
    #[arg(long)]
    test: Option<TestId>,
    /// Cells per side; comma separated or repeated.
    #[arg(long, value_delimiter = ',')]
    ell: Vec<usize>,
    /// none, lap, tpa, gtpa(t), pp or spp; comma separated or repeated.
    #[arg(long, value_delimiter = ',')]
    method: Vec<Method>,
    /// Initial-guess seeds; sets the repeat count to their number.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> pwomm::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => {
                let test = self.test.unwrap_or(TestId::Test1);
                let ells = if self.ell.is_empty() { ExperimentConfig::default().ells } else { self.ell.clone() };
                ExperimentConfig::for_test(test, ells)
            }
        };
        if let Some(t) = self.test {
            if t != cfg.test && self.method.is_empty() {
                cfg.methods = ExperimentConfig::for_test(t, vec![]).methods;
            }
            cfg.test = t;
        }
        if !self.ell.is_empty() {
            cfg.ells = self.ell.clone();
        }
        if !self.method.is_empty() {
            cfg.methods = self.method.clone();
        }
        if !self.seed.is_empty() {
            cfg.seeds = self.seed.clone();
            cfg.repeats = self.seed.len();
        }
        if self.out.is_some() {
            cfg.output_path = self.out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> pwomm::Result<()>) -> pwomm::Result<()> {
    match path {
        Some(p) => {
            let mut w = std::io::BufWriter::new(std::fs::File::create(p)?);
            f(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => f(&mut std::io::stdout().lock()),
    }
}

fn single(cfg: &ExperimentConfig, what: &str) -> pwomm::Result<()> {
    if cfg.ells.len() != 1 {
        return Err(pwomm::Error::Config(format!("{what} takes exactly one ell, got {}", cfg.ells.len())));
    }
    if what == "solve" && cfg.methods.len() != 1 {
        return Err(pwomm::Error::Config(format!("solve takes exactly one method, got {}", cfg.methods.len())));
    }
    Ok(())
}

fn run(cli: Cli) -> pwomm::Result<bool> {
    match cli.command {
        Command::Gen(c) => {
            let cfg = c.config()?;
            single(&cfg, "gen")?;
            let grid = SpectralGrid::new(cfg.ells[0], cfg.pts_per_cell)?;
            let v = sample_potential(&grid, &cfg.potential_spec())?;
            with_output(c.out.as_deref(), |w| v.write_csv(&grid, w))?;
            Ok(true)
        }
        Command::Solve(c) => {
            let cfg = c.config()?;
            single(&cfg, "solve")?;
            let method = cfg.methods[0];
            let seed = cfg.effective_seeds()[0];
            let problem = build_problem(&cfg, 0)?;
            let rec = run_cell(&problem, method, seed, &cfg);
            let row = aggregate(std::slice::from_ref(&rec))?;
            with_output(c.out.as_deref(), |w| write_rows(std::slice::from_ref(&row), w))?;
            Ok(row.status.succeeded())
        }
        Command::Bench(c) => {
            let cfg = c.config()?;
            let exp = run_experiment(&cfg)?;
            if cfg.output_path.is_none() {
                write_rows(&exp.rows, std::io::stdout().lock())?;
            }
            for row in exp.rows.iter().filter(|r| !r.status.succeeded()) {
                eprintln!("{} l={}: {:?}", row.method, row.ell, row.status);
            }
            Ok(exp.all_succeeded())
        }
        Command::Poles(c) => {
            let cfg = c.config()?;
            single(&cfg, "poles")?;
            let problem = build_problem(&cfg, 0)?;
            let (poles, err) = poles_for(&problem, cfg.pole_count)?;
            with_output(c.out.as_deref(), |w| poles.write_csv(w))?;
            eprintln!("contour={:?} poles={} indicator_error={err:e}", poles.contour, poles.len());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
