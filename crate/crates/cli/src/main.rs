use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use nodal_core::runner::{self, Command, Overrides, RunConfig, RunFailure, SchemeKind};

/// Nodal eigencurves and bifurcation diagrams of -u'' - mu u = lambda m u - a u^2.
#[derive(Parser, Debug)]
#[command(name = "nodal", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Sample Sigma_n(lambda) and write curves.csv / curves.svg.
    Eigencurves(Common),
    /// Compare the three routes to Sigma_n''(0) for m = sin(2 k pi x).
    VerifyTheorem(Common),
    /// Roots of Sigma_n(lambda) = mu for each requested mode.
    Bifpoints(Common),
    /// Trace all branches bifurcating from u = 0 at one mu.
    Branch(Common),
    /// Trace branches at several mu, continuing detached ones by homotopy.
    Sweep(Common),
    /// Run a bundled figure recipe (fig1 .. fig8).
    Reproduce {
        figure: String,
        #[command(flatten)]
        common: Common,
    },
    /// Render branch or eigencurve CSVs to one SVG.
    Plot {
        /// Input CSV files.
        #[arg(long = "in", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug, Default)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Indefinite weight, e.g. sine:2.
    #[arg(long)]
    m: Option<String>,
    /// Nonlinear coefficient, e.g. piecewise-sine.
    #[arg(long)]
    a: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
    /// Comma-separated list of mu values.
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
    mu_list: Option<List<f64>>,
    /// Modes as `2`, `1,3` or `1..5`.
    #[arg(long, alias = "mode", value_parser = parse_modes)]
    modes: Option<List<usize>>,
    /// Lambda window `lo:hi`.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    range: Option<(f64, f64)>,
    #[arg(long, allow_hyphen_values = true)]
    step: Option<f64>,
    /// fd or spectral.
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<SchemeKind>,
    #[arg(long)]
    n_interior: Option<usize>,
    #[arg(long)]
    n_modes: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Output directory (output file for `plot`); defaults under $NODAL_OUT.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            m: self.m.clone(),
            a: self.a.clone(),
            scheme: self.scheme,
            n_interior: self.n_interior,
            n_modes: self.n_modes,
            range: self.range,
            step: self.step,
            mu: self.mu,
            mu_list: self.mu_list.clone().map(|l| l.0),
            modes: self.modes.clone().map(|l| l.0),
            k: self.k,
            out: self.out.clone(),
            seed: self.seed,
            jobs: self.jobs,
        }
    }

    fn load(&self) -> anyhow::Result<RunConfig> {
        match &self.config {
            Some(path) => RunConfig::load(path).with_context(|| format!("loading {}", path.display())),
            None => Ok(RunConfig::default()),
        }
    }
}

/// A comma-separated flag value kept as one argument.
#[derive(Clone, Debug, PartialEq)]
struct List<T>(Vec<T>);

fn parse_list(s: &str) -> Result<List<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect::<Result<_, _>>()
        .map(List)
}

fn parse_modes(s: &str) -> Result<List<usize>, String> {
    expand_modes(s).map(List)
}

fn expand_modes(s: &str) -> Result<Vec<usize>, String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("`{t}` is not a mode number"));
    if let Some((lo, hi)) = s.split_once("..") {
        let (lo, hi) = (num(lo)?, num(hi.trim_start_matches('='))?);
        if lo == 0 || lo > hi {
            return Err(format!("bad mode range `{s}`"));
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',').map(num).collect()
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got `{s}`"))?;
    let p = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number"));
    Ok((p(lo)?, p(hi)?))
}

fn parse_scheme(s: &str) -> Result<SchemeKind, String> {
    s.parse().map_err(|e: nodal_core::Error| e.to_string())
}

fn report(result: Result<runner::RunReport, RunFailure>) -> ExitCode {
    match result {
        Ok(report) => {
            for c in &report.manifest.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("artifacts in {}", report.dir.display());
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: some checks failed");
                ExitCode::from(1)
            }
        }
        Err(f) => {
            eprintln!("error in stage `{}`: {}", f.stage, f.source);
            ExitCode::from(f.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match &cli.command {
        Cmd::Eigencurves(c) => (Command::Eigencurves, c),
        Cmd::VerifyTheorem(c) => (Command::VerifyTheorem, c),
        Cmd::Bifpoints(c) => (Command::BifPoints, c),
        Cmd::Branch(c) => (Command::Branch, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
        Cmd::Reproduce { figure, common } => (Command::Reproduce(figure.clone()), common),
        Cmd::Plot { inputs, common } => (Command::Plot { inputs: inputs.clone() }, common),
    };
    let cfg = match prepare(&command, common) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    report(runner::run(&command, &cfg, &common.overrides()))
}

/// Merge the config file with flags. Recipes carry their own weights and
/// levels, so for `reproduce` only output and parallelism flags reach `cfg`.
fn prepare(command: &Command, common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = common.load()?;
    match command {
        Command::Reproduce(fig) => {
            if runner::recipe_source(fig).is_none() {
                bail!("unknown figure `{fig}` (expected one of {})", runner::recipe_names().join(", "));
            }
            cfg.out = common.out.clone().or(cfg.out);
            cfg.jobs = common.jobs.or(cfg.jobs);
        }
        _ => common.overrides().apply(&mut cfg),
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_syntax() {
        assert_eq!(expand_modes("1..5").unwrap(), vec![1, 2, 3, 4, 5]);
        assert_eq!(expand_modes("2").unwrap(), vec![2]);
        assert_eq!(expand_modes("1,3").unwrap(), vec![1, 3]);
        assert!(expand_modes("0..2").is_err());
        assert!(expand_modes("x").is_err());
        assert_eq!(parse_list("35,39.6").unwrap(), List(vec![35.0, 39.6]));
    }

    #[test]
    fn range_syntax() {
        assert_eq!(parse_range("-200:200").unwrap(), (-200.0, 200.0));
        assert!(parse_range("5").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
