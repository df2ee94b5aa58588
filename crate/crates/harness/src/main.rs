use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use podds_core::ide::BoundaryRule;
use podds_harness::dataset::{read_dataset, write_dataset};
use podds_harness::runner::{estimate_dataset, write_h0_profiles, write_outputs};
use podds_harness::verify::truth_h0;
use podds_harness::{run_scenario, run_suite, HarnessError, Result, Scenario, Suite, VerifyConfig};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "podds", version, about = "Proportional odds efficient-score experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario JSON file or built-in name (s1, s1-n500, s2, s3-spline).
    #[arg(long, default_value = "s1")]
    scenario: String,
    /// Override the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the grid size M.
    #[arg(long)]
    grid: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<Scenario> {
        let mut s = Scenario::resolve(&self.scenario)?;
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(m) = self.grid {
            s.grid = m;
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the replicated Monte-Carlo study of a scenario.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Worker threads; defaults to all cores.
        #[arg(long)]
        jobs: Option<usize>,
        /// Override the replicate count.
        #[arg(long)]
        replicates: Option<usize>,
        /// Also write `h0` at the truth to h0_profiles.csv.
        #[arg(long)]
        h0_profiles: bool,
    },
    /// Estimate beta on one dataset, read from CSV or simulated from the scenario.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Dataset with header x,delta,a,z1..zk.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run a verification suite and print a JSON report.
    Verify {
        #[arg(value_enum)]
        suite: SuiteArg,
        /// Scenario file or built-in name; each suite has its own default.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        grid: usize,
        /// Monte-Carlo sample size.
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve for h0 at the true nuisances and report residuals.
    SolveH0 {
        #[command(flatten)]
        common: Common,
        /// Evaluate at this beta instead of the scenario's.
        #[arg(long, allow_hyphen_values = true)]
        beta: Option<f64>,
        #[arg(long, value_enum, default_value_t = RuleArg::Projection)]
        rule: RuleArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Algebra,
    Ide,
    Orthogonality,
    Towerlaw,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Projection,
    InitialValue,
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn simulate(common: &Common, jobs: Option<usize>, replicates: Option<usize>, h0: bool) -> Result<()> {
    let mut scenario = common.load()?;
    if let Some(r) = replicates {
        scenario.replicates = r;
        scenario.validate()?;
    }
    let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let run = run_scenario(&scenario, jobs)?;
    let dir = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("podds-out").join(&scenario.name));
    write_outputs(&run, &dir)?;
    if h0 {
        let (sol, _) = truth_h0(&scenario, scenario.grid, scenario.boundary)?;
        let path = dir.join("h0_profiles.csv");
        let file = std::fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
        write_h0_profiles(&sol, std::io::BufWriter::new(file))?;
    }
    print!("{}", run.summary.to_text());
    eprintln!("wrote {}", dir.display());
    run.summary.check_failures()
}

fn estimate(common: &Common, data_path: Option<&Path>) -> Result<()> {
    let scenario = common.load()?;
    let data = match data_path {
        Some(p) => read_dataset(p, &scenario.treatment.law)?,
        None => scenario.generator()?.generate(scenario.n, scenario.seed)?,
    };
    let rows = estimate_dataset(&scenario, &data, 0, scenario.seed);
    let report = serde_json::json!({
        "scenario": scenario.name,
        "n": data.len(),
        "seed": data_path.is_none().then_some(scenario.seed),
        "nuisance": scenario.nuisance,
        "estimates": rows,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(dir) = &common.out {
        mkdir(dir)?;
        write_json(&report, &dir.join("estimate.json"))?;
        if data_path.is_none() {
            write_dataset(&data, &dir.join("data.csv"))?;
        }
    }
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.is_ok())
        .map(|r| format!("{}: {}", r.kind, r.error))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(HarnessError::Verification(failed.join("; ")))
    }
}

fn verify(suite: SuiteArg, scenario: Option<&str>, config: VerifyConfig, out: Option<&Path>) -> Result<()> {
    let suites: Vec<Suite> = match suite {
        SuiteArg::Algebra => vec![Suite::Algebra],
        SuiteArg::Ide => vec![Suite::Ide],
        SuiteArg::Orthogonality => vec![Suite::Orthogonality],
        SuiteArg::Towerlaw => vec![Suite::Towerlaw],
        SuiteArg::All => Suite::ALL.to_vec(),
    };
    let config = VerifyConfig {
        scenario: scenario.map(Scenario::resolve).transpose()?,
        ..config
    };
    let mut reports = Vec::new();
    for s in suites {
        let report = run_suite(s, &config)?;
        for c in &report.checks {
            eprintln!(
                "{:<6} {:<14} {:<40} {:>12.4e} (threshold {:.4e})",
                if c.pass { "PASS" } else { "FAIL" },
                s.as_str(),
                c.name,
                c.value,
                c.threshold
            );
        }
        reports.push(report);
    }
    println!("{}", serde_json::to_string_pretty(&reports)?);
    if let Some(dir) = out {
        mkdir(dir)?;
        write_json(&reports, &dir.join("verify.json"))?;
    }
    let failed: Vec<String> = reports
        .iter()
        .flat_map(|r| r.failed().map(move |c| format!("{}:{}", r.suite.as_str(), c.name)))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(HarnessError::Verification(failed.join(", ")))
    }
}

fn solve_h0(common: &Common, beta: Option<f64>, rule: RuleArg) -> Result<()> {
    let mut scenario = common.load()?;
    if let Some(b) = beta {
        scenario.model.beta = b;
        scenario.validate()?;
    }
    let rule = match rule {
        RuleArg::Projection => BoundaryRule::Projection,
        RuleArg::InitialValue => BoundaryRule::InitialValue,
    };
    let (sol, projection) = truth_h0(&scenario, scenario.grid, rule)?;
    println!(
        "{:<12} {:>12} {:>12} {:>14} {:>14}",
        "profile", "shift", "ide_resid", "literal_cond", "full_cond"
    );
    for (p, (label, res)) in sol.profiles.values().zip(&projection) {
        println!(
            "{:<12} {:>12.5e} {:>12.3e} {:>14.3e} {:>14.3e}",
            label, p.boundary_shift, p.residual, res.literal, res.corrected
        );
    }
    if let Some(dir) = &common.out {
        mkdir(dir)?;
        let path = dir.join("h0_profiles.csv");
        let file = std::fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
        write_h0_profiles(&sol, std::io::BufWriter::new(file))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate {
            common,
            jobs,
            replicates,
            h0_profiles,
        } => simulate(common, *jobs, *replicates, *h0_profiles),
        Command::Estimate { common, data } => estimate(common, data.as_deref()),
        Command::Verify {
            suite,
            scenario,
            seed,
            grid,
            n,
            out,
        } => verify(
            *suite,
            scenario.as_deref(),
            VerifyConfig {
                seed: *seed,
                grid: *grid,
                n: *n,
                scenario: None,
            },
            out.as_deref(),
        ),
        Command::SolveH0 { common, beta, rule } => solve_h0(common, *beta, *rule),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
