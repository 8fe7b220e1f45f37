use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use tiersim::run::{run_scenario, RunArtifacts};
use tiersim::{Error, InferenceMode, Scenario, SimTime};

/// Run sensor/gateway/cloud adaptive inference scenarios.
#[derive(Parser, Debug)]
#[command(name = "tiersim", version)]
struct Cli {
    /// Scenario files (TOML). Several files run in parallel, each writing to
    /// its own subdirectory of --out.
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    scenarios: Vec<PathBuf>,

    /// Run a built-in scenario instead of a file.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,

    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Stop at this simulated time in milliseconds instead of the
    /// scenario's duration.
    #[arg(long, value_name = "MS")]
    until: Option<u64>,

    #[arg(long, short)]
    quiet: bool,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn load(cli: &Cli, path: Option<&Path>) -> Result<Scenario, String> {
    let mut s = match (path, &cli.preset) {
        (Some(p), _) => Scenario::from_path(p).map_err(|e| format!("{}: {e}", p.display()))?,
        (None, Some(name)) => Scenario::preset(name).map_err(|e| {
            let known: Vec<_> = Scenario::preset_names().collect();
            format!("{e} (available: {})", known.join(", "))
        })?,
        (None, None) => unreachable!("clap requires one of them"),
    };
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn execute(cli: &Cli, scenario: &Scenario, out: &Path) -> Result<RunArtifacts, Error> {
    let artifacts = run_scenario(scenario, cli.until.map(SimTime::from_millis))?;
    artifacts.write(out)?;
    Ok(artifacts)
}

fn report(a: &RunArtifacts, out: &Path) {
    let s = &a.summary;
    println!("{} (seed {}) -> {}", a.scenario.name, a.scenario.seed, out.display());
    for m in InferenceMode::ALL {
        let l = s.latency[&m];
        println!(
            "  {m}: {:>6.2}% of node-time, {:>4} latency samples, mean {:.3} ms",
            s.occupancy[&m] * 100.0,
            l.count,
            l.mean_ms
        );
    }
    println!(
        "  transitions {}, requests {} sent / {} answered, energy {:.3} J",
        s.transitions,
        s.requests.sent,
        s.requests.answered(),
        s.total_energy_mj / 1_000.0
    );
    for n in &s.nodes {
        let life = n
            .projected_life_h
            .map_or("n/a".to_string(), |h| format!("{h:.1} h"));
        println!(
            "  node {}: battery {:.3}%, projected life {life}{}",
            n.node,
            n.final_battery_pct,
            if n.dead { " (dead)" } else { "" }
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let jobs: Vec<(Scenario, PathBuf)> = {
        let mut jobs = Vec::new();
        if cli.scenarios.is_empty() {
            match load(&cli, None) {
                Ok(s) => jobs.push((s, cli.out.clone())),
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            }
        }
        let many = cli.scenarios.len() > 1;
        for path in &cli.scenarios {
            match load(&cli, Some(path)) {
                Ok(s) => {
                    let stem = path.file_stem().unwrap_or_default();
                    let out = if many { cli.out.join(stem) } else { cli.out.clone() };
                    jobs.push((s, out));
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            }
        }
        jobs
    };

    let results: Vec<Result<RunArtifacts, Error>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(s, out)| scope.spawn(|| execute(&cli, s, out)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run thread panicked"))
            .collect()
    });

    let mut code = 0;
    for ((_, out), result) in jobs.iter().zip(results) {
        match result {
            Ok(a) if !cli.quiet => report(&a, out),
            Ok(_) => {}
            Err(e) => {
                eprintln!("error: {e}");
                code = code.max(match e {
                    Error::Config(_) => EXIT_CONFIG,
                    _ => EXIT_RUNTIME,
                });
            }
        }
    }
    ExitCode::from(code)
}
