use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;
use diskf::harness::{
    run_scenario, sweep_radius, write_outputs, Estimator, ScenarioConfig, ScenarioKind,
    ScenarioResult, TopologyChoice,
};

/// Decentralized input and state estimation over simulated sensor networks.
#[derive(Debug, Parser)]
#[command(name = "diskf", version)]
struct Args {
    /// Built-in scenario: stationary_4agent or dynamic_9agent.
    #[arg(long, default_value = "stationary_4agent")]
    scenario: ScenarioKind,

    /// TOML scenario file; replaces --scenario.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// all_to_all, ring, none or range.
    #[arg(long)]
    topology: Option<TopologyChoice>,

    /// Communication radius for the range topology.
    #[arg(long)]
    radius: Option<f64>,

    /// Seeds as a list ("1,2,7") or a range ("0..20", "0..=19").
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<Seeds>,

    #[arg(long)]
    horizon: Option<usize>,

    /// Observation time window length.
    #[arg(long)]
    window: Option<usize>,

    /// Compensation gain.
    #[arg(long)]
    epsilon: Option<f64>,

    /// Estimators to run, comma separated: diskf, oracle, local_only.
    #[arg(long, value_delimiter = ',', default_value = "diskf")]
    estimator: Vec<Estimator>,

    #[arg(long)]
    no_compensation: bool,

    #[arg(long)]
    no_time_window: bool,

    /// Use only the node's own input estimate.
    #[arg(long)]
    no_input_fusion: bool,

    /// Radii to sweep, comma separated. Implies the range topology.
    #[arg(long, value_delimiter = ',')]
    sweep_radii: Vec<f64>,

    /// Output directory for the CSV files.
    #[arg(long, env = "DISKF_OUT", default_value = "out")]
    out: PathBuf,

    /// Print the resolved scenario as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Debug, Clone)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> std::result::Result<Seeds, String> {
    let bad = |e: std::num::ParseIntError| format!("bad seed in {s:?}: {e}");
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..=") {
        (a.trim().parse().map_err(bad)?..=b.trim().parse().map_err(bad)?).collect()
    } else if let Some((a, b)) = s.split_once("..") {
        (a.trim().parse().map_err(bad)?..b.trim().parse().map_err(bad)?).collect()
    } else {
        s.split(',')
            .map(|x| x.trim().parse().map_err(bad))
            .collect::<std::result::Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(format!("{s:?} selects no seeds"));
    }
    Ok(Seeds(seeds))
}

fn resolve(args: &Args) -> Result<ScenarioConfig> {
    let mut config = match &args.config {
        Some(path) => {
            ScenarioConfig::load(path).with_context(|| format!("loading {}", path.display()))?
        }
        None => ScenarioConfig::preset(args.scenario),
    };
    let radius = args
        .radius
        .or_else(|| config.topology.radius())
        .unwrap_or(diskf::harness::DEFAULT_RADIUS);
    match args.topology {
        Some(choice) => config.set_topology(choice, radius),
        None if args.radius.is_some() || !args.sweep_radii.is_empty() => {
            config.set_topology(TopologyChoice::Range, radius)
        }
        None => {}
    }
    if !args.sweep_radii.is_empty() && config.topology.radius().is_none() {
        bail!("--sweep-radii needs the range topology");
    }
    if let Some(Seeds(seeds)) = &args.seeds {
        config.seeds = seeds.clone();
    }
    if let Some(h) = args.horizon {
        config.horizon = h;
    }
    if let Some(w) = args.window {
        config.settings.window = w;
    }
    if let Some(e) = args.epsilon {
        config.settings.epsilon = e;
    }
    if args.no_compensation {
        config.settings.compensation = false;
    }
    if args.no_time_window {
        config.settings.time_window = false;
    }
    if args.no_input_fusion {
        config.settings.input_fusion = false;
    }
    config.validate()?;
    Ok(config)
}

fn report(result: &ScenarioResult, radius: Option<f64>) {
    let m = &result.aggregate;
    let radius = radius.map(|r| format!(" r={r}")).unwrap_or_default();
    println!(
        "{}{radius}: mae_state {:.4} rmse_state {:.4} mae_input {:.4} rmse_input {:.4}",
        result.run_id(),
        m.mae_state,
        m.rmse_state,
        m.mae_input,
        m.rmse_input
    );
    for (seed, e) in result.failures() {
        eprintln!("{} seed {seed} failed: {e}", result.run_id());
    }
}

fn run(args: &Args) -> Result<bool> {
    let config = resolve(args)?;
    if args.print_config {
        print!("{}", config.to_toml_string()?);
        return Ok(true);
    }

    let mut results = Vec::new();
    let stem = if args.sweep_radii.is_empty() {
        for &estimator in &args.estimator {
            let result = run_scenario(&config, estimator)?;
            report(&result, config.topology.radius());
            results.push(result);
        }
        config.name.clone()
    } else {
        for &estimator in &args.estimator {
            for (radius, result) in sweep_radius(&config, &args.sweep_radii, estimator)? {
                report(&result, Some(radius));
                results.push(result);
            }
        }
        format!("{}_sweep", config.name)
    };

    for path in write_outputs(&args.out, &stem, &results)? {
        log::info!("wrote {}", path.display());
    }
    Ok(results.iter().all(|r| r.failures().next().is_none()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
