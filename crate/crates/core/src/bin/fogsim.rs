use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing::info;

use fogsim::harness::{load_scenario, report, run_scenario, Scenario, ScenarioConfig};
use fogsim::sweep::run_replicas;
use fogsim::topology::{generate_clustered, TopologyGenParams};

#[derive(Parser)]
#[command(name = "fogsim", version, about = "Rural fog access network simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and write its traces.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to runs/<scenario name>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the duration, ms.
        #[arg(long)]
        duration: Option<u64>,
        /// Independent replicas with consecutive seeds, written to rep<k>/.
        #[arg(long, default_value_t = 1)]
        replicas: u64,
    },
    /// Parse and check a scenario without running it.
    Validate { scenario: PathBuf },
    /// Generate a topology from a TOML parameter file.
    GenTopology {
        params: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the summary of a finished run from its traces.
    Report { run_dir: PathBuf },
}

fn load(path: &Path) -> Result<ScenarioConfig, String> {
    load_scenario(path).map_err(|e| e.to_string())
}

fn resolve(cfg: ScenarioConfig) -> Result<Scenario, String> {
    let sc = Scenario::resolve(cfg).map_err(|e| e.to_string())?;
    info!("resolved scenario:\n{}", sc.resolved_toml());
    Ok(sc)
}

fn run(
    path: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    duration: Option<u64>,
    replicas: u64,
) -> Result<(), String> {
    let mut cfg = load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(d) = duration {
        cfg.duration_ms = d;
    }
    let out = out.unwrap_or_else(|| {
        let stem = path.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
        PathBuf::from("runs").join(stem)
    });
    if replicas <= 1 {
        let sc = resolve(cfg)?;
        let output = run_scenario(&sc).map_err(|e| e.to_string())?;
        output
            .write_to(&out)
            .map_err(|e| format!("cannot write {}: {e}", out.display()))?;
        print!("{}", output.summary.to_tsv());
        return Ok(());
    }
    resolve(cfg.clone())?;
    let seeds: Vec<u64> = (0..replicas).map(|k| cfg.seed + k).collect();
    for (k, res) in run_replicas(&cfg, &seeds).into_iter().enumerate() {
        let output = res.map_err(|e| format!("replica {k}: {e}"))?;
        let dir = out.join(format!("rep{k}"));
        output
            .write_to(&dir)
            .map_err(|e| format!("cannot write {}: {e}", dir.display()))?;
        println!("{}\tseed {}\trequests {}\tadmitted {}", dir.display(), seeds[k], output.summary.requests, output.summary.admitted);
    }
    Ok(())
}

fn validate(path: &Path) -> Result<(), String> {
    let sc = resolve(load(path)?)?;
    println!(
        "{}: ok ({} nodes, {} links, {} clusters, {} fogs, {} users)",
        path.display(),
        sc.topo.nodes().len(),
        sc.topo.links().len(),
        sc.topo.clusters().len(),
        sc.topo.fogs().len(),
        sc.topo.users().count()
    );
    Ok(())
}

fn gen_topology(params: &Path, out: Option<PathBuf>) -> Result<(), String> {
    let text = std::fs::read_to_string(params).map_err(|e| format!("cannot read {}: {e}", params.display()))?;
    let p: TopologyGenParams = toml::from_str(&text).map_err(|e| format!("cannot parse {}: {e}", params.display()))?;
    let topo = generate_clustered(&p).map_err(|e| e.to_string())?;
    let doc = topo.to_toml_string();
    match out {
        Some(o) => std::fs::write(&o, doc).map_err(|e| format!("cannot write {}: {e}", o.display())),
        None => {
            print!("{doc}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    // Usage errors exit with 2 from here.
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run {
            scenario,
            seed,
            out,
            duration,
            replicas,
        } => run(&scenario, seed, out, duration, replicas),
        Cmd::Validate { scenario } => validate(&scenario),
        Cmd::GenTopology { params, out } => gen_topology(&params, out),
        Cmd::Report { run_dir } => report(&run_dir).map(|s| print!("{}", s.to_tsv())).map_err(|e| e.to_string()),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
