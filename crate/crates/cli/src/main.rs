use std::net::TcpListener;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use fedbrain_core::federation::{run_federation, run_tcp_client, TcpServerTransport};
use fedbrain_core::harness::{
    self, federated_fold, single_site_l2, split_cohort, Configuration, ExperimentConfig,
    FederatedFold, ModelFamily, TransportKind,
};

/// Federated BrainAGE experiments on synthetic or CSV cohorts.
#[derive(Parser)]
#[command(name = "fedbrain", version)]
struct Cli {
    /// Experiment config (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run a single seed, overriding the config's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the cohort of every seed as CSV.
    GenerateData,
    /// Train the selected families and configurations.
    Train {
        /// Restrict to these families (repeatable).
        #[arg(long)]
        family: Vec<ModelFamily>,
        /// Restrict to these configurations (repeatable).
        #[arg(long)]
        configuration: Vec<Configuration>,
        /// Parameter transport for federated runs.
        #[arg(long, default_value = "inproc")]
        transport: TransportKind,
    },
    /// BrainAGE correction, error tables and cohort summary.
    Evaluate,
    /// Phenotype and outcome analyses.
    Stats,
    /// Evaluate, stats and the Markdown summary.
    Report,
    /// Coordinate one federated fold over TCP.
    ServeServer {
        #[arg(long)]
        listen: String,
        #[arg(long)]
        family: ModelFamily,
        #[arg(long, default_value_t = 0)]
        fold: usize,
    },
    /// Serve one center's data to a running server.
    ServeClient {
        #[arg(long)]
        connect: String,
        #[arg(long)]
        center_id: u32,
        #[arg(long)]
        family: ModelFamily,
        #[arg(long, default_value_t = 0)]
        fold: usize,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn build_fold(
    cfg: &ExperimentConfig,
    family: ModelFamily,
    fold: usize,
) -> Result<(u64, FederatedFold)> {
    if fold >= cfg.cv_folds_test {
        bail!(
            "fold {fold} out of range for {} test folds",
            cfg.cv_folds_test
        );
    }
    let seed = cfg.seeds[0];
    let cohort = cfg.load_cohort(seed)?;
    let split = split_cohort(&cohort, cfg, seed)?;
    let l2 = single_site_l2(&cohort, cfg, family, seed, &split)?;
    Ok((
        seed,
        federated_fold(&cohort, cfg, family, seed, &split, fold, l2)?,
    ))
}

fn serve_server(
    cfg: &ExperimentConfig,
    listen: &str,
    family: ModelFamily,
    fold: usize,
) -> Result<()> {
    let (seed, ff) = build_fold(cfg, family, fold)?;
    let listener = TcpListener::bind(listen).with_context(|| format!("binding {listen}"))?;
    log::info!(
        "listening on {} for {} clients",
        listener.local_addr()?,
        ff.plan.clients.len()
    );
    let roster = ff
        .plan
        .clients
        .iter()
        .map(|c| (c.client_id, c.sample_count))
        .collect();
    let mut transport = TcpServerTransport::accept(&listener, &roster, cfg.tcp_timeout())?;
    let (params, history) = run_federation(&ff.plan, &mut transport)?;
    let cohort = cfg.load_cohort(seed)?;
    let outcome = ff.finish(&cohort, params, history)?;
    let dir = cfg.run_dir(seed, family, Configuration::Federated);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(format!("tcp_fold_{fold}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&outcome)?)
        .with_context(|| format!("writing {}", path.display()))?;
    println!("{} {}", outcome.checksum, path.display());
    Ok(())
}

fn serve_client(
    cfg: &ExperimentConfig,
    addr: &str,
    center: u32,
    family: ModelFamily,
    fold: usize,
) -> Result<()> {
    let (_, ff) = build_fold(cfg, family, fold)?;
    let Some(site) = ff.plan.clients.iter().find(|c| c.client_id == center) else {
        bail!("center {center} has no training subjects in fold {fold}");
    };
    let rounds = run_tcp_client(addr, site, &ff.plan.train_cfg, cfg.tcp_timeout())?;
    log::info!("center {center} served {rounds} rounds");
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::GenerateData => {
            for path in harness::generate_data(&cfg)? {
                println!("{}", path.display());
            }
        }
        Command::Train {
            family,
            configuration,
            transport,
        } => {
            if !family.is_empty() {
                cfg.families = family;
            }
            if !configuration.is_empty() {
                cfg.configurations = configuration;
            }
            cfg.transport = transport;
            for run in harness::train(&cfg)? {
                let dir = cfg.run_dir(run.seed, run.family, run.configuration);
                println!("{}", dir.display());
            }
        }
        Command::Evaluate => harness::evaluate(&cfg)?,
        Command::Stats => harness::stats(&cfg)?,
        Command::Report => println!("{}", harness::report(&cfg)?.display()),
        Command::ServeServer {
            listen,
            family,
            fold,
        } => serve_server(&cfg, &listen, family, fold)?,
        Command::ServeClient {
            connect,
            center_id,
            family,
            fold,
        } => serve_client(&cfg, &connect, center_id, family, fold)?,
    }
    Ok(())
}
