use std::collections::BTreeMap;
use std::net::UdpSocket;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use bnn::config::{load_connectome, RunConfig};
use bnn::experiment::{read_events_csv, read_plasticity_csv, run_experiment, summarize};
use bnn::hub::{HubNode, HubState};
use bnn::node::Node;
use bnn::protocol::PartnerRole;
use bnn::render::{render_raster, render_weights};
use bnn::scenarios::{run_scenario_suite, select_scenarios};
use bnn::transport::udp::UdpRunner;
use bnn::{artificial::PrimaryNode, bio::SecondaryNode, config::derive_seed};

#[derive(Parser)]
#[command(
    name = "bnn",
    about = "Distributed bio-hybrid spiking network simulator and protocol stack",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full experiment on the deterministic virtual-time network.
    RunSim {
        #[arg(long)]
        config: PathBuf,
        /// Override the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (defaults to the config's run.out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the synapse hub over real UDP.
    RunHub {
        #[arg(long)]
        config: PathBuf,
        /// How long to serve before exporting logs, in seconds.
        #[arg(long)]
        duration_s: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the artificial-neuron (primary) node over real UDP.
    RunPrimary {
        #[arg(long)]
        config: PathBuf,
        /// Hub address, host:port (defaults to 127.0.0.1:<hub.listen_port>).
        #[arg(long)]
        hub_addr: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Wall run time in seconds (defaults to schedule length + 2 s).
        #[arg(long)]
        duration_s: Option<f64>,
    },
    /// Run the biological-neuron (secondary) node over real UDP.
    RunSecondary {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        hub_addr: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        duration_s: Option<f64>,
    },
    /// Recompute the phase summary from exported artifacts.
    Summarize {
        /// Directory holding events.csv and plasticity.csv.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the robustness scenario suite and write a comparison report.
    RunScenarios {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Scenario names to run (default: the whole built-in suite).
        #[arg(long)]
        suite: Vec<String>,
    },
    /// Render raster and weight-trajectory SVGs from exported artifacts.
    Render {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &std::path::Path, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = seed {
        cfg.run.seed = seed;
    }
    Ok(cfg)
}

fn print_summary(summary: &[bnn::experiment::PhaseSummary]) {
    println!("phase  window_s        synapse  ltp/ltd/none        mean_w  bn_aps  anpost_hz");
    for s in summary {
        for syn in &s.synapses {
            println!(
                "{:>5}  {:>6.1}-{:<6.1}  {:>7}  {:>5}/{:<5}/{:<6}  {:6.3}  {:>6}  {:>9.2}",
                s.index,
                s.start_ms as f64 / 1000.0,
                s.end_ms as f64 / 1000.0,
                syn.synapse_id,
                syn.n_ltp,
                syn.n_ltd,
                syn.n_none,
                syn.mean_weight,
                s.bn_ap_count,
                s.anpost_rate_hz
            );
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::RunSim { config, seed, out } => {
            let cfg = load_config(&config, seed)?;
            let out_dir = out.unwrap_or_else(|| PathBuf::from(&cfg.run.out_dir));
            let start = std::time::Instant::now();
            let artifacts = run_experiment(&cfg, &out_dir)?;
            println!(
                "simulated {:.1} s in {:.2} s wall, {} events, {} plasticity records -> {}",
                cfg.duration_ms() as f64 / 1000.0,
                start.elapsed().as_secs_f64(),
                artifacts.events.len(),
                artifacts.plasticity.len(),
                out_dir.display()
            );
            print_summary(&artifacts.summary);
        }
        Command::RunHub {
            config,
            duration_s,
            out,
            seed,
        } => {
            let cfg = load_config(&config, seed)?;
            let matrix = load_connectome(&cfg.connectome)?;
            let tags = cfg.protocol.role_tags();
            let state = HubState::new(matrix, &cfg.memristor, cfg.bcm, tags, cfg.run.seed);
            let mut node = HubNode::new(state, tags);
            let socket = UdpSocket::bind(("0.0.0.0", cfg.hub.listen_port))
                .with_context(|| format!("binding hub port {}", cfg.hub.listen_port))?;
            let peers = BTreeMap::from([
                (PartnerRole::Primary, cfg.hub.primary_addr.parse()?),
                (PartnerRole::Secondary, cfg.hub.secondary_addr.parse()?),
            ]);
            log::info!(
                "hub listening on :{} for {:.1} s",
                cfg.hub.listen_port,
                duration_s
            );
            UdpRunner::new(&mut node, socket, peers).run((duration_s * 1e6) as u64)?;
            let out_dir = out.unwrap_or_else(|| PathBuf::from(&cfg.run.out_dir));
            let state = node.into_state();
            state.export_log(&out_dir)?;
            let summary = summarize(&cfg, state.events(), state.plasticity());
            bnn::experiment::write_summary_csv(&summary, &out_dir.join("summary.csv"))?;
            println!(
                "hub processed {} packets -> {}",
                state.accepted_packets(),
                out_dir.display()
            );
            print_summary(&summary);
        }
        Command::RunPrimary {
            config,
            hub_addr,
            seed,
            duration_s,
        } => {
            let cfg = load_config(&config, seed)?;
            let duration_us = duration_us_or_default(&cfg, duration_s);
            let tags = cfg.protocol.role_tags();
            let mut node = PrimaryNode::new(
                cfg.nodes,
                tags,
                &cfg.schedule,
                cfg.neuron,
                cfg.stim,
                duration_us,
                derive_seed(cfg.run.seed, "node/primary"),
            );
            run_udp_partner(
                &mut node,
                &cfg.hub.primary_addr,
                hub_addr.unwrap_or(format!("127.0.0.1:{}", cfg.hub.listen_port)),
                duration_us,
            )?;
            println!("primary emitted {} spikes", node.spike_log().len());
        }
        Command::RunSecondary {
            config,
            hub_addr,
            seed,
            duration_s,
        } => {
            let cfg = load_config(&config, seed)?;
            let duration_us = duration_us_or_default(&cfg, duration_s);
            let tags = cfg.protocol.role_tags();
            let mut node = SecondaryNode::new(
                cfg.nodes,
                tags,
                cfg.bio,
                duration_us,
                derive_seed(cfg.run.seed, "node/secondary"),
            );
            run_udp_partner(
                &mut node,
                &cfg.hub.secondary_addr,
                hub_addr.unwrap_or(format!("127.0.0.1:{}", cfg.hub.listen_port)),
                duration_us,
            )?;
            println!("secondary reported {} events", node.event_log().len());
        }
        Command::Summarize { input, config } => {
            let cfg = load_config(&config, None)?;
            let events = read_events_csv(&input.join("events.csv"))?;
            let plasticity = read_plasticity_csv(&input.join("plasticity.csv"))?;
            print_summary(&summarize(&cfg, &events, &plasticity));
        }
        Command::RunScenarios { config, out, suite } => {
            let cfg = load_config(&config, None)?;
            let out_root = out.unwrap_or_else(|| PathBuf::from("scenarios_out"));
            let names = if suite.is_empty() {
                None
            } else {
                Some(&suite[..])
            };
            let scenarios = select_scenarios(&cfg, names);
            if scenarios.is_empty() {
                bail!("no scenarios matched the requested suite");
            }
            let report = run_scenario_suite(&scenarios, &out_root)?;
            for o in &report.outcomes {
                match &o.result {
                    Ok(q) => println!(
                        "{:<24} ok   forward majority {:?}",
                        o.name, q.forward_majority
                    ),
                    Err(e) => println!("{:<24} FAILED: {e}", o.name),
                }
            }
            println!(
                "initial-weight variants qualitatively match: {}",
                report.weight_variants_match
            );
        }
        Command::Render { input, out } => {
            let out_dir = out.unwrap_or_else(|| input.clone());
            std::fs::create_dir_all(&out_dir)?;
            let events = read_events_csv(&input.join("events.csv"))?;
            let plasticity = read_plasticity_csv(&input.join("plasticity.csv"))?;
            render_raster(&events, &out_dir.join("raster.svg"))?;
            render_weights(&plasticity, &out_dir.join("weights.svg"))?;
            println!("wrote raster.svg and weights.svg to {}", out_dir.display());
        }
    }
    Ok(())
}

fn duration_us_or_default(cfg: &RunConfig, duration_s: Option<f64>) -> u64 {
    match duration_s {
        Some(s) => (s * 1e6) as u64,
        None => cfg.duration_ms() * 1000 + 2_000_000,
    }
}

fn run_udp_partner(
    node: &mut dyn Node,
    bind_addr: &str,
    hub_addr: String,
    duration_us: u64,
) -> Result<()> {
    let socket = UdpSocket::bind(bind_addr).with_context(|| format!("binding {bind_addr}"))?;
    let peers = BTreeMap::from([(PartnerRole::Synapse, hub_addr.parse()?)]);
    log::info!(
        "{} node on {bind_addr} -> hub {hub_addr}, running {:.1} s",
        node.role(),
        duration_us as f64 / 1e6
    );
    UdpRunner::new(node, socket, peers).run(duration_us)?;
    Ok(())
}
