use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use tdroute::graph::{
    build_graph, load_categories, load_edges, load_nodes, write_edges, write_nodes, NodeId,
    RoadGraph, WeightTimeline,
};
use tdroute::harness::{
    alpha_beta_sweep, average_difference, compare_pairs, write_aggregates_csv,
    write_comparisons_csv, write_json, write_sweep_csv, ExperimentConfig,
};
use tdroute::prediction::predict;
use tdroute::routing::{dynamic_dijkstra, static_dijkstra, RouteResult, RoutingError};
use tdroute::scenario;
use tdroute::simulation::{
    snapshot_rows, write_dot, write_events, write_snapshot_rows, ChoiceWeighting, SnapshotRow,
};

#[derive(Parser)]
#[command(
    name = "tdroute",
    version,
    about = "Time-dependent routing over simulated traffic"
)]
struct Cli {
    /// Overrides the seed from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the number of sampled comparison pairs.
    #[arg(long, global = true)]
    pair_count: Option<usize>,
    /// Vehicles avoid busy edges instead of preferring them.
    #[arg(long, global = true)]
    inverse_choice: bool,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Directory for output files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Dot,
}

/// Road network files; the seeded synthetic network is used when omitted.
#[derive(clap::Args)]
struct GraphArgs {
    #[arg(long, requires = "edges")]
    nodes: Option<PathBuf>,
    #[arg(long, requires = "nodes")]
    edges: Option<PathBuf>,
    /// Road category table (TOML); defaults to the config's table.
    #[arg(long)]
    categories: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the seeded synthetic network as node and edge CSV files.
    Generate(GraphArgs),
    /// Run the traffic simulation and write the event log and edge snapshots.
    Simulate {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        ticks: Option<u64>,
        /// Write a snapshot every this many ticks.
        #[arg(long, default_value_t = 1)]
        every: u64,
    },
    /// Predict per-edge travel times and write the timeline.
    Predict {
        #[command(flatten)]
        graph: GraphArgs,
        /// Seconds to predict; defaults to the config's horizon.
        #[arg(long)]
        horizon: Option<u64>,
    },
    /// Route one pair over a timeline file.
    Route {
        /// Timeline file; defaults to the bundled ten-node scenario.
        #[arg(long)]
        timeline: Option<PathBuf>,
        #[arg(long)]
        from: NodeId,
        #[arg(long)]
        to: NodeId,
        /// Plan on the first snapshot only.
        #[arg(long = "static")]
        static_route: bool,
    },
    /// Compare static and dynamic routes over many pairs.
    Compare {
        /// Timeline file; predicted from the config when omitted.
        #[arg(long)]
        timeline: Option<PathBuf>,
        /// CSV of `src,dst` pairs; sampled from the config when omitted.
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Mean static-minus-dynamic difference over an alpha-beta grid.
    Sweep,
    /// Route the bundled ten-node scenario from node 0 to node 9.
    ReplayTable4,
}

/// Invalid invocation, as opposed to bad data.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(pairs) = cli.pair_count {
        config.pairs = pairs;
    }
    if cli.inverse_choice {
        config.simulation.choice = ChoiceWeighting::Inverse;
    }
    let out = Output {
        dir: cli.out.clone(),
        format: cli.format,
    };
    match cli.command {
        Command::Generate(graph) => generate(&config, &graph, &out),
        Command::Simulate {
            graph,
            ticks,
            every,
        } => simulate(
            &config,
            &graph,
            ticks.unwrap_or(config.horizon),
            every,
            &out,
        ),
        Command::Predict { graph, horizon } => {
            predict_cmd(&config, &graph, horizon.unwrap_or(config.horizon), &out)
        }
        Command::Route {
            timeline,
            from,
            to,
            static_route,
        } => route(timeline.as_deref(), from, to, static_route, &out),
        Command::Compare { timeline, pairs } => {
            compare(&config, timeline.as_deref(), pairs.as_deref(), &out)
        }
        Command::Sweep => sweep(&config, &out),
        Command::ReplayTable4 => replay(&out),
    }
}

struct Output {
    dir: Option<PathBuf>,
    format: Format,
}

impl Output {
    /// Opens `stem` with the extension for the chosen format, or stdout when
    /// no output directory was given.
    fn open(&self, stem: &str) -> Result<Box<dyn Write>> {
        let ext = match self.format {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Dot => "dot",
        };
        self.open_file(&format!("{stem}.{ext}"))
    }

    fn open_file(&self, name: &str) -> Result<Box<dyn Write>> {
        match &self.dir {
            Some(dir) => {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                let path = dir.join(name);
                info!("writing {}", path.display());
                let file =
                    File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                Ok(Box::new(BufWriter::new(file)))
            }
            None => Ok(Box::new(io::stdout().lock())),
        }
    }

    fn reject_dot(&self, command: &str) -> Result<()> {
        if self.format == Format::Dot {
            bail!(UsageError(format!(
                "--format dot is not available for {command}"
            )));
        }
        Ok(())
    }
}

fn load_graph(config: &ExperimentConfig, args: &GraphArgs) -> Result<RoadGraph> {
    let categories = match &args.categories {
        Some(path) => load_categories(path)?,
        None => config.categories.clone(),
    };
    match (&args.nodes, &args.edges) {
        (Some(nodes), Some(edges)) => {
            let graph = build_graph(load_nodes(nodes)?, load_edges(edges, &categories)?)?;
            Ok(graph)
        }
        _ => Ok(ExperimentConfig {
            categories,
            ..config.clone()
        }
        .build_graph()?),
    }
}

fn generate(config: &ExperimentConfig, args: &GraphArgs, out: &Output) -> Result<()> {
    if out.format != Format::Csv {
        bail!(UsageError("generate only writes csv".into()));
    }
    let graph = load_graph(config, args)?;
    write_nodes(out.open_file("nodes.csv")?, graph.nodes())?;
    write_edges(out.open_file("edges.csv")?, graph.edges())?;
    println!(
        "generated {} nodes and {} edges",
        graph.node_count(),
        graph.edge_count()
    );
    Ok(())
}

fn simulate(
    config: &ExperimentConfig,
    args: &GraphArgs,
    ticks: u64,
    every: u64,
    out: &Output,
) -> Result<()> {
    if every == 0 {
        bail!(UsageError("--every must be positive".into()));
    }
    let graph = load_graph(config, args)?;
    let mut sim = config.simulation.clone();
    sim.record_events = true;
    let mut world = config.initial_world(graph, sim)?;
    let mut events = Vec::new();
    let mut snapshots: Vec<SnapshotRow> = snapshot_rows(world.graph(), 0);
    let (mut arrivals, mut exits) = (0, 0);
    for i in 1..=ticks {
        let report = world.step()?;
        arrivals += report.arrivals;
        exits += report.exits;
        events.extend(report.events);
        if i % every == 0 {
            snapshots.extend(snapshot_rows(world.graph(), world.clock()));
        }
    }
    match out.format {
        Format::Csv => {
            write_events(out.open("events")?, &events)?;
            write_snapshot_rows(out.open("snapshots")?, &snapshots)?;
        }
        Format::Json => {
            write_json(out.open("events")?, &events)?;
            write_json(out.open("snapshots")?, &snapshots)?;
        }
        Format::Dot => write_dot(out.open("snapshot")?, world.graph())?,
    }
    eprintln!(
        "simulated {ticks} ticks: {} vehicles, {arrivals} arrivals, {exits} exits",
        world.vehicle_count()
    );
    Ok(())
}

fn predict_cmd(
    config: &ExperimentConfig,
    args: &GraphArgs,
    horizon: u64,
    out: &Output,
) -> Result<()> {
    let graph = load_graph(config, args)?;
    let world = config.initial_world(graph, config.simulation.clone())?;
    let prediction = predict(&world, horizon)?;
    out.open_file("timeline.toml")?
        .write_all(prediction.timeline.to_toml_string().as_bytes())?;
    match out.format {
        Format::Csv => write_aggregates_csv(out.open("aggregates")?, &prediction.aggregates)?,
        Format::Json => write_json(out.open("aggregates")?, &prediction.aggregates)?,
        Format::Dot => write_dot(out.open("snapshot")?, world.graph())?,
    }
    eprintln!(
        "predicted {} snapshots over {horizon} s",
        prediction.timeline.len()
    );
    Ok(())
}

fn load_timeline(path: Option<&Path>) -> Result<WeightTimeline> {
    match path {
        Some(path) => WeightTimeline::load(path)
            .with_context(|| format!("loading timeline {}", path.display())),
        None => Ok(scenario::table4_timeline()),
    }
}

fn print_route(r: &RouteResult, out: &Output) -> Result<()> {
    let path: Vec<String> = r.path.iter().map(|n| n.to_string()).collect();
    println!("path: {}", path.join(" -> "));
    for hop in r.hops() {
        println!(
            "  {} -> {} depart {} weight {}",
            hop.from, hop.to, hop.depart, hop.weight
        );
    }
    println!("total: {}", r.total_time);
    if out.dir.is_some() {
        match out.format {
            Format::Csv => r.write_hops_csv(out.open("route")?)?,
            Format::Json => writeln!(out.open("route")?, "{}", r.to_json()?)?,
            Format::Dot => unreachable!("rejected earlier"),
        }
    }
    Ok(())
}

fn route(
    timeline: Option<&Path>,
    from: NodeId,
    to: NodeId,
    static_route: bool,
    out: &Output,
) -> Result<()> {
    out.reject_dot("route")?;
    let timeline = load_timeline(timeline)?;
    let result = if static_route {
        static_dijkstra(timeline.snapshot(0), from, to)
    } else {
        dynamic_dijkstra(&timeline, from, to)
    };
    match result {
        Ok(r) => print_route(&r, out),
        Err(e @ RoutingError::Unreachable { .. }) => {
            println!("unreachable");
            Err(e.into())
        }
        Err(e @ (RoutingError::UnknownNode(_) | RoutingError::SameEndpoints(_))) => {
            Err(UsageError(e.to_string()).into())
        }
        Err(e) => Err(e.into()),
    }
}

fn read_pairs(path: &Path) -> Result<Vec<(NodeId, NodeId)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading pairs {}", path.display()))?;
    reader
        .deserialize()
        .map(|row| row.with_context(|| format!("parsing pairs {}", path.display())))
        .collect()
}

fn compare(
    config: &ExperimentConfig,
    timeline: Option<&Path>,
    pairs: Option<&Path>,
    out: &Output,
) -> Result<()> {
    out.reject_dot("compare")?;
    let timeline = match timeline {
        Some(path) => WeightTimeline::load(path)
            .with_context(|| format!("loading timeline {}", path.display()))?,
        None => config.predict()?.timeline,
    };
    let pairs = match pairs {
        Some(path) => read_pairs(path)?,
        None => config.sample_pairs(timeline.topology())?,
    };
    let records = compare_pairs(&timeline, &pairs)?;
    let lambda = average_difference(&records)?;
    match out.format {
        Format::Csv => write_comparisons_csv(out.open("comparisons")?, &records)?,
        Format::Json => write_json(out.open("comparisons")?, &records)?,
        Format::Dot => unreachable!("rejected earlier"),
    }
    eprintln!("lambda: {lambda} over {} pairs", records.len());
    Ok(())
}

fn sweep(config: &ExperimentConfig, out: &Output) -> Result<()> {
    out.reject_dot("sweep")?;
    let cells = alpha_beta_sweep(config)?;
    match out.format {
        Format::Csv => write_sweep_csv(out.open("sweep")?, &cells)?,
        Format::Json => write_json(out.open("sweep")?, &cells)?,
        Format::Dot => unreachable!("rejected earlier"),
    }
    Ok(())
}

fn replay(out: &Output) -> Result<()> {
    out.reject_dot("replay-table4")?;
    let timeline = scenario::table4_timeline();
    let r = dynamic_dijkstra(&timeline, scenario::SOURCE, scenario::DESTINATION)?;
    print_route(&r, out)
}
