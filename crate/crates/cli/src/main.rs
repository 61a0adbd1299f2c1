use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use urbanlayout::export::{read_geojson_blocks, read_geojson_buildings, read_graph_json, read_region_rbt};
use urbanlayout::metrics::{compare_layouts, Layout};
use urbanlayout::pipeline::{log_event, run_pipeline, run_stage, PipelineConfig, Stage};
use urbanlayout::Error;

#[derive(Parser)]
#[command(name = "urbanlayout", version, about = "Urban layout dataset pipeline and metrics")]
struct Cli {
    /// Pipeline config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Config override `key.path=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; overrides `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, classify and project the input features.
    Ingest,
    /// Raster-sample and fill building heights.
    Heights,
    /// Burn features into a region raster and crop tiles.
    Rasterize,
    /// Extract the road graph from the region raster.
    Graph,
    /// Find blocks and assign buildings to them.
    Blocks,
    /// Label every kept tile.
    Label,
    /// Write the road graph as OpenDRIVE.
    ExportXodr,
    /// Run every stage in order.
    Pipeline,
    /// Compute layout metrics, optionally against a reference layout.
    Metrics(MetricsArgs),
    /// Write the synthetic test city (features, heights, config).
    Fixture {
        /// Target directory.
        dir: PathBuf,
    },
}

#[derive(clap::Args)]
struct MetricsArgs {
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long = "ref")]
    ref_graph: Option<PathBuf>,
    #[arg(long)]
    buildings: Option<PathBuf>,
    #[arg(long)]
    ref_buildings: Option<PathBuf>,
    #[arg(long)]
    blocks: Option<PathBuf>,
    #[arg(long)]
    ref_blocks: Option<PathBuf>,
    /// Six-channel `.rbt` tile for mask metrics and validity.
    #[arg(long)]
    tile: Option<PathBuf>,
    #[arg(long)]
    ref_tile: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn read(path: &Path) -> Result<Vec<u8>, Error> {
    fs::read(path).map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))
}

fn load_opt<T>(path: &Option<PathBuf>, parse: impl Fn(&[u8]) -> Result<T, Error>) -> Result<Option<T>, Error> {
    path.as_deref().map(|p| parse(&read(p)?)).transpose()
}

fn layout(
    graph: &Option<PathBuf>,
    buildings: &Option<PathBuf>,
    blocks: &Option<PathBuf>,
    tile: &Option<PathBuf>,
) -> Result<Layout, Error> {
    Ok(Layout {
        graph: load_opt(graph, read_graph_json)?,
        buildings: load_opt(buildings, read_geojson_buildings)?,
        blocks: load_opt(blocks, read_geojson_blocks)?,
        tile: load_opt(tile, read_region_rbt)?,
    })
}

fn metrics(args: &MetricsArgs, cfg: &PipelineConfig) -> Result<(), Error> {
    let a = layout(&args.graph, &args.buildings, &args.blocks, &args.tile)?;
    let b = layout(&args.ref_graph, &args.ref_buildings, &args.ref_blocks, &args.ref_tile)?;
    let has_ref = b.graph.is_some() || b.buildings.is_some() || b.tile.is_some();
    let report = compare_layouts(&a, has_ref.then_some(&b), &cfg.metrics)?;
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    match &args.output {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    if let Command::Fixture { dir } = &cli.command {
        return urbanlayout::fixture::write_synthetic_city(dir);
    }
    let mut overrides = cli.overrides.clone();
    if let Some(out) = &cli.out {
        let abs = std::path::absolute(out)?;
        overrides.push(format!("out_dir={}", json!(abs.display().to_string())));
    }
    let cfg = PipelineConfig::load(cli.config.as_deref(), &overrides)?;
    let stage = match &cli.command {
        Command::Ingest => Stage::Ingest,
        Command::Heights => Stage::Heights,
        Command::Rasterize => Stage::Rasterize,
        Command::Graph => Stage::Graph,
        Command::Blocks => Stage::Blocks,
        Command::Label => Stage::Label,
        Command::ExportXodr => Stage::Export,
        Command::Pipeline => return run_pipeline(&cfg).map(|_| ()),
        Command::Metrics(args) => return metrics(args, &cfg),
        Command::Fixture { .. } => unreachable!(),
    };
    run_stage(stage, &cfg).map(|_| ())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = match e {
                Error::MissingInput(_) | Error::Config(_) => 2,
                _ => 1,
            };
            log_event("error", None, &e.to_string(), json!({"exit_code": code}));
            ExitCode::from(code)
        }
    }
}
