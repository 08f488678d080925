use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use alma_core::cluster::KmeansConfig;
use alma_core::diagnostics::diagnose;
use alma_core::harness::{elbow_drops, elbow_scan, emit_results, run_scenario, write_csv, Emit, Method, ScenarioConfig};
use alma_core::model::assemble_ground_truth;
use alma_core::pipeline::{run_alma, ClusteringResult};
use alma_core::rng::substream;
use alma_core::synthgen::{read_edge_list, sample_adjacency, sample_instance, write_edge_list};
use alma_core::tensor::{read_tensor, write_tensor, EntryFormat};
use alma_core::twist::{run_twist, TwistConfig};
use alma_core::{AlmaConfig, MmlsbmInstance, Tensor3};

#[derive(Parser)]
#[command(name = "alma", version, about = "Layer-group and community recovery for multilayer networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an instance and its adjacency tensor.
    Generate(GenerateArgs),
    /// Cluster layers and nodes of an adjacency tensor.
    Fit(FitArgs),
    /// Run one of the simulation sweeps.
    Scenario(ScenarioArgs),
    /// Objective against the number of layer groups.
    Elbow(ElbowArgs),
    /// Conditioning report for a saved instance.
    Diagnostics(DiagnosticsArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long = "layers", short = 'L', default_value_t = 40)]
    layers: usize,
    #[arg(long = "groups", short = 'M', default_value_t = 3)]
    groups: usize,
    #[arg(long, short = 'K', default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 0.5)]
    p_max: f64,
    #[arg(long, default_value_t = 0.9)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Store the expected tensor instead of a Bernoulli draw.
    #[arg(long)]
    noiseless: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write an edge list next to the binary tensor.
    #[arg(long)]
    edges: bool,
    /// Write diagnostics.json with the conditioning report.
    #[arg(long)]
    diagnostics: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Alma,
    Twist,
}

#[derive(Args)]
struct FitArgs {
    /// Binary tensor or edge list.
    #[arg(long)]
    input: PathBuf,
    #[arg(long = "groups", short = 'M')]
    groups: usize,
    /// Communities per group: one value for all groups, or a comma list.
    #[arg(long, short = 'K', value_delimiter = ',')]
    k: Vec<usize>,
    #[arg(long, value_enum, default_value = "alma")]
    method: MethodArg,
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 7)]
    twist_r: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Instance JSON used to score the result.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=4), required_unless_present = "config")]
    scenario: Option<u32>,
    /// JSON scenario configuration; command-line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Override the fixed p_max of an n or L sweep.
    #[arg(long)]
    p_max: Option<f64>,
    /// Override the sweep grid.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "csv,svg")]
    emit: Vec<String>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct ElbowArgs {
    #[arg(long)]
    input: PathBuf,
    /// Candidate numbers of layer groups, ascending.
    #[arg(long = "m-grid", value_delimiter = ',', default_value = "1,2,3,4,5")]
    m_grid: Vec<usize>,
    /// Communities per group, the same for every candidate.
    #[arg(long, short = 'K')]
    k: usize,
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnosticsArgs {
    #[arg(long)]
    instance: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate(a) => generate(a),
        Command::Fit(a) => fit(a),
        Command::Scenario(a) => scenario(a),
        Command::Elbow(a) => elbow(a),
        Command::Diagnostics(a) => diagnostics(a),
    }
}

fn generate(args: GenerateArgs) -> Result<()> {
    let mut rng = substream(args.seed, &[0]);
    let inst = sample_instance(args.n, args.layers, args.groups, args.k, args.p_max, args.alpha, &mut rng)?;
    let gt = assemble_ground_truth(&inst)?;
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("instance.json"), inst.to_json()?)?;
    let (a, format) = if args.noiseless {
        (gt.p_star.clone(), EntryFormat::F64)
    } else {
        (sample_adjacency(&gt, &mut rng), EntryFormat::U8)
    };
    let mut w = BufWriter::new(File::create(args.out.join("adjacency.bin"))?);
    write_tensor(&mut w, &a, format)?;
    w.flush()?;
    if args.edges {
        if args.noiseless {
            bail!("edge lists hold binary tensors only; drop --noiseless");
        }
        let mut w = BufWriter::new(File::create(args.out.join("edges.txt"))?);
        write_edge_list(&mut w, &a)?;
        w.flush()?;
    }
    if args.diagnostics {
        let report = diagnose(&gt, &inst)?;
        std::fs::write(args.out.join("diagnostics.json"), serde_json::to_string_pretty(&report)?)?;
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn load_tensor(path: &Path) -> Result<Tensor3> {
    let mut head = [0u8; 3];
    File::open(path)
        .and_then(|mut f| f.read_exact(&mut head))
        .with_context(|| format!("reading {}", path.display()))?;
    if &head == b"MLT" {
        Ok(read_tensor(&mut BufReader::new(File::open(path)?))?)
    } else {
        Ok(read_edge_list(BufReader::new(File::open(path)?))?)
    }
}

fn expand_ranks(k: &[usize], groups: usize) -> Result<Vec<usize>> {
    match k.len() {
        1 => Ok(vec![k[0]; groups]),
        len if len == groups => Ok(k.to_vec()),
        len => bail!("{len} values of K for {groups} groups"),
    }
}

fn fit(args: FitArgs) -> Result<()> {
    let a = load_tensor(&args.input)?;
    let ranks = expand_ranks(&args.k, args.groups)?;
    let kcfg = KmeansConfig::new(args.groups);
    let mut rng = substream(args.seed, &[1]);
    let (clustering, iters, converged): (ClusteringResult, usize, bool) = match args.method {
        MethodArg::Alma => {
            let cfg = AlmaConfig {
                eps_stop: args.eps,
                max_iter: args.max_iter,
                ..AlmaConfig::default()
            };
            let run = run_alma(&a, &ranks, &cfg, &kcfg, &mut rng)?;
            (run.clustering, run.fit.iters_used, run.fit.converged)
        }
        MethodArg::Twist => {
            let cfg = TwistConfig {
                iter_max: args.max_iter,
                eps_stop: Some(args.eps),
                ..TwistConfig::new(args.groups, args.twist_r)
            };
            let run = run_twist(&a, &ranks, &cfg, &kcfg, &mut rng)?;
            (run.clustering, run.fit.iters_used, run.fit.converged)
        }
    };
    let mut report = serde_json::json!({
        "layer_labels": clustering.layer_labels,
        "community_labels": clustering.community_labels,
        "iters": iters,
        "converged": converged,
    });
    if let Some(path) = &args.truth {
        let inst = MmlsbmInstance::from_json(&std::fs::read_to_string(path)?)?;
        let errs = clustering.evaluate(&inst)?;
        report["R_BL"] = errs.between_layer.into();
        report["R_WL"] = errs.within_layer_avg.into();
        report["R_WL_per_group"] = errs.within_layer.clone().into();
    }
    let text = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn scenario(args: ScenarioArgs) -> Result<()> {
    let mut cfg = match (&args.config, args.scenario) {
        (Some(path), _) => ScenarioConfig::from_json(&std::fs::read_to_string(path)?)?,
        (None, Some(id)) => ScenarioConfig::preset(id)?,
        (None, None) => bail!("pass --scenario or --config"),
    };
    if let (Some(_), Some(id)) = (&args.config, args.scenario) {
        cfg.scenario = id;
    }
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    if let Some(ms) = &args.methods {
        cfg.methods = ms.iter().map(|m| m.parse::<Method>()).collect::<Result<_, _>>()?;
    }
    if let Some(e) = args.eps {
        cfg.eps_stop = e;
    }
    if let Some(m) = args.max_iter {
        cfg.max_iter = m;
    }
    if let Some(p) = args.p_max {
        cfg.p_max = p;
    }
    if let Some(g) = args.grid {
        cfg.grid = g;
    }
    cfg.validate()?;
    let formats: Vec<Emit> = args.emit.iter().map(|e| e.parse()).collect::<Result<_, _>>()?;
    let records = run_scenario(&cfg, args.threads)?;
    let files = emit_results(&records, &args.out, &formats)?;
    std::fs::write(args.out.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;
    let failed = records.iter().filter(|r| r.failed()).count();
    println!("{} runs ({failed} failed)", records.len());
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn elbow(args: ElbowArgs) -> Result<()> {
    let a = load_tensor(&args.input)?;
    let cfg = AlmaConfig {
        eps_stop: args.eps,
        max_iter: args.max_iter,
        ..AlmaConfig::default()
    };
    let mut rng = substream(args.seed, &[2]);
    let k = args.k;
    let rows = elbow_scan(&a, &args.m_grid, |m| vec![k; m], &cfg, &KmeansConfig::new(1), &mut rng)?;
    println!("M,objective,iters,drop");
    let drops = elbow_drops(&rows);
    for r in &rows {
        let drop = drops.iter().find(|d| d.0 == r.groups).map(|d| format!("{:.6}", d.1));
        match (r.objective, &r.error) {
            (Some(obj), _) => println!(
                "{},{obj:.6},{},{}",
                r.groups,
                r.iters.unwrap_or(0),
                drop.unwrap_or_default()
            ),
            (None, err) => println!("{},,,  # {}", r.groups, err.as_deref().unwrap_or("failed")),
        }
    }
    if let Some(path) = &args.out {
        write_csv(path, &rows)?;
    }
    Ok(())
}

fn diagnostics(args: DiagnosticsArgs) -> Result<()> {
    let inst = MmlsbmInstance::from_json(&std::fs::read_to_string(&args.instance)?)?;
    let gt = assemble_ground_truth(&inst)?;
    println!("{}", serde_json::to_string_pretty(&diagnose(&gt, &inst)?)?);
    Ok(())
}
