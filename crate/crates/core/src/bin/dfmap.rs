use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use dfmap::dse::{self, DesignPoint, SweepOptions};
use dfmap::graph::{self, DataflowGraph, GptParams, WorkloadParams};
use dfmap::interchip::{solve_interchip, InterChipMapping, PassModel};
use dfmap::intrachip::{solve_intrachip, ChipWorkload, IntraChipMapping, IntrachipOptions};
use dfmap::milp::Backend;
use dfmap::pipeline::{self, FullMapping, FullOptions, MappingFile, PerfReport};
use dfmap::system::{load_system_with_catalog, SystemSpec, TechCatalog};
use dfmap::Error;

#[derive(Parser)]
#[command(name = "dfmap", version, about = "Map dataflow graphs onto multi-chip accelerator systems")]
struct Cli {
    /// Seed for randomized generators; solves are deterministic regardless.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a workload graph file.
    Generate {
        #[command(subcommand)]
        kind: GenerateKind,
        /// Output path; stdout when omitted.
        #[arg(short, long, global = true)]
        out: Option<PathBuf>,
    },
    /// Optimize a mapping and report its performance.
    Optimize(OptimizeArgs),
    /// Report the performance of a fixed mapping.
    Evaluate(EvaluateArgs),
    /// Run a design-space grid and write CSV.
    Sweep(SweepArgs),
    /// Place a saved report on the roofline.
    Roofline {
        /// JSON report written by `optimize` or `evaluate`.
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum GenerateKind {
    Gpt {
        #[arg(long, default_value_t = 1)]
        batch: u64,
        #[arg(long)]
        seq: u64,
        #[arg(long)]
        hidden: u64,
        #[arg(long, default_value_t = 1)]
        heads: u64,
        #[arg(long, default_value_t = 4)]
        ffn_mult: u64,
        #[arg(long, default_value_t = 1)]
        layers: u64,
    },
    Dlrm {
        #[arg(long)]
        tables: u64,
        #[arg(long)]
        rows: u64,
        #[arg(long)]
        emb_dim: u64,
        #[arg(long)]
        batch: u64,
        #[arg(long, default_value_t = 1)]
        pooling: u64,
        #[arg(long, default_value_t = 2)]
        mlp_layers: u64,
        #[arg(long)]
        mlp_width: u64,
    },
    Hpl {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        block: u64,
    },
    Fft {
        #[arg(long)]
        points: u64,
        #[arg(long, default_value_t = 2)]
        radix: u64,
    },
    /// One of the design-space workload presets.
    Preset { name: String },
    /// Random DAG drawn from `--seed`.
    Random {
        #[arg(long)]
        kernels: usize,
        #[arg(long, default_value_t = 0.3)]
        edge_prob: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Inter,
    Intra,
    Full,
}

#[derive(Args)]
struct SolveArgs {
    /// Branch-and-bound node budget per solve.
    #[arg(long, default_value_t = 2000)]
    node_limit: u64,
    /// Wall-clock budget per solve in seconds.
    #[arg(long, default_value_t = 300.0)]
    time_limit: f64,
    /// Forward pass only instead of training.
    #[arg(long)]
    inference: bool,
    /// Stage each partition's weights in SRAM while it runs.
    #[arg(long)]
    weights_on_chip: bool,
    /// Tile-count options per kernel.
    #[arg(long, default_value_t = 4)]
    menu_size: usize,
    /// Microbatches for the pipeline-bubble estimate.
    #[arg(long)]
    microbatches: Option<usize>,
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    workload: PathBuf,
    #[arg(long)]
    system: PathBuf,
    /// Human-readable report path; stdout when omitted.
    #[arg(long)]
    text: Option<PathBuf>,
    /// Machine-readable report path.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    io: Inputs,
    #[command(flatten)]
    solve: SolveArgs,
    #[arg(long, value_enum, default_value_t = Level::Full)]
    level: Level,
    /// Pipeline stages; reassigns network dims so PP spans this many chips.
    #[arg(long)]
    pp: Option<usize>,
    /// On-chip partitions per stage.
    #[arg(long)]
    pmax: Option<usize>,
    /// Mapping file output path.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    io: Inputs,
    #[command(flatten)]
    solve: SolveArgs,
    #[arg(long)]
    mapping: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON list of design points.
    #[arg(long, conflicts_with = "standard_grid")]
    grid: Option<PathBuf>,
    /// The 80-point chip x topology x technology grid for this workload preset.
    #[arg(long)]
    standard_grid: Option<String>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// CSV output path; stdout when omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } | Error::Parse { .. } => 1,
            Error::Timeout => 3,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 1, message: message.into() }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn write_out(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io { path: p.to_path_buf(), source: e }.into()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report types serialize");
    s.push('\n');
    s
}

fn full_options(a: &SolveArgs, pmax: Option<usize>) -> CliResult<FullOptions> {
    let backend = Backend::from_env()?;
    let mut o = FullOptions::default();
    if a.inference {
        o.inter.pass = PassModel::inference();
    }
    let time_limit = std::time::Duration::try_from_secs_f64(a.time_limit).map_err(|_| usage("--time-limit must be a non-negative number"))?;
    for s in [&mut o.inter.solve, &mut o.intra.solve] {
        s.node_limit = a.node_limit;
        s.time_limit = time_limit;
    }
    o.inter.backend = backend.clone();
    o.intra.backend = backend;
    o.intra.p_max = pmax;
    o.intra.menu_size = a.menu_size;
    o.intra.weights_on_chip = a.weights_on_chip;
    o.microbatches = a.microbatches;
    Ok(o)
}

fn load_inputs(io: &Inputs) -> CliResult<(DataflowGraph, SystemSpec, TechCatalog)> {
    let g = graph::load_graph(&io.workload)?;
    let (sys, catalog) = load_system_with_catalog(&io.system)?;
    Ok((g, sys, catalog))
}

/// The same system with its dims re-owned so PP spans `pp` chips and DP is
/// unchanged; the remaining dims go to TP.
fn with_pp(sys: &SystemSpec, pp: usize) -> CliResult<SystemSpec> {
    if sys.n_pp == pp {
        return Ok(sys.clone());
    }
    let mut found = dse::parallelism_candidates(&sys.chip, &sys.dims, usize::MAX)
        .into_iter()
        .find(|s| s.n_pp == pp && s.n_dp == sys.n_dp)
        .ok_or_else(|| Failure { code: 2, message: format!("no network dims multiply to {pp} pipeline stages") })?;
    found.tech = sys.tech.clone();
    Ok(found)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult<u8> {
    match cli.command {
        Command::Generate { kind, out } => {
            let g = generate(kind, cli.seed)?;
            write_out(out.as_deref(), &graph::graph_to_json(&g))?;
            Ok(0)
        }
        Command::Optimize(a) => optimize(a, cli.seed),
        Command::Evaluate(a) => evaluate(a, cli.seed),
        Command::Sweep(a) => sweep(a),
        Command::Roofline { report, json } => {
            let text = std::fs::read_to_string(&report).map_err(|e| Error::Io { path: report.clone(), source: e })?;
            let v: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::Parse { what: "report".into(), message: e.to_string() })?;
            let r: PerfReport = serde_json::from_value(v.get("report").cloned().unwrap_or(v))
                .map_err(|e| Error::Parse { what: "report".into(), message: e.to_string() })?;
            let rec = pipeline::roofline(&r)?;
            if json {
                print!("{}", to_json(&rec));
            } else {
                println!("achieved {:.4e} FLOP/s per chip ({:?}-bound)", rec.achieved, rec.regime);
                println!("compute roof {:.4e} (peak {:.4e})", rec.compute_roof, rec.peak);
                println!("memory roof  {:.4e} at OI {:.4} FLOP/B", rec.memory_roof, rec.oi_mem);
                println!("network roof {:.4e} at OI {:.4} FLOP/B", rec.network_roof, rec.oi_net);
            }
            Ok(0)
        }
    }
}

fn generate(kind: GenerateKind, seed: u64) -> CliResult<DataflowGraph> {
    Ok(match kind {
        GenerateKind::Gpt { batch, seq, hidden, heads, ffn_mult, layers } => {
            graph::generate_gpt(GptParams::new(batch, seq, hidden, heads, ffn_mult), layers)?
        }
        GenerateKind::Dlrm { tables, rows, emb_dim, batch, pooling, mlp_layers, mlp_width } => {
            graph::generate_workload(WorkloadParams::Dlrm { tables, rows_per_table: rows, emb_dim, batch, pooling, mlp_layers, mlp_width })?
        }
        GenerateKind::Hpl { n, block } => graph::generate_workload(WorkloadParams::Hpl { n, block })?,
        GenerateKind::Fft { points, radix } => graph::generate_workload(WorkloadParams::Fft { points, radix })?,
        GenerateKind::Preset { name } => dse::workload_preset(&name)?,
        GenerateKind::Random { kernels, edge_prob } => graph::generate_random(kernels, edge_prob, seed)?,
    })
}

/// Exit code of a finished solve: 3 when a limit stopped it early.
fn status_code(optimal: bool) -> u8 {
    if optimal {
        0
    } else {
        3
    }
}

fn optimize(a: OptimizeArgs, seed: u64) -> CliResult<u8> {
    let (g, sys, catalog) = load_inputs(&a.io)?;
    let sys = match a.pp {
        Some(pp) => with_pp(&sys, pp)?,
        None => sys,
    };
    let opts = full_options(&a.solve, a.pmax)?;
    match a.level {
        Level::Full => {
            let m = pipeline::optimize_full(&g, &sys, &opts)?;
            let mapping = MappingFile::from_full(&g, &m);
            if let Some(out) = &a.out {
                write_out(Some(out), &to_json(&mapping))?;
            }
            emit_full(&a.io, &g, &sys, &catalog, &opts, &m, &mapping, seed)?;
            Ok(status_code(m.optimal))
        }
        Level::Inter => {
            let m = solve_interchip(&g, &sys, &opts.inter)?;
            let mapping = inter_mapping_file(&g, &m);
            if let Some(out) = &a.out {
                write_out(Some(out), &to_json(&mapping))?;
            }
            write_out(a.io.text.as_deref(), &render_inter(&g, &m))?;
            if let Some(p) = &a.io.report {
                write_out(Some(p), &to_json(&json!({ "seed": seed, "level": "inter", "mapping": mapping, "inter": m })))?;
            }
            Ok(status_code(m.optimal))
        }
        Level::Intra => {
            let w = ChipWorkload { weights_on_chip: opts.intra.weights_on_chip, ..ChipWorkload::new(g.clone()) };
            let intra_opts = IntrachipOptions { p_max: Some(a.pmax.unwrap_or(g.n()).clamp(1, g.n().max(1))), ..opts.intra.clone() };
            let m = solve_intrachip(&w, &sys.chip, &intra_opts)?;
            let mapping = intra_mapping_file(&g, &m);
            if let Some(out) = &a.out {
                write_out(Some(out), &to_json(&mapping))?;
            }
            write_out(a.io.text.as_deref(), &render_intra(&g, &m))?;
            if let Some(p) = &a.io.report {
                write_out(Some(p), &to_json(&json!({ "seed": seed, "level": "intra", "mapping": mapping, "intra": m })))?;
            }
            Ok(status_code(m.optimal))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn emit_full(
    io: &Inputs,
    g: &DataflowGraph,
    sys: &SystemSpec,
    catalog: &TechCatalog,
    opts: &FullOptions,
    m: &FullMapping,
    mapping: &MappingFile,
    seed: u64,
) -> CliResult<()> {
    let report = pipeline::perf_report(g, sys, m, Some(catalog), opts)?;
    let roof = pipeline::roofline(&report)?;
    write_out(io.text.as_deref(), &pipeline::render_text(g, m, &report))?;
    if let Some(p) = &io.report {
        let v = json!({ "seed": seed, "level": "full", "mapping": mapping, "full": m, "report": report, "roofline": roof });
        write_out(Some(p), &to_json(&v))?;
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs, seed: u64) -> CliResult<u8> {
    let (g, sys, catalog) = load_inputs(&a.io)?;
    let mapping = pipeline::load_mapping(&a.mapping)?;
    let opts = full_options(&a.solve, None)?;
    let m = pipeline::evaluate_full(&g, &sys, &mapping, &opts)?;
    emit_full(&a.io, &g, &sys, &catalog, &opts, &m, &mapping, seed)?;
    Ok(0)
}

fn sweep(a: SweepArgs) -> CliResult<u8> {
    let grid: Vec<DesignPoint> = match (&a.grid, &a.standard_grid) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            serde_json::from_str(&text).map_err(|e| Error::Parse { what: "grid".into(), message: e.to_string() })?
        }
        (None, Some(w)) => {
            dse::workload_preset(w)?;
            dse::standard_grid(w)
        }
        _ => return Err(usage("give exactly one of --grid or --standard-grid")),
    };
    if a.workers == 0 {
        return Err(usage("--workers must be at least 1"));
    }
    let csv = dse::run_sweep(&grid, a.workers, &SweepOptions::default())?;
    write_out(a.out.as_deref(), &csv)?;
    Ok(0)
}

fn inter_mapping_file(g: &DataflowGraph, m: &InterChipMapping) -> MappingFile {
    let name = |k: usize| graph::KernelRef::Name(g.kernels[k].name.clone());
    MappingFile {
        partitions: (0..m.p_max).map(|i| m.stage_kernels(i).into_iter().map(name).collect()).collect(),
        schemes: g.kernels.iter().zip(&m.schemes).map(|(k, s)| (k.name.clone(), s.clone())).collect(),
        intra: None,
        tiles: None,
    }
}

fn intra_mapping_file(g: &DataflowGraph, m: &IntraChipMapping) -> MappingFile {
    let name = |k: usize| graph::KernelRef::Name(g.kernels[k].name.clone());
    let parts = (0..m.used_partitions())
        .map(|p| (0..g.n()).filter(|&k| m.partitions[k] == p).map(name).collect())
        .collect();
    MappingFile {
        partitions: vec![(0..g.n()).map(name).collect()],
        schemes: Default::default(),
        intra: Some(vec![parts]),
        tiles: Some(g.kernels.iter().zip(&m.tiles).map(|(k, &t)| (k.name.clone(), t)).collect()),
    }
}

fn names(g: &DataflowGraph, ks: impl IntoIterator<Item = usize>) -> String {
    ks.into_iter().map(|k| g.kernels[k].name.as_str()).collect::<Vec<_>>().join(", ")
}

fn render_inter(g: &DataflowGraph, m: &InterChipMapping) -> String {
    let mut s = String::new();
    for i in 0..m.p_max {
        let _ = writeln!(
            s,
            "stage {i} [{}]: {:.6e} s (comp {:.6e} net {:.6e} p2p {:.6e})",
            names(g, m.stage_kernels(i)),
            m.t_cri[i],
            m.t_comp[i],
            m.t_net[i],
            m.t_p2p[i]
        );
    }
    for (k, sc) in g.kernels.iter().zip(&m.schemes) {
        let _ = writeln!(s, "  {} -> {sc}", k.name);
    }
    let _ = writeln!(s, "objective {:.6e} s, dp {:.6e} s", m.objective, m.dp_time);
    if !m.optimal {
        let _ = writeln!(s, "note: search stopped at a limit; mapping not proven optimal");
    }
    s
}

fn render_intra(g: &DataflowGraph, m: &IntraChipMapping) -> String {
    let mut s = String::new();
    for p in 0..m.used_partitions() {
        let ks: Vec<usize> = (0..g.n()).filter(|&k| m.partitions[k] == p).collect();
        let tiles: Vec<String> = ks.iter().map(|&k| m.tiles[k].to_string()).collect();
        let _ = writeln!(
            s,
            "partition {p} [{}] tiles [{}]: {:.6e} s (comp {:.6e} mem {:.6e} net {:.6e})",
            names(g, ks.iter().copied()),
            tiles.join(", "),
            m.t_cri[p],
            m.t_comp[p],
            m.t_mem[p],
            m.t_net[p]
        );
    }
    let _ = writeln!(s, "objective {:.6e} s", m.objective);
    if !m.optimal {
        let _ = writeln!(s, "note: search stopped at a limit; mapping not proven optimal");
    }
    s
}
