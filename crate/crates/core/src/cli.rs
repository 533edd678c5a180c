//! Command-line front end: `gen`, `count`, `bench` and `stats`.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::generator::{load_tsv, rmat_graph, save_tsv, GraphSpec};
use crate::kvengine::{Engine, EngineConfig};
use crate::oracle::{brute_force_triangles, nppf_oracle_adjacency, skew_report, SkewReport};
use crate::schema::{
    build_incidence, build_lower_adjacency, build_upper_adjacency, BuildOptions, EdgeList,
    VertexEncoding,
};
use crate::tricount::{count_adj_incidence, count_adjacency_only, count_hybrid, TriangleResult};

pub const CSV_HEADER: [&str; 9] = [
    "scale",
    "algo",
    "nedges",
    "nppf",
    "time_s",
    "rate",
    "matmul_s",
    "reduce_s",
    "triangles",
];

#[derive(Parser, Debug)]
#[command(
    name = "tricount",
    version,
    about = "Triangle counting on a tablet-partitioned key-value engine"
)]
pub struct Cli {
    /// Worker threads for the engine; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate an RMAT graph and write it as a TSV edge list.
    Gen(GenArgs),
    /// Count triangles in a TSV edge list.
    Count(CountArgs),
    /// Sweep RMAT scales and algorithms, writing one CSV row per pair.
    Bench(BenchArgs),
    /// Degree and per-tablet wedge load statistics for a TSV edge list.
    Stats(StatsArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Adj,
    Adjinc,
    Hybrid,
    Oracle,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Adj => "adj",
            Algo::Adjinc => "adjinc",
            Algo::Hybrid => "hybrid",
            Algo::Oracle => "oracle",
        })
    }
}

/// Hybrid degree threshold; `inf` disables the inner-product side.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Threshold(pub Option<u64>);

impl FromStr for Threshold {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inf" | "infinity" => Ok(Threshold(None)),
            n => n.parse().map(|t| Threshold(Some(t))).map_err(|_| {
                format!("threshold must be a non-negative integer or `inf`, got `{n}`")
            }),
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            None => f.write_str("inf"),
            Some(t) => write!(f, "{t}"),
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct GenArgs {
    #[arg(long)]
    pub scale: u32,
    #[arg(long, default_value_t = 16)]
    pub edge_factor: u32,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct RunOptions {
    #[arg(long, default_value_t = 24)]
    pub tablets: usize,
    #[arg(long, default_value = "inf")]
    pub threshold: Threshold,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long, default_value = "fixed-width")]
    pub encoding: VertexEncoding,
}

#[derive(Args, Debug, Clone)]
pub struct CountArgs {
    /// TSV edge list.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Algo::Adj)]
    pub algo: Algo,
    #[command(flatten)]
    pub run: RunOptions,
    /// Also write the CSV row here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct BenchArgs {
    /// Scales as `10..13` (inclusive), `10,11,12`, or empty for none.
    #[arg(long, default_value = "10..13")]
    pub scale: String,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "adj,adjinc")]
    pub algo: Vec<Algo>,
    #[arg(long, default_value_t = 16)]
    pub edge_factor: u32,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub run: RunOptions,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct StatsArgs {
    /// TSV edge list.
    pub input: PathBuf,
    #[arg(long, default_value_t = 24)]
    pub tablets: usize,
    #[arg(long, default_value = "inf")]
    pub threshold: Threshold,
    #[arg(long, default_value = "fixed-width")]
    pub encoding: VertexEncoding,
    /// Per-tablet load CSV destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One benchmark measurement; `runtime_seconds` is the best repetition.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub name: String,
    pub algo: Algo,
    pub nedges: u64,
    pub nppf: u64,
    pub runtime_seconds: f64,
    pub rate: f64,
    pub matmul_seconds: f64,
    pub reduce_seconds: f64,
    pub triangles: u64,
}

impl RunMetrics {
    fn csv_record(&self) -> [String; 9] {
        [
            self.name.clone(),
            self.algo.to_string(),
            self.nedges.to_string(),
            self.nppf.to_string(),
            self.runtime_seconds.to_string(),
            self.rate.to_string(),
            self.matmul_seconds.to_string(),
            self.reduce_seconds.to_string(),
            self.triangles.to_string(),
        ]
    }
}

/// `2 * nppf / runtime`.
pub fn rate(nppf: u64, runtime_seconds: f64) -> f64 {
    2.0 * nppf as f64 / runtime_seconds
}

pub fn write_csv<W: Write>(rows: &[RunMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

fn engine(workers: usize) -> Result<Engine> {
    Ok(Engine::new(EngineConfig {
        workers,
        ..EngineConfig::default()
    })?)
}

pub fn run<W: Write>(cli: Cli, out: &mut W) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a, out).map(drop),
        Command::Count(a) => cmd_count(&a, cli.workers, out).map(drop),
        Command::Bench(a) => cmd_bench(&a, cli.workers, out).map(drop),
        Command::Stats(a) => cmd_stats(&a, cli.workers, out).map(drop),
    }
}

pub fn cmd_gen<W: Write>(args: &GenArgs, out: &mut W) -> Result<EdgeList> {
    let spec = GraphSpec::new(args.scale, args.edge_factor, args.seed);
    let g = rmat_graph(&spec)?;
    save_tsv(&g, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    writeln!(out, "nedges\t{}", g.nedges())?;
    Ok(g)
}

/// Builds the tables `algo` needs once, then runs it `reps` times and keeps
/// the fastest run. Table construction is not timed.
pub fn measure(
    engine: &Engine,
    name: &str,
    g: &EdgeList,
    algo: Algo,
    opts: &RunOptions,
) -> Result<RunMetrics> {
    if opts.reps == 0 {
        bail!("--reps must be at least 1");
    }
    let build = BuildOptions {
        n_tablets: opts.tablets,
        encoding: opts.encoding,
    };
    let mut runs: Vec<TriangleResult> = Vec::with_capacity(opts.reps);
    match algo {
        Algo::Adj | Algo::Hybrid => {
            let a = build_upper_adjacency(engine, &engine.fresh_name("A"), g, build)?;
            for _ in 0..opts.reps {
                runs.push(match algo {
                    Algo::Adj => count_adjacency_only(engine, &a)?,
                    _ => count_hybrid(engine, &a, opts.threshold.0)?,
                });
            }
            engine.drop_table(a.name());
        }
        Algo::Adjinc => {
            let a = build_lower_adjacency(engine, &engine.fresh_name("AL"), g, build)?;
            let e = build_incidence(engine, &engine.fresh_name("E"), g, build)?;
            for _ in 0..opts.reps {
                runs.push(count_adj_incidence(engine, &a, &e, opts.encoding)?);
            }
            engine.drop_table(a.name());
            engine.drop_table(e.name());
        }
        Algo::Oracle => {
            for _ in 0..opts.reps {
                let start = Instant::now();
                let triangles = brute_force_triangles(g);
                let secs = start.elapsed().as_secs_f64();
                runs.push(TriangleResult {
                    triangles,
                    nppf: nppf_oracle_adjacency(g, opts.encoding),
                    total_seconds: secs,
                    reduce_seconds: secs,
                    ..TriangleResult::default()
                });
            }
        }
    }
    let best = runs
        .into_iter()
        .min_by(|a, b| a.total_seconds.total_cmp(&b.total_seconds))
        .expect("at least one repetition");
    Ok(RunMetrics {
        name: name.to_string(),
        algo,
        nedges: g.nedges() as u64,
        nppf: best.nppf,
        runtime_seconds: best.total_seconds,
        rate: rate(best.nppf, best.total_seconds),
        matmul_seconds: best.matmul_seconds,
        reduce_seconds: best.reduce_seconds,
        triangles: best.triangles,
    })
}

fn input_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn read_graph(path: &Path) -> Result<EdgeList> {
    Ok(load_tsv(path)
        .with_context(|| format!("reading {}", path.display()))?
        .graph)
}

pub fn cmd_count<W: Write>(args: &CountArgs, workers: usize, out: &mut W) -> Result<RunMetrics> {
    let g = read_graph(&args.input)?;
    let engine = engine(workers)?;
    let m = measure(&engine, &input_name(&args.input), &g, args.algo, &args.run)?;
    writeln!(
        out,
        "{} triangles={} nedges={} nppf={} time_s={:.6} rate={:.4e}",
        m.algo, m.triangles, m.nedges, m.nppf, m.runtime_seconds, m.rate
    )?;
    write_csv(std::slice::from_ref(&m), &mut *out)?;
    if let Some(path) = &args.out {
        write_csv(std::slice::from_ref(&m), fs::File::create(path)?)?;
    }
    Ok(m)
}

/// Parses `a..b` (inclusive), a comma list, or an empty string.
pub fn parse_scales(s: &str) -> Result<Vec<u32>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    if let Some((a, b)) = s.split_once("..") {
        let b = b.trim_start_matches('=');
        let (a, b): (u32, u32) = (a.trim().parse()?, b.trim().parse()?);
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(|x| x.trim().parse().with_context(|| format!("bad scale `{x}`")))
        .collect()
}

pub fn cmd_bench<W: Write>(
    args: &BenchArgs,
    workers: usize,
    out: &mut W,
) -> Result<Vec<RunMetrics>> {
    let scales = parse_scales(&args.scale)?;
    let engine = engine(workers)?;
    let mut rows = Vec::new();
    for &scale in &scales {
        let g = rmat_graph(&GraphSpec::new(scale, args.edge_factor, args.seed))?;
        for &algo in &args.algo {
            rows.push(measure(&engine, &scale.to_string(), &g, algo, &args.run)?);
        }
    }
    match &args.out {
        Some(path) => {
            write_csv(&rows, fs::File::create(path)?)?;
            write_summary(&rows, &args.algo, &mut *out)?;
        }
        None => write_csv(&rows, &mut *out)?,
    }
    Ok(rows)
}

/// Human-readable table with one line per scale and one column group per
/// algorithm.
pub fn write_summary<W: Write>(rows: &[RunMetrics], algos: &[Algo], out: &mut W) -> Result<()> {
    let mut header = format!("{:>6} {:>10}", "scale", "nedges");
    for a in algos {
        header += &format!(
            " | {:>12} {:>10} {:>10}",
            format!("{a} nppf"),
            "time (s)",
            "rate"
        );
    }
    writeln!(out, "{header}")?;
    let mut names: Vec<&str> = rows.iter().map(|r| r.name.as_str()).collect();
    names.dedup();
    for name in names {
        let of_scale: Vec<&RunMetrics> = rows.iter().filter(|r| r.name == name).collect();
        let mut line = format!("{:>6} {:>10}", name, of_scale[0].nedges);
        for a in algos {
            match of_scale.iter().find(|r| r.algo == *a) {
                Some(r) => {
                    line += &format!(
                        " | {:>12} {:>10.4} {:>10.3e}",
                        r.nppf, r.runtime_seconds, r.rate
                    )
                }
                None => line += &format!(" | {:>12} {:>10} {:>10}", "-", "-", "-"),
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn cmd_stats<W: Write>(args: &StatsArgs, workers: usize, out: &mut W) -> Result<SkewReport> {
    let g = read_graph(&args.input)?;
    let engine = engine(workers)?;
    let build = BuildOptions {
        n_tablets: args.tablets,
        encoding: args.encoding,
    };
    let a = build_upper_adjacency(&engine, "A", &g, build)?;
    let report = skew_report(&g, a.splits(), args.encoding, args.threshold.0);

    writeln!(out, "vertices\t{}", g.n_vertices())?;
    writeln!(out, "nedges\t{}", g.nedges())?;
    writeln!(out, "max_degree\t{}", report.max_degree)?;
    writeln!(out, "mean_degree\t{}", report.mean_degree)?;
    writeln!(out, "threshold\t{}", args.threshold)?;
    writeln!(out, "imbalance_ratio\t{}", report.imbalance_ratio)?;
    writeln!(out, "degree\tvertices")?;
    for (d, n) in &report.degree_histogram {
        writeln!(out, "{d}\t{n}")?;
    }
    writeln!(out, "tablet\tload")?;
    for (i, l) in report.per_tablet_load.iter().enumerate() {
        writeln!(out, "{i}\t{l}")?;
    }
    if let Some(path) = &args.out {
        let mut w = csv::Writer::from_writer(fs::File::create(path)?);
        w.write_record(["tablet", "load"])?;
        for (i, l) in report.per_tablet_load.iter().enumerate() {
            w.write_record([i.to_string(), l.to_string()])?;
        }
        w.flush()?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_lists() {
        assert_eq!(parse_scales("10..13").unwrap(), vec![10, 11, 12, 13]);
        assert_eq!(parse_scales("10..=11").unwrap(), vec![10, 11]);
        assert_eq!(parse_scales("4, 6").unwrap(), vec![4, 6]);
        assert!(parse_scales("").unwrap().is_empty());
        assert!(parse_scales("x").is_err());
    }

    #[test]
    fn threshold_parsing() {
        assert_eq!("inf".parse::<Threshold>().unwrap(), Threshold(None));
        assert_eq!("8".parse::<Threshold>().unwrap(), Threshold(Some(8)));
        assert!("-1".parse::<Threshold>().is_err());
        assert_eq!(Threshold(Some(3)).to_string(), "3");
    }

    #[test]
    fn empty_bench_is_header_only() {
        let cli = Cli::try_parse_from(["tricount", "bench", "--scale", ""]).unwrap();
        let mut out = Vec::new();
        run(cli, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            format!("{}\n", CSV_HEADER.join(","))
        );
    }

    #[test]
    fn unknown_algo_rejected() {
        assert!(Cli::try_parse_from(["tricount", "count", "g.tsv", "--algo", "nope"]).is_err());
    }
}
