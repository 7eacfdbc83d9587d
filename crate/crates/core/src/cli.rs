//! Command-line driver: `generate`, `graph`, `embed`, `evaluate`.
//!
//! Every command writes its primary artifacts plus a `meta.json` holding the
//! full argument set. Exit codes: 0 success, 1 user error, 2 numerical
//! failure.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::embed::{run_embedding, Acceleration, EmbedOptions, InitRule};
use crate::error::{Error, Result};
use crate::graph::DistanceGraph;
use crate::io::{numbered_headers, read_labels, read_matrix_csv, write_json, write_jsonl, write_matrix_csv};
use crate::linsolve::PcgOptions;
use crate::metrics::{evaluate, EvaluateOptions, ProcrustesMode, StressKind, MAX_CORRELATION_PAIRS};
use crate::synth::{twonn_dimension, Manifold, TwoNnMethod};

#[derive(Debug, Parser, Serialize)]
#[command(name = "distembed", version, about = "Euclidean embedding of neighborhood distance graphs")]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Single-threaded execution with fixed reduction order.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Sample a synthetic manifold.
    Generate(GenerateArgs),
    /// Build the symmetrized kNN distance graph of a point cloud.
    Graph(GraphArgs),
    /// Embed a distance graph.
    Embed(EmbedArgs),
    /// Score an embedding against its graph.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    /// swiss_roll, klein_bottle or flat_torus.
    pub name: String,
    #[arg(long, default_value_t = 1500)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoNnArg {
    Mle,
    Fit,
}

#[derive(Debug, Args, Serialize)]
pub struct GraphArgs {
    /// Point cloud CSV with a header row.
    #[arg(long)]
    pub points: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "mle")]
    pub twonn: TwoNnArg,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitArg {
    Identity,
    Tree,
    Spectral,
    Mds,
}

#[derive(Debug, Args, Serialize)]
pub struct EmbedArgs {
    /// Edge list, one `u v d` per line.
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = crate::embed::DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = crate::embed::DEFAULT_VAR_TOL)]
    pub var_tol: f64,
    #[arg(long, default_value_t = crate::embed::DEFAULT_MAXIT)]
    pub maxit: usize,
    #[arg(long, default_value_t = crate::linsolve::DEFAULT_DROP_TOL)]
    pub drop_tol: f64,
    #[arg(long, default_value_t = crate::linsolve::DEFAULT_SHIFT)]
    pub shift: f64,
    #[arg(long, default_value_t = crate::linsolve::DEFAULT_PCG_TOL)]
    pub pcg_tol: f64,
    /// Iteration cap per Poisson solve; `10·√n` when omitted.
    #[arg(long)]
    pub pcg_maxit: Option<usize>,
    #[arg(long, value_enum, default_value = "mds")]
    pub init: InitArg,
    /// Landmarks of the `mds` start.
    #[arg(long, default_value_t = crate::embed::DEFAULT_LANDMARKS)]
    pub landmarks: usize,
    /// Anderson mixing depth; 0 runs the plain alternation.
    #[arg(long, default_value_t = crate::embed::DEFAULT_ANDERSON_DEPTH)]
    pub accel_depth: usize,
    /// Seed of the Monte Carlo neighborhood volumes.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StressArg {
    Relative,
    Kruskal,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcrustesArg {
    Rigid,
    Affine,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub embedding: PathBuf,
    /// Ground-truth parameters, one row per vertex.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Class labels in the first column, one row per vertex.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "relative")]
    pub stress: StressArg,
    #[arg(long, value_enum, default_value = "affine")]
    pub procrustes: ProcrustesArg,
    /// Neighbors for label prediction; the embedding dimension when omitted.
    #[arg(long)]
    pub label_k: Option<usize>,
    /// Logistic scale; the median neighbor distance when omitted.
    #[arg(long)]
    pub logistic_scale: Option<f64>,
    #[arg(long, default_value_t = MAX_CORRELATION_PAIRS)]
    pub max_pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Meta<'a, R: Serialize> {
    version: &'static str,
    config: &'a Cli,
    result: R,
}

fn write_meta<R: Serialize>(out: &Path, cli: &Cli, result: R) -> Result<()> {
    write_json(&out.join("meta.json"), &Meta { version: env!("CARGO_PKG_VERSION"), config: cli, result })
}

fn load_graph(path: &Path) -> Result<DistanceGraph> {
    DistanceGraph::load_edge_list(BufReader::new(File::open(path)?))
}

/// Runs the parsed command.
pub fn run(cli: &Cli) -> Result<()> {
    let threads = if cli.deterministic { Some(1) } else { cli.threads };
    if let Some(t) = threads {
        // a pool installed earlier in the process is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    match &cli.command {
        Command::Generate(a) => generate(cli, a),
        Command::Graph(a) => graph(cli, a),
        Command::Embed(a) => embed(cli, a),
        Command::Evaluate(a) => evaluate_cmd(cli, a),
    }
}

fn generate(cli: &Cli, a: &GenerateArgs) -> Result<()> {
    let m: Manifold = a.name.parse()?;
    let s = m.sample(a.n, a.seed)?;
    fs::create_dir_all(&a.out)?;
    write_matrix_csv(&a.out.join("points.csv"), &numbered_headers("x", s.points.ncols()), &s.points)?;
    let param_names: Vec<String> = match m {
        Manifold::SwissRoll => vec!["arc".into(), "h".into()],
        _ => vec!["u".into(), "v".into()],
    };
    write_matrix_csv(&a.out.join("params.csv"), &param_names, &s.params)?;
    if let Some(short) = &s.short_embedding {
        write_matrix_csv(&a.out.join("short.csv"), &numbered_headers("y", short.ncols()), short)?;
    }
    #[derive(Serialize)]
    struct R {
        samples: usize,
        ambient_dim: usize,
    }
    write_meta(&a.out, cli, R { samples: s.points.nrows(), ambient_dim: s.points.ncols() })
}

fn graph(cli: &Cli, a: &GraphArgs) -> Result<()> {
    let (_, pts) = read_matrix_csv(&a.points)?;
    let g = DistanceGraph::knn_graph(&pts, a.k)?;
    let method = match a.twonn {
        TwoNnArg::Mle => TwoNnMethod::Mle,
        TwoNnArg::Fit => TwoNnMethod::Fit,
    };
    let twonn = twonn_dimension(&pts, method).ok();
    fs::create_dir_all(&a.out)?;
    g.write_edge_list(std::io::BufWriter::new(File::create(a.out.join("graph.txt"))?))?;
    #[derive(Serialize)]
    struct R {
        vertices: usize,
        edges: usize,
        k: usize,
        twonn: Option<crate::synth::TwoNnEstimate>,
    }
    write_meta(&a.out, cli, R { vertices: g.n_vertices(), edges: g.n_edges(), k: a.k, twonn })
}

fn embed(cli: &Cli, a: &EmbedArgs) -> Result<()> {
    if a.dim == 0 {
        return Err(Error::InvalidInput("--dim must be at least 1".into()));
    }
    let g = load_graph(&a.graph)?;
    let mut opts = EmbedOptions::new(a.dim);
    opts.tol = a.tol;
    opts.var_tol = a.var_tol;
    opts.maxit = a.maxit;
    opts.drop_tol = a.drop_tol;
    opts.shift = a.shift;
    opts.pcg = PcgOptions { tol: a.pcg_tol, maxit: a.pcg_maxit };
    opts.init = match a.init {
        InitArg::Identity => InitRule::Identity,
        InitArg::Tree => InitRule::TreeSync,
        InitArg::Spectral => InitRule::Spectral,
        InitArg::Mds => InitRule::GeodesicMds,
    };
    opts.landmarks = a.landmarks;
    opts.acceleration =
        if a.accel_depth == 0 { Acceleration::None } else { Acceleration::Anderson { depth: a.accel_depth } };
    opts.deterministic = cli.deterministic;
    opts.frames.volume.seed = a.seed;
    let start = Instant::now();
    let res = run_embedding(&g, &opts)?;
    let elapsed = start.elapsed().as_secs_f64();
    fs::create_dir_all(&a.out)?;
    write_matrix_csv(&a.out.join("embedding.csv"), &numbered_headers("phi", a.dim), &res.embedding.coords)?;
    write_jsonl(&a.out.join("iterations.jsonl"), &res.report.records)?;
    let rep = &res.report;
    let last = rep.records.last();
    #[derive(Serialize)]
    struct R<'a> {
        stop: crate::embed::StopReason,
        iterations: usize,
        final_j: Option<f64>,
        final_err: Option<f64>,
        monotonicity_violations: &'a [usize],
        unconverged_solves: usize,
        ict_shift: f64,
        ict_retries: usize,
        init: InitRule,
        frames: &'a crate::frames::FrameDiagnostics,
        seconds: f64,
    }
    eprintln!(
        "{:?} after {} iterations, err {:.3e}",
        rep.stop,
        rep.records.len(),
        last.map_or(f64::NAN, |r| r.err)
    );
    write_meta(
        &a.out,
        cli,
        R {
            stop: rep.stop,
            iterations: rep.records.len(),
            final_j: last.map(|r| r.j),
            final_err: last.map(|r| r.err),
            monotonicity_violations: &rep.monotonicity_violations,
            unconverged_solves: rep.unconverged_solves,
            ict_shift: rep.ict_shift,
            ict_retries: rep.ict_retries,
            init: rep.init,
            frames: &rep.frames,
            seconds: elapsed,
        },
    )
}

fn evaluate_cmd(cli: &Cli, a: &EvaluateArgs) -> Result<()> {
    let g = load_graph(&a.graph)?;
    let (_, phi) = read_matrix_csv(&a.embedding)?;
    let n = g.n_vertices();
    let check = |what: &str, rows: usize| {
        if rows == n {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("{what} has {rows} rows but the graph has {n} vertices")))
        }
    };
    check("embedding", phi.nrows())?;
    let params = a.params.as_deref().map(read_matrix_csv).transpose()?.map(|(_, m)| m);
    if let Some(p) = &params {
        check("params", p.nrows())?;
    }
    let labels = a.labels.as_deref().map(read_labels).transpose()?.map(|(l, _)| l);
    if let Some(l) = &labels {
        check("labels", l.len())?;
    }
    let opts = EvaluateOptions {
        k: a.k,
        stress: match a.stress {
            StressArg::Relative => StressKind::Relative,
            StressArg::Kruskal => StressKind::Kruskal,
        },
        procrustes: match a.procrustes {
            ProcrustesArg::Rigid => ProcrustesMode::Rigid,
            ProcrustesArg::Affine => ProcrustesMode::Affine,
        },
        max_pairs: a.max_pairs,
        seed: a.seed,
        label_k: a.label_k,
        logistic_scale: a.logistic_scale,
        ..EvaluateOptions::default()
    };
    let report = evaluate(&g, &phi, params.as_ref(), labels.as_deref(), &opts)?;
    fs::create_dir_all(&a.out)?;
    write_json(&a.out.join("report.json"), &report)?;
    write_meta(&a.out, cli, &report)
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from([
            "distembed", "embed", "--graph", "g.txt", "--dim", "2", "--tol", "1e-6", "--var-tol", "1e-15",
            "--maxit", "10", "--drop-tol", "0.01", "--shift", "1e-6", "--threads", "2", "--deterministic", "--out", "o",
        ])
        .unwrap();
        assert!(cli.deterministic);
        assert_eq!(cli.threads, Some(2));
        match cli.command {
            Command::Embed(a) => {
                assert_eq!((a.dim, a.maxit), (2, 10));
                assert_eq!((a.tol, a.var_tol, a.drop_tol, a.shift), (1e-6, 1e-15, 0.01, 1e-6));
            }
            _ => panic!("wrong command"),
        }
        let cli = Cli::try_parse_from(["distembed", "generate", "swiss_roll", "--n", "10", "--seed", "3"]).unwrap();
        assert!(matches!(cli.command, Command::Generate(GenerateArgs { n: 10, seed: 3, .. })));
        assert!(Cli::try_parse_from(["distembed", "graph", "--k", "3"]).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::InvalidInput("x".into())), 1);
        assert_eq!(exit_code(&Error::FactorizationBreakdown { column: 0, shift: 0.0 }), 2);
        assert_eq!(exit_code(&Error::DisconnectedNeighborhoods(vec![1])), 1);
    }
}
