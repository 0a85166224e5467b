//! Command-line front end: register shapes or a template against an image,
//! generate synthetic instances, and sweep benchmarks.
//!
//! Exit codes: 0 on success, 2 on malformed input, 3 when an exact solve ran
//! out of budget before certifying optimality, 1 on any other failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use rulecover::eval::{evaluate_labels, EvalReport};
use rulecover::io;
use rulecover::isometry::{shape_registration, IsometryConfig};
use rulecover::mesh::Surface;
use rulecover::report::{emit_report, write_traces, Report};
use rulecover::synth::{synth_isometric_instance, synth_template_instance, SynthKind, SynthSpec};
use rulecover::template::{template_image_registration, TemplateMatchConfig};
use rulecover::{Error, MatchSet, Mode, Registration, SolverConfig};

const EXIT_FAILURE: u8 = 1;
const EXIT_MALFORMED: u8 = 2;
const EXIT_UNCERTIFIED: u8 = 3;

#[derive(Parser)]
#[command(name = "rulecover", version, about = "Model-free outlier removal for non-rigid correspondences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Remove outliers between two shapes under an isometry prior.
    MatchShapes(MatchShapes),
    /// Remove outliers between a 3D template and image points.
    MatchTemplate(MatchTemplate),
    /// Write a synthetic instance to a directory.
    Synth(Synth),
    /// Run a sweep of synthetic instances and summarize.
    Bench(Bench),
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, default_value = "exact")]
    mode: Mode,
    /// Number of k-means clusters.
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Solver wall-clock budget per cluster, in seconds.
    #[arg(long, default_value_t = 60.0)]
    time_budget: f64,
    /// Branch-and-bound node budget per cluster.
    #[arg(long, default_value_t = 1_000_000)]
    node_budget: usize,
    /// Bound trace CSV; several clusters write one file each.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[arg(long)]
    report_out: Option<PathBuf>,
    /// Include wall-clock times in the report (makes it non-reproducible).
    #[arg(long)]
    timings: bool,
}

impl SolveArgs {
    fn solver(&self) -> SolverConfig {
        SolverConfig {
            time_budget: self.time_budget,
            node_budget: self.node_budget,
            ..SolverConfig::default()
        }
    }
}

#[derive(Args)]
struct MatchShapes {
    /// Source surface (.obj or .ply; a file without faces is a point cloud).
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    matches: PathBuf,
    /// Allowed relative geodesic distortion.
    #[arg(long, default_value_t = 0.20)]
    eps_rel: f64,
    /// Absolute distortion floor as a fraction of the source diameter.
    #[arg(long, default_value_t = 0.01)]
    eps_abs_frac: f64,
    #[command(flatten)]
    solve: SolveArgs,
}

#[derive(Args)]
struct MatchTemplate {
    /// Template points: a count, then `x y z` per line.
    #[arg(long)]
    template: PathBuf,
    /// Image points: a count, then `u v` per line.
    #[arg(long)]
    image: PathBuf,
    /// JSON with fx, fy, cx, cy.
    #[arg(long)]
    intrinsics: PathBuf,
    #[arg(long)]
    matches: PathBuf,
    /// Rotation agreement threshold in degrees.
    #[arg(long, default_value_t = 10.0)]
    eps1_deg: f64,
    /// Translation agreement threshold, relative.
    #[arg(long, default_value_t = 0.40)]
    eps2: f64,
    /// Nearest neighbors per template point.
    #[arg(long, default_value_t = 15)]
    q: usize,
    #[command(flatten)]
    solve: SolveArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    IsometricGrid,
    TemplateBend,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "isometric-grid")]
    kind: Kind,
    /// Number of points; must factor into a grid with at least 2 rows.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0.3)]
    outlier_ratio: f64,
    /// Gaussian noise: pixels for templates, model units for grids.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Bend radius of the template, in template side lengths.
    #[arg(long, default_value_t = 2.0)]
    bend_radius: f64,
}

impl SynthArgs {
    fn spec(&self, ratio: f64, seed: u64) -> SynthSpec {
        let base = match self.kind {
            Kind::IsometricGrid => SynthSpec::isometric(self.n, ratio, seed),
            Kind::TemplateBend => SynthSpec::template(self.n, ratio, seed),
        };
        SynthSpec {
            noise: self.noise,
            bend_radius: self.bend_radius,
            ..base
        }
    }
}

#[derive(Args)]
struct Synth {
    #[command(flatten)]
    synth: SynthArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory, created if missing.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct Bench {
    #[command(flatten)]
    synth: SynthArgs,
    /// Comma-separated outlier ratios.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8")]
    ratios: Vec<f64>,
    /// Seeds 0..count per ratio.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, default_value = "exact")]
    mode: Mode,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long, default_value_t = 0.20)]
    eps_rel: f64,
    #[arg(long, default_value_t = 10.0)]
    eps1_deg: f64,
    #[arg(long, default_value_t = 0.40)]
    eps2: f64,
    #[arg(long, default_value_t = 15)]
    q: usize,
    #[arg(long, default_value_t = 60.0)]
    time_budget: f64,
    /// JSON array with one entry per instance.
    #[arg(long)]
    report_out: Option<PathBuf>,
    #[arg(long)]
    timings: bool,
}

struct Failure {
    code: u8,
    error: Error,
}

impl Failure {
    fn input(error: Error) -> Self {
        Failure {
            code: EXIT_MALFORMED,
            error,
        }
    }

    /// Errors raised by the pipeline: invalid arguments and inconsistent
    /// inputs count as malformed input.
    fn run(error: Error) -> Self {
        let code = match error {
            Error::InvalidArgument(_)
            | Error::EmptyMatches(_)
            | Error::LengthMismatch { .. }
            | Error::InvalidSpec(_)
            | Error::TooFewMatches { .. }
            | Error::AllClustersSkipped => EXIT_MALFORMED,
            ref e if e.is_malformed_input() => EXIT_MALFORMED,
            _ => EXIT_FAILURE,
        };
        Failure { code, error }
    }

    fn output(error: Error) -> Self {
        Failure {
            code: EXIT_FAILURE,
            error,
        }
    }
}

type CliResult = Result<u8, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::MatchShapes(a) => match_shapes(a),
        Command::MatchTemplate(a) => match_template(a),
        Command::Synth(a) => synth(a),
        Command::Bench(a) => bench(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn read_surface(path: &Path) -> Result<Surface, Failure> {
    let mesh = io::read_mesh(path).map_err(Failure::input)?;
    Ok(if mesh.triangles().is_empty() {
        Surface::Cloud(mesh.vertices().to_vec())
    } else {
        Surface::Mesh(mesh)
    })
}

fn evaluation(matches: &MatchSet, reg: &Registration) -> Result<Option<EvalReport>, Failure> {
    matches
        .gt_labels
        .as_ref()
        .map(|gt| evaluate_labels(&reg.labels, gt))
        .transpose()
        .map_err(Failure::run)
}

/// Prints a summary, writes the requested files and picks the exit code.
fn finish<C: Serialize>(
    command: &str,
    config: &C,
    mode: Mode,
    reg: &Registration,
    eval: Option<EvalReport>,
    args: &SolveArgs,
    elapsed: f64,
) -> CliResult {
    let report = Report::new(command, config, reg, eval, args.timings.then_some(elapsed)).map_err(Failure::output)?;
    let outcome = match &report.solver {
        Some(s) => format!(
            "objective {}, lower bound {:.3}, {}",
            s.objective,
            s.lower_bound,
            match (mode, s.optimal) {
                (Mode::Exact, true) => "certified",
                (Mode::Exact, false) => "not certified",
                _ => "LP relaxation, no certificate",
            }
        ),
        None => "local filtering".to_string(),
    };
    println!(
        "{} matches, {} outliers, {} unconstrained, {outcome}",
        reg.labels.len(),
        reg.labels.outlier_count(),
        reg.unconstrained.iter().filter(|&&u| u).count(),
    );
    if let Some(e) = &report.evaluation {
        println!(
            "precision {:.4}, recall {:.4}, outlier recall {:.4}",
            e.precision, e.recall, e.outlier_recall
        );
    }
    if let Some(path) = &args.report_out {
        emit_report(&report, path).map_err(Failure::output)?;
    }
    if let Some(path) = &args.trace_out {
        for p in write_traces(reg, path).map_err(Failure::output)? {
            info!("trace written to {}", p.display());
        }
    }
    Ok(if mode == Mode::Exact && !reg.certified() {
        EXIT_UNCERTIFIED
    } else {
        0
    })
}

fn match_shapes(a: MatchShapes) -> CliResult {
    let source = read_surface(&a.source)?;
    let target = read_surface(&a.target)?;
    let matches = io::read_matches(&a.matches).map_err(Failure::input)?;
    let config = IsometryConfig {
        eps_rel: a.eps_rel,
        eps_abs_frac: a.eps_abs_frac,
        clusters: a.solve.clusters,
        solver: a.solve.solver(),
        mode: a.solve.mode,
        seed: a.solve.seed,
    };
    let start = Instant::now();
    let reg = shape_registration(&source, &target, &matches, &config).map_err(Failure::run)?;
    let eval = evaluation(&matches, &reg)?;
    finish("match-shapes", &config, config.mode, &reg, eval, &a.solve, start.elapsed().as_secs_f64())
}

fn template_config(eps1_deg: f64, eps2: f64, q: usize, clusters: Option<usize>, solver: SolverConfig, mode: Mode, seed: u64) -> TemplateMatchConfig {
    let defaults = TemplateMatchConfig::default();
    TemplateMatchConfig {
        eps1: eps1_deg.to_radians(),
        eps2,
        q,
        clusters: clusters.unwrap_or(defaults.clusters),
        solver,
        mode,
        seed,
        ..defaults
    }
}

fn match_template(a: MatchTemplate) -> CliResult {
    let template = io::read_points3(&a.template).map_err(Failure::input)?;
    let image = io::read_points2(&a.image).map_err(Failure::input)?;
    let k = io::read_intrinsics(&a.intrinsics).map_err(Failure::input)?;
    let matches = io::read_matches(&a.matches).map_err(Failure::input)?;
    let s = &a.solve;
    let config = template_config(a.eps1_deg, a.eps2, a.q, s.clusters, s.solver(), s.mode, s.seed);
    let start = Instant::now();
    let reg = template_image_registration(&template, &image, &matches, &k, &config).map_err(Failure::run)?;
    let eval = evaluation(&matches, &reg)?;
    finish("match-template", &config, config.mode, &reg, eval, s, start.elapsed().as_secs_f64())
}

fn synth(a: Synth) -> CliResult {
    let spec = a.synth.spec(a.synth.outlier_ratio, a.seed);
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Failure::output(Error::Io {
        path: a.out_dir.clone(),
        source: e,
    }))?;
    let dir = &a.out_dir;
    let files: Vec<(&str, String)> = match spec.kind {
        SynthKind::IsometricGrid => {
            let inst = synth_isometric_instance(&spec).map_err(Failure::run)?;
            vec![
                ("source.obj", io::emit_obj(&inst.source)),
                ("target.obj", io::emit_obj(&inst.target)),
                ("matches.txt", io::emit_matches(&inst.matches)),
            ]
        }
        SynthKind::TemplateBend => {
            let inst = synth_template_instance(&spec).map_err(Failure::run)?;
            vec![
                ("template.txt", io::emit_points3(&inst.template)),
                ("image.txt", io::emit_points2(&inst.image)),
                ("intrinsics.json", io::emit_intrinsics(&inst.intrinsics)),
                ("matches.txt", io::emit_matches(&inst.matches)),
            ]
        }
    };
    for (name, text) in files {
        io::write_text(&dir.join(name), &text).map_err(Failure::output)?;
        println!("{}", dir.join(name).display());
    }
    Ok(0)
}

#[derive(Serialize)]
struct BenchRow {
    ratio: f64,
    seed: u64,
    objective: usize,
    lower_bound: f64,
    certified: bool,
    evaluation: EvalReport,
}

fn bench_one(a: &Bench, ratio: f64, seed: u64) -> Result<(Registration, EvalReport, f64), Failure> {
    let spec = a.synth.spec(ratio, seed);
    let solver = SolverConfig {
        time_budget: a.time_budget,
        ..SolverConfig::default()
    };
    let start = Instant::now();
    let (reg, matches) = match spec.kind {
        SynthKind::IsometricGrid => {
            let inst = synth_isometric_instance(&spec).map_err(Failure::run)?;
            let config = IsometryConfig {
                eps_rel: a.eps_rel,
                clusters: a.clusters,
                solver,
                mode: a.mode,
                seed,
                ..IsometryConfig::default()
            };
            let (s, t) = (Surface::Mesh(inst.source), Surface::Mesh(inst.target));
            (shape_registration(&s, &t, &inst.matches, &config).map_err(Failure::run)?, inst.matches)
        }
        SynthKind::TemplateBend => {
            let inst = synth_template_instance(&spec).map_err(Failure::run)?;
            let config = template_config(a.eps1_deg, a.eps2, a.q, a.clusters, solver, a.mode, seed);
            let reg = template_image_registration(&inst.template, &inst.image, &inst.matches, &inst.intrinsics, &config)
                .map_err(Failure::run)?;
            (reg, inst.matches)
        }
    };
    let elapsed = start.elapsed().as_secs_f64();
    let gt = matches.gt_labels.as_ref().expect("synthetic instances carry ground truth");
    let mut eval = evaluate_labels(&reg.labels, gt).map_err(Failure::run)?;
    eval.wall_time = a.timings.then_some(elapsed);
    Ok((reg, eval, elapsed))
}

fn bench(a: Bench) -> CliResult {
    let jobs: Vec<(f64, u64)> = a.ratios.iter().flat_map(|&r| (0..a.seeds).map(move |s| (r, s))).collect();
    // instances are independent; results come back in job order
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(ratio, seed)| bench_one(&a, ratio, seed))
        .collect::<Result<_, _>>()?;

    println!("ratio  seed  objective  certified  precision  recall  outlier_recall  seconds");
    let mut rows = Vec::with_capacity(results.len());
    for (&(ratio, seed), (reg, eval, elapsed)) in jobs.iter().zip(&results) {
        // relaxed rounding is never a certified optimum
        let certified = a.mode == Mode::Exact && reg.certified();
        println!(
            "{ratio:5.2}  {seed:4}  {:9}  {:9}  {:9.4}  {:6.4}  {:14.4}  {elapsed:7.3}",
            reg.objective(),
            certified,
            eval.precision,
            eval.recall,
            eval.outlier_recall,
        );
        rows.push(BenchRow {
            ratio,
            seed,
            objective: reg.objective(),
            lower_bound: reg.lower_bound(),
            certified,
            evaluation: eval.clone(),
        });
    }
    if let Some(path) = &a.report_out {
        let mut text = serde_json::to_string_pretty(&rows).map_err(|e| Failure::output(e.into()))?;
        text.push('\n');
        io::write_text(path, &text).map_err(Failure::output)?;
    }
    let uncertified = a.mode == Mode::Exact && results.iter().any(|(reg, _, _)| !reg.certified());
    Ok(if uncertified { EXIT_UNCERTIFIED } else { 0 })
}
