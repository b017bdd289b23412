//! `sphquad`: build, check and benchmark spherical quadrature rules, and run
//! the voxel transport solver.
//!
//! Exit codes: 0 success, 1 invalid input or failed check, 2 numerical
//! failure (non-convergence, divergence), 3 I/O error.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sphquad::bench::{error_csv, error_sweep, hg_tail_bound, weight_stats, weight_stats_csv, HgIntegrand};
use sphquad::construct::{self, parse_recipe, recipe_to_string, reduced_residual, verify_exactness, SolveOptions, SolveSpec};
use sphquad::icosahedral::{check_pairing_conditions, decompose, icosahedral_group, summarize, OrbitType};
use sphquad::rte::{self, Face, Inflow, ProblemOptions, RteSolveOptions, Source, SweepMode};
use sphquad::rules::{product_gauss_legendre, product_trapezoid, read_rule, write_rule, QuadratureRule, FOUR_PI};
use sphquad::{Direction, Exec, FormatError, RteError, SolveError};

/// Check threshold for `check`.
const CHECK_TOL: f64 = 1e-8;

#[derive(Parser)]
#[command(name = "sphquad", version, about = "Icosahedrally invariant spherical quadrature and a voxel transport solver")]
struct Cli {
    /// Run everything on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Construct an invariant rule exact through a given degree.
    Construct(ConstructArgs),
    /// Verify a rule file against all harmonics through a degree.
    Check(CheckArgs),
    /// Write a product rule (trapezoid–trapezoid or Gauss–Legendre–trapezoid).
    Product(ProductArgs),
    /// Henyey–Greenstein error sweep and weight statistics over rule files.
    Bench(BenchArgs),
    /// Solve the transport problem on a labelled voxel volume.
    Rte(RteArgs),
    /// Report angular unknown counts for a grid and several angular rules.
    Unknowns(UnknownsArgs),
}

#[derive(Args)]
struct ConstructArgs {
    #[arg(long)]
    degree: usize,
    /// Comma list of `vertex`, `edge`, `face`, `generic`, each optionally
    /// repeated as `genericx32`; or `auto`.
    #[arg(long, default_value = "auto")]
    recipe: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    restarts: usize,
    #[arg(long)]
    out: PathBuf,
    /// Convergence log (defaults to `<out>.log.csv`).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    rule: PathBuf,
    #[arg(long)]
    degree: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProductKind {
    Tt,
    Glt,
}

#[derive(Args)]
struct ProductArgs {
    #[arg(long, value_enum)]
    kind: ProductKind,
    #[arg(long)]
    m_theta: usize,
    #[arg(long)]
    m_phi: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, num_args = 1.., required = true)]
    rules: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    g: f64,
    /// Kernel axis as three comma-separated numbers or fractions.
    #[arg(long, default_value = "1/9,4/9,8/9")]
    axis: String,
    /// Error CSV.
    #[arg(long)]
    out: PathBuf,
    /// Weight statistics CSV (defaults to `<out>` with `_weights` appended).
    #[arg(long)]
    weights_out: Option<PathBuf>,
    /// Weight band `lo,hi` for the band fraction column.
    #[arg(long, default_value = "0,1")]
    band: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    GaussSeidel,
    BlockJacobi,
}

#[derive(Args)]
struct RteArgs {
    #[arg(long)]
    volume: PathBuf,
    #[arg(long)]
    materials: PathBuf,
    #[arg(long)]
    rule: PathBuf,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
    /// Output prefix: writes `<prefix>_fluence.{hdr,raw}` and `<prefix>_residual.csv`.
    #[arg(long)]
    out: PathBuf,
    /// Collimated inflow: `none`, or a face (`zmin`, ...) optionally followed
    /// by `:i0,j0,i1,j1` in-face voxel bounds. Defaults to the centre voxel of
    /// the face.
    #[arg(long, default_value = "zmin")]
    beam: String,
    /// Uniform isotropic volume source.
    #[arg(long, default_value_t = 0.0)]
    source: f64,
    /// Use the raw (non-normalized) discrete phase function.
    #[arg(long)]
    raw_phase: bool,
    #[arg(long, value_enum, default_value = "gauss-seidel")]
    mode: ModeArg,
    /// Allow more than 10^8 unknowns.
    #[arg(long)]
    allow_large: bool,
}

#[derive(Args)]
struct UnknownsArgs {
    /// Grid dimensions `nx,ny,nz`.
    #[arg(long)]
    dims: String,
    /// Angular rule: `tt:MT,MP`, `glt:MT,MP`, `recipe:<recipe>` or `rule:<file>`.
    /// The first one is the reference for the reported ratios.
    #[arg(long, required = true)]
    angular: Vec<String>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(m: impl fmt::Display) -> Self {
        Failure {
            code: 1,
            message: m.to_string(),
        }
    }

    fn numerical(m: impl fmt::Display) -> Self {
        Failure {
            code: 2,
            message: m.to_string(),
        }
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        let code = match e {
            FormatError::Io { .. } => 3,
            FormatError::Parse { .. } => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Domain(_) => Failure::validation(e),
            _ => Failure::numerical(e),
        }
    }
}

impl From<RteError> for Failure {
    fn from(e: RteError) -> Self {
        match e {
            RteError::Format(f) => f.into(),
            RteError::Divergence { .. } => Failure::numerical(e),
            _ => Failure::validation(e),
        }
    }
}

impl From<sphquad::DomainError> for Failure {
    fn from(e: sphquad::DomainError) -> Self {
        Failure::validation(e)
    }
}

type Outcome = Result<(), Failure>;

fn write_text(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| Failure {
        code: 3,
        message: format!("{}: {e}", path.display()),
    })
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn weight_extremes(rule: &QuadratureRule) -> (f64, f64) {
    let w = rule.weights();
    (w.iter().copied().fold(f64::INFINITY, f64::min), w.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

fn construct(a: ConstructArgs, exec: Exec) -> Outcome {
    let recipe = parse_recipe(&a.recipe, a.degree)?;
    let spec = SolveSpec {
        degree: a.degree,
        recipe: recipe.clone(),
        seed: a.seed,
        opts: SolveOptions {
            restarts: a.restarts,
            exec,
            ..SolveOptions::default()
        },
    };
    println!("degree {}  recipe {}", a.degree, recipe_to_string(&recipe));
    let built = construct::solve(&spec)?;
    write_rule(&built.rule, &a.out)?;
    let log = a.log.unwrap_or_else(|| with_suffix(&a.out, ".log.csv"));
    write_text(&log, &built.log_csv())?;
    let (lo, hi) = weight_extremes(&built.rule);
    println!("nodes {}", built.rule.len());
    println!("weights min {lo:.6e} max {hi:.6e}");
    println!("max residual {:.3e}", built.exactness);
    println!("iterations {}", built.log.len());
    Ok(())
}

fn check(a: CheckArgs, exec: Exec) -> Outcome {
    let rule = read_rule(&a.rule)?;
    for w in rule.warnings() {
        eprintln!("warning: {w}");
    }
    let full = verify_exactness(&rule, a.degree, exec);
    let reduced = reduced_residual(&rule, a.degree);
    let pairs: Vec<(Direction, f64)> = rule.nodes().iter().copied().zip(rule.weights().iter().copied()).collect();
    let pairing = check_pairing_conditions(&pairs);
    println!("nodes {}", rule.len());
    println!("max residual {full:.3e} (degree {})", a.degree);
    println!("reduced residual {reduced:.3e}");
    println!("weight sum - 4pi {:.3e}", rule.weight_sum() - FOUR_PI);
    println!(
        "pairing conditions {} ({} azimuthal, {} flip failures)",
        if pairing.ok { "hold" } else { "violated" },
        pairing.azimuthal_failures.len(),
        pairing.flip_failures.len()
    );
    match decompose(icosahedral_group(), rule.nodes(), rule.weights()) {
        Some(types) => {
            let parts: Vec<String> = summarize(&types).iter().map(|(t, c)| format!("{c} {t}")).collect();
            println!("icosahedral orbits: {}", parts.join(", "));
        }
        None => println!("icosahedral orbits: not invariant"),
    }
    if full <= CHECK_TOL {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL");
        Err(Failure::validation(format!("residual {full:.3e} exceeds {CHECK_TOL:e}")))
    }
}

fn product(a: ProductArgs) -> Outcome {
    let rule = match a.kind {
        ProductKind::Tt => product_trapezoid(a.m_theta, a.m_phi)?,
        ProductKind::Glt => product_gauss_legendre(a.m_theta, a.m_phi)?,
    };
    write_rule(&rule, &a.out)?;
    println!("nodes {}", rule.len());
    Ok(())
}

fn parse_number(s: &str) -> Result<f64, Failure> {
    let s = s.trim();
    let parsed = match s.split_once('/') {
        Some((n, d)) => n.trim().parse::<f64>().and_then(|n| d.trim().parse::<f64>().map(|d| n / d)),
        None => s.parse::<f64>(),
    };
    parsed.map_err(|e| Failure::validation(format!("bad number '{s}': {e}")))
}

fn parse_list(s: &str, n: usize) -> Result<Vec<f64>, Failure> {
    let v = s.split(',').map(parse_number).collect::<Result<Vec<_>, _>>()?;
    if v.len() != n {
        return Err(Failure::validation(format!("expected {n} comma-separated values in '{s}'")));
    }
    Ok(v)
}

fn rule_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

fn bench(a: BenchArgs, exec: Exec) -> Outcome {
    let axis = parse_list(&a.axis, 3)?;
    let band = parse_list(&a.band, 2)?;
    let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    if !(norm > 0.0) {
        return Err(Failure::validation("axis must be non-zero"));
    }
    let kernel = HgIntegrand::new(a.g, Direction::from_xyz(axis[0] / norm, axis[1] / norm, axis[2] / norm))?;
    let rules = a
        .rules
        .iter()
        .map(|p| Ok((rule_id(p), read_rule(p)?)))
        .collect::<Result<Vec<_>, Failure>>()?;
    let rows = error_sweep(&rules, &kernel, exec);
    write_text(&a.out, &error_csv(&rows))?;
    let stats: Vec<_> = rules.iter().map(|(id, r)| (id.clone(), weight_stats(r))).collect();
    let weights_out = a.weights_out.unwrap_or_else(|| {
        let stem = a.out.with_extension("");
        with_suffix(&stem, "_weights.csv")
    });
    write_text(&weights_out, &weight_stats_csv(&stats, band[0], band[1]))?;
    for (row, (_, rule)) in rows.iter().zip(&rules) {
        match rule.meta.degree {
            Some(d) => println!(
                "{:<24} {:>6} nodes  error {:.3e}  bound {:.3e} (degree {d})",
                row.rule_id,
                row.node_count,
                row.abs_error,
                hg_tail_bound(a.g, d)
            ),
            None => println!("{:<24} {:>6} nodes  error {:.3e}", row.rule_id, row.node_count, row.abs_error),
        }
    }
    Ok(())
}

fn parse_beam(spec: &str, grid: &rte::Grid) -> Result<Inflow, Failure> {
    if spec == "none" {
        return Ok(Inflow::Vacuum);
    }
    let (face, bounds) = match spec.split_once(':') {
        Some((f, b)) => (f, Some(b)),
        None => (spec, None),
    };
    let face: Face = face.parse()?;
    let dims = [grid.nx, grid.ny, grid.nz];
    let axis = match face {
        Face::XMin | Face::XMax => 0,
        Face::YMin | Face::YMax => 1,
        Face::ZMin | Face::ZMax => 2,
    };
    let in_face: Vec<usize> = (0..3).filter(|&a| a != axis).map(|a| dims[a]).collect();
    let (lo, hi) = match bounds {
        None => {
            let c = [in_face[0] / 2, in_face[1] / 2];
            (c, c)
        }
        Some(b) => {
            let v: Vec<usize> = b
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|e| Failure::validation(format!("bad beam bounds '{b}': {e}")))?;
            if v.len() != 4 || v[0] > v[2] || v[1] > v[3] {
                return Err(Failure::validation(format!("beam bounds must be i0,j0,i1,j1 with i0<=i1, j0<=j1: '{b}'")));
            }
            ([v[0], v[1]], [v[2], v[3]])
        }
    };
    if hi[0] >= in_face[0] || hi[1] >= in_face[1] {
        return Err(Failure::validation("beam patch lies outside the face"));
    }
    Ok(Inflow::Patch {
        face,
        lo,
        hi,
        intensity: 1.0,
        collimated: true,
    })
}

fn run_rte(a: RteArgs, exec: Exec) -> Outcome {
    if !(a.tol > 0.0) {
        return Err(Failure::validation("tol must be positive"));
    }
    let rule = read_rule(&a.rule)?;
    let opts = ProblemOptions {
        normalize_phase: !a.raw_phase,
        allow_large: a.allow_large,
        exec,
    };
    let problem = rte::load_voxel_problem(&a.volume, &a.materials, rule, opts)?;
    let grid = *problem.grid();
    let inflow = parse_beam(&a.beam, &grid)?;
    let mut problem = problem.with_inflow(inflow);
    if a.source != 0.0 {
        if a.source < 0.0 {
            return Err(Failure::validation("source must be non-negative"));
        }
        problem = problem.with_source(Source::Isotropic(vec![a.source; grid.voxels()]))?;
    }
    println!(
        "grid {}x{}x{}  h {}  directions {}  unknowns {}",
        grid.nx,
        grid.ny,
        grid.nz,
        grid.h,
        problem.rule().len(),
        problem.unknowns()
    );
    let solve_opts = RteSolveOptions {
        max_iters: a.max_iters,
        tol: a.tol,
        mode: match a.mode {
            ModeArg::GaussSeidel => SweepMode::GaussSeidel,
            ModeArg::BlockJacobi => SweepMode::BlockJacobi,
        },
        exec,
        ..RteSolveOptions::default()
    };
    let field = rte::solve(&problem, &solve_opts)?;
    let fluence = field.fluence(problem.rule());
    rte::write_f64_volume(with_suffix(&a.out, "_fluence"), &grid, &fluence)?;
    write_text(&with_suffix(&a.out, "_residual.csv"), &field.residual_csv())?;
    let last = field.residual_history.last().map_or(f64::NAN, |r| r.1);
    println!("iterations {}  relative residual {last:.3e}", field.residual_history.len());
    if !(last <= a.tol) {
        println!("tolerance not reached");
    }
    Ok(())
}

/// Node count of one `--angular` entry and a display label.
fn angular_nodes(spec: &str) -> Result<(String, usize), Failure> {
    let (kind, arg) = spec
        .split_once(':')
        .ok_or_else(|| Failure::validation(format!("angular rule '{spec}' needs the form kind:args")))?;
    let count = match kind {
        "tt" | "glt" => {
            let v = parse_list(arg, 2)?;
            let (mt, mp) = (v[0] as usize, v[1] as usize);
            if v[0] != mt as f64 || v[1] != mp as f64 || mt == 0 || mp == 0 {
                return Err(Failure::validation(format!("'{arg}' must be two positive integers")));
            }
            if kind == "tt" {
                if mt < 2 {
                    return Err(Failure::validation("tt needs m_theta >= 2"));
                }
                (mt - 1) * mp + 2
            } else {
                mt * mp
            }
        }
        "recipe" => parse_recipe(arg, 0)?.iter().map(|t: &OrbitType| t.size()).sum(),
        "rule" => read_rule(arg)?.len(),
        other => return Err(Failure::validation(format!("unknown angular kind '{other}'"))),
    };
    Ok((spec.to_string(), count))
}

fn unknowns(a: UnknownsArgs) -> Outcome {
    let dims: Vec<u64> = a
        .dims
        .split(',')
        .map(|s| s.trim().parse::<u64>())
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::validation(format!("bad dims '{}': {e}", a.dims)))?;
    if dims.len() != 3 {
        return Err(Failure::validation("dims needs nx,ny,nz"));
    }
    let voxels: u64 = dims.iter().product();
    let entries = a.angular.iter().map(|s| angular_nodes(s)).collect::<Result<Vec<_>, _>>()?;
    println!("voxels {voxels}");
    let reference = entries[0].1 as f64;
    for (label, k) in &entries {
        println!(
            "{label:<32} directions {k:>6}  unknowns {:>14}  ratio {:.4}",
            voxels * *k as u64,
            reference / *k as f64
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    let result = match cli.cmd {
        Cmd::Construct(a) => construct(a, exec),
        Cmd::Check(a) => check(a, exec),
        Cmd::Product(a) => product(a),
        Cmd::Bench(a) => bench(a, exec),
        Cmd::Rte(a) => run_rte(a, exec),
        Cmd::Unknowns(a) => unknowns(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
