//! `mpqp`: solve, compress, evaluate and verify explicit mpQP solutions.

pub mod bench;

use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use mpqp_core::enumerator::EnumerateOptions;
use mpqp_core::eval::{eval_output, locate};
use mpqp_core::io::{self, parse_problem, problem_hash, ProblemJson, SolutionFile};
use mpqp_core::mpc;
use mpqp_core::tree::{build_tree, compression_report, RootPolicy};
use mpqp_core::verify::{verify, Tolerances};
use mpqp_core::Error;
use nalgebra::DVector;

use bench::{default_suite, deviations, run_instance, target_for, write_csv, BenchConfig, Instance};

#[derive(Parser, Debug)]
#[command(name = "mpqp", version, about = "Explicit mpQP solutions stored as trees of rank-1 updates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write one of the benchmark problems as a problem file.
    Generate {
        /// Instance as family:size/horizon, e.g. p1:2/2.
        instance: String,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Enumerate all critical regions of a problem file.
    Solve {
        problem: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value_t = EnumerateOptions::default().budget)]
        budget: usize,
    },
    /// Build the storage tree of a solution file.
    Compress {
        solution: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// `empty` or `region:<id>` (1-based).
        #[arg(long, default_value = "empty")]
        root: String,
        /// Keep only the first-input rows of the primal data.
        #[arg(long)]
        mpc: bool,
        /// Number of inputs when the solution has no manifest.
        #[arg(long)]
        n_u: Option<usize>,
        /// Also write the JSON debug form.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Locate parameters and print the optimizer. `-` reads one vector per line from stdin.
    Eval {
        tree: PathBuf,
        /// Comma-separated parameter vector.
        #[arg(allow_hyphen_values = true)]
        p: String,
    },
    /// Check a tree against its solution and the QP oracle.
    Verify {
        tree: PathBuf,
        solution: PathBuf,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run benchmark instances and print one row per instance.
    Bench {
        /// Families (p1, p2, p3) or instances (family:size/horizon).
        #[arg(long, value_delimiter = ',', default_value = "p1,p2,p3")]
        suite: Vec<String>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value_t = EnumerateOptions::default().budget)]
        budget: usize,
    },
}

/// Failure with the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn failed(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Format(_) | Error::DimensionMismatch(_) => Failure::input(e.to_string()),
            _ => Failure::failed(e.to_string()),
        }
    }
}

type CliResult = std::result::Result<(), Failure>;

fn read_text(path: &Path) -> std::result::Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult {
    fs::write(path, bytes).map_err(|e| Failure::failed(format!("{}: {e}", path.display())))
}

fn read_solution(path: &Path) -> std::result::Result<SolutionFile, Failure> {
    SolutionFile::parse(&read_text(path)?).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn read_tree_file(path: &Path) -> std::result::Result<io::TreeFile, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    io::read_tree(&bytes).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn parse_root(spec: &str) -> std::result::Result<RootPolicy, Failure> {
    if spec == "empty" {
        return Ok(RootPolicy::Empty);
    }
    match spec.strip_prefix("region:").map(str::parse::<usize>) {
        Some(Ok(id)) if id >= 1 => Ok(RootPolicy::Region(id - 1)),
        _ => Err(Failure::input(format!("--root expects empty or region:<id>, got {spec:?}"))),
    }
}

fn parse_vector(text: &str) -> std::result::Result<DVector<f64>, Failure> {
    let v: std::result::Result<Vec<f64>, _> =
        text.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).map(str::parse).collect();
    v.map(DVector::from_vec).map_err(|e| Failure::input(format!("cannot parse {text:?}: {e}")))
}

fn format_vector(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("[{}]", parts.join(", "))
}

fn cmd_generate(instance: &str, output: &Path, out: &mut dyn Write) -> CliResult {
    let instance = Instance::parse(instance).map_err(Failure::input)?;
    let cftoc = instance.cftoc()?;
    let raw = mpc::condense(&cftoc)?;
    let json = ProblemJson::from_raw(&raw, cftoc.manifest.clone());
    write_bytes(output, serde_json::to_string_pretty(&json).expect("problem serializes").as_bytes())?;
    let _ = writeln!(out, "{}: nz = {}, np = {}, rows = {}", instance.label(), raw.h.nrows(), raw.e.ncols(), raw.b.len());
    Ok(())
}

fn cmd_solve(problem: &Path, output: &Path, options: &EnumerateOptions, out: &mut dyn Write) -> CliResult {
    let parsed = parse_problem(&read_text(problem)?).map_err(|e| Failure::input(format!("{}: {e}", problem.display())))?;
    let raw = parsed.to_raw()?;
    let file = bench::solve_raw(&raw, parsed.manifest.clone(), options)?;
    write_bytes(output, file.to_string_pretty().as_bytes())?;
    let _ = writeln!(out, "R = {}", file.solution.num_regions());
    let _ = writeln!(out, "nc = {}", file.nc_joint.unwrap_or(file.solution.problem.nc()));
    Ok(())
}

fn cmd_compress(
    solution: &Path,
    output: &Path,
    root: &str,
    mpc_mode: bool,
    n_u: Option<usize>,
    json: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult {
    let file = read_solution(solution)?;
    let policy = parse_root(root)?;
    let n_u = n_u.or(file.manifest.as_ref().map(|m| m.n_inputs));
    if mpc_mode && n_u.is_none() {
        return Err(Failure::input("--mpc needs --n-u or a solution with a manifest"));
    }
    let sol = &file.solution;
    let mut tree = build_tree(sol, policy, if mpc_mode { n_u } else { None })?;
    if let Some(shift) = &file.shift {
        tree.set_shift(shift);
    }
    let bytes = io::write_tree(&tree, &problem_hash(&sol.problem));
    write_bytes(output, &bytes)?;
    if let Some(path) = json {
        let text = serde_json::to_string_pretty(&io::tree_to_json(&tree)).expect("tree serializes");
        write_bytes(path, text.as_bytes())?;
    }
    let report = compression_report(sol, &tree, n_u);
    let _ = writeln!(out, "R = {}, delta = {}, roots = {}", report.regions, report.depth, report.roots);
    let _ = writeln!(out, "m_F = {}, m_LR = {}", report.m_full, report.m_lowrank);
    if n_u.is_some() {
        let _ = writeln!(out, "m_F^MPC = {}, m_LR^MPC = {}", report.m_full_mpc, report.m_lowrank_mpc);
    }
    let _ = writeln!(out, "r_cr = {:.3}, r = {:.3}, r_mpc = {:.3}", report.r_cr, report.r, report.r_mpc);
    let _ = writeln!(out, "stored reals = {}", io::serialized_real_count(&bytes)?);
    Ok(())
}

fn eval_line(tree: &mpqp_core::tree::StorageTree, text: &str, out: &mut dyn Write) -> CliResult {
    let p = parse_vector(text)?;
    if p.len() != tree.np {
        return Err(Failure::input(format!("parameter has length {}, expected {}", p.len(), tree.np)));
    }
    match locate(tree, &p) {
        Ok(node) => {
            let z = eval_output(tree, node, &p)?;
            let _ = writeln!(out, "region {}: {}", node + 1, format_vector(&z));
        }
        Err(Error::InfeasibleParameter) => {
            let _ = writeln!(out, "Infeasible");
        }
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

fn cmd_eval(tree: &Path, p: &str, out: &mut dyn Write) -> CliResult {
    let file = read_tree_file(tree)?;
    if p == "-" {
        for line in std::io::stdin().lock().lines() {
            let line = line.map_err(|e| Failure::input(e.to_string()))?;
            if !line.trim().is_empty() {
                eval_line(&file.tree, &line, out)?;
            }
        }
        Ok(())
    } else {
        eval_line(&file.tree, p, out)
    }
}

fn cmd_verify(tree: &Path, solution: &Path, samples: usize, seed: u64, out: &mut dyn Write) -> CliResult {
    let tf = read_tree_file(tree)?;
    let file = read_solution(solution)?;
    if tf.hash != problem_hash(&file.solution.problem) {
        return Err(Error::HashMismatch.into());
    }
    if tf.tree.nodes.len() != file.solution.num_regions() {
        return Err(Failure::input("tree and solution differ in region count"));
    }
    let report = verify(&file.solution, &tf.tree, samples, seed)?;
    let tol = Tolerances::default();
    let width = tf.tree.primal_width();
    let counted = mpqp_core::tree::memory_lowrank(&tf.tree, width);
    let _ = writeln!(out, "seed = {seed}, samples per region = {samples}");
    let _ = writeln!(out, "solution (compressed vs uncompressed): {:.3e}", report.solution);
    let _ = writeln!(out, "solution (uncompressed vs oracle): {:.3e}, oracle failures: {}", report.oracle, report.oracle_failures);
    let _ = writeln!(out, "hyperplanes: {:.3e}", report.hyperplane);
    let _ = writeln!(out, "edges: {:.3e}", report.edge);
    let _ = writeln!(out, "structural zeros: {}", ok(report.structural_zeros));
    let _ = writeln!(out, "storage sets: {}", ok(report.storage_sets));
    let _ = writeln!(out, "stored reals: {} (m_LR = {counted}) {}", tf.payload_reals, ok(tf.payload_reals == counted));
    if report.passed(&tol) && tf.payload_reals == counted {
        let _ = writeln!(out, "PASS");
        Ok(())
    } else {
        let _ = writeln!(out, "FAIL");
        Err(Failure::failed("verification failed"))
    }
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

fn cmd_bench(suite: &[String], csv_path: Option<&Path>, config: &BenchConfig, out: &mut dyn Write) -> CliResult {
    let instances = default_suite(suite).map_err(Failure::input)?;
    let mut rows = Vec::new();
    let mut failed = false;
    let _ = writeln!(out, "seed = {}, samples per region = {}", config.seed, config.samples);
    for inst in instances {
        match run_instance(inst, config) {
            Ok(run) => {
                let row = run.row;
                let _ = writeln!(
                    out,
                    "{:<14} nc={:<3} R={:<4} delta={} r_cr={:.3} r={:.3} r_mpc={:.3} solve={}ms compress={}ms {}",
                    row.label,
                    row.nc,
                    row.regions,
                    row.delta,
                    row.r_cr,
                    row.r,
                    row.r_mpc,
                    row.t_solve_ms,
                    row.t_compress_ms,
                    if row.verified { "verified" } else { "FAILED verification" }
                );
                if let Some(target) = target_for(&inst) {
                    let dev = deviations(&row, target);
                    if !dev.is_empty() {
                        let _ = writeln!(out, "  deviation from reference: {}", dev.join("; "));
                    }
                }
                failed |= !row.verified;
                rows.push(row);
            }
            Err(e) => {
                let _ = writeln!(out, "{:<14} FAILED: {e}", inst.label());
                failed = true;
            }
        }
    }
    match csv_path {
        Some(path) => {
            let f = fs::File::create(path).map_err(|e| Failure::failed(format!("{}: {e}", path.display())))?;
            write_csv(&rows, f).map_err(|e| Failure::failed(e.to_string()))?;
        }
        None => write_csv(&rows, &mut *out).map_err(|e| Failure::failed(e.to_string()))?,
    }
    if failed {
        Err(Failure::failed("some rows failed"))
    } else {
        Ok(())
    }
}

/// Runs the command line and returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Generate { instance, output } => cmd_generate(instance, output, out),
        Command::Solve { problem, output, threads, budget } => {
            cmd_solve(problem, output, &EnumerateOptions { budget: *budget, threads: *threads }, out)
        }
        Command::Compress { solution, output, root, mpc, n_u, json } => {
            cmd_compress(solution, output, root, *mpc, *n_u, json.as_deref(), out)
        }
        Command::Eval { tree, p } => cmd_eval(tree, p, out),
        Command::Verify { tree, solution, samples, seed } => cmd_verify(tree, solution, *samples, *seed, out),
        Command::Bench { suite, csv, samples, seed, threads, budget } => {
            let config = BenchConfig { samples: *samples, seed: *seed, threads: *threads, budget: *budget };
            cmd_bench(suite, csv.as_deref(), &config, out)
        }
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}
