//! Benchmark instances and the solve / compress / verify pipeline behind `mpqp bench`.

use std::time::{Duration, Instant};

use mpqp_core::enumerator::{enumerate, reduce_problem, EnumerateOptions};
use mpqp_core::io::SolutionFile;
use mpqp_core::mpc::{self, BenchmarkManifest, CftocProblem};
use mpqp_core::tree::{build_tree, compression_report, MemoryReport, RootPolicy, StorageTree};
use mpqp_core::types::{transform_to_standard, MpQpRawProblem};
use mpqp_core::verify::{verify, Tolerances, VerifyReport};
use mpqp_core::{Error, Result};
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Instance {
    /// Single-input system of order `n`.
    P1 { n: usize, horizon: usize },
    /// `n_m` masses, one input.
    P2 { n_m: usize, horizon: usize },
    /// `n_m` masses, two inputs.
    P3 { n_m: usize, horizon: usize },
}

impl Instance {
    pub fn label(&self) -> String {
        match *self {
            Instance::P1 { n, horizon } => format!("P1 n={n} N={horizon}"),
            Instance::P2 { n_m, horizon } => format!("P2 nM={n_m} N={horizon}"),
            Instance::P3 { n_m, horizon } => format!("P3 nM={n_m} N={horizon}"),
        }
    }

    pub fn cftoc(&self) -> Result<CftocProblem> {
        match *self {
            Instance::P1 { n, horizon } => mpc::build_problem1(n, horizon),
            Instance::P2 { n_m, horizon } => mpc::build_problem23(n_m, horizon, false, mpc::DEFAULT_TOPOLOGY),
            Instance::P3 { n_m, horizon } => mpc::build_problem23(n_m, horizon, true, mpc::DEFAULT_TOPOLOGY),
        }
    }

    /// Parses `p1:4/2` style specifications (size / horizon).
    pub fn parse(spec: &str) -> std::result::Result<Self, String> {
        let (family, size) = spec.split_once(':').ok_or_else(|| format!("expected family:size/horizon, got {spec:?}"))?;
        let (a, b) = size.split_once('/').ok_or_else(|| format!("expected size/horizon, got {size:?}"))?;
        let a: usize = a.trim().parse().map_err(|_| format!("bad size {a:?}"))?;
        let horizon: usize = b.trim().parse().map_err(|_| format!("bad horizon {b:?}"))?;
        match family.trim().to_ascii_lowercase().as_str() {
            "p1" => Ok(Instance::P1 { n: a, horizon }),
            "p2" => Ok(Instance::P2 { n_m: a, horizon }),
            "p3" => Ok(Instance::P3 { n_m: a, horizon }),
            other => Err(format!("unknown family {other:?}")),
        }
    }
}

/// Small reference instances per family.
pub fn default_suite(families: &[String]) -> std::result::Result<Vec<Instance>, String> {
    let mut out = Vec::new();
    for f in families {
        match f.trim().to_ascii_lowercase().as_str() {
            "" => {}
            "p1" => out.extend([Instance::P1 { n: 2, horizon: 2 }, Instance::P1 { n: 4, horizon: 2 }]),
            "p2" => out.push(Instance::P2 { n_m: 2, horizon: 2 }),
            "p3" => out.push(Instance::P3 { n_m: 2, horizon: 2 }),
            other => out.push(Instance::parse(other)?),
        }
    }
    Ok(out)
}

/// Reference row an instance is compared against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetRow {
    pub instance: Instance,
    pub nc: usize,
    pub regions: usize,
    pub delta: Option<usize>,
    pub ratios: [f64; 3],
}

pub const RATIO_TOL: f64 = 0.01;

pub const TARGETS: [TargetRow; 4] = [
    TargetRow { instance: Instance::P1 { n: 2, horizon: 2 }, nc: 10, regions: 5, delta: Some(2), ratios: [0.909, 0.729, 0.827] },
    TargetRow { instance: Instance::P1 { n: 4, horizon: 2 }, nc: 20, regions: 11, delta: Some(2), ratios: [0.446, 0.403, 0.431] },
    TargetRow { instance: Instance::P2 { n_m: 2, horizon: 2 }, nc: 28, regions: 45, delta: Some(2), ratios: [0.392, 0.351, 0.378] },
    TargetRow { instance: Instance::P3 { n_m: 2, horizon: 2 }, nc: 28, regions: 45, delta: Some(2), ratios: [0.392, 0.351, 0.378] },
];

pub fn target_for(instance: &Instance) -> Option<&'static TargetRow> {
    TARGETS.iter().find(|t| &t.instance == instance)
}

/// Differences between a row and its target; empty when the row reproduces it.
pub fn deviations(row: &BenchRow, target: &TargetRow) -> Vec<String> {
    let mut out = Vec::new();
    if row.nc != target.nc {
        out.push(format!("nc {} vs {}", row.nc, target.nc));
    }
    if row.regions != target.regions {
        out.push(format!("R {} vs {}", row.regions, target.regions));
    }
    if let Some(d) = target.delta {
        if row.delta != d {
            out.push(format!("delta {} vs {d}", row.delta));
        }
    }
    for (name, got, want) in [
        ("r_cr", row.r_cr, target.ratios[0]),
        ("r", row.r, target.ratios[1]),
        ("r_mpc", row.r_mpc, target.ratios[2]),
    ] {
        if (got - want).abs() > RATIO_TOL {
            out.push(format!("{name} {got:.3} vs {want:.3}"));
        }
    }
    out
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub label: String,
    pub nc: usize,
    #[serde(rename = "R")]
    pub regions: usize,
    pub delta: usize,
    #[serde(serialize_with = "three_decimals")]
    pub r_cr: f64,
    #[serde(serialize_with = "three_decimals")]
    pub r: f64,
    #[serde(serialize_with = "three_decimals")]
    pub r_mpc: f64,
    pub t_solve_ms: u128,
    pub t_compress_ms: u128,
    pub verified: bool,
}

fn three_decimals<S: serde::Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{x:.3}"))
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub samples: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    pub budget: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { samples: 100, seed: 0, threads: None, budget: EnumerateOptions::default().budget }
    }
}

/// Standard form, row reduction and enumeration of a raw problem.
pub fn solve_raw(
    raw: &MpQpRawProblem,
    manifest: Option<BenchmarkManifest>,
    options: &EnumerateOptions,
) -> Result<SolutionFile> {
    let standard = transform_to_standard(raw)?;
    let reduced = reduce_problem(&standard.problem)?;
    let solution = enumerate(&reduced.problem, options)?;
    Ok(SolutionFile {
        solution,
        shift: Some(standard.shift),
        nc_joint: Some(reduced.nc_joint),
        kept_rows: Some(reduced.kept_rows),
        manifest,
    })
}

/// Everything produced for one benchmark instance.
#[derive(Clone, Debug)]
pub struct InstanceRun {
    pub instance: Instance,
    pub file: SolutionFile,
    pub tree: StorageTree,
    pub n_u: usize,
    pub memory: MemoryReport,
    pub verify: VerifyReport,
    pub row: BenchRow,
}

pub fn run_instance(instance: Instance, config: &BenchConfig) -> Result<InstanceRun> {
    let cftoc = instance.cftoc()?;
    let n_u = cftoc.nu();
    let raw = mpc::condense(&cftoc)?;
    let options = EnumerateOptions { budget: config.budget, threads: config.threads };
    let start = Instant::now();
    let file = solve_raw(&raw, cftoc.manifest.clone(), &options)?;
    let t_solve = start.elapsed();
    let start = Instant::now();
    let mut tree = build_tree(&file.solution, RootPolicy::Empty, None)?;
    if let Some(shift) = &file.shift {
        tree.set_shift(shift);
    }
    let t_compress = start.elapsed();
    let mut memory = compression_report(&file.solution, &tree, Some(n_u));
    memory.nc = file.nc_joint.ok_or_else(|| Error::InvalidProblem("missing joint row count".into()))?;
    let verify = verify(&file.solution, &tree, config.samples, config.seed)?;
    let row = BenchRow {
        label: instance.label(),
        nc: memory.nc,
        regions: memory.regions,
        delta: memory.depth,
        r_cr: memory.r_cr,
        r: memory.r,
        r_mpc: memory.r_mpc,
        t_solve_ms: millis(t_solve),
        t_compress_ms: millis(t_compress),
        verified: verify.passed(&Tolerances::default()),
    };
    Ok(InstanceRun { instance, file, tree, n_u, memory, verify, row })
}

fn millis(d: Duration) -> u128 {
    d.as_millis()
}

/// Writes rows as CSV, header included even without rows.
pub fn write_csv<W: std::io::Write>(rows: &[BenchRow], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(["label", "nc", "R", "delta", "r_cr", "r", "r_mpc", "t_solve_ms", "t_compress_ms", "verified"])?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instance_specs() {
        assert_eq!(Instance::parse("p1:4/2"), Ok(Instance::P1 { n: 4, horizon: 2 }));
        assert_eq!(Instance::parse("P3:2/3"), Ok(Instance::P3 { n_m: 2, horizon: 3 }));
        assert!(Instance::parse("p4:2/2").is_err());
        assert!(Instance::parse("p1").is_err());
        assert_eq!(default_suite(&["p1".into()]).unwrap().len(), 2);
        assert!(default_suite(&[]).unwrap().is_empty());
    }

    #[test]
    fn empty_csv_has_header() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "label,nc,R,delta,r_cr,r,r_mpc,t_solve_ms,t_compress_ms,verified\n");
    }
}
