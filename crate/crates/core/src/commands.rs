//! The four front-end commands, independent of argument parsing.
//!
//! Each command returns its full output as a string plus an exit code so the
//! binary only has to print or write it. Floats in CSV are written with 17
//! significant digits; JSON uses serde's round-trip formatting.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::baseline::{compare_runs, qr2_factor, qr2_form_q_with, CompareParams, Comparison};
use crate::error::{Error, Result};
use crate::matrix::{relative_distance, DenseMatrix};
use crate::netsim::{Communicator, CostReport};
use crate::perfmodel::{speedup_curve, Algo, GridModel};
use crate::topology::Topology;
use crate::tree::{build_tree, TreeShape};
use crate::tsqr::{tsqr_factor, tsqr_grouped, DomainKernel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const MAX_M: usize = 1 << 22;
pub const MAX_N: usize = 512;
pub const MAX_P: usize = 512;

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub output: String,
    pub code: i32,
}

impl Outcome {
    fn ok(output: String) -> Self {
        Self { output, code: EXIT_OK }
    }

    pub fn usage(err: &Error) -> Self {
        Self {
            output: format!("error: {err}\n"),
            code: EXIT_USAGE,
        }
    }
}

/// One parameter grid. Empty `sites` means every cluster of the topology;
/// empty `domains` means the topology's own domain counts.
#[derive(Clone, Debug)]
pub struct RunSpec {
    pub m: Vec<usize>,
    pub n: Vec<usize>,
    pub sites: Vec<usize>,
    /// Leaves of the reduction per cluster. When fewer than the cluster's
    /// processes, each leaf is a group of processes running `domain_kernel`.
    pub domains: Vec<usize>,
    /// Trees to run; empty means all three.
    pub trees: Vec<TreeShape>,
    pub algos: Vec<Algo>,
    pub want_q: bool,
    pub seed: u64,
    pub topology: Topology,
    pub topology_name: String,
    pub domain_kernel: DomainKernel,
    pub allow_large: bool,
    pub inject_fault: bool,
    pub json: bool,
}

impl RunSpec {
    pub fn new(topology: Topology, topology_name: impl Into<String>) -> Self {
        Self {
            m: vec![1024],
            n: vec![16],
            sites: Vec::new(),
            domains: Vec::new(),
            trees: Vec::new(),
            algos: vec![Algo::Tsqr],
            want_q: false,
            seed: 0,
            topology,
            topology_name: topology_name.into(),
            domain_kernel: DomainKernel::FlatTsqr,
            allow_large: false,
            inject_fault: false,
            json: false,
        }
    }

    fn trees(&self) -> Vec<TreeShape> {
        if self.trees.is_empty() {
            vec![TreeShape::Flat, TreeShape::Binary, TreeShape::Hierarchical]
        } else {
            self.trees.clone()
        }
    }

    fn sites(&self) -> Vec<usize> {
        if self.sites.is_empty() {
            vec![self.topology.cluster_count()]
        } else {
            self.sites.clone()
        }
    }

    fn domains(&self) -> Vec<Option<usize>> {
        if self.domains.is_empty() {
            vec![None]
        } else {
            self.domains.iter().copied().map(Some).collect()
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Run(format!("{what} must be non-empty and positive")));
        if self.m.is_empty() || self.m.contains(&0) {
            return bad("--m");
        }
        if self.n.is_empty() || self.n.contains(&0) {
            return bad("--n");
        }
        if self.sites.contains(&0) || self.domains.contains(&0) {
            return bad("--sites/--domains");
        }
        if self.algos.is_empty() {
            return bad("--algo");
        }
        Ok(())
    }

    /// Rejects matrices beyond the desk-scale caps unless overridden.
    fn check_caps(&self, m: usize, n: usize, p: usize) -> Result<()> {
        if self.allow_large {
            return Ok(());
        }
        if m > MAX_M || n > MAX_N || p > MAX_P {
            return Err(Error::Run(format!(
                "{m}x{n} on {p} domains exceeds the caps m <= {MAX_M}, n <= {MAX_N}, p <= {MAX_P} \
                 ({} MiB of matrix data); pass --allow-large to override",
                (m as u64 * n as u64 * 8) >> 20
            )));
        }
        Ok(())
    }
}

/// Topology of one grid cell and the process-group size of its leaves.
fn cell_topology(base: &Topology, sites: usize, domains: Option<usize>) -> Result<(Topology, usize)> {
    let topo = base.first_sites(sites)?;
    let Some(d) = domains else {
        return Ok((topo, 1));
    };
    let procs = topo.clusters().iter().map(|c| c.domains).max().unwrap_or(1);
    if d >= procs {
        return Ok((topo.with_domains_per_cluster(d)?, 1));
    }
    if procs % d != 0 {
        return Err(Error::Run(format!(
            "{d} domains per cluster do not divide {procs} processes"
        )));
    }
    Ok((topo.with_domains_per_cluster(procs)?, procs / d))
}

/// 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn seeded_matrix(seed: u64, index: usize, m: usize, n: usize) -> DenseMatrix<f64> {
    DenseMatrix::gaussian(m, n, seed.wrapping_add(index as u64))
}

// ---- verify ----

#[derive(Clone, Debug, Serialize)]
pub struct VerifyCase {
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub clusters: usize,
    pub tree: String,
    pub backward_error: f64,
    pub backward_bound: f64,
    pub orthogonality: f64,
    pub orthogonality_bound: f64,
    pub r_distance: f64,
    pub nonnegative_diagonal: bool,
    pub msg_count: u64,
    pub inter_cluster_msg_count: u64,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub topology: String,
    pub cases: Vec<VerifyCase>,
    pub failed: usize,
    pub pass: bool,
}

const R_TOLERANCE: f64 = 1e-10;

fn verify_case(
    a: &DenseMatrix<f64>,
    topo: &Topology,
    shape: TreeShape,
    inject_fault: bool,
) -> Result<VerifyCase> {
    let (m, n) = (a.rows(), a.cols());
    let p = topo.domain_count();
    let tree = build_tree(topo, shape);
    let mut comm = Communicator::new(topo.clone());
    let mut f = tsqr_factor(a, &tree, &mut comm)?;
    let costs = comm.cost_report();
    if inject_fault {
        f.inject_tau_sign_fault();
    }
    let q = f.reconstruct_q();
    let eps = f64::EPSILON;

    let backward_error = relative_distance(&q.matmul(f.r())?, a)?;
    let backward_bound = 100.0 * eps * ((m * n) as f64).sqrt();
    let orthogonality = q.tr_matmul(&q)?.sub(&DenseMatrix::identity(n))?.frobenius_norm();
    let orthogonality_bound = 100.0 * eps * n as f64;
    let dense = crate::householder::householder_qr(a)?.sign_normalize();
    let r_distance = relative_distance(f.r(), dense.r())?;
    let nonnegative_diagonal = (0..n).all(|i| f.r()[(i, i)] >= 0.0);

    let mut failures = Vec::new();
    if !(backward_error <= backward_bound) {
        failures.push("backward error".to_string());
    }
    if !(orthogonality <= orthogonality_bound) {
        failures.push("orthogonality".to_string());
    }
    if !(r_distance <= R_TOLERANCE) {
        failures.push("R mismatch".to_string());
    }
    if !nonnegative_diagonal {
        failures.push("negative diagonal".to_string());
    }
    if costs.msg_count != (p - 1) as u64 {
        failures.push("message count".to_string());
    }
    if shape == TreeShape::Hierarchical && costs.inter_cluster_msg_count != (topo.cluster_count() - 1) as u64 {
        failures.push("inter-cluster count".to_string());
    }
    Ok(VerifyCase {
        m,
        n,
        p,
        clusters: topo.cluster_count(),
        tree: shape.to_string(),
        backward_error,
        backward_bound,
        orthogonality,
        orthogonality_bound,
        r_distance,
        nonnegative_diagonal,
        msg_count: costs.msg_count,
        inter_cluster_msg_count: costs.inter_cluster_msg_count,
        failures,
    })
}

/// Runs the numerical and counting checks over every cell of the grid.
pub fn cmd_verify(spec: &RunSpec) -> Outcome {
    match verify_report(spec) {
        Ok(report) => {
            let mut output = if spec.json {
                let mut s = serde_json::to_string_pretty(&report).expect("report serializes");
                s.push('\n');
                s
            } else {
                render_verify_text(&report)
            };
            if !spec.json && !report.pass {
                output.push_str("verification FAILED\n");
            }
            Outcome {
                output,
                code: if report.pass { EXIT_OK } else { EXIT_FAILURE },
            }
        }
        Err(e) => Outcome::usage(&e),
    }
}

pub fn verify_report(spec: &RunSpec) -> Result<VerifyReport> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for &m in &spec.m {
        for &n in &spec.n {
            for &s in &spec.sites() {
                for d in spec.domains() {
                    let (topo, _) = cell_topology(&spec.topology, s, d)?;
                    spec.check_caps(m, n, topo.domain_count())?;
                    if m < topo.domain_count() * n {
                        continue;
                    }
                    for shape in spec.trees() {
                        jobs.push((m, n, topo.clone(), shape));
                    }
                }
            }
        }
    }
    if jobs.is_empty() {
        return Err(Error::Run("no grid cell is tall enough for its domain count".into()));
    }
    let cases = jobs
        .par_iter()
        .enumerate()
        .map(|(i, (m, n, topo, shape))| {
            let a = seeded_matrix(spec.seed, i, *m, *n);
            verify_case(&a, topo, *shape, spec.inject_fault)
        })
        .collect::<Result<Vec<_>>>()?;
    let failed = cases.iter().filter(|c| !c.failures.is_empty()).count();
    Ok(VerifyReport {
        seed: spec.seed,
        topology: spec.topology_name.clone(),
        cases,
        failed,
        pass: failed == 0,
    })
}

fn render_verify_text(report: &VerifyReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# verify seed={} topology={}", report.seed, report.topology);
    for c in &report.cases {
        let status = if c.failures.is_empty() {
            "ok".to_string()
        } else {
            format!("FAIL ({})", c.failures.join(", "))
        };
        let _ = writeln!(
            out,
            "{:>6}x{:<4} p={:<4} c={} {:<5} berr={:.3e} orth={:.3e} rdist={:.3e} msgs={} inter={} {}",
            c.m,
            c.n,
            c.p,
            c.clusters,
            c.tree,
            c.backward_error,
            c.orthogonality,
            c.r_distance,
            c.msg_count,
            c.inter_cluster_msg_count,
            status
        );
    }
    let _ = writeln!(out, "{} cases, {} failed", report.cases.len(), report.failed);
    out
}

// ---- bench ----

pub const BENCH_HEADER: [&str; 21] = [
    "m",
    "n",
    "sites",
    "domains",
    "procs",
    "tree",
    "algo",
    "want_q",
    "kernel",
    "msg_count",
    "inter_cluster_msg_count",
    "reduce_msg_count",
    "volume_bytes",
    "inter_cluster_volume_bytes",
    "critical_path_msgs",
    "critical_path_reduce_msgs",
    "critical_path_volume_bytes",
    "flops_total",
    "flops_critical_path",
    "modeled_time_s",
    "r_distance",
];

struct BenchCell {
    m: usize,
    n: usize,
    sites: usize,
    domains: Option<usize>,
    shape: TreeShape,
    algo: Algo,
}

fn bench_cell(spec: &RunSpec, cell: &BenchCell, index: usize) -> Result<Vec<String>> {
    let (topo, group) = cell_topology(&spec.topology, cell.sites, cell.domains)?;
    let procs = topo.domain_count();
    let leaves = procs / group;
    let a = seeded_matrix(spec.seed, index, cell.m, cell.n);
    let mut comm = Communicator::new(topo.clone());
    let (costs, r): (CostReport, DenseMatrix<f64>) = match cell.algo {
        Algo::Tsqr => {
            let f = tsqr_grouped(&a, &topo, cell.shape, group, spec.domain_kernel, &mut comm)?;
            if spec.want_q {
                f.reconstruct_q_with(&mut comm)?;
            }
            (comm.cost_report(), f.r().clone())
        }
        Algo::Qr2 => {
            let tree = build_tree(&topo, TreeShape::Binary);
            let run = qr2_factor(&a, &tree, &mut comm)?;
            if spec.want_q {
                qr2_form_q_with(&run.factor, &tree, &mut comm)?;
            }
            (comm.cost_report(), run.r)
        }
    };
    let dense = crate::householder::householder_qr(&a)?.sign_normalize();
    let r_distance = relative_distance(&r, dense.r())?;
    let (tree, kernel) = match cell.algo {
        Algo::Tsqr => (cell.shape.to_string(), spec.domain_kernel.to_string()),
        Algo::Qr2 => ("binary".to_string(), "-".to_string()),
    };
    Ok(vec![
        cell.m.to_string(),
        cell.n.to_string(),
        cell.sites.to_string(),
        (leaves / topo.cluster_count()).to_string(),
        (procs / topo.cluster_count()).to_string(),
        tree,
        cell.algo.to_string(),
        spec.want_q.to_string(),
        kernel,
        costs.msg_count.to_string(),
        costs.inter_cluster_msg_count.to_string(),
        costs.reduce_msg_count.to_string(),
        costs.volume_bytes.to_string(),
        costs.inter_cluster_volume_bytes.to_string(),
        costs.critical_path_msgs.to_string(),
        costs.critical_path_reduce_msgs.to_string(),
        costs.critical_path_volume_bytes.to_string(),
        num(costs.flops_total),
        num(costs.flops_critical_path),
        num(costs.modeled_time_seconds),
        num(r_distance),
    ])
}

fn csv_string(meta: &str, header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv");
    format!("# {meta}\n{body}")
}

/// Simulated runs over the grid, one CSV row per cell.
pub fn cmd_bench(spec: &RunSpec) -> Outcome {
    match bench_csv(spec) {
        Ok(s) => Outcome::ok(s),
        Err(e) => Outcome::usage(&e),
    }
}

pub fn bench_csv(spec: &RunSpec) -> Result<String> {
    spec.validate()?;
    let mut cells = Vec::new();
    for &m in &spec.m {
        for &n in &spec.n {
            for &sites in &spec.sites() {
                for domains in spec.domains() {
                    let (topo, _) = cell_topology(&spec.topology, sites, domains)?;
                    spec.check_caps(m, n, topo.domain_count())?;
                    for &algo in &spec.algos {
                        let shapes = match algo {
                            Algo::Tsqr => spec.trees(),
                            Algo::Qr2 => vec![TreeShape::Binary],
                        };
                        for shape in shapes {
                            cells.push(BenchCell {
                                m,
                                n,
                                sites,
                                domains,
                                shape,
                                algo,
                            });
                        }
                    }
                }
            }
        }
    }
    let rows = cells
        .par_iter()
        .enumerate()
        .map(|(i, c)| bench_cell(spec, c, i))
        .collect::<Result<Vec<_>>>()?;
    let meta = format!(
        "tsqr bench seed={} topology={} want_q={}",
        spec.seed, spec.topology_name, spec.want_q
    );
    Ok(csv_string(&meta, &BENCH_HEADER, &rows))
}

// ---- model ----

pub const MODEL_HEADER: [&str; 10] = [
    "m", "n", "p", "sites", "algo", "want_q", "msgs", "volume_bytes", "flops", "time_s",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelMode {
    Table,
    /// Smallest `n` up to the cap at which qr2 beats tsqr.
    Crossover { cap: u64 },
    /// Time on one site over time on each requested site count.
    Speedup,
}

pub fn cmd_model(spec: &RunSpec, mode: ModelMode) -> Outcome {
    match model_csv(spec, mode) {
        Ok(s) => Outcome::ok(s),
        Err(e) => Outcome::usage(&e),
    }
}

fn model_topology(spec: &RunSpec, sites: usize) -> Result<Topology> {
    let topo = spec.topology.first_sites(sites)?;
    match spec.domains.as_slice() {
        [] => Ok(topo),
        [d] => topo.with_domains_per_cluster(*d),
        _ => Err(Error::Run("model takes at most one --domains value".into())),
    }
}

pub fn model_csv(spec: &RunSpec, mode: ModelMode) -> Result<String> {
    spec.validate()?;
    let meta = format!("tsqr model topology={} want_q={}", spec.topology_name, spec.want_q);
    match mode {
        ModelMode::Table => {
            let mut rows = Vec::new();
            for &m in &spec.m {
                for &n in &spec.n {
                    for &s in &spec.sites() {
                        let model = GridModel::from_topology(&model_topology(spec, s)?);
                        for &algo in &spec.algos {
                            let t = model.time(algo, m as u64, n as u64, spec.want_q);
                            rows.push(vec![
                                m.to_string(),
                                n.to_string(),
                                model.p.to_string(),
                                s.to_string(),
                                algo.to_string(),
                                spec.want_q.to_string(),
                                num(t.msgs),
                                num(t.volume_bytes),
                                num(t.flops),
                                num(t.time_s),
                            ]);
                        }
                    }
                }
            }
            Ok(csv_string(&meta, &MODEL_HEADER, &rows))
        }
        ModelMode::Crossover { cap } => {
            let mut rows = Vec::new();
            for &m in &spec.m {
                for &s in &spec.sites() {
                    let model = GridModel::from_topology(&model_topology(spec, s)?);
                    let n = model.crossover_n(m as u64, cap);
                    rows.push(vec![
                        m.to_string(),
                        model.p.to_string(),
                        s.to_string(),
                        cap.to_string(),
                        n.map_or_else(|| "none".to_string(), |v| v.to_string()),
                    ]);
                }
            }
            Ok(csv_string(&meta, &["m", "p", "sites", "cap", "crossover_n"], &rows))
        }
        ModelMode::Speedup => {
            let topo = match spec.domains.as_slice() {
                [] => spec.topology.clone(),
                [d] => spec.topology.with_domains_per_cluster(*d)?,
                _ => return Err(Error::Run("model takes at most one --domains value".into())),
            };
            let points: Vec<(u64, u64)> = spec
                .m
                .iter()
                .flat_map(|&m| spec.n.iter().map(move |&n| (m as u64, n as u64)))
                .collect();
            let mut rows = Vec::new();
            for &algo in &spec.algos {
                for r in speedup_curve(&topo, algo, &points, &spec.sites(), spec.want_q)? {
                    rows.push(vec![
                        r.m.to_string(),
                        r.n.to_string(),
                        r.p.to_string(),
                        r.sites.to_string(),
                        r.algo.to_string(),
                        num(r.time_s),
                        num(r.speedup),
                    ]);
                }
            }
            Ok(csv_string(
                &meta,
                &["m", "n", "p", "sites", "algo", "time_s", "speedup"],
                &rows,
            ))
        }
    }
}

// ---- compare ----

#[derive(Clone, Debug, Serialize)]
pub struct CompareRow {
    pub m: usize,
    pub n: usize,
    pub sites: usize,
    pub p: usize,
    pub tree: String,
    #[serde(flatten)]
    pub comparison: Comparison,
}

pub fn cmd_compare(spec: &RunSpec) -> Outcome {
    match compare_rows(spec) {
        Ok(rows) if spec.json => {
            let mut s = serde_json::to_string_pretty(&rows).expect("rows serialize");
            s.push('\n');
            Outcome::ok(s)
        }
        Ok(rows) => {
            let mut out = String::new();
            let _ = writeln!(out, "# compare seed={} topology={}", spec.seed, spec.topology_name);
            for r in &rows {
                let c = &r.comparison;
                let _ = writeln!(
                    out,
                    "{}x{} p={} sites={} tree={}: tsqr {} msgs / {:.6e} s, qr2 {} msgs / {:.6e} s, \
                     msg ratio {:.3}, time ratio {:.3}, R distance {:.3e}",
                    r.m,
                    r.n,
                    r.p,
                    r.sites,
                    r.tree,
                    c.tsqr.critical_path_reduce_msgs,
                    c.tsqr.modeled_time_seconds,
                    c.qr2.critical_path_reduce_msgs,
                    c.qr2.modeled_time_seconds,
                    c.msg_ratio,
                    c.time_ratio,
                    c.r_distance
                );
            }
            Outcome::ok(out)
        }
        Err(e) => Outcome::usage(&e),
    }
}

pub fn compare_rows(spec: &RunSpec) -> Result<Vec<CompareRow>> {
    spec.validate()?;
    let shape = match spec.trees.as_slice() {
        [] => TreeShape::Hierarchical,
        [s] => *s,
        _ => return Err(Error::Run("compare takes one --tree".into())),
    };
    let mut jobs = Vec::new();
    for &m in &spec.m {
        for &n in &spec.n {
            for &s in &spec.sites() {
                for d in spec.domains() {
                    let (topo, _) = cell_topology(&spec.topology, s, d)?;
                    spec.check_caps(m, n, topo.domain_count())?;
                    jobs.push((m, n, s, topo));
                }
            }
        }
    }
    jobs.par_iter()
        .enumerate()
        .map(|(i, (m, n, s, topo))| {
            let a = seeded_matrix(spec.seed, i, *m, *n);
            Ok(CompareRow {
                m: *m,
                n: *n,
                sites: *s,
                p: topo.domain_count(),
                tree: shape.to_string(),
                comparison: compare_runs(&a, topo, CompareParams { tsqr_shape: shape })?,
            })
        })
        .collect()
}
