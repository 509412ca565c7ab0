//! Column-at-a-time distributed Householder QR, the panel factorization used
//! by classic parallel QR libraries.
//!
//! Rows are block-distributed over the leaves of a tree. Column `j` needs two
//! allreduces: one gathering the pivot entry and the tail's sum of squares
//! (2 values), and one gathering `v^T A[:, j+1..]` for the trailing update
//! (`n - j - 1` values). The last column has no update. An allreduce is a
//! reduce up the tree followed by a broadcast back down it.

use serde::Serialize;

use crate::error::Result;
use crate::householder::HouseholderFactor;
use crate::matrix::{relative_distance, DenseMatrix};
use crate::netsim::{CostReport, Communicator, MessageKind};
use crate::scalar::Real;
use crate::topology::Topology;
use crate::tree::{build_tree, NodeKind, ReductionTree, TreeShape};
use crate::tsqr::{check_input, partition_rows, tsqr_factor};

#[derive(Clone, Debug, PartialEq)]
pub struct Qr2Run<T> {
    pub r: DenseMatrix<T>,
    pub factor: HouseholderFactor<T>,
    pub costs: CostReport,
}

/// Distributed QR of `a` over the leaves of `tree`, logging on `comm`.
pub fn qr2_factor<T: Real>(a: &DenseMatrix<T>, tree: &ReductionTree, comm: &mut Communicator) -> Result<Qr2Run<T>> {
    check_input(a, tree.leaf_count())?;
    let factor = qr2_distributed(a, tree, comm)?;
    Ok(Qr2Run {
        r: factor.r().clone(),
        factor,
        costs: comm.cost_report(),
    })
}

/// The sign-normalized factor itself. Also used as the per-group kernel of
/// grouped TSQR, where only `rows >= leaves` is required.
pub(crate) fn qr2_distributed<T: Real>(
    a: &DenseMatrix<T>,
    tree: &ReductionTree,
    comm: &mut Communicator,
) -> Result<HouseholderFactor<T>> {
    let (m, n) = (a.rows(), a.cols());
    let parts = partition_rows(m, tree.leaf_count())?;
    let owners: Vec<usize> = tree.leaf_nodes().iter().map(|&id| tree.node(id).owner).collect();
    let mut ar = Allreduce::new(tree, comm.step());
    let mut work = a.clone();
    let mut tau = vec![T::zero(); n];

    for j in 0..n {
        let local_rows = |s: usize| parts[s].end.saturating_sub(parts[s].start.max(j));
        for (s, &d) in owners.iter().enumerate() {
            comm.charge_flops(d, 2.0 * local_rows(s) as f64)?;
        }
        let partials: Vec<Vec<T>> = parts
            .iter()
            .map(|p| {
                let col = work.col(j);
                let pivot = if p.contains(&j) { col[j] } else { T::zero() };
                let sumsq = col[p.start.max(j + 1)..p.end.max(j + 1)]
                    .iter()
                    .fold(T::zero(), |acc, &x| acc + x * x);
                vec![pivot, sumsq]
            })
            .collect();
        let totals = ar.run(comm, partials)?;
        let (alpha, xnorm) = (totals[0], totals[1].sqrt());

        if xnorm != T::zero() {
            let beta = -alpha.hypot(xnorm).copysign(alpha);
            tau[j] = (beta - alpha) / beta;
            let scale = T::one() / (alpha - beta);
            for x in &mut work.col_mut(j)[j + 1..] {
                *x = *x * scale;
            }
            work[(j, j)] = beta;
        }
        if j + 1 == n {
            break;
        }

        let trailing = n - j - 1;
        for (s, &d) in owners.iter().enumerate() {
            comm.charge_flops(d, 4.0 * (local_rows(s) * trailing) as f64)?;
        }
        let partials: Vec<Vec<T>> = parts
            .iter()
            .map(|p| {
                let v = work.col(j);
                (j + 1..n)
                    .map(|c| {
                        let x = work.col(c);
                        let lead = if p.contains(&j) { x[j] } else { T::zero() };
                        let lo = p.start.max(j + 1);
                        let hi = p.end.max(lo);
                        (lo..hi).fold(lead, |acc, i| acc + v[i] * x[i])
                    })
                    .collect()
            })
            .collect();
        let w = ar.run(comm, partials)?;
        let t = tau[j];
        if t == T::zero() {
            continue;
        }
        let v: Vec<T> = work.col(j)[j + 1..].to_vec();
        for (c, &wc) in (j + 1..n).zip(&w) {
            let s = t * wc;
            let col = work.col_mut(c);
            col[j] = col[j] - s;
            for (x, &vi) in col[j + 1..].iter_mut().zip(&v) {
                *x = *x - s * vi;
            }
        }
    }

    let r = DenseMatrix::from_fn(n, n, |i, c| if i <= c { work[(i, c)] } else { T::zero() });
    Ok(HouseholderFactor {
        reflectors: work,
        tau,
        r,
        signs: vec![T::one(); n],
    }
    .sign_normalize())
}

/// Thin Q from a [`qr2_factor`] run, formed in place the way the
/// distributed code would: reflectors applied last to first to the leading
/// identity columns, one allreduce of `n - j` values per reflector.
pub fn qr2_form_q_with<T: Real>(
    factor: &HouseholderFactor<T>,
    tree: &ReductionTree,
    comm: &mut Communicator,
) -> Result<DenseMatrix<T>> {
    let (m, n) = (factor.rows(), factor.cols());
    let parts = partition_rows(m, tree.leaf_count())?;
    let owners: Vec<usize> = tree.leaf_nodes().iter().map(|&id| tree.node(id).owner).collect();
    let mut ar = Allreduce::new(tree, comm.step());
    let mut q = DenseMatrix::from_fn(m, n, |i, c| if i == c { factor.signs()[c] } else { T::zero() });

    for j in (0..n).rev() {
        let tail = factor.reflector_tail(j);
        for (s, &d) in owners.iter().enumerate() {
            let local = parts[s].end.saturating_sub(parts[s].start.max(j));
            comm.charge_flops(d, 4.0 * (local * (n - j)) as f64)?;
        }
        let partials: Vec<Vec<T>> = parts
            .iter()
            .map(|p| {
                (j..n)
                    .map(|c| {
                        let x = q.col(c);
                        let lead = if p.contains(&j) { x[j] } else { T::zero() };
                        let lo = p.start.max(j + 1);
                        let hi = p.end.max(lo);
                        (lo..hi).fold(lead, |acc, i| acc + tail[i - j - 1] * x[i])
                    })
                    .collect()
            })
            .collect();
        let w = ar.run(comm, partials)?;
        let t = factor.tau()[j];
        for (c, &wc) in (j..n).zip(&w) {
            let s = t * wc;
            let col = q.col_mut(c);
            col[j] = col[j] - s;
            for (x, &vi) in col[j + 1..].iter_mut().zip(tail) {
                *x = *x - s * vi;
            }
        }
    }
    Ok(q)
}

/// Tree allreduce of per-leaf vectors. Sums combine left + right at each
/// merge, so the result depends only on the tree.
struct Allreduce<'a> {
    tree: &'a ReductionTree,
    height: u64,
    step: u64,
}

impl<'a> Allreduce<'a> {
    fn new(tree: &'a ReductionTree, step: u64) -> Self {
        let height = tree.node(tree.root()).height as u64;
        Self { tree, height, step }
    }

    fn run<T: Real>(&mut self, comm: &mut Communicator, partials: Vec<Vec<T>>) -> Result<Vec<T>> {
        let nodes = self.tree.nodes();
        let bytes = partials.first().map_or(0, |p| p.len() as u64) * T::BYTES;
        let mut acc: Vec<Option<Vec<T>>> = vec![None; nodes.len()];
        for (&id, p) in self.tree.leaf_nodes().iter().zip(partials) {
            acc[id] = Some(p);
        }
        for (id, node) in nodes.iter().enumerate() {
            if let NodeKind::Merge { left, right } = node.kind {
                comm.set_step(self.step + node.height as u64);
                comm.send(nodes[right].owner, nodes[left].owner, bytes)?;
                let l = acc[left].take().expect("children first");
                let r = acc[right].take().expect("children first");
                acc[id] = Some(l.into_iter().zip(r).map(|(x, y)| x + y).collect());
            }
        }
        for id in (0..nodes.len()).rev() {
            if let NodeKind::Merge { left, right } = nodes[id].kind {
                comm.set_step(self.step + 2 * self.height + 1 - nodes[id].height as u64);
                comm.send_kind(nodes[left].owner, nodes[right].owner, bytes, MessageKind::Broadcast)?;
            }
        }
        self.step += 2 * self.height + 2;
        comm.set_step(self.step);
        Ok(acc[self.tree.root()].take().expect("root reduced"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CompareParams {
    /// Tree used by TSQR; the baseline always reduces over a binary tree.
    pub tsqr_shape: TreeShape,
}

impl Default for CompareParams {
    fn default() -> Self {
        Self {
            tsqr_shape: TreeShape::Hierarchical,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub tsqr: CostReport,
    pub qr2: CostReport,
    /// `||R_tsqr - R_qr2||_F / ||R_tsqr||_F`.
    pub r_distance: f64,
    /// Modeled qr2 time over modeled tsqr time.
    pub time_ratio: f64,
    /// Ratio of critical-path reduce messages, qr2 over tsqr.
    pub msg_ratio: f64,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 { 1.0 } else { f64::INFINITY }
    } else {
        a / b
    }
}

/// Runs both algorithms on `a` over the same topology.
pub fn compare_runs<T: Real>(a: &DenseMatrix<T>, topo: &Topology, params: CompareParams) -> Result<Comparison> {
    let mut comm = Communicator::new(topo.clone());
    let tsqr = tsqr_factor(a, &build_tree(topo, params.tsqr_shape), &mut comm)?;
    let tsqr_costs = comm.cost_report();

    let mut comm = Communicator::new(topo.clone());
    let qr2 = qr2_factor(a, &build_tree(topo, TreeShape::Binary), &mut comm)?;

    let r_distance = relative_distance(&qr2.r, tsqr.r())?.to_f64().unwrap_or(f64::NAN);
    Ok(Comparison {
        time_ratio: ratio(qr2.costs.modeled_time_seconds, tsqr_costs.modeled_time_seconds),
        msg_ratio: ratio(
            qr2.costs.critical_path_reduce_msgs as f64,
            tsqr_costs.critical_path_reduce_msgs as f64,
        ),
        tsqr: tsqr_costs,
        qr2: qr2.costs,
        r_distance,
    })
}
