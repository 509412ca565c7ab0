//! Tall-and-skinny QR as a reduction over a [`ReductionTree`].
//!
//! Rows are split into contiguous blocks, one per leaf in leaf order. Each
//! leaf factors its block; each merge node stacks the two child R factors
//! and factors the stack. Every factor is sign-normalized as soon as it is
//! produced, so the final R does not depend on the tree shape beyond
//! rounding.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rayon::prelude::*;

use crate::baseline::qr2_distributed;
use crate::error::{Error, Result};
use crate::householder::{householder_qr, qr_flops, HouseholderFactor};
use crate::matrix::DenseMatrix;
use crate::netsim::{packed_triangle_bytes, Communicator, MessageKind};
use crate::scalar::Real;
use crate::stacked::{stacked_qr, stacked_qr_flops, StackedQrFactor};
use crate::topology::Topology;
use crate::tree::{build_grouped_tree, build_tree_over, domain_groups, NodeKind, ReductionTree, TreeShape};

/// Splits `m` rows into `p` contiguous ranges whose sizes differ by at most
/// one; the first `m % p` ranges take the extra row.
pub fn partition_rows(m: usize, p: usize) -> Result<Vec<Range<usize>>> {
    if p == 0 || m < p {
        return Err(Error::Partition { rows: m, parts: p });
    }
    let (base, extra) = (m / p, m % p);
    let mut start = 0;
    Ok((0..p)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
enum NodeFactor<T> {
    Leaf(HouseholderFactor<T>),
    Merge(StackedQrFactor<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TsqrFactorization<T> {
    r: DenseMatrix<T>,
    /// Indexed by tree node id.
    factors: Vec<NodeFactor<T>>,
    tree: ReductionTree,
    /// Row range of each leaf, in leaf order.
    row_partition: Vec<Range<usize>>,
    rows: usize,
}

impl<T: Real> TsqrFactorization<T> {
    pub fn r(&self) -> &DenseMatrix<T> {
        &self.r
    }

    pub fn tree(&self) -> &ReductionTree {
        &self.tree
    }

    pub fn row_partition(&self) -> &[Range<usize>] {
        &self.row_partition
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.r.cols()
    }

    /// Leaf factors in leaf order.
    pub fn leaf_factors(&self) -> Vec<&HouseholderFactor<T>> {
        self.tree
            .leaf_nodes()
            .iter()
            .map(|&id| match &self.factors[id] {
                NodeFactor::Leaf(f) => f,
                NodeFactor::Merge(_) => unreachable!("leaf ids hold leaf factors"),
            })
            .collect()
    }

    /// Merge factors in bottom-up order.
    pub fn node_factors(&self) -> Vec<&StackedQrFactor<T>> {
        self.factors
            .iter()
            .filter_map(|f| match f {
                NodeFactor::Merge(s) => Some(s),
                NodeFactor::Leaf(_) => None,
            })
            .collect()
    }

    #[doc(hidden)]
    pub fn inject_tau_sign_fault(&mut self) {
        if let Some(NodeFactor::Leaf(f)) = self.factors.iter_mut().find(|f| matches!(f, NodeFactor::Leaf(_))) {
            f.inject_tau_sign_fault(0);
        }
    }

    /// `Q C` for an `n x k` operand, giving `m x k`.
    pub fn apply_q(&self, c: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        self.apply_q_inner(c, None)
    }

    /// Thin `m x n` Q.
    pub fn reconstruct_q(&self) -> DenseMatrix<T> {
        self.apply_q(&DenseMatrix::identity(self.cols()))
            .expect("identity has matching shape")
    }

    /// Like [`reconstruct_q`](Self::reconstruct_q), also logging the
    /// top-down pass on `comm`: one dense `n x n` block per tree edge and the
    /// same flops as the factorization.
    pub fn reconstruct_q_with(&self, comm: &mut Communicator) -> Result<DenseMatrix<T>> {
        self.apply_q_inner(&DenseMatrix::identity(self.cols()), Some(comm))
    }

    /// `Q^T B` for an `m x k` operand, giving `n x k`.
    pub fn apply_q_transpose(&self, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        let n = self.cols();
        if b.rows() != self.rows {
            return Err(Error::Dimension(format!(
                "factorization has {} rows, operand has {}",
                self.rows,
                b.rows()
            )));
        }
        let mut partial: Vec<Option<DenseMatrix<T>>> = vec![None; self.factors.len()];
        for (slot, &id) in self.tree.leaf_nodes().iter().enumerate() {
            let NodeFactor::Leaf(f) = &self.factors[id] else { unreachable!() };
            let block = b.row_block(self.row_partition[slot].clone());
            partial[id] = Some(f.apply_q_transpose(&block)?.leading(n, b.cols()));
        }
        for (id, node) in self.tree.nodes().iter().enumerate() {
            if let NodeKind::Merge { left, right } = node.kind {
                let NodeFactor::Merge(f) = &self.factors[id] else { unreachable!() };
                let top = partial[left].take().expect("children first");
                let bottom = partial[right].take().expect("children first");
                partial[id] = Some(f.apply_q_transpose(&top, &bottom)?.0);
            }
        }
        Ok(partial[self.tree.root()].take().expect("root computed"))
    }

    fn apply_q_inner(&self, c: &DenseMatrix<T>, mut comm: Option<&mut Communicator>) -> Result<DenseMatrix<T>> {
        let n = self.cols();
        if c.rows() != n {
            return Err(Error::Dimension(format!("Q has {n} columns, operand has {} rows", c.rows())));
        }
        let k = c.cols();
        let nodes = self.tree.nodes();
        let mut down: Vec<Option<DenseMatrix<T>>> = vec![None; nodes.len()];
        down[self.tree.root()] = Some(c.clone());
        let root_height = nodes[self.tree.root()].height as u64;

        for id in (0..nodes.len()).rev() {
            if let NodeKind::Merge { left, right } = nodes[id].kind {
                let NodeFactor::Merge(f) = &self.factors[id] else { unreachable!() };
                let x = down[id].take().expect("parents first");
                let (top, bottom) = f.apply_q(&x, &DenseMatrix::zeros(n, k))?;
                if let Some(comm) = comm.as_deref_mut() {
                    comm.set_step(2 * root_height + 1 - nodes[id].height as u64);
                    comm.charge_flops(nodes[id].owner, stacked_qr_flops(n))?;
                    comm.send_kind(
                        nodes[left].owner,
                        nodes[right].owner,
                        (n * n) as u64 * T::BYTES,
                        MessageKind::Broadcast,
                    )?;
                }
                down[left] = Some(top);
                down[right] = Some(bottom);
            }
        }

        let mut q = DenseMatrix::zeros(self.rows, k);
        for (slot, &id) in self.tree.leaf_nodes().iter().enumerate() {
            let NodeFactor::Leaf(f) = &self.factors[id] else { unreachable!() };
            let range = self.row_partition[slot].clone();
            let x = down[id].take().expect("every leaf reached");
            let padded = x.vstack(&DenseMatrix::zeros(range.len() - n, k))?;
            q.set_row_block(range.start, &f.apply_q(&padded)?);
            if let Some(comm) = comm.as_deref_mut() {
                comm.set_step(2 * root_height + 1);
                comm.charge_flops(nodes[id].owner, qr_flops(range.len(), n))?;
            }
        }
        Ok(q)
    }
}

/// How the leaves of a grouped run factor their block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainKernel {
    /// Nested TSQR over the group's domains with a flat tree.
    FlatTsqr,
    /// Column-by-column panel factorization over the group's domains.
    Qr2,
}

impl fmt::Display for DomainKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainKernel::FlatTsqr => "flat",
            DomainKernel::Qr2 => "qr2",
        })
    }
}

impl FromStr for DomainKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(DomainKernel::FlatTsqr),
            "qr2" => Ok(DomainKernel::Qr2),
            other => Err(Error::Run(format!("unknown domain kernel `{other}`"))),
        }
    }
}

pub(crate) fn check_input<T: Real>(a: &DenseMatrix<T>, leaves: usize) -> Result<()> {
    let (m, n) = (a.rows(), a.cols());
    if n == 0 {
        return Err(Error::Dimension("matrix has no columns".into()));
    }
    if m < n {
        return Err(Error::NotTall { rows: m, cols: n });
    }
    if m < leaves * n {
        return Err(Error::TooShort {
            rows: m,
            cols: n,
            domains: leaves,
        });
    }
    a.check_finite()
}

/// Factors `a` over `tree`, logging leaf and merge flops and one packed
/// triangle per merge on `comm`.
pub fn tsqr_factor<T: Real>(
    a: &DenseMatrix<T>,
    tree: &ReductionTree,
    comm: &mut Communicator,
) -> Result<TsqrFactorization<T>> {
    check_input(a, tree.leaf_count())?;
    let partition = partition_rows(a.rows(), tree.leaf_count())?;
    let leaf_factors: Vec<HouseholderFactor<T>> = partition
        .par_iter()
        .map(|range| householder_qr(&a.row_block(range.clone())).map(HouseholderFactor::sign_normalize))
        .collect::<Result<_>>()?;
    comm.set_step(0);
    for (&id, range) in tree.leaf_nodes().iter().zip(&partition) {
        comm.charge_flops(tree.node(id).owner, qr_flops(range.len(), a.cols()))?;
    }
    reduce(a, tree, partition, leaf_factors, comm)
}

/// TSQR where each leaf is a group of `group_size` consecutive domains of
/// one cluster, and the groups are reduced with `shape`.
pub fn tsqr_grouped<T: Real>(
    a: &DenseMatrix<T>,
    topo: &Topology,
    shape: TreeShape,
    group_size: usize,
    kernel: DomainKernel,
    comm: &mut Communicator,
) -> Result<TsqrFactorization<T>> {
    if group_size == 1 || kernel == DomainKernel::FlatTsqr {
        let tree = build_grouped_tree(topo, shape, group_size)?;
        return tsqr_factor(a, &tree, comm);
    }
    let groups = domain_groups(topo, group_size)?;
    let leaders: Vec<usize> = groups.iter().map(|g| g[0]).collect();
    let tree = build_tree_over(topo, &leaders, shape)?;
    check_input(a, tree.leaf_count())?;
    let partition = partition_rows(a.rows(), tree.leaf_count())?;

    comm.set_step(0);
    let mut leaf_factors = Vec::with_capacity(partition.len());
    for (domain, range) in tree.leaf_domains().into_iter().zip(&partition) {
        let members = groups
            .iter()
            .find(|g| g[0] == domain)
            .expect("leaves are group leaders");
        let inner = build_tree_over(topo, members, TreeShape::Binary)?;
        let block = a.row_block(range.clone());
        leaf_factors.push(qr2_distributed(&block, &inner, comm)?);
    }
    reduce(a, &tree, partition, leaf_factors, comm)
}

fn reduce<T: Real>(
    a: &DenseMatrix<T>,
    tree: &ReductionTree,
    partition: Vec<Range<usize>>,
    leaf_factors: Vec<HouseholderFactor<T>>,
    comm: &mut Communicator,
) -> Result<TsqrFactorization<T>> {
    let n = a.cols();
    let nodes = tree.nodes();
    let mut factors: Vec<Option<NodeFactor<T>>> = vec![None; nodes.len()];
    let mut rs: Vec<Option<DenseMatrix<T>>> = vec![None; nodes.len()];
    for (&id, f) in tree.leaf_nodes().iter().zip(leaf_factors) {
        rs[id] = Some(f.r().clone());
        factors[id] = Some(NodeFactor::Leaf(f));
    }

    let bytes = packed_triangle_bytes(n, T::BYTES);
    for (id, node) in nodes.iter().enumerate() {
        if let NodeKind::Merge { left, right } = node.kind {
            comm.set_step(node.height as u64);
            comm.send(nodes[right].owner, nodes[left].owner, bytes)?;
            comm.charge_flops(node.owner, stacked_qr_flops(n))?;
            let r_left = rs[left].take().expect("children first");
            let r_right = rs[right].take().expect("children first");
            let f = stacked_qr(&r_left, &r_right)?.sign_normalize();
            rs[id] = Some(f.r().clone());
            factors[id] = Some(NodeFactor::Merge(f));
        }
    }

    let r = rs[tree.root()].take().expect("root reduced");
    Ok(TsqrFactorization {
        r,
        factors: factors.into_iter().map(|f| f.expect("every node factored")).collect(),
        tree: tree.clone(),
        row_partition: partition,
        rows: a.rows(),
    })
}

/// R only, with leaves factored in parallel and sibling subtrees merged
/// concurrently. The merge order is fixed by the tree, so the result is
/// bitwise identical to [`tsqr_factor`].
pub fn tsqr_r_parallel<T: Real>(a: &DenseMatrix<T>, tree: &ReductionTree) -> Result<DenseMatrix<T>> {
    check_input(a, tree.leaf_count())?;
    let partition = partition_rows(a.rows(), tree.leaf_count())?;
    let mut slot_of = vec![usize::MAX; tree.nodes().len()];
    for (slot, &id) in tree.leaf_nodes().iter().enumerate() {
        slot_of[id] = slot;
    }
    reduce_parallel(a, tree, &partition, &slot_of, tree.root())
}

fn reduce_parallel<T: Real>(
    a: &DenseMatrix<T>,
    tree: &ReductionTree,
    partition: &[Range<usize>],
    slot_of: &[usize],
    id: usize,
) -> Result<DenseMatrix<T>> {
    match tree.node(id).kind {
        NodeKind::Leaf { .. } => {
            let block = a.row_block(partition[slot_of[id]].clone());
            Ok(householder_qr(&block)?.sign_normalize().into_r())
        }
        NodeKind::Merge { left, right } => {
            let (l, r) = rayon::join(
                || reduce_parallel(a, tree, partition, slot_of, left),
                || reduce_parallel(a, tree, partition, slot_of, right),
            );
            Ok(stacked_qr(&l?, &r?)?.sign_normalize().into_r())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::relative_distance;
    use crate::tree::build_tree;

    type M = DenseMatrix<f64>;

    #[test]
    fn partition_examples() {
        assert_eq!(partition_rows(10, 2).unwrap(), vec![0..5, 5..10]);
        let sizes: Vec<usize> = partition_rows(10, 3).unwrap().iter().map(|r| r.len()).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
        let big = partition_rows(33_554_432, 256).unwrap();
        assert_eq!(big.len(), 256);
        assert!(big.iter().all(|r| r.len() == 131_072));
        assert!(partition_rows(3, 4).is_err());
        assert!(partition_rows(3, 0).is_err());
    }

    #[test]
    fn single_domain_is_plain_householder() {
        let topo = Topology::uniform(1, 1).unwrap();
        let tree = build_tree(&topo, TreeShape::Binary);
        let mut comm = Communicator::new(topo);
        let a = M::gaussian(40, 5, 3);
        let f = tsqr_factor(&a, &tree, &mut comm).unwrap();
        let dense = householder_qr(&a).unwrap().sign_normalize();
        assert_eq!(f.r(), dense.r());
        assert_eq!(comm.cost_report().msg_count, 0);
    }

    #[test]
    fn identity_q_for_single_domain() {
        let topo = Topology::uniform(1, 1).unwrap();
        let tree = build_tree(&topo, TreeShape::Binary);
        let mut comm = Communicator::new(topo);
        let f = tsqr_factor(&M::eye(6, 3), &tree, &mut comm).unwrap();
        assert_eq!(f.reconstruct_q(), M::eye(6, 3));
    }

    #[test]
    fn too_short_rejected() {
        let topo = Topology::uniform(1, 4).unwrap();
        let tree = build_tree(&topo, TreeShape::Binary);
        let mut comm = Communicator::new(topo);
        let err = tsqr_factor(&M::gaussian(15, 4, 1), &tree, &mut comm).unwrap_err();
        assert!(matches!(err, Error::TooShort { rows: 15, cols: 4, domains: 4 }));
        let mut bad = M::gaussian(32, 4, 1);
        bad[(3, 3)] = f64::NAN;
        assert!(tsqr_factor(&bad, &tree, &mut comm).is_err());
        assert!(comm.log().is_empty());
    }

    #[test]
    fn q_transpose_roundtrip() {
        let topo = Topology::uniform(2, 2).unwrap();
        let tree = build_tree(&topo, TreeShape::Hierarchical);
        let mut comm = Communicator::new(topo);
        let a = M::gaussian(64, 4, 9);
        let f = tsqr_factor(&a, &tree, &mut comm).unwrap();
        let qta = f.apply_q_transpose(&a).unwrap();
        assert!(relative_distance(&qta, f.r()).unwrap() < 1e-13);
        let c = M::gaussian(4, 2, 1);
        let back = f.apply_q_transpose(&f.apply_q(&c).unwrap()).unwrap();
        assert!(relative_distance(&back, &c).unwrap() < 1e-13);
    }

    #[test]
    fn parallel_matches_bitwise() {
        let topo = Topology::uniform(2, 4).unwrap();
        for shape in [TreeShape::Flat, TreeShape::Binary, TreeShape::Hierarchical] {
            let tree = build_tree(&topo, shape);
            let a = M::gaussian(256, 8, 5);
            let mut comm = Communicator::new(topo.clone());
            let seq = tsqr_factor(&a, &tree, &mut comm).unwrap();
            assert_eq!(&tsqr_r_parallel(&a, &tree).unwrap(), seq.r());
        }
    }

    #[test]
    fn grouped_kernels_agree() {
        let topo = Topology::uniform(2, 4).unwrap();
        let a = M::gaussian(256, 6, 12);
        let dense = householder_qr(&a).unwrap().sign_normalize();
        for kernel in [DomainKernel::FlatTsqr, DomainKernel::Qr2] {
            let mut comm = Communicator::new(topo.clone());
            let f = tsqr_grouped(&a, &topo, TreeShape::Hierarchical, 2, kernel, &mut comm).unwrap();
            assert!(relative_distance(f.r(), dense.r()).unwrap() < 1e-12, "{kernel}");
            let q = f.reconstruct_q();
            let back = q.matmul(f.r()).unwrap();
            assert!(relative_distance(&back, &a).unwrap() < 1e-13);
            assert!(comm.cost_report().inter_cluster_msg_count > 0);
        }
    }

    #[test]
    fn kernel_parsing() {
        assert_eq!("qr2".parse::<DomainKernel>().unwrap(), DomainKernel::Qr2);
        assert_eq!(DomainKernel::FlatTsqr.to_string(), "flat");
        assert!("x".parse::<DomainKernel>().is_err());
    }
}
