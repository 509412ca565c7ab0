//! Reduction trees over domains.
//!
//! Every internal node merges exactly two children. A node is owned by the
//! owner of its left child, so each merge costs one message from the right
//! child's owner to the left child's owner. That message is the tree edge
//! counted by [`ReductionTree::inter_cluster_edges`].

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::topology::Topology;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeShape {
    /// Left-deep chain: `((d0 + d1) + d2) + ...`.
    Flat,
    /// Pairs adjacent survivors each round; an odd survivor is promoted.
    Binary,
    /// Binary inside each cluster, then binary across cluster roots.
    Hierarchical,
}

impl fmt::Display for TreeShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TreeShape::Flat => "flat",
            TreeShape::Binary => "binary",
            TreeShape::Hierarchical => "hier",
        })
    }
}

impl FromStr for TreeShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(TreeShape::Flat),
            "binary" => Ok(TreeShape::Binary),
            "hier" | "hierarchical" => Ok(TreeShape::Hierarchical),
            other => Err(Error::Run(format!("unknown tree shape `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Leaf { domain: usize },
    Merge { left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeNode {
    pub kind: NodeKind,
    /// Domain holding this node's result.
    pub owner: usize,
    /// Cluster of `owner`.
    pub cluster: usize,
    /// Merges on the longest path down to a leaf.
    pub height: usize,
}

/// The message implied by one merge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeEdge {
    pub node: usize,
    pub src: usize,
    pub dst: usize,
    pub inter_cluster: bool,
}

/// Nodes are stored children-first, so iterating in index order is a valid
/// bottom-up schedule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReductionTree {
    nodes: Vec<TreeNode>,
    leaves: Vec<usize>,
    root: usize,
}

impl ReductionTree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Leaf node ids in leaf order.
    pub fn leaf_nodes(&self) -> &[usize] {
        &self.leaves
    }

    /// Domains in leaf order.
    pub fn leaf_domains(&self) -> Vec<usize> {
        self.leaves
            .iter()
            .map(|&id| match self.nodes[id].kind {
                NodeKind::Leaf { domain } => domain,
                NodeKind::Merge { .. } => unreachable!("leaf list holds leaves"),
            })
            .collect()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn internal_count(&self) -> usize {
        self.nodes.len() - self.leaves.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = TreeEdge> + '_ {
        self.nodes.iter().enumerate().filter_map(|(id, n)| match n.kind {
            NodeKind::Merge { left, right } => Some(TreeEdge {
                node: id,
                src: self.nodes[right].owner,
                dst: self.nodes[left].owner,
                inter_cluster: self.nodes[right].cluster != self.nodes[left].cluster,
            }),
            NodeKind::Leaf { .. } => None,
        })
    }

    pub fn inter_cluster_edges(&self) -> usize {
        self.edges().filter(|e| e.inter_cluster).count()
    }

    pub fn intra_cluster_edges(&self) -> usize {
        self.edges().filter(|e| !e.inter_cluster).count()
    }

    /// Largest number of messages on any leaf-to-root chain.
    pub fn message_depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        for (id, n) in self.nodes.iter().enumerate() {
            if let NodeKind::Merge { left, right } = n.kind {
                depth[id] = depth[left].max(depth[right] + 1);
            }
        }
        depth[self.root]
    }

    /// Leaf domains under `id`, in leaf order.
    pub fn subtree_domains(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            match self.nodes[n].kind {
                NodeKind::Leaf { domain } => out.push(domain),
                NodeKind::Merge { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        out
    }
}

struct Builder<'t> {
    topo: &'t Topology,
    nodes: Vec<TreeNode>,
    leaves: Vec<usize>,
}

impl<'t> Builder<'t> {
    fn leaf(&mut self, domain: usize) -> Result<usize> {
        let cluster = self.topo.cluster_of(domain)?;
        self.nodes.push(TreeNode {
            kind: NodeKind::Leaf { domain },
            owner: domain,
            cluster,
            height: 0,
        });
        let id = self.nodes.len() - 1;
        self.leaves.push(id);
        Ok(id)
    }

    fn merge(&mut self, left: usize, right: usize) -> usize {
        let (l, r) = (&self.nodes[left], &self.nodes[right]);
        let node = TreeNode {
            kind: NodeKind::Merge { left, right },
            owner: l.owner,
            cluster: l.cluster,
            height: l.height.max(r.height) + 1,
        };
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    fn flat(&mut self, items: &[usize]) -> usize {
        let mut acc = items[0];
        for &next in &items[1..] {
            acc = self.merge(acc, next);
        }
        acc
    }

    fn binary(&mut self, items: &[usize]) -> usize {
        let mut level = items.to_vec();
        while level.len() > 1 {
            let next = level
                .chunks(2)
                .map(|pair| match *pair {
                    [a, b] => self.merge(a, b),
                    [a] => a,
                    _ => unreachable!(),
                })
                .collect();
            level = next;
        }
        level[0]
    }

    fn combine(&mut self, shape: TreeShape, items: &[usize]) -> usize {
        match shape {
            TreeShape::Flat => self.flat(items),
            TreeShape::Binary | TreeShape::Hierarchical => self.binary(items),
        }
    }

    /// Splits `items` (node ids) by owner cluster, clusters ascending,
    /// keeping the given order inside each cluster.
    fn by_cluster(&self, items: &[usize]) -> Vec<Vec<usize>> {
        let mut buckets = vec![Vec::new(); self.topo.cluster_count()];
        for &id in items {
            buckets[self.nodes[id].cluster].push(id);
        }
        buckets.retain(|b| !b.is_empty());
        buckets
    }

    fn shaped(&mut self, shape: TreeShape, items: &[usize]) -> usize {
        match shape {
            TreeShape::Hierarchical => {
                let roots: Vec<usize> = self
                    .by_cluster(items)
                    .into_iter()
                    .map(|group| self.binary(&group))
                    .collect();
                self.binary(&roots)
            }
            other => self.combine(other, items),
        }
    }

    fn finish(self, root: usize) -> ReductionTree {
        ReductionTree {
            nodes: self.nodes,
            leaves: self.leaves,
            root,
        }
    }
}

/// Tree over every domain of `topo`, leaves in ascending domain order.
pub fn build_tree(topo: &Topology, shape: TreeShape) -> ReductionTree {
    let all: Vec<usize> = (0..topo.domain_count()).collect();
    build_tree_over(topo, &all, shape).expect("all domains are valid")
}

/// Tree over the given domains. For the hierarchical shape the leaves are
/// regrouped by cluster; otherwise they keep the given order.
pub fn build_tree_over(topo: &Topology, domains: &[usize], shape: TreeShape) -> Result<ReductionTree> {
    check_domains(topo, domains)?;
    let mut b = Builder {
        topo,
        nodes: Vec::new(),
        leaves: Vec::new(),
    };
    let ordered: Vec<usize> = if shape == TreeShape::Hierarchical {
        let mut sorted = domains.to_vec();
        sorted.sort_by_key(|&d| topo.cluster_of(d).expect("checked"));
        sorted
    } else {
        domains.to_vec()
    };
    let leaves = ordered.iter().map(|&d| b.leaf(d)).collect::<Result<Vec<_>>>()?;
    let root = b.shaped(shape, &leaves);
    Ok(b.finish(root))
}

/// Domains of each cluster are cut into consecutive groups of `group_size`;
/// each group is reduced by a flat chain, and the group results are then
/// reduced with `shape`.
pub fn build_grouped_tree(topo: &Topology, shape: TreeShape, group_size: usize) -> Result<ReductionTree> {
    let groups = domain_groups(topo, group_size)?;
    let mut b = Builder {
        topo,
        nodes: Vec::new(),
        leaves: Vec::new(),
    };
    let mut roots = Vec::with_capacity(groups.len());
    for members in &groups {
        let leaves = members.iter().map(|&d| b.leaf(d)).collect::<Result<Vec<_>>>()?;
        roots.push(b.flat(&leaves));
    }
    let root = b.shaped(shape, &roots);
    Ok(b.finish(root))
}

/// Consecutive groups of `group_size` domains inside each cluster, clusters
/// ascending.
pub fn domain_groups(topo: &Topology, group_size: usize) -> Result<Vec<Vec<usize>>> {
    if group_size == 0 {
        return Err(Error::Run("group size must be positive".into()));
    }
    let mut out = Vec::new();
    for g in topo.groups() {
        if g.members.len() % group_size != 0 {
            return Err(Error::Run(format!(
                "cluster {} has {} domains, not a multiple of {group_size}",
                g.group_id,
                g.members.len()
            )));
        }
        out.extend(g.members.chunks(group_size).map(<[usize]>::to_vec));
    }
    Ok(out)
}

fn check_domains(topo: &Topology, domains: &[usize]) -> Result<()> {
    if domains.is_empty() {
        return Err(Error::Run("a tree needs at least one leaf".into()));
    }
    let mut seen = vec![false; topo.domain_count()];
    for &d in domains {
        let slot = seen.get_mut(d).ok_or(Error::InvalidDomain(d))?;
        if *slot {
            return Err(Error::Run(format!("domain {d} appears twice")));
        }
        *slot = true;
    }
    Ok(())
}

/// `inter_cluster_edges(tree)`.
pub fn inter_cluster_edges(tree: &ReductionTree) -> usize {
    tree.inter_cluster_edges()
}
