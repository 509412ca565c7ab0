//! Tall-and-skinny QR over topology-aware reduction trees.
//!
//! The dense kernels ([`householder_qr`], [`stacked_qr`]) are generic over
//! [`Real`]; [`tsqr_factor`] reduces per-domain R factors up a
//! [`ReductionTree`] while a [`Communicator`] counts the messages and flops a
//! distributed run would incur. [`qr2_factor`] is the column-at-a-time
//! baseline and [`perfmodel`] holds the closed-form cost model.

// `!(x <= bound)` is deliberate: NaN must fail the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod commands;
pub mod error;
pub mod householder;
pub mod matrix;
pub mod netsim;
pub mod perfmodel;
pub mod scalar;
pub mod stacked;
pub mod topology;
pub mod tree;
pub mod tsqr;

pub use baseline::{compare_runs, qr2_factor, qr2_form_q_with, CompareParams, Comparison, Qr2Run};
pub use error::{Error, Result};
pub use householder::{householder_qr, householder_qr_blocked, qr_flops, HouseholderFactor};
pub use matrix::{relative_distance, DenseMatrix};
pub use netsim::{packed_triangle_bytes, Communicator, CostReport, MessageKind, MessageRecord};
pub use perfmodel::{crossover_n, log2_ceil, model_counts, model_time, Algo, GridModel, ModelCounts, ModelParams};
pub use scalar::{ModelScalar, Rational, Real};
pub use stacked::{stacked_qr, stacked_qr_flops, StackedQrFactor};
pub use topology::{groups_from_topology, load_topology, Cluster, Link, ProcessGroup, Topology};
pub use tree::{build_tree, inter_cluster_edges, ReductionTree, TreeShape};
pub use tsqr::{partition_rows, tsqr_factor, tsqr_grouped, tsqr_r_parallel, DomainKernel, TsqrFactorization};

pub type Matrix = DenseMatrix<f64>;
pub type Matrix32 = DenseMatrix<f32>;
pub type Factor = HouseholderFactor<f64>;
pub type Tsqr = TsqrFactorization<f64>;
