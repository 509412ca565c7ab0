#![allow(dead_code)]

use tsqr_core::{DenseMatrix, Topology};

pub type M = DenseMatrix<f64>;

/// Classical Gram-Schmidt with one full reorthogonalization pass. Written
/// from scratch against row/column indexing only, so it shares no code with
/// the Householder kernels. Returns thin Q and R with R's diagonal >= 0.
pub fn cgs2(a: &M) -> (M, M) {
    let (m, n) = (a.rows(), a.cols());
    let mut q = vec![vec![0.0f64; m]; n];
    let mut r = vec![vec![0.0f64; n]; n];
    for j in 0..n {
        let mut v: Vec<f64> = (0..m).map(|i| a[(i, j)]).collect();
        for _pass in 0..2 {
            for k in 0..j {
                let c: f64 = (0..m).map(|i| q[k][i] * v[i]).sum();
                r[k][j] += c;
                for i in 0..m {
                    v[i] -= c * q[k][i];
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        r[j][j] = norm;
        if norm > 0.0 {
            for i in 0..m {
                q[j][i] = v[i] / norm;
            }
        }
    }
    (
        M::from_fn(m, n, |i, j| q[j][i]),
        M::from_fn(n, n, |i, j| r[i][j]),
    )
}

pub fn rel(a: &M, b: &M) -> f64 {
    tsqr_core::relative_distance(a, b).unwrap()
}

pub fn backward_error(a: &M, q: &M, r: &M) -> f64 {
    rel(&q.matmul(r).unwrap(), a)
}

pub fn orthogonality(q: &M) -> f64 {
    q.tr_matmul(q)
        .unwrap()
        .sub(&M::identity(q.cols()))
        .unwrap()
        .frobenius_norm()
}

pub fn upper(n: usize, seed: u64) -> M {
    let g = M::gaussian(n, n, seed);
    M::from_fn(n, n, |i, j| if i <= j { g[(i, j)] } else { 0.0 })
}

/// `c` clusters, `d` domains each, unit latency and nothing else.
pub fn latency_only(c: usize, d: usize, beta: f64) -> Topology {
    let text: String = (0..c)
        .map(|i| format!("cluster s{i} domains={d} latency={beta} bandwidth=1e300 floprate=1e300\n"))
        .chain((0..c).flat_map(|a| (a + 1..c).map(move |b| format!("link s{a} s{b} latency={beta} bandwidth=1e300\n"))))
        .collect();
    Topology::parse(&text).unwrap()
}
