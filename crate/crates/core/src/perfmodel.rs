//! Closed-form message, volume and flop counts along the critical path of
//! both algorithms, and the resulting time
//! `beta * msgs + alpha * bytes + gamma * flops`.
//!
//! Counts follow the reduction depth `L = ceil(log2 P)`:
//!
//! | algo | msgs     | volume (values) | flops                                  |
//! |------|----------|-----------------|----------------------------------------|
//! | qr2  | `2 N L`  | `L N^2 / 2`     | `(2 M N^2 - 2/3 N^3) / P`              |
//! | tsqr | `L`      | `L N^2 / 2`     | `(2 M N^2 - 2/3 N^3) / P + 2/3 L N^3`  |
//!
//! Asking for Q as well doubles every entry.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::ModelScalar;
use crate::topology::Topology;

/// Bytes per matrix value when converting volumes.
pub const VALUE_BYTES: u64 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Tsqr,
    Qr2,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Tsqr => "tsqr",
            Algo::Qr2 => "qr2",
        })
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsqr" => Ok(Algo::Tsqr),
            "qr2" => Ok(Algo::Qr2),
            other => Err(Error::Model(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// `ceil(log2 p)`; 0 for `p <= 1`.
pub fn log2_ceil(p: u64) -> u64 {
    if p <= 1 {
        0
    } else {
        u64::from(64 - (p - 1).leading_zeros())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub m: u64,
    pub n: u64,
    pub p: u64,
    /// Seconds per byte.
    pub alpha: T,
    /// Seconds per message.
    pub beta: T,
    /// Seconds per flop.
    pub gamma: T,
    pub want_q: bool,
    pub algo: Algo,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelCounts<T> {
    pub msgs: T,
    /// Matrix values, not bytes.
    pub volume: T,
    pub flops: T,
}

impl<T: ModelScalar> ModelCounts<T> {
    pub fn volume_bytes(&self) -> T {
        self.volume.clone() * T::from_u64(VALUE_BYTES)
    }
}

impl<T: ModelScalar> ModelParams<T> {
    fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.p == 0 {
            return Err(Error::Model(format!(
                "dimensions must be positive, got m={} n={} p={}",
                self.m, self.n, self.p
            )));
        }
        let zero = T::zero();
        if self.alpha < zero || self.beta < zero || self.gamma < zero {
            return Err(Error::Model("rates must be non-negative".into()));
        }
        Ok(())
    }
}

/// Flops of the row-distributed part, `(2 M N^2 - 2/3 N^3) / P`.
fn local_flops<T: ModelScalar>(m: u64, n: u64, p: u64) -> T {
    let (m, n) = (T::from_u64(m), T::from_u64(n));
    let n3 = n.clone() * n.clone() * n.clone();
    (T::from_u64(2) * m * n.clone() * n - T::ratio(2, 3) * n3) / T::from_u64(p)
}

/// Counts for an algorithm reducing over `depth` levels with `p` domains.
fn counts_at_depth<T: ModelScalar>(algo: Algo, m: u64, n: u64, p: u64, depth: u64, want_q: bool) -> ModelCounts<T> {
    let l = T::from_u64(depth);
    let nn = T::from_u64(n);
    let half_n2 = nn.clone() * nn.clone() / T::from_u64(2);
    let base = local_flops::<T>(m, n, p);
    let (msgs, flops) = match algo {
        Algo::Qr2 => (T::from_u64(2) * nn * l.clone(), base),
        Algo::Tsqr => {
            let n3 = nn.clone() * nn.clone() * nn;
            (l.clone(), base + T::ratio(2, 3) * l.clone() * n3)
        }
    };
    let counts = ModelCounts {
        msgs,
        volume: l * half_n2,
        flops,
    };
    if want_q {
        let two = T::from_u64(2);
        ModelCounts {
            msgs: counts.msgs * two.clone(),
            volume: counts.volume * two.clone(),
            flops: counts.flops * two,
        }
    } else {
        counts
    }
}

pub fn model_counts<T: ModelScalar>(params: &ModelParams<T>) -> Result<ModelCounts<T>> {
    params.validate()?;
    Ok(counts_at_depth(
        params.algo,
        params.m,
        params.n,
        params.p,
        log2_ceil(params.p),
        params.want_q,
    ))
}

pub fn model_time<T: ModelScalar>(params: &ModelParams<T>) -> Result<T> {
    let c = model_counts(params)?;
    Ok(params.beta.clone() * c.msgs.clone()
        + params.alpha.clone() * c.volume_bytes()
        + params.gamma.clone() * c.flops)
}

/// Cost of one reduction level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LevelCost {
    /// Seconds per message.
    pub beta: f64,
    /// Seconds per byte.
    pub alpha: f64,
}

/// Model over a reduction tree whose levels may use different links.
///
/// For a cluster-of-clusters topology the levels are
/// `ceil(log2 D)` intra-cluster levels followed by `ceil(log2 C)`
/// inter-cluster ones, each priced at the slowest link of its kind, and
/// every domain computes at the slowest flop rate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridModel {
    pub p: u64,
    pub levels: Vec<LevelCost>,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridTime {
    pub msgs: f64,
    pub volume_bytes: f64,
    pub flops: f64,
    pub time_s: f64,
}

impl GridModel {
    pub fn homogeneous(p: u64, alpha: f64, beta: f64, gamma: f64) -> Self {
        Self {
            p,
            levels: vec![LevelCost { beta, alpha }; log2_ceil(p) as usize],
            gamma,
        }
    }

    pub fn from_topology(topo: &Topology) -> Self {
        let per_cluster = topo.clusters().iter().map(|c| c.domains).max().unwrap_or(1) as u64;
        let intra = topo.slowest_intra_link();
        let mut levels = vec![
            LevelCost {
                beta: intra.latency,
                alpha: intra.inverse_bandwidth(),
            };
            log2_ceil(per_cluster) as usize
        ];
        if let Some(inter) = topo.slowest_inter_link() {
            let level = LevelCost {
                beta: inter.latency,
                alpha: inter.inverse_bandwidth(),
            };
            levels.extend(std::iter::repeat_n(level, log2_ceil(topo.cluster_count() as u64) as usize));
        }
        Self {
            p: topo.domain_count() as u64,
            levels,
            gamma: 1.0 / topo.slowest_flop_rate(),
        }
    }

    pub fn depth(&self) -> u64 {
        self.levels.len() as u64
    }

    /// Counts with the tree depth in place of `ceil(log2 P)`.
    pub fn counts(&self, algo: Algo, m: u64, n: u64, want_q: bool) -> ModelCounts<f64> {
        counts_at_depth(algo, m, n, self.p, self.depth(), want_q)
    }

    pub fn time(&self, algo: Algo, m: u64, n: u64, want_q: bool) -> GridTime {
        let c = self.counts(algo, m, n, want_q);
        let depth = self.depth().max(1) as f64;
        let (msgs_per_level, bytes_per_level) = (c.msgs / depth, c.volume_bytes() / depth);
        let comm: f64 = self
            .levels
            .iter()
            .map(|l| l.beta * msgs_per_level + l.alpha * bytes_per_level)
            .sum();
        GridTime {
            msgs: c.msgs,
            volume_bytes: c.volume_bytes(),
            flops: c.flops,
            time_s: comm + self.gamma * c.flops,
        }
    }

    /// Smallest `n` in `1..=cap` at which qr2 is modeled faster than tsqr
    /// (R only).
    ///
    /// The time difference is a cubic in `n` with a positive leading term and
    /// positive value at zero, so once tsqr has been ahead, qr2 stays ahead
    /// after the first point where it wins. Doubling brackets that point and
    /// bisection pins it.
    pub fn crossover_n(&self, m: u64, cap: u64) -> Option<u64> {
        let qr2_wins = |n: u64| self.time(Algo::Qr2, m, n, false).time_s < self.time(Algo::Tsqr, m, n, false).time_s;
        if cap == 0 {
            return None;
        }
        if qr2_wins(1) {
            return Some(1);
        }
        let (mut lo, mut hi) = (1u64, 2u64);
        while hi < cap && !qr2_wins(hi) {
            lo = hi;
            hi *= 2;
        }
        if hi >= cap {
            hi = cap;
            if !qr2_wins(hi) {
                return None;
            }
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if qr2_wins(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }
}

/// [`GridModel::crossover_n`] for uniform links.
pub fn crossover_n(m: u64, p: u64, alpha: f64, beta: f64, gamma: f64, cap: u64) -> Option<u64> {
    GridModel::homogeneous(p, alpha, beta, gamma).crossover_n(m, cap)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpeedupRow {
    pub m: u64,
    pub n: u64,
    pub sites: usize,
    pub p: u64,
    pub algo: Algo,
    pub time_s: f64,
    /// One-site time over this row's time.
    pub speedup: f64,
}

/// Modeled speedup of using the first `s` clusters of `topo` over using only
/// the first, for every `(m, n)` point and every `s` in `sites`.
pub fn speedup_curve(
    topo: &Topology,
    algo: Algo,
    points: &[(u64, u64)],
    sites: &[usize],
    want_q: bool,
) -> Result<Vec<SpeedupRow>> {
    let base = GridModel::from_topology(&topo.first_sites(1)?);
    let models = sites
        .iter()
        .map(|&s| Ok((s, GridModel::from_topology(&topo.first_sites(s)?))))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(points.len() * sites.len());
    for &(m, n) in points {
        let t1 = base.time(algo, m, n, want_q).time_s;
        for (s, model) in &models {
            let time_s = model.time(algo, m, n, want_q).time_s;
            rows.push(SpeedupRow {
                m,
                n,
                sites: *s,
                p: model.p,
                algo,
                time_s,
                speedup: t1 / time_s,
            });
        }
    }
    Ok(rows)
}
