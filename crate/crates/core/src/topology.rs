//! Cluster-of-clusters description.
//!
//! A topology is a list of clusters (geographical sites), each holding a
//! number of domains, plus symmetric site-to-site latency and bandwidth
//! tables whose diagonal is the intra-cluster link. Domains are numbered
//! globally; by default cluster 0 owns the first block of ids, cluster 1 the
//! next, and so on. [`Topology::with_placement`] overrides that layout.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cluster {
    pub name: String,
    pub domains: usize,
    /// Seconds.
    pub latency: f64,
    /// Bytes per second.
    pub bandwidth: f64,
    /// Flops per second of one domain.
    pub flop_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Link {
    pub latency: f64,
    pub bandwidth: f64,
}

impl Link {
    /// Seconds per byte.
    pub fn inverse_bandwidth(&self) -> f64 {
        1.0 / self.bandwidth
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ProcessGroup {
    pub group_id: usize,
    pub members: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    clusters: Vec<Cluster>,
    latency: Vec<Vec<f64>>,
    bandwidth: Vec<Vec<f64>>,
    placement: Vec<usize>,
}

const MBIT: f64 = 1e6 / 8.0;

impl Topology {
    /// Builds from full `C x C` tables; the diagonal must repeat the
    /// intra-cluster values.
    pub fn from_tables(
        clusters: Vec<Cluster>,
        latency: Vec<Vec<f64>>,
        bandwidth: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let placement = clusters
            .iter()
            .enumerate()
            .flat_map(|(c, cl)| std::iter::repeat_n(c, cl.domains))
            .collect();
        let topo = Self {
            clusters,
            latency,
            bandwidth,
            placement,
        };
        topo.validate()?;
        Ok(topo)
    }

    /// Builds from clusters and one `(a, b, latency, bandwidth)` entry per
    /// unordered pair of distinct clusters.
    pub fn from_links(clusters: Vec<Cluster>, links: &[(usize, usize, f64, f64)]) -> Result<Self> {
        let c = clusters.len();
        let mut lat = vec![vec![f64::NAN; c]; c];
        let mut bw = vec![vec![f64::NAN; c]; c];
        for (i, cl) in clusters.iter().enumerate() {
            lat[i][i] = cl.latency;
            bw[i][i] = cl.bandwidth;
        }
        for &(a, b, l, w) in links {
            if a >= c || b >= c || a == b {
                return Err(Error::Topology(format!("bad link {a}-{b}")));
            }
            lat[a][b] = l;
            lat[b][a] = l;
            bw[a][b] = w;
            bw[b][a] = w;
        }
        Self::from_tables(clusters, lat, bw)
    }

    /// `c` identical clusters of `d` domains: 10 us / 1 GB/s inside a
    /// cluster, 1 ms / 100 MB/s between clusters, 1 Gflop/s per domain.
    pub fn uniform(c: usize, d: usize) -> Result<Self> {
        let clusters = (0..c)
            .map(|i| Cluster {
                name: format!("c{i}"),
                domains: d,
                latency: 1e-5,
                bandwidth: 1e9,
                flop_rate: 1e9,
            })
            .collect();
        let links: Vec<_> = (0..c)
            .flat_map(|a| (a + 1..c).map(move |b| (a, b, 1e-3, 1e8)))
            .collect();
        Self::from_links(clusters, &links)
    }

    /// Four Grid'5000 sites with 64 domains each (32 dual-processor nodes,
    /// two processes per node). Latencies and throughputs are the measured
    /// site-to-site table; each domain is credited with the 3.67 Gflop/s a
    /// processor sustains in DGEMM.
    pub fn grid5000() -> Self {
        let names = ["Orsay", "Toulouse", "Bordeaux", "Sophia"];
        let lat_ms = [
            [0.07, 7.97, 6.98, 6.12],
            [7.97, 0.03, 9.03, 8.18],
            [6.98, 9.03, 0.05, 7.18],
            [6.12, 8.18, 7.18, 0.06],
        ];
        let mbps = [
            [890.0, 78.0, 90.0, 102.0],
            [78.0, 890.0, 77.0, 90.0],
            [90.0, 77.0, 890.0, 83.0],
            [102.0, 90.0, 83.0, 890.0],
        ];
        let clusters = names
            .iter()
            .enumerate()
            .map(|(i, n)| Cluster {
                name: (*n).to_string(),
                domains: 64,
                latency: lat_ms[i][i] * 1e-3,
                bandwidth: mbps[i][i] * MBIT,
                flop_rate: 3.67e9,
            })
            .collect();
        let lat = lat_ms
            .iter()
            .map(|row| row.iter().map(|v| v * 1e-3).collect())
            .collect();
        let bw = mbps
            .iter()
            .map(|row| row.iter().map(|v| v * MBIT).collect())
            .collect();
        Self::from_tables(clusters, lat, bw).expect("preset is valid")
    }

    /// `grid5000` or `uniform:<C>x<D>`.
    pub fn preset(name: &str) -> Result<Self> {
        if name == "grid5000" {
            return Ok(Self::grid5000());
        }
        if let Some(dims) = name.strip_prefix("uniform:") {
            let (c, d) = dims
                .split_once('x')
                .ok_or_else(|| Error::UnknownPreset(name.to_string()))?;
            let parse = |s: &str| {
                s.parse::<usize>()
                    .ok()
                    .filter(|&v| v > 0)
                    .ok_or_else(|| Error::UnknownPreset(name.to_string()))
            };
            return Self::uniform(parse(c)?, parse(d)?);
        }
        Err(Error::UnknownPreset(name.to_string()))
    }

    /// Parses the line-oriented topology format:
    ///
    /// ```text
    /// # comment
    /// cluster <name> domains=<k> latency=<s> bandwidth=<B/s> [floprate=<f/s>]
    /// link <a> <b> latency=<s> bandwidth=<B/s>
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut clusters: Vec<Cluster> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut links: HashMap<(usize, usize), (f64, f64, usize)> = HashMap::new();
        let mut last_line = 0;

        for (lineno, raw) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            last_line = line_no;
            let err = |msg: String| Error::Parse { line: line_no, msg };
            let mut words = line.split_whitespace();
            let keyword = words.next().unwrap_or_default();
            let positional: Vec<&str> = words.clone().take_while(|w| !w.contains('=')).collect();
            let keys = parse_keys(words.skip(positional.len()), line_no)?;

            match keyword {
                "cluster" => {
                    let [name] = positional[..] else {
                        return Err(err("expected `cluster <name> key=value...`".into()));
                    };
                    if index.contains_key(name) {
                        return Err(err(format!("duplicate cluster `{name}`")));
                    }
                    let domains = keys.get("domains").ok_or_else(|| err("missing domains=".into()))?;
                    if domains.fract() != 0.0 || *domains < 1.0 {
                        return Err(err(format!("domains must be a positive integer, got {domains}")));
                    }
                    let cluster = Cluster {
                        name: name.to_string(),
                        domains: *domains as usize,
                        latency: require_positive(&keys, "latency", line_no)?,
                        bandwidth: require_positive(&keys, "bandwidth", line_no)?,
                        flop_rate: match keys.get("floprate") {
                            Some(&v) if v > 0.0 => v,
                            Some(&v) => return Err(err(format!("floprate must be positive, got {v}"))),
                            None => 1.0,
                        },
                    };
                    index.insert(name.to_string(), clusters.len());
                    clusters.push(cluster);
                }
                "link" => {
                    let [a, b] = positional[..] else {
                        return Err(err("expected `link <a> <b> key=value...`".into()));
                    };
                    let lookup = |n: &str| {
                        index
                            .get(n)
                            .copied()
                            .ok_or_else(|| err(format!("unknown cluster `{n}`")))
                    };
                    let (ia, ib) = (lookup(a)?, lookup(b)?);
                    if ia == ib {
                        return Err(err("a link needs two distinct clusters".into()));
                    }
                    let lat = require_positive(&keys, "latency", line_no)?;
                    let bw = require_positive(&keys, "bandwidth", line_no)?;
                    let key = (ia.min(ib), ia.max(ib));
                    if let Some(&(l0, b0, first)) = links.get(&key) {
                        if l0 != lat || b0 != bw {
                            return Err(err(format!(
                                "asymmetric link {a}-{b}: conflicts with line {first}"
                            )));
                        }
                    }
                    links.insert(key, (lat, bw, line_no));
                }
                other => return Err(err(format!("unknown directive `{other}`"))),
            }
        }

        if clusters.is_empty() {
            return Err(Error::Parse {
                line: last_line,
                msg: "no clusters declared".into(),
            });
        }
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                if !links.contains_key(&(a, b)) {
                    return Err(Error::Parse {
                        line: last_line,
                        msg: format!("missing link {}-{}", clusters[a].name, clusters[b].name),
                    });
                }
            }
        }
        let list: Vec<_> = links.iter().map(|(&(a, b), &(l, w, _))| (a, b, l, w)).collect();
        Self::from_links(clusters, &list)
    }

    /// Assigns each domain id to a cluster explicitly. Every cluster must
    /// receive exactly its declared number of domains.
    pub fn with_placement(mut self, placement: Vec<usize>) -> Result<Self> {
        let mut counts = vec![0usize; self.clusters.len()];
        for &c in &placement {
            if c >= counts.len() {
                return Err(Error::Topology(format!("placement names cluster {c}")));
            }
            counts[c] += 1;
        }
        if counts.iter().zip(&self.clusters).any(|(&n, cl)| n != cl.domains) {
            return Err(Error::Topology(
                "placement does not match per-cluster domain counts".into(),
            ));
        }
        self.placement = placement;
        Ok(self)
    }

    /// Keeps the first `sites` clusters.
    pub fn first_sites(&self, sites: usize) -> Result<Self> {
        if sites == 0 || sites > self.clusters.len() {
            return Err(Error::Topology(format!(
                "asked for {sites} sites out of {}",
                self.clusters.len()
            )));
        }
        let lat = self.latency[..sites].iter().map(|r| r[..sites].to_vec()).collect();
        let bw = self.bandwidth[..sites].iter().map(|r| r[..sites].to_vec()).collect();
        Self::from_tables(self.clusters[..sites].to_vec(), lat, bw)
    }

    /// Same links and rates with `domains` domains in every cluster.
    pub fn with_domains_per_cluster(&self, domains: usize) -> Result<Self> {
        let clusters = self
            .clusters
            .iter()
            .cloned()
            .map(|c| Cluster { domains, ..c })
            .collect();
        Self::from_tables(clusters, self.latency.clone(), self.bandwidth.clone())
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn domain_count(&self) -> usize {
        self.placement.len()
    }

    pub fn cluster_of(&self, domain: usize) -> Result<usize> {
        self.placement
            .get(domain)
            .copied()
            .ok_or(Error::InvalidDomain(domain))
    }

    pub fn cluster_link(&self, a: usize, b: usize) -> Link {
        Link {
            latency: self.latency[a][b],
            bandwidth: self.bandwidth[a][b],
        }
    }

    pub fn link(&self, src: usize, dst: usize) -> Result<Link> {
        Ok(self.cluster_link(self.cluster_of(src)?, self.cluster_of(dst)?))
    }

    pub fn flop_rate(&self, domain: usize) -> Result<f64> {
        Ok(self.clusters[self.cluster_of(domain)?].flop_rate)
    }

    /// Domains of each cluster, in ascending id order.
    pub fn groups(&self) -> Vec<ProcessGroup> {
        let mut groups: Vec<ProcessGroup> = (0..self.clusters.len())
            .map(|group_id| ProcessGroup {
                group_id,
                members: Vec::new(),
            })
            .collect();
        for (d, &c) in self.placement.iter().enumerate() {
            groups[c].members.push(d);
        }
        groups
    }

    /// Highest-latency, lowest-bandwidth link inside any cluster.
    pub fn slowest_intra_link(&self) -> Link {
        slowest((0..self.clusters.len()).map(|c| self.cluster_link(c, c)))
    }

    /// Slowest link between distinct clusters, if there are several.
    pub fn slowest_inter_link(&self) -> Option<Link> {
        let c = self.clusters.len();
        (c > 1).then(|| {
            slowest((0..c).flat_map(|a| (a + 1..c).map(move |b| (a, b))).map(|(a, b)| self.cluster_link(a, b)))
        })
    }

    pub fn slowest_flop_rate(&self) -> f64 {
        self.clusters
            .iter()
            .map(|c| c.flop_rate)
            .fold(f64::INFINITY, f64::min)
    }

    fn validate(&self) -> Result<()> {
        let c = self.clusters.len();
        if c == 0 {
            return Err(Error::Topology("no clusters".into()));
        }
        if self.clusters.iter().any(|cl| cl.domains == 0) {
            return Err(Error::Topology("every cluster needs at least one domain".into()));
        }
        if self.clusters.iter().any(|cl| !(cl.flop_rate > 0.0)) {
            return Err(Error::Topology("flop rates must be positive".into()));
        }
        for table in [&self.latency, &self.bandwidth] {
            if table.len() != c || table.iter().any(|r| r.len() != c) {
                return Err(Error::Topology(format!("link tables must be {c}x{c}")));
            }
        }
        for a in 0..c {
            let own = &self.clusters[a];
            if self.latency[a][a] != own.latency || self.bandwidth[a][a] != own.bandwidth {
                return Err(Error::Topology(format!(
                    "diagonal of cluster {} differs from its intra-cluster link",
                    own.name
                )));
            }
            for b in 0..c {
                let (l, w) = (self.latency[a][b], self.bandwidth[a][b]);
                if !(l > 0.0 && l.is_finite() && w > 0.0 && w.is_finite()) {
                    return Err(Error::Topology(format!(
                        "link {a}-{b} needs positive finite latency and bandwidth"
                    )));
                }
                if l != self.latency[b][a] || w != self.bandwidth[b][a] {
                    return Err(Error::Topology(format!("link {a}-{b} is asymmetric")));
                }
            }
        }
        Ok(())
    }
}

/// `groups_from_topology`: one process group per cluster.
pub fn groups_from_topology(topo: &Topology) -> Vec<ProcessGroup> {
    topo.groups()
}

/// `load_topology`: preset name or topology-file text.
pub fn load_topology(text: &str) -> Result<Topology> {
    Topology::parse(text)
}

fn slowest(links: impl Iterator<Item = Link>) -> Link {
    links.fold(
        Link {
            latency: 0.0,
            bandwidth: f64::INFINITY,
        },
        |acc, l| Link {
            latency: acc.latency.max(l.latency),
            bandwidth: acc.bandwidth.min(l.bandwidth),
        },
    )
}

fn parse_keys<'a>(words: impl Iterator<Item = &'a str>, line: usize) -> Result<HashMap<String, f64>> {
    let mut out = HashMap::new();
    for w in words {
        let (k, v) = w.split_once('=').ok_or_else(|| Error::Parse {
            line,
            msg: format!("expected key=value, got `{w}`"),
        })?;
        let v: f64 = v.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("`{k}` is not a number: `{v}`"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line,
                msg: format!("`{k}` must be finite"),
            });
        }
        if out.insert(k.to_string(), v).is_some() {
            return Err(Error::Parse {
                line,
                msg: format!("duplicate key `{k}`"),
            });
        }
    }
    Ok(out)
}

fn require_positive(keys: &HashMap<String, f64>, key: &str, line: usize) -> Result<f64> {
    match keys.get(key) {
        Some(&v) if v > 0.0 => Ok(v),
        Some(&v) => Err(Error::Parse {
            line,
            msg: format!("{key} must be positive, got {v}"),
        }),
        None => Err(Error::Parse {
            line,
            msg: format!("missing {key}="),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid5000_values() {
        let t = Topology::grid5000();
        assert_eq!(t.cluster_count(), 4);
        assert_eq!(t.domain_count(), 256);
        let orsay_toulouse = t.cluster_link(0, 1);
        assert!((orsay_toulouse.latency - 7.97e-3).abs() < 1e-15);
        let orsay = t.cluster_link(0, 0);
        assert!((orsay.latency - 0.07e-3).abs() < 1e-18);
        assert_eq!(orsay.bandwidth, 890e6 / 8.0);
    }

    #[test]
    fn grid5000_groups() {
        let groups = Topology::grid5000().groups();
        assert_eq!(groups.len(), 4);
        assert!(groups.iter().all(|g| g.members.len() == 64));
        assert_eq!(groups[1].members[0], 64);
    }

    #[test]
    fn small_groups() {
        let t = Topology::uniform(2, 2).unwrap();
        let g = groups_from_topology(&t);
        assert_eq!(g[0].members, vec![0, 1]);
        assert_eq!(g[1].members, vec![2, 3]);
        let single = Topology::uniform(1, 5).unwrap().groups();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].members, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn presets() {
        assert_eq!(Topology::preset("uniform:3x2").unwrap().domain_count(), 6);
        assert!(matches!(Topology::preset("nope"), Err(Error::UnknownPreset(_))));
        assert!(Topology::preset("uniform:0x2").is_err());
        assert!(Topology::preset("uniform:3").is_err());
    }

    #[test]
    fn parse_minimal() {
        let t = Topology::parse("cluster solo domains=4 latency=1e-5 bandwidth=1e9\n").unwrap();
        assert_eq!(t.cluster_count(), 1);
        assert_eq!(t.domain_count(), 4);
        assert_eq!(t.clusters()[0].flop_rate, 1.0);
    }

    #[test]
    fn parse_two_clusters() {
        let text = "\
# two sites
cluster a domains=2 latency=1e-5 bandwidth=1e9 floprate=2e9
cluster b domains=3 latency=2e-5 bandwidth=1e9   # trailing comment

link a b latency=5e-3 bandwidth=1e7
";
        let t = Topology::parse(text).unwrap();
        assert_eq!(t.domain_count(), 5);
        assert_eq!(t.cluster_of(2).unwrap(), 1);
        assert_eq!(t.link(0, 4).unwrap().latency, 5e-3);
        assert_eq!(t.flop_rate(1).unwrap(), 2e9);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let neg = "cluster a domains=2 latency=1e-5 bandwidth=1e9\ncluster b domains=2 latency=-1 bandwidth=1e9\n";
        assert!(matches!(Topology::parse(neg), Err(Error::Parse { line: 2, .. })));

        let asym = "\
cluster a domains=1 latency=1e-5 bandwidth=1e9
cluster b domains=1 latency=1e-5 bandwidth=1e9
link a b latency=1e-3 bandwidth=1e8
link b a latency=2e-3 bandwidth=1e8
";
        match Topology::parse(asym) {
            Err(Error::Parse { line: 4, msg }) => assert!(msg.contains("asymmetric")),
            other => panic!("{other:?}"),
        }

        let missing = "cluster a domains=1 latency=1e-5 bandwidth=1e9\ncluster b domains=1 latency=1e-5 bandwidth=1e9\n";
        assert!(Topology::parse(missing).is_err());
        assert!(Topology::parse("bogus x\n").is_err());
        assert!(Topology::parse("cluster a domains=1.5 latency=1 bandwidth=1\n").is_err());
        assert!(Topology::parse("cluster a domains=1 latency=x bandwidth=1\n").is_err());
        assert!(Topology::parse("link a b latency=1 bandwidth=1\n").is_err());
        assert!(Topology::parse("# nothing\n").is_err());
    }

    #[test]
    fn asymmetric_tables_rejected() {
        let cl = |n: &str| Cluster {
            name: n.into(),
            domains: 1,
            latency: 1e-5,
            bandwidth: 1e9,
            flop_rate: 1.0,
        };
        let lat = vec![vec![1e-5, 1e-3], vec![2e-3, 1e-5]];
        let bw = vec![vec![1e9, 1e8], vec![1e8, 1e9]];
        assert!(Topology::from_tables(vec![cl("a"), cl("b")], lat, bw).is_err());
    }

    #[test]
    fn placement_override() {
        let t = Topology::uniform(2, 2).unwrap().with_placement(vec![0, 1, 1, 0]).unwrap();
        assert_eq!(t.cluster_of(3).unwrap(), 0);
        assert_eq!(t.groups()[0].members, vec![0, 3]);
        assert!(Topology::uniform(2, 2).unwrap().with_placement(vec![0, 0, 0, 1]).is_err());
    }

    #[test]
    fn slowest_links() {
        let t = Topology::grid5000();
        let inter = t.slowest_inter_link().unwrap();
        assert!((inter.latency - 9.03e-3).abs() < 1e-15);
        assert_eq!(inter.bandwidth, 77.0 * 1e6 / 8.0);
        assert!((t.slowest_intra_link().latency - 0.07e-3).abs() < 1e-18);
        assert!(t.first_sites(1).unwrap().slowest_inter_link().is_none());
    }
}
