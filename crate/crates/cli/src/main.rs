use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tsqr_core::commands::{self, ModelMode, Outcome, RunSpec, EXIT_USAGE};
use tsqr_core::{Algo, DomainKernel, Error, Topology, TreeShape};

#[derive(Parser)]
#[command(name = "tsqr", version, about = "Tall-and-skinny QR on simulated clusters of clusters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Numerical and message-count checks over a parameter grid.
    Verify(Common),
    /// Simulated runs, one CSV row per grid cell.
    Bench(Common),
    /// Closed-form cost model.
    Model {
        #[command(flatten)]
        common: Common,
        /// Report the smallest n where qr2 beats tsqr.
        #[arg(long, conflicts_with = "speedup")]
        crossover: bool,
        /// Upper bound on n for --crossover.
        #[arg(long, default_value_t = 1 << 20)]
        cap: u64,
        /// Report time(1 site) / time(s sites).
        #[arg(long)]
        speedup: bool,
    },
    /// tsqr against the qr2 baseline on identical input.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    /// Row counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    m: Vec<usize>,
    /// Column counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// Numbers of sites (leading clusters of the topology).
    #[arg(long, value_delimiter = ',')]
    sites: Vec<usize>,
    /// Domains per cluster.
    #[arg(long, value_delimiter = ',')]
    domains: Vec<usize>,
    /// flat, binary or hier; all three when omitted.
    #[arg(long, value_delimiter = ',')]
    tree: Vec<TreeShape>,
    /// tsqr or qr2.
    #[arg(long, value_delimiter = ',', default_value = "tsqr")]
    algo: Vec<Algo>,
    #[arg(long)]
    want_q: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Preset name (`grid5000`, `uniform:CxD`) or topology file.
    #[arg(long, default_value = "uniform:2x4")]
    topology: String,
    /// Kernel of a domain spanning several processes: flat or qr2.
    #[arg(long, default_value = "flat")]
    domain_kernel: DomainKernel,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
    /// Lift the desk-scale size caps.
    #[arg(long)]
    allow_large: bool,
    #[arg(long, hide = true)]
    inject_fault: bool,
}

impl Common {
    fn spec(&self, default_m: &[usize], default_n: &[usize]) -> Result<RunSpec, Error> {
        let topology = load(&self.topology)?;
        let mut spec = RunSpec::new(topology, self.topology.clone());
        spec.m = pick(&self.m, default_m);
        spec.n = pick(&self.n, default_n);
        spec.sites = self.sites.clone();
        spec.domains = self.domains.clone();
        spec.trees = self.tree.clone();
        spec.algos = self.algo.clone();
        spec.want_q = self.want_q;
        spec.seed = self.seed;
        spec.domain_kernel = self.domain_kernel;
        spec.allow_large = self.allow_large;
        spec.inject_fault = self.inject_fault;
        spec.json = self.json;
        Ok(spec)
    }
}

fn pick(given: &[usize], default: &[usize]) -> Vec<usize> {
    if given.is_empty() {
        default.to_vec()
    } else {
        given.to_vec()
    }
}

fn load(source: &str) -> Result<Topology, Error> {
    match Topology::preset(source) {
        Err(Error::UnknownPreset(_)) => {
            let text = std::fs::read_to_string(source)
                .map_err(|e| Error::Topology(format!("`{source}` is neither a preset nor a readable file: {e}")))?;
            Topology::parse(&text)
        }
        other => other,
    }
}

fn run(cli: Cli) -> (Outcome, Option<PathBuf>) {
    let (common, outcome) = match &cli.command {
        Command::Verify(c) => (c, c.spec(&[512, 1024], &[1, 8, 32]).map(|s| commands::cmd_verify(&s))),
        Command::Bench(c) => (c, c.spec(&[4096], &[16]).map(|s| commands::cmd_bench(&s))),
        Command::Model {
            common,
            crossover,
            cap,
            speedup,
        } => {
            let mode = if *crossover {
                ModelMode::Crossover { cap: *cap }
            } else if *speedup {
                ModelMode::Speedup
            } else {
                ModelMode::Table
            };
            (common, common.spec(&[1 << 20], &[64]).map(|s| commands::cmd_model(&s, mode)))
        }
        Command::Compare(c) => (c, c.spec(&[4096], &[16]).map(|s| commands::cmd_compare(&s))),
    };
    (outcome.unwrap_or_else(|e| Outcome::usage(&e)), common.out.clone())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (outcome, out) = run(cli);
    let code = if outcome.code == EXIT_USAGE {
        eprint!("{}", outcome.output);
        outcome.code
    } else {
        match out {
            Some(path) => match std::fs::write(&path, &outcome.output) {
                Ok(()) => outcome.code,
                Err(e) => {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    EXIT_USAGE
                }
            },
            None => {
                print!("{}", outcome.output);
                outcome.code
            }
        }
    };
    ExitCode::from(code as u8)
}
