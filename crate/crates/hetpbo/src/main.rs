//! `hetpbo` command line: experiment suites, the KDE rate check, trace
//! aggregation, anchor sampling and the live session service.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use hetpbo::config::ExperimentConfig;
use hetpbo::service::{self, EventStore};
use hetpbo::suite::{self, Summary};
use hetpbo::{tables, trace};
use hetpbo_core::benchmarks::{sample_anchors, BenchmarkFunction, BenchmarkSpec};
use hetpbo_core::math::sampling::stream;
use hetpbo_core::oracle::{DensityFamily, TrueUncertaintyOracle};
use hetpbo_core::rates::{self, BandwidthRule, RatePoint};
use rayon::prelude::*;

#[derive(Parser)]
#[command(name = "hetpbo", version, about = "Heteroscedastic preferential Bayesian optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured acquisition function over every seed.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seeds overriding the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Output directory overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the log-log slope of the noise estimator's MSE against the anchor count.
    RateCheck {
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, value_delimiter = ',', default_value = "50,100,200,400,800,1600")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 2.0)]
        beta: f64,
        /// Fixed bandwidth instead of the rate rule.
        #[arg(long)]
        bandwidth: Option<f64>,
        #[arg(long, default_value_t = 32)]
        probes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the per-n table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute aggregates and summary.json from a run directory.
    Aggregate { dir: PathBuf },
    /// Print anchors drawn from a benchmark's default oracle as a text table.
    SampleAnchors {
        #[arg(long)]
        benchmark: BenchmarkFunction,
        #[arg(long, default_value_t = 30)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Serve live sessions over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: std::net::SocketAddr,
        #[arg(long, default_value = "sessions")]
        data_dir: PathBuf,
    },
}

fn print_summary(s: &Summary) {
    for k in &s.kinds {
        let cum: Vec<String> = k
            .final_regret
            .iter()
            .filter(|(n, _)| n.starts_with("cum_regret"))
            .map(|(n, v)| format!("{n}={:.4}±{:.4}", v.mean, v.sd))
            .collect();
        println!(
            "{:6} complete {}/{}  best simple regret {:.4}±{:.4}  mean sigma2_true {:.4}  {}",
            k.kind.name(),
            k.complete,
            k.trials,
            k.best_simple_regret.mean,
            k.best_simple_regret.sd,
            k.mean_sigma2_true.mean,
            cum.join(" ")
        );
    }
    for c in &s.comparisons {
        println!(
            "{} vs {} on {}: {} wins, {} losses, p = {:.4}",
            c.candidate, c.baseline, c.metric, c.test.wins, c.test.losses, c.test.p_value
        );
    }
}

fn rate_check(
    dim: usize,
    n: Vec<usize>,
    trials: usize,
    rule: BandwidthRule,
    probes: usize,
    seed: u64,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let oracle = TrueUncertaintyOracle::new(DensityFamily::Gaussian, vec![0.0; dim], vec![1.0; dim], 1.0)?;
    let probe_points = rates::default_probes(&oracle, probes);
    if n.len() < 2 || n.windows(2).any(|w| w[0] >= w[1]) {
        bail!("--n must list at least two strictly increasing anchor counts");
    }
    let points = n
        .par_iter()
        .enumerate()
        .map(|(i, &n)| {
            let h = rule.bandwidth(n, dim);
            let s = rates::mse_samples(&oracle, n, h, &probe_points, trials, seed, i)?;
            Ok(RatePoint { n, bandwidth: h, mse: s.iter().sum::<f64>() / trials as f64 })
        })
        .collect::<hetpbo_core::Result<Vec<_>>>()?;
    let report = rates::report(points);
    let header = ["n", "bandwidth", "mse"].map(String::from);
    let records: Vec<Vec<String>> =
        report.points.iter().map(|p| vec![p.n.to_string(), p.bandwidth.to_string(), p.mse.to_string()]).collect();
    let csv = trace::to_csv_string(&header, &records)?;
    print!("{csv}");
    println!("slope {:.4}", report.slope);
    if let Some(path) = out {
        std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    match Cli::parse().command {
        Command::Run { config, seeds, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seeds {
                cfg.experiment.seeds = hetpbo::config::Seeds::List(s);
            }
            if let Some(o) = out {
                cfg.output.dir = o;
            }
            cfg.validate()?;
            let dir = cfg.output.dir.clone();
            let result = suite::run_suite(&cfg, Some(&dir))?;
            print_summary(&result.summary);
            println!("wrote {}", dir.display());
        }
        Command::RateCheck { dim, n, trials, alpha, beta, bandwidth, probes, seed, out } => {
            let rule = match bandwidth {
                Some(h) => BandwidthRule::Fixed(h),
                None => BandwidthRule::Rate { alpha, beta },
            };
            rate_check(dim, n, trials, rule, probes, seed, out)?;
        }
        Command::Aggregate { dir } => print_summary(&suite::aggregate_dir(&dir)?),
        Command::SampleAnchors { benchmark, n, seed } => {
            let spec = BenchmarkSpec::default_for(benchmark);
            let anchors = sample_anchors(&spec, n, &mut stream(seed, 1))?;
            print!("{}", tables::format_anchors(&anchors));
        }
        Command::Serve { addr, data_dir } => {
            let store = EventStore::open(data_dir)?;
            tokio::runtime::Runtime::new()?.block_on(service::serve(addr, store))?;
        }
    }
    Ok(())
}
