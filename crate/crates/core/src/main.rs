use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sparsityboost::beta::{self, BetaTable};
use sparsityboost::data::{self, BinaryDataset, Network};
use sparsityboost::eval::{self, ExperimentConfig};
use sparsityboost::scoring::{self, ParentSetScoreTable, ScoreConfig, SepsetMode};
use sparsityboost::search::{self, SearchMethod};

#[derive(Parser)]
#[command(name = "sparsityboost", version, about = "Bayesian network structure learning with sparsity boosts")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Suppress progress messages.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random logistic network.
    GenNet {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw samples from a network.
    GenData {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate -ln beta over an (N, gamma) grid.
    BetaTable {
        #[arg(long, default_value_t = 0.01)]
        eta: f64,
        /// Comma-separated sample sizes.
        #[arg(long, value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
        /// Comma-separated thresholds in nats.
        #[arg(long, value_delimiter = ',')]
        gamma_grid: Option<Vec<f64>>,
        #[arg(long, default_value_t = beta::DEFAULT_MC_SAMPLES)]
        samples: usize,
        /// Allow eta above the verified range.
        #[arg(long)]
        allow_large_eta: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the parent-set score file for a dataset.
    Score {
        #[arg(long)]
        data: PathBuf,
        /// Required unless --psi2 is 0.
        #[arg(long)]
        beta_table: Option<PathBuf>,
        #[arg(long, default_value_t = 0.01)]
        eta: f64,
        #[arg(long, default_value_t = 0.5)]
        kappa: f64,
        #[arg(long, default_value_t = 1.0)]
        psi2: f64,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Search for the best DAG under a score file.
    Learn {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value = "dp")]
        method: SearchMethod,
        #[arg(long, default_value_t = 10)]
        restarts: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Structural Hamming distance between equivalence classes.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        learned: PathBuf,
    },
    /// Run an experiment grid and write per-run and averaged CSVs.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Per-run CSV; averages go next to it with an `_averages` suffix.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn averages_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("runs");
    out.with_file_name(format!("{stem}_averages.csv"))
}

fn run(cli: Cli) -> Result<()> {
    let Global { seed, quiet } = cli.global;
    let say = |msg: String| {
        if !quiet {
            eprintln!("{msg}");
        }
    };
    match cli.command {
        Command::GenNet { n, d, out } => {
            let net = data::random_network(n, d, seed);
            net.save(&out)?;
            say(format!("wrote network with {} edges to {}", net.dag().edge_count(), out.display()));
        }
        Command::GenData { net, rows, out } => {
            let net = Network::load(&net)?;
            data::sample(&net, rows, seed).save(&out)?;
            say(format!("wrote {rows} rows to {}", out.display()));
        }
        Command::BetaTable {
            eta,
            n_grid,
            gamma_grid,
            samples,
            allow_large_eta,
            out,
        } => {
            let n_grid = n_grid.unwrap_or_else(beta::default_n_grid);
            let gamma_grid = gamma_grid.unwrap_or_else(|| beta::default_gamma_grid(eta));
            let opts = beta::TableOptions {
                allow_large_eta,
                ..Default::default()
            };
            let table = beta::build_table_with(eta, &n_grid, &gamma_grid, samples, seed, &opts)?;
            table.save(&out)?;
            say(format!(
                "wrote {}x{} table to {}",
                n_grid.len(),
                gamma_grid.len(),
                out.display()
            ));
        }
        Command::Score {
            data,
            beta_table,
            eta,
            kappa,
            psi2,
            d,
            out,
        } => {
            let dataset = BinaryDataset::load(&data)?;
            let cfg = ScoreConfig {
                eta,
                kappa,
                psi2,
                d,
                sepset_mode: SepsetMode::BoundedSize,
            };
            let table = match beta_table {
                Some(p) => {
                    let t = BetaTable::load(&p)?;
                    if (t.eta - eta).abs() > 1e-12 * eta {
                        bail!("beta table was built for eta = {}, but --eta is {eta}", t.eta);
                    }
                    t
                }
                None if psi2 == 0.0 => beta::build_table(eta, &[1], &[0.0], 1, seed)?,
                None => bail!("--beta-table is required when --psi2 is nonzero"),
            };
            let scores = scoring::build_parent_set_scores(&dataset, &table, &cfg)?;
            scores.save(&out)?;
            say(format!("wrote parent-set scores to {}", out.display()));
        }
        Command::Learn {
            scores,
            method,
            restarts,
            out,
        } => {
            let table = ParentSetScoreTable::load(&scores)?;
            let result = search::search(&table, method, restarts, seed)?;
            std::fs::write(&out, data::structure_to_json(table.names(), &result.dag)? + "\n")
                .with_context(|| format!("writing {}", out.display()))?;
            say(format!(
                "{} search: score {} with {} edges in {:.1} ms",
                result.method,
                result.score,
                result.dag.edge_count(),
                result.runtime_ms
            ));
        }
        Command::Eval { truth, learned } => {
            let (names_t, truth) = data::structure_from_json(&read(&truth)?)?;
            let (names_l, learned) = data::structure_from_json(&read(&learned)?)?;
            if names_t != names_l {
                bail!("the two graphs have different variables");
            }
            println!("{}", eval::dag_shd(&truth, &learned)?);
        }
        Command::Experiment { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let result = eval::run_experiment(&cfg)?;
            match out {
                Some(out) => {
                    let file = std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
                    eval::write_runs_csv(&result.rows, file)?;
                    let avg = averages_path(&out);
                    let file = std::fs::File::create(&avg).with_context(|| format!("creating {}", avg.display()))?;
                    eval::write_averages_csv(&result.averages, file)?;
                    say(format!("wrote {} runs to {} and averages to {}", result.rows.len(), out.display(), avg.display()));
                }
                None => eval::write_runs_csv(&result.rows, std::io::stdout().lock())?,
            }
            let failed = result.rows.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                say(format!("{failed} runs failed"));
            }
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
