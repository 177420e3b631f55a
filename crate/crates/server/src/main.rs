use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use dualproj_core::metrics::{write_csv, write_json};
use dualproj_core::TrainConfig;
use dualproj_genomics::{generate_synthetic_dataset, write_dataset, GenomicDataset, SyntheticConfig};
use dualproj_server::bench::{self, BenchConfig};
use dualproj_server::ServerConfig;

#[derive(Parser)]
#[command(name = "dualproj", version, about = "Dual-projection analysis of hybrids and genes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run the REST service.
    Serve {
        #[arg(long, env = "BIND_ADDR", default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long, env = "DATA_DIR", default_value = "data")]
        data_dir: PathBuf,
        #[arg(long, env = "MAX_POOL", default_value_t = 50_000)]
        max_pool: usize,
    },
    /// Compare projection methods on one dataset.
    Bench {
        /// digits, three-gaussians, synthetic-genomic, a manifest or a feature CSV.
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value = "pca,tsne,sirius,ours")]
        methods: String,
        #[arg(long = "k", value_delimiter = ',', default_value = "20,30,40")]
        ks: Vec<usize>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long, default_value_t = 1000)]
        epochs: usize,
        #[arg(long, default_value_t = 64)]
        hidden: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Skip timing the linked update.
        #[arg(long)]
        no_timing: bool,
    },
    /// Write a synthetic genomic dataset.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 300)]
        hybrids: usize,
        #[arg(long, default_value_t = 600)]
        genes: usize,
        #[arg(long, default_value_t = 20)]
        regulatory: usize,
        #[arg(long, default_value_t = 2.0)]
        effect_size: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Serve {
            bind,
            data_dir,
            max_pool,
        } => tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()?
            .block_on(dualproj_server::serve(&bind, ServerConfig { data_dir, max_pool })),
        Command::Bench {
            dataset,
            methods,
            ks,
            out,
            format,
            epochs,
            hidden,
            seed,
            no_timing,
        } => {
            let (name, x) = bench::load_matrix(&dataset)?;
            let config = BenchConfig {
                methods: bench::parse_methods(&methods)?,
                ks,
                train: TrainConfig {
                    epochs,
                    hidden_dim: hidden,
                    seed,
                    ..TrainConfig::default()
                },
                time_updates: !no_timing,
                seed,
                ..BenchConfig::default()
            };
            if config.methods.is_empty() {
                bail!("no methods given");
            }
            let reports = bench::run(&name, &x, &config)?;
            let sink: Box<dyn std::io::Write> = match &out {
                Some(p) => Box::new(BufWriter::new(
                    File::create(p).with_context(|| format!("creating {}", p.display()))?,
                )),
                None => Box::new(std::io::stdout().lock()),
            };
            match format {
                Format::Csv => write_csv(sink, &reports)?,
                Format::Json => write_json(sink, &reports)?,
            }
            Ok(())
        }
        Command::Generate {
            out,
            hybrids,
            genes,
            regulatory,
            effect_size,
            seed,
        } => {
            let d = generate_synthetic_dataset(&SyntheticConfig {
                n_hybrids: hybrids,
                n_genes: genes,
                n_regulatory: regulatory,
                effect_size,
                seed,
                ..SyntheticConfig::default()
            })?;
            let manifest = write_dataset(&GenomicDataset::from(d), &out)?;
            println!("{}", manifest.display());
            Ok(())
        }
    }
}
