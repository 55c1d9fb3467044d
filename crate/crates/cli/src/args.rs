use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use lfc_core::landmark::PartitionScheme;
use lfc_core::net::HeadVariant;

use crate::config::Overrides;

#[derive(Debug, Parser)]
#[command(name = "lfc", version, about = "Landmark feature convolution toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML file with `seed`, `[model]` and `[train]` sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Defaults to 42.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created if absent.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, value_parser = parse_head)]
    pub head: Option<HeadVariant>,
    #[arg(long, global = true, value_parser = parse_scheme)]
    pub scheme: Option<PartitionScheme>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Dataset root with `train/` and `test/`; generated from the seed when absent.
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
}

impl GlobalArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, head: self.head, scheme: self.scheme, epochs: self.epochs }
    }
}

fn parse_head(s: &str) -> Result<HeadVariant, String> {
    s.parse().map_err(|_| format!("expected one of lfc, pointwise, dilated, attention; got `{s}`"))
}

fn parse_scheme(s: &str) -> Result<PartitionScheme, String> {
    s.parse().map_err(|_| format!("expected one of p1, p2v, p2h, p4; got `{s}`"))
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the train and test splits under `<out>/train` and `<out>/test`.
    Gen,
    /// Train, writing `checkpoint.lbyl`, `config.toml` and `metrics.csv`.
    Train,
    /// Score a checkpoint on the test split.
    Eval {
        /// Defaults to `<out>/checkpoint.lbyl`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run the verification suite; exits 2 if anything fails.
    Check {
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Time and measure every operator across map sizes.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = lfc_bench::DEFAULT_SIZES)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = lfc_bench::DEFAULT_CHANNELS)]
        channels: usize,
        #[arg(long, default_value_t = lfc_bench::DEFAULT_REPEATS)]
        repeats: usize,
        /// Add a row set for the channel-parallel LFC scan.
        #[arg(long)]
        parallel: bool,
    },
    /// Landmark heatmap and boxes for one test sample.
    Visualize {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        sample: usize,
    },
}
