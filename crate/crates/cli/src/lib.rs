//! Command-line front end: dataset generation, training, evaluation, the
//! verification suite, scaling benchmarks and landmark visualization.

pub mod args;
pub mod checks;
pub mod commands;
pub mod config;
mod error;

pub use error::{CliError, Result};

use args::{Cli, Command};
use config::RunConfig;

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Command::Check { inject_fault } = &cli.command {
        return commands::cmd_check(inject_fault.as_deref());
    }
    let cfg = RunConfig::resolve(g.config.as_deref(), &g.overrides(), g.out.clone(), g.dataset.clone())?;
    match &cli.command {
        Command::Gen => commands::cmd_gen(&cfg),
        Command::Train => commands::cmd_train(&cfg).map(drop),
        Command::Eval { checkpoint } => commands::cmd_eval(&cfg, checkpoint.as_ref()).map(drop),
        Command::Bench { sizes, channels, repeats, parallel } => {
            commands::cmd_bench(&cfg, sizes, *channels, *repeats, *parallel)
        }
        Command::Visualize { checkpoint, sample } => {
            commands::cmd_visualize(&cfg, checkpoint.as_ref(), *sample).map(drop)
        }
        Command::Check { .. } => unreachable!("handled above"),
    }
}
