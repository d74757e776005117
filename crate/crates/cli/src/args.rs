use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mfswarm::{Bin, ExperimentConfig, InputMask};

#[derive(Debug, Parser)]
#[command(name = "mfswarm", version, about = "Evolve, analyze and steer repertoires of swarm behaviors")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (overrides the config file; default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// TOML experiment config; missing fields take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct WorldArgs {
    /// Episode length, s.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub agents: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct EvolutionArgs {
    /// Pseudo-generations, the random initial batch included.
    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Episodes per individual.
    #[arg(long)]
    pub evals: Option<usize>,
    /// Enabled inputs, eight 0/1 digits, input 1 first.
    #[arg(long, value_parser = parse_mask)]
    pub mask: Option<InputMask>,
    /// Save a snapshot every N generations.
    #[arg(long)]
    pub snapshot_every: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Print the effective configuration as TOML.
    Config {
        #[command(flatten)]
        world: WorldArgs,
        #[command(flatten)]
        evolution: EvolutionArgs,
    },
    /// Evolve a repertoire and write it as an archive file.
    Evolve {
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        world: WorldArgs,
        #[command(flatten)]
        evolution: EvolutionArgs,
    },
    /// Re-run every elite on fresh seeds and re-bin it.
    Reevaluate {
        #[arg(long)]
        archive: PathBuf,
        /// Re-binned archive.
        #[arg(long, short)]
        out: PathBuf,
        /// Per-cell CSV report.
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        evals: Option<usize>,
        #[command(flatten)]
        world: WorldArgs,
    },
    /// Evolve with each input switched off and compare archive sizes.
    Ablate {
        #[arg(long)]
        out_dir: PathBuf,
        /// Runs per mask.
        #[arg(long)]
        runs: Option<usize>,
        /// Masks to compare, the first is the reference. Default: all inputs,
        /// then each single input off.
        #[arg(long, value_delimiter = ',', value_parser = parse_mask)]
        masks: Vec<InputMask>,
        #[command(flatten)]
        world: WorldArgs,
        #[command(flatten)]
        evolution: EvolutionArgs,
    },
    /// Switch from one elite to another mid-run and compare against the
    /// target run from scratch.
    Transition {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long, value_parser = parse_bin)]
        from: Bin,
        #[arg(long, value_parser = parse_bin)]
        to: Bin,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        repetitions: Option<usize>,
        /// Trailing comparison window, s.
        #[arg(long)]
        window: Option<f64>,
        #[command(flatten)]
        world: WorldArgs,
    },
    /// Spread of one elite's characteristics over repeated episodes.
    Ellipse {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long, value_parser = parse_bin)]
        bin: Bin,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        repetitions: Option<usize>,
        /// Also store the report in this uncertainty sidecar (one line per
        /// bin), for the steering service.
        #[arg(long)]
        sidecar: Option<PathBuf>,
        #[command(flatten)]
        world: WorldArgs,
    },
    /// Mean controller parameters per archive slice.
    Heatmap {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Per-bin best of several archives.
    Merge {
        #[arg(required = true, num_args = 1..)]
        archives: Vec<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run one elite and export the episode trace.
    Replay {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long, value_parser = parse_bin)]
        bin: Bin,
        #[arg(long, short)]
        out: PathBuf,
        /// Record every N-th step (sampling steps are always recorded).
        #[arg(long, default_value_t = 1)]
        every: u64,
        #[command(flatten)]
        world: WorldArgs,
    },
    /// Start the steering service.
    Serve {
        /// Directory of archive files; each `NAME.jsonl` is served as NAME.
        #[arg(long)]
        archives: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Broadcast a frame every N ticks.
        #[arg(long)]
        decimation: Option<u64>,
        /// Broadcast every tick.
        #[arg(long, conflicts_with = "decimation")]
        full_rate: bool,
        /// Default simulated seconds per wall-clock second.
        #[arg(long)]
        rate: Option<f64>,
        #[command(flatten)]
        world: WorldArgs,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Axis {
    Exploration,
    Network,
    Localization,
}

impl Axis {
    pub fn index(self) -> usize {
        self as usize
    }
}

pub fn parse_bin(s: &str) -> Result<Bin, String> {
    let trimmed = s.trim().trim_start_matches('(').trim_end_matches(')');
    let parts: Vec<&str> = trimmed.split(',').map(str::trim).collect();
    let bad = || format!("expected a bin as i,j,k, got {s:?}");
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut out = [0usize; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.parse().map_err(|_| bad())?;
    }
    Ok(Bin(out))
}

pub fn parse_mask(s: &str) -> Result<InputMask, String> {
    s.parse().map_err(|e: mfswarm::Error| e.to_string())
}

impl WorldArgs {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(d) = self.duration {
            cfg.world.duration = d;
        }
        if let Some(n) = self.agents {
            cfg.world.n_agents = n;
        }
    }
}

impl EvolutionArgs {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        let e = &mut cfg.evolution;
        if let Some(v) = self.generations {
            e.generations = v;
        }
        if let Some(v) = self.batch {
            e.batch = v;
        }
        if let Some(v) = self.evals {
            e.evals_per_individual = v;
        }
        if let Some(v) = self.mask {
            e.mask = v;
        }
        if let Some(v) = self.snapshot_every {
            e.snapshot_every = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_parse() {
        assert_eq!(parse_bin("1,2,3").unwrap(), Bin::new(1, 2, 3));
        assert_eq!(parse_bin("(4, 5, 6)").unwrap(), Bin::new(4, 5, 6));
        assert!(parse_bin("1,2").is_err());
        assert!(parse_bin("1,x,3").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
