//! Multi-function swarm behavior lab.
//!
//! A homogeneous swarm of point-mass UAV agents is driven by an eight-input
//! Sigmoid-Well controller. Episodes score three simultaneous tasks (area
//! exploration, communication coverage and PDOA emitter geolocation), and
//! MAP-Elites illuminates a 10×100×10 repertoire of controllers over those
//! scores. The [`analysis`] module holds the studies run on finished
//! repertoires: re-evaluation under noise, behavior transitions, uncertainty
//! ellipses, input ablation and parameter heatmaps.

pub mod analysis;
pub mod archive;
pub mod config;
pub mod controller;
pub mod error;
pub mod evolution;
pub mod geolocation;
pub mod metrics;
pub mod seeding;
pub mod sim;
pub mod stats;
pub mod trace;
pub mod vec2;

pub use archive::{ArchiveCell, Bin, Repertoire};
pub use config::ExperimentConfig;
pub use controller::{Genome, InputMask, ParamBounds, ParamGroup};
pub use error::{Error, Result};
pub use evolution::{EvolutionConfig, Evaluator, SwarmEvaluator};
pub use metrics::{BehaviorDescriptor, BinningConfig, RawDescriptor};
pub use sim::{Episode, EpisodeRecord, World, WorldConfig};
pub use vec2::Vec2;
