#![allow(dead_code)]

use std::sync::Arc;

use mfswarm::archive::ArchiveCell;
use mfswarm::metrics::BinningConfig;
use mfswarm::seeding::rng_from_seed;
use mfswarm::sim::episode_descriptor;
use mfswarm::{Bin, Genome, InputMask, ParamBounds, Repertoire, WorldConfig};

pub const A: Bin = Bin([0, 12, 8]);
pub const B: Bin = Bin([1, 35, 9]);
pub const EMPTY: Bin = Bin([4, 4, 4]);

pub fn genome(seed: u64) -> Genome {
    Genome::random(&ParamBounds::default(), InputMask::ALL, &mut rng_from_seed(seed))
}

/// Two elites at fixed bins; the bins are labels only.
pub fn archive() -> Repertoire {
    let world = WorldConfig::default();
    let mut rep = Repertoire::new(BinningConfig::for_arena(&world.arena), "steer-test", 5);
    for (bin, seed) in [(A, 11), (B, 12)] {
        let genome = genome(seed);
        let raw = episode_descriptor(&WorldConfig { duration: 30.0, ..world.clone() }, &genome, seed).unwrap();
        let fitness = mfswarm::controller::fitness(&genome);
        rep.insert(ArchiveCell { bins: bin, raw, fitness, evals: 1, genome, seeds: vec![seed] });
    }
    rep
}

pub fn shared_archive() -> Arc<Repertoire> {
    Arc::new(archive())
}
