//! Newline-delimited episode traces.
//!
//! One JSON object per recorded step:
//! `{"t":12.5,"positions":[[x,y],…],"predictions":[[x,y]],"grid_total":250}`.
//! `predictions` holds the predictions made at that step (empty between
//! sampling instants). Step 0 is the initial state.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::controller::Genome;
use crate::error::Result;
use crate::sim::{World, WorldConfig};
use crate::vec2::Vec2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub positions: Vec<Vec2>,
    pub predictions: Vec<Vec2>,
    pub grid_total: u64,
}

impl TraceRecord {
    pub fn of(world: &World, seen_predictions: usize) -> TraceRecord {
        TraceRecord {
            t: world.clock(),
            positions: world.positions(),
            predictions: world.predictions()[seen_predictions..].to_vec(),
            grid_total: world.grid().total_visits(),
        }
    }
}

/// Runs one episode and writes every `every`-th step, plus every sampling
/// step and the final step. Returns the number of records written.
pub fn write_trace<W: Write>(
    config: &WorldConfig,
    genome: &Genome,
    seed: u64,
    every: u64,
    mut out: W,
) -> Result<usize> {
    let mut world = World::new(config.clone(), seed)?;
    let every = every.max(1);
    let steps = config.steps();
    let mut written = 0;
    let mut seen = 0;
    let mut emit = |world: &World, seen: &mut usize, out: &mut W| -> Result<()> {
        let rec = TraceRecord::of(world, *seen);
        *seen = world.predictions().len();
        serde_json::to_writer(&mut *out, &rec)?;
        out.write_all(b"\n").map_err(|e| crate::Error::io("<trace>", e))?;
        written += 1;
        Ok(())
    };
    emit(&world, &mut seen, &mut out)?;
    for s in 1..=steps {
        world.step(genome);
        if s % every == 0 || world.just_sampled() || s == steps {
            emit(&world, &mut seen, &mut out)?;
        }
    }
    out.flush().map_err(|e| crate::Error::io("<trace>", e))?;
    Ok(written)
}
