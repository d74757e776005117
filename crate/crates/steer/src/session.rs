//! Synchronous session core: one world, one active genome, a command queue
//! drained at tick boundaries. The server drives it from its own task.

use std::collections::VecDeque;
use std::sync::Arc;

use mfswarm::metrics::{self, localization_metric};
use mfswarm::{Bin, Genome, Repertoire, World, WorldConfig};

use crate::protocol::{
    Ack, ClientMessage, Command, ErrorCode, ErrorMessage, Frame, GridState, RollingMetrics, ServerMessage, Snapshot,
};

pub const DEFAULT_DECIMATION: u64 = 4;
pub const DEFAULT_RATE: f64 = 10.0;
pub const MAX_RATE: f64 = 1000.0;
pub const MAX_STEP: u64 = 100_000;
/// Predictions that feed the rolling localization metric (300 s at the
/// default sampling period).
pub const METRIC_PREDICTIONS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOptions {
    /// Broadcast a frame every `decimation` ticks; 1 is full rate.
    pub decimation: u64,
    /// Simulated seconds per wall-clock second.
    pub rate: f64,
    pub paused: bool,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions { decimation: DEFAULT_DECIMATION, rate: DEFAULT_RATE, paused: false }
    }
}

fn check_rate(rate: f64) -> Result<(), ErrorMessage> {
    if rate.is_finite() && rate > 0.0 && rate <= MAX_RATE {
        Ok(())
    } else {
        Err(ErrorMessage::new(ErrorCode::InvalidArgument, format!("rate must lie in (0, {MAX_RATE}], got {rate}")))
    }
}

/// Looks up the elite at `bin`, mapping failures to wire errors.
pub fn lookup(archive: &Repertoire, bin: Bin) -> Result<&Genome, ErrorMessage> {
    if !archive.binning().contains(bin) {
        let [a, b, c] = archive.dims();
        return Err(ErrorMessage::new(
            ErrorCode::BinOutOfRange,
            format!("bin {bin} is outside the archive grid ({a}, {b}, {c})"),
        ));
    }
    archive
        .get(bin)
        .map(|c| &c.genome)
        .ok_or_else(|| ErrorMessage::new(ErrorCode::EmptyCell, format!("empty cell {bin}")))
}

struct PendingSwitch {
    bin: Bin,
    genome: Genome,
    id: Option<String>,
}

pub struct Session {
    id: String,
    archive_name: String,
    archive: Arc<Repertoire>,
    world: World,
    genome: Genome,
    bin: Bin,
    seed: u64,
    paused: bool,
    rate: f64,
    decimation: u64,
    seq: u64,
    pending: VecDeque<PendingSwitch>,
    frame_grid: Vec<u32>,
    frame_predictions: usize,
}

impl Session {
    pub fn new(
        id: impl Into<String>,
        archive_name: impl Into<String>,
        archive: Arc<Repertoire>,
        world: WorldConfig,
        bin: Bin,
        seed: u64,
        options: SessionOptions,
    ) -> Result<Session, ErrorMessage> {
        if options.decimation == 0 {
            return Err(ErrorMessage::new(ErrorCode::InvalidArgument, "decimation must be at least 1"));
        }
        check_rate(options.rate)?;
        let genome = lookup(&archive, bin)?.clone();
        let world = World::new(world, seed).map_err(|e| ErrorMessage::new(ErrorCode::InvalidArgument, e.to_string()))?;
        let frame_grid = world.grid().counts().to_vec();
        Ok(Session {
            id: id.into(),
            archive_name: archive_name.into(),
            archive,
            world,
            genome,
            bin,
            seed,
            paused: options.paused,
            rate: options.rate,
            decimation: options.decimation,
            seq: 0,
            pending: VecDeque::new(),
            frame_grid,
            frame_predictions: 0,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn archive_name(&self) -> &str {
        &self.archive_name
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn genome(&self) -> &Genome {
        &self.genome
    }

    pub fn bin(&self) -> Bin {
        self.bin
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn paused(&self) -> bool {
        self.paused
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn decimation(&self) -> u64 {
        self.decimation
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn pending_switches(&self) -> usize {
        self.pending.len()
    }

    /// Wall-clock seconds between ticks at the current rate.
    pub fn tick_period(&self) -> f64 {
        self.world.config().dt / self.rate
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    fn ack(&mut self, command: Command, id: Option<String>, previous_bin: Option<Bin>) -> ServerMessage {
        ServerMessage::Ack(Ack {
            seq: self.next_seq(),
            command,
            id,
            t: self.world.clock(),
            steps: self.world.steps(),
            bin: self.bin,
            previous_bin,
            paused: self.paused,
            rate: self.rate,
        })
    }

    /// Applies a client command. Switches are validated now and queued for the
    /// next tick boundary, so they return no messages; the others take effect
    /// at once and return their acknowledgment (after any frames a step
    /// produced). Errors leave the session as it was.
    pub fn command(&mut self, msg: ClientMessage) -> Result<Vec<ServerMessage>, ErrorMessage> {
        match msg {
            ClientMessage::SwitchBehavior { bin, id } => {
                let genome = lookup(&self.archive, bin).map_err(|e| e.with_id(id.clone()))?.clone();
                self.pending.push_back(PendingSwitch { bin, genome, id });
                Ok(Vec::new())
            }
            ClientMessage::Pause { id } => {
                self.paused = true;
                Ok(vec![self.ack(Command::Pause, id, None)])
            }
            ClientMessage::Resume { id } => {
                self.paused = false;
                Ok(vec![self.ack(Command::Resume, id, None)])
            }
            ClientMessage::SetRate { rate, id } => {
                check_rate(rate).map_err(|e| e.with_id(id.clone()))?;
                self.rate = rate;
                Ok(vec![self.ack(Command::SetRate, id, None)])
            }
            ClientMessage::Step { count, id } => {
                if count == 0 || count > MAX_STEP {
                    return Err(ErrorMessage::new(
                        ErrorCode::InvalidArgument,
                        format!("step count must lie in 1..={MAX_STEP}, got {count}"),
                    )
                    .with_id(id));
                }
                let mut out = Vec::new();
                for _ in 0..count {
                    out.extend(self.advance());
                }
                out.push(self.ack(Command::Step, id, None));
                Ok(out)
            }
        }
    }

    /// Drains queued switches, then advances one simulation step. Returns the
    /// switch acknowledgments followed by a frame when this tick lands on the
    /// decimation clock. A paused session does nothing.
    pub fn tick(&mut self) -> Vec<ServerMessage> {
        if self.paused {
            return Vec::new();
        }
        self.advance()
    }

    fn advance(&mut self) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        while let Some(p) = self.pending.pop_front() {
            let previous = self.bin;
            self.genome = p.genome;
            self.bin = p.bin;
            out.push(self.ack(Command::SwitchBehavior, p.id, Some(previous)));
        }
        self.world.step(&self.genome);
        if self.world.steps().is_multiple_of(self.decimation) {
            out.push(ServerMessage::Frame(self.frame()));
        }
        out
    }

    fn rolling_metrics(&self) -> RollingMetrics {
        let preds = self.world.predictions();
        let recent = &preds[preds.len().saturating_sub(METRIC_PREDICTIONS)..];
        RollingMetrics {
            exploration: metrics::exploration_metric(self.world.grid()),
            unique_cells: self.world.samples().last().map_or(0, |s| s.unique_cells),
            network: self.world.network_now(),
            localization: localization_metric(recent, self.world.config().variance_ceiling()),
        }
    }

    fn links(&self) -> Vec<(usize, usize)> {
        metrics::links(&self.world.positions(), self.world.config().comm_radius)
    }

    fn frame(&mut self) -> Frame {
        let counts = self.world.grid().counts();
        let grid_delta: Vec<(usize, u32)> = counts
            .iter()
            .zip(&self.frame_grid)
            .enumerate()
            .filter(|(_, (now, before))| now != before)
            .map(|(i, (&now, _))| (i, now))
            .collect();
        self.frame_grid.copy_from_slice(counts);
        let seq = self.next_seq();
        let preds = self.world.predictions();
        let new_predictions = preds[self.frame_predictions..].to_vec();
        self.frame_predictions = preds.len();
        Frame {
            seq,
            t: self.world.clock(),
            steps: self.world.steps(),
            bin: self.bin,
            positions: self.world.positions(),
            links: self.links(),
            grid_delta,
            prediction: preds.last().copied(),
            new_predictions,
            metrics: self.rolling_metrics(),
        }
    }

    /// Full state for a subscriber joining now. Together with the frames that
    /// follow it (all with larger `seq`) it reproduces the live grid.
    ///
    /// Frame deltas are taken against the grid at the previous frame, so the
    /// snapshot reports that grid, not the live one: any visits made since
    /// arrive in the next frame's delta.
    pub fn snapshot(&self) -> Snapshot {
        let config = self.world.config();
        let (cols, rows) = (self.world.grid().cols(), self.world.grid().rows());
        Snapshot {
            session: self.id.clone(),
            archive: self.archive_name.clone(),
            seq: self.seq,
            t: self.world.clock(),
            steps: self.world.steps(),
            bin: self.bin,
            paused: self.paused,
            rate: self.rate,
            decimation: self.decimation,
            dt: config.dt,
            arena: config.arena,
            cell_size: config.cell_size,
            comm_radius: config.comm_radius,
            emitter: self.world.emitter(),
            positions: self.world.positions(),
            velocities: self.world.agents().iter().map(|a| a.vel).collect(),
            links: self.links(),
            grid: GridState { cols, rows, counts: self.frame_grid.clone() },
            predictions: self.world.predictions()[..self.frame_predictions].to_vec(),
            metrics: self.rolling_metrics(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mfswarm::archive::ArchiveCell;
    use mfswarm::metrics::{BinningConfig, RawDescriptor};
    use mfswarm::seeding::rng_from_seed;
    use mfswarm::{InputMask, ParamBounds};

    fn archive() -> Arc<Repertoire> {
        let world = WorldConfig::default();
        let mut rep = Repertoire::new(BinningConfig::for_arena(&world.arena), "test", 0);
        for (n, bin) in [Bin::new(0, 10, 5), Bin::new(1, 40, 8)].into_iter().enumerate() {
            let genome = Genome::random(&ParamBounds::default(), InputMask::ALL, &mut rng_from_seed(n as u64 + 3));
            rep.insert(ArchiveCell { bins: bin, raw: RawDescriptor::default(), fitness: 1.0, evals: 1, genome, seeds: vec![] });
        }
        Arc::new(rep)
    }

    fn session(options: SessionOptions) -> Session {
        Session::new("s", "a", archive(), WorldConfig::default(), Bin::new(0, 10, 5), 9, options).unwrap()
    }

    #[test]
    fn frames_on_decimation_clock() {
        let mut s = session(SessionOptions::default());
        let mut frames = Vec::new();
        for _ in 0..12 {
            for m in s.tick() {
                if let ServerMessage::Frame(f) = m {
                    frames.push(f.steps);
                }
            }
        }
        assert_eq!(frames, vec![4, 8, 12]);
        let mut full = session(SessionOptions { decimation: 1, ..Default::default() });
        assert!((0..5).all(|_| full.tick().len() == 1));
    }

    #[test]
    fn switch_is_queued_until_tick() {
        let mut s = session(SessionOptions { decimation: 1, ..Default::default() });
        s.tick();
        let out = s.command(ClientMessage::SwitchBehavior { bin: Bin::new(1, 40, 8), id: Some("x".into()) }).unwrap();
        assert!(out.is_empty());
        assert_eq!(s.bin(), Bin::new(0, 10, 5));
        assert_eq!(s.pending_switches(), 1);
        let out = s.tick();
        let ServerMessage::Ack(ack) = &out[0] else { panic!("{out:?}") };
        assert_eq!(ack.command, Command::SwitchBehavior);
        assert_eq!(ack.previous_bin, Some(Bin::new(0, 10, 5)));
        assert_eq!(ack.bin, Bin::new(1, 40, 8));
        assert_eq!(ack.steps, 1);
        assert_eq!(ack.id.as_deref(), Some("x"));
        assert!(matches!(out[1], ServerMessage::Frame(_)));
        assert_eq!(s.bin(), Bin::new(1, 40, 8));
    }

    #[test]
    fn bad_commands_leave_state() {
        let mut s = session(SessionOptions::default());
        let e = s.command(ClientMessage::SwitchBehavior { bin: Bin::new(5, 5, 5), id: None }).unwrap_err();
        assert_eq!(e.code, ErrorCode::EmptyCell);
        assert_eq!(e.message, "empty cell (5, 5, 5)");
        let e = s.command(ClientMessage::SwitchBehavior { bin: Bin::new(0, 100, 0), id: None }).unwrap_err();
        assert_eq!(e.code, ErrorCode::BinOutOfRange);
        let e = s.command(ClientMessage::SetRate { rate: 0.0, id: None }).unwrap_err();
        assert_eq!(e.code, ErrorCode::InvalidArgument);
        assert_eq!(s.pending_switches(), 0);
        assert_eq!(s.bin(), Bin::new(0, 10, 5));
        assert_eq!(s.rate(), DEFAULT_RATE);
        assert_eq!(s.seq(), 0);
        s.tick();
        assert_eq!(s.world().steps(), 1);
    }

    #[test]
    fn pause_stops_the_clock() {
        let mut s = session(SessionOptions::default());
        s.tick();
        s.command(ClientMessage::Pause { id: None }).unwrap();
        for _ in 0..5 {
            assert!(s.tick().is_empty());
        }
        assert_eq!(s.world().steps(), 1);
        s.command(ClientMessage::Resume { id: None }).unwrap();
        s.tick();
        assert_eq!(s.world().steps(), 2);
    }

    #[test]
    fn start_errors() {
        let a = archive();
        let w = WorldConfig::default();
        let err = |bin, o| Session::new("s", "a", a.clone(), w.clone(), bin, 0, o).err().unwrap().code;
        assert_eq!(err(Bin::new(2, 2, 2), SessionOptions::default()), ErrorCode::EmptyCell);
        assert_eq!(err(Bin::new(0, 10, 5), SessionOptions { decimation: 0, ..Default::default() }), ErrorCode::InvalidArgument);
        assert_eq!(err(Bin::new(0, 10, 5), SessionOptions { rate: f64::NAN, ..Default::default() }), ErrorCode::InvalidArgument);
    }
}
