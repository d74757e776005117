//! Fixed-step kinematic swarm simulation.
//!
//! Agents are point masses with velocity and acceleration limits in a
//! rectangular arena. Every step all agents sense the pre-step world, the
//! shared genome turns each agent's inputs into a velocity setpoint, and the
//! agents move. On a fixed sampling clock every agent takes one RSS reading,
//! the swarm produces one emitter prediction, and network coverage is sampled.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{self, Genome, InputKind, SensedInput, EMITTER_SLOT, LEAST_VISITED_SLOT, N_INPUTS, N_NEIGHBORS};
use crate::error::{Error, Result};
use crate::geolocation::{self, PathLossModel};
use crate::metrics::{self, RawDescriptor};
use crate::seeding::{rng_from_seed, SimRng};
use crate::vec2::Vec2;

/// Axis-aligned rectangle `[origin, origin + (width, height)]`, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    #[serde(default)]
    pub origin: Vec2,
    pub width: f64,
    pub height: f64,
}

impl Arena {
    pub fn square(side: f64) -> Self {
        Arena { origin: Vec2::ZERO, width: side, height: side }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn center(&self) -> Vec2 {
        self.origin + Vec2::new(self.width / 2.0, self.height / 2.0)
    }

    pub fn max(&self) -> Vec2 {
        self.origin + Vec2::new(self.width, self.height)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let hi = self.max();
        p.x >= self.origin.x && p.x <= hi.x && p.y >= self.origin.y && p.y <= hi.y
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec2 {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        self.origin + Vec2::new(u * self.width, v * self.height)
    }

    /// Columns and rows of a grid of `cell_size` cells covering the arena.
    pub fn grid_shape(&self, cell_size: f64) -> (usize, usize) {
        let cols = (self.width / cell_size - 1e-9).ceil().max(1.0) as usize;
        let rows = (self.height / cell_size - 1e-9).ceil().max(1.0) as usize;
        (cols, rows)
    }

    pub fn cell_center(&self, col: usize, row: usize, cell_size: f64) -> Vec2 {
        self.origin + Vec2::new((col as f64 + 0.5) * cell_size, (row as f64 + 0.5) * cell_size)
    }

    /// Cell holding `p`; points on the far edges belong to the last cell.
    pub fn cell_of(&self, p: Vec2, cell_size: f64) -> (usize, usize) {
        let (cols, rows) = self.grid_shape(cell_size);
        let rel = p - self.origin;
        let col = ((rel.x / cell_size).floor().max(0.0) as usize).min(cols - 1);
        let row = ((rel.y / cell_size).floor().max(0.0) as usize).min(rows - 1);
        (col, row)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub arena: Arena,
    pub n_agents: usize,
    /// Integration step, seconds.
    pub dt: f64,
    /// Episode length, seconds.
    pub duration: f64,
    /// Visitation and coverage cell edge, meters.
    pub cell_size: f64,
    pub comm_radius: f64,
    pub v_max: f64,
    pub a_max: f64,
    /// Edge of the square, centered in the arena, where agents launch.
    pub launch_size: f64,
    /// Seconds between emitter predictions and network samples.
    pub sample_period: f64,
    pub path_loss: PathLossModel,
    /// Candidate locations drawn per prediction.
    pub candidates: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            arena: Arena::square(1000.0),
            n_agents: 10,
            dt: 0.5,
            duration: 900.0,
            cell_size: 50.0,
            comm_radius: 200.0,
            v_max: 10.0,
            a_max: 1.0,
            launch_size: 200.0,
            sample_period: 30.0,
            path_loss: PathLossModel::default(),
            candidates: 60,
        }
    }
}

fn whole_steps(span: f64, dt: f64, what: &str) -> Result<u64> {
    let n = span / dt;
    let rounded = n.round();
    if (n - rounded).abs() > 1e-6 * rounded.max(1.0) {
        return Err(Error::Config(format!("{what} ({span} s) must be a whole number of dt ({dt} s) steps")));
    }
    Ok(rounded as u64)
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive(self.arena.width, "arena width")?;
        positive(self.arena.height, "arena height")?;
        positive(self.dt, "dt")?;
        positive(self.cell_size, "cell_size")?;
        positive(self.comm_radius, "comm_radius")?;
        positive(self.v_max, "v_max")?;
        positive(self.a_max, "a_max")?;
        positive(self.launch_size, "launch_size")?;
        positive(self.sample_period, "sample_period")?;
        if self.n_agents < N_NEIGHBORS + 1 {
            return Err(Error::Config(format!(
                "n_agents must be at least {} so every agent has {N_NEIGHBORS} neighbors, got {}",
                N_NEIGHBORS + 1,
                self.n_agents
            )));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::Config(format!("duration must be non-negative, got {}", self.duration)));
        }
        if self.candidates == 0 {
            return Err(Error::Config("candidates must be at least 1".into()));
        }
        whole_steps(self.duration, self.dt, "duration")?;
        let per_sample = whole_steps(self.sample_period, self.dt, "sample_period")?;
        if per_sample == 0 {
            return Err(Error::Config("sample_period must span at least one step".into()));
        }
        self.path_loss.validate()
    }

    pub fn steps(&self) -> u64 {
        (self.duration / self.dt).round() as u64
    }

    pub fn steps_per_sample(&self) -> u64 {
        (self.sample_period / self.dt).round() as u64
    }

    pub fn variance_ceiling(&self) -> f64 {
        metrics::uniform_variance_ceiling(&self.arena)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub pos: Vec2,
    pub vel: Vec2,
}

/// Per-cell visitation counts, plus the set of cells touched since the
/// current window began.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitGrid {
    cols: usize,
    rows: usize,
    counts: Vec<u32>,
    total_visits: u64,
    stamps: Vec<u32>,
    window: u32,
    window_unique: usize,
}

impl VisitGrid {
    pub fn new(cols: usize, rows: usize) -> Self {
        VisitGrid {
            cols,
            rows,
            counts: vec![0; cols * rows],
            total_visits: 0,
            stamps: vec![0; cols * rows],
            window: 1,
            window_unique: 0,
        }
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Row-major counts, `row * cols + col`.
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn count(&self, col: usize, row: usize) -> u32 {
        self.counts[row * self.cols + col]
    }

    pub fn total_visits(&self) -> u64 {
        self.total_visits
    }

    /// Distinct cells visited since the last [`VisitGrid::begin_window`].
    pub fn unique_in_window(&self) -> usize {
        self.window_unique
    }

    pub fn begin_window(&mut self) {
        self.window += 1;
        self.window_unique = 0;
    }

    pub fn visit(&mut self, col: usize, row: usize) {
        self.add(row * self.cols + col, 1);
    }

    pub fn add(&mut self, index: usize, visits: u32) {
        self.counts[index] += visits;
        self.total_visits += u64::from(visits);
        if self.stamps[index] != self.window {
            self.stamps[index] = self.window;
            self.window_unique += 1;
        }
    }
}

/// Metrics taken on the sampling clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// Simulated time, seconds.
    pub t: f64,
    pub total_visits: u64,
    /// Distinct cells visited during the window that ends here.
    pub unique_cells: usize,
    /// Covered fraction at this instant.
    pub network: f64,
    /// Prediction made at this sample.
    pub prediction: Vec2,
}

#[derive(Debug, Clone)]
pub struct World {
    config: WorldConfig,
    agents: Vec<AgentState>,
    grid: VisitGrid,
    emitter: Vec2,
    predictions: Vec<Vec2>,
    prediction_sum: Vec2,
    samples: Vec<SampleRecord>,
    steps: u64,
    steps_per_sample: u64,
    rng: SimRng,
    commands: Vec<Vec2>,
    neighbor_scratch: Vec<(f64, usize)>,
    setpoints: Vec<Vec2>,
}

impl World {
    /// Emitter uniform over the arena, agents uniform over the launch square,
    /// all at rest.
    pub fn new(config: WorldConfig, seed: u64) -> Result<World> {
        config.validate()?;
        let mut rng = rng_from_seed(seed);
        let emitter = config.arena.sample_uniform(&mut rng);
        let launch = Arena {
            origin: config.arena.center() - Vec2::new(config.launch_size / 2.0, config.launch_size / 2.0),
            width: config.launch_size,
            height: config.launch_size,
        };
        let agents = (0..config.n_agents)
            .map(|_| {
                let p = launch.sample_uniform(&mut rng);
                AgentState { pos: clamp_into(&config.arena, p), vel: Vec2::ZERO }
            })
            .collect();
        Ok(World::from_parts(config, agents, emitter, rng))
    }

    /// A world with explicit agent and emitter placement.
    pub fn with_agents(config: WorldConfig, positions: &[Vec2], emitter: Vec2, seed: u64) -> Result<World> {
        config.validate()?;
        if positions.len() != config.n_agents {
            return Err(Error::Config(format!(
                "expected {} agent positions, got {}",
                config.n_agents,
                positions.len()
            )));
        }
        let agents = positions.iter().map(|&pos| AgentState { pos, vel: Vec2::ZERO }).collect();
        Ok(World::from_parts(config, agents, emitter, rng_from_seed(seed)))
    }

    fn from_parts(config: WorldConfig, agents: Vec<AgentState>, emitter: Vec2, rng: SimRng) -> World {
        let (cols, rows) = config.arena.grid_shape(config.cell_size);
        let n = config.n_agents;
        World {
            steps_per_sample: config.steps_per_sample(),
            grid: VisitGrid::new(cols, rows),
            agents,
            emitter,
            predictions: Vec::new(),
            prediction_sum: Vec2::ZERO,
            samples: Vec::new(),
            steps: 0,
            rng,
            commands: vec![Vec2::ZERO; n],
            neighbor_scratch: Vec::with_capacity(n),
            setpoints: vec![Vec2::ZERO; n],
            config,
        }
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.agents.iter().map(|a| a.pos).collect()
    }

    pub fn grid(&self) -> &VisitGrid {
        &self.grid
    }

    pub fn emitter(&self) -> Vec2 {
        self.emitter
    }

    pub fn predictions(&self) -> &[Vec2] {
        &self.predictions
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Simulated seconds, `steps · dt`.
    pub fn clock(&self) -> f64 {
        self.steps as f64 * self.config.dt
    }

    /// Accelerations commanded during the last step.
    pub fn last_commands(&self) -> &[Vec2] {
        &self.commands
    }

    /// Running mean of all predictions so far.
    pub fn mean_prediction(&self) -> Option<Vec2> {
        if self.predictions.is_empty() {
            None
        } else {
            Some(self.prediction_sum / self.predictions.len() as f64)
        }
    }

    /// The eight inputs of agent `index`, in canonical order.
    pub fn sense(&mut self, index: usize) -> Result<[SensedInput; N_INPUTS]> {
        if index >= self.agents.len() {
            return Err(Error::AgentIndex { index, n_agents: self.agents.len() });
        }
        Ok(self.sense_unchecked(index))
    }

    fn sense_unchecked(&mut self, index: usize) -> [SensedInput; N_INPUTS] {
        let me = self.agents[index].pos;
        let mut deltas = [Vec2::ZERO; N_INPUTS];

        let scratch = &mut self.neighbor_scratch;
        scratch.clear();
        scratch.extend(
            self.agents
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != index)
                .map(|(j, a)| (a.pos.dist_sq(me), j)),
        );
        scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (slot, &(_, j)) in scratch.iter().take(N_NEIGHBORS).enumerate() {
            deltas[slot] = self.agents[j].pos - me;
        }

        deltas[LEAST_VISITED_SLOT] = self.least_visited_direction(me);
        if let Some(mean) = self.mean_prediction() {
            deltas[EMITTER_SLOT] = mean - me;
        }
        std::array::from_fn(|s| SensedInput::new(InputKind::canonical(s), deltas[s]))
    }

    /// Unit vector toward the center of the least visited Moore neighbor of
    /// the agent's cell. Ties are broken with a draw from the world rng.
    fn least_visited_direction(&mut self, pos: Vec2) -> Vec2 {
        let cell = self.config.cell_size;
        let (col, row) = self.config.arena.cell_of(pos, cell);
        let (cols, rows) = (self.grid.cols() as i64, self.grid.rows() as i64);
        let mut best = u32::MAX;
        let mut ties = [(0usize, 0usize); 8];
        let mut n_ties = 0;
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let (c, r) = (col as i64 + dc, row as i64 + dr);
                if c < 0 || r < 0 || c >= cols || r >= rows {
                    continue;
                }
                let count = self.grid.count(c as usize, r as usize);
                if count < best {
                    best = count;
                    n_ties = 0;
                }
                if count == best {
                    ties[n_ties] = (c as usize, r as usize);
                    n_ties += 1;
                }
            }
        }
        if n_ties == 0 {
            return Vec2::ZERO;
        }
        let pick = if n_ties == 1 { 0 } else { self.rng.random_range(0..n_ties) };
        let (c, r) = ties[pick];
        (self.config.arena.cell_center(c, r, cell) - pos).unit_or_zero()
    }

    /// Advances one `dt` with every agent running `genome`.
    pub fn step(&mut self, genome: &Genome) {
        for i in 0..self.agents.len() {
            let inputs = self.sense_unchecked(i);
            self.setpoints[i] = controller::setpoint(&inputs, genome);
        }
        let WorldConfig { dt, a_max, v_max, arena, cell_size, .. } = self.config;
        for (i, agent) in self.agents.iter_mut().enumerate() {
            self.commands[i] = integrate(agent, self.setpoints[i], dt, a_max, v_max, &arena);
            let (c, r) = arena.cell_of(agent.pos, cell_size);
            self.grid.visit(c, r);
        }
        self.steps += 1;
        if self.steps.is_multiple_of(self.steps_per_sample) {
            self.take_sample();
        }
    }

    /// True if the last step ended on the sampling clock.
    pub fn just_sampled(&self) -> bool {
        self.steps > 0 && self.steps.is_multiple_of(self.steps_per_sample)
    }

    fn take_sample(&mut self) {
        let samples = geolocation::measure(
            &self.config.path_loss,
            self.emitter,
            self.agents.iter().map(|a| a.pos),
            &mut self.rng,
        );
        let prediction = geolocation::predict(
            &samples,
            self.config.path_loss.alpha,
            &self.config.arena,
            self.config.candidates,
            &mut self.rng,
        )
        .expect("at least seven agents and one candidate");
        self.predictions.push(prediction);
        self.prediction_sum += prediction;
        let network = self.network_now();
        self.samples.push(SampleRecord {
            t: self.clock(),
            total_visits: self.grid.total_visits(),
            unique_cells: self.grid.unique_in_window(),
            network,
            prediction,
        });
        self.grid.begin_window();
    }

    pub fn network_now(&self) -> f64 {
        let positions = self.positions();
        metrics::network_metric(&positions, self.config.comm_radius, &self.config.arena, self.config.cell_size)
    }

    /// Raw characteristics of the run so far. With no samples yet, network
    /// coverage is read from the current positions.
    pub fn descriptor(&self) -> RawDescriptor {
        let network = if self.samples.is_empty() {
            self.network_now()
        } else {
            self.samples.iter().map(|s| s.network).sum::<f64>() / self.samples.len() as f64
        };
        RawDescriptor {
            exploration: metrics::exploration_metric(&self.grid),
            network,
            localization: metrics::localization_metric(&self.predictions, self.config.variance_ceiling()),
        }
    }
}

/// Moves one agent toward velocity setpoint `v_sp` for one step under the
/// acceleration and speed limits, then applies the boundary rule: a
/// coordinate leaving the arena is clamped and its velocity component zeroed.
/// Returns the commanded acceleration.
pub fn integrate(agent: &mut AgentState, v_sp: Vec2, dt: f64, a_max: f64, v_max: f64, arena: &Arena) -> Vec2 {
    let accel = ((v_sp - agent.vel) / dt).clamp_norm(a_max);
    agent.vel = (agent.vel + accel * dt).clamp_norm(v_max);
    agent.pos += agent.vel * dt;
    let hi = arena.max();
    if agent.pos.x < arena.origin.x {
        agent.pos.x = arena.origin.x;
        agent.vel.x = 0.0;
    } else if agent.pos.x > hi.x {
        agent.pos.x = hi.x;
        agent.vel.x = 0.0;
    }
    if agent.pos.y < arena.origin.y {
        agent.pos.y = arena.origin.y;
        agent.vel.y = 0.0;
    } else if agent.pos.y > hi.y {
        agent.pos.y = hi.y;
        agent.vel.y = 0.0;
    }
    accel
}

fn clamp_into(arena: &Arena, p: Vec2) -> Vec2 {
    let hi = arena.max();
    Vec2::new(p.x.clamp(arena.origin.x, hi.x), p.y.clamp(arena.origin.y, hi.y))
}

/// Final world state plus the sampled time series of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub agents: Vec<AgentState>,
    pub emitter: Vec2,
    pub predictions: Vec<Vec2>,
    pub samples: Vec<SampleRecord>,
    pub total_visits: u64,
    pub clock: f64,
    pub descriptor: RawDescriptor,
}

/// A fixed-length run whose controller can be swapped between steps.
#[derive(Debug, Clone)]
pub struct Episode {
    world: World,
    genome: Genome,
    seed: u64,
}

impl Episode {
    pub fn new(config: WorldConfig, genome: Genome, seed: u64) -> Result<Episode> {
        Ok(Episode { world: World::new(config, seed)?, genome, seed })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn genome(&self) -> &Genome {
        &self.genome
    }

    /// Swap the controller; the world state carries over untouched.
    pub fn switch_genome(&mut self, genome: Genome) {
        self.genome = genome;
    }

    pub fn step(&mut self) {
        self.world.step(&self.genome);
    }

    pub fn run_steps(&mut self, steps: u64) {
        for _ in 0..steps {
            self.step();
        }
    }

    pub fn record(&self) -> EpisodeRecord {
        EpisodeRecord {
            seed: self.seed,
            agents: self.world.agents.clone(),
            emitter: self.world.emitter,
            predictions: self.world.predictions.clone(),
            samples: self.world.samples.clone(),
            total_visits: self.world.grid.total_visits(),
            clock: self.world.clock(),
            descriptor: self.world.descriptor(),
        }
    }
}

/// Runs `genome` for the configured duration from the world seeded by `seed`.
pub fn run_episode(config: &WorldConfig, genome: &Genome, seed: u64) -> Result<EpisodeRecord> {
    let mut episode = Episode::new(config.clone(), genome.clone(), seed)?;
    episode.run_steps(config.steps());
    Ok(episode.record())
}

/// Like [`run_episode`] but only returns the raw characteristics.
pub fn episode_descriptor(config: &WorldConfig, genome: &Genome, seed: u64) -> Result<RawDescriptor> {
    let mut world = World::new(config.clone(), seed)?;
    for _ in 0..config.steps() {
        world.step(genome);
    }
    Ok(world.descriptor())
}
