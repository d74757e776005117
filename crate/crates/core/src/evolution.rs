//! MAP-Elites over Sigmoid-Well genomes.
//!
//! Generation 0 fills the archive with `batch` uniform-random genomes. Every
//! later pseudo-generation picks `batch` parents uniformly from the occupied
//! cells, mutates one parameter of each, evaluates the children (in parallel
//! when enabled) and inserts them in individual order.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::archive::{ArchiveCell, Repertoire};
use crate::controller::{self, Genome, InputMask, ParamBounds, N_PARAMS};
use crate::error::{Error, Result};
use crate::metrics::{BinningConfig, RawDescriptor};
use crate::seeding::{derive_seed, rng_from_seed, TAG_EVAL, TAG_INIT, TAG_MUTATE, TAG_PARENTS};
use crate::sim::{self, WorldConfig};

/// How `mutation_sigma_fraction · range` is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationScale {
    /// The product is the standard deviation.
    #[default]
    StdDev,
    /// The product is the variance; the standard deviation is its root.
    Variance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    /// Pseudo-generations, counting the random initial batch.
    pub generations: usize,
    pub batch: usize,
    pub evals_per_individual: usize,
    pub mutation_sigma_fraction: f64,
    pub mutation_scale: MutationScale,
    pub mask: InputMask,
    pub bounds: ParamBounds,
    pub snapshot_every: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            generations: 200,
            batch: 200,
            evals_per_individual: 5,
            mutation_sigma_fraction: 0.1,
            mutation_scale: MutationScale::StdDev,
            mask: InputMask::ALL,
            bounds: ParamBounds::default(),
            snapshot_every: 10,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("generations", self.generations),
            ("batch", self.batch),
            ("evals_per_individual", self.evals_per_individual),
            ("snapshot_every", self.snapshot_every),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.mutation_sigma_fraction > 0.0 && self.mutation_sigma_fraction.is_finite()) {
            return Err(Error::Config("mutation_sigma_fraction must be positive".into()));
        }
        self.bounds.validate()
    }

    /// Standard deviation of the perturbation applied to parameter `index`.
    pub fn mutation_sd(&self, index: usize) -> f64 {
        let q = self.mutation_sigma_fraction * self.bounds.width_of_index(index);
        match self.mutation_scale {
            MutationScale::StdDev => q,
            MutationScale::Variance => q.sqrt(),
        }
    }
}

/// Perturbs one uniformly chosen parameter with zero-mean Gaussian noise and
/// clamps it to its range. Returns the child and the mutated index.
pub fn mutate<R: Rng + ?Sized>(parent: &Genome, config: &EvolutionConfig, rng: &mut R) -> (Genome, usize) {
    let index = rng.random_range(0..N_PARAMS);
    let sd = config.mutation_sd(index);
    let noise = Normal::new(0.0, sd).expect("positive sd").sample(rng);
    let (lo, hi) = config.bounds.of_index(index);
    let mut child = parent.clone();
    child.set_param(index, (parent.param(index) + noise).clamp(lo, hi));
    (child, index)
}

/// Produces the raw characteristics of one episode of a genome.
pub trait Evaluator: Sync {
    fn evaluate_once(&self, genome: &Genome, seed: u64) -> Result<RawDescriptor>;
}

/// Runs the swarm simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmEvaluator {
    pub world: WorldConfig,
}

impl SwarmEvaluator {
    pub fn new(world: WorldConfig) -> Result<Self> {
        world.validate()?;
        Ok(SwarmEvaluator { world })
    }
}

impl Evaluator for SwarmEvaluator {
    fn evaluate_once(&self, genome: &Genome, seed: u64) -> Result<RawDescriptor> {
        sim::episode_descriptor(&self.world, genome, seed)
    }
}

/// Mean raw characteristics over one episode per seed.
pub fn evaluate<E: Evaluator + ?Sized>(evaluator: &E, genome: &Genome, seeds: &[u64]) -> Result<RawDescriptor> {
    let runs = seeds
        .iter()
        .map(|&s| evaluator.evaluate_once(genome, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(RawDescriptor::mean(&runs))
}

/// Evaluates `genome` on `seeds` and bins the result.
pub fn make_cell<E: Evaluator + ?Sized>(
    evaluator: &E,
    genome: Genome,
    seeds: Vec<u64>,
    binning: &BinningConfig,
) -> Result<ArchiveCell> {
    let raw = evaluate(evaluator, &genome, &seeds)?;
    Ok(ArchiveCell {
        bins: binning.to_bins(&raw),
        raw,
        fitness: controller::fitness(&genome),
        evals: seeds.len(),
        genome,
        seeds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationStats {
    pub generation: usize,
    pub inserted: usize,
    pub archive_size: usize,
}

/// A resumable evolution run, advanced one pseudo-generation at a time.
pub struct Evolution<'e, E: Evaluator + ?Sized> {
    evaluator: &'e E,
    config: EvolutionConfig,
    repertoire: Repertoire,
    generation: usize,
    parallel: bool,
}

impl<'e, E: Evaluator + ?Sized> Evolution<'e, E> {
    pub fn new(
        evaluator: &'e E,
        config: EvolutionConfig,
        binning: BinningConfig,
        master_seed: u64,
        config_hash: impl Into<String>,
    ) -> Result<Self> {
        config.validate()?;
        binning.validate()?;
        Ok(Evolution {
            evaluator,
            config,
            repertoire: Repertoire::new(binning, config_hash, master_seed),
            generation: 0,
            parallel: true,
        })
    }

    /// Evaluate on the calling thread only. Results are identical either way.
    pub fn serial(mut self) -> Self {
        self.parallel = false;
        self
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn is_done(&self) -> bool {
        self.generation >= self.config.generations
    }

    pub fn repertoire(&self) -> &Repertoire {
        &self.repertoire
    }

    pub fn into_repertoire(self) -> Repertoire {
        self.repertoire
    }

    /// True when the generation just completed is a snapshot point.
    pub fn at_snapshot(&self) -> bool {
        self.generation > 0 && self.generation.is_multiple_of(self.config.snapshot_every)
    }

    fn offspring(&self) -> Vec<Genome> {
        let master = self.repertoire.master_seed();
        let g = self.generation as u64;
        let cfg = &self.config;
        if self.generation == 0 || self.repertoire.is_empty() {
            return (0..cfg.batch as u64)
                .map(|i| {
                    let mut rng = rng_from_seed(derive_seed(master, &[TAG_INIT, g, i]));
                    Genome::random(&cfg.bounds, cfg.mask, &mut rng)
                })
                .collect();
        }
        let parents: Vec<&Genome> = self.repertoire.iter().map(|c| &c.genome).collect();
        let mut pick = rng_from_seed(derive_seed(master, &[TAG_PARENTS, g]));
        (0..cfg.batch as u64)
            .map(|i| {
                let parent = parents[pick.random_range(0..parents.len())];
                let mut rng = rng_from_seed(derive_seed(master, &[TAG_MUTATE, g, i]));
                mutate(parent, cfg, &mut rng).0
            })
            .collect()
    }

    pub fn step_generation(&mut self) -> Result<GenerationStats> {
        let master = self.repertoire.master_seed();
        let g = self.generation as u64;
        let evals = self.config.evals_per_individual as u64;
        let binning = *self.repertoire.binning();
        let jobs: Vec<(usize, Genome)> = self.offspring().into_iter().enumerate().collect();
        let run = |(i, genome): (usize, Genome)| {
            let seeds = (0..evals).map(|e| derive_seed(master, &[TAG_EVAL, g, i as u64, e])).collect();
            make_cell(self.evaluator, genome, seeds, &binning)
        };
        let cells: Vec<Result<ArchiveCell>> = if self.parallel {
            jobs.into_par_iter().map(run).collect()
        } else {
            jobs.into_iter().map(run).collect()
        };
        let mut inserted = 0;
        for cell in cells {
            if self.repertoire.insert(cell?) {
                inserted += 1;
            }
        }
        self.generation += 1;
        Ok(GenerationStats { generation: self.generation, inserted, archive_size: self.repertoire.len() })
    }
}

/// Runs every generation and returns the final archive.
pub fn evolve<E: Evaluator + ?Sized>(
    evaluator: &E,
    config: &EvolutionConfig,
    binning: BinningConfig,
    master_seed: u64,
    config_hash: impl Into<String>,
) -> Result<Repertoire> {
    let mut run = Evolution::new(evaluator, config.clone(), binning, master_seed, config_hash)?;
    while !run.is_done() {
        run.step_generation()?;
    }
    Ok(run.into_repertoire())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::Bin;
    use crate::controller::ParamKind;
    use crate::sim::Arena;

    /// Characteristics read straight off the first parameters.
    struct Direct;

    impl Evaluator for Direct {
        fn evaluate_once(&self, g: &Genome, _seed: u64) -> Result<RawDescriptor> {
            Ok(RawDescriptor::new((g.param(0) + 2.0) * 2.5, (g.param(1) + 0.5) / 1.0, g.param(2) * 100.0))
        }
    }

    fn binning() -> BinningConfig {
        BinningConfig::for_arena(&Arena::square(1000.0))
    }

    #[test]
    fn single_parameter_mutation() {
        let cfg = EvolutionConfig::default();
        let mut rng = rng_from_seed(5);
        let parent = Genome::random(&cfg.bounds, InputMask::ALL, &mut rng);
        for _ in 0..1000 {
            let (child, idx) = mutate(&parent, &cfg, &mut rng);
            for j in 0..N_PARAMS {
                if j != idx {
                    assert_eq!(child.param(j).to_bits(), parent.param(j).to_bits());
                }
            }
            assert_eq!(child.mask(), parent.mask());
            child.validate(&cfg.bounds).unwrap();
        }
    }

    #[test]
    fn clamps_at_bound() {
        let cfg = EvolutionConfig::default();
        let mut parent = Genome::null();
        for i in 0..N_PARAMS {
            let (_, hi) = cfg.bounds.of_index(i);
            parent.set_param(i, hi);
        }
        let mut rng = rng_from_seed(8);
        for _ in 0..2000 {
            let (child, idx) = mutate(&parent, &cfg, &mut rng);
            assert!(child.param(idx) <= cfg.bounds.of_index(idx).1);
        }
    }

    #[test]
    fn variance_reading_switch() {
        let cfg = EvolutionConfig { mutation_scale: MutationScale::Variance, ..Default::default() };
        assert!((cfg.mutation_sd(0) - 0.4f64.sqrt()).abs() < 1e-15);
        assert_eq!(EvolutionConfig::default().mutation_sd(0), 0.4);
        assert_eq!(ParamKind::of_index(0), ParamKind::Weight);
    }

    #[test]
    fn evaluate_averages() {
        let g = Genome::null();
        let one = evaluate(&Direct, &g, &[1]).unwrap();
        assert_eq!(one, Direct.evaluate_once(&g, 1).unwrap());
    }

    #[test]
    fn serial_and_parallel_agree() {
        let cfg = EvolutionConfig { generations: 6, batch: 16, evals_per_individual: 2, ..Default::default() };
        let a = evolve(&Direct, &cfg, binning(), 11, "h").unwrap();
        let mut run = Evolution::new(&Direct, cfg.clone(), binning(), 11, "h").unwrap().serial();
        while !run.is_done() {
            run.step_generation().unwrap();
        }
        assert_eq!(a, run.into_repertoire());
        let c = evolve(&Direct, &cfg, binning(), 12, "h").unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn archive_never_shrinks_and_elites_improve() {
        let cfg = EvolutionConfig { generations: 12, batch: 20, evals_per_individual: 1, ..Default::default() };
        let mut run = Evolution::new(&Direct, cfg, binning(), 3, "h").unwrap();
        let mut prev: Option<Repertoire> = None;
        while !run.is_done() {
            let stats = run.step_generation().unwrap();
            let cur = run.repertoire().clone();
            if let Some(p) = &prev {
                assert!(stats.archive_size >= p.len());
                for c in p.iter() {
                    assert!(cur.get(c.bins).unwrap().fitness >= c.fitness);
                }
            }
            prev = Some(cur);
        }
        let rep = prev.unwrap();
        assert!(rep.len() > 20);
        for c in rep.iter() {
            c.genome.validate(&ParamBounds::default()).unwrap();
            assert_eq!(c.fitness, controller::fitness(&c.genome));
            assert_eq!(c.bins, binning().to_bins(&c.raw));
            assert_eq!(c.seeds.len(), 1);
        }
        assert!(rep.get(Bin([0, 0, 0])).is_none() || rep.len() > 1);
    }

    #[test]
    fn rejects_zero_budgets() {
        let cfg = EvolutionConfig { batch: 0, ..Default::default() };
        assert!(Evolution::new(&Direct, cfg, binning(), 0, "").is_err());
    }
}
