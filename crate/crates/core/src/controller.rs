//! Sigmoid-Well controller.
//!
//! Each agent senses eight objects (six nearest neighbors, the least visited
//! neighboring cell, the mean predicted emitter location). Every input `i`
//! owns a parameter group `{k, t, c, sigma}`; the force along the input's
//! direction is `w_i(d) = a_i(d) + g_i(d)` and the velocity setpoint is the
//! average of the eight scaled unit vectors.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec2::Vec2;

pub const N_INPUTS: usize = 8;
pub const N_PARAMS: usize = 4 * N_INPUTS;
/// Number of neighbor inputs (F1..F6).
pub const N_NEIGHBORS: usize = 6;
/// Zero-based slot of the least-visited-square input (F7).
pub const LEAST_VISITED_SLOT: usize = 6;
/// Zero-based slot of the average-predicted-emitter input (F8).
pub const EMITTER_SLOT: usize = 7;

/// Guards the fitness of an all-zero genome.
pub const FITNESS_EPSILON: f64 = 1e-6;

/// Gaussian-derivative distance-holding term `g(d)`.
pub fn gravity_well(d: f64, t: f64, c: f64, sigma: f64) -> f64 {
    let x = d - c;
    -t * 2.0 * x * (-(x * x) / (sigma * sigma)).exp()
}

/// Sigmoid attraction-repulsion term `a(d)`, bounded in `(-|k|, |k|)`.
pub fn attraction_repulsion(d: f64, k: f64, c: f64, sigma: f64) -> f64 {
    k * (2.0 / (1.0 + (-(d - c) / sigma).exp()) - 1.0)
}

/// One input's parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamGroup {
    /// Weight of the attraction-repulsion term.
    pub k: f64,
    /// Scale of the distance-holding term.
    pub t: f64,
    /// Center distance in meters.
    pub c: f64,
    /// Range in meters.
    pub sigma: f64,
}

impl ParamGroup {
    pub const ZERO: ParamGroup = ParamGroup { k: 0.0, t: 0.0, c: 0.0, sigma: 1.0 };

    pub fn new(k: f64, t: f64, c: f64, sigma: f64) -> Self {
        ParamGroup { k, t, c, sigma }
    }
}

/// Sigmoid-Well force magnitude at distance `d`.
pub fn sigmoid_well(d: f64, group: &ParamGroup) -> f64 {
    attraction_repulsion(d, group.k, group.c, group.sigma)
        + gravity_well(d, group.t, group.c, group.sigma)
}

/// Largest magnitude the distance-holding term can reach over all `d`.
///
/// `|g|` peaks at `|x| = sigma/sqrt(2)`, giving `|t|·sqrt(2)·sigma·e^{-1/2}`.
pub fn gravity_well_sup(t: f64, sigma: f64) -> f64 {
    t.abs() * std::f64::consts::SQRT_2 * sigma * (-0.5f64).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamKind {
    Weight,
    Scale,
    Center,
    Range,
}

impl ParamKind {
    pub fn of_index(index: usize) -> ParamKind {
        match index % 4 {
            0 => ParamKind::Weight,
            1 => ParamKind::Scale,
            2 => ParamKind::Center,
            _ => ParamKind::Range,
        }
    }
}

/// Closed intervals for each parameter kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamBounds {
    pub k: (f64, f64),
    pub t: (f64, f64),
    pub c: (f64, f64),
    pub sigma: (f64, f64),
}

impl Default for ParamBounds {
    fn default() -> Self {
        ParamBounds {
            k: (-2.0, 2.0),
            t: (-0.5, 0.5),
            c: (0.0, 1000.0),
            sigma: (1.0, 500.0),
        }
    }
}

impl ParamBounds {
    pub fn of_kind(&self, kind: ParamKind) -> (f64, f64) {
        match kind {
            ParamKind::Weight => self.k,
            ParamKind::Scale => self.t,
            ParamKind::Center => self.c,
            ParamKind::Range => self.sigma,
        }
    }

    /// Interval of the flat parameter at `index`.
    pub fn of_index(&self, index: usize) -> (f64, f64) {
        self.of_kind(ParamKind::of_index(index))
    }

    pub fn width_of_index(&self, index: usize) -> f64 {
        let (lo, hi) = self.of_index(index);
        hi - lo
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("k", self.k), ("t", self.t), ("c", self.c), ("sigma", self.sigma)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!("bounds for {name} must satisfy lo < hi, got [{lo}, {hi}]")));
            }
        }
        if self.sigma.0 <= 0.0 {
            return Err(Error::Config("sigma lower bound must be positive".into()));
        }
        Ok(())
    }
}

/// Which of the eight inputs are enabled. Text form lists input 1 first,
/// e.g. `01111111` disables the nearest neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InputMask(u8);

impl InputMask {
    pub const ALL: InputMask = InputMask(0xff);

    pub fn is_enabled(self, slot: usize) -> bool {
        self.0 & (1 << slot) != 0
    }

    pub fn with_disabled(self, slot: usize) -> InputMask {
        InputMask(self.0 & !(1 << slot))
    }

    pub fn with_enabled(self, slot: usize) -> InputMask {
        InputMask(self.0 | (1 << slot))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn from_bits(bits: u8) -> InputMask {
        InputMask(bits)
    }

    /// The all-enabled mask followed by each single-input ablation.
    pub fn ablation_set() -> Vec<InputMask> {
        std::iter::once(InputMask::ALL)
            .chain((0..N_INPUTS).map(|s| InputMask::ALL.with_disabled(s)))
            .collect()
    }
}

impl Default for InputMask {
    fn default() -> Self {
        InputMask::ALL
    }
}

impl fmt::Display for InputMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for slot in 0..N_INPUTS {
            f.write_str(if self.is_enabled(slot) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for InputMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() != N_INPUTS {
            return Err(Error::Config(format!("input mask must have {N_INPUTS} digits, got {s:?}")));
        }
        let mut bits = 0u8;
        for (slot, ch) in s.chars().enumerate() {
            match ch {
                '1' => bits |= 1 << slot,
                '0' => {}
                _ => return Err(Error::Config(format!("input mask digit must be 0 or 1, got {ch:?}"))),
            }
        }
        Ok(InputMask(bits))
    }
}

impl Serialize for InputMask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for InputMask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// 32 controller parameters plus the input mask.
///
/// Serialized as `{"params": [k1, t1, c1, sigma1, ..., k8, t8, c8, sigma8], "mask": "11111111"}`.
/// Group 7 only uses its weight; its other three parameters are carried but inert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GenomeRepr", into = "GenomeRepr")]
pub struct Genome {
    groups: [ParamGroup; N_INPUTS],
    mask: InputMask,
}

#[derive(Serialize, Deserialize)]
struct GenomeRepr {
    params: Vec<f64>,
    mask: InputMask,
}

impl TryFrom<GenomeRepr> for Genome {
    type Error = Error;

    fn try_from(r: GenomeRepr) -> Result<Genome> {
        let flat: [f64; N_PARAMS] = r
            .params
            .as_slice()
            .try_into()
            .map_err(|_| Error::Config(format!("genome needs {N_PARAMS} parameters, got {}", r.params.len())))?;
        Ok(Genome::from_flat(&flat, r.mask))
    }
}

impl From<Genome> for GenomeRepr {
    fn from(g: Genome) -> GenomeRepr {
        GenomeRepr { params: g.to_flat().to_vec(), mask: g.mask }
    }
}

impl Genome {
    pub fn new(groups: [ParamGroup; N_INPUTS], mask: InputMask) -> Self {
        Genome { groups, mask }
    }

    /// All weights and scales zero: the swarm never moves.
    pub fn null() -> Self {
        Genome::new([ParamGroup::ZERO; N_INPUTS], InputMask::ALL)
    }

    pub fn from_flat(flat: &[f64; N_PARAMS], mask: InputMask) -> Self {
        let groups = std::array::from_fn(|i| {
            ParamGroup::new(flat[4 * i], flat[4 * i + 1], flat[4 * i + 2], flat[4 * i + 3])
        });
        Genome { groups, mask }
    }

    pub fn to_flat(&self) -> [f64; N_PARAMS] {
        std::array::from_fn(|i| self.param(i))
    }

    pub fn random<R: Rng + ?Sized>(bounds: &ParamBounds, mask: InputMask, rng: &mut R) -> Self {
        let flat: [f64; N_PARAMS] = std::array::from_fn(|i| {
            let (lo, hi) = bounds.of_index(i);
            rng.random_range(lo..=hi)
        });
        Genome::from_flat(&flat, mask)
    }

    pub fn groups(&self) -> &[ParamGroup; N_INPUTS] {
        &self.groups
    }

    pub fn group(&self, slot: usize) -> &ParamGroup {
        &self.groups[slot]
    }

    pub fn group_mut(&mut self, slot: usize) -> &mut ParamGroup {
        &mut self.groups[slot]
    }

    pub fn mask(&self) -> InputMask {
        self.mask
    }

    pub fn set_mask(&mut self, mask: InputMask) {
        self.mask = mask;
    }

    pub fn param(&self, index: usize) -> f64 {
        let g = &self.groups[index / 4];
        match index % 4 {
            0 => g.k,
            1 => g.t,
            2 => g.c,
            _ => g.sigma,
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let g = &mut self.groups[index / 4];
        match index % 4 {
            0 => g.k = value,
            1 => g.t = value,
            2 => g.c = value,
            _ => g.sigma = value,
        }
    }

    pub fn weights(&self) -> [f64; N_INPUTS] {
        std::array::from_fn(|i| self.groups[i].k)
    }

    pub fn scales(&self) -> [f64; N_INPUTS] {
        std::array::from_fn(|i| self.groups[i].t)
    }

    pub fn validate(&self, bounds: &ParamBounds) -> Result<()> {
        for index in 0..N_PARAMS {
            let value = self.param(index);
            let (lo, hi) = bounds.of_index(index);
            if !(value >= lo && value <= hi) {
                return Err(Error::ParamOutOfRange { index, value, lo, hi });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputKind {
    /// Neighbor by distance rank, 1 = nearest.
    Neighbor(u8),
    LeastVisitedSquare,
    PredictedEmitter,
}

impl InputKind {
    pub fn canonical(slot: usize) -> InputKind {
        match slot {
            s if s < N_NEIGHBORS => InputKind::Neighbor(s as u8 + 1),
            LEAST_VISITED_SLOT => InputKind::LeastVisitedSquare,
            _ => InputKind::PredictedEmitter,
        }
    }
}

/// One sensed object: the delta vector from the agent to the object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensedInput {
    pub kind: InputKind,
    pub delta: Vec2,
}

impl SensedInput {
    pub fn new(kind: InputKind, delta: Vec2) -> Self {
        SensedInput { kind, delta }
    }

    /// False for the least visited square, which only carries a direction.
    pub fn has_distance(&self) -> bool {
        !matches!(self.kind, InputKind::LeastVisitedSquare)
    }
}

/// Velocity setpoint from the eight inputs in canonical order. Not clipped.
pub fn velocity_setpoint(inputs: &[SensedInput], genome: &Genome) -> Result<Vec2> {
    let inputs: &[SensedInput; N_INPUTS] = inputs
        .try_into()
        .map_err(|_| Error::MalformedInput { expected: N_INPUTS, got: inputs.len() })?;
    Ok(setpoint(inputs, genome))
}

pub(crate) fn setpoint(inputs: &[SensedInput; N_INPUTS], genome: &Genome) -> Vec2 {
    let mut sum = Vec2::ZERO;
    for (slot, (input, group)) in inputs.iter().zip(genome.groups.iter()).enumerate() {
        if !genome.mask.is_enabled(slot) {
            continue;
        }
        let d = input.delta.norm();
        if d == 0.0 {
            continue;
        }
        let unit = input.delta / d;
        let magnitude = if input.has_distance() { sigmoid_well(d, group) } else { group.k };
        sum += unit * magnitude;
    }
    sum / N_INPUTS as f64
}

/// Upper bound on `|velocity_setpoint|` for `genome`, over all possible inputs.
pub fn setpoint_bound(genome: &Genome) -> f64 {
    let total: f64 = (0..N_INPUTS)
        .filter(|&s| genome.mask.is_enabled(s))
        .map(|s| {
            let g = &genome.groups[s];
            if s == LEAST_VISITED_SLOT {
                g.k.abs()
            } else {
                g.k.abs() + gravity_well_sup(g.t, g.sigma)
            }
        })
        .sum();
    total / N_INPUTS as f64
}

fn weight_scale_norm(genome: &Genome) -> f64 {
    let k = genome.groups.iter().map(|g| g.k * g.k).sum::<f64>().sqrt();
    let t = genome.groups.iter().map(|g| g.t * g.t).sum::<f64>().sqrt();
    t + k
}

/// `1 / (|t| + |k|)` with Euclidean norms over the eight scales and weights.
///
/// Reads the raw parameters, so masked inputs still count. Norm sums below
/// [`FITNESS_EPSILON`] are floored to it.
pub fn fitness(genome: &Genome) -> f64 {
    1.0 / weight_scale_norm(genome).max(FITNESS_EPSILON)
}

/// True when [`fitness`] hit the epsilon floor.
pub fn is_degenerate(genome: &Genome) -> bool {
    weight_scale_norm(genome) < FITNESS_EPSILON
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    fn inputs(deltas: [Vec2; N_INPUTS]) -> [SensedInput; N_INPUTS] {
        std::array::from_fn(|s| SensedInput::new(InputKind::canonical(s), deltas[s]))
    }

    #[test]
    fn gravity_well_examples() {
        assert_eq!(gravity_well(500.0, -0.1, 500.0, 100.0), 0.0);
        assert!(close(gravity_well(600.0, -0.1, 500.0, 100.0), 7.357588823428847, 1e-12));
        for t in [-0.5, 0.1, 0.5] {
            assert!(gravity_well(1e6, t, 500.0, 100.0).abs() < 1e-12);
        }
    }

    #[test]
    fn attraction_repulsion_examples() {
        assert_eq!(attraction_repulsion(500.0, 5.0, 500.0, 100.0), 0.0);
        assert!(close(attraction_repulsion(600.0, 5.0, 500.0, 100.0), 2.3105857863000487, 1e-12));
        assert!((attraction_repulsion(1e5, 5.0, 500.0, 100.0) - 5.0).abs() < 1e-9);
    }

    #[test]
    fn sigmoid_well_examples() {
        let fig = ParamGroup::new(5.0, -0.1, 500.0, 100.0);
        assert_eq!(sigmoid_well(500.0, &fig), 0.0);
        assert!(close(sigmoid_well(600.0, &fig), 9.668174609728895, 1e-12));
        // repulsion inside the holding distance, attraction outside
        assert!(sigmoid_well(300.0, &fig) < 0.0);
        assert!(sigmoid_well(700.0, &fig) > 0.0);
        let null = ParamGroup::new(0.0, 0.0, 500.0, 100.0);
        for d in [0.0, 1.0, 499.0, 500.0, 1e4] {
            assert_eq!(sigmoid_well(d, &null), 0.0);
        }
    }

    #[test]
    fn null_genome_setpoint_is_zero() {
        let deltas = std::array::from_fn(|s| Vec2::new(10.0 * s as f64 + 1.0, -3.0));
        let v = velocity_setpoint(&inputs(deltas), &Genome::null()).unwrap();
        assert_eq!(v, Vec2::ZERO);
    }

    #[test]
    fn single_input_setpoint() {
        let mut genome = Genome::null();
        genome.set_mask(InputMask::from_bits(0b0000_0001));
        *genome.group_mut(0) = ParamGroup::new(2.0, 0.0, 0.0, 100.0);
        let mut deltas = [Vec2::new(5.0, 5.0); N_INPUTS];
        deltas[0] = Vec2::new(100.0, 0.0);
        let v = velocity_setpoint(&inputs(deltas), &genome).unwrap();
        assert!(close(v.x, 0.11552928931500245, 1e-12));
        assert_eq!(v.y, 0.0);
    }

    #[test]
    fn least_visited_input_uses_weight_only() {
        let mut genome = Genome::null();
        *genome.group_mut(LEAST_VISITED_SLOT) = ParamGroup::new(1.6, 0.5, 3.0, 2.0);
        let mut deltas = [Vec2::ZERO; N_INPUTS];
        deltas[LEAST_VISITED_SLOT] = Vec2::new(0.0, -1.0);
        let v = velocity_setpoint(&inputs(deltas), &genome).unwrap();
        assert_eq!(v, Vec2::new(0.0, -1.6 / 8.0));
    }

    #[test]
    fn zero_delta_contributes_nothing() {
        let mut genome = Genome::null();
        *genome.group_mut(7) = ParamGroup::new(2.0, 0.5, 0.0, 10.0);
        let v = velocity_setpoint(&inputs([Vec2::ZERO; N_INPUTS]), &genome).unwrap();
        assert_eq!(v, Vec2::ZERO);
    }

    #[test]
    fn wrong_input_count_is_malformed() {
        let deltas = inputs([Vec2::new(1.0, 0.0); N_INPUTS]);
        let err = velocity_setpoint(&deltas[..7], &Genome::null()).unwrap_err();
        assert!(matches!(err, Error::MalformedInput { expected: 8, got: 7 }));
    }

    #[test]
    fn fitness_examples() {
        let mut g = Genome::null();
        g.group_mut(0).k = 2.0;
        assert_eq!(fitness(&g), 0.5);
        assert!(!is_degenerate(&g));

        let mut g = Genome::null();
        for s in 0..N_INPUTS {
            let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
            g.group_mut(s).k = 2.0 * sign;
            g.group_mut(s).t = -0.5 * sign;
        }
        assert!(close(fitness(&g), 0.1414213562373095, 1e-12));

        let mut masked = g.clone();
        masked.set_mask(InputMask::ALL.with_disabled(3));
        assert_eq!(fitness(&g), fitness(&masked));
    }

    #[test]
    fn all_zero_genome_is_degenerate() {
        let g = Genome::null();
        assert!(is_degenerate(&g));
        assert_eq!(fitness(&g), 1.0 / FITNESS_EPSILON);
    }

    #[test]
    fn mask_text_form() {
        let m: InputMask = "01111111".parse().unwrap();
        assert!(!m.is_enabled(0));
        assert!(m.is_enabled(7));
        assert_eq!(m.to_string(), "01111111");
        assert_eq!(InputMask::ALL.with_disabled(6).to_string(), "11111101");
        assert!("0111111".parse::<InputMask>().is_err());
        assert!("0111111x".parse::<InputMask>().is_err());
        assert_eq!(InputMask::ablation_set().len(), 9);
    }

    #[test]
    fn genome_json_is_flat_32() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let g = Genome::random(&ParamBounds::default(), InputMask::ALL.with_disabled(2), &mut rng);
        let text = serde_json::to_string(&g).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["params"].as_array().unwrap().len(), 32);
        assert_eq!(v["mask"], "11011111");
        let back: Genome = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<Genome>(r#"{"params":[1.0],"mask":"11111111"}"#).is_err());
    }

    #[test]
    fn random_genomes_respect_bounds() {
        let bounds = ParamBounds::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            Genome::random(&bounds, InputMask::ALL, &mut rng).validate(&bounds).unwrap();
        }
        let mut g = Genome::null();
        g.set_param(5, 0.75);
        assert!(matches!(g.validate(&bounds), Err(Error::ParamOutOfRange { index: 5, .. })));
    }

    fn arb_group() -> impl Strategy<Value = ParamGroup> {
        (-2.0..2.0f64, -0.5..0.5f64, 0.0..1000.0f64, 1.0..500.0f64)
            .prop_map(|(k, t, c, s)| ParamGroup::new(k, t, c, s))
    }

    fn arb_genome() -> impl Strategy<Value = Genome> {
        (proptest::array::uniform8(arb_group()), any::<u8>())
            .prop_map(|(groups, bits)| Genome::new(groups, InputMask::from_bits(bits)))
    }

    fn arb_delta() -> impl Strategy<Value = Vec2> {
        (-1500.0..1500.0f64, -1500.0..1500.0f64).prop_map(|(x, y)| Vec2::new(x, y))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn sigmoid_well_is_odd_about_center(group in arb_group(), x in 0.0..2000.0f64) {
            let plus = sigmoid_well(group.c + x, &group);
            let minus = sigmoid_well(group.c - x, &group);
            prop_assert!((plus + minus).abs() <= 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn setpoint_respects_bound(genome in arb_genome(), deltas in proptest::array::uniform8(arb_delta())) {
            let v = velocity_setpoint(&inputs(deltas), &genome).unwrap();
            prop_assert!(v.norm() <= setpoint_bound(&genome) * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn masked_group_is_inert(
            genome in arb_genome(),
            slot in 0..N_INPUTS,
            other in arb_group(),
            deltas in proptest::array::uniform8(arb_delta()),
        ) {
            let mut g = genome.clone();
            g.set_mask(genome.mask().with_disabled(slot));
            let mut altered = g.clone();
            *altered.group_mut(slot) = other;
            let inputs = inputs(deltas);
            prop_assert_eq!(velocity_setpoint(&inputs, &g).unwrap(), velocity_setpoint(&inputs, &altered).unwrap());
        }

        #[test]
        fn fitness_non_increasing_in_magnitudes(
            genome in arb_genome(),
            index in 0..N_INPUTS,
            scale_param in any::<bool>(),
            grow in 0.0..1.0f64,
        ) {
            let p = 4 * index + usize::from(scale_param);
            let mut bigger = genome.clone();
            let v = genome.param(p);
            bigger.set_param(p, v + v.signum() * grow);
            prop_assert!(fitness(&bigger) <= fitness(&genome));
        }
    }
}
