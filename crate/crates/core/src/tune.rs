//! Genetic search for the feature weights β.
//!
//! Each individual is a string of `K × R` bits; block `k` read MSB-first is
//! a fixed-point fraction that, after flooring and normalization, gives
//! `β_k`. Fitness is the reciprocal of the mean minimized loss over the
//! tuning slots.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{apply_weights, FeatureVector, FeatureWeights, FEATURE_NAMES};
use crate::graph::{build_graph_weighted, SimilarityParams};
use crate::model::{Slot, WindowConfig};
use crate::pipeline::StepOutput;
use crate::propagate::{minimized_loss, PreEstimate};
use crate::scalar::Scalar;

pub const DEFAULT_R: usize = 20;
/// Fitness given to individuals whose graph is degenerate on some slot.
pub const DEGENERATE_FITNESS: f64 = 1e-12;
pub const MAX_GENERATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Genotype {
    bits: Vec<bool>,
}

impl Genotype {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn random(len: usize, rng: &mut impl Rng) -> Self {
        Self { bits: (0..len).map(|_| rng.random_bool(0.5)).collect() }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

impl std::str::FromStr for Genotype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .filter(|c| !matches!(c, '|' | '_' | ' '))
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::Contract(format!("genotype digit {c:?} is not binary"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }
}

impl std::fmt::Display for Genotype {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Raw block values `int / (2^r - 1)` floored at `eps`, normalized to sum 1.
pub fn decode<T: Scalar>(g: &Genotype, k: usize, r: usize, eps: f64) -> Result<FeatureWeights<T>> {
    if g.len() != k * r || r == 0 || r > 52 {
        return Err(Error::Contract(format!("genotype of {} bits cannot encode {k} blocks of {r} (R ≤ 52)", g.len())));
    }
    let full = ((1u64 << r) - 1) as f64;
    let raw: Vec<T> = g
        .bits
        .chunks_exact(r)
        .map(|block| {
            let v = block.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64);
            T::of((v as f64 / full).max(eps))
        })
        .collect();
    FeatureWeights::from_raw(&raw)
}

/// Single-point crossover at 1-based position `p`: each child keeps its own
/// first `p - 1` bits and takes the rest from the other parent.
pub fn crossover_at(a: &Genotype, b: &Genotype, p: usize) -> Result<(Genotype, Genotype)> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!("crossover of genotypes with {} and {} bits", a.len(), b.len())));
    }
    if p < 2 || p > a.len() {
        return Err(Error::range("crossover position", p, format!("[2, {}]", a.len())));
    }
    let cut = p - 1;
    let mut x = a.bits[..cut].to_vec();
    x.extend_from_slice(&b.bits[cut..]);
    let mut y = b.bits[..cut].to_vec();
    y.extend_from_slice(&a.bits[cut..]);
    Ok((Genotype::new(x), Genotype::new(y)))
}

/// With probability `p_c`, crossover at a uniform position in `2..=len`;
/// otherwise the parents pass through.
pub fn crossover(a: &Genotype, b: &Genotype, p_c: f64, rng: &mut impl Rng) -> Result<(Genotype, Genotype)> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!("crossover of genotypes with {} and {} bits", a.len(), b.len())));
    }
    if a.len() >= 2 && rng.random_bool(p_c) {
        let p = rng.random_range(2..=a.len());
        crossover_at(a, b, p)
    } else {
        Ok((a.clone(), b.clone()))
    }
}

pub fn mutate(g: &Genotype, p_m: f64, rng: &mut impl Rng) -> Genotype {
    Genotype::new(g.bits.iter().map(|&b| b ^ rng.random_bool(p_m)).collect())
}

/// Indices drawn with probability proportional to fitness, with replacement.
pub fn roulette<T: Scalar>(fitnesses: &[T], count: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    let w: Vec<f64> = fitnesses.iter().map(|f| f.as_f64()).collect();
    let dist = WeightedIndex::new(&w).map_err(|e| Error::Numerical(format!("roulette weights: {e}")))?;
    Ok((0..count).map(|_| rng.sample(&dist)).collect())
}

fn best_index<T: Scalar>(fitnesses: &[T]) -> usize {
    let mut best = 0;
    for (i, f) in fitnesses.iter().enumerate() {
        if *f > fitnesses[best] {
            best = i;
        }
    }
    best
}

/// Next generation of the same size: the fittest individual first, the rest
/// by roulette.
pub fn select<T: Scalar>(population: &[Genotype], fitnesses: &[T], rng: &mut impl Rng) -> Result<Vec<Genotype>> {
    if population.len() != fitnesses.len() || population.is_empty() {
        return Err(Error::Contract(format!("{} individuals but {} fitness values", population.len(), fitnesses.len())));
    }
    let mut next = vec![population[best_index(fitnesses)].clone()];
    next.extend(roulette(fitnesses, population.len() - 1, rng)?.into_iter().map(|i| population[i].clone()));
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population: usize,
    pub p_c: f64,
    pub p_m: f64,
    /// Stop after this many generations without a better individual.
    pub e: usize,
    pub r: usize,
    pub seed: u64,
    /// Floor applied to raw block values before normalization.
    pub epsilon: f64,
    pub max_generations: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self { population: 40, p_c: 0.6, p_m: 0.05, e: 500, r: DEFAULT_R, seed: 0, epsilon: 1e-6, max_generations: MAX_GENERATIONS }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 || !self.population.is_multiple_of(2) {
            return Err(Error::range("population size", self.population, "even and at least 2"));
        }
        if !(0.0..=1.0).contains(&self.p_c) {
            return Err(Error::range("p_c", self.p_c, "[0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.p_m) {
            return Err(Error::range("p_m", self.p_m, "[0, 1]"));
        }
        if self.e == 0 {
            return Err(Error::range("E", self.e, "[1, inf)"));
        }
        if self.r == 0 || self.r > 52 {
            return Err(Error::range("R", self.r, "[1, 52]"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::range("decode floor", self.epsilon, "(0, 1)"));
        }
        if self.max_generations == 0 || self.max_generations > MAX_GENERATIONS {
            return Err(Error::range("generation cap", self.max_generations, format!("[1, {MAX_GENERATIONS}]")));
        }
        Ok(())
    }
}

/// What one history slot contributes to the objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TuningSlot<T: Scalar> {
    pub anchor: Slot,
    pub window: Option<WindowConfig>,
    /// Unweighted node features.
    pub features: Vec<FeatureVector<T>>,
    pub labels: Vec<Option<T>>,
    pub y: Vec<T>,
}

impl<T: Scalar> TuningSlot<T> {
    pub fn from_step(out: &StepOutput<T>, window: &WindowConfig) -> Self {
        Self {
            anchor: out.prediction.anchor,
            window: Some(*window),
            features: out.features.clone(),
            labels: out.labels.clone(),
            y: out.pre_estimate.values.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TuningSet<T: Scalar> {
    slots: Vec<TuningSlot<T>>,
    k: usize,
}

impl<T: Scalar> TuningSet<T> {
    pub fn new(slots: Vec<TuningSlot<T>>) -> Result<Self> {
        let k = slots
            .first()
            .and_then(|s| s.features.first())
            .map(|f| f.len())
            .ok_or_else(|| Error::Contract("tuning set needs at least one slot with nodes".into()))?;
        for s in &slots {
            let n = s.features.len();
            if s.labels.len() != n || s.y.len() != n || n < 2 {
                return Err(Error::Contract(format!("tuning slot {} has inconsistent dimensions", s.anchor)));
            }
            if s.features.iter().any(|f| f.len() != k) {
                return Err(Error::Contract(format!("tuning slot {} mixes feature lengths", s.anchor)));
            }
            if let Some(w) = &s.window {
                if w.n() != n {
                    return Err(Error::Contract(format!("tuning slot {} does not match its window", s.anchor)));
                }
            }
        }
        Ok(Self { slots, k })
    }

    pub fn slots(&self) -> &[TuningSlot<T>] {
        &self.slots
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Keeps `count` slots chosen uniformly without replacement, in their
    /// original order.
    pub fn subsample(&self, count: usize, seed: u64) -> Result<Self> {
        if count == 0 || count > self.slots.len() {
            return Err(Error::range("tuning subsample", count, format!("[1, {}]", self.slots.len())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, self.slots.len(), count).into_vec();
        idx.sort_unstable();
        Self::new(idx.into_iter().map(|i| self.slots[i].clone()).collect())
    }
}

/// Graph and loss settings the objective is evaluated under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Objective<T: Scalar> {
    pub similarity: SimilarityParams<T>,
    pub lambda: T,
}

/// Mean minimized loss over the tuning slots for fixed weights. Returns
/// `None` when some slot's graph is degenerate.
pub fn mean_loss<T: Scalar>(weights: &FeatureWeights<T>, data: &TuningSet<T>, obj: &Objective<T>) -> Result<Option<T>> {
    let mut total = T::zero();
    for s in data.slots() {
        let weighted = s.features.iter().map(|q| apply_weights(q, weights)).collect::<Result<Vec<_>>>()?;
        let graph = match build_graph_weighted(s.anchor, s.window, s.labels.clone(), &weighted, &obj.similarity) {
            Ok(g) => g,
            Err(Error::DegenerateGraph { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let y = PreEstimate::new(s.anchor, s.y.clone())?;
        total += minimized_loss(&graph, &y, obj.lambda)?;
    }
    Ok(Some(total / T::of(data.slots().len() as f64)))
}

/// Fitness of fixed weights: `1 / mean loss`, or the degenerate floor.
pub fn weights_fitness<T: Scalar>(weights: &FeatureWeights<T>, data: &TuningSet<T>, obj: &Objective<T>) -> Result<T> {
    Ok(match mean_loss(weights, data, obj)? {
        Some(l) => T::one() / l.max(T::min_positive_value()),
        None => T::of(DEGENERATE_FITNESS),
    })
}

pub fn fitness<T: Scalar>(g: &Genotype, data: &TuningSet<T>, obj: &Objective<T>, cfg: &GaConfig) -> Result<T> {
    let w = decode(g, data.k(), cfg.r, cfg.epsilon)?;
    weights_fitness(&w, data, obj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    /// Best fitness seen up to and including this generation.
    pub best_fitness: f64,
    pub mean_fitness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaOutcome<T: Scalar> {
    pub weights: FeatureWeights<T>,
    pub best: Genotype,
    pub best_fitness: T,
    pub history: Vec<GenerationStats>,
}

struct Evaluator<'a, T: Scalar> {
    data: &'a TuningSet<T>,
    obj: &'a Objective<T>,
    cfg: &'a GaConfig,
    cache: HashMap<Genotype, T>,
}

impl<T: Scalar> Evaluator<'_, T> {
    fn eval(&mut self, g: &Genotype) -> Result<T> {
        if let Some(&f) = self.cache.get(g) {
            return Ok(f);
        }
        let f = fitness(g, self.data, self.obj, self.cfg)?;
        self.cache.insert(g.clone(), f);
        Ok(f)
    }

    fn eval_all(&mut self, pop: &[Genotype]) -> Result<Vec<T>> {
        pop.iter().map(|g| self.eval(g)).collect()
    }
}

fn generation_rng(seed: u64, generation: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(generation as u64);
    rng
}

/// Runs the search until `E` generations pass without improvement or the
/// generation cap is reached.
///
/// A generation pairs consecutive individuals for crossover, mutates the
/// children, puts the best individual so far in place of the worst child,
/// and selects the next population from that pool.
pub fn run_ga<T: Scalar>(data: &TuningSet<T>, obj: &Objective<T>, cfg: &GaConfig) -> Result<GaOutcome<T>> {
    cfg.validate()?;
    obj.similarity.validate()?;
    let bits = data.k() * cfg.r;
    let mut ev = Evaluator { data, obj, cfg, cache: HashMap::new() };
    let mut rng = generation_rng(cfg.seed, 0);
    let mut population: Vec<Genotype> = (0..cfg.population).map(|_| Genotype::random(bits, &mut rng)).collect();
    let mut fit = ev.eval_all(&population)?;
    let b = best_index(&fit);
    let (mut best, mut best_fit) = (population[b].clone(), fit[b]);
    let mean = |f: &[T]| f.iter().map(|v| v.as_f64()).sum::<f64>() / f.len() as f64;
    let mut history = vec![GenerationStats { generation: 0, best_fitness: best_fit.as_f64(), mean_fitness: mean(&fit) }];
    let mut stagnant = 0;
    for generation in 1..=cfg.max_generations {
        let mut rng = generation_rng(cfg.seed, generation);
        let mut offspring = Vec::with_capacity(cfg.population);
        for pair in population.chunks_exact(2) {
            let (x, y) = crossover(&pair[0], &pair[1], cfg.p_c, &mut rng)?;
            offspring.push(mutate(&x, cfg.p_m, &mut rng));
            offspring.push(mutate(&y, cfg.p_m, &mut rng));
        }
        let mut off_fit = ev.eval_all(&offspring)?;
        let ob = best_index(&off_fit);
        if off_fit[ob] > best_fit {
            best = offspring[ob].clone();
            best_fit = off_fit[ob];
            stagnant = 0;
        } else {
            stagnant += 1;
        }
        let worst = (0..off_fit.len()).min_by(|&i, &j| off_fit[i].partial_cmp(&off_fit[j]).expect("finite")).expect("non-empty");
        offspring[worst] = best.clone();
        off_fit[worst] = best_fit;
        population = select(&offspring, &off_fit, &mut rng)?;
        fit = ev.eval_all(&population)?;
        history.push(GenerationStats { generation, best_fitness: best_fit.as_f64(), mean_fitness: mean(&fit) });
        if stagnant >= cfg.e {
            break;
        }
    }
    Ok(GaOutcome { weights: decode(&best, data.k(), cfg.r, cfg.epsilon)?, best, best_fitness: best_fit, history })
}

pub const REPORT_HEADER: &str = "# corrgraph tune-report v1";
pub const WEIGHTS_HEADER: &str = "# corrgraph feature-weights v1";

/// Per-generation report followed by the final weights.
pub fn report_text<T: Scalar>(outcome: &GaOutcome<T>) -> String {
    let mut s = format!("{REPORT_HEADER}\ngeneration,best_fitness,mean_fitness\n");
    for h in &outcome.history {
        let _ = writeln!(s, "{},{},{}", h.generation, h.best_fitness, h.mean_fitness);
    }
    s.push_str("# final weights\n");
    s.push_str(&weights_body(&outcome.weights));
    s
}

fn weights_body<T: Scalar>(w: &FeatureWeights<T>) -> String {
    let mut s = String::from("index,name,beta\n");
    for (i, b) in w.as_slice().iter().enumerate() {
        let name = FEATURE_NAMES.get(i).copied().unwrap_or("feature");
        let _ = writeln!(s, "{i},{name},{b}");
    }
    s
}

pub fn weights_text<T: Scalar>(w: &FeatureWeights<T>) -> String {
    format!("{WEIGHTS_HEADER}\n{}", weights_body(w))
}

pub fn parse_weights<T: Scalar>(text: &str) -> Result<FeatureWeights<T>> {
    let bad = |line: usize, msg: String| Error::MissingData(format!("feature-weights line {line}: {msg}"));
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    match lines.next() {
        Some((_, WEIGHTS_HEADER)) => {}
        Some((n, h)) => return Err(bad(n, format!("unsupported header {h:?}"))),
        None => return Err(Error::MissingData("empty feature-weights file".into())),
    }
    match lines.next() {
        Some((_, "index,name,beta")) => {}
        Some((n, h)) => return Err(bad(n, format!("expected column header, found {h:?}"))),
        None => return Err(Error::MissingData("feature-weights file has no columns".into())),
    }
    let mut beta = Vec::new();
    for (n, line) in lines.filter(|(_, l)| !l.is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(bad(n, format!("expected 3 columns, found {}", cols.len())));
        }
        let idx: usize = cols[0].parse().map_err(|_| bad(n, format!("bad index {:?}", cols[0])))?;
        if idx != beta.len() {
            return Err(bad(n, format!("index {idx} out of order")));
        }
        beta.push(cols[2].parse::<T>().map_err(|_| bad(n, format!("bad weight {:?}", cols[2])))?);
    }
    FeatureWeights::new(beta)
}
