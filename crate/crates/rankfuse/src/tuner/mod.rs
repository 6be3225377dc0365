//! Alternating optimization of the fusion weights.
//!
//! The weight vector is split into two blocks: the sentence block
//! (α1..α4) and the document block (β1, β2, w1..w3). Starting from a uniform
//! initialization, phases alternate — odd phases free the document block with
//! the sentence block fixed, even phases the reverse — and each phase runs a
//! seeded Bayesian-optimization search of the free block against a mean
//! average precision objective on a fixed dataset. A phase's best point
//! replaces the incumbent block only when its objective is at least as good,
//! so the best-so-far objective never regresses. The loop stops after a fixed
//! number of phases or once a full loop improves the objective by less than
//! `1e-4`.
//!
//! An exhaustive grid search over the same objective doubles as a testing
//! baseline for the Bayesian search.

mod gp;

pub use gp::expected_improvement;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{rank_for_query, ScoredCandidate, Weights, WeightKey};

/// Which mean-average-precision objective the tuner maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    SentMap,
    DocMap,
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectiveKind::SentMap => "sent_map",
            ObjectiveKind::DocMap => "doc_map",
        })
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sent_map" => Ok(ObjectiveKind::SentMap),
            "doc_map" => Ok(ObjectiveKind::DocMap),
            other => Err(Error::InvalidConfig(format!(
                "objective must be sent_map or doc_map, got \"{other}\""
            ))),
        }
    }
}

/// Search box for one free weight.
#[derive(Debug, Clone, Copy)]
pub struct ParamDim {
    pub key: WeightKey,
    pub lower: f64,
    pub upper: f64,
}

/// The free block of a phase: a box per dimension.
#[derive(Debug, Clone)]
pub struct ParamSpace {
    pub dims: Vec<ParamDim>,
}

impl ParamSpace {
    /// Unit boxes `[0, 1]` over the given keys.
    pub fn unit(keys: &[WeightKey]) -> ParamSpace {
        ParamSpace {
            dims: keys
                .iter()
                .map(|&key| ParamDim { key, lower: 0.0, upper: 1.0 })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::InvalidConfig("empty parameter space".into()));
        }
        for d in &self.dims {
            if !(d.lower < d.upper) {
                return Err(Error::InvalidConfig(format!(
                    "degenerate box for {}: [{}, {}]",
                    d.key, d.lower, d.upper
                )));
            }
        }
        Ok(())
    }
}

/// One objective evaluation in the tuning trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub phase_index: usize,
    pub trial_index: usize,
    pub params: BTreeMap<String, f64>,
    pub objective: f64,
    #[serde(default)]
    pub failed: bool,
}

/// Tuner settings. Defaults: 8 phases (four full loops), 50 trials per phase
/// with 10 random initial points, all weights starting at 0.5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TunerConfig {
    pub objective_kind: ObjectiveKind,
    pub phases: usize,
    pub trials_per_phase: usize,
    pub init_random_trials: usize,
    pub rng_seed: u64,
    pub initial_value: f64,
}

impl Default for TunerConfig {
    fn default() -> Self {
        TunerConfig {
            objective_kind: ObjectiveKind::SentMap,
            phases: 8,
            trials_per_phase: 50,
            init_random_trials: 10,
            rng_seed: 42,
            initial_value: 0.5,
        }
    }
}

impl TunerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.init_random_trials < 1 || self.trials_per_phase < self.init_random_trials {
            return Err(Error::InvalidConfig(format!(
                "need trials_per_phase >= init_random_trials >= 1, got {} and {}",
                self.trials_per_phase, self.init_random_trials
            )));
        }
        if !(0.0..=1.0).contains(&self.initial_value) {
            return Err(Error::InvalidConfig(format!(
                "initial_value {} outside [0, 1]",
                self.initial_value
            )));
        }
        Ok(())
    }
}

/// The sentence-score weights, freed on even phases.
pub const ALPHA_BLOCK: [WeightKey; 4] = [
    WeightKey::Alpha1,
    WeightKey::Alpha2,
    WeightKey::Alpha3,
    WeightKey::Alpha4,
];

/// The document-score weights, freed on odd phases (searched first).
pub const BETA_BLOCK: [WeightKey; 5] = [
    WeightKey::Beta1,
    WeightKey::Beta2,
    WeightKey::W1,
    WeightKey::W2,
    WeightKey::W3,
];

/// One query of the tuning dataset: its candidate pool with resolved
/// perspective scores, gold judgments, and the normalized text of every
/// candidate sentence (for matching against gold snippets).
#[derive(Debug, Clone)]
pub struct TuningQuery {
    pub query_id: String,
    pub candidates: Vec<ScoredCandidate>,
    pub gold_docs: BTreeSet<String>,
    pub gold_sentences: BTreeSet<(String, String)>,
    pub sentence_texts: HashMap<(String, u32), String>,
}

/// A fully resolved dataset; objective evaluation is a pure function of the
/// weights from here on.
#[derive(Debug, Clone)]
pub struct TuningDataset {
    pub queries: Vec<TuningQuery>,
    pub k_docs: usize,
    pub n_sents: usize,
    pub cutoff: usize,
}

/// Mean average precision of `weights` over the dataset's queries.
pub fn evaluate_objective(
    weights: &Weights,
    dataset: &TuningDataset,
    kind: ObjectiveKind,
) -> Result<f64> {
    if dataset.queries.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let aps: Result<Vec<f64>> = dataset
        .queries
        .par_iter()
        .map(|q| {
            let (docs, sents) =
                rank_for_query(&q.query_id, &q.candidates, weights, dataset.k_docs, dataset.n_sents);
            match kind {
                ObjectiveKind::DocMap => {
                    let ranked: Vec<&str> = docs.entries.iter().map(|(id, _)| id.as_str()).collect();
                    let gold: HashSet<&str> = q.gold_docs.iter().map(String::as_str).collect();
                    average_precision_ids(&ranked, &gold, dataset.cutoff)
                }
                ObjectiveKind::SentMap => {
                    // Project (doc, sent_index) onto the (doc, normalized text)
                    // key, dropping repeats of an identical projection.
                    let mut seen = HashSet::new();
                    let mut ranked: Vec<(&str, &str)> = Vec::with_capacity(sents.entries.len());
                    for (doc_id, sent_index, _) in &sents.entries {
                        let text = q
                            .sentence_texts
                            .get(&(doc_id.clone(), *sent_index))
                            .ok_or_else(|| {
                                Error::InvalidConfig(format!(
                                    "dataset is missing text for ({doc_id}, {sent_index})"
                                ))
                            })?;
                        if seen.insert((doc_id.as_str(), text.as_str())) {
                            ranked.push((doc_id.as_str(), text.as_str()));
                        }
                    }
                    let gold: HashSet<(&str, &str)> = q
                        .gold_sentences
                        .iter()
                        .map(|(d, t)| (d.as_str(), t.as_str()))
                        .collect();
                    average_precision_ids(&ranked, &gold, dataset.cutoff)
                }
            }
        })
        .collect();
    let aps = aps?;
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

fn average_precision_ids<T: Eq + std::hash::Hash + fmt::Debug>(
    ranked: &[T],
    gold: &HashSet<T>,
    cutoff: usize,
) -> Result<f64> {
    crate::metrics::average_precision(ranked, gold, cutoff)
}

fn point_to_map(space: &ParamSpace, point: &[f64]) -> BTreeMap<String, f64> {
    space
        .dims
        .iter()
        .zip(point)
        .map(|(d, &v)| (d.key.as_str().to_string(), v))
        .collect()
}

/// Seeded Latin-hypercube sample of `n` points.
fn latin_hypercube(rng: &mut ChaCha8Rng, space: &ParamSpace, n: usize) -> Vec<Vec<f64>> {
    let d = space.dims.len();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(d);
    for dim in &space.dims {
        let mut strata: Vec<usize> = (0..n).collect();
        // Fisher-Yates with the shared stream keeps the sample deterministic.
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            strata.swap(i, j);
        }
        let width = (dim.upper - dim.lower) / n as f64;
        let col = strata
            .iter()
            .map(|&s| dim.lower + (s as f64 + rng.gen::<f64>()) * width)
            .collect();
        columns.push(col);
    }
    (0..n)
        .map(|i| columns.iter().map(|c| c[i]).collect())
        .collect()
}

fn uniform_point(rng: &mut ChaCha8Rng, space: &ParamSpace) -> Vec<f64> {
    space
        .dims
        .iter()
        .map(|d| d.lower + rng.gen::<f64>() * (d.upper - d.lower))
        .collect()
}

fn normalize(space: &ParamSpace, point: &[f64]) -> Vec<f64> {
    space
        .dims
        .iter()
        .zip(point)
        .map(|(d, &v)| (v - d.lower) / (d.upper - d.lower))
        .collect()
}

/// Candidate points evaluated per expected-improvement maximization.
const EI_CANDIDATES: usize = 1024;
/// Observation noise added to the kernel diagonal.
const GP_NOISE: f64 = 1e-6;
/// A full loop (two phases) improving less than this stops the tuner.
const LOOP_IMPROVEMENT_EPS: f64 = 1e-4;

/// One Bayesian-optimization phase over `space`.
///
/// Runs `init_random_trials` Latin-hypercube points, then sequential
/// proposals maximizing expected improvement under the GP surrogate, for
/// `trials_per_phase` evaluations total. Objective failures are recorded as
/// objective 0 with the `failed` flag set. Returns the best point, its
/// objective, and the full trial list.
pub fn bayes_opt_phase<F>(
    mut objective: F,
    space: &ParamSpace,
    config: &TunerConfig,
    seed: u64,
    phase_index: usize,
) -> Result<(Vec<f64>, f64, Vec<Trial>)>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    space.validate()?;
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(config.trials_per_phase);
    let mut values: Vec<f64> = Vec::with_capacity(config.trials_per_phase);
    let mut trials: Vec<Trial> = Vec::with_capacity(config.trials_per_phase);

    let mut run_trial = |point: Vec<f64>,
                         trial_index: usize,
                         points: &mut Vec<Vec<f64>>,
                         values: &mut Vec<f64>,
                         trials: &mut Vec<Trial>,
                         objective: &mut F| {
        let (value, failed) = match objective(&point) {
            Ok(v) => (v, false),
            Err(_) => (0.0, true),
        };
        trials.push(Trial {
            phase_index,
            trial_index,
            params: point_to_map(space, &point),
            objective: value,
            failed,
        });
        points.push(point);
        values.push(value);
    };

    for (i, point) in latin_hypercube(&mut rng, space, config.init_random_trials)
        .into_iter()
        .enumerate()
    {
        run_trial(point, i, &mut points, &mut values, &mut trials, &mut objective);
    }

    for trial_index in config.init_random_trials..config.trials_per_phase {
        let normalized: Vec<Vec<f64>> = points.iter().map(|p| normalize(space, p)).collect();
        let candidates: Vec<Vec<f64>> = (0..EI_CANDIDATES)
            .map(|_| uniform_point(&mut rng, space))
            .collect();
        let proposal = match gp::Surrogate::fit(&normalized, &values, GP_NOISE) {
            Some(surrogate) => {
                let best = surrogate.best_standardized;
                let mut best_ei = f64::NEG_INFINITY;
                let mut best_candidate = 0;
                for (c, cand) in candidates.iter().enumerate() {
                    let (mean, std) = surrogate.predict(&normalize(space, cand));
                    let ei = expected_improvement(mean, std, best);
                    debug_assert!(ei >= 0.0);
                    if ei > best_ei {
                        best_ei = ei;
                        best_candidate = c;
                    }
                }
                candidates[best_candidate].clone()
            }
            // Fit can only fail on a degenerate design; fall back to random.
            None => candidates[0].clone(),
        };
        run_trial(proposal, trial_index, &mut points, &mut values, &mut trials, &mut objective);
    }

    let mut best_at = 0;
    for i in 1..values.len() {
        if values[i] > values[best_at] {
            best_at = i;
        }
    }
    Ok((points[best_at].clone(), values[best_at], trials))
}

fn quantized(w: &Weights) -> [i64; 9] {
    let mut key = [0i64; 9];
    for (i, k) in WeightKey::ALL.iter().enumerate() {
        key[i] = (w.get(*k) / 1e-9).round() as i64;
    }
    key
}

fn full_params(w: &Weights) -> BTreeMap<String, f64> {
    WeightKey::ALL
        .iter()
        .map(|k| (k.as_str().to_string(), w.get(*k)))
        .collect()
}

/// Run the alternating-optimization loop.
///
/// `base` supplies the fixed values (and `alpha4_source`); every key in
/// `free` is reset to `config.initial_value` before tuning and only those
/// keys are searched. Pass all nine keys for a full tune. Objective values
/// are cached on a 1e-9 weight grid, so re-proposals of an already seen
/// point cost nothing.
pub fn alternating_optimize(
    dataset: &TuningDataset,
    config: &TunerConfig,
    base: &Weights,
    free: &BTreeSet<WeightKey>,
) -> Result<(Weights, Vec<Trial>)> {
    config.validate()?;
    let mut current = *base;
    for &k in free {
        current.set(k, config.initial_value);
    }
    current.validate()?;

    let mut cache: HashMap<[i64; 9], f64> = HashMap::new();
    let mut evaluate = |w: &Weights| -> Result<f64> {
        if let Some(&v) = cache.get(&quantized(w)) {
            return Ok(v);
        }
        let v = evaluate_objective(w, dataset, config.objective_kind)?;
        cache.insert(quantized(w), v);
        Ok(v)
    };

    let mut best = evaluate(&current)?;
    let mut trace = vec![Trial {
        phase_index: 0,
        trial_index: 0,
        params: full_params(&current),
        objective: best,
        failed: false,
    }];

    let mut master_rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut best_at_loop_start = best;
    for phase in 1..=config.phases {
        let phase_seed = master_rng.next_u64();
        let block: Vec<WeightKey> = if phase % 2 == 1 {
            BETA_BLOCK.iter().copied().filter(|k| free.contains(k)).collect()
        } else {
            ALPHA_BLOCK.iter().copied().filter(|k| free.contains(k)).collect()
        };
        if !block.is_empty() {
            let space = ParamSpace::unit(&block);
            let incumbent = current;
            let objective = |point: &[f64]| -> Result<f64> {
                let mut w = incumbent;
                for (dim, &v) in space.dims.iter().zip(point) {
                    w.set(dim.key, v);
                }
                evaluate(&w)
            };
            let (best_point, phase_best, trials) =
                bayes_opt_phase(objective, &space, config, phase_seed, phase)?;
            trace.extend(trials);
            if phase_best >= best {
                for (dim, &v) in space.dims.iter().zip(&best_point) {
                    current.set(dim.key, v);
                }
                best = phase_best;
            }
        }
        if phase % 2 == 0 {
            if best - best_at_loop_start < LOOP_IMPROVEMENT_EPS {
                break;
            }
            best_at_loop_start = best;
        }
    }
    Ok((current, trace))
}

const GRID_MAX_DIMS: usize = 5;
const GRID_MAX_LEVELS: usize = 11;

fn grid_levels(resolution: f64) -> Result<usize> {
    if !(resolution > 0.0) {
        return Err(Error::InvalidConfig(format!("grid resolution {resolution} must be positive")));
    }
    let inv = 1.0 / resolution;
    let steps = inv.round();
    if (inv - steps).abs() > 1e-9 || steps < 1.0 {
        return Err(Error::InvalidConfig(format!(
            "grid resolution {resolution} does not evenly divide [0, 1]"
        )));
    }
    let levels = steps as usize + 1;
    if levels > GRID_MAX_LEVELS {
        return Err(Error::InvalidConfig(format!(
            "grid resolution {resolution} yields {levels} levels, max {GRID_MAX_LEVELS}"
        )));
    }
    Ok(levels)
}

fn grid_search_core<F>(
    mut objective: F,
    base: &Weights,
    free: &[WeightKey],
    resolution: f64,
) -> Result<(Weights, f64)>
where
    F: FnMut(&Weights) -> Result<f64>,
{
    if free.is_empty() {
        return Err(Error::InvalidConfig("grid search needs at least one free dimension".into()));
    }
    if free.len() > GRID_MAX_DIMS {
        return Err(Error::GridTooLarge { got: free.len(), max: GRID_MAX_DIMS });
    }
    let levels = grid_levels(resolution)?;
    let values: Vec<f64> = (0..levels)
        .map(|i| i as f64 / (levels - 1).max(1) as f64)
        .collect();

    let mut odometer = vec![0usize; free.len()];
    let mut best: Option<(Weights, f64)> = None;
    loop {
        let mut w = *base;
        for (d, &key) in free.iter().enumerate() {
            w.set(key, values[odometer[d]]);
        }
        let obj = objective(&w)?;
        // Strict improvement keeps the lexicographically smallest argmax.
        if best.as_ref().map_or(true, |(_, b)| obj > *b) {
            best = Some((w, obj));
        }
        // Advance the last dimension fastest: lexicographic order.
        let mut d = free.len();
        loop {
            if d == 0 {
                return Ok(best.expect("grid evaluated at least one point"));
            }
            d -= 1;
            odometer[d] += 1;
            if odometer[d] < levels {
                break;
            }
            odometer[d] = 0;
        }
    }
}

/// Exhaustively evaluate a uniform grid over the free keys (at most 5 of
/// them, at most 11 levels each) and return the exact argmax, ties resolved
/// to the lexicographically smallest parameter vector.
pub fn grid_search_oracle(
    dataset: &TuningDataset,
    objective_kind: ObjectiveKind,
    base: &Weights,
    free: &[WeightKey],
    resolution: f64,
) -> Result<(Weights, f64)> {
    grid_search_core(
        |w| evaluate_objective(w, dataset, objective_kind),
        base,
        free,
        resolution,
    )
}
