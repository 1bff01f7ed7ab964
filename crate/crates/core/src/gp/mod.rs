//! Genetic-programming symbolic regressor.
//!
//! Generational replacement with tournament selection, subtree crossover,
//! subtree and point mutation, and reproduction. Each generation carries two
//! elites unchanged: the individual with the lowest raw RMSE and the one with
//! the lowest penalized fitness (they are often the same tree, in which case
//! only one slot is used). This keeps both the best RMSE and the best
//! penalized fitness non-increasing across generations.
//!
//! Every offspring slot draws from a stream keyed by `(seed, generation,
//! slot)` and fitness evaluation is a pure per-individual map, so results do
//! not depend on how many rayon workers run.

mod ops;

pub use ops::{
    crossover, generate, init_population, mutate, tournament_index, tournament_select,
    InitMethod, MutationMode, CONST_RANGE, DEPTH_RETRIES, MUTATION_SUBTREE_DEPTH,
};

use std::fmt::Write as _;

use ndarray::ArrayView2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{ExprError, ExprTree};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("invalid GP configuration: {0}")]
    Config(String),
    #[error("cannot fit on empty data")]
    EmptyInput,
    #[error("{rows} input rows but {targets} targets")]
    Shape { rows: usize, targets: usize },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    pub population_size: usize,
    /// Number of populations evaluated, the random initial one included.
    pub generations: usize,
    pub tournament_size: usize,
    pub crossover_prob: f64,
    pub subtree_mutation_prob: f64,
    pub point_mutation_prob: f64,
    pub max_depth: usize,
    pub init_depth_range: (usize, usize),
    pub parsimony_coefficient: f64,
    /// Stop once the best raw RMSE is at or below this. A non-finite value
    /// disables the check.
    pub stop_rmse: f64,
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            population_size: 3000,
            generations: 15,
            tournament_size: 7,
            crossover_prob: 0.9,
            subtree_mutation_prob: 0.05,
            point_mutation_prob: 0.01,
            max_depth: 12,
            init_depth_range: (2, 6),
            parsimony_coefficient: 0.001,
            stop_rmse: 0.0,
            seed: 0,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<(), GpError> {
        let bad = |m: String| Err(GpError::Config(m));
        if self.population_size == 0 || self.generations == 0 || self.tournament_size == 0 {
            return bad("population_size, generations and tournament_size must be positive".into());
        }
        if self.tournament_size > self.population_size {
            return bad(format!(
                "tournament_size {} exceeds population_size {}",
                self.tournament_size, self.population_size
            ));
        }
        let probs = [
            self.crossover_prob,
            self.subtree_mutation_prob,
            self.point_mutation_prob,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("operator probabilities must lie in [0, 1]".into());
        }
        if probs.iter().sum::<f64>() > 1.0 + 1e-12 {
            return bad("operator probabilities sum to more than 1".into());
        }
        let (lo, hi) = self.init_depth_range;
        if lo == 0 || lo > hi || hi > self.max_depth {
            return bad(format!(
                "init_depth_range ({lo}, {hi}) must satisfy 1 <= min <= max <= max_depth ({})",
                self.max_depth
            ));
        }
        if !(self.parsimony_coefficient >= 0.0 && self.parsimony_coefficient.is_finite()) {
            return bad("parsimony_coefficient must be a non-negative real".into());
        }
        if self.stop_rmse < 0.0 || self.stop_rmse.is_nan() {
            return bad("stop_rmse must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub tree: ExprTree,
    pub raw_rmse: f64,
    pub penalized_fitness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GenerationBudget,
    RmseThreshold,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::GenerationBudget => "generation_budget",
            StopReason::RmseThreshold => "rmse_threshold",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpRunReport {
    /// Lowest raw RMSE seen in the final generation.
    pub best: Individual,
    pub best_rmse_per_generation: Vec<f64>,
    pub best_penalized_per_generation: Vec<f64>,
    pub generations_executed: usize,
    pub stop_reason: StopReason,
}

impl GpRunReport {
    /// Plain-text `key = value` summary.
    pub fn to_text(&self) -> String {
        let (size, depth) = self.best.tree.size_and_depth();
        let mut s = String::new();
        let _ = writeln!(s, "generations_executed = {}", self.generations_executed);
        let _ = writeln!(s, "stop_reason = {}", self.stop_reason.as_str());
        let _ = writeln!(s, "best_raw_rmse = {}", self.best.raw_rmse);
        let _ = writeln!(s, "best_penalized_fitness = {}", self.best.penalized_fitness);
        let _ = writeln!(s, "best_node_count = {size}");
        let _ = writeln!(s, "best_depth = {depth}");
        let _ = writeln!(s, "best_expression = {}", self.best.tree);
        s
    }

    /// `generation,best_rmse,best_penalized`, generations counted from 1.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("generation,best_rmse,best_penalized\n");
        for (g, (r, p)) in self
            .best_rmse_per_generation
            .iter()
            .zip(&self.best_penalized_per_generation)
            .enumerate()
        {
            let _ = writeln!(s, "{},{},{}", g + 1, r, p);
        }
        s
    }
}

/// Training data laid out by column for fast tree evaluation.
struct Columns {
    cols: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl Columns {
    fn new(x: ArrayView2<'_, f64>, y: &[f64]) -> Result<Self, GpError> {
        if x.nrows() != y.len() {
            return Err(GpError::Shape {
                rows: x.nrows(),
                targets: y.len(),
            });
        }
        if y.is_empty() || x.ncols() == 0 {
            return Err(GpError::EmptyInput);
        }
        Ok(Columns {
            cols: x.columns().into_iter().map(|c| c.to_vec()).collect(),
            y: y.to_vec(),
        })
    }

    fn score(&self, tree: &ExprTree, parsimony: f64) -> (f64, f64) {
        let refs: Vec<&[f64]> = self.cols.iter().map(Vec::as_slice).collect();
        let pred = tree.evaluate_columns(&refs, self.y.len());
        penalize(crate::metrics::rmse(&self.y, &pred), tree, parsimony)
    }
}

fn penalize(raw: f64, tree: &ExprTree, parsimony: f64) -> (f64, f64) {
    // Saturated predictions can overflow the squared error.
    let raw = if raw.is_finite() { raw } else { f64::MAX };
    let pen = raw + parsimony * tree.node_count() as f64;
    (raw, if pen.is_finite() { pen } else { f64::MAX })
}

/// `(raw RMSE, raw RMSE + parsimony × node count)` of `tree` on `(x, y)`.
pub fn fitness(
    tree: &ExprTree,
    x: ArrayView2<'_, f64>,
    y: &[f64],
    parsimony: f64,
) -> Result<(f64, f64), GpError> {
    if x.ncols() != tree.input_dim() {
        return Err(ExprError::Shape {
            expected: tree.input_dim(),
            found: x.ncols(),
        }
        .into());
    }
    Ok(Columns::new(x, y)?.score(tree, parsimony))
}

fn argmin_by<F: Fn(&Individual) -> (f64, f64, usize)>(pop: &[Individual], key: F) -> usize {
    let mut best = 0;
    for i in 1..pop.len() {
        if key(&pop[i]) < key(&pop[best]) {
            best = i;
        }
    }
    best
}

fn best_raw(pop: &[Individual]) -> usize {
    argmin_by(pop, |i| (i.raw_rmse, i.penalized_fitness, i.tree.node_count()))
}

fn best_penalized(pop: &[Individual]) -> usize {
    argmin_by(pop, |i| (i.penalized_fitness, i.raw_rmse, i.tree.node_count()))
}

fn breed(cfg: &GpConfig, pop: &[Individual], generation: usize, slot: usize) -> ExprTree {
    let mut rng = crate::rng::stream(cfg.seed, &[1, generation as u64, slot as u64]);
    let k = cfg.tournament_size;
    let r: f64 = rng.random();
    let parent = &tournament_select(pop, k, &mut rng).tree;
    let c1 = cfg.crossover_prob;
    let c2 = c1 + cfg.subtree_mutation_prob;
    let c3 = c2 + cfg.point_mutation_prob;
    if r < c1 {
        let donor = &tournament_select(pop, k, &mut rng).tree;
        crossover(parent, donor, cfg.max_depth, &mut rng)
    } else if r < c2 {
        mutate(parent, MutationMode::Subtree, cfg.max_depth, &mut rng)
    } else if r < c3 {
        mutate(parent, MutationMode::Point, cfg.max_depth, &mut rng)
    } else {
        parent.clone()
    }
}

/// Runs the GP and returns the best tree found.
pub fn evolve(cfg: &GpConfig, x: ArrayView2<'_, f64>, y: &[f64]) -> Result<GpRunReport, GpError> {
    evolve_observed(cfg, x, y, |_, _| {})
}

/// As [`evolve`], calling `observe(generation, population)` after each
/// generation is evaluated (generations counted from 0).
pub fn evolve_observed<F>(
    cfg: &GpConfig,
    x: ArrayView2<'_, f64>,
    y: &[f64],
    mut observe: F,
) -> Result<GpRunReport, GpError>
where
    F: FnMut(usize, &[Individual]),
{
    cfg.validate()?;
    let data = Columns::new(x, y)?;
    let mut trees = init_population(cfg, x.ncols());
    let mut rmse_trace = Vec::with_capacity(cfg.generations);
    let mut pen_trace = Vec::with_capacity(cfg.generations);

    for generation in 0.. {
        let pop: Vec<Individual> = trees
            .into_par_iter()
            .map(|tree| {
                let (raw_rmse, penalized_fitness) = data.score(&tree, cfg.parsimony_coefficient);
                Individual {
                    tree,
                    raw_rmse,
                    penalized_fitness,
                }
            })
            .collect();
        observe(generation, &pop);

        let raw_elite = best_raw(&pop);
        let pen_elite = best_penalized(&pop);
        rmse_trace.push(pop[raw_elite].raw_rmse);
        pen_trace.push(pop[pen_elite].penalized_fitness);

        let hit = cfg.stop_rmse.is_finite() && pop[raw_elite].raw_rmse <= cfg.stop_rmse;
        if hit || generation + 1 >= cfg.generations {
            return Ok(GpRunReport {
                best: pop[raw_elite].clone(),
                best_rmse_per_generation: rmse_trace,
                best_penalized_per_generation: pen_trace,
                generations_executed: generation + 1,
                stop_reason: if hit {
                    StopReason::RmseThreshold
                } else {
                    StopReason::GenerationBudget
                },
            });
        }

        let mut elites = vec![pop[raw_elite].tree.clone()];
        if pen_elite != raw_elite {
            elites.push(pop[pen_elite].tree.clone());
        }
        elites.truncate(cfg.population_size);
        let n_elite = elites.len();
        let offspring: Vec<ExprTree> = (n_elite..cfg.population_size)
            .into_par_iter()
            .map(|slot| breed(cfg, &pop, generation + 1, slot))
            .collect();
        elites.extend(offspring);
        trees = elites;
    }
    unreachable!("loop returns once the generation budget is spent")
}
