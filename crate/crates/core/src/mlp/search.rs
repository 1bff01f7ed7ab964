//! Fixed-budget random search over single-hidden-layer configurations.

use ndarray::ArrayView2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, Activation, MlpConfig, MlpError};

/// Inclusive ranges sampled uniformly. A range whose ends coincide pins the
/// value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSearchSpace {
    pub hidden_width: (usize, usize),
    pub activations: Vec<Activation>,
    pub learning_rate: (f64, f64),
    pub max_iterations: (usize, usize),
    pub init_scale: (f64, f64),
}

impl Default for MlpSearchSpace {
    fn default() -> Self {
        MlpSearchSpace {
            hidden_width: (10, 100),
            activations: vec![Activation::Tanh, Activation::Sigmoid, Activation::Relu],
            learning_rate: (0.01, 0.5),
            max_iterations: (500, 3000),
            init_scale: (0.1, 1.0),
        }
    }
}

impl MlpSearchSpace {
    /// Candidate `index` of the stream keyed by `seed`. Candidates do not
    /// depend on the budget, so a larger budget extends a smaller one.
    pub fn sample(&self, base: &MlpConfig, seed: u64, index: usize) -> MlpConfig {
        let mut rng = crate::rng::stream(seed, &[2, index as u64]);
        let input = base.layer_widths[0];
        let width = rng.random_range(self.hidden_width.0..=self.hidden_width.1);
        let hidden_activation = self.activations[rng.random_range(0..self.activations.len())];
        MlpConfig {
            layer_widths: vec![input, width, 1],
            hidden_activation,
            learning_rate: rng.random_range(self.learning_rate.0..=self.learning_rate.1),
            max_iterations: rng.random_range(self.max_iterations.0..=self.max_iterations.1),
            init_scale: rng.random_range(self.init_scale.0..=self.init_scale.1),
            ..base.clone()
        }
    }

    pub fn validate(&self) -> Result<(), MlpError> {
        let ok = self.hidden_width.0 >= 1
            && self.hidden_width.0 <= self.hidden_width.1
            && !self.activations.is_empty()
            && !self.activations.contains(&Activation::Softmax)
            && self.learning_rate.0 > 0.0
            && self.learning_rate.0 <= self.learning_rate.1
            && self.max_iterations.0 <= self.max_iterations.1
            && self.init_scale.0 > 0.0
            && self.init_scale.0 <= self.init_scale.1;
        if ok {
            Ok(())
        } else {
            Err(MlpError::Config("empty or invalid search space".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub config: MlpConfig,
    /// `None` when training diverged.
    pub validation_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best: MlpConfig,
    pub best_rmse: f64,
    pub trials: Vec<Trial>,
}

/// Trains `budget` sampled configurations on the training split and keeps
/// the one with the lowest validation RMSE (earliest on ties). Candidates
/// train in parallel.
pub fn random_search(
    base: &MlpConfig,
    space: &MlpSearchSpace,
    budget: usize,
    train_split: (ArrayView2<'_, f64>, &[f64]),
    validation: (ArrayView2<'_, f64>, &[f64]),
    seed: u64,
) -> Result<SearchResult, MlpError> {
    if budget == 0 {
        return Err(MlpError::Config("search budget must be at least 1".into()));
    }
    space.validate()?;
    if validation.0.nrows() != validation.1.len() || validation.1.is_empty() {
        return Err(MlpError::EmptyInput);
    }
    let trials: Vec<Trial> = (0..budget)
        .into_par_iter()
        .map(|i| -> Result<Trial, MlpError> {
            let config = space.sample(base, seed, i);
            let validation_rmse = match train(&config, train_split.0, train_split.1) {
                Ok(m) => {
                    let pred = m.predict(validation.0)?;
                    let r = crate::metrics::rmse(validation.1, &pred);
                    r.is_finite().then_some(r)
                }
                Err(MlpError::Divergence { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok(Trial {
                config,
                validation_rmse,
            })
        })
        .collect::<Result<_, _>>()?;
    let mut best = 0;
    let key = |t: &Trial| t.validation_rmse.unwrap_or(f64::INFINITY);
    for (i, t) in trials.iter().enumerate() {
        if key(t) < key(&trials[best]) {
            best = i;
        }
    }
    Ok(SearchResult {
        best: trials[best].config.clone(),
        best_rmse: key(&trials[best]),
        trials,
    })
}
