//! Shared inputs for the criterion benches. Everything is seeded so numbers
//! are comparable between runs.

use ndarray::Array2;
use rand::{Rng, SeedableRng};

use pvhybrid_core::data::{IRRADIANCE, PREV_PV_POWER, PV_POWER, SECONDS_PER_DAY};
use pvhybrid_core::pvsynth::{self, PvPlantParams, WeatherSim};
use pvhybrid_core::{data, TimeSeriesFrame};

/// The symbolic-regression demo target, sampled on `[-2, 2]²`.
pub fn sin_demo_sample(n: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-2.0..2.0));
    let y = x
        .rows()
        .into_iter()
        .map(|r| (r[0] + std::f64::consts::PI + 0.5 * r[1]).sin())
        .collect();
    (x, y)
}

/// `days` of synthetic data with a one-day lag column.
pub fn synthetic_frame(days: usize, seed: u64) -> TimeSeriesFrame {
    let sim = WeatherSim {
        seed,
        ..WeatherSim::default()
    };
    let raw = pvsynth::generate(&sim, &PvPlantParams::default(), days + 1, 300).expect("valid synth");
    data::make_lag_feature(&raw, SECONDS_PER_DAY).expect("lag fits").0
}

/// Min-max scaled `[irradiance, prev_pv_power] → pv_power` training data,
/// the shape both sub-models see in an experiment.
pub fn scaled_pair(days: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
    let frame = synthetic_frame(days, seed);
    let names = [IRRADIANCE, PREV_PV_POWER, PV_POWER];
    let scaling = data::ScalingParams::fit(&frame, &names).expect("columns exist");
    let scaled = scaling.apply(&frame).expect("columns exist");
    let x = scaled.to_matrix(&names[..2]).expect("columns exist");
    (x, scaled.require(PV_POWER).expect("target").to_vec())
}
