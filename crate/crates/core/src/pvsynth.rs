//! Synthetic weather and PV plant output.
//!
//! Power follows the plant model
//! `P = V·Np·((Isc + Ki(T − Tref))·G/Gref − Id − Ish)`, in kW and clamped at
//! zero. Weather is a clear-sky half-sine with cloud noise, a daily
//! temperature cycle and bounded humidity/wind processes.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::data::{
    TimeSeriesFrame, HUMIDITY, IRRADIANCE, PV_POWER, SECONDS_PER_DAY, TEMPERATURE,
    WIND_DIRECTION, WIND_SPEED,
};
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("step of {0}s does not divide a day")]
    Step(i64),
    #[error("days must be positive")]
    Days,
    #[error("invalid plant parameters: {0}")]
    Plant(String),
    #[error("invalid weather parameters: {0}")]
    Weather(String),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PvPlantParams {
    /// Array voltage, V.
    pub v_pv: f64,
    /// Parallel strings.
    pub n_p: f64,
    /// Short-circuit current, A.
    pub i_sc: f64,
    /// Current temperature coefficient, A/°C.
    pub k_i: f64,
    pub t_ref: f64,
    pub g_ref: f64,
    /// Diode current, A.
    pub i_d: f64,
    /// Shunt current, A.
    pub i_sh: f64,
}

impl Default for PvPlantParams {
    /// About 200 kW at 1000 W/m² and 25 °C.
    fn default() -> Self {
        PvPlantParams {
            v_pv: 600.0,
            n_p: 40.0,
            i_sc: 8.5,
            k_i: -0.03,
            t_ref: 25.0,
            g_ref: 1000.0,
            i_d: 0.05,
            i_sh: 0.02,
        }
    }
}

impl PvPlantParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let all = [
            self.v_pv, self.n_p, self.i_sc, self.k_i, self.t_ref, self.g_ref, self.i_d, self.i_sh,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(SynthError::Plant("all parameters must be finite".into()));
        }
        if self.g_ref <= 0.0 {
            return Err(SynthError::Plant("g_ref must be positive".into()));
        }
        if self.n_p < 1.0 {
            return Err(SynthError::Plant("n_p must be at least 1".into()));
        }
        Ok(())
    }

    /// Output at reference conditions, kW.
    pub fn rating_kw(&self) -> f64 {
        pv_power(self, self.g_ref, self.t_ref)
    }
}

/// The printed formula without the zero clamp, kW.
pub fn pv_power_raw(p: &PvPlantParams, g: f64, t: f64) -> f64 {
    p.v_pv * p.n_p * ((p.i_sc + p.k_i * (t - p.t_ref)) * g / p.g_ref - p.i_d - p.i_sh) / 1000.0
}

/// Plant output in kW for irradiance `g` (W/m²) and cell temperature `t` (°C).
pub fn pv_power(p: &PvPlantParams, g: f64, t: f64) -> f64 {
    pv_power_raw(p, g, t).max(0.0)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeatherSim {
    pub seed: u64,
    /// First timestamp, UTC seconds; taken as local solar time.
    pub start: i64,
    pub solar_noon_hour: f64,
    pub day_length_hours: f64,
    /// Seasonal swing of the day length, hours.
    pub day_length_amplitude: f64,
    pub peak_irradiance: f64,
    /// Relative seasonal swing of the clear-sky peak.
    pub seasonal_amplitude: f64,
    /// Std of the per-day cloud attenuation.
    pub cloud_daily: f64,
    /// Std of the AR(1) within-day cloud noise.
    pub cloud_noise: f64,
    pub temp_mean: f64,
    pub temp_seasonal: f64,
    pub temp_amplitude: f64,
    pub temp_peak_hour: f64,
    pub temp_noise: f64,
    pub humidity_mean: f64,
    pub humidity_amplitude: f64,
    pub humidity_noise: f64,
    pub wind_mean: f64,
    pub wind_noise: f64,
    /// Std of the additive power measurement noise, kW.
    pub power_noise: f64,
}

impl Default for WeatherSim {
    fn default() -> Self {
        WeatherSim {
            seed: 0,
            start: 1_483_228_800, // 2017-01-01T00:00:00Z
            solar_noon_hour: 12.0,
            day_length_hours: 12.0,
            day_length_amplitude: 1.5,
            peak_irradiance: 1000.0,
            seasonal_amplitude: 0.1,
            cloud_daily: 0.12,
            cloud_noise: 0.03,
            temp_mean: 22.0,
            temp_seasonal: 6.0,
            temp_amplitude: 8.0,
            temp_peak_hour: 15.0,
            temp_noise: 0.5,
            humidity_mean: 40.0,
            humidity_amplitude: 15.0,
            humidity_noise: 3.0,
            wind_mean: 3.0,
            wind_noise: 0.3,
            power_noise: 0.5,
        }
    }
}

impl WeatherSim {
    /// Every noise source switched off.
    pub fn noiseless(seed: u64) -> Self {
        WeatherSim {
            seed,
            cloud_daily: 0.0,
            cloud_noise: 0.0,
            temp_noise: 0.0,
            humidity_noise: 0.0,
            wind_noise: 0.0,
            power_noise: 0.0,
            ..WeatherSim::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let stds = [
            self.cloud_daily,
            self.cloud_noise,
            self.temp_noise,
            self.humidity_noise,
            self.wind_noise,
            self.power_noise,
        ];
        if stds.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(SynthError::Weather("noise levels must be finite and >= 0".into()));
        }
        if !(self.day_length_hours > 0.0 && self.day_length_hours < 24.0) {
            return Err(SynthError::Weather("day_length_hours must be in (0, 24)".into()));
        }
        if self.day_length_amplitude.abs() >= self.day_length_hours.min(24.0 - self.day_length_hours)
        {
            return Err(SynthError::Weather("day_length_amplitude too large".into()));
        }
        if !(self.peak_irradiance >= 0.0 && self.seasonal_amplitude.abs() < 1.0) {
            return Err(SynthError::Weather("invalid clear-sky peak".into()));
        }
        Ok(())
    }

    /// Clear-sky irradiance at `hour` of a day whose seasonal phase is
    /// `season` (1 at the start of the year, −1 half a year later).
    pub fn clear_sky(&self, season: f64, hour: f64) -> f64 {
        let length = self.day_length_hours + self.day_length_amplitude * season;
        let rise = self.solar_noon_hour - length / 2.0;
        let x = (hour - rise) / length;
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        let peak = self.peak_irradiance * (1.0 + self.seasonal_amplitude * season);
        (peak * (PI * x).sin()).max(0.0)
    }
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("validated std")
}

/// Generates `days` of weather and plant output at `step_seconds`.
pub fn generate(
    sim: &WeatherSim,
    plant: &PvPlantParams,
    days: usize,
    step_seconds: i64,
) -> Result<TimeSeriesFrame, SynthError> {
    if step_seconds <= 0 || SECONDS_PER_DAY % step_seconds != 0 {
        return Err(SynthError::Step(step_seconds));
    }
    if days == 0 {
        return Err(SynthError::Days);
    }
    sim.validate()?;
    plant.validate()?;

    let per_day = (SECONDS_PER_DAY / step_seconds) as usize;
    let n = days * per_day;
    let mut r = rng::stream(sim.seed, &[7]);
    let (cloud_d, cloud_n) = (normal(sim.cloud_daily), normal(sim.cloud_noise));
    let (temp_n, hum_n, wind_n) = (
        normal(sim.temp_noise),
        normal(sim.humidity_noise),
        normal(sim.wind_noise),
    );
    let power_n = normal(sim.power_noise);

    let mut timestamps = Vec::with_capacity(n);
    let mut cols: [Vec<f64>; 6] = Default::default();
    for c in &mut cols {
        c.reserve(n);
    }
    let mut day_factor = 1.0;
    let mut cloud_ar = 0.0;
    let mut wind = sim.wind_mean;
    let mut direction: f64 = r.random_range(0.0..360.0);
    for i in 0..n {
        let ts = sim.start + i as i64 * step_seconds;
        let sec_of_day = ts.rem_euclid(SECONDS_PER_DAY);
        if i == 0 || sec_of_day == 0 {
            day_factor = (1.0 - cloud_d.sample(&mut r).abs()).clamp(0.2, 1.0);
        }
        let hour = sec_of_day as f64 / 3600.0;
        let day_of_year = (ts.div_euclid(SECONDS_PER_DAY)).rem_euclid(365) as f64;
        let season = (2.0 * PI * day_of_year / 365.0).cos();

        cloud_ar = 0.9 * cloud_ar + cloud_n.sample(&mut r);
        let clear = sim.clear_sky(season, hour);
        let g = if clear > 0.0 {
            (clear * (day_factor * (1.0 + cloud_ar)).clamp(0.0, 1.2)).max(0.0)
        } else {
            0.0
        };

        let daily = (2.0 * PI * (hour - sim.temp_peak_hour) / 24.0).cos();
        let t = sim.temp_mean
            + sim.temp_seasonal * season
            + sim.temp_amplitude * daily
            + temp_n.sample(&mut r);
        let h = (sim.humidity_mean - sim.humidity_amplitude * daily + hum_n.sample(&mut r))
            .clamp(0.0, 100.0);
        wind = (wind + 0.1 * (sim.wind_mean - wind) + wind_n.sample(&mut r)).max(0.0);
        direction = (direction + 10.0 * wind_n.sample(&mut r)).rem_euclid(360.0);

        let modelled = pv_power(plant, g, t);
        let p = if modelled > 0.0 {
            (modelled + power_n.sample(&mut r)).max(0.0)
        } else {
            0.0
        };

        timestamps.push(ts);
        for (c, v) in cols.iter_mut().zip([g, t, h, wind, direction, p]) {
            c.push(v);
        }
    }
    let names = [
        IRRADIANCE,
        TEMPERATURE,
        HUMIDITY,
        WIND_SPEED,
        WIND_DIRECTION,
        PV_POWER,
    ];
    let columns = names.iter().map(|s| s.to_string()).zip(cols).collect();
    Ok(TimeSeriesFrame::new(timestamps, step_seconds, columns).expect("generated frame is valid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn simple() -> PvPlantParams {
        PvPlantParams {
            v_pv: 30.0,
            n_p: 100.0,
            i_sc: 8.0,
            k_i: 0.0,
            t_ref: 25.0,
            g_ref: 1000.0,
            i_d: 0.0,
            i_sh: 0.0,
        }
    }

    #[test]
    fn hand_substituted_points() {
        let p = simple();
        assert_eq!(pv_power(&p, 0.0, 40.0), 0.0);
        assert!((pv_power(&p, 1000.0, 25.0) - 24.0).abs() < 1e-12);
        let hot = PvPlantParams { k_i: -0.005, ..p };
        let v = pv_power(&hot, 1000.0, 45.0);
        assert!((v - 23.7).abs() < 1e-12);
        assert!(v < 24.0);
    }

    #[test]
    fn clamp_hides_negative_raw() {
        let p = PvPlantParams::default();
        assert!(pv_power_raw(&p, 0.0, 25.0) < 0.0);
        assert_eq!(pv_power(&p, 0.0, 25.0), 0.0);
        let rating = p.rating_kw();
        assert!((190.0..=210.0).contains(&rating), "{rating}");
    }

    #[test]
    fn one_day_shape() {
        let f = generate(&WeatherSim::default(), &PvPlantParams::default(), 1, 300).unwrap();
        assert_eq!(f.len(), 288);
        let g = f.column(IRRADIANCE).unwrap();
        let p = f.column(PV_POWER).unwrap();
        // 03:00 and 22:00 are outside any daylight window.
        for i in [36, 264] {
            assert_eq!(g[i], 0.0);
            assert_eq!(p[i], 0.0);
        }
        assert!(g[144] > 500.0);
        assert!(p.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn noiseless_power_is_formula() {
        let plant = PvPlantParams::default();
        let f = generate(&WeatherSim::noiseless(3), &plant, 3, 300).unwrap();
        let g = f.column(IRRADIANCE).unwrap();
        let t = f.column(TEMPERATURE).unwrap();
        let p = f.column(PV_POWER).unwrap();
        for i in 0..f.len() {
            assert_eq!(p[i], pv_power(&plant, g[i], t[i]));
            if g[i] == 0.0 {
                assert_eq!(p[i], 0.0);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let sim = WeatherSim {
            seed: 11,
            ..WeatherSim::default()
        };
        let plant = PvPlantParams::default();
        let a = generate(&sim, &plant, 2, 300).unwrap();
        let b = generate(&sim, &plant, 2, 300).unwrap();
        assert_eq!(a, b);
        let c = generate(&WeatherSim { seed: 12, ..sim }, &plant, 2, 300).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_step() {
        let r = generate(&WeatherSim::default(), &PvPlantParams::default(), 1, 7);
        assert_eq!(r.unwrap_err(), SynthError::Step(7));
        let r = generate(&WeatherSim::default(), &PvPlantParams::default(), 0, 300);
        assert_eq!(r.unwrap_err(), SynthError::Days);
    }

    proptest! {
        #[test]
        fn power_monotone_in_irradiance(
            g1 in 0.0f64..1400.0, dg in 0.0f64..200.0, t in -10.0f64..60.0
        ) {
            let p = PvPlantParams::default();
            prop_assert!(pv_power(&p, g1 + dg, t) >= pv_power(&p, g1, t));
        }
    }
}
