//! Synthetic scenarios: a wind-driven plume field over a weather series,
//! sampled by duty-cycled sensors.
//!
//! Every random quantity is drawn from its own ChaCha8 stream of the
//! scenario seed, so the POI layout, weather and field do not depend on the
//! number of sensors or the wake probability.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{WeatherRecord, WeatherSeries, WeatherType};
use crate::model::{Deployment, Poi, Reading, Sensor, Slot};

const STREAM_LAYOUT: u64 = 1;
const STREAM_WEATHER: u64 = 2;
const STREAM_FIELD: u64 = 3;
const STREAM_SENSORS: u64 = 4;
const STREAM_SAMPLING: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldParams {
    /// Concentration far from any plume under clear, calm conditions.
    pub baseline: f64,
    pub plumes: usize,
    /// Peak concentration added by a fresh plume.
    pub amplitude: f64,
    /// Initial plume standard deviation, meters.
    pub width: f64,
    /// Meters of plume drift per slot per m/s of wind.
    pub drift: f64,
    /// Growth of the plume standard deviation per slot, meters.
    pub diffusion: f64,
    /// Slots before a plume is replaced by a fresh one.
    pub lifetime: u32,
    /// Time constant, in slots, of the background level's response to the
    /// weather; 0 follows the weather instantly.
    pub response: f64,
}

impl Default for FieldParams {
    fn default() -> Self {
        Self { baseline: 35.0, plumes: 4, amplitude: 5.0, width: 180.0, drift: 4.0, diffusion: 1.5, lifetime: 240, response: 60.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub l: usize,
    pub m: usize,
    pub slots: usize,
    pub wake_probability: f64,
    pub noise_std: f64,
    /// Extent of the POI box, meters.
    pub region: [f64; 3],
    pub field: FieldParams,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            l: 60,
            m: 30,
            slots: 300,
            wake_probability: 0.2,
            noise_std: 8.0,
            region: [1000.0, 1000.0, 30.0],
            field: FieldParams::default(),
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.wake_probability > 0.0 && self.wake_probability <= 1.0) {
            return Err(Error::range("wake probability", self.wake_probability, "(0, 1]"));
        }
        if self.l < 2 {
            return Err(Error::range("L", self.l, "[2, inf)"));
        }
        if self.m > self.l {
            return Err(Error::range("M", self.m, format!("[0, L = {}]", self.l)));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::range("noise std", self.noise_std, "[0, inf)"));
        }
        if self.region.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::Config("region extents must be finite and non-negative".into()));
        }
        let f = &self.field;
        let positive = [f.amplitude, f.width, f.baseline];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || !(f.drift >= 0.0) || !(f.diffusion >= 0.0) || !(f.response >= 0.0) || !f.response.is_finite() {
            return Err(Error::Config("field parameters must be finite, with positive baseline, amplitude and width".into()));
        }
        if f.lifetime == 0 {
            return Err(Error::Config("plume lifetime must be at least one slot".into()));
        }
        Ok(())
    }
}

/// Expected labeled fraction of a subgraph's current slot.
pub fn expected_sparsity(cfg: &ScenarioConfig) -> f64 {
    if cfg.l == 0 {
        return 0.0;
    }
    cfg.wake_probability * cfg.m as f64 / cfg.l as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub deployment: Deployment,
    /// Slot-major: `truth[slot * L + poi]`.
    pub truth: Vec<f64>,
    pub weather: WeatherSeries,
    /// Ordered by slot, then sensor.
    pub readings: Vec<Reading>,
}

impl Scenario {
    pub fn truth_at(&self, slot: Slot, poi: usize) -> Option<f64> {
        let l = self.config.l;
        if poi >= l {
            return None;
        }
        self.truth.get(usize::try_from(slot).ok()?.checked_mul(l)? + poi).copied()
    }

    pub fn readings_in(&self, slots: std::ops::RangeInclusive<Slot>) -> impl Iterator<Item = &Reading> {
        self.readings.iter().filter(move |r| slots.contains(&r.slot))
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

struct Plume {
    center: [f64; 2],
    sigma: f64,
    age: u32,
}

impl Plume {
    fn spawn(rng: &mut ChaCha8Rng, cfg: &ScenarioConfig, age: u32) -> Self {
        let [w, h, _] = cfg.region;
        Self {
            center: [rng.random_range(-0.2..=1.2) * w, rng.random_range(-0.2..=1.2) * h],
            sigma: cfg.field.width + cfg.field.diffusion * age as f64,
            age,
        }
    }

    /// Contribution at `p`, with the peak shrinking as the plume spreads.
    fn at(&self, p: [f64; 3], cfg: &FieldParams) -> f64 {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        let spread = cfg.width / self.sigma;
        cfg.amplitude * spread * spread * (-(dx * dx + dy * dy) / (2.0 * self.sigma * self.sigma)).exp()
    }
}

fn weather_factor(w: &WeatherRecord) -> f64 {
    let kind = match w.weather_type {
        WeatherType::Clear => 1.0,
        WeatherType::Cloudy => 1.1,
        WeatherType::Rain => 0.7,
        WeatherType::Snow => 0.8,
        WeatherType::Haze => 1.6,
    };
    kind * (0.8 + 0.4 * w.humidity_pct / 100.0) / (1.0 + 0.08 * w.wind_speed)
}

fn generate_weather(cfg: &ScenarioConfig) -> Result<WeatherSeries> {
    let mut rng = stream(cfg.seed, STREAM_WEATHER);
    let step = |sd: f64| Normal::new(0.0, sd).expect("valid std");
    let (wind, dir, temp, hum) = (step(0.25), step(6.0), step(0.15), step(0.8));
    let mut kind = WeatherType::ALL[rng.random_range(0..WeatherType::ALL.len())];
    let mut speed: f64 = rng.random_range(1.0..5.0);
    let mut heading: f64 = rng.random_range(0.0..360.0);
    let mut temperature: f64 = rng.random_range(5.0..25.0);
    let mut humidity: f64 = rng.random_range(30.0..80.0);
    let mut series = WeatherSeries::new();
    for slot in 0..cfg.slots as Slot {
        if slot > 0 {
            if rng.random_bool(0.02) {
                kind = WeatherType::ALL[rng.random_range(0..WeatherType::ALL.len())];
            }
            speed = (speed + wind.sample(&mut rng)).clamp(0.0, 10.0);
            heading = (heading + dir.sample(&mut rng)).rem_euclid(360.0);
            temperature = (temperature + temp.sample(&mut rng)).clamp(-10.0, 38.0);
            humidity = (humidity + hum.sample(&mut rng)).clamp(5.0, 100.0);
        }
        // rem_euclid can round up to exactly 360 for tiny negative inputs.
        let wind_dir_deg = if heading >= 360.0 { 0.0 } else { heading };
        series.insert(WeatherRecord {
            slot,
            weather_type: kind,
            wind_speed: speed,
            wind_dir_deg,
            temperature_c: temperature,
            humidity_pct: humidity,
        })?;
    }
    Ok(series)
}

pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut layout = stream(cfg.seed, STREAM_LAYOUT);
    let pois: Vec<Poi> = (0..cfg.l)
        .map(|id| Poi {
            id,
            coord: [
                layout.random_range(0.0..=cfg.region[0]),
                layout.random_range(0.0..=cfg.region[1]),
                layout.random_range(0.0..=cfg.region[2]),
            ],
        })
        .collect();
    let mut chooser = stream(cfg.seed, STREAM_SENSORS);
    let mut chosen = sample(&mut chooser, cfg.l, cfg.m).into_vec();
    chosen.sort_unstable();
    let sensors: Vec<Sensor> = chosen.into_iter().enumerate().map(|(id, poi)| Sensor { id, poi }).collect();
    let deployment = Deployment::new(pois, sensors)?;
    let weather = generate_weather(cfg)?;

    let mut field = stream(cfg.seed, STREAM_FIELD);
    let f = &cfg.field;
    let mut plumes: Vec<Plume> =
        (0..f.plumes).map(|_| {
            let age = field.random_range(0..f.lifetime);
            Plume::spawn(&mut field, cfg, age)
        }).collect();
    let mut truth = Vec::with_capacity(cfg.slots * cfg.l);
    let mut base: Option<f64> = None;
    for slot in 0..cfg.slots as Slot {
        let w = weather.get(slot)?;
        if slot > 0 {
            let rad = w.wind_dir_deg.to_radians();
            let shift = [f.drift * w.wind_speed * rad.sin(), f.drift * w.wind_speed * rad.cos()];
            for p in plumes.iter_mut() {
                p.center[0] += shift[0];
                p.center[1] += shift[1];
                p.sigma += f.diffusion;
                p.age += 1;
                if p.age >= f.lifetime {
                    *p = Plume::spawn(&mut field, cfg, 0);
                }
            }
        }
        let target = f.baseline * weather_factor(w);
        base = match base {
            Some(b) if f.response > 0.0 => Some(b + (target - b) * (1.0 - (-1.0 / f.response).exp())),
            _ => Some(target),
        };
        let base = base.expect("set above");
        for poi in deployment.pois() {
            truth.push(base + plumes.iter().map(|p| p.at(poi.coord, f)).sum::<f64>());
        }
    }

    let mut sampling = stream(cfg.seed, STREAM_SAMPLING);
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut readings = Vec::new();
    for slot in 0..cfg.slots as Slot {
        for s in deployment.sensors() {
            if sampling.random_bool(cfg.wake_probability) {
                let t = truth[slot as usize * cfg.l + s.poi];
                let v = if cfg.noise_std > 0.0 { t + noise.sample(&mut sampling) } else { t };
                readings.push(Reading { sensor: s.id, slot, value: v.max(0.0) });
            }
        }
    }
    Ok(Scenario { config: cfg.clone(), deployment, truth, weather, readings })
}
