//! Spatial-temporal-meteorological node features.
//!
//! Layout of the K = 14 entries:
//!
//! | index | feature                  | scaling  |
//! |-------|--------------------------|----------|
//! | 0..3  | x, y, z                  | z-score  |
//! | 3     | slot index               | z-score  |
//! | 4..9  | weather type one-hot (5) | none     |
//! | 9     | wind speed               | z-score  |
//! | 10    | sin(wind direction)      | none     |
//! | 11    | cos(wind direction)      | none     |
//! | 12    | temperature              | z-score  |
//! | 13    | humidity                 | z-score  |

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NodeId, Poi, Slot};
use crate::scalar::{dot, Scalar};

pub const K: usize = 14;
pub const IDX_TIME: usize = 3;
pub const IDX_WEATHER_TYPE: usize = 4;
pub const IDX_WIND_SPEED: usize = 9;
pub const IDX_WIND_SIN: usize = 10;
pub const IDX_WIND_COS: usize = 11;
pub const IDX_TEMPERATURE: usize = 12;
pub const IDX_HUMIDITY: usize = 13;

/// Entries from here on depend only on the slot's weather.
pub const METEO_START: usize = IDX_WEATHER_TYPE;
pub const METEO_DIMS: usize = K - METEO_START;

pub const FEATURE_NAMES: [&str; K] = [
    "x",
    "y",
    "z",
    "slot",
    "weather_clear",
    "weather_cloudy",
    "weather_rain",
    "weather_snow",
    "weather_haze",
    "wind_speed",
    "wind_dir_sin",
    "wind_dir_cos",
    "temperature",
    "humidity",
];

const SCALED: [bool; K] = [
    true, true, true, true, false, false, false, false, false, true, false, false, true, true,
];

/// Minimum centered norm for a defined similarity.
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeatherType {
    Clear,
    Cloudy,
    Rain,
    Snow,
    Haze,
}

impl WeatherType {
    pub const ALL: [WeatherType; 5] =
        [WeatherType::Clear, WeatherType::Cloudy, WeatherType::Rain, WeatherType::Snow, WeatherType::Haze];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            WeatherType::Clear => "clear",
            WeatherType::Cloudy => "cloudy",
            WeatherType::Rain => "rain",
            WeatherType::Snow => "snow",
            WeatherType::Haze => "haze",
        }
    }
}

impl fmt::Display for WeatherType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeatherType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(code) = s.parse::<usize>() {
            return WeatherType::ALL
                .get(code)
                .copied()
                .ok_or_else(|| Error::range("weather type code", code, "[0, 5)"));
        }
        WeatherType::ALL
            .iter()
            .copied()
            .find(|w| w.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Contract(format!("unknown weather type {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub slot: Slot,
    pub weather_type: WeatherType,
    /// m/s
    pub wind_speed: f64,
    /// degrees in [0, 360)
    pub wind_dir_deg: f64,
    /// °C
    pub temperature_c: f64,
    /// percent in [0, 100]
    pub humidity_pct: f64,
}

impl WeatherRecord {
    pub fn validate(&self) -> Result<()> {
        let scalars = [self.wind_speed, self.wind_dir_deg, self.temperature_c, self.humidity_pct];
        if scalars.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("weather for slot {} has a non-finite field", self.slot)));
        }
        if !(0.0..360.0).contains(&self.wind_dir_deg) {
            return Err(Error::range("wind direction", self.wind_dir_deg, "[0, 360)"));
        }
        if !(0.0..=100.0).contains(&self.humidity_pct) {
            return Err(Error::range("humidity", self.humidity_pct, "[0, 100]"));
        }
        Ok(())
    }
}

/// Weather records keyed by slot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeatherSeries {
    records: BTreeMap<Slot, WeatherRecord>,
}

impl WeatherSeries {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: impl IntoIterator<Item = WeatherRecord>) -> Result<Self> {
        let mut s = Self::new();
        for r in records {
            s.insert(r)?;
        }
        Ok(s)
    }

    /// Inserts or replaces the record for its slot.
    pub fn insert(&mut self, record: WeatherRecord) -> Result<()> {
        record.validate()?;
        self.records.insert(record.slot, record);
        Ok(())
    }

    pub fn get(&self, slot: Slot) -> Result<&WeatherRecord> {
        self.records.get(&slot).ok_or(Error::MissingWeather(slot))
    }

    pub fn contains(&self, slot: Slot) -> bool {
        self.records.contains_key(&slot)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &WeatherRecord> {
        self.records.values()
    }

    pub fn first_slot(&self) -> Option<Slot> {
        self.records.keys().next().copied()
    }

    pub fn last_slot(&self) -> Option<Slot> {
        self.records.keys().next_back().copied()
    }

    /// Drops records strictly older than `slot`.
    pub fn prune_before(&mut self, slot: Slot) {
        self.records = self.records.split_off(&slot);
    }

    /// Errors naming the first slot of `range` without a record.
    pub fn require(&self, range: std::ops::RangeInclusive<Slot>) -> Result<()> {
        match range.into_iter().find(|s| !self.records.contains_key(s)) {
            Some(s) => Err(Error::MissingWeather(s)),
            None => Ok(()),
        }
    }
}

/// Unscaled feature row for a POI at a slot.
pub fn raw_features(coord: [f64; 3], slot: Slot, weather: &WeatherRecord) -> [f64; K] {
    let mut q = [0.0; K];
    q[..3].copy_from_slice(&coord);
    q[IDX_TIME] = slot as f64;
    q[IDX_WEATHER_TYPE + weather.weather_type.code()] = 1.0;
    q[IDX_WIND_SPEED] = weather.wind_speed;
    let dir = weather.wind_dir_deg.to_radians();
    q[IDX_WIND_SIN] = dir.sin();
    q[IDX_WIND_COS] = dir.cos();
    q[IDX_TEMPERATURE] = weather.temperature_c;
    q[IDX_HUMIDITY] = weather.humidity_pct;
    q
}

/// Per-feature centering and scaling fitted on a training window.
///
/// Entries that pass through unscaled carry mean 0 and std 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; K],
    pub std: [f64; K],
}

impl NormStats {
    pub fn identity() -> Self {
        Self { mean: [0.0; K], std: [1.0; K] }
    }

    /// Fits mean and population std of the scaled entries. Zero-variance
    /// features get std 1.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64; K]>) -> Result<Self> {
        let mut count = 0usize;
        let mut sum = [0.0; K];
        let mut sq = [0.0; K];
        let rows: Vec<&[f64; K]> = rows.into_iter().collect();
        for r in &rows {
            count += 1;
            for k in 0..K {
                sum[k] += r[k];
            }
        }
        if count == 0 {
            return Err(Error::Contract("cannot fit normalization on zero rows".into()));
        }
        let mut mean = [0.0; K];
        for k in 0..K {
            mean[k] = sum[k] / count as f64;
        }
        for r in &rows {
            for k in 0..K {
                let d = r[k] - mean[k];
                sq[k] += d * d;
            }
        }
        let mut stats = Self::identity();
        for k in 0..K {
            if SCALED[k] {
                let std = (sq[k] / count as f64).sqrt();
                stats.mean[k] = mean[k];
                stats.std[k] = if std > 0.0 && std.is_finite() { std } else { 1.0 };
            }
        }
        Ok(stats)
    }

    pub fn apply(&self, raw: &[f64; K]) -> [f64; K] {
        let mut out = [0.0; K];
        for k in 0..K {
            out[k] = (raw[k] - self.mean[k]) / self.std[k];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FeatureVector<T: Scalar> {
    pub values: Vec<T>,
}

impl<T: Scalar> FeatureVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The slot-level meteorological block, used as forecaster input.
    pub fn meteo(&self) -> &[T] {
        &self.values[METEO_START..]
    }
}

/// Encodes a node given its POI and the weather of its slot.
pub fn encode<T: Scalar>(node: &NodeId, poi: &Poi, weather: &WeatherRecord, stats: &NormStats) -> Result<FeatureVector<T>> {
    if weather.slot != node.slot {
        return Err(Error::MissingData(format!(
            "weather record for slot {} supplied for node at slot {}",
            weather.slot, node.slot
        )));
    }
    if poi.id != node.poi {
        return Err(Error::Contract(format!("POI {} supplied for node at POI {}", poi.id, node.poi)));
    }
    let scaled = stats.apply(&raw_features(poi.coord, node.slot, weather));
    Ok(FeatureVector::new(scaled.iter().map(|&v| T::of(v)).collect()))
}

/// Encodes only the meteorological block for a slot.
pub fn encode_meteo<T: Scalar>(weather: &WeatherRecord, stats: &NormStats) -> Vec<T> {
    let scaled = stats.apply(&raw_features([0.0; 3], weather.slot, weather));
    scaled[METEO_START..].iter().map(|&v| T::of(v)).collect()
}

/// Non-negative feature weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FeatureWeights<T: Scalar> {
    beta: Vec<T>,
}

impl<T: Scalar> FeatureWeights<T> {
    /// Accepts `beta` if every entry is in (0, 1) and the sum is one.
    pub fn new(beta: Vec<T>) -> Result<Self> {
        if beta.len() < 2 {
            return Err(Error::Contract(format!("need at least two feature weights, got {}", beta.len())));
        }
        for (k, &b) in beta.iter().enumerate() {
            if !(b > T::zero() && b < T::one()) {
                return Err(Error::range("feature weight", format!("beta[{k}] = {b}"), "(0, 1)"));
            }
        }
        let sum: T = beta.iter().copied().sum();
        if (sum - T::one()).abs() > T::simplex_tol(beta.len()) {
            return Err(Error::Contract(format!("feature weights sum to {sum}, not 1")));
        }
        Ok(Self { beta })
    }

    pub fn uniform(k: usize) -> Self {
        Self { beta: vec![T::one() / T::of(k as f64); k] }
    }

    /// Normalizes positive raw weights onto the simplex.
    pub fn from_raw(raw: &[T]) -> Result<Self> {
        if raw.iter().any(|&r| !(r > T::zero()) || !r.is_finite()) {
            return Err(Error::Contract("raw feature weights must be positive and finite".into()));
        }
        let sum: T = raw.iter().copied().sum();
        Self::new(raw.iter().map(|&r| r / sum).collect())
    }

    pub fn as_slice(&self) -> &[T] {
        &self.beta
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }
}

/// Hadamard product `q ⊙ β`.
pub fn apply_weights<T: Scalar>(q: &FeatureVector<T>, w: &FeatureWeights<T>) -> Result<FeatureVector<T>> {
    scale_by(q, w.as_slice())
}

/// Hadamard product with arbitrary (possibly unnormalized) weights.
pub fn scale_by<T: Scalar>(q: &FeatureVector<T>, w: &[T]) -> Result<FeatureVector<T>> {
    if q.len() != w.len() {
        return Err(Error::Contract(format!("feature length {} vs weight length {}", q.len(), w.len())));
    }
    Ok(FeatureVector::new(q.values.iter().zip(w).map(|(&a, &b)| a * b).collect()))
}

/// Componentwise mean.
pub fn mean_feature<T: Scalar>(fs: &[FeatureVector<T>]) -> Result<FeatureVector<T>> {
    let first = fs.first().ok_or_else(|| Error::Contract("mean of an empty feature set".into()))?;
    let k = first.len();
    let mut acc = vec![T::zero(); k];
    for f in fs {
        if f.len() != k {
            return Err(Error::Contract(format!("feature length {} vs {k}", f.len())));
        }
        for (a, &v) in acc.iter_mut().zip(&f.values) {
            *a += v;
        }
    }
    let n = T::of(fs.len() as f64);
    Ok(FeatureVector::new(acc.into_iter().map(|a| a / n).collect()))
}

/// Vector minus the mean, with its Euclidean norm.
pub(crate) fn center<T: Scalar>(f: &[T], mean: &[T]) -> (Vec<T>, T) {
    let c: Vec<T> = f.iter().zip(mean).map(|(&a, &b)| a - b).collect();
    let norm = dot(&c, &c).sqrt();
    (c, norm)
}

/// Cosine of two pre-centered vectors. `None` when either norm is degenerate.
#[inline]
pub(crate) fn centered_cosine<T: Scalar>(ci: &[T], ni: T, cj: &[T], nj: T) -> Option<T> {
    let floor = T::of(DEGENERATE_NORM);
    if !(ni >= floor) || !(nj >= floor) {
        return None;
    }
    let m = dot(ci, cj) / (ni * nj);
    Some(m.max(-T::one()).min(T::one()))
}

/// Adjusted cosine similarity `<f_i - f̄, f_j - f̄> / (|f_i - f̄| |f_j - f̄|)`,
/// clamped to [-1, 1].
pub fn adjusted_cosine<T: Scalar>(fi: &FeatureVector<T>, fj: &FeatureVector<T>, f_bar: &FeatureVector<T>) -> Result<T> {
    if fi.len() != f_bar.len() || fj.len() != f_bar.len() {
        return Err(Error::Contract("feature lengths differ".into()));
    }
    let (ci, ni) = center(&fi.values, &f_bar.values);
    let (cj, nj) = center(&fj.values, &f_bar.values);
    centered_cosine(&ci, ni, &cj, nj).ok_or_else(|| Error::DegenerateSimilarity { norm: ni.min(nj).as_f64() })
}
