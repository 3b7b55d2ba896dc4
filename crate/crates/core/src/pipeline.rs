//! Streaming prediction: one round per slot.
//!
//! A state at anchor `t - 1` holds the previous estimate `F^{t-1}`. A step
//! rolls the window to `t`, forecasts the coarse mean of the new subgraph at
//! `t + t_f`, assembles the pre-estimate, rebuilds the graph and solves for
//! `F^t`. Steps are atomic: on error the state is untouched.

use std::collections::BTreeMap;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{encode, encode_meteo, FeatureVector, FeatureWeights, NormStats, WeatherRecord, WeatherSeries, K};
use crate::forecast::{coarse_means, lstm_train, CoarseSeries, Forecaster, ForecasterKind, TrainConfig};
use crate::graph::{build_graph, SimilarityParams};
use crate::model::{carry_index, window_nodes, CorrelationGraph, Deployment, Prediction, Reading, Slot, WindowConfig};
use crate::propagate::{solve, PreEstimate, PropagationParams};
use crate::scalar::Scalar;

pub const SNAPSHOT_FORMAT: &str = "corrgraph-state";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PipelineConfig<T: Scalar> {
    pub window: WindowConfig,
    pub similarity: SimilarityParams<T>,
    pub propagation: PropagationParams<T>,
    pub weights: FeatureWeights<T>,
    pub norm: NormStats,
    pub forecaster: ForecasterKind,
    pub training: TrainConfig,
    /// Trailing slots fed to the LSTM per forecast.
    pub context: usize,
    /// Coarse-series points retained for forecasting and retraining.
    pub history: usize,
}

impl<T: Scalar> PipelineConfig<T> {
    pub fn new(window: WindowConfig, norm: NormStats) -> Self {
        Self {
            window,
            similarity: SimilarityParams::default(),
            propagation: PropagationParams::default(),
            weights: FeatureWeights::uniform(K),
            norm,
            forecaster: ForecasterKind::Lstm,
            training: TrainConfig::default(),
            context: 48,
            history: 1024,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        self.similarity.validate()?;
        self.propagation.validate()?;
        if self.weights.len() != K {
            return Err(Error::Config(format!("{} feature weights given, features have {K} entries", self.weights.len())));
        }
        if self.context == 0 || self.history < 4 {
            return Err(Error::Config("forecast context must be positive and history at least 4".into()));
        }
        Ok(())
    }
}

/// Readings inside the window, merged per node as running sums.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelStore {
    slots: BTreeMap<Slot, BTreeMap<usize, (f64, u32)>>,
}

impl LabelStore {
    pub fn add(&mut self, slot: Slot, poi: usize, value: f64) {
        let e = self.slots.entry(slot).or_default().entry(poi).or_insert((0.0, 0));
        e.0 += value;
        e.1 += 1;
    }

    /// Mean of the readings for one node.
    pub fn get(&self, slot: Slot, poi: usize) -> Option<f64> {
        self.slots.get(&slot)?.get(&poi).map(|&(s, c)| s / c as f64)
    }

    pub fn prune_before(&mut self, slot: Slot) {
        self.slots = self.slots.split_off(&slot);
    }

    pub fn first_slot(&self) -> Option<Slot> {
        self.slots.keys().next().copied()
    }

    pub fn last_slot(&self) -> Option<Slot> {
        self.slots.keys().next_back().copied()
    }

    /// Per-node labels of the window at `anchor`, in flat order.
    pub fn node_labels<T: Scalar>(&self, window: &WindowConfig, anchor: Slot) -> Result<Vec<Option<T>>> {
        Ok(window_nodes(window, anchor)?.iter().map(|n| self.get(n.slot, n.poi).map(T::of)).collect())
    }
}

/// Pre-estimate of the window: measurements where present, else the carried
/// previous estimate, else the forecast coarse mean for the new subgraph.
pub fn pre_estimate<T: Scalar>(
    window: &WindowConfig,
    anchor: Slot,
    prev: &Prediction<T>,
    labels: &[Option<T>],
    mu_hat: T,
) -> Result<PreEstimate<T>> {
    let n = window.n();
    if labels.len() != n {
        return Err(Error::Contract(format!("{} labels for a window of {n} nodes", labels.len())));
    }
    if prev.anchor + 1 != anchor || prev.values.len() != n {
        return Err(Error::Consistency(format!(
            "previous estimate at slot {} with {} entries cannot seed slot {anchor} with {n} nodes",
            prev.anchor,
            prev.values.len()
        )));
    }
    let mut y = Vec::with_capacity(n);
    for (idx, label) in labels.iter().enumerate() {
        y.push(match (label, carry_index(idx, window)?) {
            (Some(c), _) => *c,
            (None, Some(prev_idx)) => prev.values[prev_idx],
            (None, None) => mu_hat,
        });
    }
    PreEstimate::new(anchor, y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput<T: Scalar> {
    pub prediction: Prediction<T>,
    pub pre_estimate: PreEstimate<T>,
    pub labels: Vec<Option<T>>,
    /// Unweighted node features of the window.
    pub features: Vec<FeatureVector<T>>,
    pub mu_hat: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PipelineState<T: Scalar> {
    config: PipelineConfig<T>,
    deployment: Deployment,
    prediction: Prediction<T>,
    labels: LabelStore,
    weather: WeatherSeries,
    coarse: CoarseSeries<T>,
    forecaster: Forecaster<T>,
    #[serde(skip)]
    graph: Option<CorrelationGraph<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "")]
struct Snapshot<T: Scalar> {
    format: String,
    version: u32,
    state: PipelineState<T>,
}

fn weather_rows<T: Scalar>(w: &WeatherSeries, slot: Slot, norm: &NormStats) -> Result<Vec<T>> {
    Ok(encode_meteo(w.get(slot)?, norm))
}

impl<T: Scalar> PipelineState<T> {
    /// Starts a stream at `anchor` from the readings at or before it.
    ///
    /// Every node of the initial estimate gets the mean of the readings in
    /// the initial window `[anchor - t_h, anchor]`. The coarse history runs from the first reading slot to `anchor`, one
    /// point per slot holding that slot's reading mean (slots without
    /// readings repeat the previous point).
    pub fn bootstrap(
        config: PipelineConfig<T>,
        deployment: Deployment,
        readings: &[Reading],
        weather: &WeatherSeries,
        anchor: Slot,
    ) -> Result<Self> {
        config.validate()?;
        let window = config.window;
        if window.l != deployment.l() {
            return Err(Error::Config(format!("window has L = {} but the deployment has {} POIs", window.l, deployment.l())));
        }
        let first = window.first_slot(anchor)?;
        weather.require(first..=window.last_slot(anchor))?;
        let mut initial: Vec<&Reading> = Vec::new();
        for r in readings.iter().filter(|r| r.slot <= anchor) {
            r.validate()?;
            deployment.poi_of(r.sensor)?;
            initial.push(r);
        }
        let in_window: Vec<f64> = initial.iter().filter(|r| r.slot >= first).map(|r| r.value).collect();
        if in_window.is_empty() {
            return Err(Error::Bootstrap(format!("no readings in the initial window {first}..={anchor}")));
        }
        let mean = in_window.iter().sum::<f64>() / in_window.len() as f64;
        let prediction = Prediction::new(anchor, vec![T::of(mean); window.n()])?;

        let mut labels = LabelStore::default();
        let mut per_slot: BTreeMap<Slot, (f64, usize)> = BTreeMap::new();
        for r in &initial {
            if r.slot >= first {
                labels.add(r.slot, deployment.poi_of(r.sensor)?, r.value);
            }
            let e = per_slot.entry(r.slot).or_insert((0.0, 0));
            e.0 += r.value;
            e.1 += 1;
        }
        let start = (*per_slot.keys().next().expect("non-empty")).max(anchor.saturating_sub(config.history as Slot - 1));
        let mut coarse = CoarseSeries::new();
        let mut last = per_slot.range(..=start).next_back().map(|(_, &(s, c))| s / c as f64).expect("start has a reading at or before it");
        for slot in start..=anchor {
            if let Some(&(s, c)) = per_slot.get(&slot) {
                last = s / c as f64;
            }
            coarse.upsert(slot, T::of(last), weather_rows(weather, slot, &config.norm)?)?;
        }

        let mut kept = WeatherSeries::new();
        for rec in weather.iter().filter(|r| r.slot >= start.min(first)) {
            kept.insert(*rec)?;
        }
        let mut state = Self {
            config,
            deployment,
            prediction,
            labels,
            weather: kept,
            coarse,
            forecaster: Forecaster::Persistence,
            graph: None,
        };
        state.retrain_forecaster()?;
        Ok(state)
    }

    /// Refits the forecaster on the retained coarse history. Falls back to
    /// persistence when it has fewer than 4 points or persistence is chosen.
    pub fn retrain_forecaster(&mut self) -> Result<()> {
        self.forecaster = match self.config.forecaster {
            ForecasterKind::Lstm if self.coarse.len() >= 4 => {
                let trained = lstm_train(&self.coarse, &self.config.training, self.config.context)?;
                debug!(
                    "forecaster trained on {} slots, loss {:?} -> {:?}",
                    self.coarse.len(),
                    trained.losses.first(),
                    trained.losses.last()
                );
                Forecaster::Lstm(trained.forecaster)
            }
            ForecasterKind::Lstm => {
                warn!("only {} coarse slots available; forecasting by persistence", self.coarse.len());
                Forecaster::Persistence
            }
            ForecasterKind::Persistence => Forecaster::Persistence,
        };
        Ok(())
    }

    /// Switches the forecaster kind and refits it on the retained history.
    pub fn set_forecaster(&mut self, kind: ForecasterKind) -> Result<()> {
        let previous = self.config.forecaster;
        self.config.forecaster = kind;
        if let Err(e) = self.retrain_forecaster() {
            self.config.forecaster = previous;
            return Err(e);
        }
        Ok(())
    }

    /// Anchor of the latest estimate.
    pub fn anchor(&self) -> Slot {
        self.prediction.anchor
    }

    pub fn config(&self) -> &PipelineConfig<T> {
        &self.config
    }

    pub fn deployment(&self) -> &Deployment {
        &self.deployment
    }

    pub fn prediction(&self) -> &Prediction<T> {
        &self.prediction
    }

    pub fn labels(&self) -> &LabelStore {
        &self.labels
    }

    pub fn coarse(&self) -> &CoarseSeries<T> {
        &self.coarse
    }

    pub fn forecaster(&self) -> &Forecaster<T> {
        &self.forecaster
    }

    /// Graph of the latest step; absent right after bootstrap or restore.
    pub fn graph(&self) -> Option<&CorrelationGraph<T>> {
        self.graph.as_ref()
    }

    /// Advances to the next slot.
    ///
    /// `readings` may hold late arrivals for any slot of the new window;
    /// older ones are dropped with a warning and newer ones are rejected.
    /// `weather` is merged into the stored series; afterwards every slot of
    /// the new window must have a record.
    pub fn step(&mut self, readings: &[Reading], weather: &[WeatherRecord]) -> Result<StepOutput<T>> {
        let window = self.config.window;
        let t = self.anchor() + 1;
        let first = window.first_slot(t)?;
        let last = window.last_slot(t);

        let mut labels = self.labels.clone();
        for r in readings {
            r.validate()?;
            let poi = self.deployment.poi_of(r.sensor)?;
            if r.slot > t {
                return Err(Error::Contract(format!("reading for slot {} arrived before its slot (anchor {t})", r.slot)));
            }
            if r.slot < first {
                warn!("dropping late reading from sensor {} for slot {} (window starts at {first})", r.sensor, r.slot);
                continue;
            }
            labels.add(r.slot, poi, r.value);
        }
        labels.prune_before(first);

        let mut series = self.weather.clone();
        for w in weather {
            series.insert(*w)?;
        }
        series.require(first..=last)?;

        let prev_window_first = window.first_slot(t - 1)?;
        let mut coarse = self.coarse.clone();
        let coarse_start = coarse.points().first().map_or(0, |p| p.slot);
        for (i, mu) in coarse_means(&self.prediction, &window)?.into_iter().enumerate() {
            let slot = prev_window_first + i as Slot;
            if slot >= coarse_start {
                coarse.upsert(slot, mu, weather_rows(&series, slot, &self.config.norm)?)?;
            }
        }
        coarse.keep_last(self.config.history);
        let mu_hat = self.forecaster.forecast_next(&coarse)?;

        let node_labels = labels.node_labels::<T>(&window, t)?;
        let y = pre_estimate(&window, t, &self.prediction, &node_labels, mu_hat)?;
        let features = window_features(&window, t, &self.deployment, &series, &self.config.norm)?;
        let graph = build_graph(t, &window, node_labels.clone(), &features, &self.config.weights, &self.config.similarity)?;
        let prediction = solve(&graph, &y, &self.config.propagation)?;

        series.prune_before(first.min(coarse.points().first().map_or(first, |p| p.slot)));
        self.labels = labels;
        self.weather = series;
        self.coarse = coarse;
        self.prediction = prediction.clone();
        self.graph = Some(graph);
        Ok(StepOutput { prediction, pre_estimate: y, labels: node_labels, features, mu_hat })
    }

    pub fn to_snapshot(&self) -> Result<String> {
        let snap = Snapshot { format: SNAPSHOT_FORMAT.to_string(), version: SNAPSHOT_VERSION, state: self.clone() };
        serde_json::to_string(&snap).map_err(|e| Error::Snapshot(e.to_string()))
    }

    pub fn from_snapshot(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            version: u32,
        }
        let header: Header = serde_json::from_str(text).map_err(|e| Error::Snapshot(e.to_string()))?;
        if header.format != SNAPSHOT_FORMAT || header.version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!(
                "unsupported snapshot {} v{} (expected {SNAPSHOT_FORMAT} v{SNAPSHOT_VERSION})",
                header.format, header.version
            )));
        }
        let snap: Snapshot<T> = serde_json::from_str(text).map_err(|e| Error::Snapshot(e.to_string()))?;
        let state = snap.state;
        state.config.validate()?;
        if state.prediction.values.len() != state.config.window.n() {
            return Err(Error::Snapshot("stored estimate does not match the window size".into()));
        }
        Ok(state)
    }
}

/// Unweighted features of every node in the window at `anchor`.
pub fn window_features<T: Scalar>(
    window: &WindowConfig,
    anchor: Slot,
    deployment: &Deployment,
    weather: &WeatherSeries,
    norm: &NormStats,
) -> Result<Vec<FeatureVector<T>>> {
    window_nodes(window, anchor)?
        .iter()
        .map(|node| encode(node, &deployment.pois()[node.poi], weather.get(node.slot)?, norm))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{raw_features, WeatherType};
    use crate::model::{Poi, Sensor};
    use approx::assert_relative_eq;

    fn weather(slots: std::ops::Range<Slot>) -> WeatherSeries {
        WeatherSeries::from_records(slots.map(|slot| WeatherRecord {
            slot,
            weather_type: WeatherType::ALL[(slot % 5) as usize],
            wind_speed: 1.0 + (slot % 4) as f64,
            wind_dir_deg: (slot * 37 % 360) as f64,
            temperature_c: 10.0 + (slot % 7) as f64,
            humidity_pct: 40.0 + (slot % 9) as f64,
        }))
        .unwrap()
    }

    fn deployment(l: usize, m: usize) -> Deployment {
        let pois = (0..l).map(|id| Poi { id, coord: [id as f64 * 30.0, (id * id % 7) as f64 * 20.0, 0.0] }).collect();
        let sensors = (0..m).map(|id| Sensor { id, poi: id * (l / m.max(1)) }).collect();
        Deployment::new(pois, sensors).unwrap()
    }

    fn config(window: WindowConfig, deployment: &Deployment, w: &WeatherSeries, kind: ForecasterKind) -> PipelineConfig<f64> {
        let rows: Vec<[f64; K]> = w
            .iter()
            .flat_map(|rec| deployment.pois().iter().map(move |p| raw_features(p.coord, rec.slot, rec)))
            .collect();
        let mut c = PipelineConfig::new(window, NormStats::fit(rows.iter()).unwrap());
        c.forecaster = kind;
        c.similarity = SimilarityParams::new(2.0, 0.0, 200).unwrap();
        c.training.epochs = 20;
        c
    }

    fn r(sensor: usize, slot: Slot, value: f64) -> Reading {
        Reading { sensor, slot, value }
    }

    #[test]
    fn bootstrap_means() {
        let w = weather(0..20);
        let d = deployment(4, 2);
        let win = WindowConfig::new(1, 1, 4).unwrap();
        let c = config(win, &d, &w, ForecasterKind::Persistence);
        let s = PipelineState::bootstrap(c.clone(), d.clone(), &[r(0, 3, 42.0)], &w, 3).unwrap();
        assert_eq!(s.prediction().values, vec![42.0; 12]);
        let s = PipelineState::bootstrap(c.clone(), d.clone(), &[r(0, 2, 10.0), r(1, 3, 20.0)], &w, 3).unwrap();
        assert_eq!(s.prediction().values, vec![15.0; 12]);
        assert!(matches!(PipelineState::bootstrap(c, d, &[r(0, 9, 1.0)], &w, 3), Err(Error::Bootstrap(_))));
    }

    #[test]
    fn pre_estimate_cases() {
        // t_h = 1, t_f = 1, L = 2: nodes are (t-1, 0), (t-1, 1), (t, 0), (t, 1), (t+1, 0), (t+1, 1).
        let win = WindowConfig::new(1, 1, 2).unwrap();
        let prev = Prediction::new(4, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let labels = vec![None, Some(9.0), Some(8.0), None, None, None];
        let y = pre_estimate(&win, 5, &prev, &labels, 0.5).unwrap();
        assert_eq!(y.values, vec![3.0, 9.0, 8.0, 6.0, 0.5, 0.5]);

        let y = pre_estimate(&win, 5, &prev, &[None; 6], 7.0).unwrap();
        assert_eq!(y.values, vec![3.0, 4.0, 5.0, 6.0, 7.0, 7.0]);

        let flat = Prediction::new(4, vec![7.0; 6]).unwrap();
        let labels = vec![None, None, Some(7.0), Some(7.0), None, None];
        assert_eq!(pre_estimate(&win, 5, &flat, &labels, 7.0).unwrap().values, vec![7.0; 6]);

        assert!(matches!(pre_estimate(&win, 6, &prev, &[None; 6], 0.0), Err(Error::Consistency(_))));
    }

    // A constant vector is not a fixed point of the degree-normalized
    // smoothness term, so constant data only yields nearly constant output.
    #[test]
    fn constant_stream_is_nearly_stationary() {
        let w = weather(0..30);
        let d = deployment(4, 4);
        let win = WindowConfig::new(2, 1, 4).unwrap();
        let c = config(win, &d, &w, ForecasterKind::Persistence);
        let init: Vec<Reading> = (0..5).flat_map(|s| (0..4).map(move |sensor| r(sensor, s, 7.0))).collect();
        let mut st = PipelineState::bootstrap(c, d, &init, &w, 4).unwrap();
        let a = st.step(&(0..4).map(|s| r(s, 5, 7.0)).collect::<Vec<_>>(), &[]).unwrap();
        let b = st.step(&(0..4).map(|s| r(s, 6, 7.0)).collect::<Vec<_>>(), &[]).unwrap();
        for v in a.prediction.values.iter().chain(&b.prediction.values) {
            assert_relative_eq!(*v, 7.0, max_relative = 0.1);
        }
        assert_eq!(b.prediction.anchor, 6);
    }

    #[test]
    fn step_without_readings_propagates() {
        let w = weather(0..30);
        let d = deployment(4, 2);
        let win = WindowConfig::new(1, 1, 4).unwrap();
        let c = config(win, &d, &w, ForecasterKind::Lstm);
        let init = [r(0, 0, 10.0), r(1, 1, 12.0), r(0, 2, 11.0), r(1, 3, 14.0), r(0, 4, 13.0)];
        let mut st = PipelineState::bootstrap(c, d, &init, &w, 4).unwrap();
        assert!(matches!(st.forecaster(), Forecaster::Lstm(_)));
        let out = st.step(&[], &[]).unwrap();
        assert!(out.labels[4..].iter().all(|l| l.is_none()));
        assert!(out.prediction.values.iter().all(|v| v.is_finite()));
        assert_eq!(st.anchor(), 5);
        assert!(st.graph().is_some());
    }

    #[test]
    fn window_discipline() {
        let w = weather(0..40);
        let d = deployment(4, 2);
        let win = WindowConfig::new(2, 1, 4).unwrap();
        let c = config(win, &d, &w, ForecasterKind::Persistence);
        let init: Vec<Reading> = (0..6).map(|s| r((s % 2) as usize, s, 10.0 + s as f64)).collect();
        let mut st = PipelineState::bootstrap(c, d, &init, &w, 5).unwrap();
        for t in 6..15 {
            st.step(&[r(0, t, 10.0), r(1, t - 1, 12.0)], &[]).unwrap();
            assert!(st.labels().first_slot().unwrap() >= t - 2);
            assert!(st.labels().last_slot().unwrap() <= t);
            assert_eq!(st.coarse().last().unwrap().slot, t - 1 + 1);
        }
    }

    #[test]
    fn failed_step_leaves_state_unchanged() {
        let w = weather(0..8);
        let d = deployment(4, 2);
        let win = WindowConfig::new(1, 1, 4).unwrap();
        let c = config(win, &d, &w, ForecasterKind::Persistence);
        let mut st = PipelineState::bootstrap(c, d, &[r(0, 3, 5.0)], &w, 3).unwrap();
        let before = st.clone();
        assert!(matches!(st.step(&[r(0, 9, 1.0)], &[]), Err(Error::Contract(_))));
        assert_eq!(st, before);
        assert!(st.step(&[r(7, 4, 1.0)], &[]).is_err());
        assert_eq!(st, before);
        for _ in 0..3 {
            st.step(&[r(1, st.anchor() + 1, 6.0)], &[]).unwrap();
        }
        let before = st.clone();
        assert!(matches!(st.step(&[], &[]), Err(Error::MissingWeather(8))));
        assert_eq!(st, before);
    }

    #[test]
    fn late_readings_within_window_are_used() {
        let w = weather(0..20);
        let d = deployment(4, 2);
        let win = WindowConfig::new(2, 1, 4).unwrap();
        let c = config(win, &d, &w, ForecasterKind::Persistence);
        let mut st = PipelineState::bootstrap(c, d, &[r(0, 4, 5.0)], &w, 4).unwrap();
        let out = st.step(&[r(1, 4, 9.0), r(1, 1, 100.0)], &[]).unwrap();
        // slot 4 is the middle subgraph (offset 1) of the window at 5.
        assert_eq!(out.labels[4 + 2], Some(9.0));
        assert_eq!(out.labels[4], Some(5.0));
    }

    #[test]
    fn duplicate_readings_are_averaged() {
        let w = weather(0..20);
        let d = deployment(4, 2);
        let win = WindowConfig::new(1, 1, 4).unwrap();
        let c = config(win, &d, &w, ForecasterKind::Persistence);
        let mut st = PipelineState::bootstrap(c, d, &[r(0, 4, 5.0)], &w, 4).unwrap();
        let out = st.step(&[r(1, 5, 10.0), r(1, 5, 20.0)], &[]).unwrap();
        assert_eq!(out.labels[4 + 2], Some(15.0));
    }

    #[test]
    fn label_fidelity_at_large_lambda() {
        let w = weather(0..20);
        let d = deployment(4, 4);
        let win = WindowConfig::new(1, 1, 4).unwrap();
        let mut c = config(win, &d, &w, ForecasterKind::Persistence);
        c.propagation.lambda = 1e9;
        let mut st = PipelineState::bootstrap(c, d, &[r(0, 4, 5.0)], &w, 4).unwrap();
        let out = st.step(&[r(0, 5, 10.0), r(2, 5, 30.0)], &[]).unwrap();
        for (f, y) in out.prediction.values.iter().zip(&out.pre_estimate.values) {
            assert!((f - y).abs() < 1e-6);
        }
    }

    #[test]
    fn snapshot_round_trip_and_replay() {
        let w = weather(0..30);
        let d = deployment(4, 2);
        let win = WindowConfig::new(1, 1, 4).unwrap();
        let c = config(win, &d, &w, ForecasterKind::Lstm);
        let init = [r(0, 0, 10.0), r(1, 1, 12.0), r(0, 2, 11.0), r(1, 3, 14.0), r(0, 4, 13.0)];
        let stream = |t: Slot| vec![r((t % 2) as usize, t, 10.0 + (t % 3) as f64)];
        let mut a = PipelineState::bootstrap(c, d, &init, &w, 4).unwrap();
        for t in 5..9 {
            a.step(&stream(t), &[]).unwrap();
        }
        let text = a.to_snapshot().unwrap();
        let mut b = PipelineState::<f64>::from_snapshot(&text).unwrap();
        for t in 9..14 {
            let pa = a.step(&stream(t), &[]).unwrap().prediction;
            let pb = b.step(&stream(t), &[]).unwrap().prediction;
            assert_eq!(pa, pb);
        }
        let bad = text.replace("\"version\":1", "\"version\":2");
        assert!(matches!(PipelineState::<f64>::from_snapshot(&bad), Err(Error::Snapshot(_))));
    }

    #[test]
    fn runs_in_single_precision() {
        let w = weather(0..20);
        let d = deployment(4, 2);
        let win = WindowConfig::new(1, 1, 4).unwrap();
        let c64 = config(win, &d, &w, ForecasterKind::Persistence);
        let mut c = PipelineConfig::<f32>::new(win, c64.norm.clone());
        c.forecaster = ForecasterKind::Persistence;
        c.similarity = SimilarityParams::new(2.0, 0.0, 200).unwrap();
        let mut st = PipelineState::bootstrap(c, d, &[r(0, 4, 5.0), r(1, 3, 7.0)], &w, 4).unwrap();
        let out = st.step(&[r(0, 5, 6.0)], &[]).unwrap();
        assert!(out.prediction.values.iter().all(|v| v.is_finite()));
    }
}
