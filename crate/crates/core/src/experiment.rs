//! Synthetic end-to-end comparison of graph propagation against IDW.
//!
//! A scenario is generated and normalization is fitted on the warmup slots.
//! The pipeline is bootstrapped at the first full window and streamed through
//! the warmup with persistence forecasting; the configured forecaster is then
//! fitted on the coarse history the stream produced, and the evaluation slots
//! follow. At every slot both methods are scored on the unlabeled
//! POIs of the current slot, IDW using exactly the readings the pipeline holds
//! for the window's past and current slots.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{idw_predict, median_nn_spacing, node_relative_error, ErrorReport, SlotError, SpaceTimeSample};
use crate::features::{raw_features, FeatureWeights, NormStats, WeatherSeries, K};
use crate::forecast::{ForecasterKind, TrainConfig};
use crate::graph::SimilarityParams;
use crate::model::{Deployment, Slot, WindowConfig};
use crate::pipeline::{PipelineConfig, PipelineState};
use crate::propagate::PropagationParams;
use crate::simgen::{generate, Scenario, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub t_h: usize,
    pub t_f: usize,
    pub similarity: SimilarityParams<f64>,
    pub propagation: PropagationParams<f64>,
    pub weights: Option<FeatureWeights<f64>>,
    pub forecaster: ForecasterKind,
    pub training: TrainConfig,
    /// Slots streamed before the first evaluated anchor.
    pub warmup: usize,
    pub eval_slots: usize,
    pub idw_power: f64,
    /// Meters per slot for IDW; the median nearest-neighbour sensor spacing
    /// when absent.
    pub idw_time_scale: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            t_h: 5,
            t_f: 3,
            similarity: SimilarityParams::default(),
            propagation: PropagationParams::default(),
            weights: None,
            forecaster: ForecasterKind::Lstm,
            training: TrainConfig::default(),
            warmup: 96,
            eval_slots: 100,
            idw_power: 2.0,
            idw_time_scale: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub cg: ErrorReport,
    pub idw: ErrorReport,
    /// Slots skipped because the window held no readings at all.
    pub skipped: usize,
    pub max_step: Duration,
}

impl ExperimentResult {
    pub fn cg_mean(&self) -> f64 {
        self.cg.mean().unwrap_or(f64::NAN)
    }

    pub fn idw_mean(&self) -> f64 {
        self.idw.mean().unwrap_or(f64::NAN)
    }
}

/// Normalization fitted on every POI over the given slots.
pub fn fit_norm(scenario: &Scenario, slots: std::ops::RangeInclusive<Slot>) -> Result<NormStats> {
    fit_norm_on(&scenario.deployment, &scenario.weather, slots)
}

pub fn fit_norm_on(deployment: &Deployment, weather: &WeatherSeries, slots: std::ops::RangeInclusive<Slot>) -> Result<NormStats> {
    let mut rows: Vec<[f64; K]> = Vec::new();
    for slot in slots {
        let w = weather.get(slot)?;
        rows.extend(deployment.pois().iter().map(|p| raw_features(p.coord, slot, w)));
    }
    NormStats::fit(rows.iter())
}

/// Scenario length the experiment needs: warmup, evaluation and the future
/// subgraphs of the last anchor.
pub fn required_slots(cfg: &ExperimentConfig) -> usize {
    cfg.warmup + cfg.eval_slots + cfg.t_f + 1
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let mut sc = cfg.scenario.clone();
    sc.slots = sc.slots.max(required_slots(cfg));
    let scenario = generate(&sc)?;
    run_on(cfg, &scenario)
}

/// Runs the comparison on an existing scenario.
pub fn run_on(cfg: &ExperimentConfig, scenario: &Scenario) -> Result<ExperimentResult> {
    if cfg.warmup < cfg.t_h {
        return Err(Error::Config(format!("warmup {} must cover T_h = {}", cfg.warmup, cfg.t_h)));
    }
    if scenario.config.slots < required_slots(cfg) {
        return Err(Error::Config(format!("scenario has {} slots, experiment needs {}", scenario.config.slots, required_slots(cfg))));
    }
    let window = WindowConfig::new(cfg.t_h, cfg.t_f, scenario.config.l)?;
    let anchor0 = cfg.warmup as Slot;
    let norm = fit_norm(scenario, 0..=anchor0)?;
    let mut pc = PipelineConfig::new(window, norm);
    pc.similarity = cfg.similarity;
    pc.propagation = cfg.propagation;
    pc.forecaster = ForecasterKind::Persistence;
    pc.training = cfg.training;
    if let Some(w) = &cfg.weights {
        pc.weights = w.clone();
    }
    // First full window that holds a reading.
    let mut start = cfg.t_h as Slot;
    while start < anchor0 && scenario.readings_in(window.first_slot(start)?..=start).next().is_none() {
        start += 1;
    }
    let initial: Vec<_> = scenario.readings_in(0..=start).copied().collect();
    let mut state = PipelineState::bootstrap(pc, scenario.deployment.clone(), &initial, &scenario.weather, start)?;
    for t in (start + 1)..=anchor0 {
        let new: Vec<_> = scenario.readings_in(t..=t).copied().collect();
        state.step(&new, &[])?;
    }
    state.set_forecaster(cfg.forecaster)?;

    let sensor_coords: Vec<[f64; 3]> =
        scenario.deployment.sensors().iter().map(|s| scenario.deployment.pois()[s.poi].coord).collect();
    let time_scale = cfg.idw_time_scale.unwrap_or_else(|| median_nn_spacing(&sensor_coords));
    let l = window.l;
    let mut result = ExperimentResult { cg: ErrorReport::default(), idw: ErrorReport::default(), skipped: 0, max_step: Duration::ZERO };
    for t in (anchor0 + 1)..=(anchor0 + cfg.eval_slots as Slot) {
        let new: Vec<_> = scenario.readings_in(t..=t).copied().collect();
        let started = Instant::now();
        let out = state.step(&new, &[])?;
        result.max_step = result.max_step.max(started.elapsed());

        let first = window.first_slot(t)?;
        let mut samples = Vec::new();
        for slot in first..=t {
            for poi in 0..l {
                if let Some(v) = state.labels().get(slot, poi) {
                    samples.push(SpaceTimeSample { coord: scenario.deployment.pois()[poi].coord, slot, value: v });
                }
            }
        }
        let current = cfg.t_h * l;
        let targets: Vec<usize> = (0..l).filter(|&poi| out.labels[current + poi].is_none()).collect();
        if samples.is_empty() || targets.is_empty() {
            result.skipped += 1;
            continue;
        }
        let (mut cg_sum, mut idw_sum) = (0.0, 0.0);
        for &poi in &targets {
            let truth = scenario.truth_at(t, poi).ok_or_else(|| Error::MissingData(format!("truth for POI {poi} at {t}")))?;
            cg_sum += node_relative_error(out.prediction.values[current + poi], truth);
            let est = idw_predict(&samples, scenario.deployment.pois()[poi].coord, t, cfg.idw_power, time_scale)?;
            idw_sum += node_relative_error(est, truth);
        }
        let n = targets.len();
        result.cg.push(SlotError { slot: t, mean_rel_err: cg_sum / n as f64, n_nodes: n });
        result.idw.push(SlotError { slot: t, mean_rel_err: idw_sum / n as f64, n_nodes: n });
    }
    Ok(result)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Contract("spearman needs two equal-length samples of at least 2".into()));
    }
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (vx * vy).sqrt())
}
