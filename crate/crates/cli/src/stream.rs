//! Drives a pipeline over a data directory, one step per slot.
//!
//! Slots are counted from the first weather record `s0`. The stream
//! bootstraps at the first full window holding a reading and forecasts by
//! persistence until `s0 + warmup`; after that step the configured
//! forecaster is fitted on the coarse history and used from then on. The
//! switch depends only on the anchor, so a resumed stream makes it at the
//! same slot as an uninterrupted one.

use std::collections::BTreeMap;

use corrgraph::experiment::fit_norm_on;
use corrgraph::{ForecasterKind, Pipeline, PipelineConfig, Reading, Slot, StepOutput, Weights};
use log::info;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::Dataset;

pub struct Stream<'a> {
    cfg: &'a RunConfig,
    data: &'a Dataset,
    by_slot: BTreeMap<Slot, Vec<Reading>>,
    state: Pipeline,
    switch_at: Slot,
    last_anchor: Slot,
}

fn check_shape(cfg: &RunConfig, data: &Dataset) -> Result<()> {
    let (l, m) = (data.deployment.l(), data.deployment.m());
    if l != cfg.l || m != cfg.m {
        return Err(CliError::data(
            &data.dir,
            format!("deployment has L = {l}, M = {m} but the configuration says L = {}, M = {}", cfg.l, cfg.m),
        ));
    }
    Ok(())
}

fn bounds(cfg: &RunConfig, data: &Dataset) -> Result<(Slot, Slot, Slot)> {
    let s0 = data.weather.first_slot().expect("dataset has weather");
    let end = data.weather.last_slot().expect("dataset has weather");
    let first_anchor = s0 + cfg.t_h as Slot;
    if end < first_anchor + cfg.t_f as Slot {
        return Err(CliError::data(
            &data.dir,
            format!("weather covers slots {s0}..={end}, shorter than one window of {} slots", cfg.t_h + cfg.t_f + 1),
        ));
    }
    Ok((s0, s0 + cfg.warmup.max(cfg.t_h) as Slot, end - cfg.t_f as Slot))
}

impl<'a> Stream<'a> {
    pub fn start(cfg: &'a RunConfig, data: &'a Dataset, weights: Option<Weights>) -> Result<Self> {
        check_shape(cfg, data)?;
        let (s0, switch_at, last_anchor) = bounds(cfg, data)?;
        let window = cfg.window()?;
        let norm = fit_norm_on(&data.deployment, &data.weather, s0..=switch_at.min(last_anchor + cfg.t_f as Slot))?;
        let mut pc = PipelineConfig::new(window, norm);
        pc.similarity = cfg.similarity()?;
        pc.propagation = cfg.propagation();
        pc.training = cfg.training();
        pc.context = cfg.context;
        pc.history = cfg.history;
        if let Some(w) = weights {
            pc.weights = w;
        }

        let by_slot = data.by_slot();
        let has_reading = |a: Slot| by_slot.range(a - cfg.t_h as Slot..=a).next().is_some();
        let mut start = s0 + cfg.t_h as Slot;
        while start < last_anchor && !has_reading(start) {
            start += 1;
        }
        if !has_reading(start) {
            return Err(CliError::data(&data.dir, "no window of the data holds a reading"));
        }
        pc.forecaster = if start >= switch_at { cfg.forecaster } else { ForecasterKind::Persistence };
        let initial: Vec<Reading> = by_slot.range(..=start).flat_map(|(_, v)| v.iter().copied()).collect();
        let mut weather = corrgraph::WeatherSeries::new();
        for w in data.weather.iter().take_while(|w| w.slot <= window.last_slot(start)) {
            weather.insert(*w)?;
        }
        let state = Pipeline::bootstrap(pc, data.deployment.clone(), &initial, &weather, start)?;
        info!("bootstrapped at slot {start}; persistence until slot {switch_at}");
        Ok(Self { cfg, data, by_slot, state, switch_at, last_anchor })
    }

    pub fn resume(cfg: &'a RunConfig, data: &'a Dataset, snapshot: &str) -> Result<Self> {
        check_shape(cfg, data)?;
        let (_, switch_at, last_anchor) = bounds(cfg, data)?;
        let state = Pipeline::from_snapshot(snapshot)?;
        if state.deployment() != &data.deployment {
            return Err(CliError::data(&data.dir, "snapshot was taken on a different deployment"));
        }
        if state.config().window != cfg.window()? {
            return Err(CliError::Usage("snapshot window differs from the configured T_h, T_f".into()));
        }
        info!("resuming after slot {}", state.anchor());
        Ok(Self { cfg, data, by_slot: data.by_slot(), state, switch_at, last_anchor })
    }

    /// Stops after the step anchored at `slot`.
    pub fn until(&mut self, slot: Slot) {
        self.last_anchor = self.last_anchor.min(slot);
    }

    pub fn state(&self) -> &Pipeline {
        &self.state
    }

    pub fn last_anchor(&self) -> Slot {
        self.last_anchor
    }

    /// Whether the step at `anchor` lies past the warmup.
    pub fn scored(&self, anchor: Slot) -> bool {
        anchor > self.switch_at
    }

    pub fn next_step(&mut self) -> Result<Option<StepOutput<f64>>> {
        let t = self.state.anchor() + 1;
        if t > self.last_anchor {
            return Ok(None);
        }
        let readings = self.by_slot.get(&t).map_or(&[][..], Vec::as_slice);
        let future = t + self.cfg.t_f as Slot;
        let weather = [*self.data.weather.get(future)?];
        let out = self.state.step(readings, &weather)?;
        if t >= self.switch_at && self.state.config().forecaster != self.cfg.forecaster {
            self.state.set_forecaster(self.cfg.forecaster)?;
            info!("fitted {:?} forecaster after slot {t}", self.cfg.forecaster);
        }
        Ok(Some(out))
    }
}

/// Start of the scored slots of a dataset under `cfg`: anchors strictly
/// after this slot.
pub fn warmup_end(cfg: &RunConfig, data: &Dataset) -> Result<Slot> {
    Ok(bounds(cfg, data)?.1)
}
