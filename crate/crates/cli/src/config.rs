//! Run configuration: one TOML file. The model parameters keep their usual
//! symbols as keys (`L`, `M`, `T_h`, `alpha_1`, `E`, ...).

use std::path::Path;

use corrgraph::eval::Scope;
use corrgraph::experiment::ExperimentConfig;
use corrgraph::graph::SimilarityParams;
use corrgraph::simgen::{FieldParams, ScenarioConfig};
use corrgraph::tune::{GaConfig, Objective};
use corrgraph::{ForecasterKind, PropagationParams, Solver, TrainConfig, WindowConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self { hidden: t.hidden, learning_rate: t.learning_rate, epochs: t.epochs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub alpha_1: f64,
    pub alpha_2: f64,
    #[serde(rename = "T_h")]
    pub t_h: usize,
    #[serde(rename = "T_f")]
    pub t_f: usize,
    #[serde(rename = "R")]
    pub r: usize,
    pub k: usize,
    pub lambda: f64,
    pub p_c: f64,
    pub p_m: f64,
    #[serde(rename = "E")]
    pub e: usize,
    /// Informational; slots are integers everywhere else.
    pub slot_length_minutes: f64,
    pub seed: u64,

    pub population: usize,
    pub max_generations: usize,
    /// Slots drawn for the tuning set; all streamed slots when absent.
    pub tuning_slots: Option<usize>,

    pub forecaster: ForecasterKind,
    pub solver: Solver,
    pub tol: f64,
    pub max_iter: usize,
    /// Slots after the first weather record streamed with persistence
    /// forecasting before the configured forecaster is fitted. These slots
    /// are not scored or used for tuning.
    pub warmup: usize,
    pub context: usize,
    pub history: usize,
    pub scope: Scope,
    pub idw_power: f64,
    pub idw_time_scale: Option<f64>,

    pub slots: usize,
    pub wake_probability: f64,
    pub noise_std: f64,
    pub region: [f64; 3],
    pub field: FieldParams,
    pub training: TrainingSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ga = GaConfig::default();
        let sc = ScenarioConfig::default();
        let ex = ExperimentConfig::default();
        let prop = PropagationParams::<f64>::default();
        Self {
            l: 60,
            m: 30,
            alpha_1: 20.0,
            alpha_2: 0.0,
            t_h: 5,
            t_f: 3,
            r: ga.r,
            k: 200,
            lambda: 0.3,
            p_c: ga.p_c,
            p_m: ga.p_m,
            e: ga.e,
            slot_length_minutes: 5.0,
            seed: 0,
            population: ga.population,
            max_generations: ga.max_generations,
            tuning_slots: None,
            forecaster: ForecasterKind::Lstm,
            solver: prop.solver,
            tol: prop.tol,
            max_iter: prop.max_iter,
            warmup: ex.warmup,
            context: 48,
            history: 1024,
            scope: Scope::CurrentSubgraph,
            idw_power: ex.idw_power,
            idw_time_scale: None,
            slots: 300,
            wake_probability: sc.wake_probability,
            noise_std: sc.noise_std,
            region: sc.region,
            field: sc.field,
            training: TrainingSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {}", e.to_string().trim_end())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults when `path` is absent.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        WindowConfig::new(self.t_h, self.t_f, self.l)?;
        self.similarity()?;
        self.propagation().validate()?;
        self.ga().validate()?;
        self.scenario().validate()?;
        if !(self.slot_length_minutes > 0.0) || !self.slot_length_minutes.is_finite() {
            return Err(CliError::Usage(format!("slot_length_minutes must be positive, got {}", self.slot_length_minutes)));
        }
        if self.context == 0 || self.history < 4 {
            return Err(CliError::Usage("context must be positive and history at least 4".into()));
        }
        if self.training.hidden == 0 || self.training.epochs == 0 || !(self.training.learning_rate > 0.0) {
            return Err(CliError::Usage("training needs positive hidden size, epochs and learning rate".into()));
        }
        if !(self.idw_power > 0.0) || self.idw_time_scale.is_some_and(|s| !(s >= 0.0)) {
            return Err(CliError::Usage("idw_power must be positive and idw_time_scale non-negative".into()));
        }
        if self.tuning_slots == Some(0) {
            return Err(CliError::Usage("tuning_slots must be at least 1".into()));
        }
        Ok(())
    }

    pub fn window(&self) -> Result<WindowConfig> {
        Ok(WindowConfig::new(self.t_h, self.t_f, self.l)?)
    }

    pub fn similarity(&self) -> Result<SimilarityParams<f64>> {
        Ok(SimilarityParams::new(self.alpha_1, self.alpha_2, self.k)?)
    }

    pub fn propagation(&self) -> PropagationParams<f64> {
        PropagationParams { lambda: self.lambda, solver: self.solver, tol: self.tol, max_iter: self.max_iter }
    }

    pub fn training(&self) -> TrainConfig {
        TrainConfig {
            hidden: self.training.hidden,
            learning_rate: self.training.learning_rate,
            epochs: self.training.epochs,
            seed: self.seed,
        }
    }

    pub fn ga(&self) -> GaConfig {
        GaConfig {
            population: self.population,
            p_c: self.p_c,
            p_m: self.p_m,
            e: self.e,
            r: self.r,
            seed: self.seed,
            max_generations: self.max_generations,
            ..GaConfig::default()
        }
    }

    pub fn objective(&self) -> Result<Objective<f64>> {
        Ok(Objective { similarity: self.similarity()?, lambda: self.lambda })
    }

    pub fn scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            l: self.l,
            m: self.m,
            slots: self.slots,
            wake_probability: self.wake_probability,
            noise_std: self.noise_std,
            region: self.region,
            field: self.field,
            seed: self.seed,
        }
    }

    /// Experiment harness settings scoring `eval_slots` slots after warmup.
    pub fn experiment(&self, eval_slots: usize) -> Result<ExperimentConfig> {
        Ok(ExperimentConfig {
            scenario: self.scenario(),
            t_h: self.t_h,
            t_f: self.t_f,
            similarity: self.similarity()?,
            propagation: self.propagation(),
            weights: None,
            forecaster: self.forecaster,
            training: self.training(),
            warmup: self.warmup,
            eval_slots,
            idw_power: self.idw_power,
            idw_time_scale: self.idw_time_scale,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn table_names_parse() {
        let cfg = RunConfig::from_toml("L = 12\nM = 6\nT_h = 2\nT_f = 1\nalpha_1 = 5.0\nk = 8\nE = 7\n").unwrap();
        assert_eq!((cfg.l, cfg.m, cfg.t_h, cfg.t_f, cfg.k, cfg.e), (12, 6, 2, 1, 8, 7));
        assert_eq!(cfg.alpha_1, 5.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml("lamda = 0.3\n").unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("lamda"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in ["wake_probability = 0.0", "lambda = -1.0", "alpha_2 = 1.0", "M = 61", "population = 3", "k = 0"] {
            assert_eq!(RunConfig::from_toml(text).unwrap_err().exit_code(), 1, "{text}");
        }
    }

    #[test]
    fn sections_parse() {
        let cfg = RunConfig::from_toml("forecaster = \"persistence\"\nscope = \"whole-window\"\n[field]\namplitude = 9.0\n[training]\nepochs = 5\n").unwrap();
        assert_eq!(cfg.forecaster, ForecasterKind::Persistence);
        assert_eq!(cfg.scope, Scope::WholeWindow);
        assert_eq!(cfg.field.amplitude, 9.0);
        assert_eq!(cfg.field.baseline, FieldParams::default().baseline);
        assert_eq!(cfg.training.epochs, 5);
    }
}
