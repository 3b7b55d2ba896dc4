use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use corrgraph::eval::{idw_predict, median_nn_spacing, relative_error, ErrorReport, Scope, SlotError, SpaceTimeSample};
use corrgraph::experiment::{run_experiment, spearman};
use corrgraph::graph::graph_stats;
use corrgraph::model::node_at;
use corrgraph::simgen::{expected_sparsity, generate};
use corrgraph::tune::{parse_weights, report_text, run_ga, weights_text, TuningSlot};
use corrgraph::{Pred, Slot, StepOutput, Tuning, Weights, WindowConfig};
use log::{info, warn};
use serde::Deserialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::{self, Dataset, PredictionRow};
use crate::stream::{warmup_end, Stream};

pub const STATE_FILE: &str = "state.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn load_beta(path: Option<&Path>) -> Result<Option<Weights>> {
    let Some(p) = path else { return Ok(None) };
    let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
    parse_weights(&text).map(Some).map_err(|e| CliError::data(p, e.to_string()))
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<String> {
    let sc = cfg.scenario();
    let scenario = generate(&sc)?;
    io::write_scenario(out, &scenario)?;
    Ok(format!(
        "wrote {} slots, {} readings to {}\nexpected sparsity {}\n",
        sc.slots,
        scenario.readings.len(),
        out.display(),
        expected_sparsity(&sc)
    ))
}

fn prediction_rows(out: &StepOutput<f64>, window: &WindowConfig, buf: &mut String) -> Result<()> {
    let t = out.prediction.anchor;
    for (idx, v) in out.prediction.values.iter().enumerate() {
        let node = node_at(idx, window, t)?;
        let labeled = u8::from(out.labels[idx].is_some());
        let _ = writeln!(buf, "{t},{},{},{v},{labeled}", node.poi, node.offset(t));
    }
    Ok(())
}

/// Anchor slot of the last row of an existing predictions file.
fn last_predicted_slot(path: &Path) -> Result<Option<Slot>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let rows = io::parse_table::<PredictionRow>(path, &text, io::PREDICTIONS)?;
    Ok(rows.last().map(|(_, r)| r.slot))
}

pub struct PredictArgs<'a> {
    pub data: &'a Path,
    pub out: &'a Path,
    pub beta: Option<&'a Path>,
    pub resume: Option<&'a Path>,
    pub until: Option<Slot>,
}

pub fn predict(cfg: &RunConfig, args: &PredictArgs) -> Result<String> {
    let data = Dataset::load(args.data)?;
    create_dir(args.out)?;
    let pred_path = args.out.join(PREDICTIONS_FILE);
    let (mut stream, file) = match args.resume {
        Some(snap) => {
            if args.beta.is_some() {
                return Err(CliError::Usage("--beta cannot be combined with --resume; weights come from the snapshot".into()));
            }
            let text = fs::read_to_string(snap).map_err(|e| CliError::io(snap, e))?;
            let stream = Stream::resume(cfg, &data, &text)?;
            let file = if pred_path.exists() {
                if let Some(last) = last_predicted_slot(&pred_path)? {
                    if last != stream.state().anchor() {
                        return Err(CliError::data(
                            &pred_path,
                            format!("ends at slot {last} but the snapshot is at slot {}", stream.state().anchor()),
                        ));
                    }
                }
                OpenOptions::new().append(true).open(&pred_path).map_err(|e| CliError::io(&pred_path, e))?
            } else {
                let mut f = File::create(&pred_path).map_err(|e| CliError::io(&pred_path, e))?;
                f.write_all(io::preamble(io::PREDICTIONS).as_bytes()).map_err(|e| CliError::io(&pred_path, e))?;
                f
            };
            (stream, file)
        }
        None => {
            let stream = Stream::start(cfg, &data, load_beta(args.beta)?)?;
            let mut f = File::create(&pred_path).map_err(|e| CliError::io(&pred_path, e))?;
            f.write_all(io::preamble(io::PREDICTIONS).as_bytes()).map_err(|e| CliError::io(&pred_path, e))?;
            (stream, f)
        }
    };
    if let Some(u) = args.until {
        stream.until(u);
    }
    let window = stream.state().config().window;
    let mut w = BufWriter::new(file);
    let mut buf = String::new();
    let mut steps = 0usize;
    while let Some(out) = stream.next_step()? {
        buf.clear();
        prediction_rows(&out, &window, &mut buf)?;
        w.write_all(buf.as_bytes()).map_err(|e| CliError::io(&pred_path, e))?;
        steps += 1;
    }
    w.flush().map_err(|e| CliError::io(&pred_path, e))?;
    let state_path = args.out.join(STATE_FILE);
    io::write_file(&state_path, &stream.state().to_snapshot()?)?;
    Ok(format!("{steps} steps, last slot {}; state in {}\n", stream.state().anchor(), state_path.display()))
}

pub fn tune(cfg: &RunConfig, data_dir: &Path, out: &Path, beta: Option<&Path>) -> Result<String> {
    let data = Dataset::load(data_dir)?;
    let mut stream = Stream::start(cfg, &data, load_beta(beta)?)?;
    let window = stream.state().config().window;
    let mut slots = Vec::new();
    while let Some(step) = stream.next_step()? {
        if stream.scored(step.prediction.anchor) {
            slots.push(TuningSlot::from_step(&step, &window));
        }
    }
    if slots.is_empty() {
        return Err(CliError::data(data_dir, "no slots after the warmup to tune on"));
    }
    let mut set = Tuning::new(slots)?;
    if let Some(count) = cfg.tuning_slots {
        if count < set.slots().len() {
            set = set.subsample(count, cfg.seed)?;
        }
    }
    info!("tuning on {} slots", set.slots().len());
    let outcome = run_ga(&set, &cfg.objective()?, &cfg.ga())?;
    create_dir(out)?;
    io::write_file(&out.join("beta.txt"), &weights_text(&outcome.weights))?;
    io::write_file(&out.join("tune_report.txt"), &report_text(&outcome))?;
    Ok(format!(
        "{} generations on {} slots, best fitness {}\n",
        outcome.history.len(),
        set.slots().len(),
        outcome.best_fitness
    ))
}

pub struct EvaluateArgs<'a> {
    pub data: &'a Path,
    pub predictions: &'a Path,
    pub truth: &'a Path,
    pub out: &'a Path,
}

/// Per-slot CG and IDW errors over the scored anchors of a predictions file.
pub fn evaluate_reports(cfg: &RunConfig, args: &EvaluateArgs) -> Result<(ErrorReport, ErrorReport)> {
    let data = Dataset::load(args.data)?;
    let truth = io::load_truth(args.truth)?;
    let rows = io::load_predictions(args.predictions)?;
    let window = cfg.window()?;
    if data.deployment.l() != window.l {
        return Err(CliError::data(args.data, format!("deployment has {} POIs, configuration says L = {}", data.deployment.l(), window.l)));
    }
    let after = warmup_end(cfg, &data)?;
    let n = window.n();
    let pois = data.deployment.pois();
    let sensor_coords: Vec<[f64; 3]> = data.deployment.sensors().iter().map(|s| pois[s.poi].coord).collect();
    let time_scale = cfg.idw_time_scale.unwrap_or_else(|| median_nn_spacing(&sensor_coords));

    let mut labels: BTreeMap<(Slot, usize), (f64, u32)> = BTreeMap::new();
    for r in &data.readings {
        let e = labels.entry((r.slot, data.deployment.poi_of(r.sensor)?)).or_insert((0.0, 0));
        e.0 += r.value;
        e.1 += 1;
    }

    let (mut cg, mut idw) = (ErrorReport::default(), ErrorReport::default());
    if rows.len() % n != 0 {
        return Err(CliError::data(args.predictions, format!("{} rows do not split into windows of {n} nodes", rows.len())));
    }
    for (chunk_no, chunk) in rows.chunks(n).enumerate() {
        let t = chunk[0].slot;
        for (idx, r) in chunk.iter().enumerate() {
            let node = node_at(idx, &window, t)?;
            if r.slot != t || r.poi != node.poi || r.subgraph_offset != node.offset(t) {
                let line = chunk_no * n + idx + 3;
                return Err(CliError::data(args.predictions, format!("line {line}: rows are not in window order")));
            }
        }
        if t <= after {
            continue;
        }
        let pred = Pred::new(t, chunk.iter().map(|r| r.value).collect())?;
        let labeled: Vec<bool> = chunk.iter().map(|r| r.labeled == 1).collect();
        let first = window.first_slot(t)?;
        let samples: Vec<SpaceTimeSample<f64>> = labels
            .range((first, 0)..=(t, usize::MAX))
            .map(|(&(slot, poi), &(s, c))| SpaceTimeSample { coord: pois[poi].coord, slot, value: s / c as f64 })
            .collect();
        let range = match cfg.scope {
            Scope::CurrentSubgraph => window.t_h * window.l..(window.t_h + 1) * window.l,
            Scope::WholeWindow => 0..n,
        };
        let targets: Vec<usize> = range.filter(|&i| !labeled[i]).collect();
        if samples.is_empty() || targets.is_empty() {
            warn!("slot {t}: nothing to score");
            continue;
        }
        let truth_at = |slot: Slot, poi: usize| truth.get(&(slot, poi)).copied();
        cg.push(relative_error(&pred, &window, &labeled, truth_at, cfg.scope)?);
        let mut sum = 0.0;
        for &idx in &targets {
            let node = node_at(idx, &window, t)?;
            let est = idw_predict(&samples, pois[node.poi].coord, node.slot, cfg.idw_power, time_scale)?;
            let tv = truth_at(node.slot, node.poi).expect("checked by the CG score");
            sum += corrgraph::eval::node_relative_error(est, tv);
        }
        idw.push(SlotError { slot: t, mean_rel_err: sum / targets.len() as f64, n_nodes: targets.len() });
    }
    Ok((cg, idw))
}

pub fn evaluate(cfg: &RunConfig, args: &EvaluateArgs) -> Result<String> {
    let (cg, idw) = evaluate_reports(cfg, args)?;
    let scope = cfg.scope.name();
    let mut s = io::preamble(io::METRICS);
    for (c, i) in cg.slots.iter().zip(&idw.slots) {
        let _ = writeln!(s, "{},cg,{scope},{},{}", c.slot, c.mean_rel_err, c.n_nodes);
        let _ = writeln!(s, "{},idw,{scope},{},{}", i.slot, i.mean_rel_err, i.n_nodes);
    }
    let mut summary = String::new();
    for (name, r) in [("cg", &cg), ("idw", &idw)] {
        let Some(mean) = r.mean() else { continue };
        let _ = writeln!(s, "all,{name},{scope},{mean},{}", r.n_nodes());
        let _ = writeln!(summary, "{name}: mean relative error {mean:.4} over {} slots", r.slots.len());
    }
    if cg.slots.is_empty() {
        summary.push_str("no slots scored\n");
    }
    create_dir(args.out)?;
    io::write_file(&args.out.join("metrics.csv"), &s)?;
    Ok(summary)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepManifest {
    #[serde(default)]
    pub m: Vec<usize>,
    /// `[T_h, T_f]` pairs.
    #[serde(default)]
    pub windows: Vec<[usize; 2]>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_eval_slots")]
    pub eval_slots: usize,
}

fn default_eval_slots() -> usize {
    100
}

impl SweepManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let m: SweepManifest =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e.to_string().trim_end())))?;
        if m.seeds.is_empty() || (m.m.is_empty() && m.windows.is_empty()) || m.eval_slots == 0 {
            return Err(CliError::Usage(format!("{}: a sweep needs seeds, eval_slots > 0 and an m or windows list", path.display())));
        }
        Ok(m)
    }
}

/// Pooled CG and IDW means over seeds.
fn sweep_point(cfg: &RunConfig, seeds: &[u64], eval_slots: usize) -> Result<(f64, f64)> {
    let (mut cg, mut idw) = (0.0, 0.0);
    for &seed in seeds {
        let mut ex = cfg.experiment(eval_slots)?;
        ex.scenario.seed = seed;
        let r = run_experiment(&ex)?;
        info!("M = {}, T_h = {}, T_f = {}, seed {seed}: cg {} idw {}", cfg.m, cfg.t_h, cfg.t_f, r.cg_mean(), r.idw_mean());
        cg += r.cg_mean();
        idw += r.idw_mean();
    }
    Ok((cg / seeds.len() as f64, idw / seeds.len() as f64))
}

pub fn sweep(cfg: &RunConfig, manifest: &Path, out: &Path) -> Result<String> {
    let man = SweepManifest::load(manifest)?;
    create_dir(out)?;
    let runs = man.seeds.len();
    let mut summary = String::new();
    if !man.m.is_empty() {
        let mut s = format!("{}\nm,method,mean_rel_err,runs\n", io::version_line("sweep-m"));
        let mut cg_means = Vec::new();
        for &m in &man.m {
            let c = RunConfig { m, ..cfg.clone() };
            c.validate()?;
            let (cg, idw) = sweep_point(&c, &man.seeds, man.eval_slots)?;
            let _ = writeln!(s, "{m},cg,{cg},{runs}\n{m},idw,{idw},{runs}");
            cg_means.push(cg);
        }
        io::write_file(&out.join("sweep_m.csv"), &s)?;
        if man.m.len() >= 2 {
            let ms: Vec<f64> = man.m.iter().map(|&m| m as f64).collect();
            let _ = writeln!(summary, "spearman(M, cg error) = {}", spearman(&ms, &cg_means)?);
        }
    }
    if !man.windows.is_empty() {
        let mut s = format!("{}\nt_h,t_f,method,mean_rel_err,runs\n", io::version_line("sweep-window"));
        for &[t_h, t_f] in &man.windows {
            let c = RunConfig { t_h, t_f, ..cfg.clone() };
            c.validate()?;
            let (cg, idw) = sweep_point(&c, &man.seeds, man.eval_slots)?;
            let _ = writeln!(s, "{t_h},{t_f},cg,{cg},{runs}\n{t_h},{t_f},idw,{idw},{runs}");
        }
        io::write_file(&out.join("sweep_window.csv"), &s)?;
    }
    let _ = writeln!(summary, "sweep tables in {}", out.display());
    Ok(summary)
}

pub struct InspectArgs<'a> {
    pub data: &'a Path,
    pub slot: Slot,
    pub beta: Option<&'a Path>,
    pub resume: Option<&'a Path>,
    pub out: Option<&'a Path>,
}

pub fn inspect_graph(cfg: &RunConfig, args: &InspectArgs) -> Result<String> {
    let data = Dataset::load(args.data)?;
    let mut stream = match args.resume {
        Some(snap) => {
            let text = fs::read_to_string(snap).map_err(|e| CliError::io(snap, e))?;
            Stream::resume(cfg, &data, &text)?
        }
        None => Stream::start(cfg, &data, load_beta(args.beta)?)?,
    };
    if args.slot <= stream.state().anchor() || args.slot > stream.last_anchor() {
        return Err(CliError::Usage(format!(
            "slot {} is outside the streamable range {}..={}",
            args.slot,
            stream.state().anchor() + 1,
            stream.last_anchor()
        )));
    }
    stream.until(args.slot);
    while stream.next_step()?.is_some() {}
    let g = stream.state().graph().expect("a step was taken");
    let valid = g.validate_strict().map_or_else(|e| e.to_string(), |_| "ok".to_string());
    let st = graph_stats(g, 10);
    let mut s = format!("{}\n", io::version_line("graph-stats"));
    let _ = writeln!(s, "slot,{}", args.slot);
    for (k, v) in [("nodes", st.nodes), ("labeled", st.labeled), ("edges", st.edges)] {
        let _ = writeln!(s, "{k},{v}");
    }
    for (k, v) in [
        ("weight_min", st.weight_min),
        ("weight_max", st.weight_max),
        ("weight_mean", st.weight_mean),
        ("degree_min", st.degree_min),
        ("degree_max", st.degree_max),
        ("degree_mean", st.degree_mean),
    ] {
        let _ = writeln!(s, "{k},{v}");
    }
    let _ = writeln!(s, "invariants,{valid}");
    s.push_str("degree_lo,degree_hi,count\n");
    for (lo, hi, c) in &st.degree_histogram {
        let _ = writeln!(s, "{lo},{hi},{c}");
    }
    if let Some(out) = args.out {
        create_dir(out)?;
        let path: PathBuf = out.join(format!("graph_{}.txt", args.slot));
        io::write_file(&path, &s)?;
        return Ok(format!("graph stats in {}\n", path.display()));
    }
    Ok(s)
}
