//! Coarse-grained forecasting of the newly added subgraph.
//!
//! The forecaster sees one row per slot, `[μ_τ, meteorological features of
//! τ]`, and predicts `μ_{τ+1}`. Two implementations exist: persistence (the
//! last observed mean) and a single-layer LSTM with a scalar linear head,
//! trained by full-sequence backpropagation through time and plain gradient
//! descent.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Prediction, Slot, WindowConfig};
use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CoarsePoint<T: Scalar> {
    pub slot: Slot,
    pub mu: T,
    pub weather: Vec<T>,
}

impl<T: Scalar> CoarsePoint<T> {
    fn row(&self, mean: T, scale: T) -> Vec<T> {
        let mut r = Vec::with_capacity(1 + self.weather.len());
        r.push((self.mu - mean) / scale);
        r.extend_from_slice(&self.weather);
        r
    }
}

/// Per-slot coarse means over contiguous slots, paired with the slot's
/// meteorological features.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CoarseSeries<T: Scalar> {
    points: Vec<CoarsePoint<T>>,
}

impl<T: Scalar> CoarseSeries<T> {
    pub fn new() -> Self {
        Self { points: Vec::new() }
    }

    /// Overwrites the point at `slot` or appends it right after the last one.
    pub fn upsert(&mut self, slot: Slot, mu: T, weather: Vec<T>) -> Result<()> {
        if !mu.is_finite() || weather.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numerical(format!("coarse point for slot {slot} is not finite")));
        }
        if let Some(first) = self.points.first() {
            if weather.len() != first.weather.len() {
                return Err(Error::Contract(format!(
                    "weather row has {} entries, series uses {}",
                    weather.len(),
                    first.weather.len()
                )));
            }
        }
        let point = CoarsePoint { slot, mu, weather };
        match self.points.last().map(|p| p.slot) {
            None => self.points.push(point),
            Some(last) if slot == last + 1 => self.points.push(point),
            Some(last) if slot <= last => {
                let first = self.points[0].slot;
                if slot < first {
                    return Err(Error::Contract(format!("slot {slot} precedes the series start {first}")));
                }
                self.points[(slot - first) as usize] = point;
            }
            Some(last) => {
                return Err(Error::Contract(format!("slot {slot} leaves a gap after {last}")));
            }
        }
        Ok(())
    }

    /// Drops the oldest points so that at most `keep` remain.
    pub fn keep_last(&mut self, keep: usize) {
        if self.points.len() > keep {
            self.points.drain(..self.points.len() - keep);
        }
    }

    pub fn points(&self) -> &[CoarsePoint<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> Option<&CoarsePoint<T>> {
        self.points.last()
    }

    pub fn mus(&self) -> Vec<T> {
        self.points.iter().map(|p| p.mu).collect()
    }
}

/// Mean of each subgraph's `l` entries, oldest subgraph first.
pub fn coarse_means<T: Scalar>(prev: &Prediction<T>, window: &WindowConfig) -> Result<Vec<T>> {
    if prev.values.len() != window.n() {
        return Err(Error::Contract(format!(
            "prediction has {} entries but the window has {}",
            prev.values.len(),
            window.n()
        )));
    }
    let l = T::of(window.l as f64);
    Ok(prev.values.chunks_exact(window.l).map(|c| c.iter().copied().sum::<T>() / l).collect())
}

/// Last observed coarse mean.
pub fn persistence_forecast<T: Scalar>(series: &CoarseSeries<T>) -> Result<T> {
    series.last().map(|p| p.mu).ok_or_else(|| Error::Contract("persistence forecast of an empty series".into()))
}

/// Gate blocks are stacked in the order input, forget, output, candidate.
const GATES: usize = 4;
const FORGET: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LstmParams<T: Scalar> {
    pub input: usize,
    pub hidden: usize,
    /// `4H × I`, row-major.
    pub wx: Vec<T>,
    /// `4H × H`, row-major.
    pub wh: Vec<T>,
    /// `4H`.
    pub b: Vec<T>,
    /// `H`.
    pub w_out: Vec<T>,
    pub b_out: T,
}

impl<T: Scalar> LstmParams<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input,
            hidden,
            wx: vec![T::zero(); GATES * hidden * input],
            wh: vec![T::zero(); GATES * hidden * hidden],
            b: vec![T::zero(); GATES * hidden],
            w_out: vec![T::zero(); hidden],
            b_out: T::zero(),
        }
    }

    /// Uniform in [-0.1, 0.1] with forget-gate biases set to 1.
    pub fn init(input: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(input, hidden);
        for v in p.values_mut() {
            *v = T::of(rng.random_range(-0.1..=0.1));
        }
        for v in &mut p.b[FORGET * hidden..(FORGET + 1) * hidden] {
            *v = T::one();
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let (i, h) = (self.input, self.hidden);
        if h == 0 || i == 0 {
            return Err(Error::Contract("LSTM needs positive input and hidden sizes".into()));
        }
        let ok = self.wx.len() == GATES * h * i
            && self.wh.len() == GATES * h * h
            && self.b.len() == GATES * h
            && self.w_out.len() == h;
        if !ok {
            return Err(Error::Contract("LSTM parameter shapes do not match the sizes".into()));
        }
        if self.values().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("LSTM parameters are not finite".into()));
        }
        Ok(())
    }

    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.wx.iter().chain(&self.wh).chain(&self.b).chain(&self.w_out).chain(std::iter::once(&self.b_out))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.wx
            .iter_mut()
            .chain(self.wh.iter_mut())
            .chain(self.b.iter_mut())
            .chain(self.w_out.iter_mut())
            .chain(std::iter::once(&mut self.b_out))
    }

    pub fn len(&self) -> usize {
        self.values().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows `[gate*H, (gate+1)*H)` of the stacked input weights.
    pub fn gate_rows_mut(&mut self, gate: usize) -> (&mut [T], &mut [T], &mut [T]) {
        let (h, i) = (self.hidden, self.input);
        (
            &mut self.wx[gate * h * i..(gate + 1) * h * i],
            &mut self.wh[gate * h * h..(gate + 1) * h * h],
            &mut self.b[gate * h..(gate + 1) * h],
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmOutput<T: Scalar> {
    pub outputs: Vec<T>,
    pub h: Vec<T>,
    pub c: Vec<T>,
}

struct StepCache<T> {
    h_prev: Vec<T>,
    c_prev: Vec<T>,
    /// Activated gates, stacked like the parameters.
    gates: Vec<T>,
    tanh_c: Vec<T>,
    h: Vec<T>,
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn check_rows<T: Scalar>(p: &LstmParams<T>, inputs: &[Vec<T>]) -> Result<()> {
    if let Some((t, r)) = inputs.iter().enumerate().find(|(_, r)| r.len() != p.input) {
        return Err(Error::Contract(format!("input row {t} has {} entries, expected {}", r.len(), p.input)));
    }
    Ok(())
}

fn run<T: Scalar>(p: &LstmParams<T>, inputs: &[Vec<T>]) -> Result<(Vec<T>, Vec<StepCache<T>>)> {
    p.validate()?;
    check_rows(p, inputs)?;
    let hdim = p.hidden;
    let mut h = vec![T::zero(); hdim];
    let mut c = vec![T::zero(); hdim];
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut caches = Vec::with_capacity(inputs.len());
    for (t, x) in inputs.iter().enumerate() {
        let mut gates = vec![T::zero(); GATES * hdim];
        for (r, z) in gates.iter_mut().enumerate() {
            let pre = p.b[r]
                + dot(&p.wx[r * p.input..(r + 1) * p.input], x)
                + dot(&p.wh[r * hdim..(r + 1) * hdim], &h);
            *z = if r < 3 * hdim { sigmoid(pre) } else { pre.tanh() };
        }
        let mut c_new = vec![T::zero(); hdim];
        let mut tanh_c = vec![T::zero(); hdim];
        let mut h_new = vec![T::zero(); hdim];
        for k in 0..hdim {
            let (ig, fg, og, gg) = (gates[k], gates[hdim + k], gates[2 * hdim + k], gates[3 * hdim + k]);
            c_new[k] = fg * c[k] + ig * gg;
            tanh_c[k] = c_new[k].tanh();
            h_new[k] = og * tanh_c[k];
        }
        let y = dot(&p.w_out, &h_new) + p.b_out;
        if !y.is_finite() || c_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("LSTM state became non-finite at step {t}")));
        }
        outputs.push(y);
        caches.push(StepCache {
            h_prev: std::mem::replace(&mut h, h_new.clone()),
            c_prev: std::mem::replace(&mut c, c_new),
            gates,
            tanh_c,
            h: h_new,
        });
    }
    Ok((outputs, caches))
}

/// Runs the recurrence from a zero state and returns every step's output and
/// the final hidden and cell states.
pub fn lstm_forward<T: Scalar>(params: &LstmParams<T>, inputs: &[Vec<T>]) -> Result<LstmOutput<T>> {
    let (outputs, caches) = run(params, inputs)?;
    let (h, c) = match caches.last() {
        Some(last) => {
            let hdim = params.hidden;
            let mut c = vec![T::zero(); hdim];
            for k in 0..hdim {
                c[k] = last.gates[hdim + k] * last.c_prev[k] + last.gates[k] * last.gates[3 * hdim + k];
            }
            (last.h.clone(), c)
        }
        None => (vec![T::zero(); params.hidden], vec![T::zero(); params.hidden]),
    };
    Ok(LstmOutput { outputs, h, c })
}

fn mse<T: Scalar>(outputs: &[T], targets: &[T]) -> T {
    if outputs.is_empty() {
        return T::zero();
    }
    outputs.iter().zip(targets).map(|(&y, &t)| (y - t) * (y - t)).sum::<T>() / T::of(outputs.len() as f64)
}

/// Mean squared error over the sequence.
pub fn sequence_loss<T: Scalar>(params: &LstmParams<T>, inputs: &[Vec<T>], targets: &[T]) -> Result<T> {
    if inputs.len() != targets.len() {
        return Err(Error::Contract(format!("{} inputs but {} targets", inputs.len(), targets.len())));
    }
    let (outputs, _) = run(params, inputs)?;
    Ok(mse(&outputs, targets))
}

/// Loss and its gradient with respect to every parameter, by
/// backpropagation through time over the whole sequence.
pub fn loss_and_gradient<T: Scalar>(
    params: &LstmParams<T>,
    inputs: &[Vec<T>],
    targets: &[T],
) -> Result<(T, LstmParams<T>)> {
    if inputs.len() != targets.len() {
        return Err(Error::Contract(format!("{} inputs but {} targets", inputs.len(), targets.len())));
    }
    let (outputs, caches) = run(params, inputs)?;
    let hdim = params.hidden;
    let idim = params.input;
    let mut grad = LstmParams::zeros(idim, hdim);
    let steps = inputs.len();
    if steps == 0 {
        return Ok((T::zero(), grad));
    }
    let two = T::one() + T::one();
    let scale = two / T::of(steps as f64);
    let mut dh_next = vec![T::zero(); hdim];
    let mut dc_next = vec![T::zero(); hdim];
    let mut dz = vec![T::zero(); GATES * hdim];
    for t in (0..steps).rev() {
        let cache = &caches[t];
        let dy = scale * (outputs[t] - targets[t]);
        grad.b_out += dy;
        for k in 0..hdim {
            grad.w_out[k] += dy * cache.h[k];
        }
        for k in 0..hdim {
            let (ig, fg, og, gg) =
                (cache.gates[k], cache.gates[hdim + k], cache.gates[2 * hdim + k], cache.gates[3 * hdim + k]);
            let dh = params.w_out[k] * dy + dh_next[k];
            let tc = cache.tanh_c[k];
            let dc = dh * og * (T::one() - tc * tc) + dc_next[k];
            let d_o = dh * tc;
            let d_i = dc * gg;
            let d_g = dc * ig;
            let d_f = dc * cache.c_prev[k];
            dc_next[k] = dc * fg;
            dz[k] = d_i * ig * (T::one() - ig);
            dz[hdim + k] = d_f * fg * (T::one() - fg);
            dz[2 * hdim + k] = d_o * og * (T::one() - og);
            dz[3 * hdim + k] = d_g * (T::one() - gg * gg);
        }
        let x = &inputs[t];
        for (r, &d) in dz.iter().enumerate() {
            grad.b[r] += d;
            for (gw, &xv) in grad.wx[r * idim..(r + 1) * idim].iter_mut().zip(x) {
                *gw += d * xv;
            }
            for (gw, &hv) in grad.wh[r * hdim..(r + 1) * hdim].iter_mut().zip(&cache.h_prev) {
                *gw += d * hv;
            }
        }
        for k in 0..hdim {
            dh_next[k] = (0..GATES * hdim).map(|r| params.wh[r * hdim + k] * dz[r]).sum();
        }
    }
    Ok((mse(&outputs, targets), grad))
}

/// Largest relative discrepancy between the analytic gradient and central
/// finite differences with step 1e-5.
pub fn grad_check<T: Scalar>(params: &LstmParams<T>, inputs: &[Vec<T>], targets: &[T]) -> Result<T> {
    grad_check_with(params, inputs, targets, |_| {})
}

/// [`grad_check`] with a hook that may alter the analytic gradient before the
/// comparison.
pub fn grad_check_with<T: Scalar>(
    params: &LstmParams<T>,
    inputs: &[Vec<T>],
    targets: &[T],
    tamper: impl FnOnce(&mut LstmParams<T>),
) -> Result<T> {
    let (_, mut analytic) = loss_and_gradient(params, inputs, targets)?;
    tamper(&mut analytic);
    let step = T::of(1e-5);
    let floor = T::of(1e-6);
    let mut probe = params.clone();
    let analytic: Vec<T> = analytic.values().copied().collect();
    let mut worst = T::zero();
    for (idx, &a) in analytic.iter().enumerate() {
        let original = *probe.values_mut().nth(idx).expect("index in range");
        *probe.values_mut().nth(idx).expect("index in range") = original + step;
        let up = sequence_loss(&probe, inputs, targets)?;
        *probe.values_mut().nth(idx).expect("index in range") = original - step;
        let down = sequence_loss(&probe, inputs, targets)?;
        *probe.values_mut().nth(idx).expect("index in range") = original;
        let numeric = (up - down) / (step + step);
        let denom = a.abs().max(numeric.abs()).max(floor);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { hidden: 16, learning_rate: 0.05, epochs: 200, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome<T: Scalar> {
    pub params: LstmParams<T>,
    /// Training loss before each epoch's update, then after the last one.
    pub losses: Vec<T>,
}

/// Plain gradient descent on the sequence MSE.
pub fn fit_sequence<T: Scalar>(inputs: &[Vec<T>], targets: &[T], cfg: &TrainConfig) -> Result<FitOutcome<T>> {
    let width = inputs.first().map(|r| r.len()).ok_or_else(|| Error::Contract("no training rows".into()))?;
    if !(cfg.learning_rate > 0.0) || cfg.hidden == 0 {
        return Err(Error::Config("LSTM training needs a positive learning rate and hidden size".into()));
    }
    let mut params = LstmParams::init(width, cfg.hidden, cfg.seed);
    let lr = T::of(cfg.learning_rate);
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..cfg.epochs {
        let (l, g) = loss_and_gradient(&params, inputs, targets).map_err(|e| match e {
            Error::Numerical(_) => Error::Training { epoch, loss: f64::NAN },
            other => other,
        })?;
        if !l.is_finite() {
            return Err(Error::Training { epoch, loss: l.as_f64() });
        }
        losses.push(l);
        for (p, &d) in params.values_mut().zip(g.values()) {
            *p -= lr * d;
        }
    }
    let last = sequence_loss(&params, inputs, targets)
        .map_err(|_| Error::Training { epoch: cfg.epochs, loss: f64::NAN })?;
    if !last.is_finite() {
        return Err(Error::Training { epoch: cfg.epochs, loss: last.as_f64() });
    }
    losses.push(last);
    Ok(FitOutcome { params, losses })
}

/// Trained LSTM together with the standardization of the coarse means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LstmForecaster<T: Scalar> {
    pub params: LstmParams<T>,
    /// Standardization of the μ input column.
    pub level_mean: T,
    pub level_scale: T,
    /// Standardization of the predicted increment `μ_{τ+1} - μ_τ`.
    pub step_mean: T,
    pub step_scale: T,
    /// Number of trailing slots fed to the recurrence when forecasting.
    pub context: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedLstm<T: Scalar> {
    pub forecaster: LstmForecaster<T>,
    pub losses: Vec<T>,
}

/// Fits the one-step forecaster on a coarse series.
///
/// The network reads standardized levels and predicts the standardized
/// increment to the next slot, which is added back to the last level. Both
/// standardizations use the series mean and population deviation (a
/// deviation below 1e-9 becomes 1). Losses are in standardized units.
pub fn lstm_train<T: Scalar>(series: &CoarseSeries<T>, cfg: &TrainConfig, context: usize) -> Result<TrainedLstm<T>> {
    if series.len() < 4 {
        return Err(Error::Contract(format!("LSTM training needs at least 4 slots, got {}", series.len())));
    }
    let mus = series.mus();
    let steps: Vec<T> = mus.windows(2).map(|w| w[1] - w[0]).collect();
    let (level_mean, level_scale) = standardization(&mus);
    let (step_mean, step_scale) = standardization(&steps);
    let points = series.points();
    let inputs: Vec<Vec<T>> = points[..points.len() - 1].iter().map(|p| p.row(level_mean, level_scale)).collect();
    let targets: Vec<T> = steps.iter().map(|&d| (d - step_mean) / step_scale).collect();
    let fit = fit_sequence(&inputs, &targets, cfg)?;
    Ok(TrainedLstm {
        forecaster: LstmForecaster {
            params: fit.params,
            level_mean,
            level_scale,
            step_mean,
            step_scale,
            context: context.max(1),
        },
        losses: fit.losses,
    })
}

fn standardization<T: Scalar>(xs: &[T]) -> (T, T) {
    let n = T::of(xs.len() as f64);
    let mean = xs.iter().copied().sum::<T>() / n;
    let std = (xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n).sqrt();
    (mean, if std > T::of(1e-9) { std } else { T::one() })
}

impl<T: Scalar> LstmForecaster<T> {
    /// Forecast of the slot right after the series end.
    pub fn predict_next(&self, series: &CoarseSeries<T>) -> Result<T> {
        let points = series.points();
        if points.is_empty() {
            return Err(Error::Contract("forecast from an empty series".into()));
        }
        let start = points.len().saturating_sub(self.context);
        let rows: Vec<Vec<T>> = points[start..].iter().map(|p| p.row(self.level_mean, self.level_scale)).collect();
        let out = lstm_forward(&self.params, &rows)?;
        let y = *out.outputs.last().expect("non-empty");
        let last = points[points.len() - 1].mu;
        let next = last + y * self.step_scale + self.step_mean;
        if !next.is_finite() {
            return Err(Error::Numerical("LSTM forecast is not finite".into()));
        }
        Ok(next)
    }

    /// Iterated one-step rollout: forecasts `future.len() + 1` slots past the
    /// series end, feeding each forecast back in with the supplied weather of
    /// the intermediate slots.
    pub fn rollout(&self, series: &CoarseSeries<T>, future: &[Vec<T>]) -> Result<Vec<T>> {
        let mut work = series.clone();
        let mut out = Vec::with_capacity(future.len() + 1);
        let mut next = self.predict_next(&work)?;
        out.push(next);
        for w in future {
            let slot = work.last().expect("non-empty").slot + 1;
            work.upsert(slot, next, w.clone())?;
            next = self.predict_next(&work)?;
            out.push(next);
        }
        Ok(out)
    }

    /// Plain-text form: a version line, `key value` scalars, then each
    /// matrix as `name rows cols` followed by `rows` lines of `cols`
    /// whitespace-separated numbers (row-major).
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut s = String::from("# corrgraph lstm v1\n");
        let _ = writeln!(s, "input_size {}", p.input);
        let _ = writeln!(s, "hidden_size {}", p.hidden);
        let _ = writeln!(s, "context {}", self.context);
        let _ = writeln!(s, "level_mean {}", self.level_mean);
        let _ = writeln!(s, "level_scale {}", self.level_scale);
        let _ = writeln!(s, "step_mean {}", self.step_mean);
        let _ = writeln!(s, "step_scale {}", self.step_scale);
        let mut matrix = |name: &str, rows: usize, cols: usize, data: &[T]| {
            let _ = writeln!(s, "{name} {rows} {cols}");
            for r in 0..rows {
                let line: Vec<String> = data[r * cols..(r + 1) * cols].iter().map(|v| v.to_string()).collect();
                let _ = writeln!(s, "{}", line.join(" "));
            }
        };
        matrix("wx", GATES * p.hidden, p.input, &p.wx);
        matrix("wh", GATES * p.hidden, p.hidden, &p.wh);
        matrix("b", 1, GATES * p.hidden, &p.b);
        matrix("w_out", 1, p.hidden, &p.w_out);
        matrix("b_out", 1, 1, std::slice::from_ref(&p.b_out));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Snapshot(format!("lstm file line {line}: {msg}"));
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
        match lines.next() {
            Some((_, "# corrgraph lstm v1")) => {}
            Some((n, other)) => return Err(bad(n, &format!("unsupported header {other:?}"))),
            None => return Err(Error::Snapshot("empty lstm file".into())),
        }
        let parse_num = |n: usize, tok: &str| tok.parse::<T>().map_err(|_| bad(n, &format!("bad number {tok:?}")));
        let (mut input, mut hidden, mut context) = (None, None, None);
        let mut stats: [Option<T>; 4] = [None; 4];
        let mut mats: std::collections::BTreeMap<String, (usize, usize, Vec<T>)> = Default::default();
        while let Some((n, line)) = lines.next() {
            let toks: Vec<&str> = line.split_whitespace().collect();
            match toks.as_slice() {
                ["input_size", v] => input = v.parse().ok(),
                ["hidden_size", v] => hidden = v.parse().ok(),
                ["context", v] => context = v.parse().ok(),
                ["level_mean", v] => stats[0] = Some(parse_num(n, v)?),
                ["level_scale", v] => stats[1] = Some(parse_num(n, v)?),
                ["step_mean", v] => stats[2] = Some(parse_num(n, v)?),
                ["step_scale", v] => stats[3] = Some(parse_num(n, v)?),
                [name @ ("wx" | "wh" | "b" | "w_out" | "b_out"), r, c] => {
                    let rows: usize = r.parse().map_err(|_| bad(n, "bad row count"))?;
                    let cols: usize = c.parse().map_err(|_| bad(n, "bad column count"))?;
                    let mut data = Vec::with_capacity(rows * cols);
                    for _ in 0..rows {
                        let (rn, row) = lines.next().ok_or_else(|| bad(n, "matrix truncated"))?;
                        let vals = row.split_whitespace().map(|t| parse_num(rn, t)).collect::<Result<Vec<T>>>()?;
                        if vals.len() != cols {
                            return Err(bad(rn, &format!("expected {cols} numbers, found {}", vals.len())));
                        }
                        data.extend(vals);
                    }
                    mats.insert(name.to_string(), (rows, cols, data));
                }
                _ => return Err(bad(n, &format!("unrecognized line {line:?}"))),
            }
        }
        let missing = |what: &str| Error::Snapshot(format!("lstm file lacks {what}"));
        let input = input.ok_or_else(|| missing("input_size"))?;
        let hidden = hidden.ok_or_else(|| missing("hidden_size"))?;
        let mut take = |name: &str| mats.remove(name).map(|m| m.2).ok_or_else(|| missing(name));
        let params = LstmParams {
            input,
            hidden,
            wx: take("wx")?,
            wh: take("wh")?,
            b: take("b")?,
            w_out: take("w_out")?,
            b_out: *take("b_out")?.first().ok_or_else(|| missing("b_out value"))?,
        };
        params.validate().map_err(|e| Error::Snapshot(e.to_string()))?;
        Ok(Self {
            params,
            level_mean: stats[0].ok_or_else(|| missing("level_mean"))?,
            level_scale: stats[1].ok_or_else(|| missing("level_scale"))?,
            step_mean: stats[2].ok_or_else(|| missing("step_mean"))?,
            step_scale: stats[3].ok_or_else(|| missing("step_scale"))?,
            context: context.ok_or_else(|| missing("context"))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForecasterKind {
    Lstm,
    Persistence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub enum Forecaster<T: Scalar> {
    Persistence,
    Lstm(LstmForecaster<T>),
}

impl<T: Scalar> Forecaster<T> {
    pub fn forecast_next(&self, series: &CoarseSeries<T>) -> Result<T> {
        match self {
            Forecaster::Persistence => persistence_forecast(series),
            Forecaster::Lstm(f) => f.predict_next(series),
        }
    }

    pub fn kind(&self) -> ForecasterKind {
        match self {
            Forecaster::Persistence => ForecasterKind::Persistence,
            Forecaster::Lstm(_) => ForecasterKind::Lstm,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn series(mus: &[f64], width: usize) -> CoarseSeries<f64> {
        let mut s = CoarseSeries::new();
        for (i, &m) in mus.iter().enumerate() {
            let w: Vec<f64> = (0..width).map(|k| ((i * 7 + k * 3) % 5) as f64 * 0.1).collect();
            s.upsert(i as Slot, m, w).unwrap();
        }
        s
    }

    fn random_rows(seed: u64, steps: usize, width: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..steps).map(|_| (0..width).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let targets = (0..steps).map(|_| rng.random_range(-1.0..1.0)).collect();
        (rows, targets)
    }

    #[test]
    fn coarse_means_examples() {
        let w = WindowConfig::new(1, 1, 2).unwrap();
        let f = Prediction::new(3, vec![1.0, 3.0, 5.0, 7.0, 9.0, 11.0]).unwrap();
        assert_eq!(coarse_means(&f, &w).unwrap(), vec![2.0, 6.0, 10.0]);
        let w3 = WindowConfig::new(1, 1, 3).unwrap();
        let f = Prediction::new(3, vec![4.0; 9]).unwrap();
        assert_eq!(coarse_means(&f, &w3).unwrap(), vec![4.0; 3]);
        let f = Prediction::new(3, vec![1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(coarse_means(&f, &w3).unwrap()[0], 2.0);
    }

    #[test]
    fn persistence_examples() {
        assert_eq!(persistence_forecast(&series(&[3.0, 4.0, 5.0], 1)).unwrap(), 5.0);
        assert_eq!(persistence_forecast(&series(&[7.0], 1)).unwrap(), 7.0);
        assert_eq!(persistence_forecast(&series(&[2.5; 6], 1)).unwrap(), 2.5);
        assert!(persistence_forecast(&CoarseSeries::<f64>::new()).is_err());
    }

    #[test]
    fn series_upsert_rules() {
        let mut s = series(&[1.0, 2.0, 3.0], 2);
        s.upsert(1, 9.0, vec![0.0, 0.0]).unwrap();
        assert_eq!(s.mus(), vec![1.0, 9.0, 3.0]);
        assert!(s.upsert(5, 1.0, vec![0.0, 0.0]).is_err());
        assert!(s.upsert(3, 1.0, vec![0.0]).is_err());
        s.keep_last(2);
        assert_eq!(s.points()[0].slot, 1);
    }

    #[test]
    fn zero_params_give_zero_outputs() {
        let p = LstmParams::<f64>::zeros(3, 4);
        let (rows, _) = random_rows(1, 5, 3);
        let out = lstm_forward(&p, &rows).unwrap();
        assert_eq!(out.outputs, vec![0.0; 5]);
        assert_eq!(out.h, vec![0.0; 4]);
        assert_eq!(out.c, vec![0.0; 4]);
    }

    #[test]
    fn empty_sequence() {
        let p = LstmParams::<f64>::init(3, 4, 2);
        let out = lstm_forward(&p, &[]).unwrap();
        assert!(out.outputs.is_empty());
        assert_eq!(out.h, vec![0.0; 4]);
        assert_eq!(grad_check(&p, &[], &[]).unwrap(), 0.0);
    }

    #[test]
    fn forward_is_stateless() {
        let p = LstmParams::<f64>::init(3, 5, 9);
        let (rows, _) = random_rows(4, 7, 3);
        assert_eq!(lstm_forward(&p, &rows).unwrap(), lstm_forward(&p, &rows).unwrap());
    }

    #[test]
    fn forward_rejects_bad_width() {
        let p = LstmParams::<f64>::init(3, 2, 0);
        assert!(matches!(lstm_forward(&p, &[vec![0.0; 2]]), Err(Error::Contract(_))));
    }

    #[test]
    fn forward_finite_for_large_parameters() {
        let mut p = LstmParams::<f64>::init(4, 6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for v in p.values_mut() {
            *v = rng.random_range(-10.0..10.0);
        }
        let rows: Vec<Vec<f64>> = (0..30).map(|_| (0..4).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
        assert!(lstm_forward(&p, &rows).unwrap().outputs.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..20u64 {
            let hidden = 1 + (seed as usize % 8);
            let steps = 1 + (seed as usize % 10);
            let width = 1 + (seed as usize % 4);
            let p = LstmParams::<f64>::init(width, hidden, seed);
            let mut p = p;
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            for v in p.values_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
            let (rows, targets) = random_rows(seed, steps, width);
            let err = grad_check(&p, &rows, &targets).unwrap();
            assert!(err < 1e-4, "seed {seed}: relative gradient error {err}");
        }
    }

    #[test]
    fn corrupted_forget_gradient_is_detected() {
        let mut p = LstmParams::<f64>::init(3, 4, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        for v in p.values_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let (rows, targets) = random_rows(6, 6, 3);
        let err = grad_check_with(&p, &rows, &targets, |g| {
            let (wx, wh, b) = g.gate_rows_mut(FORGET);
            for v in wx.iter_mut().chain(wh.iter_mut()).chain(b.iter_mut()) {
                *v *= 1.5;
            }
        })
        .unwrap();
        assert!(err > 1e-2, "tampered gradient passed with error {err}");
    }

    #[test]
    fn constant_series_is_learned() {
        let rows: Vec<Vec<f64>> = (0..12).map(|_| vec![0.5, 0.1, -0.2]).collect();
        let targets = vec![0.5; 12];
        let cfg = TrainConfig { hidden: 8, learning_rate: 0.1, epochs: 200, seed: 1 };
        let fit = fit_sequence(&rows, &targets, &cfg).unwrap();
        assert!(*fit.losses.last().unwrap() < 1e-3, "final loss {:?}", fit.losses.last());
        assert!(fit.losses.last().unwrap() <= fit.losses.first().unwrap());

        let trained = lstm_train(&series(&[42.0; 12], 3), &cfg, 8).unwrap();
        assert!(*trained.losses.last().unwrap() < 1e-3);
        assert_relative_eq!(trained.forecaster.predict_next(&series(&[42.0; 12], 3)).unwrap(), 42.0, epsilon = 0.5);
    }

    #[test]
    fn training_is_deterministic() {
        let s = series(&[1.0, 3.0, 2.0, 5.0, 4.0, 6.0, 5.5, 7.0], 2);
        let cfg = TrainConfig { hidden: 4, learning_rate: 0.05, epochs: 30, seed: 77 };
        let a = lstm_train(&s, &cfg, 8).unwrap();
        let b = lstm_train(&s, &cfg, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported() {
        let s = series(&[1.0, 30.0, -20.0, 50.0, 4.0, 60.0], 2);
        let cfg = TrainConfig { hidden: 4, learning_rate: 1e6, epochs: 50, seed: 1 };
        assert!(matches!(lstm_train(&s, &cfg, 8), Err(Error::Training { .. })));
    }

    #[test]
    fn ramp_beats_persistence_on_held_out_tail() {
        let mus: Vec<f64> = (0..40).map(|i| 20.0 + 0.5 * i as f64).collect();
        let full = series(&mus, 2);
        let train_points = CoarseSeries { points: full.points()[..30].to_vec() };
        let cfg = TrainConfig { hidden: 8, learning_rate: 0.05, epochs: 400, seed: 3 };
        let model = lstm_train(&train_points, &cfg, 16).unwrap().forecaster;
        let (mut lstm_err, mut pers_err) = (0.0, 0.0);
        for end in 30..40 {
            let ctx = CoarseSeries { points: full.points()[..end].to_vec() };
            let truth = mus[end];
            lstm_err += (model.predict_next(&ctx).unwrap() - truth).abs();
            pers_err += (persistence_forecast(&ctx).unwrap() - truth).abs();
        }
        assert!(lstm_err < pers_err, "lstm {lstm_err} vs persistence {pers_err}");
    }

    #[test]
    fn text_round_trip() {
        let s = series(&[1.0, 3.0, 2.0, 5.0, 4.0, 6.0], 2);
        let cfg = TrainConfig { hidden: 3, learning_rate: 0.05, epochs: 5, seed: 2 };
        let f = lstm_train(&s, &cfg, 4).unwrap().forecaster;
        let back = LstmForecaster::<f64>::from_text(&f.to_text()).unwrap();
        assert_eq!(back, f);
        assert!(LstmForecaster::<f64>::from_text("# corrgraph lstm v2\n").is_err());
    }

    #[test]
    fn rollout_first_step_matches_predict_next() {
        let s = series(&[1.0, 3.0, 2.0, 5.0, 4.0, 6.0], 2);
        let cfg = TrainConfig { hidden: 3, learning_rate: 0.05, epochs: 5, seed: 2 };
        let f = lstm_train(&s, &cfg, 4).unwrap().forecaster;
        let r = f.rollout(&s, &[vec![0.0, 0.1], vec![0.2, 0.0]]).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r[0], f.predict_next(&s).unwrap());
    }
}
