//! Domain types and sliding-window node indexing.
//!
//! A window anchored at slot `t` covers slots `t - t_h ..= t + t_f`, each
//! holding one subgraph of `l` nodes. Node `n` of the window sits at slot
//! `t - t_h + n / l` and POI `n % l`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Absolute time-slot index.
pub type Slot = u64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub id: usize,
    /// (x, y, z) in meters.
    pub coord: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sensor {
    pub id: usize,
    pub poi: usize,
}

/// One measurement reported by a sensor for a slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub sensor: usize,
    pub slot: Slot,
    pub value: f64,
}

impl Reading {
    pub fn validate(&self) -> Result<()> {
        if !self.value.is_finite() || self.value < 0.0 {
            return Err(Error::range("reading value", self.value, "[0, inf)"));
        }
        Ok(())
    }
}

/// The fixed set of POIs and the sensors mounted on them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pois: Vec<Poi>,
    sensors: Vec<Sensor>,
}

impl Deployment {
    /// Validates dense ids, finite coordinates and one sensor per POI at most.
    pub fn new(pois: Vec<Poi>, sensors: Vec<Sensor>) -> Result<Self> {
        for (i, p) in pois.iter().enumerate() {
            if p.id != i {
                return Err(Error::Contract(format!("POI ids must be dense: position {i} holds id {}", p.id)));
            }
            if p.coord.iter().any(|c| !c.is_finite()) {
                return Err(Error::Contract(format!("POI {i} has a non-finite coordinate")));
            }
        }
        if pois.is_empty() {
            return Err(Error::Contract("deployment needs at least one POI".into()));
        }
        let mut taken = vec![false; pois.len()];
        for (i, s) in sensors.iter().enumerate() {
            if s.id != i {
                return Err(Error::Contract(format!("sensor ids must be dense: position {i} holds id {}", s.id)));
            }
            if s.poi >= pois.len() {
                return Err(Error::range("sensor POI", s.poi, format!("[0, {})", pois.len())));
            }
            if std::mem::replace(&mut taken[s.poi], true) {
                return Err(Error::Contract(format!("POI {} carries more than one sensor", s.poi)));
            }
        }
        Ok(Self { pois, sensors })
    }

    pub fn pois(&self) -> &[Poi] {
        &self.pois
    }

    pub fn sensors(&self) -> &[Sensor] {
        &self.sensors
    }

    pub fn l(&self) -> usize {
        self.pois.len()
    }

    pub fn m(&self) -> usize {
        self.sensors.len()
    }

    pub fn poi_of(&self, sensor: usize) -> Result<usize> {
        self.sensors
            .get(sensor)
            .map(|s| s.poi)
            .ok_or_else(|| Error::range("sensor id", sensor, format!("[0, {})", self.sensors.len())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub t_h: usize,
    pub t_f: usize,
    pub l: usize,
}

impl WindowConfig {
    pub fn new(t_h: usize, t_f: usize, l: usize) -> Result<Self> {
        let w = Self { t_h, t_f, l };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_h < 1 {
            return Err(Error::range("T_h", self.t_h, "[1, inf)"));
        }
        if self.t_f < 1 {
            return Err(Error::range("T_f", self.t_f, "[1, inf)"));
        }
        if self.l < 1 {
            return Err(Error::range("L", self.l, "[1, inf)"));
        }
        Ok(())
    }

    /// Subgraphs per window, `t_h + t_f + 1`.
    pub fn subgraphs(&self) -> usize {
        self.t_h + self.t_f + 1
    }

    /// Total node count N.
    pub fn n(&self) -> usize {
        self.subgraphs() * self.l
    }

    /// Oldest slot of the window anchored at `anchor`.
    pub fn first_slot(&self, anchor: Slot) -> Result<Slot> {
        anchor
            .checked_sub(self.t_h as Slot)
            .ok_or_else(|| Error::range("anchor slot", anchor, format!("[{}, inf) for T_h = {}", self.t_h, self.t_h)))
    }

    pub fn last_slot(&self, anchor: Slot) -> Slot {
        anchor + self.t_f as Slot
    }

    /// Slots covered by the window, oldest first.
    pub fn slots(&self, anchor: Slot) -> Result<std::ops::RangeInclusive<Slot>> {
        Ok(self.first_slot(anchor)?..=self.last_slot(anchor))
    }
}

/// A node of the window anchored at some slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub slot: Slot,
    pub poi: usize,
    pub index: usize,
}

impl NodeId {
    /// Slot offset relative to the anchor, in `[-t_h, t_f]`.
    pub fn offset(&self, anchor: Slot) -> i64 {
        self.slot as i64 - anchor as i64
    }
}

/// Dense index of `(slot, poi)` in the window anchored at `anchor`.
pub fn flat_index(slot: Slot, poi: usize, window: &WindowConfig, anchor: Slot) -> Result<usize> {
    let first = window.first_slot(anchor)?;
    let last = window.last_slot(anchor);
    if slot < first || slot > last {
        return Err(Error::range("slot", slot, format!("[{first}, {last}]")));
    }
    if poi >= window.l {
        return Err(Error::range("poi", poi, format!("[0, {})", window.l)));
    }
    Ok((slot - first) as usize * window.l + poi)
}

/// Inverse of [`flat_index`].
pub fn node_at(index: usize, window: &WindowConfig, anchor: Slot) -> Result<NodeId> {
    if index >= window.n() {
        return Err(Error::range("node index", index, format!("[0, {})", window.n())));
    }
    let first = window.first_slot(anchor)?;
    Ok(NodeId { slot: first + (index / window.l) as Slot, poi: index % window.l, index })
}

/// All nodes of a window in index order.
pub fn window_nodes(window: &WindowConfig, anchor: Slot) -> Result<Vec<NodeId>> {
    (0..window.n()).map(|n| node_at(n, window, anchor)).collect()
}

/// Position of node `n` of the window at `t` inside the window at `t - 1`.
///
/// Rolling the window forward by one slot shifts every surviving node down by
/// `l`; the `l` nodes of the newly added subgraph have no predecessor.
pub fn carry_index(index: usize, window: &WindowConfig) -> Result<Option<usize>> {
    let n = window.n();
    if index >= n {
        return Err(Error::range("node index", index, format!("[0, {n})")));
    }
    let prev = index + window.l;
    Ok((prev < n).then_some(prev))
}

/// Weighted correlation graph over one window.
///
/// Weights are stored dense and row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CorrelationGraph<T: Scalar> {
    anchor: Slot,
    window: Option<WindowConfig>,
    labels: Vec<Option<T>>,
    weights: Vec<T>,
    degrees: Vec<T>,
}

impl<T: Scalar> CorrelationGraph<T> {
    /// Assembles a graph from parts and checks every structural invariant.
    ///
    /// `window` is `None` for free-standing graphs that do not come from a
    /// sliding window (small fixtures, tuning experiments).
    pub fn from_parts(
        anchor: Slot,
        window: Option<WindowConfig>,
        labels: Vec<Option<T>>,
        weights: Vec<T>,
        degrees: Vec<T>,
    ) -> Result<Self> {
        let g = Self { anchor, window, labels, weights, degrees };
        g.validate()?;
        Ok(g)
    }

    /// Graph with degrees recomputed as row sums of `weights`.
    pub fn from_weights(anchor: Slot, window: Option<WindowConfig>, labels: Vec<Option<T>>, weights: Vec<T>) -> Result<Self> {
        let n = labels.len();
        if weights.len() != n * n {
            return Err(Error::Contract(format!("weight matrix has {} entries, expected {}", weights.len(), n * n)));
        }
        let degrees = (0..n).map(|i| weights[i * n..(i + 1) * n].iter().copied().sum()).collect();
        Self::from_parts(anchor, window, labels, weights, degrees)
    }

    pub fn anchor(&self) -> Slot {
        self.anchor
    }

    pub fn window(&self) -> Option<&WindowConfig> {
        self.window.as_ref()
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[Option<T>] {
        &self.labels
    }

    pub fn is_labeled(&self, index: usize) -> bool {
        self.labels[index].is_some()
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> T {
        self.weights[i * self.n() + j]
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn degrees(&self) -> &[T] {
        &self.degrees
    }

    /// Checks symmetry, zero diagonal, weights in `[0, 1]`, positive degrees
    /// consistent with the weights, and that no future node is labeled.
    ///
    /// Hand-built fixtures may use unit weights; graphs assembled from
    /// similarities additionally pass [`CorrelationGraph::validate_strict`].
    pub fn validate(&self) -> Result<()> {
        self.check(false)
    }

    /// [`CorrelationGraph::validate`] with the weight range tightened to `[0, 1)`.
    pub fn validate_strict(&self) -> Result<()> {
        self.check(true)
    }

    fn check(&self, strict: bool) -> Result<()> {
        let n = self.labels.len();
        if let Some(w) = &self.window {
            w.validate()?;
            if w.n() != n {
                return Err(Error::Consistency(format!("window has {} nodes but graph has {n}", w.n())));
            }
        }
        if n < 2 || self.degrees.len() != n || self.weights.len() != n * n {
            return Err(Error::Consistency(format!(
                "graph dimensions disagree: N = {n}, labels {}, degrees {}, weights {}",
                self.labels.len(),
                self.degrees.len(),
                self.weights.len()
            )));
        }
        for i in 0..n {
            if self.weight(i, i) != T::zero() {
                return Err(Error::Consistency(format!("w[{i},{i}] = {} is not zero", self.weight(i, i))));
            }
            for j in (i + 1)..n {
                let w = self.weight(i, j);
                if w != self.weight(j, i) {
                    return Err(Error::Consistency(format!("W not symmetric at ({i},{j})")));
                }
                let below_top = if strict { w < T::one() } else { w <= T::one() };
                if !(w >= T::zero() && below_top) {
                    let range = if strict { "[0, 1)" } else { "[0, 1]" };
                    return Err(Error::Consistency(format!("w[{i},{j}] = {w} outside {range}")));
                }
            }
        }
        let tol = T::of(1e-9);
        for (i, &d) in self.degrees.iter().enumerate() {
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::DegenerateGraph { node: i, degree: d.as_f64() });
            }
            let row: T = self.weights[i * n..(i + 1) * n].iter().copied().sum();
            if (row - d).abs() > tol * (T::one() + d) {
                return Err(Error::Consistency(format!("degree {i} = {d} but row sum is {row}")));
            }
        }
        if let Some(w) = &self.window {
            let first_future = (w.t_h + 1) * w.l;
            if let Some(i) = (first_future..n).find(|&i| self.labels[i].is_some()) {
                return Err(Error::Consistency(format!("future node {i} carries a label")));
            }
        }
        if let Some(i) = self.labels.iter().position(|l| l.is_some_and(|v| !v.is_finite())) {
            return Err(Error::Consistency(format!("label of node {i} is not finite")));
        }
        Ok(())
    }
}

/// Per-node estimates F over one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Prediction<T: Scalar> {
    pub anchor: Slot,
    pub values: Vec<T>,
}

impl<T: Scalar> Prediction<T> {
    pub fn new(anchor: Slot, values: Vec<T>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("prediction entry {i} is not finite")));
        }
        Ok(Self { anchor, values })
    }

    /// Values of the subgraph at `slot`.
    pub fn subgraph(&self, window: &WindowConfig, slot: Slot) -> Result<&[T]> {
        let start = flat_index(slot, 0, window, self.anchor)?;
        Ok(&self.values[start..start + window.l])
    }
}
