//! Relative-error metrics and the inverse-distance-weighting baseline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{node_at, Prediction, Slot, WindowConfig};
use crate::scalar::Scalar;

/// Denominator floor of the relative error, in truth units.
pub const REL_ERR_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    /// Unlabeled nodes of the anchor slot's subgraph.
    #[default]
    CurrentSubgraph,
    /// Unlabeled nodes of every subgraph in the window.
    WholeWindow,
}

impl Scope {
    pub fn name(self) -> &'static str {
        match self {
            Scope::CurrentSubgraph => "current-subgraph",
            Scope::WholeWindow => "whole-window",
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "current-subgraph" => Ok(Scope::CurrentSubgraph),
            "whole-window" => Ok(Scope::WholeWindow),
            _ => Err(Error::Config(format!("unknown error scope {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotError {
    pub slot: Slot,
    pub mean_rel_err: f64,
    pub n_nodes: usize,
}

/// Per-slot errors and their aggregate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub slots: Vec<SlotError>,
}

impl ErrorReport {
    pub fn push(&mut self, e: SlotError) {
        self.slots.push(e);
    }

    /// Mean of the per-slot means, or `None` when empty.
    pub fn mean(&self) -> Option<f64> {
        if self.slots.is_empty() {
            return None;
        }
        Some(self.slots.iter().map(|s| s.mean_rel_err).sum::<f64>() / self.slots.len() as f64)
    }

    pub fn n_nodes(&self) -> usize {
        self.slots.iter().map(|s| s.n_nodes).sum()
    }
}

/// `|a - b| / max(b, floor)`.
pub fn node_relative_error(pred: f64, truth: f64) -> f64 {
    (pred - truth).abs() / truth.max(REL_ERR_FLOOR)
}

/// Mean relative error over the scoped unlabeled nodes of one prediction.
///
/// `labeled[n]` marks nodes that carried a measurement; `truth(slot, poi)`
/// supplies the ground truth.
pub fn relative_error<T: Scalar>(
    pred: &Prediction<T>,
    window: &WindowConfig,
    labeled: &[bool],
    truth: impl Fn(Slot, usize) -> Option<f64>,
    scope: Scope,
) -> Result<SlotError> {
    let n = window.n();
    if pred.values.len() != n || labeled.len() != n {
        return Err(Error::Contract(format!(
            "window has {n} nodes, prediction {} and label mask {}",
            pred.values.len(),
            labeled.len()
        )));
    }
    let range = match scope {
        Scope::CurrentSubgraph => {
            let start = window.t_h * window.l;
            start..start + window.l
        }
        Scope::WholeWindow => 0..n,
    };
    let (mut sum, mut count) = (0.0, 0usize);
    for idx in range.filter(|&i| !labeled[i]) {
        let node = node_at(idx, window, pred.anchor)?;
        let t = truth(node.slot, node.poi)
            .ok_or_else(|| Error::MissingData(format!("no ground truth for POI {} at slot {}", node.poi, node.slot)))?;
        sum += node_relative_error(pred.values[idx].as_f64(), t);
        count += 1;
    }
    if count == 0 {
        return Err(Error::Contract(format!("no unlabeled nodes in scope {scope} at slot {}", pred.anchor)));
    }
    Ok(SlotError { slot: pred.anchor, mean_rel_err: sum / count as f64, n_nodes: count })
}

/// A measurement located in space and time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeSample<T: Scalar> {
    pub coord: [f64; 3],
    pub slot: Slot,
    pub value: T,
}

/// Inverse-distance-weighted estimate at `(coord, slot)`, with distance taken
/// in `(x, y, z, time_scale * slot)` space. A sample at distance zero is
/// returned exactly.
pub fn idw_predict<T: Scalar>(
    samples: &[SpaceTimeSample<T>],
    coord: [f64; 3],
    slot: Slot,
    power: T,
    time_scale: T,
) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::Contract("IDW needs at least one sample".into()));
    }
    if !(power > T::zero()) || !(time_scale >= T::zero()) {
        return Err(Error::Config("IDW power must be positive and time scale non-negative".into()));
    }
    let half = power / (T::one() + T::one());
    let (mut num, mut den) = (T::zero(), T::zero());
    for s in samples {
        let mut d2 = T::zero();
        for (a, b) in s.coord.iter().zip(&coord) {
            let d = T::of(a - b);
            d2 += d * d;
        }
        let dt = time_scale * T::of(s.slot as f64 - slot as f64);
        d2 += dt * dt;
        if d2 == T::zero() {
            return Ok(s.value);
        }
        let w = T::one() / d2.powf(half);
        num += w * s.value;
        den += w;
    }
    Ok(num / den)
}

/// Median over points of the distance to their nearest neighbour. Used as
/// the default meters-per-slot scale for IDW; 1 when fewer than two points.
pub fn median_nn_spacing(coords: &[[f64; 3]]) -> f64 {
    if coords.len() < 2 {
        return 1.0;
    }
    let mut nn: Vec<f64> = coords
        .iter()
        .enumerate()
        .map(|(i, a)| {
            coords
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    nn.sort_by(f64::total_cmp);
    let m = nn.len();
    if m % 2 == 1 {
        nn[m / 2]
    } else {
        (nn[m / 2 - 1] + nn[m / 2]) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn toy() -> (WindowConfig, Prediction<f64>) {
        let w = WindowConfig::new(1, 1, 2).unwrap();
        (w, Prediction::new(10, vec![0.0, 0.0, 95.0, 60.0, 0.0, 0.0]).unwrap())
    }

    #[test]
    fn perfect_prediction_has_zero_error() {
        let (w, p) = toy();
        let truth = |s: Slot, poi| (s == 10).then_some(if poi == 0 { 95.0 } else { 60.0 });
        let e = relative_error(&p, &w, &[false; 6], truth, Scope::CurrentSubgraph).unwrap();
        assert_eq!(e.mean_rel_err, 0.0);
        assert_eq!(e.n_nodes, 2);
    }

    #[test]
    fn single_node_definition() {
        assert_relative_eq!(node_relative_error(95.0, 100.0), 0.05, epsilon = 1e-15);
        assert_relative_eq!(node_relative_error(0.5, 0.0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn mixed_two_node_case() {
        let (w, p) = toy();
        let truth = |_s: Slot, poi| Some(if poi == 0 { 100.0 } else { 50.0 });
        let e = relative_error(&p, &w, &[false; 6], truth, Scope::CurrentSubgraph).unwrap();
        assert_relative_eq!(e.mean_rel_err, 0.125, epsilon = 1e-15);
    }

    #[test]
    fn labeled_nodes_are_excluded() {
        let (w, p) = toy();
        let truth = |_s: Slot, poi| Some(if poi == 0 { 100.0 } else { 50.0 });
        let labeled = [false, false, true, false, false, false];
        let e = relative_error(&p, &w, &labeled, truth, Scope::CurrentSubgraph).unwrap();
        assert_relative_eq!(e.mean_rel_err, 0.2, epsilon = 1e-15);
        let all = [false, false, true, true, false, false];
        assert!(matches!(relative_error(&p, &w, &all, truth, Scope::CurrentSubgraph), Err(Error::Contract(_))));
    }

    #[test]
    fn whole_window_and_missing_truth() {
        let (w, p) = toy();
        let e = relative_error(&p, &w, &[false; 6], |_, _| Some(0.0), Scope::WholeWindow).unwrap();
        assert_eq!(e.n_nodes, 6);
        assert_relative_eq!(e.mean_rel_err, (95.0 + 60.0) / 6.0, epsilon = 1e-12);
        assert!(matches!(
            relative_error(&p, &w, &[false; 6], |_, _| None, Scope::WholeWindow),
            Err(Error::MissingData(_))
        ));
    }

    #[test]
    fn report_aggregates() {
        let mut r = ErrorReport::default();
        assert_eq!(r.mean(), None);
        r.push(SlotError { slot: 1, mean_rel_err: 0.1, n_nodes: 3 });
        r.push(SlotError { slot: 2, mean_rel_err: 0.3, n_nodes: 5 });
        assert_relative_eq!(r.mean().unwrap(), 0.2, epsilon = 1e-15);
        assert_eq!(r.n_nodes(), 8);
    }

    fn s(coord: [f64; 3], slot: Slot, value: f64) -> SpaceTimeSample<f64> {
        SpaceTimeSample { coord, slot, value }
    }

    #[test]
    fn idw_examples() {
        let one = [s([1.0, 2.0, 0.0], 3, 7.5)];
        assert_eq!(idw_predict(&one, [40.0, -3.0, 1.0], 9, 2.0, 1.0).unwrap(), 7.5);
        let two = [s([-1.0, 0.0, 0.0], 0, 10.0), s([1.0, 0.0, 0.0], 0, 20.0)];
        assert_relative_eq!(idw_predict(&two, [0.0, 0.0, 0.0], 0, 2.0, 1.0).unwrap(), 15.0, epsilon = 1e-12);
        let hit = [s([0.0, 0.0, 0.0], 4, 42.0), s([5.0, 0.0, 0.0], 4, 1.0)];
        assert_eq!(idw_predict(&hit, [0.0, 0.0, 0.0], 4, 2.0, 3.0).unwrap(), 42.0);
        assert!(idw_predict::<f64>(&[], [0.0; 3], 0, 2.0, 1.0).is_err());
    }

    #[test]
    fn idw_time_axis() {
        let xs = [s([0.0; 3], 0, 10.0), s([0.0; 3], 3, 40.0)];
        // d = 1 and 2 slots with unit scale: weights 1 and 1/4.
        let want = (10.0 + 40.0 / 4.0) / 1.25;
        assert_relative_eq!(idw_predict(&xs, [0.0; 3], 1, 2.0, 1.0).unwrap(), want, epsilon = 1e-12);
    }

    #[test]
    fn median_spacing() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [5.0, 0.0, 0.0]];
        // nearest neighbours: 1, 1, 4
        assert_eq!(median_nn_spacing(&pts), 1.0);
        assert_eq!(median_nn_spacing(&pts[..1]), 1.0);
    }

    proptest! {
        #[test]
        fn idw_is_convex(
            vals in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0, 0u64..10, 0.0f64..100.0), 1..12),
            tx in -60.0f64..60.0, ty in -60.0f64..60.0, ts in 0u64..12,
        ) {
            let samples: Vec<_> = vals.iter().map(|&(x, y, t, v)| s([x, y, 0.0], t, v)).collect();
            let got = idw_predict(&samples, [tx, ty, 0.5], ts, 2.0, 3.0).unwrap();
            let lo = vals.iter().map(|v| v.3).fold(f64::INFINITY, f64::min);
            let hi = vals.iter().map(|v| v.3).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(got >= lo - 1e-9 && got <= hi + 1e-9);
        }

        #[test]
        fn error_ignores_slot_labels(a in 0u64..1000, b in 0u64..1000, v in prop::collection::vec(0.0f64..200.0, 12)) {
            let w = WindowConfig::new(2, 1, 3).unwrap();
            let run = |anchor: Slot| {
                let p = Prediction::new(anchor + 2, v.clone()).unwrap();
                relative_error(&p, &w, &[false; 12], |s, poi| Some(((s - anchor) * 3) as f64 + poi as f64 * 7.0), Scope::WholeWindow)
                    .unwrap()
            };
            let (ra, rb) = (run(a), run(b));
            prop_assert_eq!(ra.mean_rel_err, rb.mean_rel_err);
            prop_assert_eq!(ra.n_nodes, rb.n_nodes);
        }
    }
}
