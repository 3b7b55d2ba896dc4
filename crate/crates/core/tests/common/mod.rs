//! Naive reference implementations used as independent oracles. Written
//! straight from the formulas with no code shared with the library.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense weights and degrees of the k-NN correlation graph.
pub struct OracleGraph {
    pub n: usize,
    pub w: Vec<Vec<f64>>,
    pub d: Vec<f64>,
}

pub fn adjusted_cosine(a: &[f64], b: &[f64], mean: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for k in 0..mean.len() {
        let x = a[k] - mean[k];
        let y = b[k] - mean[k];
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    (ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0)
}

pub fn tanh_weight(m: f64, alpha1: f64, alpha2: f64) -> f64 {
    0.5 * (alpha1 * (m - alpha2)).tanh() + 0.5
}

/// Brute-force graph: weight features, center on the mean, score all pairs,
/// keep the union of every node's k most similar others (ties by index).
pub fn graph(features: &[Vec<f64>], beta: &[f64], alpha1: f64, alpha2: f64, k: usize) -> OracleGraph {
    let n = features.len();
    let dims = beta.len();
    let weighted: Vec<Vec<f64>> = features.iter().map(|f| (0..dims).map(|j| f[j] * beta[j]).collect()).collect();
    let mut mean = vec![0.0; dims];
    for f in &weighted {
        for j in 0..dims {
            mean[j] += f[j] / n as f64;
        }
    }
    let mut sim = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sim[i][j] = adjusted_cosine(&weighted[i], &weighted[j], &mean);
            }
        }
    }
    let mut keep = vec![vec![false; n]; n];
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| sim[i][b].partial_cmp(&sim[i][a]).unwrap().then(a.cmp(&b)));
        for &j in others.iter().take(k) {
            keep[i][j] = true;
            keep[j][i] = true;
        }
    }
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if keep[i][j] {
                w[i][j] = tanh_weight(sim[i][j], alpha1, alpha2);
            }
        }
    }
    let d = w.iter().map(|row| row.iter().sum()).collect();
    OracleGraph { n, w, d }
}

/// Loss with the smoothness term summed over ordered pairs and halved.
pub fn loss(g: &OracleGraph, f: &[f64], y: &[f64], lambda: f64) -> f64 {
    let mut smooth = 0.0;
    for i in 0..g.n {
        for j in 0..g.n {
            let diff = f[i] / g.d[i].sqrt() - f[j] / g.d[j].sqrt();
            smooth += g.w[i][j] * diff * diff;
        }
    }
    let fit: f64 = f.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    0.5 * smooth + lambda * fit
}

/// Solves `(I - S/(1+λ)) F = λ/(1+λ) Y` by Gaussian elimination with partial
/// pivoting.
pub fn solve(g: &OracleGraph, y: &[f64], lambda: f64) -> Vec<f64> {
    let n = g.n;
    let alpha = 1.0 / (1.0 + lambda);
    let mut a = vec![vec![0.0; n + 1]; n];
    for i in 0..n {
        for j in 0..n {
            let s = g.w[i][j] / (g.d[i].sqrt() * g.d[j].sqrt());
            a[i][j] = if i == j { 1.0 } else { 0.0 } - alpha * s;
        }
        a[i][n] = lambda / (1.0 + lambda) * y[i];
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| a[r][col].abs().partial_cmp(&a[s][col].abs()).unwrap()).unwrap();
        a.swap(col, pivot);
        for r in 0..n {
            if r != col {
                let factor = a[r][col] / a[col][col];
                for c in col..=n {
                    a[r][c] -= factor * a[col][c];
                }
            }
        }
    }
    (0..n).map(|i| a[i][n] / a[i][i]).collect()
}

/// Random feature rows in a unit box.
pub fn random_features(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

pub mod toy {
    //! The scripted four-POI stream: one history and one future subgraph,
    //! sensors on POIs 0, 1 and 2, persistence forecasting, and three steps
    //! that include a duplicate, a late and a too-late reading.

    use std::collections::BTreeMap;

    use corrgraph::features::{raw_features, NormStats, WeatherRecord, WeatherSeries, WeatherType, K};
    use corrgraph::forecast::ForecasterKind;
    use corrgraph::graph::SimilarityParams;
    use corrgraph::model::{Deployment, Poi, Reading, Sensor, WindowConfig};
    use corrgraph::pipeline::{PipelineConfig, PipelineState};

    pub const L: usize = 4;

    pub fn weather() -> WeatherSeries {
        let kinds = [WeatherType::Clear, WeatherType::Clear, WeatherType::Cloudy, WeatherType::Cloudy, WeatherType::Haze, WeatherType::Rain];
        WeatherSeries::from_records((0..6u64).map(|s| WeatherRecord {
            slot: s,
            weather_type: kinds[s as usize],
            wind_speed: [1.0, 2.5, 1.7, 4.1, 3.2, 0.6][s as usize],
            wind_dir_deg: 40.0 * s as f64,
            temperature_c: 12.0 - 0.5 * s as f64,
            humidity_pct: [40.0, 52.0, 47.0, 71.0, 66.0, 90.0][s as usize],
        }))
        .unwrap()
    }

    pub fn pois() -> Vec<Poi> {
        vec![
            Poi { id: 0, coord: [0.0, 0.0, 1.0] },
            Poi { id: 1, coord: [120.0, 30.0, 4.0] },
            Poi { id: 2, coord: [60.0, 200.0, 2.0] },
            Poi { id: 3, coord: [250.0, 180.0, 9.0] },
        ]
    }

    /// Raw layout rebuilt by hand, then standardized.
    fn feature(poi: &Poi, w: &WeatherRecord, norm: &NormStats) -> Vec<f64> {
        let mut raw = [0.0; K];
        raw[..3].copy_from_slice(&poi.coord);
        raw[3] = w.slot as f64;
        raw[4 + WeatherType::ALL.iter().position(|k| *k == w.weather_type).unwrap()] = 1.0;
        raw[9] = w.wind_speed;
        raw[10] = w.wind_dir_deg.to_radians().sin();
        raw[11] = w.wind_dir_deg.to_radians().cos();
        raw[12] = w.temperature_c;
        raw[13] = w.humidity_pct;
        (0..K).map(|k| (raw[k] - norm.mean[k]) / norm.std[k]).collect()
    }

    /// Per step: |forecast difference|, max relative pre-estimate
    /// difference and max relative prediction difference between the
    /// library and the brute-force recomputation.
    pub fn trace() -> Vec<(f64, f64, f64)> {
        let weather = weather();
        let pois = pois();
        let sensors = vec![Sensor { id: 0, poi: 0 }, Sensor { id: 1, poi: 1 }, Sensor { id: 2, poi: 2 }];
        let deployment = Deployment::new(pois.clone(), sensors.clone()).unwrap();
        let rows: Vec<[f64; K]> =
            (0..6u64).flat_map(|s| pois.iter().map(move |p| (p.coord, s))).map(|(c, s)| raw_features(c, s, weather.get(s).unwrap())).collect();
        let norm = NormStats::fit(rows.iter()).unwrap();

        let window = WindowConfig::new(1, 1, L).unwrap();
        let mut cfg = PipelineConfig::new(window, norm.clone());
        cfg.forecaster = ForecasterKind::Persistence;
        cfg.similarity = SimilarityParams::new(3.0, 0.0, 5).unwrap();
        let (alpha1, alpha2, k, lambda) = (3.0, 0.0, 5, 0.3);

        let r = |sensor, slot, value| Reading { sensor, slot, value };
        let initial = vec![r(0, 0, 30.0), r(1, 0, 34.0), r(2, 1, 28.0), r(0, 1, 31.0)];
        let mut state = PipelineState::bootstrap(cfg, deployment, &initial, &weather, 1).unwrap();

        let steps: Vec<Vec<Reading>> = vec![
            vec![r(1, 2, 36.0), r(2, 2, 27.0), r(1, 2, 38.0)],
            vec![r(0, 3, 33.0), r(0, 2, 32.0), r(2, 0, 99.0)],
            vec![],
        ];

        let mut prev = vec![(30.0 + 34.0 + 28.0 + 31.0) / 4.0; 3 * L];
        let mut sums: BTreeMap<(u64, usize), (f64, f64)> = BTreeMap::new();
        for rd in &initial {
            let e = sums.entry((rd.slot, sensors[rd.sensor].poi)).or_insert((0.0, 0.0));
            e.0 += rd.value;
            e.1 += 1.0;
        }
        let beta = vec![1.0 / K as f64; K];
        let mut out = Vec::new();
        for (i, new) in steps.iter().enumerate() {
            let t = 2 + i as u64;
            let step = state.step(new, &[]).unwrap();
            for rd in new {
                if rd.slot + 1 >= t {
                    let e = sums.entry((rd.slot, sensors[rd.sensor].poi)).or_insert((0.0, 0.0));
                    e.0 += rd.value;
                    e.1 += 1.0;
                }
            }
            let mu_hat = prev[2 * L..].iter().sum::<f64>() / L as f64;
            let mut y = vec![0.0; 3 * L];
            let mut features = Vec::new();
            for b in 0..3 {
                let slot = t - 1 + b as u64;
                for p in 0..L {
                    let n = b * L + p;
                    y[n] = match sums.get(&(slot, p)) {
                        Some((s, c)) => s / c,
                        None if b < 2 => prev[n + L],
                        None => mu_hat,
                    };
                    features.push(feature(&pois[p], weather.get(slot).unwrap(), &norm));
                }
            }
            let g = super::graph(&features, &beta, alpha1, alpha2, k);
            let f = super::solve(&g, &y, lambda);
            out.push((
                (step.mu_hat - mu_hat).abs(),
                super::max_rel_diff(&step.pre_estimate.values, &y),
                super::max_rel_diff(&step.prediction.values, &f),
            ));
            prev = f;
        }
        out
    }
}
