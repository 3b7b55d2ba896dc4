//! Versioned CSV files. Every file starts with a `# corrgraph <kind> v1`
//! line, followed by a fixed header row.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use corrgraph::simgen::Scenario;
use corrgraph::{Deployment, Poi, Reading, Sensor, Slot, WeatherRecord, WeatherSeries, WeatherType};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::{CliError, Result};

pub const VERSION: u32 = 1;

pub const POIS: (&str, &[&str]) = ("pois", &["poi_id", "x", "y", "z"]);
pub const SENSORS: (&str, &[&str]) = ("sensors", &["sensor_id", "poi_id"]);
pub const READINGS: (&str, &[&str]) = ("readings", &["sensor_id", "slot", "value"]);
pub const WEATHER: (&str, &[&str]) =
    ("weather", &["slot", "weather_type", "wind_speed", "wind_dir_deg", "temperature_c", "humidity_pct"]);
pub const TRUTH: (&str, &[&str]) = ("truth", &["poi_id", "slot", "value"]);
pub const PREDICTIONS: (&str, &[&str]) = ("predictions", &["slot", "poi", "subgraph_offset", "value", "labeled"]);
pub const METRICS: (&str, &[&str]) = ("metrics", &["slot", "method", "scope", "mean_rel_err", "n_nodes"]);

pub fn version_line(kind: &str) -> String {
    format!("# corrgraph {kind} v{VERSION}")
}

/// Version line and header row, newline-terminated.
pub fn preamble(table: (&str, &[&str])) -> String {
    format!("{}\n{}\n", version_line(table.0), table.1.join(","))
}

fn check_version(path: &Path, kind: &str, line: Option<&str>) -> Result<()> {
    let line = line.map(|l| l.trim_end_matches('\r'));
    let prefix = format!("# corrgraph {kind} v");
    match line {
        Some(l) if l == version_line(kind) => Ok(()),
        Some(l) if l.starts_with(&prefix) => {
            Err(CliError::data(path, format!("line 1: unsupported {kind} file version {:?}", &l[prefix.len() - 1..])))
        }
        Some(l) => Err(CliError::data(path, format!("line 1: expected {:?}, found {l:?}", version_line(kind)))),
        None => Err(CliError::data(path, "empty file")),
    }
}

/// Parses a versioned CSV body into rows, reporting 1-based file lines.
pub fn parse_table<R: DeserializeOwned>(path: &Path, text: &str, table: (&str, &[&str])) -> Result<Vec<(usize, R)>> {
    let (kind, columns) = table;
    let (first, body) = match text.split_once('\n') {
        Some((a, b)) => (Some(a), b),
        None if text.is_empty() => (None, ""),
        None => (Some(text), ""),
    };
    check_version(path, kind, first)?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
    let headers = rdr.headers().map_err(|e| CliError::data(path, format!("line 2: {e}")))?.clone();
    if headers.iter().ne(columns.iter().copied()) {
        return Err(CliError::data(
            path,
            format!("line 2: expected columns {}, found {}", columns.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() + 1);
            CliError::data(path, format!("line {line}: {}", csv_message(&e)))
        })?;
        let line = rec.position().map_or(0, |p| p.line() + 1);
        let row: R =
            rec.deserialize(Some(&headers)).map_err(|e| CliError::data(path, format!("line {line}: {}", csv_message(&e))))?;
        rows.push((line as usize, row));
    }
    Ok(rows)
}

fn csv_message(e: &csv::Error) -> String {
    match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => match err.field() {
            Some(f) => format!("column {}: {}", f + 1, err.kind()),
            None => err.kind().to_string(),
        },
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => format!("expected {expected_len} fields, found {len}"),
        _ => e.to_string(),
    }
}

pub fn read_table<R: DeserializeOwned>(path: &Path, table: (&str, &[&str])) -> Result<Vec<(usize, R)>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_table(path, &text, table)
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Deserialize)]
struct PoiRow {
    poi_id: usize,
    x: f64,
    y: f64,
    z: f64,
}

#[derive(Debug, Deserialize)]
struct SensorRow {
    sensor_id: usize,
    poi_id: usize,
}

#[derive(Debug, Deserialize)]
struct ReadingRow {
    sensor_id: usize,
    slot: Slot,
    value: f64,
}

#[derive(Debug, Deserialize)]
struct WeatherRow {
    slot: Slot,
    weather_type: String,
    wind_speed: f64,
    wind_dir_deg: f64,
    temperature_c: f64,
    humidity_pct: f64,
}

#[derive(Debug, Deserialize)]
struct TruthRow {
    poi_id: usize,
    slot: Slot,
    value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct PredictionRow {
    pub slot: Slot,
    pub poi: usize,
    pub subgraph_offset: i64,
    pub value: f64,
    pub labeled: u8,
}

/// Input files of one deployment, as found in a data directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub deployment: Deployment,
    /// Ordered by slot, then file order.
    pub readings: Vec<Reading>,
    pub weather: WeatherSeries,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let p = dir.join("pois.csv");
        let mut pois: Vec<Poi> = read_table::<PoiRow>(&p, POIS)?
            .into_iter()
            .map(|(_, r)| Poi { id: r.poi_id, coord: [r.x, r.y, r.z] })
            .collect();
        pois.sort_by_key(|p| p.id);
        let s = dir.join("sensors.csv");
        let mut sensors: Vec<Sensor> =
            read_table::<SensorRow>(&s, SENSORS)?.into_iter().map(|(_, r)| Sensor { id: r.sensor_id, poi: r.poi_id }).collect();
        sensors.sort_by_key(|s| s.id);
        let deployment = Deployment::new(pois, sensors).map_err(|e| CliError::data(dir, e.to_string()))?;

        let r = dir.join("readings.csv");
        let mut readings = Vec::new();
        for (line, row) in read_table::<ReadingRow>(&r, READINGS)? {
            let reading = Reading { sensor: row.sensor_id, slot: row.slot, value: row.value };
            reading
                .validate()
                .and_then(|_| deployment.poi_of(reading.sensor).map(|_| ()))
                .map_err(|e| CliError::data(&r, format!("line {line}: {e}")))?;
            readings.push(reading);
        }
        readings.sort_by_key(|r| r.slot);

        let w = dir.join("weather.csv");
        let mut weather = WeatherSeries::new();
        for (line, row) in read_table::<WeatherRow>(&w, WEATHER)? {
            let bad = |e: corrgraph::Error| CliError::data(&w, format!("line {line}: {e}"));
            if weather.contains(row.slot) {
                return Err(CliError::data(&w, format!("line {line}: duplicate record for slot {}", row.slot)));
            }
            let weather_type: WeatherType = row.weather_type.parse().map_err(bad)?;
            weather
                .insert(WeatherRecord {
                    slot: row.slot,
                    weather_type,
                    wind_speed: row.wind_speed,
                    wind_dir_deg: row.wind_dir_deg,
                    temperature_c: row.temperature_c,
                    humidity_pct: row.humidity_pct,
                })
                .map_err(bad)?;
        }
        if weather.is_empty() {
            return Err(CliError::data(&w, "no weather records"));
        }
        Ok(Self { dir: dir.to_path_buf(), deployment, readings, weather })
    }

    /// Readings grouped by slot.
    pub fn by_slot(&self) -> BTreeMap<Slot, Vec<Reading>> {
        let mut out: BTreeMap<Slot, Vec<Reading>> = BTreeMap::new();
        for r in &self.readings {
            out.entry(r.slot).or_default().push(*r);
        }
        out
    }
}

/// Ground truth keyed by (slot, POI).
pub fn load_truth(path: &Path) -> Result<BTreeMap<(Slot, usize), f64>> {
    let mut out = BTreeMap::new();
    for (line, row) in read_table::<TruthRow>(path, TRUTH)? {
        if !row.value.is_finite() {
            return Err(CliError::data(path, format!("line {line}: non-finite value")));
        }
        if out.insert((row.slot, row.poi_id), row.value).is_some() {
            return Err(CliError::data(path, format!("line {line}: duplicate truth for POI {} at slot {}", row.poi_id, row.slot)));
        }
    }
    Ok(out)
}

pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let rows = read_table::<PredictionRow>(path, PREDICTIONS)?;
    for (line, r) in &rows {
        if r.labeled > 1 || !r.value.is_finite() {
            return Err(CliError::data(path, format!("line {line}: labeled must be 0 or 1 and value finite")));
        }
    }
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

/// Writes the files `simulate` produces.
pub fn write_scenario(dir: &Path, sc: &Scenario) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut s = preamble(POIS);
    for p in sc.deployment.pois() {
        let _ = writeln!(s, "{},{},{},{}", p.id, p.coord[0], p.coord[1], p.coord[2]);
    }
    write_file(&dir.join("pois.csv"), &s)?;

    let mut s = preamble(SENSORS);
    for x in sc.deployment.sensors() {
        let _ = writeln!(s, "{},{}", x.id, x.poi);
    }
    write_file(&dir.join("sensors.csv"), &s)?;

    let mut s = preamble(READINGS);
    for r in &sc.readings {
        let _ = writeln!(s, "{},{},{}", r.sensor, r.slot, r.value);
    }
    write_file(&dir.join("readings.csv"), &s)?;

    let mut s = preamble(WEATHER);
    for w in sc.weather.iter() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            w.slot, w.weather_type, w.wind_speed, w.wind_dir_deg, w.temperature_c, w.humidity_pct
        );
    }
    write_file(&dir.join("weather.csv"), &s)?;

    let mut s = preamble(TRUTH);
    let l = sc.deployment.l();
    for slot in 0..sc.config.slots as Slot {
        for poi in 0..l {
            let v = sc.truth_at(slot, poi).expect("truth covers every slot");
            let _ = writeln!(s, "{poi},{slot},{v}");
        }
    }
    write_file(&dir.join("truth.csv"), &s)
}
