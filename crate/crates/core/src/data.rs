//! Counter and sensor records, their CSV formats, and the time alignment join.
//!
//! File formats (UTF-8, comma separated, `.` decimal separator):
//!
//! * `counters.csv`: `timestamp,site_id,cell_id,band,kind,bin_0,...,bin_{N-1}` where the
//!   header lists `N = max(pl_bins, ta_bins)` bin columns and each row carries exactly the
//!   bin count configured for its `kind` (`PL` or `TA`), so rows are ragged.
//! * `sensors.csv`: `timestamp,road_id,lane_id,vehicle_count`.
//! * `roads.csv`: `road_id,site_id,distance_m,distance_max_m,lanes,maxspeed_kmh,category`
//!   with an empty `distance_max_m` when the road sits at a single distance.
//!
//! Timestamps are UTC ISO-8601 instants marking the start of a 15-minute interval
//! `[t, t + 15 min)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Duration, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Timestamp = DateTime<Utc>;

pub const INTERVAL_MINUTES: i64 = 15;

pub fn interval() -> Duration {
    Duration::minutes(INTERVAL_MINUTES)
}

pub fn is_aligned(ts: &Timestamp) -> bool {
    ts.minute().is_multiple_of(INTERVAL_MINUTES as u32) && ts.second() == 0 && ts.nanosecond() == 0
}

pub fn parse_timestamp(s: &str) -> std::result::Result<Timestamp, String> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("bad timestamp {s:?}: {e}"))
}

pub fn format_timestamp(ts: &Timestamp) -> String {
    ts.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Band layout and per-kind bin counts of the counter files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CounterSchema {
    pub bands: Vec<String>,
    pub pl_bins: usize,
    pub ta_bins: usize,
}

impl Default for CounterSchema {
    fn default() -> Self {
        CounterSchema {
            bands: ["800", "1800a", "1800b", "2600"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            pl_bins: 21,
            ta_bins: 35,
        }
    }
}

impl CounterSchema {
    pub fn bins(&self, kind: CounterKind) -> usize {
        match kind {
            CounterKind::Pl => self.pl_bins,
            CounterKind::Ta => self.ta_bins,
        }
    }

    pub fn band_index(&self, band: &str) -> Option<usize> {
        self.bands.iter().position(|b| b == band)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands.is_empty() {
            return Err(Error::Config("at least one band is required".into()));
        }
        let distinct: BTreeSet<&String> = self.bands.iter().collect();
        if distinct.len() != self.bands.len() {
            return Err(Error::Config("band labels must be unique".into()));
        }
        if self.pl_bins == 0 || self.ta_bins == 0 {
            return Err(Error::Config("bin counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CounterKind {
    #[serde(rename = "PL")]
    Pl,
    #[serde(rename = "TA")]
    Ta,
}

impl fmt::Display for CounterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CounterKind::Pl => "PL",
            CounterKind::Ta => "TA",
        })
    }
}

impl FromStr for CounterKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "PL" => Ok(CounterKind::Pl),
            "TA" => Ok(CounterKind::Ta),
            other => Err(format!("unknown counter kind {other:?}")),
        }
    }
}

/// One histogram counter of one cell over one 15-minute interval.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CounterRecord {
    pub timestamp: Timestamp,
    pub site_id: String,
    pub cell_id: String,
    pub band: String,
    pub kind: CounterKind,
    pub bins: Vec<u64>,
}

/// Vehicle count of one lane of one road over one 15-minute interval.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SensorRecord {
    pub timestamp: Timestamp,
    pub road_id: String,
    pub lane_id: String,
    pub vehicle_count: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoadCategory {
    Highway,
    LargeCityRoad,
    SmallCityRoad,
}

impl RoadCategory {
    pub const ALL: [RoadCategory; 3] = [
        RoadCategory::Highway,
        RoadCategory::LargeCityRoad,
        RoadCategory::SmallCityRoad,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RoadCategory::Highway => "highway",
            RoadCategory::LargeCityRoad => "large_city_road",
            RoadCategory::SmallCityRoad => "small_city_road",
        }
    }
}

impl fmt::Display for RoadCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoadCategory {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        RoadCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown road category {s:?}"))
    }
}

/// Static description of a monitored road segment and the eNB that covers it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadMeta {
    pub road_id: String,
    pub site_id: String,
    /// Distance between the road segment and the sector antenna.
    pub distance_m: f64,
    /// Far end of the segment when it spans a distance interval.
    #[serde(default)]
    pub distance_max_m: Option<f64>,
    pub lanes: u32,
    pub maxspeed_kmh: u32,
    pub category: RoadCategory,
}

impl RoadMeta {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.distance_m > 0.0 && self.distance_m.is_finite()) {
            return Err(format!("distance_m must be positive, got {}", self.distance_m));
        }
        if let Some(max) = self.distance_max_m {
            if !(max >= self.distance_m && max.is_finite()) {
                return Err(format!(
                    "distance_max_m {max} must be at least distance_m {}",
                    self.distance_m
                ));
            }
        }
        if self.lanes == 0 {
            return Err("lanes must be positive".into());
        }
        if self.maxspeed_kmh == 0 {
            return Err("maxspeed_kmh must be positive".into());
        }
        Ok(())
    }
}

const COUNTER_FIXED: [&str; 5] = ["timestamp", "site_id", "cell_id", "band", "kind"];
const SENSOR_HEADER: [&str; 4] = ["timestamp", "road_id", "lane_id", "vehicle_count"];
const ROAD_HEADER: [&str; 7] = [
    "road_id",
    "site_id",
    "distance_m",
    "distance_max_m",
    "lanes",
    "maxspeed_kmh",
    "category",
];

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file))
}

fn file_label(path: &Path) -> String {
    path.display().to_string()
}

fn csv_row_error(file: &str, row: usize, e: csv::Error) -> Error {
    Error::row(file, row, format!("malformed CSV: {e}"))
}

/// Reads the header and returns the remaining records with 1-based row numbers.
fn read_rows(path: &Path, expect_prefix: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
    let label = file_label(path);
    let mut reader = open_reader(path)?;
    let mut rows = Vec::new();
    let mut records = reader.records();
    match records.next() {
        None => return Err(Error::row(&label, 1, "missing header")),
        Some(header) => {
            let header = header.map_err(|e| csv_row_error(&label, 1, e))?;
            let got: Vec<&str> = header.iter().map(str::trim).collect();
            if got.len() < expect_prefix.len() || got[..expect_prefix.len()] != *expect_prefix {
                return Err(Error::row(
                    &label,
                    1,
                    format!("unexpected header, expected columns {}", expect_prefix.join(",")),
                ));
            }
        }
    }
    for (i, rec) in records.enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| csv_row_error(&label, row, e))?;
        if rec.len() == 1 && rec.get(0).is_some_and(|s| s.trim().is_empty()) {
            continue;
        }
        rows.push((row, rec));
    }
    Ok(rows)
}

fn parse_aligned_timestamp(file: &str, row: usize, s: &str) -> Result<Timestamp> {
    let ts = parse_timestamp(s).map_err(|m| Error::row(file, row, m))?;
    if !is_aligned(&ts) {
        return Err(Error::row(
            file,
            row,
            format!("misaligned timestamp {s}: not on a 15-minute boundary"),
        ));
    }
    Ok(ts)
}

fn parse_count(file: &str, row: usize, column: &str, s: &str) -> Result<u64> {
    let v: i64 = s
        .trim()
        .parse()
        .map_err(|_| Error::row(file, row, format!("{column}: not an integer: {s:?}")))?;
    if v < 0 {
        return Err(Error::row(
            file,
            row,
            format!("negative bin value {v} in {column}"),
        ));
    }
    Ok(v as u64)
}

/// Parses `counters.csv`. Rows failing the schema or a record invariant are rejected
/// with the offending row number; duplicate `(site, cell, timestamp, kind)` rows are an
/// error rather than last-wins.
pub fn parse_counters(path: &Path, schema: &CounterSchema) -> Result<Vec<CounterRecord>> {
    schema.validate()?;
    let label = file_label(path);
    let rows = read_rows(path, &COUNTER_FIXED)?;
    let mut out = Vec::with_capacity(rows.len());
    let mut seen = BTreeSet::new();
    for (row, rec) in rows {
        if rec.len() < COUNTER_FIXED.len() {
            return Err(Error::row(&label, row, "wrong column count"));
        }
        let kind: CounterKind = rec[4]
            .trim()
            .parse()
            .map_err(|m: String| Error::row(&label, row, m))?;
        let nbins = schema.bins(kind);
        if rec.len() != COUNTER_FIXED.len() + nbins {
            return Err(Error::row(
                &label,
                row,
                format!(
                    "wrong column count: {kind} row has {} bin columns, schema expects {nbins}",
                    rec.len() - COUNTER_FIXED.len()
                ),
            ));
        }
        let timestamp = parse_aligned_timestamp(&label, row, &rec[0])?;
        let band = rec[3].trim().to_string();
        if schema.band_index(&band).is_none() {
            return Err(Error::row(&label, row, format!("unknown band {band:?}")));
        }
        let bins = (0..nbins)
            .map(|i| parse_count(&label, row, &format!("bin_{i}"), &rec[COUNTER_FIXED.len() + i]))
            .collect::<Result<Vec<_>>>()?;
        let record = CounterRecord {
            timestamp,
            site_id: rec[1].trim().to_string(),
            cell_id: rec[2].trim().to_string(),
            band,
            kind,
            bins,
        };
        let key = (
            record.site_id.clone(),
            record.cell_id.clone(),
            record.timestamp,
            record.kind,
        );
        if !seen.insert(key) {
            return Err(Error::row(
                &label,
                row,
                format!(
                    "duplicate {} counter for cell {} at {}",
                    record.kind,
                    record.cell_id,
                    format_timestamp(&record.timestamp)
                ),
            ));
        }
        out.push(record);
    }
    Ok(out)
}

pub fn parse_sensors(path: &Path) -> Result<Vec<SensorRecord>> {
    let label = file_label(path);
    let rows = read_rows(path, &SENSOR_HEADER)?;
    let mut out = Vec::with_capacity(rows.len());
    let mut seen = BTreeSet::new();
    for (row, rec) in rows {
        if rec.len() != SENSOR_HEADER.len() {
            return Err(Error::row(&label, row, "wrong column count"));
        }
        let record = SensorRecord {
            timestamp: parse_aligned_timestamp(&label, row, &rec[0])?,
            road_id: rec[1].trim().to_string(),
            lane_id: rec[2].trim().to_string(),
            vehicle_count: parse_count(&label, row, "vehicle_count", &rec[3])?,
        };
        if !seen.insert((record.road_id.clone(), record.lane_id.clone(), record.timestamp)) {
            return Err(Error::row(&label, row, "duplicate lane reading"));
        }
        out.push(record);
    }
    Ok(out)
}

pub fn parse_roads(path: &Path) -> Result<Vec<RoadMeta>> {
    let label = file_label(path);
    let rows = read_rows(path, &ROAD_HEADER)?;
    let mut out: Vec<RoadMeta> = Vec::with_capacity(rows.len());
    for (row, rec) in rows {
        if rec.len() != ROAD_HEADER.len() {
            return Err(Error::row(&label, row, "wrong column count"));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i].trim().parse::<f64>().map_err(|_| {
                Error::row(&label, row, format!("{}: not a number: {:?}", ROAD_HEADER[i], &rec[i]))
            })
        };
        let int = |i: usize| -> Result<u32> {
            rec[i].trim().parse::<u32>().map_err(|_| {
                Error::row(
                    &label,
                    row,
                    format!("{}: not a non-negative integer: {:?}", ROAD_HEADER[i], &rec[i]),
                )
            })
        };
        let meta = RoadMeta {
            road_id: rec[0].trim().to_string(),
            site_id: rec[1].trim().to_string(),
            distance_m: num(2)?,
            distance_max_m: if rec[3].trim().is_empty() {
                None
            } else {
                Some(num(3)?)
            },
            lanes: int(4)?,
            maxspeed_kmh: int(5)?,
            category: rec[6]
                .trim()
                .parse()
                .map_err(|m: String| Error::row(&label, row, m))?,
        };
        meta.validate().map_err(|m| Error::row(&label, row, m))?;
        if out.iter().any(|r| r.road_id == meta.road_id) {
            return Err(Error::row(&label, row, format!("duplicate road_id {}", meta.road_id)));
        }
        out.push(meta);
    }
    Ok(out)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_counters(path: &Path, records: &[CounterRecord], schema: &CounterSchema) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = create(path)?;
    let width = schema.pl_bins.max(schema.ta_bins);
    let mut header = COUNTER_FIXED.join(",");
    for i in 0..width {
        header.push_str(&format!(",bin_{i}"));
    }
    writeln!(w, "{header}").map_err(io)?;
    let mut line = String::new();
    for r in records {
        line.clear();
        line.push_str(&format!(
            "{},{},{},{},{}",
            format_timestamp(&r.timestamp),
            r.site_id,
            r.cell_id,
            r.band,
            r.kind
        ));
        for b in &r.bins {
            line.push(',');
            line.push_str(&b.to_string());
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_sensors(path: &Path, records: &[SensorRecord]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = create(path)?;
    writeln!(w, "{}", SENSOR_HEADER.join(",")).map_err(io)?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{}",
            format_timestamp(&r.timestamp),
            r.road_id,
            r.lane_id,
            r.vehicle_count
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_roads(path: &Path, roads: &[RoadMeta]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = create(path)?;
    writeln!(w, "{}", ROAD_HEADER.join(",")).map_err(io)?;
    for r in roads {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.road_id,
            r.site_id,
            r.distance_m,
            r.distance_max_m.map(|d| d.to_string()).unwrap_or_default(),
            r.lanes,
            r.maxspeed_kmh,
            r.category
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// One kept `(road, timestamp)` sample: all counter histograms of the road's site plus
/// the lane-summed vehicle count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlignedRow {
    /// Index into [`AlignedDataset::roads`].
    pub road: usize,
    pub timestamp: Timestamp,
    /// PL histogram per band, in schema band order.
    pub pl: Vec<Vec<u64>>,
    /// TA histogram per band, in schema band order.
    pub ta: Vec<Vec<u64>>,
    pub target: u64,
}

/// Time-aligned samples. Rows are ordered by road, then time; every row is complete.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedDataset {
    pub schema: CounterSchema,
    pub roads: Vec<RoadMeta>,
    /// Distinct timestamps present in `rows`, strictly increasing.
    pub timestamps: Vec<Timestamp>,
    pub rows: Vec<AlignedRow>,
}

#[derive(Clone, Debug)]
pub struct Alignment {
    pub dataset: AlignedDataset,
    /// Candidate `(road, timestamp)` cells seen in either input but dropped as incomplete.
    pub dropped: usize,
}

#[derive(Default)]
struct SiteSlot {
    pl: Vec<Option<Vec<u64>>>,
    ta: Vec<Option<Vec<u64>>>,
}

impl SiteSlot {
    fn complete(&self) -> bool {
        self.pl.iter().chain(&self.ta).all(Option::is_some)
    }
}

fn add_bins(slot: &mut Option<Vec<u64>>, bins: &[u64]) {
    match slot {
        Some(acc) => acc.iter_mut().zip(bins).for_each(|(a, b)| *a += b),
        None => *slot = Some(bins.to_vec()),
    }
}

/// Joins counters and sensors into per-road samples.
///
/// Targets are lane sums. A `(road, timestamp)` is kept only when every lane observed
/// for that road reported and the road's site has both counter kinds for every band;
/// anything else is dropped and counted. Several cells on the same site and band are
/// summed bin-wise.
pub fn align(
    counters: &[CounterRecord],
    sensors: &[SensorRecord],
    roads: &[RoadMeta],
    schema: &CounterSchema,
) -> Result<Alignment> {
    schema.validate()?;
    let nbands = schema.bands.len();

    let mut sites: BTreeMap<(&str, Timestamp), SiteSlot> = BTreeMap::new();
    for c in counters {
        let band = schema
            .band_index(&c.band)
            .ok_or_else(|| Error::Data(format!("unknown band {:?}", c.band)))?;
        if c.bins.len() != schema.bins(c.kind) {
            return Err(Error::Data(format!(
                "{} counter of cell {} has {} bins, expected {}",
                c.kind,
                c.cell_id,
                c.bins.len(),
                schema.bins(c.kind)
            )));
        }
        let slot = sites
            .entry((c.site_id.as_str(), c.timestamp))
            .or_insert_with(|| SiteSlot {
                pl: vec![None; nbands],
                ta: vec![None; nbands],
            });
        match c.kind {
            CounterKind::Pl => add_bins(&mut slot.pl[band], &c.bins),
            CounterKind::Ta => add_bins(&mut slot.ta[band], &c.bins),
        }
    }
    let known_sites: BTreeSet<&str> = sites.keys().map(|(s, _)| *s).collect();

    let road_index: BTreeMap<&str, usize> = roads
        .iter()
        .enumerate()
        .map(|(i, r)| (r.road_id.as_str(), i))
        .collect();
    let mut lanes: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); roads.len()];
    let mut readings: BTreeMap<(usize, Timestamp), BTreeMap<&str, u64>> = BTreeMap::new();
    for s in sensors {
        let road = *road_index
            .get(s.road_id.as_str())
            .ok_or_else(|| Error::Data(format!("unknown road_id {:?} in sensors", s.road_id)))?;
        lanes[road].insert(&s.lane_id);
        let prev = readings
            .entry((road, s.timestamp))
            .or_default()
            .insert(&s.lane_id, s.vehicle_count);
        if prev.is_some() {
            return Err(Error::Data(format!(
                "duplicate reading for road {} lane {} at {}",
                s.road_id,
                s.lane_id,
                format_timestamp(&s.timestamp)
            )));
        }
    }
    for (i, road) in roads.iter().enumerate() {
        if !lanes[i].is_empty() && !known_sites.contains(road.site_id.as_str()) {
            return Err(Error::Data(format!(
                "unknown site_id {:?} for road {}: no counters",
                road.site_id, road.road_id
            )));
        }
    }

    let mut rows = Vec::new();
    let mut dropped = 0usize;
    for (ri, road) in roads.iter().enumerate() {
        if lanes[ri].is_empty() {
            continue;
        }
        let mut candidates: BTreeSet<Timestamp> = readings
            .range((ri, Timestamp::MIN_UTC)..=(ri, Timestamp::MAX_UTC))
            .map(|((_, t), _)| *t)
            .collect();
        candidates.extend(
            sites
                .range((road.site_id.as_str(), Timestamp::MIN_UTC)..=(road.site_id.as_str(), Timestamp::MAX_UTC))
                .map(|((_, t), _)| *t),
        );
        for t in candidates {
            let slot = sites.get(&(road.site_id.as_str(), t));
            let lane_counts = readings.get(&(ri, t));
            match (slot, lane_counts) {
                (Some(slot), Some(counts)) if slot.complete() && counts.len() == lanes[ri].len() => {
                    rows.push(AlignedRow {
                        road: ri,
                        timestamp: t,
                        pl: slot.pl.iter().map(|b| b.clone().unwrap()).collect(),
                        ta: slot.ta.iter().map(|b| b.clone().unwrap()).collect(),
                        target: counts.values().sum(),
                    });
                }
                _ => dropped += 1,
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyIntersection(
            "no timestamp has both complete sensor readings and complete counters".into(),
        ));
    }
    let timestamps: Vec<Timestamp> = rows
        .iter()
        .map(|r| r.timestamp)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    Ok(Alignment {
        dataset: AlignedDataset {
            schema: schema.clone(),
            roads: roads.to_vec(),
            timestamps,
            rows,
        },
        dropped,
    })
}

impl AlignedDataset {
    pub fn road_index(&self, road_id: &str) -> Option<usize> {
        self.roads.iter().position(|r| r.road_id == road_id)
    }

    /// Row indices belonging to the given road, in time order.
    pub fn rows_of_road(&self, road: usize) -> Vec<usize> {
        (0..self.rows.len())
            .filter(|&i| self.rows[i].road == road)
            .collect()
    }

    /// Road indices that own at least one row.
    pub fn present_roads(&self) -> Vec<usize> {
        self.rows
            .iter()
            .map(|r| r.road)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.target as f64).collect()
    }

    /// Re-expresses the dataset as records: one cell per site and band, one lane
    /// (`total`) per road. Aligning the result reproduces this dataset.
    pub fn to_records(&self) -> (Vec<CounterRecord>, Vec<SensorRecord>) {
        let mut counters = Vec::new();
        let mut seen = BTreeSet::new();
        let mut sensors = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            let road = &self.roads[row.road];
            if seen.insert((road.site_id.clone(), row.timestamp)) {
                for (bi, band) in self.schema.bands.iter().enumerate() {
                    for (kind, bins) in [(CounterKind::Pl, &row.pl[bi]), (CounterKind::Ta, &row.ta[bi])] {
                        counters.push(CounterRecord {
                            timestamp: row.timestamp,
                            site_id: road.site_id.clone(),
                            cell_id: format!("{}-{}", road.site_id, band),
                            band: band.clone(),
                            kind,
                            bins: bins.clone(),
                        });
                    }
                }
            }
            sensors.push(SensorRecord {
                timestamp: row.timestamp,
                road_id: road.road_id.clone(),
                lane_id: "total".into(),
                vehicle_count: row.target,
            });
        }
        (counters, sensors)
    }
}

/// Loads `counters.csv`, `sensors.csv` and `roads.csv` from a directory and aligns them.
pub fn load_dir(dir: &Path, schema: &CounterSchema) -> Result<Alignment> {
    let counters = parse_counters(&dir.join("counters.csv"), schema)?;
    let sensors = parse_sensors(&dir.join("sensors.csv"))?;
    let roads = parse_roads(&dir.join("roads.csv"))?;
    align(&counters, &sensors, &roads, schema)
}

/// Monday 1970-01-05T00:00:00Z, the phase origin for weekly and four-weekly cycles.
pub fn cycle_epoch() -> Timestamp {
    Utc.with_ymd_and_hms(1970, 1, 5, 0, 0, 0).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> Timestamp {
        parse_timestamp(s).unwrap()
    }

    fn small_schema() -> CounterSchema {
        CounterSchema {
            bands: vec!["800".into(), "2600".into()],
            pl_bins: 3,
            ta_bins: 4,
        }
    }

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        let mut f = File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    fn road(id: &str, site: &str) -> RoadMeta {
        RoadMeta {
            road_id: id.into(),
            site_id: site.into(),
            distance_m: 120.0,
            distance_max_m: None,
            lanes: 2,
            maxspeed_kmh: 50,
            category: RoadCategory::LargeCityRoad,
        }
    }

    fn counters_at(schema: &CounterSchema, site: &str, t: Timestamp, fill: u64) -> Vec<CounterRecord> {
        let mut out = Vec::new();
        for band in &schema.bands {
            for kind in [CounterKind::Pl, CounterKind::Ta] {
                out.push(CounterRecord {
                    timestamp: t,
                    site_id: site.into(),
                    cell_id: format!("{site}-{band}"),
                    band: band.clone(),
                    kind,
                    bins: vec![fill; schema.bins(kind)],
                });
            }
        }
        out
    }

    fn sensor(t: Timestamp, road: &str, lane: &str, n: u64) -> SensorRecord {
        SensorRecord {
            timestamp: t,
            road_id: road.into(),
            lane_id: lane.into(),
            vehicle_count: n,
        }
    }

    #[test]
    fn header_only_counter_file_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "c.csv", "timestamp,site_id,cell_id,band,kind,bin_0,bin_1,bin_2,bin_3\n");
        assert!(parse_counters(&p, &small_schema()).unwrap().is_empty());
    }

    #[test]
    fn short_pl_row_is_wrong_column_count() {
        let dir = tempfile::tempdir().unwrap();
        let schema = CounterSchema::default();
        let mut line = String::from("2024-01-01T00:00:00Z,s1,c1,800,PL");
        for _ in 0..20 {
            line.push_str(",1");
        }
        let p = write(&dir, "c.csv", &format!("timestamp,site_id,cell_id,band,kind,bin_0\n{line}\n"));
        let err = parse_counters(&p, &schema).unwrap_err();
        assert!(err.to_string().contains("wrong column count"), "{err}");
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn counter_rejections() {
        let dir = tempfile::tempdir().unwrap();
        let schema = small_schema();
        let header = "timestamp,site_id,cell_id,band,kind,bin_0,bin_1,bin_2,bin_3\n";
        let neg = write(&dir, "neg.csv", &format!("{header}2024-01-01T00:00:00Z,s,c,800,PL,1,-2,3\n"));
        assert!(parse_counters(&neg, &schema).unwrap_err().to_string().contains("negative"));
        let mis = write(&dir, "mis.csv", &format!("{header}2024-01-01T00:05:00Z,s,c,800,PL,1,2,3\n"));
        assert!(parse_counters(&mis, &schema).unwrap_err().to_string().contains("misaligned"));
        let dup = write(
            &dir,
            "dup.csv",
            &format!("{header}2024-01-01T00:00:00Z,s,c,800,PL,1,2,3\n2024-01-01T00:00:00Z,s,c,800,PL,1,2,3\n"),
        );
        let err = parse_counters(&dup, &schema).unwrap_err().to_string();
        assert!(err.contains("duplicate") && err.contains("row 3"), "{err}");
        let band = write(&dir, "band.csv", &format!("{header}2024-01-01T00:00:00Z,s,c,900,PL,1,2,3\n"));
        assert!(parse_counters(&band, &schema).is_err());
        assert!(matches!(
            parse_counters(&dir.path().join("missing.csv"), &schema),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn sensor_rows() {
        let dir = tempfile::tempdir().unwrap();
        let header = "timestamp,road_id,lane_id,vehicle_count\n";
        let bad = write(&dir, "s.csv", &format!("{header}2024-01-01T00:00:00Z,r1,l1,-1\n"));
        assert!(parse_sensors(&bad).is_err());
        let ok = write(
            &dir,
            "ok.csv",
            &format!("{header}2024-01-01T00:00:00Z,r1,l1,4\n2024-01-01T00:00:00Z,r1,l2,6\n"),
        );
        let recs = parse_sensors(&ok).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].lane_id, "l2");
    }

    #[test]
    fn road_rows() {
        let dir = tempfile::tempdir().unwrap();
        let header = "road_id,site_id,distance_m,distance_max_m,lanes,maxspeed_kmh,category\n";
        let p = write(&dir, "r.csv", &format!("{header}r1,s1,120,,3,70,highway\nr2,s1,200,300,1,30,small_city_road\n"));
        let roads = parse_roads(&p).unwrap();
        assert_eq!(roads[0].distance_max_m, None);
        assert_eq!(roads[1].distance_max_m, Some(300.0));
        let bad = write(&dir, "b.csv", &format!("{header}r1,s1,120,,3,70,bridge\n"));
        assert!(parse_roads(&bad).unwrap_err().to_string().contains("bridge"));
        let inv = write(&dir, "i.csv", &format!("{header}r1,s1,120,100,3,70,highway\n"));
        assert!(parse_roads(&inv).is_err());
    }

    #[test]
    fn align_sums_lanes_and_drops_incomplete() {
        let schema = small_schema();
        let t0 = ts("2024-01-01T00:00:00Z");
        let t1 = t0 + interval();
        let t2 = t1 + interval();
        let mut counters = Vec::new();
        for t in [t0, t1, t2] {
            counters.extend(counters_at(&schema, "s1", t, 1));
        }
        // t2 lacks the TA counter of one band.
        counters.retain(|c| !(c.timestamp == t2 && c.kind == CounterKind::Ta && c.band == "2600"));
        let sensors = vec![
            sensor(t0, "r1", "a", 3),
            sensor(t0, "r1", "b", 4),
            sensor(t1, "r1", "a", 5), // lane b missing
            sensor(t2, "r1", "a", 1),
            sensor(t2, "r1", "b", 1),
        ];
        let al = align(&counters, &sensors, &[road("r1", "s1")], &schema).unwrap();
        assert_eq!(al.dataset.rows.len(), 1);
        assert_eq!(al.dataset.rows[0].timestamp, t0);
        assert_eq!(al.dataset.rows[0].target, 7);
        assert_eq!(al.dropped, 2);
        assert_eq!(al.dataset.timestamps, vec![t0]);
    }

    #[test]
    fn align_sums_cells_on_same_band() {
        let schema = small_schema();
        let t0 = ts("2024-01-01T00:00:00Z");
        let mut counters = counters_at(&schema, "s1", t0, 1);
        let mut extra = counters_at(&schema, "s1", t0, 2);
        extra.iter_mut().for_each(|c| c.cell_id.push_str("-b"));
        counters.extend(extra);
        let sensors = vec![sensor(t0, "r1", "a", 3)];
        let al = align(&counters, &sensors, &[road("r1", "s1")], &schema).unwrap();
        assert_eq!(al.dataset.rows[0].ta[0], vec![3; 4]);
    }

    #[test]
    fn align_errors() {
        let schema = small_schema();
        let t0 = ts("2024-01-01T00:00:00Z");
        let counters = counters_at(&schema, "s1", t0, 1);
        let late = vec![sensor(t0 + Duration::days(3), "r1", "a", 3)];
        assert!(matches!(
            align(&counters, &late, &[road("r1", "s1")], &schema),
            Err(Error::EmptyIntersection(_))
        ));
        let unknown = vec![sensor(t0, "zz", "a", 3)];
        assert!(align(&counters, &unknown, &[road("r1", "s1")], &schema).is_err());
        let ok = vec![sensor(t0, "r1", "a", 3)];
        assert!(align(&counters, &ok, &[road("r1", "nosite")], &schema).is_err());
    }

    #[test]
    fn eight_weeks_of_complete_samples() {
        let schema = small_schema();
        let t0 = ts("2024-01-01T00:00:00Z");
        let n = 96 * 7 * 8;
        let mut counters = Vec::new();
        let mut sensors = Vec::new();
        for k in 0..n {
            let t = t0 + interval() * k as i32;
            counters.extend(counters_at(&schema, "s1", t, 0));
            sensors.push(sensor(t, "r1", "a", k as u64 % 17));
        }
        let al = align(&counters, &sensors, &[road("r1", "s1")], &schema).unwrap();
        assert_eq!(al.dataset.rows.len(), 5376);
        assert_eq!(al.dropped, 0);
    }

    #[test]
    fn align_is_idempotent() {
        let schema = small_schema();
        let t0 = ts("2024-01-01T00:00:00Z");
        let mut counters = Vec::new();
        let mut sensors = Vec::new();
        for k in 0..6 {
            let t = t0 + interval() * k;
            counters.extend(counters_at(&schema, "s1", t, k as u64));
            sensors.push(sensor(t, "r1", "a", 2 * k as u64));
            sensors.push(sensor(t, "r2", "a", 1));
            if k != 3 {
                sensors.push(sensor(t, "r1", "b", 1));
            }
        }
        let roads = vec![road("r1", "s1"), road("r2", "s1")];
        let first = align(&counters, &sensors, &roads, &schema).unwrap().dataset;
        let (c2, s2) = first.to_records();
        // Counter-only timestamps of the shared site still count as dropped candidates.
        let second = align(&c2, &s2, &roads, &schema).unwrap();
        assert_eq!(second.dataset, first);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let schema = small_schema();
        let t0 = ts("2024-01-01T00:00:00Z");
        let counters = counters_at(&schema, "s1", t0, 9);
        let sensors = vec![sensor(t0, "r1", "a", 3), sensor(t0, "r1", "b", 0)];
        let mut r2 = road("r2", "s1");
        r2.distance_max_m = Some(250.5);
        let roads = vec![road("r1", "s1"), r2];
        write_counters(&dir.path().join("c.csv"), &counters, &schema).unwrap();
        write_sensors(&dir.path().join("s.csv"), &sensors).unwrap();
        write_roads(&dir.path().join("r.csv"), &roads).unwrap();
        assert_eq!(parse_counters(&dir.path().join("c.csv"), &schema).unwrap(), counters);
        assert_eq!(parse_sensors(&dir.path().join("s.csv")).unwrap(), sensors);
        assert_eq!(parse_roads(&dir.path().join("r.csv")).unwrap(), roads);
    }
}
