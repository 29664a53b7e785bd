//! Numeric features from aligned samples.
//!
//! Column layout, in order and subject to the [`FeatureSpec`] flags:
//!
//! | block | columns | count |
//! |-------|---------|-------|
//! | PL    | `pl_<band>_<bin>` for every band in band order | `bands * pl_bins` |
//! | TA    | `ta_<band>_s<k>`, the k-th selected road bin per band | `bands * max selected bins` |
//! | time  | `tod_sin, tod_cos, dow_sin, dow_cos, wom_sin, wom_cos` | 6 |
//! | road  | `lanes, maxspeed_kmh, cat_highway, cat_large_city_road, cat_small_city_road` | 5 |
//!
//! PL histograms are used unfiltered. TA histograms are reduced to the bins that cover
//! the road's distance from the antenna. When roads select different numbers of TA bins
//! the shorter selections are zero padded at the end.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{cycle_epoch, format_timestamp, AlignedDataset, RoadCategory, RoadMeta, Timestamp};
use crate::error::{Error, Result};

const MINUTES_PER_DAY: f64 = 24.0 * 60.0;
const MINUTES_PER_WEEK: f64 = 7.0 * 24.0 * 60.0;
const MINUTES_PER_FOUR_WEEKS: f64 = 4.0 * 7.0 * 24.0 * 60.0;

/// Distance bin edges `d_0 < d_1 < ... < d_M` of the TA histogram, in meters.
/// Bin `i` covers `[d_i, d_{i+1})`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaBinEdges {
    edges: Vec<f64>,
}

impl Default for TaBinEdges {
    /// 35 bins: `[0, 80)`, then 78.125 m steps up to 2423.75 m, then four geometrically
    /// growing bins up to 100 km.
    fn default() -> Self {
        let mut edges = vec![0.0, 80.0];
        for k in 1..=30 {
            edges.push(80.0 + 78.125 * k as f64);
        }
        let start = *edges.last().unwrap();
        let ratio = (100_000.0 / start).powf(0.25);
        for k in 1..=4 {
            edges.push(if k == 4 { 100_000.0 } else { start * ratio.powi(k) });
        }
        TaBinEdges { edges }
    }
}

impl TaBinEdges {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::Config("TA bin edges need at least two values".into()));
        }
        if edges[0] < 0.0 || edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::Config("TA bin edges must be finite and non-negative".into()));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("TA bin edges must be strictly increasing".into()));
        }
        Ok(TaBinEdges { edges })
    }

    /// Uniform edges `0, step, 2*step, ...` with `bins` bins.
    pub fn uniform(step: f64, bins: usize) -> Result<Self> {
        Self::new((0..=bins).map(|i| i as f64 * step).collect())
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    /// Bin holding `distance`. A distance equal to an inner edge belongs to the lower
    /// bin (the bin whose upper edge it is).
    fn bin_of(&self, distance: f64) -> Result<usize> {
        let (lo, hi) = (self.edges[0], *self.edges.last().unwrap());
        if !(distance >= lo && distance < hi) {
            return Err(Error::Data(format!(
                "distance {distance} m outside TA edge range [{lo}, {hi})"
            )));
        }
        // First edge index with edge >= distance; the bin ends at that edge.
        let upper = self.edges.partition_point(|&e| e < distance);
        Ok(upper.saturating_sub(1))
    }
}

/// TA bins covering a road: the single bin containing `distance_m`, or every bin
/// overlapping `[distance_m, distance_max_m]`.
pub fn select_ta_bins(
    edges: &TaBinEdges,
    distance_m: f64,
    distance_max_m: Option<f64>,
) -> Result<Vec<usize>> {
    let first = edges.bin_of(distance_m)?;
    let last = match distance_max_m {
        Some(max) if max < distance_m => {
            return Err(Error::Data(format!(
                "distance_max_m {max} below distance_m {distance_m}"
            )))
        }
        Some(max) => edges.bin_of(max)?,
        None => first,
    };
    Ok((first..=last).collect())
}

fn cyclic(x: f64, period: f64) -> (f64, f64) {
    let phase = std::f64::consts::TAU * x / period;
    (phase.sin(), phase.cos())
}

/// Sine/cosine pairs for time of day, day of week and week of a four-week cycle, in
/// that order. Positions are minutes since the start of the respective cycle; weekly and
/// four-weekly cycles start on Monday 1970-01-05T00:00Z.
pub fn encode_cyclic_time(ts: &Timestamp) -> [f64; 6] {
    let minutes = (*ts - cycle_epoch()).num_minutes();
    let tod = minutes.rem_euclid(MINUTES_PER_DAY as i64) as f64;
    let dow = minutes.rem_euclid(MINUTES_PER_WEEK as i64) as f64;
    let wom = minutes.rem_euclid(MINUTES_PER_FOUR_WEEKS as i64) as f64;
    let (a, b) = cyclic(tod, MINUTES_PER_DAY);
    let (c, d) = cyclic(dow, MINUTES_PER_WEEK);
    let (e, f) = cyclic(wom, MINUTES_PER_FOUR_WEEKS);
    [a, b, c, d, e, f]
}

pub const TIME_COLUMNS: [&str; 6] = ["tod_sin", "tod_cos", "dow_sin", "dow_cos", "wom_sin", "wom_cos"];

pub fn road_columns() -> Vec<String> {
    let mut cols = vec!["lanes".to_string(), "maxspeed_kmh".to_string()];
    cols.extend(RoadCategory::ALL.iter().map(|c| format!("cat_{}", c.as_str())));
    cols
}

/// `[lanes, maxspeed, one-hot(highway, large_city_road, small_city_road)]`.
pub fn encode_road(meta: &RoadMeta) -> [f64; 5] {
    let mut out = [meta.lanes as f64, meta.maxspeed_kmh as f64, 0.0, 0.0, 0.0];
    let slot = RoadCategory::ALL.iter().position(|c| *c == meta.category).unwrap();
    out[2 + slot] = 1.0;
    out
}

/// Parses a category label and encodes the road fields.
pub fn encode_road_fields(lanes: u32, maxspeed_kmh: u32, category: &str) -> Result<[f64; 5]> {
    let category: RoadCategory = category.parse().map_err(Error::Data)?;
    Ok(encode_road(&RoadMeta {
        road_id: String::new(),
        site_id: String::new(),
        distance_m: 1.0,
        distance_max_m: None,
        lanes,
        maxspeed_kmh,
        category,
    }))
}

/// Which feature blocks to build.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSpec {
    pub use_pl: bool,
    pub use_ta: bool,
    pub use_time: bool,
    pub use_road: bool,
    pub standardize: bool,
    /// Band order of the PL and TA blocks. Empty means the dataset's band order.
    pub bands: Vec<String>,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            use_pl: false,
            use_ta: true,
            use_time: false,
            use_road: false,
            standardize: false,
            bands: Vec::new(),
        }
    }
}

impl FeatureSpec {
    pub fn ta_only() -> Self {
        FeatureSpec::default()
    }

    pub fn pl_only() -> Self {
        FeatureSpec {
            use_pl: true,
            use_ta: false,
            ..FeatureSpec::default()
        }
    }

    pub fn with_standardize(mut self, on: bool) -> Self {
        self.standardize = on;
        self
    }

    /// Dataset band indices in the configured order.
    fn band_order(&self, ds: &AlignedDataset) -> Result<Vec<usize>> {
        if self.bands.is_empty() {
            return Ok((0..ds.schema.bands.len()).collect());
        }
        let distinct: BTreeSet<&String> = self.bands.iter().collect();
        if distinct.len() != self.bands.len() || self.bands.len() != ds.schema.bands.len() {
            return Err(Error::Config(
                "feature band order must be a permutation of the configured bands".into(),
            ));
        }
        self.bands
            .iter()
            .map(|b| {
                ds.schema
                    .band_index(b)
                    .ok_or_else(|| Error::Config(format!("unknown band {b:?} in feature spec")))
            })
            .collect()
    }
}

/// Z-score statistics fitted on a row subset. Zero-variance columns keep
/// `mean = 0, std = 1` so they pass through unchanged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(rows: &[Vec<f64>], fit_rows: &[usize]) -> Result<Self> {
        if fit_rows.is_empty() {
            return Err(Error::Config("standardization needs at least one fit row".into()));
        }
        let width = rows[fit_rows[0]].len();
        let n = fit_rows.len() as f64;
        let mut mean = vec![0.0; width];
        for &r in fit_rows {
            for (m, v) in mean.iter_mut().zip(&rows[r]) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; width];
        for &r in fit_rows {
            for (j, v) in rows[r].iter().enumerate() {
                var[j] += (v - mean[j]).powi(2);
            }
        }
        let mut std = Vec::with_capacity(width);
        for j in 0..width {
            let s = (var[j] / n).sqrt();
            if s > 1e-12 * (1.0 + mean[j].abs()) && s.is_finite() {
                std.push(s);
            } else {
                mean[j] = 0.0;
                std.push(1.0);
            }
        }
        Ok(Scaler { mean, std })
    }

    pub fn apply(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }
}

/// Feature rows with their `(road, timestamp)` keys.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Road id of each row.
    pub road_ids: Vec<String>,
    pub timestamps: Vec<Timestamp>,
    pub scaler: Option<Scaler>,
}

impl FeatureMatrix {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Vec<Vec<f64>> {
        idx.iter().map(|&i| self.rows[i].clone()).collect()
    }

    /// Writes `road_id,timestamp,target,<columns>`.
    pub fn write_csv(&self, path: &Path, targets: &[f64]) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(w, "road_id,timestamp,target,{}", self.columns.join(",")).map_err(io)?;
        for (i, row) in self.rows.iter().enumerate() {
            write!(w, "{},{},{}", self.road_ids[i], format_timestamp(&self.timestamps[i]), targets[i])
                .map_err(io)?;
            for v in row {
                write!(w, ",{v}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Writes the standardization statistics as `mean.<column> = v` / `std.<column> = v`
    /// lines. Nothing is written when the matrix is not standardized.
    pub fn write_scaler(&self, path: &Path) -> Result<()> {
        let Some(scaler) = &self.scaler else {
            return Ok(());
        };
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        for (j, c) in self.columns.iter().enumerate() {
            writeln!(w, "mean.{c} = {}", scaler.mean[j]).map_err(io)?;
            writeln!(w, "std.{c} = {}", scaler.std[j]).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Expected column count for a spec: the auditable sum of the enabled blocks.
pub fn column_count(spec: &FeatureSpec, bands: usize, pl_bins: usize, ta_selected: usize) -> usize {
    let mut n = 0;
    if spec.use_pl {
        n += bands * pl_bins;
    }
    if spec.use_ta {
        n += bands * ta_selected;
    }
    if spec.use_time {
        n += TIME_COLUMNS.len();
    }
    if spec.use_road {
        n += 5;
    }
    n
}

/// Builds the feature matrix of every dataset row. When `spec.standardize` is set the
/// z-score statistics come from `fit_rows` only and are applied to all rows.
pub fn build_features(
    ds: &AlignedDataset,
    spec: &FeatureSpec,
    edges: &TaBinEdges,
    fit_rows: &[usize],
) -> Result<FeatureMatrix> {
    if !spec.use_pl && !spec.use_ta {
        return Err(Error::Config("feature spec needs PL or TA features".into()));
    }
    let order = spec.band_order(ds)?;
    let selections = ds
        .roads
        .iter()
        .map(|r| select_ta_bins(edges, r.distance_m, r.distance_max_m))
        .collect::<Result<Vec<_>>>()?;
    for sel in &selections {
        if let Some(&last) = sel.last() {
            if last >= ds.schema.ta_bins {
                return Err(Error::Config(format!(
                    "TA edges select bin {last} but counters carry {} bins",
                    ds.schema.ta_bins
                )));
            }
        }
    }
    let ta_width = selections
        .iter()
        .enumerate()
        .filter(|(i, _)| ds.rows.iter().any(|r| r.road == *i))
        .map(|(_, s)| s.len())
        .max()
        .unwrap_or(1);

    let mut columns = Vec::new();
    if spec.use_pl {
        for &b in &order {
            for i in 0..ds.schema.pl_bins {
                columns.push(format!("pl_{}_{}", ds.schema.bands[b], i));
            }
        }
    }
    if spec.use_ta {
        for &b in &order {
            for k in 0..ta_width {
                columns.push(format!("ta_{}_s{}", ds.schema.bands[b], k));
            }
        }
    }
    if spec.use_time {
        columns.extend(TIME_COLUMNS.iter().map(|s| s.to_string()));
    }
    if spec.use_road {
        columns.extend(road_columns());
    }

    let mut rows = Vec::with_capacity(ds.rows.len());
    for r in &ds.rows {
        let mut v = Vec::with_capacity(columns.len());
        if spec.use_pl {
            for &b in &order {
                v.extend(r.pl[b].iter().map(|&c| c as f64));
            }
        }
        if spec.use_ta {
            let sel = &selections[r.road];
            for &b in &order {
                for k in 0..ta_width {
                    v.push(sel.get(k).map_or(0.0, |&bin| r.ta[b][bin] as f64));
                }
            }
        }
        if spec.use_time {
            v.extend(encode_cyclic_time(&r.timestamp));
        }
        if spec.use_road {
            v.extend(encode_road(&ds.roads[r.road]));
        }
        debug_assert_eq!(v.len(), columns.len());
        rows.push(v);
    }

    let scaler = if spec.standardize {
        if fit_rows.is_empty() {
            return Err(Error::Config("standardize requires non-empty fit rows".into()));
        }
        let s = Scaler::fit(&rows, fit_rows)?;
        rows.iter_mut().for_each(|r| s.apply(r));
        Some(s)
    } else {
        None
    };

    Ok(FeatureMatrix {
        columns,
        rows,
        road_ids: ds.rows.iter().map(|r| ds.roads[r.road].road_id.clone()).collect(),
        timestamps: ds.rows.iter().map(|r| r.timestamp).collect(),
        scaler,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{parse_timestamp, AlignedRow, CounterSchema};
    use proptest::prelude::*;

    fn edges80() -> TaBinEdges {
        TaBinEdges::uniform(80.0, 35).unwrap()
    }

    /// Linear scan over `[d_i, d_{i+1}]` with the lower-bin tie rule.
    fn scan(edges: &[f64], d: f64) -> usize {
        for i in 0..edges.len() - 1 {
            if (edges[i] < d && d <= edges[i + 1]) || (i == 0 && d == edges[0]) {
                return i;
            }
        }
        unreachable!()
    }

    #[test]
    fn default_edges() {
        let e = TaBinEdges::default();
        assert_eq!(e.bins(), 35);
        assert_eq!(e.edges()[0], 0.0);
        assert_eq!(e.edges()[1], 80.0);
        assert_eq!(*e.edges().last().unwrap(), 100_000.0);
        assert!(e.edges().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn ta_bin_selection_examples() {
        let e = edges80();
        assert_eq!(scan(e.edges(), 250.0), 3);
        assert_eq!(select_ta_bins(&e, 250.0, None).unwrap(), vec![3]);
        assert_eq!(select_ta_bins(&e, 80.0, None).unwrap(), vec![0]);
        assert_eq!(select_ta_bins(&e, 0.0, None).unwrap(), vec![0]);
        assert_eq!(select_ta_bins(&e, 200.0, Some(300.0)).unwrap(), vec![2, 3]);
        assert!(select_ta_bins(&e, 1e9, None).is_err());
        assert!(select_ta_bins(&e, -1.0, None).is_err());
    }

    #[test]
    fn cyclic_examples() {
        let monday_six = parse_timestamp("2024-01-01T06:00:00Z").unwrap();
        let f = encode_cyclic_time(&monday_six);
        assert!((f[0] - 1.0).abs() < 1e-12 && f[1].abs() < 1e-12);
        let start = cycle_epoch();
        let z = encode_cyclic_time(&start);
        for k in 0..3 {
            assert!(z[2 * k].abs() < 1e-12);
            assert!((z[2 * k + 1] - 1.0).abs() < 1e-12);
        }
        // Four weeks later every cycle is back at phase zero.
        let later = start + chrono::Duration::weeks(4);
        assert_eq!(encode_cyclic_time(&later), z);
    }

    #[test]
    fn road_encoding() {
        assert_eq!(encode_road_fields(3, 70, "highway").unwrap(), [3.0, 70.0, 1.0, 0.0, 0.0]);
        assert_eq!(encode_road_fields(1, 30, "small_city_road").unwrap(), [1.0, 30.0, 0.0, 0.0, 1.0]);
        assert!(encode_road_fields(1, 30, "bridge").is_err());
    }

    fn dataset(n: usize) -> AlignedDataset {
        let schema = CounterSchema::default();
        let roads = vec![RoadMeta {
            road_id: "r1".into(),
            site_id: "s1".into(),
            distance_m: 250.0,
            distance_max_m: None,
            lanes: 2,
            maxspeed_kmh: 50,
            category: RoadCategory::LargeCityRoad,
        }];
        let t0 = parse_timestamp("2024-01-01T00:00:00Z").unwrap();
        let rows: Vec<AlignedRow> = (0..n)
            .map(|k| AlignedRow {
                road: 0,
                timestamp: t0 + crate::data::interval() * k as i32,
                pl: (0..4).map(|b| (0..21).map(|i| ((k * 7 + b * 3 + i) % 11) as u64).collect()).collect(),
                ta: (0..4).map(|b| (0..35).map(|i| ((k * 5 + b + i * 2) % 13) as u64).collect()).collect(),
                target: k as u64,
            })
            .collect();
        AlignedDataset {
            timestamps: rows.iter().map(|r| r.timestamp).collect(),
            schema,
            roads,
            rows,
        }
    }

    #[test]
    fn column_counts() {
        let ds = dataset(10);
        let e = edges80();
        let pl = build_features(&ds, &FeatureSpec::pl_only(), &e, &[]).unwrap();
        assert_eq!(pl.width(), 84);
        let ta = build_features(&ds, &FeatureSpec::ta_only(), &e, &[]).unwrap();
        assert_eq!(ta.width(), 4);
        assert_eq!(ta.rows[2][1], ds.rows[2].ta[1][3] as f64);
        let all = FeatureSpec {
            use_pl: true,
            use_ta: true,
            use_time: true,
            use_road: true,
            ..FeatureSpec::default()
        };
        let m = build_features(&ds, &all, &e, &[]).unwrap();
        assert_eq!(m.width(), column_count(&all, 4, 21, 1));
        let names: BTreeSet<&String> = m.columns.iter().collect();
        assert_eq!(names.len(), m.width());
        let none = FeatureSpec {
            use_ta: false,
            ..FeatureSpec::default()
        };
        assert!(build_features(&ds, &none, &e, &[]).is_err());
    }

    #[test]
    fn band_order_permutes_blocks() {
        let ds = dataset(3);
        let spec = FeatureSpec {
            bands: vec!["2600".into(), "1800b".into(), "1800a".into(), "800".into()],
            ..FeatureSpec::ta_only()
        };
        let m = build_features(&ds, &spec, &edges80(), &[]).unwrap();
        assert_eq!(m.columns[0], "ta_2600_s0");
        assert_eq!(m.rows[1][0], ds.rows[1].ta[3][3] as f64);
        let bad = FeatureSpec {
            bands: vec!["2600".into()],
            ..FeatureSpec::ta_only()
        };
        assert!(build_features(&ds, &bad, &edges80(), &[]).is_err());
    }

    #[test]
    fn standardization_uses_fit_rows_only() {
        let ds = dataset(40);
        let spec = FeatureSpec {
            use_pl: true,
            use_time: true,
            ..FeatureSpec::ta_only()
        }
        .with_standardize(true);
        let fit: Vec<usize> = (0..30).collect();
        let m = build_features(&ds, &spec, &edges80(), &fit).unwrap();
        let s = m.scaler.as_ref().unwrap();
        for j in 0..m.width() {
            let col: Vec<f64> = fit.iter().map(|&i| m.rows[i][j]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            assert!(mean.abs() < 1e-9, "column {j} mean {mean}");
            if s.std[j] != 1.0 || s.mean[j] != 0.0 {
                assert!((sd - 1.0).abs() < 1e-9, "column {j} sd {sd}");
            }
        }
        assert!(build_features(&ds, &spec, &edges80(), &[]).is_err());
    }

    #[test]
    fn zero_variance_column_passes_through() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Scaler::fit(&rows, &[0, 1]).unwrap();
        let mut r = rows[0].clone();
        s.apply(&mut r);
        assert_eq!(r, vec![-1.0, 5.0]);
    }

    #[test]
    fn deterministic() {
        let ds = dataset(20);
        let spec = FeatureSpec::pl_only().with_standardize(true);
        let fit: Vec<usize> = (0..10).collect();
        let a = build_features(&ds, &spec, &edges80(), &fit).unwrap();
        let b = build_features(&ds, &spec, &edges80(), &fit).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn selection_matches_scan(d in 0.0f64..2799.0, w in 0.0f64..500.0) {
            let e = edges80();
            prop_assert_eq!(select_ta_bins(&e, d, None).unwrap(), vec![scan(e.edges(), d)]);
            let max = d + w;
            if max < 2800.0 {
                let sel = select_ta_bins(&e, d, Some(max)).unwrap();
                prop_assert!(!sel.is_empty());
                for &i in &sel {
                    let (lo, hi) = (e.edges()[i], e.edges()[i + 1]);
                    prop_assert!(lo <= max && hi >= d);
                }
            }
        }

        #[test]
        fn cyclic_pairs_lie_on_unit_circle(secs in 0i64..4_000_000_000i64) {
            let t = chrono::DateTime::from_timestamp(secs - secs % 900, 0).unwrap();
            let f = encode_cyclic_time(&t);
            for k in 0..3 {
                prop_assert!((f[2 * k].powi(2) + f[2 * k + 1].powi(2) - 1.0).abs() < 1e-12);
            }
        }
    }
}
