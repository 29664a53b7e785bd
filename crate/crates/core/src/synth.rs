//! Seeded synthetic scenarios with a known coupling between traffic and counters.
//!
//! The functional forms below are modelling choices of this generator, picked so that a
//! correct pipeline can recover flow from the road's TA bins:
//!
//! * **Daily profile** (hour `h` in `[0, 24)`):
//!   `profile(h) = 0.05 + 0.45 * day(h) + am * exp(-(h - 8)^2 / (2 * 1.2^2))
//!   + pm * exp(-(h - 17)^2 / (2 * 1.5^2))`
//!   with `day(h) = σ((h - 6.5) / 0.7) * σ((20.5 - h) / 0.9)` (σ the logistic function)
//!   and `[am, pm]` the road's `peak_amplitudes`.
//! * **Flow**: `μ = base_flow * profile(h) * weekday_factor[dow]`; the count is `0` when
//!   `μ = 0` and `round(max(0, μ + N(0, noise_sd)))` otherwise. Lanes share the total
//!   as evenly as possible.
//! * **Background activity**: `a(h) = 0.25 + 0.75 * day(h)` scales all non-vehicle users.
//! * **TA** (per band `b`, bin `i` with midpoint `m_i`): background mean
//!   `background_ta_rate * env * a(h) * share_b * exp(-m_i / 500)`; the road's bins
//!   additionally receive `calls_per_vehicle * vehicles * share_b` split evenly over the
//!   road bins. Counts are Poisson.
//! * **PL** (per band): a discretized Gaussian over the PL bins with mean
//!   `pl_baseline_db * baseline_shift + band_offset_db[b] + pl_shift_per_log_vehicle * ln(1 + vehicles)`
//!   and sd `pl_spread_db`; total mass `share_b * (pl_users_per_vehicle * vehicles +
//!   pl_background_users * env * a(h))`. Bin counts are Poisson.
//!
//! `env` is the site's `background_scale`, multiplied by `domain_shift.background` for
//! target-domain roads; `baseline_shift` is `domain_shift.pl_baseline` for target-domain
//! roads and 1 otherwise.
//!
//! PL bins: `(-inf, 50)`, eighteen 5 dB bins up to 140 dB, `[140, 145)`, `[145, inf)`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Timelike};
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::data::{
    self, interval, parse_timestamp, CounterKind, CounterRecord, CounterSchema, RoadCategory,
    RoadMeta, SensorRecord, Timestamp,
};
use crate::error::{Error, Result};
use crate::features::{select_ta_bins, TaBinEdges};
use crate::rng::{domain, substream};

pub const INTERVALS_PER_WEEK: usize = 96 * 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadScenario {
    pub road_id: String,
    pub site_id: String,
    pub distance_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_max_m: Option<f64>,
    pub lanes: u32,
    pub maxspeed_kmh: u32,
    pub category: RoadCategory,
    /// Vehicles per 15 minutes at profile value 1.
    pub base_flow: f64,
    /// Morning and evening peak heights.
    #[serde(default = "default_peaks")]
    pub peak_amplitudes: [f64; 2],
    /// Monday..Sunday multipliers.
    #[serde(default = "default_weekday")]
    pub weekday_factor: [f64; 7],
    /// Site-level multiplier on background users.
    #[serde(default = "one")]
    pub background_scale: f64,
    #[serde(default)]
    pub target_domain: bool,
}

impl RoadScenario {
    pub fn meta(&self) -> RoadMeta {
        RoadMeta {
            road_id: self.road_id.clone(),
            site_id: self.site_id.clone(),
            distance_m: self.distance_m,
            distance_max_m: self.distance_max_m,
            lanes: self.lanes,
            maxspeed_kmh: self.maxspeed_kmh,
            category: self.category,
        }
    }
}

fn default_peaks() -> [f64; 2] {
    [0.6, 0.5]
}

fn default_weekday() -> [f64; 7] {
    [1.0, 1.0, 1.0, 1.0, 1.0, 0.75, 0.6]
}

fn one() -> f64 {
    1.0
}

/// Multipliers applied to target-domain roads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainShift {
    pub background: f64,
    pub pl_baseline: f64,
}

impl Default for DomainShift {
    fn default() -> Self {
        DomainShift {
            background: 1.0,
            pl_baseline: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub weeks: u32,
    /// First interval; must lie on a 15-minute boundary.
    pub start: String,
    pub schema: CounterSchema,
    /// TA edges used to place road traffic; `None` means the default 35-bin layout.
    pub ta_edges: Option<Vec<f64>>,
    /// Per-band activity share, in schema band order. Empty means 1 for every band.
    pub band_share: Vec<f64>,
    /// Per-band PL offset in dB. Empty means 0 for every band.
    pub band_offset_db: Vec<f64>,
    pub calls_per_vehicle: f64,
    pub background_ta_rate: f64,
    pub pl_users_per_vehicle: f64,
    pub pl_background_users: f64,
    pub pl_baseline_db: f64,
    pub pl_spread_db: f64,
    pub pl_shift_per_log_vehicle: f64,
    pub noise_sd: f64,
    pub domain_shift: DomainShift,
    pub roads: Vec<RoadScenario>,
}

fn road(
    id: &str,
    distance_m: f64,
    lanes: u32,
    maxspeed_kmh: u32,
    category: RoadCategory,
    base_flow: f64,
    peaks: [f64; 2],
) -> RoadScenario {
    RoadScenario {
        road_id: id.into(),
        site_id: format!("enb-{id}"),
        distance_m,
        distance_max_m: None,
        lanes,
        maxspeed_kmh,
        category,
        base_flow,
        peak_amplitudes: peaks,
        weekday_factor: default_weekday(),
        background_scale: 1.0,
        target_domain: false,
    }
}

impl Default for ScenarioConfig {
    /// Eight weeks, six roads, seed 42.
    fn default() -> Self {
        use RoadCategory::*;
        ScenarioConfig {
            seed: 42,
            weeks: 8,
            start: "2024-01-01T00:00:00Z".into(),
            schema: CounterSchema::default(),
            ta_edges: None,
            band_share: vec![1.0, 0.8, 0.8, 0.6],
            band_offset_db: vec![0.0, 4.0, 4.0, 8.0],
            calls_per_vehicle: 0.5,
            background_ta_rate: 3.0,
            pl_users_per_vehicle: 1.5,
            pl_background_users: 150.0,
            pl_baseline_db: 95.0,
            pl_spread_db: 12.0,
            pl_shift_per_log_vehicle: 2.0,
            noise_sd: 3.0,
            domain_shift: DomainShift::default(),
            roads: vec![
                road("r1", 150.0, 3, 70, Highway, 320.0, [0.7, 0.6]),
                road("r2", 260.0, 2, 50, LargeCityRoad, 180.0, [0.6, 0.5]),
                road("r3", 120.0, 1, 30, SmallCityRoad, 60.0, [0.4, 0.5]),
                road("r4", 340.0, 3, 80, Highway, 400.0, [0.8, 0.5]),
                road("r5", 200.0, 2, 50, LargeCityRoad, 150.0, [0.5, 0.7]),
                road("r6", 100.0, 1, 40, SmallCityRoad, 80.0, [0.5, 0.4]),
            ],
        }
    }
}

impl ScenarioConfig {
    /// The default scenario with r5 and r6 as target-domain roads whose PL baseline is
    /// raised by 8%. Source roads are r1 to r4.
    pub fn domain_shift() -> Self {
        let mut cfg = ScenarioConfig::default();
        cfg.domain_shift = DomainShift {
            background: 1.0,
            pl_baseline: 1.08,
        };
        for r in cfg.roads.iter_mut().skip(4) {
            r.target_domain = true;
        }
        cfg
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn start_time(&self) -> Result<Timestamp> {
        let t = parse_timestamp(&self.start).map_err(Error::Config)?;
        if !data::is_aligned(&t) {
            return Err(Error::Config("scenario start must be on a 15-minute boundary".into()));
        }
        Ok(t)
    }

    pub fn intervals(&self) -> usize {
        self.weeks as usize * INTERVALS_PER_WEEK
    }

    pub fn edges(&self) -> Result<TaBinEdges> {
        match &self.ta_edges {
            Some(e) => TaBinEdges::new(e.clone()),
            None => Ok(TaBinEdges::default()),
        }
    }

    fn share(&self, band: usize) -> f64 {
        self.band_share.get(band).copied().unwrap_or(1.0)
    }

    fn offset_db(&self, band: usize) -> f64 {
        self.band_offset_db.get(band).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        if self.weeks < 1 {
            return Err(Error::Config("weeks must be at least 1".into()));
        }
        self.start_time()?;
        let edges = self.edges()?;
        if edges.bins() != self.schema.ta_bins {
            return Err(Error::Config(format!(
                "TA edges define {} bins but the schema has {}",
                edges.bins(),
                self.schema.ta_bins
            )));
        }
        if self.schema.pl_bins != PL_BINS {
            return Err(Error::Config(format!("the generator emits {PL_BINS} PL bins")));
        }
        let rates = [
            self.calls_per_vehicle,
            self.background_ta_rate,
            self.pl_users_per_vehicle,
            self.pl_background_users,
            self.pl_shift_per_log_vehicle,
            self.noise_sd,
            self.domain_shift.background,
            self.domain_shift.pl_baseline,
        ];
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::Config("rates and multipliers must be finite and non-negative".into()));
        }
        if !(self.pl_spread_db > 0.0) {
            return Err(Error::Config("pl_spread_db must be positive".into()));
        }
        if !self.band_share.is_empty() && self.band_share.len() != self.schema.bands.len()
            || !self.band_offset_db.is_empty() && self.band_offset_db.len() != self.schema.bands.len()
        {
            return Err(Error::Config("band_share/band_offset_db need one entry per band".into()));
        }
        if self.roads.is_empty() {
            return Err(Error::Config("scenario needs at least one road".into()));
        }
        for (i, r) in self.roads.iter().enumerate() {
            r.meta().validate().map_err(|m| Error::Config(format!("road {}: {m}", r.road_id)))?;
            select_ta_bins(&edges, r.distance_m, r.distance_max_m)?;
            let vals = r.peak_amplitudes.iter().chain(&r.weekday_factor).chain([&r.base_flow, &r.background_scale]);
            if vals.into_iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Config(format!("road {}: negative rate", r.road_id)));
            }
            if self.roads[..i].iter().any(|o| o.road_id == r.road_id) {
                return Err(Error::Config(format!("duplicate road {}", r.road_id)));
            }
        }
        Ok(())
    }

    /// Stable hash of the configuration (hex SHA-256 of its JSON form).
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("scenario config serializes");
        crate::sha256_hex(json.as_bytes())
    }

    /// Distinct sites in first-appearance order, each with the road that defines its
    /// environment (the first road listed at the site).
    fn sites(&self) -> Vec<(String, usize)> {
        let mut out: Vec<(String, usize)> = Vec::new();
        for (i, r) in self.roads.iter().enumerate() {
            if !out.iter().any(|(s, _)| *s == r.site_id) {
                out.push((r.site_id.clone(), i));
            }
        }
        out
    }
}

pub const PL_BINS: usize = 21;

/// Inner PL edges in dB; bins are `(-inf, e_0), [e_0, e_1), ..., [e_last, inf)`.
pub fn pl_edges_db() -> Vec<f64> {
    (0..=19).map(|k| 50.0 + 5.0 * k as f64).collect()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Daytime plateau in `[0, 1]`.
pub fn day_level(hour: f64) -> f64 {
    logistic((hour - 6.5) / 0.7) * logistic((20.5 - hour) / 0.9)
}

/// The double-peak daily traffic profile (see module docs).
pub fn daily_profile(hour: f64, peaks: [f64; 2]) -> f64 {
    0.05 + 0.45 * day_level(hour)
        + peaks[0] * (-(hour - 8.0).powi(2) / (2.0 * 1.2f64.powi(2))).exp()
        + peaks[1] * (-(hour - 17.0).powi(2) / (2.0 * 1.5f64.powi(2))).exp()
}

pub fn background_activity(hour: f64) -> f64 {
    0.25 + 0.75 * day_level(hour)
}

fn hour_of(t: &Timestamp) -> f64 {
    t.hour() as f64 + t.minute() as f64 / 60.0
}

fn poisson<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng) as u64
}

/// Deterministic mean flow of a road at time `t` (before noise and rounding).
pub fn mean_flow(road: &RoadScenario, t: &Timestamp) -> f64 {
    let dow = t.weekday().num_days_from_monday() as usize;
    road.base_flow * daily_profile(hour_of(t), road.peak_amplitudes) * road.weekday_factor[dow]
}

/// Vehicle count of road `road` in interval `t_idx`.
pub fn generate_flow(cfg: &ScenarioConfig, road: usize, t_idx: usize) -> Result<u64> {
    let t = cfg.start_time()? + interval() * t_idx as i32;
    let mu = mean_flow(&cfg.roads[road], &t);
    if mu <= 0.0 {
        return Ok(0);
    }
    let mut rng = substream(cfg.seed, domain::FLOW, road as u64, t_idx as u64, 0);
    let noise = if cfg.noise_sd > 0.0 {
        Normal::new(0.0, cfg.noise_sd).expect("valid sd").sample(&mut rng)
    } else {
        0.0
    };
    Ok((mu + noise).max(0.0).round() as u64)
}

/// Flow series for every road: `flows[road][t_idx]`.
pub fn generate_flows(cfg: &ScenarioConfig) -> Result<Vec<Vec<u64>>> {
    cfg.validate()?;
    (0..cfg.roads.len())
        .map(|r| (0..cfg.intervals()).map(|t| generate_flow(cfg, r, t)).collect())
        .collect()
}

fn erf_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    0.5 * (1.0 + statrs::function::erf::erf((x - mean) / (sd * std::f64::consts::SQRT_2)))
}

/// Probability of each PL bin under `N(mean, sd)`.
pub fn pl_bin_probabilities(mean_db: f64, sd_db: f64) -> Vec<f64> {
    let edges = pl_edges_db();
    let mut cdf: Vec<f64> = vec![0.0];
    cdf.extend(edges.iter().map(|&e| erf_cdf(e, mean_db, sd_db)));
    cdf.push(1.0);
    cdf.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect()
}

/// Mean PL of a band given the vehicles in the interval.
pub fn pl_mean_db(cfg: &ScenarioConfig, band: usize, vehicles: f64, target_domain: bool) -> f64 {
    let shift = if target_domain { cfg.domain_shift.pl_baseline } else { 1.0 };
    cfg.pl_baseline_db * shift + cfg.offset_db(band) + cfg.pl_shift_per_log_vehicle * (1.0 + vehicles).ln()
}

/// Expected bin index of the PL histogram, `Σ i * p_i`.
pub fn expected_pl_bin(cfg: &ScenarioConfig, band: usize, vehicles: f64) -> f64 {
    pl_bin_probabilities(pl_mean_db(cfg, band, vehicles, false), cfg.pl_spread_db)
        .iter()
        .enumerate()
        .map(|(i, p)| i as f64 * p)
        .sum()
}

fn ta_bin_midpoints(edges: &TaBinEdges) -> Vec<f64> {
    edges.edges().windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// Counter records of every site, band and kind for the given flows
/// (`flows[road][t_idx]`). Output is ordered by time, site, band, then PL before TA.
pub fn generate_counters(cfg: &ScenarioConfig, flows: &[Vec<u64>]) -> Result<Vec<CounterRecord>> {
    cfg.validate()?;
    if flows.len() != cfg.roads.len() || flows.iter().any(|f| f.len() != cfg.intervals()) {
        return Err(Error::Config("flows do not match the scenario horizon".into()));
    }
    let edges = cfg.edges()?;
    let mids = ta_bin_midpoints(&edges);
    let road_bins: Vec<Vec<usize>> = cfg
        .roads
        .iter()
        .map(|r| select_ta_bins(&edges, r.distance_m, r.distance_max_m))
        .collect::<Result<_>>()?;
    let sites = cfg.sites();
    let mut site_roads: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in cfg.roads.iter().enumerate() {
        site_roads.entry(r.site_id.as_str()).or_default().push(i);
    }
    let start = cfg.start_time()?;
    let mut out = Vec::with_capacity(cfg.intervals() * sites.len() * cfg.schema.bands.len() * 2);
    for t_idx in 0..cfg.intervals() {
        let t = start + interval() * t_idx as i32;
        let hour = hour_of(&t);
        let activity = background_activity(hour);
        for (si, (site, lead)) in sites.iter().enumerate() {
            let lead = &cfg.roads[*lead];
            let env = lead.background_scale
                * if lead.target_domain { cfg.domain_shift.background } else { 1.0 };
            let roads_here = &site_roads[site.as_str()];
            let vehicles: f64 = roads_here.iter().map(|&r| flows[r][t_idx] as f64).sum();
            for (bi, band) in cfg.schema.bands.iter().enumerate() {
                let share = cfg.share(bi);
                let cell = format!("{site}-{band}");

                let mut rng = substream(cfg.seed, domain::PL, si as u64, t_idx as u64, bi as u64);
                let mass = share
                    * (cfg.pl_users_per_vehicle * vehicles
                        + cfg.pl_background_users * env * activity);
                let probs = pl_bin_probabilities(
                    pl_mean_db(cfg, bi, vehicles, lead.target_domain),
                    cfg.pl_spread_db,
                );
                let pl = probs.iter().map(|p| poisson(&mut rng, mass * p)).collect();
                out.push(CounterRecord {
                    timestamp: t,
                    site_id: site.clone(),
                    cell_id: cell.clone(),
                    band: band.clone(),
                    kind: CounterKind::Pl,
                    bins: pl,
                });

                let mut rng = substream(cfg.seed, domain::TA, si as u64, t_idx as u64, bi as u64);
                let mut means: Vec<f64> = mids
                    .iter()
                    .map(|m| cfg.background_ta_rate * env * activity * share * (-m / 500.0).exp())
                    .collect();
                for &r in roads_here {
                    let bins = &road_bins[r];
                    let per_bin = cfg.calls_per_vehicle * flows[r][t_idx] as f64 * share / bins.len() as f64;
                    for &b in bins {
                        means[b] += per_bin;
                    }
                }
                let ta = means.iter().map(|&m| poisson(&mut rng, m)).collect();
                out.push(CounterRecord {
                    timestamp: t,
                    site_id: site.clone(),
                    cell_id: cell,
                    band: band.clone(),
                    kind: CounterKind::Ta,
                    bins: ta,
                });
            }
        }
    }
    Ok(out)
}

/// Per-lane sensor records; lanes split the total as evenly as possible.
pub fn sensor_records(cfg: &ScenarioConfig, flows: &[Vec<u64>]) -> Result<Vec<SensorRecord>> {
    let start = cfg.start_time()?;
    let mut out = Vec::new();
    for t_idx in 0..cfg.intervals() {
        let t = start + interval() * t_idx as i32;
        for (ri, r) in cfg.roads.iter().enumerate() {
            let total = flows[ri][t_idx];
            let lanes = r.lanes as u64;
            for k in 0..lanes {
                out.push(SensorRecord {
                    timestamp: t,
                    road_id: r.road_id.clone(),
                    lane_id: format!("L{}", k + 1),
                    vehicle_count: total / lanes + u64::from(k < total % lanes),
                });
            }
        }
    }
    Ok(out)
}

/// In-memory scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub roads: Vec<RoadMeta>,
    pub flows: Vec<Vec<u64>>,
    pub counters: Vec<CounterRecord>,
    pub sensors: Vec<SensorRecord>,
}

pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario> {
    let flows = generate_flows(cfg)?;
    let counters = generate_counters(cfg, &flows)?;
    let sensors = sensor_records(cfg, &flows)?;
    Ok(Scenario {
        roads: cfg.roads.iter().map(RoadScenario::meta).collect(),
        flows,
        counters,
        sensors,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioManifest {
    pub generator: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub files: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct WrittenScenario {
    pub counters: PathBuf,
    pub sensors: PathBuf,
    pub roads: PathBuf,
    pub manifest: ScenarioManifest,
}

/// Writes `counters.csv`, `sensors.csv`, `roads.csv`, `scenario.toml` and
/// `manifest.json` into `dir` (created if missing).
pub fn write_scenario(cfg: &ScenarioConfig, dir: &Path) -> Result<WrittenScenario> {
    let scenario = generate(cfg)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let counters = dir.join("counters.csv");
    let sensors = dir.join("sensors.csv");
    let roads = dir.join("roads.csv");
    data::write_counters(&counters, &scenario.counters, &cfg.schema)?;
    data::write_sensors(&sensors, &scenario.sensors)?;
    data::write_roads(&roads, &scenario.roads)?;
    let cfg_path = dir.join("scenario.toml");
    fs::write(&cfg_path, cfg.to_toml()).map_err(|e| Error::io(&cfg_path, e))?;
    let manifest = ScenarioManifest {
        generator: "cellflow-synth".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        files: ["counters.csv", "sensors.csv", "roads.csv", "scenario.toml"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    };
    let man_path = dir.join("manifest.json");
    let body = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(&man_path, body).map_err(|e| Error::io(&man_path, e))?;
    Ok(WrittenScenario {
        counters,
        sensors,
        roads,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(weeks: u32) -> ScenarioConfig {
        let mut cfg = ScenarioConfig {
            weeks,
            ..ScenarioConfig::default()
        };
        cfg.roads.truncate(2);
        cfg
    }

    #[test]
    fn default_config_is_valid_and_round_trips_toml() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        assert_eq!(ScenarioConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn pl_probabilities_sum_to_one() {
        let p = pl_bin_probabilities(95.0, 12.0);
        assert_eq!(p.len(), PL_BINS);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_night_flow_follows_profile() {
        let mut cfg = small(1);
        cfg.noise_sd = 0.0;
        // 2024-01-01 is a Monday; 03:00 is interval 12.
        let got = generate_flow(&cfg, 0, 12).unwrap();
        let r = &cfg.roads[0];
        let expected = r.base_flow
            * (0.05
                + 0.45 * (1.0 / (1.0 + (3.5f64 / 0.7).exp())) * (1.0 / (1.0 + (-17.5f64 / 0.9).exp()))
                + r.peak_amplitudes[0] * (-25.0 / (2.0 * 1.44f64)).exp()
                + r.peak_amplitudes[1] * (-196.0 / (2.0 * 2.25f64)).exp());
        assert_eq!(got, expected.round() as u64);
        assert!(got < (0.1 * r.base_flow) as u64);
    }

    #[test]
    fn zero_weekday_factor_silences_sundays() {
        let mut cfg = small(1);
        cfg.roads[0].weekday_factor[6] = 0.0;
        let flows = generate_flows(&cfg).unwrap();
        assert!(flows[0][6 * 96..7 * 96].iter().all(|&v| v == 0));
        assert!(flows[0][..96].iter().any(|&v| v > 0));
    }

    #[test]
    fn zero_traffic_and_background_leave_road_bins_empty() {
        let mut cfg = small(1);
        cfg.background_ta_rate = 0.0;
        let flows = vec![vec![0; cfg.intervals()]; cfg.roads.len()];
        let counters = generate_counters(&cfg, &flows).unwrap();
        assert!(counters
            .iter()
            .filter(|c| c.kind == CounterKind::Ta)
            .all(|c| c.bins.iter().all(|&b| b == 0)));
    }

    #[test]
    fn road_bin_mean_matches_poisson_mean() {
        let mut cfg = small(2);
        cfg.background_ta_rate = 0.0;
        cfg.roads.truncate(1);
        let flows = generate_flows(&cfg).unwrap();
        let counters = generate_counters(&cfg, &flows).unwrap();
        let bin = select_ta_bins(&cfg.edges().unwrap(), cfg.roads[0].distance_m, None).unwrap()[0];
        // Band 0 has share 1.
        let counts: Vec<f64> = counters
            .iter()
            .filter(|c| c.kind == CounterKind::Ta && c.band == cfg.schema.bands[0])
            .map(|c| c.bins[bin] as f64)
            .collect();
        let n = counts.len() as f64;
        let mean = counts.iter().sum::<f64>() / n;
        let expected = cfg.calls_per_vehicle * flows[0].iter().sum::<u64>() as f64 / n;
        // Sum of independent Poissons: var of the mean = expected / n.
        let se = (expected / n).sqrt();
        assert!((mean - expected).abs() < 3.0 * se, "mean {mean} expected {expected} se {se}");
    }

    #[test]
    fn pl_mean_bin_increases_with_vehicles() {
        let cfg = ScenarioConfig::default();
        for v in [0.0, 1.0, 10.0, 100.0] {
            assert!(expected_pl_bin(&cfg, 0, 2.0 * v + 1.0) > expected_pl_bin(&cfg, 0, v));
        }
    }

    #[test]
    fn same_seed_same_series() {
        let cfg = small(1);
        assert_eq!(generate_flows(&cfg).unwrap(), generate_flows(&cfg).unwrap());
        let mut other = cfg.clone();
        other.seed += 1;
        assert_ne!(generate_flows(&cfg).unwrap(), generate_flows(&other).unwrap());
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = small(1);
        cfg.weeks = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = small(1);
        cfg.noise_sd = -1.0;
        assert!(cfg.validate().is_err());
        assert!(ScenarioConfig::from_toml("weeks = 2\nbogus = 1\n").is_err());
    }
}
