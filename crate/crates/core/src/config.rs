//! Scenario configuration.
//!
//! A scenario file is flat TOML: one `key = value` per line, no tables.
//! Values resolve in three layers: built-in defaults (the reference
//! deployment: 400 x 400 m, 100 nodes, sink at the origin, source at
//! (300, 300), 40 m range, 2 J batteries, 512-byte packets), then the file,
//! then command-line overrides. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::RadioParams;
use crate::engine::mac::MacModel;
use crate::link_metrics::{ApprMode, InterferenceMode, InterferenceModel, MetricParams};
use crate::routing::{BeaconSettings, DiscoveryOptions, ProgressRule};
use crate::topology::FallbackMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficModel {
    /// Packets every `1/rate` seconds.
    Deterministic,
    /// Exponential inter-arrival times with mean `1/rate`.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouterSelection {
    Qempar,
    Minhop,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub field_width_m: f64,
    pub field_height_m: f64,
    /// Total nodes including sink and source.
    pub node_count: usize,
    pub sink_x_m: f64,
    pub sink_y_m: f64,
    pub source_x_m: f64,
    pub source_y_m: f64,
    pub initial_energy_j: f64,
    pub e_elec_j_per_bit: f64,
    pub eps_fs_j_per_bit_m2: f64,
    pub eps_mp_j_per_bit_m4: f64,
    /// Aggregation cost; stored, never used.
    pub e_da_j_per_bit: f64,
    pub packet_bytes: u64,
    pub radio_range_m: f64,
    pub fallback: FallbackMode,

    pub paths_k: u32,
    pub discovery_retries: usize,
    pub progress: ProgressRule,
    pub hop_budget_factor: f64,
    pub beacon_bytes: u64,
    pub beacon_accounting: bool,
    pub beacon_rounds: u32,

    pub appr_mode: ApprMode,
    pub interference_mode: InterferenceMode,
    pub cold_start: f64,
    pub stats_decay: f64,
    pub interference_noise: f64,
    pub interference_per_neighbor: f64,
    pub interference_exponent: f64,
    pub interference_reference: f64,

    pub fragment_header_bytes: u64,
    pub reassembly_deadline_s: f64,
    pub wrap_fragments: bool,

    pub bit_rate_bps: f64,
    pub access_delay_s: f64,
    pub contention_delay_s: f64,
    pub link_success_base: f64,
    pub link_distance_penalty: f64,
    pub hop_retries: u32,

    pub traffic: TrafficModel,
    pub duration_s: f64,
    pub rates: Vec<f64>,
    pub seeds: Vec<u64>,
    pub router: RouterSelection,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let mac = MacModel::default();
        let interference = InterferenceModel::default();
        ScenarioConfig {
            field_width_m: 400.0,
            field_height_m: 400.0,
            node_count: 100,
            sink_x_m: 0.0,
            sink_y_m: 0.0,
            source_x_m: 300.0,
            source_y_m: 300.0,
            initial_energy_j: 2.0,
            e_elec_j_per_bit: 50e-9,
            eps_fs_j_per_bit_m2: 10e-12,
            eps_mp_j_per_bit_m4: 0.0013e-12,
            e_da_j_per_bit: 5e-9,
            packet_bytes: 512,
            radio_range_m: 40.0,
            fallback: FallbackMode::Progress,

            paths_k: 4,
            discovery_retries: 3,
            progress: ProgressRule::Strict,
            hop_budget_factor: 4.0,
            beacon_bytes: 32,
            beacon_accounting: true,
            beacon_rounds: BeaconSettings::default().rounds,

            appr_mode: ApprMode::Mean,
            interference_mode: InterferenceMode::Normalized,
            cold_start: 1.0,
            stats_decay: 1.0,
            interference_noise: interference.noise,
            interference_per_neighbor: interference.per_neighbor,
            interference_exponent: interference.exponent,
            interference_reference: interference.reference,

            fragment_header_bytes: 8,
            reassembly_deadline_s: 5.0,
            wrap_fragments: true,

            bit_rate_bps: mac.bit_rate_bps,
            access_delay_s: mac.access_delay_s,
            contention_delay_s: mac.contention_delay_s,
            link_success_base: mac.success_base,
            link_distance_penalty: mac.distance_penalty,
            hop_retries: 2,

            traffic: TrafficModel::Poisson,
            duration_s: 60.0,
            rates: (1..=10).map(|i| 5.0 * i as f64).collect(),
            seeds: (1..=20).collect(),
            router: RouterSelection::Both,
        }
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Validation(msg()))
    }
}

impl ScenarioConfig {
    pub fn packet_bits(&self) -> u64 {
        self.packet_bytes * 8
    }

    pub fn radio(&self) -> Result<RadioParams, ConfigError> {
        RadioParams::new(
            self.e_elec_j_per_bit,
            self.eps_fs_j_per_bit_m2,
            self.eps_mp_j_per_bit_m4,
            self.e_da_j_per_bit,
        )
        .map_err(|e| ConfigError::Validation(e.to_string()))
    }

    pub fn mac(&self) -> MacModel {
        MacModel {
            bit_rate_bps: self.bit_rate_bps,
            access_delay_s: self.access_delay_s,
            contention_delay_s: self.contention_delay_s,
            success_base: self.link_success_base,
            distance_penalty: self.link_distance_penalty,
        }
    }

    pub fn metric_params(&self) -> MetricParams {
        MetricParams {
            appr_mode: self.appr_mode,
            interference_mode: self.interference_mode,
            cold_start: self.cold_start,
            decay: self.stats_decay,
        }
    }

    pub fn interference_model(&self) -> InterferenceModel {
        InterferenceModel {
            noise: self.interference_noise,
            per_neighbor: self.interference_per_neighbor,
            exponent: self.interference_exponent,
            reference: self.interference_reference,
        }
    }

    pub fn beacon_settings(&self) -> BeaconSettings {
        BeaconSettings {
            bits: self.beacon_bytes * 8,
            accounting: self.beacon_accounting,
            rounds: self.beacon_rounds,
        }
    }

    pub fn discovery_options(&self) -> DiscoveryOptions {
        DiscoveryOptions {
            k: self.paths_k as usize,
            retries: self.discovery_retries,
            progress: self.progress,
            hop_budget_factor: self.hop_budget_factor,
        }
    }

    /// Checks every invariant; returns advisory warnings on success.
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        let (w, h) = (self.field_width_m, self.field_height_m);
        ensure(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite(), || {
            format!("field dimensions must be positive, got {w} x {h}")
        })?;
        ensure(self.node_count >= 2, || {
            format!(
                "node_count must be at least 2 (sink and source), got {}",
                self.node_count
            )
        })?;
        let inside = |x: f64, y: f64| (0.0..=w).contains(&x) && (0.0..=h).contains(&y);
        ensure(inside(self.sink_x_m, self.sink_y_m), || {
            "sink position must lie in the field".into()
        })?;
        ensure(inside(self.source_x_m, self.source_y_m), || {
            "source position must lie in the field".into()
        })?;
        ensure(
            (self.sink_x_m, self.sink_y_m) != (self.source_x_m, self.source_y_m),
            || "source and sink positions must differ".into(),
        )?;
        ensure(
            self.initial_energy_j > 0.0 && self.initial_energy_j.is_finite(),
            || {
                format!(
                    "initial_energy_j must be positive, got {}",
                    self.initial_energy_j
                )
            },
        )?;
        self.radio()?;
        ensure(self.packet_bytes > 0, || {
            "packet_bytes must be positive".into()
        })?;
        ensure(
            self.radio_range_m > 0.0 && self.radio_range_m.is_finite(),
            || format!("radio_range_m must be positive, got {}", self.radio_range_m),
        )?;
        ensure(self.paths_k >= 1, || "paths_k must be at least 1".into())?;
        ensure(self.paths_k as u64 <= self.packet_bits(), || {
            format!(
                "paths_k {} exceeds the packet's {} bits",
                self.paths_k,
                self.packet_bits()
            )
        })?;
        ensure(self.hop_budget_factor > 0.0, || {
            "hop_budget_factor must be positive".into()
        })?;
        ensure(self.beacon_bytes > 0, || {
            "beacon_bytes must be positive".into()
        })?;
        ensure((0.0..=1.0).contains(&self.cold_start), || {
            format!("cold_start must lie in [0, 1], got {}", self.cold_start)
        })?;
        ensure(self.stats_decay > 0.0 && self.stats_decay <= 1.0, || {
            format!("stats_decay must lie in (0, 1], got {}", self.stats_decay)
        })?;
        ensure(self.interference_noise > 0.0, || {
            "interference_noise must be positive".into()
        })?;
        ensure(self.interference_per_neighbor >= 0.0, || {
            "interference_per_neighbor must be non-negative".into()
        })?;
        ensure(self.interference_exponent >= 0.0, || {
            "interference_exponent must be non-negative".into()
        })?;
        ensure(self.interference_reference > 0.0, || {
            "interference_reference must be positive".into()
        })?;
        ensure(self.reassembly_deadline_s > 0.0, || {
            "reassembly_deadline_s must be positive".into()
        })?;
        self.mac().validate().map_err(ConfigError::Validation)?;
        ensure(
            self.duration_s >= 0.0 && self.duration_s.is_finite(),
            || format!("duration_s must be non-negative, got {}", self.duration_s),
        )?;
        ensure(!self.rates.is_empty(), || "rates must not be empty".into())?;
        ensure(
            self.rates.iter().all(|r| *r >= 0.0 && r.is_finite()),
            || "every rate must be a non-negative number".into(),
        )?;
        ensure(!self.seeds.is_empty(), || "seeds must not be empty".into())?;
        // TOML integers are signed 64-bit
        ensure(self.seeds.iter().all(|&s| s <= i64::MAX as u64), || {
            format!("seeds must not exceed {}", i64::MAX)
        })?;

        let mut warnings = Vec::new();
        if self.fallback == FallbackMode::Off {
            warnings.push(
                "fallback = \"off\": sparse fields may leave the source disconnected".to_string(),
            );
        }
        if !self.wrap_fragments && self.paths_k > 1 {
            warnings.push(
                "wrap_fragments = false: runs fail when fewer than paths_k paths exist".to_string(),
            );
        }
        Ok(warnings)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    /// Every key with its resolved value rendered as TOML.
    pub fn entries(&self) -> BTreeMap<String, String> {
        match toml::Value::try_from(self).expect("flat config always serializes") {
            toml::Value::Table(t) => t.into_iter().map(|(k, v)| (k, v.to_string())).collect(),
            _ => unreachable!("config serializes to a table"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Default,
    File,
    Override,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Default => "default",
            Provenance::File => "file",
            Provenance::Override => "override",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub config: ScenarioConfig,
    pub provenance: BTreeMap<String, Provenance>,
    pub warnings: Vec<String>,
}

impl fmt::Display for ResolvedConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (key, value) in self.config.entries() {
            let src = self
                .provenance
                .get(&key)
                .copied()
                .unwrap_or(Provenance::Default);
            writeln!(f, "{key} = {value}  # {src}")?;
        }
        Ok(())
    }
}

fn parse_override_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key just parsed"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Resolves defaults, an optional scenario file and `key=value` overrides
/// into a validated configuration.
pub fn load_config(
    path: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<ResolvedConfig, ConfigError> {
    let mut table = toml::Table::new();
    let mut provenance: BTreeMap<String, Provenance> = ScenarioConfig::default()
        .entries()
        .into_keys()
        .map(|k| (k, Provenance::Default))
        .collect();

    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        // parse the file alone first so errors carry its line numbers
        toml::from_str::<ScenarioConfig>(&text)
            .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        table = toml::from_str(&text)
            .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        for key in table.keys() {
            provenance.insert(key.clone(), Provenance::File);
        }
    }

    for (key, raw) in overrides {
        if !provenance.contains_key(key) {
            return Err(ConfigError::Parse(format!(
                "unknown key `{key}` in override"
            )));
        }
        table.insert(key.clone(), parse_override_value(raw));
        provenance.insert(key.clone(), Provenance::Override);
    }

    let config = ScenarioConfig::deserialize(toml::Value::Table(table))
        .map_err(|e| ConfigError::Parse(e.to_string()))?;
    let warnings = config.validate()?;
    Ok(ResolvedConfig {
        config,
        provenance,
        warnings,
    })
}
