use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::geometry::{Piece, ReferenceLine};
use super::trajectory::{IntentionSpec, VehicleState};
use super::utility::{UtilityParams, VehicleGeometry};
use super::TrafficError;

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSpec {
    pub name: String,
    pub start: [f64; 2],
    /// Initial heading in degrees, counter-clockwise from +x.
    pub heading: f64,
    pub pieces: Vec<Piece>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Ego,
    Human,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeSpec {
    pub name: String,
    pub reference: String,
    pub velocities: Vec<f64>,
    #[serde(default = "default_offsets")]
    pub offsets: Vec<f64>,
    /// Whether the ego may pick this type; types it only needs others to
    /// consider are modeled but not selectable.
    #[serde(default = "default_true")]
    pub selectable: bool,
}

fn default_offsets() -> Vec<f64> {
    vec![0.0]
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub name: String,
    pub role: Role,
    pub position: [f64; 2],
    pub velocity: f64,
    pub types: Vec<TypeSpec>,
    /// Ground-truth type of a human driver, by name.
    #[serde(default)]
    pub true_type: Option<String>,
}

/// Outcome the scenario is designed to produce, used in reports and checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    /// `gap` or `behind` for merges.
    #[serde(default)]
    pub outcome: Option<String>,
    /// Vehicle whose type decides the outcome.
    #[serde(default)]
    pub rear_vehicle: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub case: String,
    #[serde(default)]
    pub description: String,
    pub stage_durations: Vec<f64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub steps: usize,
    #[serde(default = "default_replan")]
    pub replan: f64,
    /// Standard deviation of the end-position observation noise (m).
    #[serde(default = "default_obs_std")]
    pub observation_std: f64,
    /// When set, the observed end state also includes the longitudinal
    /// velocity with this noise standard deviation (m/s).
    #[serde(default)]
    pub velocity_std: Option<f64>,
    #[serde(default)]
    pub params: UtilityParams,
    #[serde(default)]
    pub geometry: VehicleGeometry,
    pub reference_lines: Vec<LineSpec>,
    pub vehicles: Vec<VehicleSpec>,
    #[serde(default)]
    pub expect: Expectation,
}

fn default_dt() -> f64 {
    0.1
}

fn default_replan() -> f64 {
    0.4
}

fn default_obs_std() -> f64 {
    0.5
}

macro_rules! bundled {
    ($($id:literal => $file:literal),* $(,)?) => {
        &[$(($id, include_str!(concat!("../../scenarios/", $file)))),*]
    };
}

/// Scenario files shipped with the crate, keyed `case/scenario`.
pub const BUNDLED: &[(&str, &str)] = bundled! {
    "I/A" => "case1_a.toml",
    "I/B" => "case1_b.toml",
    "I/C" => "case1_c.toml",
    "I/D" => "case1_d.toml",
    "II/A" => "case2_a.toml",
    "II/B" => "case2_b.toml",
    "II/C" => "case2_c.toml",
    "II/D" => "case2_d.toml",
    "II/E" => "case2_e.toml",
    "II/F" => "case2_f.toml",
    "II/G" => "case2_g.toml",
    "II/H" => "case2_h.toml",
};

/// Normalizes case names: `1`, `i`, `I`, `case1` all mean `I`.
pub fn normalize_case(case: &str) -> Option<&'static str> {
    match case.trim().to_ascii_lowercase().trim_start_matches("case").trim() {
        "1" | "i" => Some("I"),
        "2" | "ii" => Some("II"),
        _ => None,
    }
}

/// Scenario ids of a bundled case, in order.
pub fn bundled_ids(case: &str) -> Vec<&'static str> {
    let Some(case) = normalize_case(case) else {
        return Vec::new();
    };
    BUNDLED
        .iter()
        .filter_map(|(k, _)| k.strip_prefix(case).and_then(|r| r.strip_prefix('/')))
        .collect()
}

fn set_dotted(root: &mut toml::Value, key: &str, value: toml::Value) -> Result<(), TrafficError> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = cur
            .as_table_mut()
            .ok_or_else(|| TrafficError::Config(format!("cannot set {key}: {part} is not a table")))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        cur = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    unreachable!("split yields at least one part")
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl Scenario {
    /// Parses a scenario and applies `key=value` overrides on dotted paths
    /// (e.g. `params.v_slow=4.5`, `replan=0.2`).
    pub fn from_toml(text: &str, overrides: &[(String, String)]) -> Result<Self, TrafficError> {
        let mut value: toml::Value = toml::from_str(text).map_err(|e| TrafficError::Config(e.to_string()))?;
        for (k, v) in overrides {
            set_dotted(&mut value, k, parse_value(v))?;
        }
        let sc: Scenario = value.try_into().map_err(|e: toml::de::Error| TrafficError::Config(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_path(path: &Path, overrides: &[(String, String)]) -> Result<Self, TrafficError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TrafficError::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_toml(&text, overrides)
    }

    pub fn bundled(case: &str, id: &str, overrides: &[(String, String)]) -> Result<Self, TrafficError> {
        let c = normalize_case(case).ok_or_else(|| TrafficError::UnknownScenario(format!("case {case}")))?;
        let key = format!("{c}/{}", id.to_ascii_uppercase());
        let text = BUNDLED
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, t)| *t)
            .ok_or_else(|| TrafficError::UnknownScenario(format!("scenario {id} of case {c}")))?;
        Self::from_toml(text, overrides)
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        if self.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(TrafficError::Config(format!(
                "scenario schema version {} is not supported",
                self.schema_version
            )));
        }
        self.params.validate()?;
        if self.stage_durations.len() != 2 {
            return Err(TrafficError::Config("two stage durations are required".into()));
        }
        for &d in &self.stage_durations {
            super::trajectory::sample_count(d, self.dt)?;
        }
        let k = self.replan / self.dt;
        if !(self.replan > 0.0 && self.replan <= self.stage_durations[0] + 1e-9 && (k - k.round()).abs() < 1e-6) {
            return Err(TrafficError::Config(format!(
                "replan interval {} must be a positive multiple of dt within the first stage",
                self.replan
            )));
        }
        if !(self.observation_std > 0.0) {
            return Err(TrafficError::Config("observation_std must be positive".into()));
        }
        if matches!(self.velocity_std, Some(v) if !(v > 0.0)) {
            return Err(TrafficError::Config("velocity_std must be positive".into()));
        }
        let lines: Vec<&str> = self.reference_lines.iter().map(|l| l.name.as_str()).collect();
        if self.vehicles.iter().filter(|v| v.role == Role::Ego).count() != 1 {
            return Err(TrafficError::Config("exactly one ego vehicle is required".into()));
        }
        for v in &self.vehicles {
            if v.types.is_empty() {
                return Err(TrafficError::Config(format!("vehicle {} has no types", v.name)));
            }
            for t in &v.types {
                if !lines.contains(&t.reference.as_str()) {
                    return Err(TrafficError::Config(format!(
                        "type {} of {} follows unknown reference line {}",
                        t.name, v.name, t.reference
                    )));
                }
                IntentionSpec::new(&t.name, &t.reference, t.velocities.clone(), t.offsets.clone())?;
            }
            match (v.role, &v.true_type) {
                (Role::Human, None) => {
                    return Err(TrafficError::Config(format!("human vehicle {} needs a true_type", v.name)))
                }
                (_, Some(tt)) if !v.types.iter().any(|t| &t.name == tt) => {
                    return Err(TrafficError::Config(format!("vehicle {} has no type named {tt}", v.name)))
                }
                _ => {}
            }
            if v.role == Role::Ego && !v.types.iter().any(|t| t.selectable) {
                return Err(TrafficError::Config("the ego needs a selectable type".into()));
            }
        }
        Ok(())
    }

    pub fn lines(&self) -> Result<BTreeMap<String, ReferenceLine>, TrafficError> {
        self.reference_lines
            .iter()
            .map(|l| Ok((l.name.clone(), ReferenceLine::from_pieces(&l.name, l.start, l.heading, &l.pieces)?)))
            .collect()
    }

    pub fn ego(&self) -> usize {
        self.vehicles.iter().position(|v| v.role == Role::Ego).expect("validated")
    }

    pub fn intention(&self, vehicle: usize, ty: usize) -> IntentionSpec {
        let t = &self.vehicles[vehicle].types[ty];
        IntentionSpec {
            name: t.name.clone(),
            reference: t.reference.clone(),
            velocities: t.velocities.clone(),
            offsets: t.offsets.clone(),
        }
    }

    pub fn type_index(&self, vehicle: usize, name: &str) -> Option<usize> {
        self.vehicles[vehicle].types.iter().position(|t| t.name == name)
    }

    pub fn true_type(&self, vehicle: usize) -> Option<usize> {
        self.vehicles[vehicle]
            .true_type
            .as_deref()
            .and_then(|n| self.type_index(vehicle, n))
    }

    /// Initial state of every vehicle, expressed on its first type's line.
    pub fn initial_states(&self) -> Result<Vec<VehicleState>, TrafficError> {
        let lines = self.lines()?;
        self.vehicles
            .iter()
            .map(|v| {
                let line = &lines[&v.types[0].reference];
                let (s, l) = line.project(v.position[0], v.position[1]);
                let mut st = VehicleState::on_line(line, s, l, v.velocity);
                st.x = v.position[0];
                st.y = v.position[1];
                Ok(st)
            })
            .collect()
    }
}
