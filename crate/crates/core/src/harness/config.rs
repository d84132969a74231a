//! Run configuration: TOML schema, validation with field paths, and presets.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::components::{GaussianSpringSpec, GoalSpringSpec, ObstacleSpringSpec, UnilateralDamperSpec};
use crate::coordination::{MetricScope, TransportConfig};
use crate::scenario::{ScenarioKind, Tolerances};
use crate::vec3::Vec3;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { path: path.into(), reason: reason.into() }
}

fn positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, format!("must be positive and finite, got {v}")))
    }
}

fn non_negative(path: &str, v: f64) -> Result<(), ConfigError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, format!("must be non-negative and finite, got {v}")))
    }
}

/// A Gaussian spring given by exactly two of stiffness, sigma and max force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stiffness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_force: Option<f64>,
}

impl GaussianConfig {
    pub fn k_fmax(stiffness: f64, max_force: f64) -> Self {
        Self { stiffness: Some(stiffness), sigma: None, max_force: Some(max_force) }
    }

    pub fn sigma_fmax(sigma: f64, max_force: f64) -> Self {
        Self { stiffness: None, sigma: Some(sigma), max_force: Some(max_force) }
    }

    pub fn to_spec(&self, path: &str) -> Result<GaussianSpringSpec, ConfigError> {
        let r = match (self.stiffness, self.sigma, self.max_force) {
            (Some(k), None, Some(f)) => GaussianSpringSpec::from_stiffness_max_force(k, f),
            (None, Some(s), Some(f)) => GaussianSpringSpec::from_sigma_max_force(s, f),
            (Some(k), Some(s), None) => GaussianSpringSpec::from_stiffness_sigma(k, s),
            _ => return Err(invalid(path, "give exactly two of stiffness, sigma, max_force")),
        };
        r.map_err(|e| invalid(path, e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalConfig {
    pub stiffness: f64,
    pub max_force: f64,
    /// Defaults to critical damping for the virtual mass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DamperConfig {
    pub base_damping: f64,
    pub radius: f64,
    pub max_force: f64,
}

impl Default for DamperConfig {
    fn default() -> Self {
        Self { base_damping: 150.0, radius: 0.5, max_force: 50.0 }
    }
}

fn default_true() -> bool {
    true
}
fn default_mass() -> f64 {
    5.0
}
fn default_floor_damping() -> f64 {
    5.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotParams {
    pub goal: GoalConfig,
    /// Speed of the moving goal filter (m/s).
    pub filter_speed: f64,
    pub robot_avoidance: GaussianConfig,
    pub hand_avoidance: GaussianConfig,
    #[serde(default)]
    pub damper: DamperConfig,
    /// Whether this robot carries avoidance springs towards other robots.
    #[serde(default = "default_true")]
    pub avoid_robots: bool,
    #[serde(default = "default_mass")]
    pub virtual_mass: f64,
    #[serde(default = "default_floor_damping")]
    pub floor_damping: f64,
}

/// Per-robot replacements for fields of [`RobotParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotOverride {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<GoalConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_speed: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robot_avoidance: Option<GaussianConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand_avoidance: Option<GaussianConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avoid_robots: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    pub spring: GaussianConfig,
    pub plane_height: f64,
    pub grasp_lift: f64,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self { spring: GaussianConfig::sigma_fmax(0.01, -5.0), plane_height: 0.0, grasp_lift: 0.03 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoordinationConfig {
    pub stall_threshold: f64,
    pub stall_dwell: f64,
    pub speed_floor: f64,
    pub alpha: f64,
    pub proximity_threshold: f64,
    pub near_goal: f64,
    pub round_timeout: f64,
    /// A holder gives priority back after this long even without progress.
    pub priority_timeout: f64,
    /// Arrival tolerance at a waypoint that ends a priority hold.
    pub release_tolerance: f64,
    /// Which attachments enter the stall metric.
    pub metric_scope: MetricScope,
    pub transport: TransportConfig,
}

impl Default for CoordinationConfig {
    fn default() -> Self {
        Self {
            stall_threshold: 4.0,
            stall_dwell: 0.5,
            speed_floor: 0.01,
            alpha: 1.0,
            proximity_threshold: 0.15,
            near_goal: 0.06,
            round_timeout: 0.2,
            priority_timeout: 15.0,
            release_tolerance: 0.01,
            metric_scope: MetricScope::AllComponents,
            transport: TransportConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Features {
    pub negotiation: bool,
    pub damper: bool,
}

impl Default for Features {
    fn default() -> Self {
        Self { negotiation: true, damper: false }
    }
}

/// Scripted hand: repeated approach, hold and retreat towards a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproachConfig {
    pub start: Vec3,
    pub target: Vec3,
    pub speed: f64,
    pub first_start: f64,
    pub hold: f64,
    /// Out-of-view time between repeats.
    pub rest: f64,
    pub repeats: u32,
    /// Seeded lateral offset range applied to each approach target (m).
    #[serde(default)]
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum HandConfig {
    #[default]
    None,
    Approach(ApproachConfig),
    Keyframes { keyframes: Vec<crate::scenario::Keyframe> },
    Live,
    Recorded { inputs: Vec<crate::scenario::HandInput> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HumanConfig {
    pub first_place: f64,
    pub place_interval: f64,
}

impl Default for HumanConfig {
    fn default() -> Self {
        Self { first_place: 4.0, place_interval: 8.0 }
    }
}

fn default_hold_point() -> Vec3 {
    Vec3::new(0.0, 0.0, 0.15)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub n_robots: usize,
    /// Where the first robot keeps its end-effector in hold scenarios.
    #[serde(default = "default_hold_point")]
    pub hold_point: Vec3,
}

fn default_dt() -> f64 {
    0.004
}
fn default_record_every() -> u32 {
    5
}
fn default_keypoints() -> usize {
    1
}
fn default_cluster_radius() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub duration_cap: f64,
    #[serde(default = "default_record_every")]
    pub record_every: u32,
    pub scenario: ScenarioConfig,
    pub robot: RobotParams,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub robots: Vec<RobotOverride>,
    #[serde(default)]
    pub table: TableConfig,
    #[serde(default)]
    pub coordination: CoordinationConfig,
    #[serde(default)]
    pub features: Features,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub hand: HandConfig,
    #[serde(default = "default_keypoints")]
    pub hand_keypoints: usize,
    #[serde(default = "default_cluster_radius")]
    pub hand_cluster_radius: f64,
    #[serde(default)]
    pub human: HumanConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prune_radius: Option<f64>,
}

/// The part of a safety profile that can be swapped on a running simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandProfile {
    pub hand_avoidance: GaussianConfig,
    pub damper: bool,
}

/// Fully resolved parameters for one robot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedRobot {
    pub goal: GoalSpringSpec,
    pub filter_speed: f64,
    pub robot_avoidance: GaussianSpringSpec,
    pub hand_avoidance: GaussianSpringSpec,
    pub damper: UnilateralDamperSpec,
    pub avoid_robots: bool,
    pub virtual_mass: f64,
    pub floor_damping: f64,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn robot_params(&self, index: usize) -> RobotParams {
        let mut p = self.robot;
        for o in self.robots.iter().filter(|o| o.index == index) {
            if let Some(g) = o.goal {
                p.goal = g;
            }
            if let Some(s) = o.filter_speed {
                p.filter_speed = s;
            }
            if let Some(a) = o.robot_avoidance {
                p.robot_avoidance = a;
            }
            if let Some(h) = o.hand_avoidance {
                p.hand_avoidance = h;
            }
            if let Some(b) = o.avoid_robots {
                p.avoid_robots = b;
            }
        }
        p
    }

    pub fn resolve_robot(&self, index: usize) -> Result<ResolvedRobot, ConfigError> {
        let p = self.robot_params(index);
        let path = if self.robots.iter().any(|o| o.index == index) { format!("robots[{index}]") } else { "robot".into() };
        positive(&format!("{path}.virtual_mass"), p.virtual_mass)?;
        non_negative(&format!("{path}.floor_damping"), p.floor_damping)?;
        positive(&format!("{path}.filter_speed"), p.filter_speed)?;
        let goal = match p.goal.damping {
            Some(c) => GoalSpringSpec::new(p.goal.stiffness, c, p.goal.max_force),
            None => GoalSpringSpec::critically_damped(p.goal.stiffness, p.goal.max_force, p.virtual_mass),
        }
        .map_err(|e| invalid(format!("{path}.goal"), e.to_string()))?;
        let d = p.damper;
        let damper = UnilateralDamperSpec::new(d.base_damping, d.radius, d.max_force)
            .map_err(|e| invalid(format!("{path}.damper"), e.to_string()))?;
        Ok(ResolvedRobot {
            goal,
            filter_speed: p.filter_speed,
            robot_avoidance: p.robot_avoidance.to_spec(&format!("{path}.robot_avoidance"))?,
            hand_avoidance: p.hand_avoidance.to_spec(&format!("{path}.hand_avoidance"))?,
            damper,
            avoid_robots: p.avoid_robots,
            virtual_mass: p.virtual_mass,
            floor_damping: p.floor_damping,
        })
    }

    pub fn table_spec(&self) -> Result<ObstacleSpringSpec, ConfigError> {
        Ok(ObstacleSpringSpec {
            spring: self.table.spring.to_spec("table.spring")?,
            plane_height: self.table.plane_height,
            grasp_lift: self.table.grasp_lift,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("dt", self.dt)?;
        non_negative("duration_cap", self.duration_cap)?;
        if self.record_every == 0 {
            return Err(invalid("record_every", "must be at least 1"));
        }
        if !(1..=4).contains(&self.scenario.n_robots) {
            return Err(invalid("scenario.n_robots", format!("must be 1..=4, got {}", self.scenario.n_robots)));
        }
        for (i, o) in self.robots.iter().enumerate() {
            if o.index >= self.scenario.n_robots {
                return Err(invalid(format!("robots[{i}].index"), "no such robot"));
            }
        }
        for i in 0..self.scenario.n_robots {
            self.resolve_robot(i)?;
        }
        self.table_spec()?;
        let c = &self.coordination;
        positive("coordination.stall_threshold", c.stall_threshold)?;
        positive("coordination.stall_dwell", c.stall_dwell)?;
        positive("coordination.speed_floor", c.speed_floor)?;
        non_negative("coordination.alpha", c.alpha)?;
        positive("coordination.proximity_threshold", c.proximity_threshold)?;
        positive("coordination.near_goal", c.near_goal)?;
        positive("coordination.round_timeout", c.round_timeout)?;
        positive("coordination.priority_timeout", c.priority_timeout)?;
        positive("coordination.release_tolerance", c.release_tolerance)?;
        if c.transport.delay_steps == 0 {
            return Err(invalid("coordination.transport.delay_steps", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&c.transport.drop_rate) {
            return Err(invalid("coordination.transport.drop_rate", "must be in [0, 1)"));
        }
        let t = &self.tolerances;
        positive("tolerances.position", t.position)?;
        positive("tolerances.speed", t.speed)?;
        non_negative("tolerances.grip_time", t.grip_time)?;
        non_negative("tolerances.hover", t.hover)?;
        non_negative("tolerances.grasp_offset", t.grasp_offset)?;
        if self.hand_keypoints == 0 {
            return Err(invalid("hand_keypoints", "must be at least 1"));
        }
        non_negative("hand_cluster_radius", self.hand_cluster_radius)?;
        if let HandConfig::Approach(a) = &self.hand {
            positive("hand.speed", a.speed)?;
            non_negative("hand.hold", a.hold)?;
            non_negative("hand.rest", a.rest)?;
            non_negative("hand.jitter", a.jitter)?;
            non_negative("hand.first_start", a.first_start)?;
            if a.start.distance(a.target) == 0.0 {
                return Err(invalid("hand.target", "must differ from hand.start"));
            }
        }
        positive("human.place_interval", self.human.place_interval)?;
        non_negative("human.first_place", self.human.first_place)?;
        if let Some(r) = self.prune_radius {
            positive("prune_radius", r)?;
        }
        let needs = match self.scenario.kind {
            ScenarioKind::Crossing => Some(2..=2),
            ScenarioKind::Hold => Some(1..=2),
            _ => None,
        };
        if let Some(range) = needs {
            if !range.contains(&self.scenario.n_robots) {
                return Err(invalid("scenario.n_robots", format!("{:?} needs {range:?} robots", self.scenario.kind)));
            }
        }
        Ok(())
    }

    /// Replaces the value at a dotted path such as `robot.goal.stiffness`.
    pub fn with_override(&self, path: &str, value: toml::Value) -> Result<Self, ConfigError> {
        let mut doc = toml::Value::try_from(self).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let keys: Vec<&str> = path.split('.').collect();
        let mut cur = &mut doc;
        for (i, k) in keys.iter().enumerate() {
            let table = cur.as_table_mut().ok_or_else(|| invalid(keys[..i].join("."), "not a table"))?;
            if i + 1 == keys.len() {
                table.insert((*k).to_owned(), value.clone());
                break;
            }
            cur = table.entry((*k).to_owned()).or_insert_with(|| toml::Value::Table(Default::default()));
        }
        let c: Self = doc.try_into().map_err(|e: toml::de::Error| invalid(path, e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn hand_profile(&self) -> HandProfile {
        HandProfile { hand_avoidance: self.robot.hand_avoidance, damper: self.features.damper }
    }

    pub fn preset_names() -> &'static [&'static str] {
        &[
            "agnostic", "slow", "medium", "fast", "crossing", "scalability", "profile1", "profile2", "profile3",
            "profile4", "profile1-damper", "mixed",
        ]
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let medium = RobotParams {
            goal: GoalConfig { stiffness: 2000.0, max_force: 20.0, damping: None },
            filter_speed: 0.4,
            robot_avoidance: GaussianConfig::k_fmax(-900.0, -40.0),
            hand_avoidance: GaussianConfig::sigma_fmax(0.18, -60.0),
            damper: DamperConfig::default(),
            avoid_robots: true,
            virtual_mass: 5.0,
            floor_damping: 5.0,
        };
        let task = |robot: RobotParams, kind: ScenarioKind, n: usize, cap: f64| RunConfig {
            name: name.to_owned(),
            seed: 1,
            dt: 0.004,
            duration_cap: cap,
            record_every: 5,
            scenario: ScenarioConfig { kind, n_robots: n, hold_point: default_hold_point() },
            robot,
            robots: Vec::new(),
            table: TableConfig::default(),
            coordination: CoordinationConfig::default(),
            features: Features::default(),
            tolerances: Tolerances::default(),
            hand: HandConfig::None,
            hand_keypoints: 1,
            hand_cluster_radius: 0.02,
            human: HumanConfig::default(),
            prune_radius: None,
        };
        let safety = |sigma: f64, f_max: f64, damper: bool| {
            let robot = RobotParams {
                goal: GoalConfig { stiffness: 1000.0, max_force: 10.0, damping: None },
                robot_avoidance: GaussianConfig::k_fmax(-1000.0, -40.0),
                hand_avoidance: GaussianConfig::sigma_fmax(sigma, f_max),
                ..medium
            };
            let mut c = task(robot, ScenarioKind::Hold, 1, 40.0);
            c.features.damper = damper;
            c.hand = HandConfig::Approach(ApproachConfig {
                start: Vec3::new(0.0, 0.75, 0.15),
                target: Vec3::new(0.0, 0.0, 0.15),
                speed: 0.8,
                first_start: 2.0,
                hold: 4.0,
                rest: 2.0,
                repeats: 4,
                jitter: 0.03,
            });
            c
        };
        Ok(match name {
            "agnostic" => {
                let robot = RobotParams {
                    goal: GoalConfig { stiffness: 1000.0, max_force: 10.0, damping: None },
                    robot_avoidance: GaussianConfig::k_fmax(-1000.0, -40.0),
                    ..medium
                };
                let mut c = task(robot, ScenarioKind::Hold, 2, 300.0);
                c.robots.push(RobotOverride {
                    index: 1,
                    goal: Some(GoalConfig { stiffness: 3000.0, max_force: 20.0, damping: None }),
                    filter_speed: None,
                    robot_avoidance: None,
                    hand_avoidance: None,
                    avoid_robots: Some(false),
                });
                c.features.negotiation = false;
                c
            }
            "slow" => task(
                RobotParams { goal: GoalConfig { stiffness: 2000.0, max_force: 15.0, damping: None }, filter_speed: 0.1, ..medium },
                ScenarioKind::A,
                2,
                400.0,
            ),
            "medium" => task(medium, ScenarioKind::A, 2, 400.0),
            "fast" => task(
                RobotParams { goal: GoalConfig { stiffness: 3000.0, max_force: 30.0, damping: None }, filter_speed: 1.0, ..medium },
                ScenarioKind::A,
                2,
                400.0,
            ),
            "crossing" => task(medium, ScenarioKind::Crossing, 2, 150.0),
            "scalability" => task(medium, ScenarioKind::A, 2, 400.0),
            "profile1" => safety(0.09, -40.0, false),
            "profile2" => safety(0.09, -60.0, false),
            "profile3" => safety(0.18, -40.0, false),
            "profile4" => safety(0.18, -60.0, false),
            "profile1-damper" => safety(0.09, -40.0, true),
            "mixed" => task(medium, ScenarioKind::MixedCheckerboard, 1, 400.0),
            other => return Err(ConfigError::UnknownPreset(other.to_owned())),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for name in RunConfig::preset_names() {
            let c = RunConfig::preset(name).unwrap();
            c.validate().unwrap();
            let back = RunConfig::from_toml(&c.to_toml()).unwrap();
            assert_eq!(back, c, "{name}");
            assert_eq!(back.hash(), c.hash());
        }
    }

    #[test]
    fn gaussian_needs_exactly_two() {
        let mut c = RunConfig::preset("medium").unwrap();
        c.robot.hand_avoidance = GaussianConfig { stiffness: Some(-500.0), sigma: Some(0.1), max_force: Some(-40.0) };
        let e = c.validate().unwrap_err().to_string();
        assert!(e.starts_with("robot.hand_avoidance:"), "{e}");
    }

    #[test]
    fn error_names_field_path() {
        let c = RunConfig::preset("medium").unwrap();
        let e = c.with_override("coordination.stall_dwell", toml::Value::Float(-1.0)).unwrap_err();
        assert!(e.to_string().starts_with("coordination.stall_dwell:"), "{e}");
        let e = c.with_override("robot.goal.stiffness", toml::Value::Float(0.0)).unwrap_err();
        assert!(e.to_string().starts_with("robot.goal"), "{e}");
    }

    #[test]
    fn override_replaces_tables() {
        let c = RunConfig::preset("profile1").unwrap();
        let mut t = toml::map::Map::new();
        t.insert("sigma".into(), toml::Value::Float(0.18));
        t.insert("max_force".into(), toml::Value::Float(-60.0));
        let d = c.with_override("robot.hand_avoidance", toml::Value::Table(t)).unwrap();
        assert_eq!(d.robot.hand_avoidance, RunConfig::preset("profile4").unwrap().robot.hand_avoidance);
        assert_ne!(c.hash(), d.hash());
    }

    #[test]
    fn table_rows_resolve() {
        let slow = RunConfig::preset("slow").unwrap().resolve_robot(0).unwrap();
        assert_eq!((slow.goal.stiffness, slow.goal.max_force, slow.filter_speed), (2000.0, 15.0, 0.1));
        let fast = RunConfig::preset("fast").unwrap().resolve_robot(1).unwrap();
        assert_eq!((fast.goal.stiffness, fast.goal.max_force, fast.filter_speed), (3000.0, 30.0, 1.0));
        assert_eq!(fast.robot_avoidance.stiffness, -900.0);
        let ag = RunConfig::preset("agnostic").unwrap();
        let r2 = ag.resolve_robot(1).unwrap();
        assert_eq!((r2.goal.stiffness, r2.goal.max_force, r2.avoid_robots), (3000.0, 20.0, false));
        let p4 = RunConfig::preset("profile4").unwrap().resolve_robot(0).unwrap();
        assert!((p4.hand_avoidance.stiffness + 549.5).abs() < 0.1);
    }
}
