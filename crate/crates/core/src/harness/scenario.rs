//! Scenario files (TOML).
//!
//! ```toml
//! seed = 1
//! drop_prob = 0.25
//! shape = "Y"
//!
//! [[robots]]
//! kind = "aerial"
//! count = 5
//!
//! [[robots]]
//! kind = "ground"
//! pose = [0.0, -25.0, 0.0]
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::{AllocConfig, Shape};
use crate::comms::{FrameLayout, Pose};
use crate::simworld::{default_parking, RobotKind, RobotSpec, WorldConfig, WorldError};

pub const DEFAULT_STEP_CAP: u64 = 20_000;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("cannot serialize scenario: {0}")]
    Serialize(#[from] toml::ser::Error),
}

fn invalid(field: &'static str, reason: impl ToString) -> ScenarioError {
    ScenarioError::Invalid {
        field,
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotGroup {
    pub kind: RobotKind,
    #[serde(default = "one")]
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<[f64; 3]>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    pub drop_prob: f64,
    pub shape: Shape,
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    /// Formation size; the robot count when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(default = "default_range")]
    pub comm_range: f64,
    #[serde(default = "default_period")]
    pub step_period: f64,
    #[serde(default)]
    pub start_step: u64,
    #[serde(default = "default_cap")]
    pub step_cap: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub robots: Vec<RobotGroup>,
    #[serde(default)]
    pub alloc: AllocConfig,
}

fn default_spacing() -> f64 {
    5.0
}
fn default_range() -> f64 {
    200.0
}
fn default_period() -> f64 {
    0.1
}
fn default_cap() -> u64 {
    DEFAULT_STEP_CAP
}

impl Scenario {
    /// Plain fleet of `aerial` + `ground` robots with every other field at
    /// its default.
    pub fn fleet(aerial: usize, ground: usize, shape: Shape, drop_prob: f64) -> Self {
        let mut robots = vec![RobotGroup {
            kind: RobotKind::Aerial,
            count: aerial,
            id: None,
            pose: None,
        }];
        if ground > 0 {
            robots.push(RobotGroup {
                kind: RobotKind::Ground,
                count: ground,
                id: None,
                pose: None,
            });
        }
        Self {
            seed: 0,
            drop_prob,
            shape,
            spacing: default_spacing(),
            nodes: None,
            comm_range: default_range(),
            step_period: default_period(),
            start_step: 0,
            step_cap: default_cap(),
            out_dir: None,
            robots,
            alloc: AllocConfig::default(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let de = toml::Deserializer::new(text);
        let scenario: Scenario =
            serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Parse {
                path: match e.path().to_string() {
                    p if p == "." => "scenario".to_owned(),
                    p => p,
                },
                message: e.into_inner().message().trim().to_owned(),
            })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> Result<String, ScenarioError> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(invalid("drop_prob", format!("{} is outside [0, 1]", self.drop_prob)));
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(invalid("spacing", "must be positive"));
        }
        if self.comm_range.is_nan() || self.comm_range <= 0.0 {
            return Err(invalid("comm_range", "must be positive"));
        }
        if !(self.step_period.is_finite() && self.step_period > 0.0) {
            return Err(invalid("step_period", "must be positive"));
        }
        if self.step_cap == 0 {
            return Err(invalid("step_cap", "must be at least 1"));
        }
        for g in &self.robots {
            if g.count == 0 {
                return Err(invalid("robots.count", "must be at least 1"));
            }
            if g.count > 1 && (g.id.is_some() || g.pose.is_some()) {
                return Err(invalid("robots", "id and pose need count = 1"));
            }
        }
        let robots = self.robot_count();
        if robots == 0 {
            return Err(invalid("robots", "at least one robot is required"));
        }
        if let Some(n) = self.nodes {
            if n == 0 || n > robots {
                return Err(invalid("nodes", format!("must be in 1..={robots}")));
            }
        }
        if let Some(t) = self.alloc.barrier_threshold {
            if t >= robots {
                return Err(invalid("alloc.barrier_threshold", format!("must be below {robots}")));
            }
        }
        if self.alloc.ask_timeout == 0 || self.alloc.grant_timeout == 0 {
            return Err(invalid("alloc", "timeouts must be at least 1 step"));
        }
        if self.alloc.arrival_tolerance.is_nan() || self.alloc.arrival_tolerance <= 0.0 {
            return Err(invalid("alloc.arrival_tolerance", "must be positive"));
        }
        self.world_config(self.seed)
            .validate()
            .map_err(|e| match e {
                WorldError::DuplicateId(_) => invalid("robots.id", e),
                WorldError::Pose(_) => invalid("robots.pose", e),
                other => invalid("scenario", other),
            })
    }

    pub fn robot_count(&self) -> usize {
        self.robots.iter().map(|g| g.count).sum()
    }

    /// Expand robot groups: explicit ids are kept, the rest are numbered
    /// upward from 1 skipping taken ids.
    pub fn robot_specs(&self) -> Vec<RobotSpec> {
        let taken: std::collections::BTreeSet<u16> =
            self.robots.iter().filter_map(|g| g.id).collect();
        let mut next = 1u16;
        let mut out = Vec::new();
        for g in &self.robots {
            for _ in 0..g.count {
                let id = g.id.unwrap_or_else(|| {
                    while taken.contains(&next) {
                        next += 1;
                    }
                    next += 1;
                    next - 1
                });
                let pose = g
                    .pose
                    .map_or_else(|| default_parking(out.len()), |[x, y, z]| Pose::new(x, y, z));
                out.push(RobotSpec {
                    id,
                    kind: g.kind,
                    pose,
                });
            }
        }
        out
    }

    pub fn world_config(&self, seed: u64) -> WorldConfig {
        WorldConfig {
            robots: self.robot_specs(),
            drop_prob: self.drop_prob,
            comm_range: self.comm_range,
            step_period: self.step_period,
            seed,
            shape: self.shape,
            spacing: self.spacing,
            nodes: self.nodes,
            start_step: self.start_step,
            alloc: self.alloc.clone(),
            layout: FrameLayout::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
drop_prob = 0.0
shape = "Y"

[[robots]]
kind = "aerial"
count = 6
"#;

    #[test]
    fn minimal_gets_defaults() {
        let s = Scenario::parse(MINIMAL).unwrap();
        assert_eq!(s.step_period, 0.1);
        assert_eq!(s.comm_range, 200.0);
        assert_eq!(s.step_cap, 20_000);
        assert_eq!(s.alloc, AllocConfig::default());
        assert_eq!(s.robot_count(), 6);
        let ids: Vec<u16> = s.robot_specs().iter().map(|r| r.id).collect();
        assert_eq!(ids, [1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn out_of_range_drop_names_field() {
        let err = Scenario::parse(&MINIMAL.replace("0.0", "1.5")).unwrap_err();
        assert!(matches!(err, ScenarioError::Invalid { field: "drop_prob", .. }), "{err}");
        assert!(err.to_string().contains("drop_prob"));
    }

    #[test]
    fn unknown_and_mistyped_fields_report_path() {
        let err = Scenario::parse(&format!("{MINIMAL}\n[alloc]\nsettle = 3\n")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("alloc") && msg.contains("settle"), "{msg}");

        let err = Scenario::parse(&MINIMAL.replace("count = 6", "count = \"six\"")).unwrap_err();
        assert!(err.to_string().starts_with("robots[0].count"), "{err}");

        let err = Scenario::parse("shape = \"Y\"\nrobots = []\n").unwrap_err();
        assert!(err.to_string().contains("drop_prob"), "{err}");
    }

    #[test]
    fn round_trip_is_stable() {
        let s = Scenario::parse(MINIMAL).unwrap();
        let again = Scenario::parse(&s.to_toml().unwrap()).unwrap();
        assert_eq!(s, again);

        let mut mixed = Scenario::fleet(5, 1, Shape::L, 0.5);
        mixed.robots[1].pose = Some([1.0, 2.0, 0.0]);
        mixed.nodes = Some(4);
        let again = Scenario::parse(&mixed.to_toml().unwrap()).unwrap();
        assert_eq!(mixed, again);
    }

    #[test]
    fn explicit_ids_are_skipped() {
        let text = r#"
drop_prob = 0.0
shape = "L"
[[robots]]
kind = "aerial"
count = 2
[[robots]]
kind = "ground"
id = 1
"#;
        let s = Scenario::parse(text).unwrap();
        let ids: Vec<u16> = s.robot_specs().iter().map(|r| r.id).collect();
        assert_eq!(ids, [2, 3, 1]);
        let dup = text.replace("count = 2", "id = 1");
        assert!(matches!(
            Scenario::parse(&dup),
            Err(ScenarioError::Invalid { field: "robots.id", .. })
        ));
    }

    #[test]
    fn bad_nodes_rejected() {
        let text = format!("nodes = 9\n{MINIMAL}");
        assert!(matches!(
            Scenario::parse(&text),
            Err(ScenarioError::Invalid { field: "nodes", .. })
        ));
    }
}
