use serde::{Deserialize, Serialize};

use crate::comms::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RobotKind {
    Aerial,
    Ground,
}

/// Motion command produced by a robot's control phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Motion {
    Hold,
    GoTo(Pose),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotBody {
    pub id: u16,
    pub kind: RobotKind,
    pub pose: Pose,
    pub waypoint: Option<Pose>,
    pub max_speed: f64,
    pub cruise_altitude: f64,
    pub climb_rate: f64,
}

impl RobotBody {
    pub fn new(id: u16, kind: RobotKind, pose: Pose) -> Self {
        let (max_speed, cruise_altitude, climb_rate) = match kind {
            RobotKind::Aerial => (2.0, 10.0, 1.0),
            RobotKind::Ground => (1.0, 0.0, 0.0),
        };
        let pose = match kind {
            RobotKind::Ground => Pose { z: 0.0, ..pose },
            RobotKind::Aerial => pose,
        };
        Self {
            id,
            kind,
            pose,
            waypoint: None,
            max_speed,
            cruise_altitude,
            climb_rate,
        }
    }

    pub fn working_altitude(&self) -> f64 {
        match self.kind {
            RobotKind::Aerial => self.cruise_altitude,
            RobotKind::Ground => 0.0,
        }
    }
}

/// Point-mass motion over one step of `dt` seconds.
///
/// An aerial robot below its waypoint's altitude climbs vertically first;
/// otherwise it moves in the plane at up to `max_speed` while settling
/// vertically at `climb_rate`. Ground robots stay on z = 0. Neither kind
/// overshoots its waypoint.
pub fn kinematics_step(body: &mut RobotBody, command: Motion, dt: f64) {
    debug_assert!(dt > 0.0);
    let wp = match command {
        Motion::Hold => {
            body.waypoint = None;
            return;
        }
        Motion::GoTo(wp) => wp,
    };
    body.waypoint = Some(wp);
    let target_z = match body.kind {
        RobotKind::Ground => 0.0,
        RobotKind::Aerial => wp.z.clamp(0.0, body.cruise_altitude),
    };

    let climb = body.climb_rate * dt;
    if body.kind == RobotKind::Aerial && body.pose.z < target_z {
        body.pose.z = approach(body.pose.z, target_z, climb);
        return;
    }
    if body.kind == RobotKind::Aerial {
        body.pose.z = approach(body.pose.z, target_z, climb);
    } else {
        body.pose.z = 0.0;
    }

    let (dx, dy) = (wp.x - body.pose.x, wp.y - body.pose.y);
    let dist = dx.hypot(dy);
    let reach = body.max_speed * dt;
    if dist <= reach {
        body.pose.x = wp.x;
        body.pose.y = wp.y;
    } else {
        body.pose.x += dx / dist * reach;
        body.pose.y += dy / dist * reach;
    }
}

fn approach(from: f64, to: f64, max_step: f64) -> f64 {
    if (to - from).abs() <= max_step {
        to
    } else {
        from + max_step.copysign(to - from)
    }
}
