//! Formation graphs: label -> offset from the root plus predecessor labels.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comms::Pose;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("a formation needs at least one node")]
    Empty,
    #[error("spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("label 0 must exist and have no predecessors")]
    BadRoot,
    #[error("label {0} must have one or two predecessors")]
    PredecessorCount(u16),
    #[error("label {label} refers to unknown predecessor {missing}")]
    UnknownPredecessor { label: u16, missing: u16 },
    #[error("labels {0:?} are not reachable from the root (cycle or orphan)")]
    Unreachable(Vec<u16>),
    #[error("unknown formation shape {0:?} (expected L or Y)")]
    UnknownShape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    L,
    Y,
}

impl Shape {
    /// Unit direction of each branch, counter-clockwise from +x.
    fn branches(self) -> &'static [(f64, f64)] {
        const HALF_SQRT3: f64 = 0.866_025_403_784_438_6;
        match self {
            Shape::L => &[(1.0, 0.0), (0.0, 1.0)],
            // 90, 210 and 330 degrees
            Shape::Y => &[(0.0, 1.0), (-HALF_SQRT3, -0.5), (HALF_SQRT3, -0.5)],
        }
    }
}

impl FromStr for Shape {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "L" | "l" => Ok(Shape::L),
            "Y" | "y" => Ok(Shape::Y),
            other => Err(GraphError::UnknownShape(other.to_owned())),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::L => "L",
            Shape::Y => "Y",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub offset: Pose,
    pub predecessors: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationGraph {
    nodes: BTreeMap<u16, GraphNode>,
}

impl FormationGraph {
    pub fn new(nodes: BTreeMap<u16, GraphNode>) -> Result<Self, GraphError> {
        let root = nodes.get(&0).ok_or(GraphError::BadRoot)?;
        if !root.predecessors.is_empty() {
            return Err(GraphError::BadRoot);
        }
        for (&label, node) in nodes.iter().filter(|(l, _)| **l != 0) {
            if !(1..=2).contains(&node.predecessors.len()) {
                return Err(GraphError::PredecessorCount(label));
            }
            if let Some(&missing) = node.predecessors.iter().find(|p| !nodes.contains_key(p)) {
                return Err(GraphError::UnknownPredecessor { label, missing });
            }
        }
        // Kahn's algorithm from the root: anything left over sits on a
        // cycle or hangs off one.
        let mut indegree: BTreeMap<u16, usize> =
            nodes.iter().map(|(l, n)| (*l, n.predecessors.len())).collect();
        let mut ready: VecDeque<u16> = VecDeque::from([0]);
        let mut seen = BTreeSet::new();
        while let Some(label) = ready.pop_front() {
            seen.insert(label);
            for (&child, node) in &nodes {
                let hits = node.predecessors.iter().filter(|p| **p == label).count();
                if hits == 0 {
                    continue;
                }
                let d = indegree.get_mut(&child).expect("child exists");
                *d -= hits;
                if *d == 0 {
                    ready.push_back(child);
                }
            }
        }
        let unreachable: Vec<u16> = nodes.keys().filter(|l| !seen.contains(l)).copied().collect();
        if !unreachable.is_empty() {
            return Err(GraphError::Unreachable(unreachable));
        }
        Ok(Self { nodes })
    }

    /// Root plus branches filled round-robin, `spacing` meters apart.
    pub fn generate(shape: Shape, n: usize, spacing: f64) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(GraphError::BadSpacing(spacing));
        }
        let dirs = shape.branches();
        let mut nodes = BTreeMap::from([(
            0,
            GraphNode {
                offset: Pose::default(),
                predecessors: vec![],
            },
        )]);
        for i in 1..n {
            let branch = (i - 1) % dirs.len();
            let depth = (i - 1) / dirs.len() + 1;
            let (dx, dy) = dirs[branch];
            let reach = depth as f64 * spacing;
            let pred = if depth == 1 { 0 } else { i - dirs.len() };
            nodes.insert(
                i as u16,
                GraphNode {
                    offset: Pose::new(dx * reach, dy * reach, 0.0),
                    predecessors: vec![pred as u16],
                },
            );
        }
        Self::new(nodes)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, label: u16) -> Option<&GraphNode> {
        self.nodes.get(&label)
    }

    pub fn labels(&self) -> impl Iterator<Item = u16> + '_ {
        self.nodes.keys().copied()
    }

    pub fn nodes(&self) -> &BTreeMap<u16, GraphNode> {
        &self.nodes
    }

    /// Labels whose grant is handled by the holder of `label`: the node's
    /// first predecessor is its parent.
    pub fn owned_successors(&self, label: u16) -> Vec<u16> {
        self.nodes
            .iter()
            .filter(|(_, n)| n.predecessors.first() == Some(&label))
            .map(|(l, _)| *l)
            .collect()
    }
}
