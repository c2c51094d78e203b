//! Distributed non-overlapping clique cover over a geometric communication graph.
//!
//! Nodes run three lockstep communication rounds and one local computation:
//!
//! 1. broadcast a beacon; whoever hears it within range records a neighbor;
//! 2. send the closed neighborhood `N⁺` to every neighbor;
//! 3. compute candidate cliques from the received sets, pick one, and send it
//!    to every neighbor.
//!
//! A node keeps its chosen clique only when every member chose the same set
//! and every member's `N⁺` contains it; otherwise it falls back to a
//! singleton. Every member evaluates the same condition on the same data, so
//! the result is a partition whose blocks are cliques.
//!
//! Nodes only see their own inbox. The [`Medium`] is the only place that
//! knows positions of other nodes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reliability::RobotId;
use crate::world::Point;

pub type IdSet = BTreeSet<RobotId>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliqueError {
    #[error("communication range must be positive and finite, got {0}")]
    InvalidRange(f64),
    #[error("duplicate node id {0}")]
    DuplicateId(RobotId),
    #[error("{ids} ids but {positions} positions")]
    SizeMismatch { ids: usize, positions: usize },
    #[error("node {id} has degree {degree}, above the cap of {cap}")]
    DegreeTooHigh {
        id: RobotId,
        degree: usize,
        cap: usize,
    },
}

/// Node positions plus the unit-disk adjacency they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    ids: Vec<RobotId>,
    positions: Vec<Point>,
    range: f64,
    adjacency: Vec<Vec<usize>>,
}

impl CommGraph {
    pub fn new(ids: Vec<RobotId>, positions: Vec<Point>, range: f64) -> Result<Self, CliqueError> {
        if !(range > 0.0 && range.is_finite()) {
            return Err(CliqueError::InvalidRange(range));
        }
        if ids.len() != positions.len() {
            return Err(CliqueError::SizeMismatch {
                ids: ids.len(),
                positions: positions.len(),
            });
        }
        let mut seen = BTreeSet::new();
        for id in &ids {
            if !seen.insert(*id) {
                return Err(CliqueError::DuplicateId(*id));
            }
        }
        let n = ids.len();
        let adjacency = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i && positions[i].distance(positions[j]) <= range)
                    .collect()
            })
            .collect();
        Ok(Self {
            ids,
            positions,
            range,
            adjacency,
        })
    }

    /// Nodes numbered `1..=n` in input order.
    pub fn from_positions(positions: Vec<Point>, range: f64) -> Result<Self, CliqueError> {
        let ids = (1..=positions.len() as u32).map(RobotId).collect();
        Self::new(ids, positions, range)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[RobotId] {
        &self.ids
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn are_adjacent(&self, a: RobotId, b: RobotId) -> bool {
        match (self.index_of(a), self.index_of(b)) {
            (Some(i), Some(j)) => self.adjacency[i].contains(&j),
            _ => false,
        }
    }

    pub fn neighbors(&self, id: RobotId) -> Vec<RobotId> {
        self.index_of(id)
            .map(|i| self.adjacency[i].iter().map(|&j| self.ids[j]).collect())
            .unwrap_or_default()
    }

    pub fn index_of(&self, id: RobotId) -> Option<usize> {
        self.ids.iter().position(|x| *x == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CliqueCoverOptions {
    /// Largest neighbor count a node will process.
    pub max_degree: usize,
}

impl Default for CliqueCoverOptions {
    fn default() -> Self {
        Self { max_degree: 20 }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Payload {
    Beacon,
    ClosedNeighborhood(IdSet),
    Choice(IdSet),
}

#[derive(Debug, Clone, PartialEq)]
struct Message {
    from: RobotId,
    payload: Payload,
}

/// Local state of one node. It is built solely from its inbox.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub id: RobotId,
    pub neighbors: IdSet,
    pub closed: IdSet,
    /// `N⁺` of itself and of every neighbor, keyed by owner.
    pub received: BTreeMap<RobotId, IdSet>,
    pub candidates: Vec<IdSet>,
    pub unique: IdSet,
    pub reported: BTreeMap<RobotId, IdSet>,
}

impl NodeState {
    fn new(id: RobotId) -> Self {
        Self {
            id,
            neighbors: IdSet::new(),
            closed: IdSet::from([id]),
            received: BTreeMap::new(),
            candidates: Vec::new(),
            unique: IdSet::from([id]),
            reported: BTreeMap::new(),
        }
    }

    fn receive(&mut self, msg: Message) {
        match msg.payload {
            Payload::Beacon => {
                self.neighbors.insert(msg.from);
                self.closed.insert(msg.from);
            }
            Payload::ClosedNeighborhood(set) => {
                self.received.insert(msg.from, set);
            }
            Payload::Choice(set) => {
                self.reported.insert(msg.from, set);
            }
        }
    }

    /// Whether this node's chosen clique survives the consistency check.
    fn keeps(&self) -> bool {
        let c = &self.unique;
        c.iter().all(|m| {
            let choice = if *m == self.id {
                Some(&self.unique)
            } else {
                self.reported.get(m)
            };
            choice == Some(c) && self.received.get(m).is_some_and(|n| c.is_subset(n))
        })
    }
}

/// Delivers messages; the only component that consults positions.
struct Medium<'a> {
    graph: &'a CommGraph,
    delivered: usize,
}

impl Medium<'_> {
    fn broadcast(&mut self, from: usize, payload: Payload, nodes: &mut [NodeState]) {
        let sender = self.graph.ids[from];
        for &to in &self.graph.adjacency[from] {
            nodes[to].receive(Message {
                from: sender,
                payload: payload.clone(),
            });
            self.delivered += 1;
        }
    }

    /// Sends to explicit recipients; a node may only address ids it has heard from.
    fn send_to_neighbors(&mut self, from: usize, payload: Payload, nodes: &mut [NodeState]) {
        let sender = nodes[from].id;
        let targets: Vec<usize> = nodes[from]
            .neighbors
            .iter()
            .map(|id| self.graph.index_of(*id).expect("known id"))
            .collect();
        for to in targets {
            nodes[to].receive(Message {
                from: sender,
                payload: payload.clone(),
            });
            self.delivered += 1;
        }
    }
}

/// Candidate cliques from the received neighborhoods: for the largest `m`
/// with a hit, every `m`-subset of the sets whose intersection has exactly
/// `m` members.
pub fn compute_maximal_cliques(own: RobotId, superset: &BTreeMap<RobotId, IdSet>) -> Vec<IdSet> {
    let sets: Vec<&IdSet> = superset.values().collect();
    for m in (2..=sets.len()).rev() {
        let mut found = BTreeSet::new();
        let mut chosen = 0;
        intersect_dfs(&sets, 0, m, &mut chosen, None, &mut found);
        if !found.is_empty() {
            return found.into_iter().collect();
        }
    }
    vec![IdSet::from([own])]
}

fn intersect_dfs(
    sets: &[&IdSet],
    start: usize,
    m: usize,
    chosen: &mut usize,
    acc: Option<&IdSet>,
    found: &mut BTreeSet<IdSet>,
) {
    if *chosen == m {
        if let Some(a) = acc {
            if a.len() == m {
                found.insert(a.clone());
            }
        }
        return;
    }
    for k in start..sets.len() {
        if sets.len() - k < m - *chosen {
            break;
        }
        let next: IdSet = match acc {
            None => sets[k].clone(),
            Some(a) => a.intersection(sets[k]).copied().collect(),
        };
        if next.len() < m {
            continue;
        }
        *chosen += 1;
        intersect_dfs(sets, k + 1, m, chosen, Some(&next), found);
        *chosen -= 1;
    }
}

/// Picks the candidate whose members have the fewest outside neighbors,
/// counting only neighborhoods the node has received. Ties go to the
/// lexicographically smallest member list.
pub fn choose_unique_clique(candidates: &[IdSet], known: &BTreeMap<RobotId, IdSet>) -> IdSet {
    assert!(!candidates.is_empty(), "at least one candidate");
    if candidates.len() == 1 {
        return candidates[0].clone();
    }
    let outside = |c: &IdSet| -> usize {
        let mut union = IdSet::new();
        for m in c {
            if let Some(n) = known.get(m) {
                union.extend(n.iter().filter(|x| !c.contains(x)));
            }
        }
        union.len()
    };
    candidates
        .iter()
        .min_by(|a, b| {
            outside(a)
                .cmp(&outside(b))
                .then_with(|| a.iter().cmp(b.iter()))
        })
        .cloned()
        .expect("non-empty")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MessageCounts {
    pub beacons: usize,
    pub neighborhoods: usize,
    pub choices: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliqueCoverReport {
    /// Blocks sorted internally and by first member.
    pub cover: Vec<Vec<RobotId>>,
    pub nodes: Vec<NodeState>,
    pub messages: MessageCounts,
}

impl CliqueCoverReport {
    pub fn block_of(&self, id: RobotId) -> Option<&[RobotId]> {
        self.cover
            .iter()
            .find(|b| b.contains(&id))
            .map(Vec::as_slice)
    }
}

pub fn distributed_clique_cover(
    graph: &CommGraph,
    options: &CliqueCoverOptions,
) -> Result<CliqueCoverReport, CliqueError> {
    let n = graph.len();
    let mut nodes: Vec<NodeState> = graph.ids.iter().map(|&id| NodeState::new(id)).collect();
    let mut medium = Medium {
        graph,
        delivered: 0,
    };
    let mut counts = MessageCounts::default();

    for i in 0..n {
        medium.broadcast(i, Payload::Beacon, &mut nodes);
    }
    counts.beacons = std::mem::take(&mut medium.delivered);
    for node in &nodes {
        if node.neighbors.len() > options.max_degree {
            return Err(CliqueError::DegreeTooHigh {
                id: node.id,
                degree: node.neighbors.len(),
                cap: options.max_degree,
            });
        }
    }

    for node in nodes.iter_mut() {
        node.received.insert(node.id, node.closed.clone());
    }
    for i in 0..n {
        let set = nodes[i].closed.clone();
        medium.send_to_neighbors(i, Payload::ClosedNeighborhood(set), &mut nodes);
    }
    counts.neighborhoods = std::mem::take(&mut medium.delivered);

    for node in nodes.iter_mut() {
        node.candidates = compute_maximal_cliques(node.id, &node.received);
        let known: BTreeMap<RobotId, IdSet> = node
            .received
            .iter()
            .map(|(k, v)| (*k, v.iter().filter(|x| *x != k).copied().collect()))
            .collect();
        node.unique = choose_unique_clique(&node.candidates, &known);
    }

    for i in 0..n {
        let set = nodes[i].unique.clone();
        medium.send_to_neighbors(i, Payload::Choice(set), &mut nodes);
    }
    counts.choices = medium.delivered;

    let mut blocks: BTreeSet<Vec<RobotId>> = BTreeSet::new();
    for node in &nodes {
        if node.keeps() {
            blocks.insert(node.unique.iter().copied().collect());
        } else {
            blocks.insert(vec![node.id]);
        }
    }
    let mut cover: Vec<Vec<RobotId>> = blocks.into_iter().collect();
    cover.sort();
    Ok(CliqueCoverReport {
        cover,
        nodes,
        messages: counts,
    })
}

/// Checks that `cover` partitions the graph's nodes into cliques.
pub fn validate_cover(graph: &CommGraph, cover: &[Vec<RobotId>]) -> Result<(), String> {
    let mut seen = BTreeSet::new();
    for block in cover {
        for (k, a) in block.iter().enumerate() {
            if !seen.insert(*a) {
                return Err(format!("node {a} appears twice"));
            }
            if graph.index_of(*a).is_none() {
                return Err(format!("unknown node {a}"));
            }
            for b in &block[k + 1..] {
                if !graph.are_adjacent(*a, *b) {
                    return Err(format!("{a} and {b} share a block but are not adjacent"));
                }
            }
        }
    }
    if seen.len() != graph.len() {
        return Err(format!("{} of {} nodes covered", seen.len(), graph.len()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[u32]) -> IdSet {
        ids.iter().map(|&i| RobotId(i)).collect()
    }

    fn line(xs: &[f64]) -> CommGraph {
        CommGraph::from_positions(xs.iter().map(|&x| Point::new(x, 0.0)).collect(), 1.0).unwrap()
    }

    #[test]
    fn isolated_node_is_a_singleton() {
        let g = line(&[0.0]);
        let r = distributed_clique_cover(&g, &CliqueCoverOptions::default()).unwrap();
        assert_eq!(r.cover, vec![vec![RobotId(1)]]);
        assert_eq!(r.nodes[0].closed, set(&[1]));
        assert_eq!(r.nodes[0].received.len(), 1);
        assert_eq!(r.messages, MessageCounts::default());
    }

    #[test]
    fn triangle_and_complete_graphs() {
        let g = CommGraph::from_positions(
            vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(0.5, 0.8),
            ],
            1.5,
        )
        .unwrap();
        let r = distributed_clique_cover(&g, &CliqueCoverOptions::default()).unwrap();
        assert!(r.nodes.iter().all(|n| n.closed == set(&[1, 2, 3])));
        assert_eq!(r.nodes[0].candidates, vec![set(&[1, 2, 3])]);
        assert_eq!(r.cover, vec![vec![RobotId(1), RobotId(2), RobotId(3)]]);

        let square = CommGraph::from_positions(
            vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(0.0, 1.0),
                Point::new(1.0, 1.0),
            ],
            2.0,
        )
        .unwrap();
        let r = distributed_clique_cover(&square, &CliqueCoverOptions::default()).unwrap();
        assert_eq!(r.cover.len(), 1);
        assert_eq!(r.cover[0].len(), 4);
    }

    #[test]
    fn path_middle_node() {
        let g = line(&[0.0, 1.0, 2.0]);
        let r = distributed_clique_cover(&g, &CliqueCoverOptions::default()).unwrap();
        assert_eq!(r.nodes[1].received.len(), 3);
        assert_eq!(r.nodes[1].candidates, vec![set(&[1, 2]), set(&[2, 3])]);
        assert_eq!(r.messages.neighborhoods, 2 * g.edge_count());
        assert_eq!(r.messages.choices, 2 * g.edge_count());
        validate_cover(&g, &r.cover).unwrap();
    }

    #[test]
    fn fewest_neighbors_then_lexicographic() {
        let mut known = BTreeMap::new();
        known.insert(RobotId(1), set(&[2, 3, 9]));
        known.insert(RobotId(2), set(&[1, 3]));
        known.insert(RobotId(3), set(&[1, 2, 4, 5, 6]));
        let a = set(&[1, 2]);
        let b = set(&[2, 3]);
        // {1,2} sees {3,9}; {2,3} sees {1,4,5,6}
        assert_eq!(choose_unique_clique(&[b.clone(), a.clone()], &known), a);
        let mut flat = BTreeMap::new();
        flat.insert(RobotId(1), set(&[2]));
        flat.insert(RobotId(2), set(&[1, 3]));
        flat.insert(RobotId(3), set(&[2]));
        assert_eq!(choose_unique_clique(&[b.clone(), a.clone()], &flat), a);
        assert_eq!(choose_unique_clique(std::slice::from_ref(&b), &flat), b);
    }

    #[test]
    fn degree_cap() {
        let g = CommGraph::from_positions(
            (0..5).map(|i| Point::new(i as f64 * 0.1, 0.0)).collect(),
            1.0,
        )
        .unwrap();
        let err = distributed_clique_cover(&g, &CliqueCoverOptions { max_degree: 3 }).unwrap_err();
        assert!(matches!(
            err,
            CliqueError::DegreeTooHigh {
                degree: 4,
                cap: 3,
                ..
            }
        ));
    }

    #[test]
    fn graph_construction_errors() {
        assert!(CommGraph::from_positions(vec![], 0.0).is_err());
        assert!(CommGraph::new(
            vec![RobotId(1), RobotId(1)],
            vec![Point::new(0.0, 0.0); 2],
            1.0
        )
        .is_err());
        assert!(CommGraph::new(vec![RobotId(1)], vec![], 1.0).is_err());
    }

    #[test]
    fn validator_rejects_bad_covers() {
        let g = line(&[0.0, 1.0, 5.0]);
        assert!(validate_cover(&g, &[vec![RobotId(1), RobotId(2)], vec![RobotId(3)]]).is_ok());
        assert!(validate_cover(&g, &[vec![RobotId(1), RobotId(3)], vec![RobotId(2)]]).is_err());
        assert!(validate_cover(&g, &[vec![RobotId(1)], vec![RobotId(2)]]).is_err());
        assert!(validate_cover(
            &g,
            &[vec![RobotId(1), RobotId(2)], vec![RobotId(2), RobotId(3)]]
        )
        .is_err());
    }
}
