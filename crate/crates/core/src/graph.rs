//! Conversation trees and evidence stars.
//!
//! Node 0 is always the claim. Conversation nodes follow in `(timestamp, id)`
//! order; evidence nodes follow in record order. Edges are stored as
//! `(parent, child)` pairs but treated as undirected for aggregation.

use std::collections::{HashMap, VecDeque};

use crate::corpus::{Event, Post};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphKind {
    Conversation,
    Evidence,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    pub kind: GraphKind,
    pub n_nodes: usize,
    pub edges: Vec<(usize, usize)>,
}

impl Topology {
    /// Sorted neighbor lists, both edge directions.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// `n - 1` edges and every node reachable from node 0.
    pub fn is_tree(&self) -> bool {
        if self.n_nodes == 0 || self.edges.len() != self.n_nodes - 1 {
            return false;
        }
        let adj = self.neighbors();
        let mut seen = vec![false; self.n_nodes];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    reached += 1;
                    queue.push_back(u);
                }
            }
        }
        reached == self.n_nodes
    }

    /// Every edge is `(0, j)` with distinct `j >= 1`, and there are `n - 1`.
    pub fn is_star(&self) -> bool {
        if self.n_nodes == 0 || self.edges.len() != self.n_nodes - 1 {
            return false;
        }
        let mut leaves: Vec<usize> = self
            .edges
            .iter()
            .filter(|(a, b)| *a == 0 && *b >= 1)
            .map(|(_, b)| *b)
            .collect();
        leaves.sort_unstable();
        leaves.dedup();
        leaves.len() == self.n_nodes - 1 && leaves.last().is_none_or(|&m| m < self.n_nodes)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphObject {
    pub topology: Topology,
    /// One row per node.
    pub node_features: Tensor,
}

/// Tree over the claim and the given replies (already in node order).
/// Replies whose parent is not among the nodes attach to the root.
pub fn conversation_topology(source: &Post, replies: &[&Post]) -> Result<Topology> {
    let mut index: HashMap<&str, usize> = HashMap::with_capacity(replies.len() + 1);
    index.insert(source.id.as_str(), 0);
    for (j, p) in replies.iter().enumerate() {
        index.insert(p.id.as_str(), j + 1);
    }
    let parent_of = |j: usize| -> usize {
        replies[j]
            .parent_id
            .as_deref()
            .and_then(|pid| index.get(pid).copied())
            .unwrap_or(0)
    };

    // Every chain must reach node 0.
    for start in 1..=replies.len() {
        let mut path = Vec::new();
        let mut cur = start;
        while cur != 0 {
            if let Some(pos) = path.iter().position(|&p| p == cur) {
                let cycle = path[pos..].iter().map(|&p: &usize| replies[p - 1].id.clone());
                return Err(Error::ReplyCycle(cycle.collect()));
            }
            path.push(cur);
            cur = parent_of(cur - 1);
        }
    }

    let edges = (0..replies.len()).map(|j| (parent_of(j), j + 1)).collect();
    Ok(Topology {
        kind: GraphKind::Conversation,
        n_nodes: replies.len() + 1,
        edges,
    })
}

/// Star with `k` leaves around the claim.
pub fn evidence_topology(k: usize) -> Topology {
    Topology {
        kind: GraphKind::Evidence,
        n_nodes: k + 1,
        edges: (1..=k).map(|j| (0, j)).collect(),
    }
}

fn check_rows(topology: &Topology, features: &Tensor) -> Result<()> {
    if features.rows() != topology.n_nodes {
        return Err(Error::ShapeMismatch {
            op: "graph features",
            left: vec![topology.n_nodes],
            right: features.shape().to_vec(),
        });
    }
    Ok(())
}

/// `features` rows: source first, then replies by `(timestamp, id)`.
pub fn build_conversation_graph(event: &Event, features: Tensor) -> Result<GraphObject> {
    let replies = event.sorted_replies();
    let topology = conversation_topology(&event.source, &replies)?;
    check_rows(&topology, &features)?;
    Ok(GraphObject {
        topology,
        node_features: features,
    })
}

/// `features` rows: source first, then each evidence sentence in order.
pub fn build_evidence_graph(features: Tensor) -> Result<GraphObject> {
    let k = features.rows().saturating_sub(1);
    let topology = evidence_topology(k);
    check_rows(&topology, &features)?;
    Ok(GraphObject {
        topology,
        node_features: features,
    })
}

/// Initial hidden states: a copy of the node features.
pub fn init_hidden(graph: &GraphObject) -> Tensor {
    graph.node_features.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::RumorLabel;

    fn post(id: &str, t: i64, parent: Option<&str>) -> Post {
        Post {
            id: id.into(),
            text: id.into(),
            timestamp: t,
            parent_id: parent.map(str::to_string),
        }
    }

    fn event(replies: Vec<Post>) -> Event {
        Event {
            event_id: "e".into(),
            source: post("c", 0, None),
            replies,
            label: RumorLabel::Rumor,
            evidence: None,
        }
    }

    #[test]
    fn source_only() {
        let g = build_conversation_graph(&event(vec![]), Tensor::zeros(&[1, 4])).unwrap();
        assert_eq!(g.topology.n_nodes, 1);
        assert!(g.topology.edges.is_empty());
        assert!(g.topology.is_tree());
    }

    #[test]
    fn chain() {
        let e = event(vec![post("p2", 2, Some("p1")), post("p1", 1, Some("c"))]);
        let g = build_conversation_graph(&e, Tensor::zeros(&[3, 2])).unwrap();
        assert_eq!(g.topology.edges, vec![(0, 1), (1, 2)]);
        assert!(g.topology.is_tree());
    }

    #[test]
    fn orphan_attaches_to_root() {
        let e = event(vec![
            post("p1", 1, Some("c")),
            post("p2", 2, Some("p1")),
            post("p3", 3, Some("missing")),
        ]);
        let g = build_conversation_graph(&e, Tensor::zeros(&[4, 2])).unwrap();
        assert!(g.topology.edges.contains(&(0, 3)));
        assert!(g.topology.is_tree());
    }

    #[test]
    fn cycle_is_reported() {
        let e = event(vec![post("a", 1, Some("b")), post("b", 2, Some("a"))]);
        let err = build_conversation_graph(&e, Tensor::zeros(&[3, 2])).unwrap_err();
        match err {
            Error::ReplyCycle(ids) => assert!(ids.contains(&"a".to_string())),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn evidence_stars() {
        let g = build_evidence_graph(Tensor::zeros(&[1, 2])).unwrap();
        assert_eq!(g.topology.n_nodes, 1);
        assert!(g.topology.edges.is_empty());

        let g = build_evidence_graph(Tensor::zeros(&[4, 2])).unwrap();
        assert_eq!(g.topology.edges, vec![(0, 1), (0, 2), (0, 3)]);
        assert!(g.topology.is_star());

        let g = build_evidence_graph(Tensor::zeros(&[6, 2])).unwrap();
        assert_eq!(g.topology.n_nodes, 6);
        assert!(g.topology.is_star());
    }

    #[test]
    fn init_hidden_copies() {
        let feats = Tensor::matrix(1, 2, vec![0.5, -1.0]).unwrap();
        let g = build_evidence_graph(feats.clone()).unwrap();
        let mut h = init_hidden(&g);
        assert_eq!(h, g.node_features);
        assert_eq!(h.shape(), &[1, 2]);
        h.data_mut()[0] = 9.0;
        assert_eq!(g.node_features, feats);
    }

    #[test]
    fn tree_and_star_checks_reject_bad_shapes() {
        let not_tree = Topology {
            kind: GraphKind::Conversation,
            n_nodes: 4,
            edges: vec![(0, 1), (1, 0), (2, 3)],
        };
        assert!(!not_tree.is_tree());
        let not_star = Topology {
            kind: GraphKind::Evidence,
            n_nodes: 3,
            edges: vec![(0, 1), (1, 2)],
        };
        assert!(!not_star.is_star());
    }
}
