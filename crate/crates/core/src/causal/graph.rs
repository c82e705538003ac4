use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::FeatureSchema;
use crate::error::{Error, Result};

/// Directed graph over feature names; edges are `(parent, child)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CausalGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
}

impl CausalGraph {
    pub fn new(nodes: Vec<String>, edges: Vec<(String, String)>) -> Result<Self> {
        let g = Self { nodes, edges };
        g.check_structure()?;
        Ok(g)
    }

    /// `a1 -> a3`, `a2 -> a3`.
    pub fn simple_bn() -> Self {
        let s = |v: &str| v.to_string();
        Self {
            nodes: vec![s("a1"), s("a2"), s("a3")],
            edges: vec![(s("a1"), s("a3")), (s("a2"), s("a3"))],
        }
    }

    fn check_structure(&self) -> Result<()> {
        for (i, n) in self.nodes.iter().enumerate() {
            if self.nodes[..i].contains(n) {
                return Err(Error::Schema(format!("graph node `{n}` listed twice")));
            }
        }
        for (p, c) in &self.edges {
            for end in [p, c] {
                if !self.nodes.contains(end) {
                    return Err(Error::Schema(format!("edge endpoint `{end}` is not a graph node")));
                }
            }
        }
        Ok(())
    }

    /// Every node must name a schema feature.
    pub fn check_against(&self, schema: &FeatureSchema) -> Result<()> {
        self.check_structure()?;
        for n in &self.nodes {
            if schema.index_of(n).is_none() {
                return Err(Error::Schema(format!("graph node `{n}` is not a schema feature")));
            }
        }
        Ok(())
    }

    /// Parents of `node` in edge-list order, without duplicates.
    pub fn parents(&self, node: &str) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for (p, c) in &self.edges {
            if c == node && !out.contains(p) {
                out.push(p.clone());
            }
        }
        out
    }

    /// Nodes with at least one parent, in node-list order.
    pub fn endogenous(&self) -> Vec<String> {
        self.nodes
            .iter()
            .filter(|n| self.edges.iter().any(|(_, c)| c == *n))
            .cloned()
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let g: Self = serde_json::from_str(text)?;
        g.check_structure()?;
        Ok(g)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }
}

/// Topological order (parents before children). Ties are broken by node-list
/// position, so the order is deterministic.
pub fn validate_dag(graph: &CausalGraph) -> Result<Vec<String>> {
    graph.check_structure()?;
    let n = graph.nodes.len();
    let index = |name: &str| graph.nodes.iter().position(|m| m == name).expect("checked endpoint");
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut indegree = vec![0usize; n];
    for (p, c) in &graph.edges {
        let (p, c) = (index(p), index(c));
        if !children[p].contains(&c) {
            children[p].push(c);
            indegree[c] += 1;
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> = (0..n).filter(|&i| indegree[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = ready.pop() {
        order.push(i);
        for &c in &children[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(Reverse(c));
            }
        }
    }
    if order.len() < n {
        let cycle = find_cycle(&children, &indegree);
        return Err(Error::Cycle(cycle.into_iter().map(|i| graph.nodes[i].clone()).collect()));
    }
    Ok(order.into_iter().map(|i| graph.nodes[i].clone()).collect())
}

/// Walks predecessors inside the unresolved remainder until a node repeats.
/// Every unresolved node has an unresolved parent, so the walk must loop.
fn find_cycle(children: &[Vec<usize>], indegree: &[usize]) -> Vec<usize> {
    let n = children.len();
    let mut parent_of = vec![usize::MAX; n];
    for (p, cs) in children.iter().enumerate() {
        if indegree[p] == 0 {
            continue;
        }
        for &c in cs {
            if indegree[c] > 0 && parent_of[c] == usize::MAX {
                parent_of[c] = p;
            }
        }
    }
    let start = (0..n).find(|&i| indegree[i] > 0).expect("unresolved node exists");
    let mut seen = vec![usize::MAX; n];
    let mut path = Vec::new();
    let mut cur = start;
    while seen[cur] == usize::MAX {
        seen[cur] = path.len();
        path.push(cur);
        cur = parent_of[cur];
    }
    let mut cycle: Vec<usize> = path[seen[cur]..].to_vec();
    // The walk follows parent links; reverse to read along edge direction.
    cycle.reverse();
    cycle.push(cycle[0]);
    cycle
}
