//! Location interaction graphs and random-walk (current-flow) betweenness.
//!
//! Scores follow Newman's random-walk betweenness: for every unordered pair
//! `(s, t)` a unit current enters at `s` and leaves at `t` on the resistor
//! network whose conductances are the symmetrized edge weights. The throughput
//! of an intermediate node is half the absolute current over its incident
//! edges; the source and target each carry the full unit. A node's score is
//! its mean throughput over all pairs of its connected component.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CentralityError;
use crate::model::{LocationId, LocationRegistry, MicroPost, PopulationTable};

/// Directed weighted graph over locations. Self-loops are stored but carry
/// no flow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocationInteractionGraph {
    nodes: Vec<LocationId>,
    /// Row-major `nodes.len()²` matrix; entry `(u, v)` is the weight of u → v.
    weights: Vec<f64>,
}

impl LocationInteractionGraph {
    pub fn new(nodes: Vec<LocationId>) -> Self {
        let n = nodes.len();
        Self { nodes, weights: vec![0.0; n * n] }
    }

    pub fn from_registry(registry: &LocationRegistry) -> Self {
        Self::new(registry.ids().cloned().collect())
    }

    pub fn nodes(&self) -> &[LocationId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, id: &LocationId) -> Option<usize> {
        self.nodes.iter().position(|n| n == id)
    }

    pub fn weight(&self, from: &LocationId, to: &LocationId) -> f64 {
        match (self.index_of(from), self.index_of(to)) {
            (Some(u), Some(v)) => self.weights[u * self.len() + v],
            _ => 0.0,
        }
    }

    pub fn weight_at(&self, u: usize, v: usize) -> f64 {
        self.weights[u * self.len() + v]
    }

    pub fn set_weight_at(&mut self, u: usize, v: usize, w: f64) -> Result<(), CentralityError> {
        if !(w.is_finite() && w >= 0.0) {
            return Err(CentralityError::BadWeight(w));
        }
        let n = self.len();
        self.weights[u * n + v] = w;
        Ok(())
    }

    /// Adds `w` to the edge `from → to`. Returns `false` if either end is not a node.
    pub fn add_weight(&mut self, from: &LocationId, to: &LocationId, w: f64) -> bool {
        match (self.index_of(from), self.index_of(to)) {
            (Some(u), Some(v)) => {
                let n = self.len();
                self.weights[u * n + v] += w;
                true
            }
            _ => false,
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Undirected conductances: `w(u,v) + w(v,u)` off the diagonal, zero on it.
    pub fn symmetrized(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else {
                self.weights[i * n + j] + self.weights[j * n + i]
            }
        })
    }
}

/// Interaction graph plus the number of interactions whose target author had
/// no known location.
#[derive(Clone, Debug)]
pub struct InteractionCount {
    pub graph: LocationInteractionGraph,
    pub unresolved: usize,
}

/// Counts interactions between locations. A retweet contributes one edge to
/// the retweeted author. An original post contributes one edge per mentioned
/// author, and a reply adds an edge to the replied author unless that author
/// is already among the mentions. Author locations come from the posts'
/// own authors plus `known_authors`.
pub fn build_interaction_graph(
    posts: &[MicroPost],
    registry: &LocationRegistry,
    known_authors: &HashMap<String, LocationId>,
) -> InteractionCount {
    let mut author_location: HashMap<&str, &LocationId> =
        known_authors.iter().map(|(k, v)| (k.as_str(), v)).collect();
    for post in posts {
        if let Some(loc) = &post.location {
            author_location.entry(post.author.id.as_str()).or_insert(loc);
        }
    }

    let mut graph = LocationInteractionGraph::from_registry(registry);
    let mut unresolved = 0;
    for post in posts {
        let Some(source) = &post.location else { continue };
        let mut targets: Vec<&str> = Vec::new();
        if let Some(rt) = &post.retweet_of {
            targets.push(rt.author_id.as_str());
        } else {
            targets.extend(post.mentions.iter().map(String::as_str));
            if let Some(reply) = &post.reply_to {
                if !post.mentions.iter().any(|m| m == reply) {
                    targets.push(reply.as_str());
                }
            }
        }
        for target in targets {
            match author_location.get(target) {
                Some(dest) if graph.add_weight(source, dest, 1.0) => {}
                _ => unresolved += 1,
            }
        }
    }
    InteractionCount { graph, unresolved }
}

/// Population baseline: `w(u, v) = total · share(u) · share(v)`.
pub fn expected_graph(population: &PopulationTable, total: f64) -> Result<LocationInteractionGraph, CentralityError> {
    if !(total.is_finite() && total > 0.0) {
        return Err(CentralityError::BadTotal(total));
    }
    let nodes: Vec<LocationId> = population.iter().map(|(id, _)| id.clone()).collect();
    let shares: Vec<f64> = population.iter().map(|(_, s)| s).collect();
    let mut graph = LocationInteractionGraph::new(nodes);
    for (u, su) in shares.iter().enumerate() {
        for (v, sv) in shares.iter().enumerate() {
            graph.set_weight_at(u, v, total * su * sv)?;
        }
    }
    Ok(graph)
}

/// Connected components of a symmetric conductance matrix.
fn components(adj: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = adj.nrows();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut head = 0;
        while head < comp.len() {
            let u = comp[head];
            head += 1;
            for v in 0..n {
                if !seen[v] && adj[(u, v)] > 0.0 {
                    seen[v] = true;
                    comp.push(v);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Random-walk betweenness of every node, indexed like `graph.nodes()`.
/// Isolated nodes score 0; single-pair components score 1 at both ends.
pub fn rw_betweenness_scores(graph: &LocationInteractionGraph) -> Result<Vec<f64>, CentralityError> {
    if let Some(&w) = graph.weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(CentralityError::BadWeight(w));
    }
    let adj = graph.symmetrized();
    let mut scores = vec![0.0; graph.len()];
    for comp in components(&adj) {
        let m = comp.len();
        if m < 2 {
            continue;
        }
        // Reduced Laplacian with the last component node grounded.
        let k = m - 1;
        let laplacian = DMatrix::from_fn(k, k, |a, b| {
            let (i, j) = (comp[a], comp[b]);
            if a == b {
                comp.iter().map(|&x| adj[(i, x)]).sum()
            } else {
                -adj[(i, j)]
            }
        });
        let degenerate = || CentralityError::DegenerateComponent(comp.iter().map(|&i| graph.nodes[i].to_string()).collect());
        let inverse = laplacian.try_inverse().ok_or_else(degenerate)?;
        if inverse.iter().any(|v| !v.is_finite()) {
            return Err(degenerate());
        }
        // Potentials with the grounded node padded as zeros.
        let potential = DMatrix::from_fn(m, m, |a, b| if a < k && b < k { inverse[(a, b)] } else { 0.0 });

        let mut throughput = vec![0.0; m];
        for s in 0..m {
            for t in (s + 1)..m {
                throughput[s] += 1.0;
                throughput[t] += 1.0;
                for (i, through) in throughput.iter_mut().enumerate() {
                    if i == s || i == t {
                        continue;
                    }
                    let vi = potential[(i, s)] - potential[(i, t)];
                    let current: f64 = (0..m)
                        .map(|j| adj[(comp[i], comp[j])] * (vi - (potential[(j, s)] - potential[(j, t)])).abs())
                        .sum();
                    *through += 0.5 * current;
                }
            }
        }
        let pairs = (m * (m - 1) / 2) as f64;
        for (a, &i) in comp.iter().enumerate() {
            scores[i] = throughput[a] / pairs;
        }
    }
    Ok(scores)
}

pub fn rw_betweenness(graph: &LocationInteractionGraph) -> Result<BTreeMap<LocationId, f64>, CentralityError> {
    let scores = rw_betweenness_scores(graph)?;
    Ok(graph.nodes.iter().cloned().zip(scores).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentralityReport {
    pub observed: BTreeMap<LocationId, f64>,
    pub expected: BTreeMap<LocationId, f64>,
    /// `observed - expected`.
    pub delta: BTreeMap<LocationId, f64>,
    /// Permutation-test p-value of each delta, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_values: Option<BTreeMap<LocationId, f64>>,
}

pub fn compare_centralities(
    observed: &LocationInteractionGraph,
    expected: &LocationInteractionGraph,
) -> Result<CentralityReport, CentralityError> {
    let mut a: Vec<_> = observed.nodes.clone();
    let mut b: Vec<_> = expected.nodes.clone();
    a.sort();
    b.sort();
    if a != b {
        return Err(CentralityError::NodeMismatch);
    }
    let obs = rw_betweenness(observed)?;
    let exp = rw_betweenness(expected)?;
    let delta = obs.iter().map(|(k, v)| (k.clone(), v - exp[k])).collect();
    Ok(CentralityReport { observed: obs, expected: exp, delta, p_values: None })
}

/// Two-sided permutation test of each node's delta: observed off-diagonal
/// weights are shuffled across node pairs `rounds` times and the delta is
/// recomputed against the same expectation.
pub fn permutation_test(
    observed: &LocationInteractionGraph,
    expected: &LocationInteractionGraph,
    rounds: usize,
    seed: u64,
) -> Result<CentralityReport, CentralityError> {
    let mut report = compare_centralities(observed, expected)?;
    let n = observed.len();
    let off_diagonal: Vec<(usize, usize)> =
        (0..n).flat_map(|u| (0..n).filter(move |&v| v != u).map(move |v| (u, v))).collect();
    let mut values: Vec<f64> = off_diagonal.iter().map(|&(u, v)| observed.weight_at(u, v)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extreme: BTreeMap<LocationId, usize> = report.delta.keys().map(|k| (k.clone(), 0)).collect();
    for _ in 0..rounds {
        values.shuffle(&mut rng);
        let mut shuffled = observed.clone();
        for (&(u, v), &w) in off_diagonal.iter().zip(&values) {
            shuffled.set_weight_at(u, v, w)?;
        }
        let scores = rw_betweenness(&shuffled)?;
        for (k, count) in extreme.iter_mut() {
            let d = scores[k] - report.expected[k];
            if d.abs() >= report.delta[k].abs() - 1e-12 {
                *count += 1;
            }
        }
    }
    report.p_values = Some(
        extreme
            .into_iter()
            .map(|(k, c)| (k, (c as f64 + 1.0) / (rounds as f64 + 1.0)))
            .collect(),
    );
    Ok(report)
}
