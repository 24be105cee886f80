// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Louvain community detection with a resolution-scaled modularity
//!
//! `Q(γ) = Σ_c [ Σ_in(c) / 2m − γ (Σ_tot(c) / 2m)² ]`
//!
//! where `Σ_in(c)` sums `A_ij` over ordered pairs inside `c` (each internal
//! edge counted twice) and `Σ_tot(c)` is the total weighted degree of `c`.
//! `γ = 1` is classic Newman–Girvan modularity; larger `γ` favours smaller
//! communities.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::socialgraph::SocialGraph;

/// A whole-level pass stops the algorithm when it gains less than this.
pub const LEVEL_TOLERANCE: f64 = 1e-9;

/// A local move must gain more than this to be accepted.
const MOVE_EPSILON: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolution(f64);

impl Resolution {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma.is_finite() && gamma > 0.0 {
            Ok(Resolution(gamma))
        } else {
            Err(Error::InvalidInput(format!(
                "resolution must be positive, got {gamma}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Community {
    /// Node indices, ascending.
    pub members: Vec<usize>,
    /// `Σ_in`: internal weight, each internal edge counted twice.
    pub internal_weight: f64,
    /// `Σ_tot`: sum of member weighted degrees.
    pub total_weight: f64,
}

impl Community {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// Community assignment per node. Community ids are dense from 0, ordered by
/// decreasing size, ties by smallest member index.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    assignment: Vec<usize>,
    communities: Vec<Community>,
}

impl Partition {
    /// Canonicalises arbitrary labels into a partition of `graph`.
    pub fn from_assignment(graph: &SocialGraph, labels: &[usize]) -> Result<Self> {
        if labels.len() != graph.node_count() {
            return Err(Error::InvalidInput(format!(
                "partition covers {} nodes, graph has {}",
                labels.len(),
                graph.node_count()
            )));
        }
        let mut groups: std::collections::HashMap<usize, Vec<usize>> = Default::default();
        for (node, &label) in labels.iter().enumerate() {
            groups.entry(label).or_default().push(node);
        }
        let mut members: Vec<Vec<usize>> = groups.into_values().collect();
        members.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));

        let mut assignment = vec![0; labels.len()];
        for (c, group) in members.iter().enumerate() {
            for &node in group {
                assignment[node] = c;
            }
        }
        let mut communities: Vec<Community> = members
            .into_iter()
            .map(|members| Community {
                members,
                internal_weight: 0.0,
                total_weight: 0.0,
            })
            .collect();
        for (a, b, w) in graph.edges() {
            let w = w as f64;
            communities[assignment[a]].total_weight += w;
            communities[assignment[b]].total_weight += w;
            if assignment[a] == assignment[b] {
                communities[assignment[a]].internal_weight += 2.0 * w;
            }
        }
        Ok(Partition {
            assignment,
            communities,
        })
    }

    pub fn singletons(graph: &SocialGraph) -> Self {
        let labels: Vec<usize> = (0..graph.node_count()).collect();
        Partition::from_assignment(graph, &labels).expect("sized to graph")
    }

    pub fn community_of(&self, node: usize) -> usize {
        self.assignment[node]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn communities(&self) -> &[Community] {
        &self.communities
    }

    pub fn n_communities(&self) -> usize {
        self.communities.len()
    }
}

pub fn modularity(graph: &SocialGraph, partition: &Partition, gamma: Resolution) -> Result<f64> {
    if partition.assignment.len() != graph.node_count() {
        return Err(Error::InvalidInput(
            "partition does not cover the graph".into(),
        ));
    }
    if graph.total_weight() == 0 {
        return Err(Error::InvalidInput(
            "modularity of a graph without edges".into(),
        ));
    }
    let two_m = 2.0 * graph.total_weight() as f64;
    Ok(partition
        .communities
        .iter()
        .map(|c| {
            let tot = c.total_weight / two_m;
            c.internal_weight / two_m - gamma.value() * tot * tot
        })
        .sum())
}

/// One graph level of the Louvain hierarchy. `self_loop[i]` is `A_ii`, the
/// internal weight already absorbed into super-node `i`.
#[derive(Debug, Clone)]
struct LevelGraph {
    adj: Vec<Vec<(usize, f64)>>,
    self_loop: Vec<f64>,
    degree: Vec<f64>,
    two_m: f64,
}

impl LevelGraph {
    fn from_social(graph: &SocialGraph) -> Self {
        let adj: Vec<Vec<(usize, f64)>> = (0..graph.node_count())
            .map(|i| {
                graph
                    .neighbors(i)
                    .iter()
                    .map(|&(j, w)| (j, w as f64))
                    .collect()
            })
            .collect();
        let degree = adj.iter().map(|l| l.iter().map(|(_, w)| w).sum()).collect();
        LevelGraph {
            self_loop: vec![0.0; adj.len()],
            adj,
            degree,
            two_m: 2.0 * graph.total_weight() as f64,
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn modularity(&self, comm: &[usize], gamma: f64) -> f64 {
        let n = self.len();
        let mut inside = vec![0.0; n];
        let mut tot = vec![0.0; n];
        for i in 0..n {
            let c = comm[i];
            tot[c] += self.degree[i];
            inside[c] += self.self_loop[i];
            for &(j, w) in &self.adj[i] {
                if comm[j] == c {
                    inside[c] += w;
                }
            }
        }
        (0..n)
            .map(|c| inside[c] / self.two_m - gamma * (tot[c] / self.two_m).powi(2))
            .sum()
    }

    /// Collapses communities (dense labels `0..k`) into super-nodes.
    fn aggregate(&self, comm: &[usize], k: usize) -> LevelGraph {
        let mut self_loop = vec![0.0; k];
        let mut degree = vec![0.0; k];
        let mut maps: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); k];
        for i in 0..self.len() {
            let ci = comm[i];
            self_loop[ci] += self.self_loop[i];
            degree[ci] += self.degree[i];
            for &(j, w) in &self.adj[i] {
                let cj = comm[j];
                if cj == ci {
                    self_loop[ci] += w;
                } else {
                    *maps[ci].entry(cj).or_default() += w;
                }
            }
        }
        LevelGraph {
            adj: maps.into_iter().map(|m| m.into_iter().collect()).collect(),
            self_loop,
            degree,
            two_m: self.two_m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Initial,
    LocalMoves,
    Aggregation,
}

/// Modularity of the flattened partition after one phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseRecord {
    pub level: usize,
    pub phase: Phase,
    pub modularity: f64,
    pub n_communities: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LouvainOptions {
    pub resolution: Resolution,
    pub seed: u64,
    /// Recompute Q from scratch around every accepted move and record the
    /// largest gap to the incremental gain. Quadratic; small graphs only.
    pub verify_moves: bool,
}

impl LouvainOptions {
    pub fn new(resolution: Resolution, seed: u64) -> Self {
        LouvainOptions {
            resolution,
            seed,
            verify_moves: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LouvainRun {
    pub partition: Partition,
    pub modularity: f64,
    pub phases: Vec<PhaseRecord>,
    /// Number of accepted local moves over the run.
    pub moves: usize,
    /// Largest |incremental ΔQ − recomputed ΔQ|, when `verify_moves` is set.
    pub max_delta_error: Option<f64>,
}

struct MoveOutcome {
    comm: Vec<usize>,
    moves: usize,
    max_delta_error: f64,
}

fn local_moves(g: &LevelGraph, gamma: f64, rng: &mut ChaCha8Rng, verify: bool) -> MoveOutcome {
    let n = g.len();
    let m = g.two_m / 2.0;
    let mut comm: Vec<usize> = (0..n).collect();
    let mut tot = g.degree.clone();
    let mut weight_to = vec![0.0; n];
    let mut seen = vec![false; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    let mut moves = 0;
    let mut max_delta_error: f64 = 0.0;

    loop {
        order.shuffle(rng);
        let mut pass_moves = 0;
        for &i in &order {
            let own = comm[i];
            let k = g.degree[i];
            for &(j, w) in &g.adj[i] {
                let c = comm[j];
                if !seen[c] {
                    seen[c] = true;
                    touched.push(c);
                }
                weight_to[c] += w;
            }
            tot[own] -= k;
            // ΔQ of inserting i into c, minus the terms that do not depend on c
            let gain = |c: usize, tot: &[f64], weight_to: &[f64]| {
                weight_to[c] / m - gamma * tot[c] * k / (2.0 * m * m)
            };
            let own_gain = gain(own, &tot, &weight_to);

            touched.sort_unstable();
            let mut best = own;
            let mut best_gain = f64::NEG_INFINITY;
            for &c in &touched {
                if c == own {
                    continue;
                }
                let gc = gain(c, &tot, &weight_to);
                if gc > best_gain {
                    best_gain = gc;
                    best = c;
                }
            }
            if best != own && best_gain - own_gain > MOVE_EPSILON {
                if verify {
                    let before = g.modularity(&comm, gamma);
                    comm[i] = best;
                    let after = g.modularity(&comm, gamma);
                    max_delta_error =
                        max_delta_error.max(((after - before) - (best_gain - own_gain)).abs());
                }
                comm[i] = best;
                tot[best] += k;
                pass_moves += 1;
            } else {
                tot[own] += k;
            }
            for &c in &touched {
                weight_to[c] = 0.0;
                seen[c] = false;
            }
            touched.clear();
        }
        moves += pass_moves;
        if pass_moves == 0 {
            break;
        }
    }
    MoveOutcome {
        comm,
        moves,
        max_delta_error,
    }
}

/// Relabels to `0..k` in order of first appearance.
fn densify(comm: &mut [usize]) -> usize {
    let mut map = vec![usize::MAX; comm.len()];
    let mut k = 0;
    for c in comm.iter_mut() {
        if map[*c] == usize::MAX {
            map[*c] = k;
            k += 1;
        }
        *c = map[*c];
    }
    k
}

pub fn louvain(graph: &SocialGraph, resolution: Resolution, seed: u64) -> Result<Partition> {
    Ok(louvain_traced(graph, &LouvainOptions::new(resolution, seed))?.partition)
}

pub fn louvain_traced(graph: &SocialGraph, options: &LouvainOptions) -> Result<LouvainRun> {
    if graph.node_count() == 0 || graph.total_weight() == 0 {
        return Err(Error::InvalidInput(
            "Louvain needs a graph with at least one edge".into(),
        ));
    }
    let gamma = options.resolution;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut level_graph = LevelGraph::from_social(graph);
    let mut node_comm: Vec<usize> = (0..graph.node_count()).collect();

    let flat_q = |labels: &[usize]| -> Result<(f64, Partition)> {
        let p = Partition::from_assignment(graph, labels)?;
        Ok((modularity(graph, &p, gamma)?, p))
    };

    let (mut best_q, mut best) = flat_q(&node_comm)?;
    let mut phases = vec![PhaseRecord {
        level: 0,
        phase: Phase::Initial,
        modularity: best_q,
        n_communities: best.n_communities(),
    }];
    let mut total_moves = 0;
    let mut max_delta_error: f64 = 0.0;

    for level in 0.. {
        let mut outcome = local_moves(&level_graph, gamma.value(), &mut rng, options.verify_moves);
        total_moves += outcome.moves;
        max_delta_error = max_delta_error.max(outcome.max_delta_error);
        let k = densify(&mut outcome.comm);
        let flattened: Vec<usize> = node_comm.iter().map(|&c| outcome.comm[c]).collect();
        let (q, partition) = flat_q(&flattened)?;
        phases.push(PhaseRecord {
            level,
            phase: Phase::LocalMoves,
            modularity: q,
            n_communities: k,
        });
        if q < best_q - LEVEL_TOLERANCE {
            return Err(Error::Invariant(format!(
                "modularity decreased from {best_q} to {q} during local moves at level {level}"
            )));
        }
        let gained = q - best_q;
        if outcome.moves > 0 && q >= best_q {
            best_q = q;
            best = partition;
            node_comm = flattened;
        }
        if outcome.moves == 0 || gained < LEVEL_TOLERANCE {
            break;
        }

        level_graph = level_graph.aggregate(&outcome.comm, k);
        let singleton: Vec<usize> = (0..k).collect();
        let q_agg = level_graph.modularity(&singleton, gamma.value());
        if (q_agg - q).abs() > LEVEL_TOLERANCE {
            return Err(Error::Invariant(format!(
                "aggregation changed modularity from {q} to {q_agg} at level {level}"
            )));
        }
        phases.push(PhaseRecord {
            level: level + 1,
            phase: Phase::Aggregation,
            modularity: q_agg,
            n_communities: k,
        });
    }

    Ok(LouvainRun {
        partition: best,
        modularity: best_q,
        phases,
        moves: total_moves,
        max_delta_error: options.verify_moves.then_some(max_delta_error),
    })
}
