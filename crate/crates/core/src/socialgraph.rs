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

//! The communication graph.
//!
//! Two users are linked when they exchanged at least one call or text in each
//! of `min_months` distinct calendar months of the observation window, in
//! either direction. The link weight is the total number of events exchanged
//! over the whole window.

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::{CdrRecord, ObservationWindow, UserId};

/// Undirected weighted graph over dense node indices. Node ids are kept in
/// lexicographic order, so index order and id order agree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SocialGraph {
    ids: Vec<UserId>,
    adj: Vec<Vec<(usize, u64)>>,
    n_edges: usize,
    total_weight: u64,
}

impl SocialGraph {
    /// Builds a graph from `(a, b, weight)` triples over `n` nodes whose ids
    /// are given by `ids` (which must be sorted and unique).
    fn assemble(ids: Vec<UserId>, edges: &[(usize, usize, u64)]) -> Result<Self> {
        let n = ids.len();
        if ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "node ids must be sorted and unique".into(),
            ));
        }
        let mut adj: Vec<Vec<(usize, u64)>> = vec![Vec::new(); n];
        let mut total_weight = 0u64;
        for &(a, b, w) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidInput(format!("edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(Error::InvalidInput(format!("self-loop on {}", ids[a])));
            }
            if w == 0 {
                return Err(Error::InvalidInput("edge weight must be positive".into()));
            }
            adj[a].push((b, w));
            adj[b].push((a, w));
            total_weight += w;
        }
        for list in &mut adj {
            list.sort_unstable();
            if list.windows(2).any(|p| p[0].0 == p[1].0) {
                return Err(Error::InvalidInput("duplicate edge".into()));
            }
        }
        Ok(SocialGraph {
            ids,
            adj,
            n_edges: edges.len(),
            total_weight,
        })
    }

    /// Graph over nodes named `n0000…` with the given index edges. Isolated
    /// nodes are kept.
    pub fn from_index_edges(n: usize, edges: &[(usize, usize, u64)]) -> Result<Self> {
        let width = n.max(1).to_string().len();
        let ids = (0..n).map(|i| UserId(format!("n{i:0width$}"))).collect();
        SocialGraph::assemble(ids, edges)
    }

    /// Graph whose nodes are exactly the endpoints of `edges`.
    pub fn from_edges<I>(edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (UserId, UserId, u64)>,
    {
        let edges: Vec<_> = edges.into_iter().collect();
        let mut ids: Vec<UserId> = edges
            .iter()
            .flat_map(|(a, b, _)| [a.clone(), b.clone()])
            .collect();
        ids.sort_unstable();
        ids.dedup();
        let index: HashMap<&str, usize> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let idx_edges: Vec<_> = edges
            .iter()
            .map(|(a, b, w)| (index[a.as_str()], index[b.as_str()], *w))
            .collect();
        SocialGraph::assemble(ids, &idx_edges)
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.n_edges
    }

    /// Sum of edge weights, `m`.
    pub fn total_weight(&self) -> u64 {
        self.total_weight
    }

    pub fn ids(&self) -> &[UserId] {
        &self.ids
    }

    pub fn id(&self, node: usize) -> &UserId {
        &self.ids[node]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids
            .binary_search_by(|probe| probe.as_str().cmp(id))
            .ok()
    }

    /// Neighbors of `node` with link weights, ascending by neighbor index.
    pub fn neighbors(&self, node: usize) -> &[(usize, u64)] {
        &self.adj[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adj[node].len()
    }

    pub fn degree_sequence(&self) -> Vec<usize> {
        self.adj.iter().map(Vec::len).collect()
    }

    /// Edges as `(a, b, weight)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize, u64)> {
        let mut out = Vec::with_capacity(self.n_edges);
        for (a, list) in self.adj.iter().enumerate() {
            out.extend(list.iter().filter(|(b, _)| *b > a).map(|&(b, w)| (a, b, w)));
        }
        out
    }
}

/// Thresholds for detecting hotlines, helpdesks and broadcast numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceFilter {
    /// Flag when the number of distinct contacts exceeds this.
    pub max_contacts: usize,
    /// Flag when `|d_out − d_in| / (d_out + d_in)` exceeds this...
    pub asymmetry_cutoff: f64,
    /// ...provided the user took part in at least this many events.
    pub activity_floor: u64,
}

impl Default for ServiceFilter {
    fn default() -> Self {
        ServiceFilter {
            max_contacts: 1000,
            asymmetry_cutoff: 0.9,
            activity_floor: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlagReason {
    Contacts,
    Asymmetry,
    Both,
}

impl FlagReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FlagReason::Contacts => "contacts",
            FlagReason::Asymmetry => "asymmetry",
            FlagReason::Both => "contacts+asymmetry",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "contacts" => Some(FlagReason::Contacts),
            "asymmetry" => Some(FlagReason::Asymmetry),
            "contacts+asymmetry" => Some(FlagReason::Both),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlaggedNode {
    pub user: UserId,
    pub distinct_out: usize,
    pub distinct_in: usize,
    pub asymmetry: f64,
    pub reason: FlagReason,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ServiceFlagReport {
    /// Sorted by user id.
    pub flagged: Vec<FlaggedNode>,
}

impl ServiceFlagReport {
    pub fn contains(&self, user: &str) -> bool {
        self.flagged
            .binary_search_by(|f| f.user.as_str().cmp(user))
            .is_ok()
    }
}

pub fn flag_service_numbers(
    records: &[CdrRecord],
    filter: &ServiceFilter,
) -> Result<ServiceFlagReport> {
    if filter.max_contacts == 0
        || !(filter.asymmetry_cutoff > 0.0 && filter.asymmetry_cutoff <= 1.0)
    {
        return Err(Error::InvalidInput(
            "max_contacts must be positive and asymmetry_cutoff in (0, 1]".into(),
        ));
    }
    #[derive(Default)]
    struct Activity<'a> {
        out: HashSet<&'a str>,
        inc: HashSet<&'a str>,
        events: u64,
    }
    let mut activity: HashMap<&str, Activity> = HashMap::new();
    for r in records {
        let caller = activity.entry(r.caller.as_str()).or_default();
        caller.out.insert(r.callee.as_str());
        caller.events += 1;
        let callee = activity.entry(r.callee.as_str()).or_default();
        callee.inc.insert(r.caller.as_str());
        callee.events += 1;
    }

    let mut flagged = Vec::new();
    for (user, a) in activity {
        let (d_out, d_in) = (a.out.len(), a.inc.len());
        let contacts = a.out.union(&a.inc).count();
        let asymmetry = d_out.abs_diff(d_in) as f64 / (d_out + d_in).max(1) as f64;
        let too_many = contacts > filter.max_contacts;
        let lopsided = a.events >= filter.activity_floor && asymmetry > filter.asymmetry_cutoff;
        let reason = match (too_many, lopsided) {
            (true, true) => FlagReason::Both,
            (true, false) => FlagReason::Contacts,
            (false, true) => FlagReason::Asymmetry,
            (false, false) => continue,
        };
        flagged.push(FlaggedNode {
            user: user.into(),
            distinct_out: d_out,
            distinct_in: d_in,
            asymmetry,
            reason,
        });
    }
    flagged.sort_by(|a, b| a.user.cmp(&b.user));
    Ok(ServiceFlagReport { flagged })
}

/// Drops every event with a flagged endpoint.
pub fn remove_flagged(records: &[CdrRecord], report: &ServiceFlagReport) -> Vec<CdrRecord> {
    let flagged: HashSet<&str> = report.flagged.iter().map(|f| f.user.as_str()).collect();
    records
        .iter()
        .filter(|r| !flagged.contains(r.caller.as_str()) && !flagged.contains(r.callee.as_str()))
        .cloned()
        .collect()
}

pub fn build_graph(
    records: &[CdrRecord],
    window: &ObservationWindow,
    min_months: usize,
) -> Result<SocialGraph> {
    if window.n_months() == 0 {
        return Err(Error::InvalidInput("empty observation window".into()));
    }
    if min_months == 0 || min_months > window.n_months() {
        return Err(Error::InvalidInput(format!(
            "min_months must be in 1..={}, got {min_months}",
            window.n_months()
        )));
    }

    let mut users: Vec<&str> = records
        .iter()
        .flat_map(|r| [r.caller.as_str(), r.callee.as_str()])
        .collect();
    users.sort_unstable();
    users.dedup();
    let index: HashMap<&str, u32> = users
        .iter()
        .enumerate()
        .map(|(i, u)| (*u, i as u32))
        .collect();

    // (count, month mask) per unordered pair
    let mut pairs: HashMap<(u32, u32), (u64, u128)> = HashMap::new();
    for r in records {
        let Some(month) = window.month_index(r.timestamp) else {
            continue;
        };
        let (a, b) = (index[r.caller.as_str()], index[r.callee.as_str()]);
        let key = if a < b { (a, b) } else { (b, a) };
        let entry = pairs.entry(key).or_default();
        entry.0 += 1;
        entry.1 |= 1u128 << month;
    }

    let kept: Vec<(u32, u32, u64)> = pairs
        .into_iter()
        .filter(|(_, (_, mask))| mask.count_ones() as usize >= min_months)
        .map(|((a, b), (count, _))| (a, b, count))
        .collect();

    // keep only endpoints, preserving lexicographic order
    let mut remap = vec![u32::MAX; users.len()];
    for &(a, b, _) in &kept {
        remap[a as usize] = 0;
        remap[b as usize] = 0;
    }
    let mut ids = Vec::new();
    for (old, slot) in remap.iter_mut().enumerate() {
        if *slot == 0 {
            *slot = ids.len() as u32;
            ids.push(UserId::from(users[old]));
        }
    }
    let edges: Vec<(usize, usize, u64)> = kept
        .iter()
        .map(|&(a, b, w)| (remap[a as usize] as usize, remap[b as usize] as usize, w))
        .collect();
    SocialGraph::assemble(ids, &edges)
}

/// Local clustering coefficient of every node on the unweighted skeleton;
/// nodes of degree below 2 get 0.
pub fn local_clustering(graph: &SocialGraph) -> Vec<f64> {
    let n = graph.node_count();
    (0..n)
        .into_par_iter()
        .map_init(
            || vec![false; n],
            |mark, i| {
                let nbrs = graph.neighbors(i);
                let k = nbrs.len();
                if k < 2 {
                    return 0.0;
                }
                for &(u, _) in nbrs {
                    mark[u] = true;
                }
                let mut closed = 0usize;
                for &(u, _) in nbrs {
                    closed += graph
                        .neighbors(u)
                        .iter()
                        .filter(|(w, _)| *w > u && mark[*w])
                        .count();
                }
                for &(u, _) in nbrs {
                    mark[u] = false;
                }
                closed as f64 / (k * (k - 1) / 2) as f64
            },
        )
        .collect()
}

/// Mean local clustering coefficient over all nodes.
pub fn avg_local_clustering(graph: &SocialGraph) -> Result<f64> {
    if graph.node_count() == 0 {
        return Err(Error::InvalidInput("clustering of an empty graph".into()));
    }
    let per_node = local_clustering(graph);
    Ok(per_node.iter().sum::<f64>() / per_node.len() as f64)
}

pub const DEFAULT_SWAP_FACTOR: f64 = 10.0;

/// Degree-preserving rewiring by `round(n_swaps_factor · |E|)` attempted
/// double-edge swaps. Swaps that would create a self-loop or a parallel edge
/// are rejected. Each edge carries its weight through the swaps.
pub fn degree_preserving_shuffle(
    graph: &SocialGraph,
    seed: u64,
    n_swaps_factor: f64,
) -> Result<SocialGraph> {
    if graph.edge_count() < 2 {
        return Err(Error::InvalidInput(
            "shuffling needs at least 2 edges".into(),
        ));
    }
    if !(n_swaps_factor.is_finite() && n_swaps_factor >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "bad swap factor {n_swaps_factor}"
        )));
    }
    let mut edges = graph.edges();
    let mut present: HashSet<(usize, usize)> = edges.iter().map(|&(a, b, _)| (a, b)).collect();
    let norm = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };
    let attempts = (n_swaps_factor * edges.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _ in 0..attempts {
        let i = rng.random_range(0..edges.len());
        let j = rng.random_range(0..edges.len());
        let flip = rng.random_bool(0.5);
        if i == j {
            continue;
        }
        let (a, b, wi) = edges[i];
        let (mut c, mut d, wj) = edges[j];
        if flip {
            std::mem::swap(&mut c, &mut d);
        }
        // a-b, c-d  ->  a-d, c-b
        if a == d || c == b {
            continue;
        }
        let (e1, e2) = (norm(a, d), norm(c, b));
        if present.contains(&e1) || present.contains(&e2) {
            continue;
        }
        present.remove(&(edges[i].0, edges[i].1));
        present.remove(&(edges[j].0, edges[j].1));
        present.insert(e1);
        present.insert(e2);
        edges[i] = (e1.0, e1.1, wi);
        edges[j] = (e2.0, e2.1, wj);
    }
    SocialGraph::assemble(graph.ids.clone(), &edges)
}
