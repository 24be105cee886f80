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

//! Wealth homophily inside communities.
//!
//! Each community is scored by the CV of its members' mean purchase amounts;
//! the size-weighted average of those CVs is compared against the same
//! statistic after randomly redistributing the means over the network.

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::communities::Partition;
use crate::error::{Error, Result};
use crate::ingest::{CdrRecord, TowerId, TowerRegistry, UserId};
use crate::purchases::{coefficient_of_variation, UserPurchaseStats};
use crate::socialgraph::SocialGraph;

pub const DEFAULT_SHUFFLES: usize = 100;

const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Home tower of every user who initiated at least one event: the tower they
/// used most often, ties going to the tower seen earliest (then lowest id).
pub fn home_towers(records: &[CdrRecord]) -> BTreeMap<UserId, TowerId> {
    let mut usage: HashMap<&UserId, HashMap<&TowerId, (u64, DateTime<Utc>)>> = HashMap::new();
    for r in records {
        let slot = usage
            .entry(&r.caller)
            .or_default()
            .entry(&r.tower)
            .or_insert((0, r.timestamp));
        slot.0 += 1;
        slot.1 = slot.1.min(r.timestamp);
    }
    usage
        .into_iter()
        .map(|(user, towers)| {
            let (tower, _) = towers
                .into_iter()
                .max_by(|(ta, (ca, fa)), (tb, (cb, fb))| {
                    ca.cmp(cb).then(fb.cmp(fa)).then(tb.cmp(ta))
                })
                .expect("at least one tower");
            (user.clone(), tower.clone())
        })
        .collect()
}

/// Member ids per community id.
pub fn members_by_community(graph: &SocialGraph, partition: &Partition) -> Vec<Vec<UserId>> {
    partition
        .communities()
        .iter()
        .map(|c| c.members.iter().map(|&n| graph.id(n).clone()).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommunityWealthStats {
    pub community_id: usize,
    pub size: usize,
    /// Members that have a purchase mean.
    pub n_with_means: usize,
    /// Defined when at least two members have a purchase mean.
    pub cv: Option<f64>,
    /// `(lat, lon)` mean of the members' home towers.
    pub centroid: Option<(f64, f64)>,
}

fn mean_lookup(stats: &[UserPurchaseStats]) -> HashMap<&str, f64> {
    stats
        .iter()
        .filter(|s| s.n_purchases > 0)
        .map(|s| (s.user.as_str(), s.mean_amount))
        .collect()
}

pub fn community_wealth_stats(
    communities: &[Vec<UserId>],
    stats: &[UserPurchaseStats],
    home: &BTreeMap<UserId, TowerId>,
    towers: &TowerRegistry,
) -> Result<Vec<CommunityWealthStats>> {
    let means = mean_lookup(stats);
    communities
        .iter()
        .enumerate()
        .map(|(id, members)| {
            let member_means: Vec<f64> = members
                .iter()
                .filter_map(|u| means.get(u.as_str()).copied())
                .collect();
            let mut coords = Vec::new();
            for u in members {
                if let Some(tower) = home.get(u) {
                    let info = towers.get(tower.as_str()).ok_or_else(|| {
                        Error::InvalidInput(format!(
                            "home tower {tower} of {u} is not in the tower registry"
                        ))
                    })?;
                    coords.push((info.lat, info.lon));
                }
            }
            let centroid = (!coords.is_empty()).then(|| {
                let n = coords.len() as f64;
                let lat = coords.iter().map(|c| c.0).sum::<f64>() / n;
                let lon = coords.iter().map(|c| c.1).sum::<f64>() / n;
                (lat, lon)
            });
            Ok(CommunityWealthStats {
                community_id: id,
                size: members.len(),
                n_with_means: member_means.len(),
                cv: if member_means.len() >= 2 {
                    coefficient_of_variation(&member_means)
                } else {
                    None
                },
                centroid,
            })
        })
        .collect()
}

/// `Σ size_c · cv_c / Σ size_c` over communities with a defined CV.
pub fn weighted_cv(stats: &[CommunityWealthStats]) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for s in stats {
        if let Some(cv) = s.cv {
            num += s.size as f64 * cv;
            den += s.size as f64;
        }
    }
    if den == 0.0 {
        return Err(Error::InvalidInput(
            "no community has two members with purchase means".into(),
        ));
    }
    Ok(num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomophilyResult {
    pub observed_weighted_cv: f64,
    pub baseline_weighted_cv: f64,
    pub baseline_std: f64,
    pub n_shuffles: usize,
    pub seed: u64,
}

/// The mean-bearing members of every community laid out contiguously, so a
/// shuffle is a permutation of one flat array.
struct MeanLayout {
    /// `(community size, range into means)` per community.
    spans: Vec<(usize, std::ops::Range<usize>)>,
    means: Vec<f64>,
}

impl MeanLayout {
    fn new(communities: &[Vec<UserId>], stats: &[UserPurchaseStats]) -> Self {
        let lookup = mean_lookup(stats);
        let mut means = Vec::new();
        let mut spans = Vec::with_capacity(communities.len());
        for members in communities {
            let start = means.len();
            means.extend(
                members
                    .iter()
                    .filter_map(|u| lookup.get(u.as_str()).copied()),
            );
            spans.push((members.len(), start..means.len()));
        }
        MeanLayout { spans, means }
    }

    /// Same arithmetic as `community_wealth_stats` followed by `weighted_cv`.
    fn weighted_cv(&self, means: &[f64]) -> Result<f64> {
        let stats: Vec<CommunityWealthStats> = self
            .spans
            .iter()
            .enumerate()
            .map(|(id, (size, range))| CommunityWealthStats {
                community_id: id,
                size: *size,
                n_with_means: range.len(),
                cv: if range.len() >= 2 {
                    coefficient_of_variation(&means[range.clone()])
                } else {
                    None
                },
                centroid: None,
            })
            .collect();
        weighted_cv(&stats)
    }
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Welford's update. Equal inputs give their common value back exactly,
/// which a plain sum-then-divide does not guarantee.
fn running_mean_std(values: &[f64]) -> (f64, f64) {
    let (mut mean, mut m2) = (0.0, 0.0);
    for (k, &x) in values.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (x - mean);
    }
    (mean, (m2 / values.len() as f64).sqrt())
}

/// Observed weighted CV against `rounds` uniform redistributions of the
/// purchase means over the nodes, partition held fixed.
pub fn shuffled_baseline(
    communities: &[Vec<UserId>],
    stats: &[UserPurchaseStats],
    rounds: usize,
    seed: u64,
) -> Result<HomophilyResult> {
    shuffled_baseline_with(communities, stats, rounds, seed, |means, rng| {
        means.shuffle(rng)
    })
}

/// [`shuffled_baseline`] with a caller-supplied permutation. Round `r` draws
/// from stream `r` of a ChaCha generator keyed by `seed`.
pub fn shuffled_baseline_with<F>(
    communities: &[Vec<UserId>],
    stats: &[UserPurchaseStats],
    rounds: usize,
    seed: u64,
    permute: F,
) -> Result<HomophilyResult>
where
    F: Fn(&mut [f64], &mut ChaCha8Rng) + Sync,
{
    if rounds == 0 {
        return Err(Error::InvalidInput(
            "at least one shuffle round is required".into(),
        ));
    }
    let layout = MeanLayout::new(communities, stats);
    let observed = layout.weighted_cv(&layout.means)?;
    let reference = sorted(&layout.means);

    let values: Vec<f64> = (0..rounds)
        .into_par_iter()
        .map(|round| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(round as u64);
            let mut means = layout.means.clone();
            permute(&mut means, &mut rng);
            if sorted(&means) != reference {
                return Err(Error::Invariant(format!(
                    "shuffle round {round} changed the multiset of purchase means"
                )));
            }
            layout.weighted_cv(&means)
        })
        .collect::<Result<_>>()?;
    let (baseline, std) = running_mean_std(&values);
    Ok(HomophilyResult {
        observed_weighted_cv: observed,
        baseline_weighted_cv: baseline,
        baseline_std: std,
        n_shuffles: rounds,
        seed,
    })
}

/// Great-circle distance in kilometres.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((lat2 - lat1) / 2.0).sin().powi(2)
        + lat1.cos() * lat2.cos() * ((lon2 - lon1) / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Nearest tower to `point`; equidistant towers resolve to the smallest id.
pub fn nearest_tower(point: (f64, f64), towers: &TowerRegistry) -> Option<&TowerId> {
    let mut best: Option<(&TowerId, f64)> = None;
    for t in towers.iter() {
        let d = haversine_km(point, (t.lat, t.lon));
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((&t.id, d));
        }
    }
    best.map(|(id, _)| id)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TowerDiversity {
    pub tower: TowerId,
    pub diversity_value: f64,
    pub n_communities: usize,
}

/// Attributes every community with a CV and a centroid to its nearest tower
/// and averages the CVs per tower, weighted by community size.
pub fn map_community_diversity(
    stats: &[CommunityWealthStats],
    towers: &TowerRegistry,
) -> Result<Vec<TowerDiversity>> {
    if towers.is_empty() {
        return Err(Error::InvalidInput("empty tower registry".into()));
    }
    let mut acc: BTreeMap<&TowerId, (f64, f64, usize)> = BTreeMap::new();
    for s in stats {
        let (Some(cv), Some(centroid)) = (s.cv, s.centroid) else {
            continue;
        };
        let tower = nearest_tower(centroid, towers).expect("non-empty registry");
        let slot = acc.entry(tower).or_default();
        slot.0 += s.size as f64 * cv;
        slot.1 += s.size as f64;
        slot.2 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|(tower, (num, den, n))| TowerDiversity {
            tower: tower.clone(),
            diversity_value: num / den,
            n_communities: n,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_timestamp, EventKind, TowerInfo};
    use crate::purchases::stats_for_amounts;

    fn registry(towers: &[(&str, f64, f64)]) -> TowerRegistry {
        TowerRegistry::from_towers(towers.iter().map(|&(id, lat, lon)| TowerInfo {
            id: id.into(),
            lat,
            lon,
        }))
        .unwrap()
    }

    fn ids(v: &[&str]) -> Vec<UserId> {
        v.iter().map(|&s| s.into()).collect()
    }

    fn cws(size: usize, cv: Option<f64>, centroid: Option<(f64, f64)>) -> CommunityWealthStats {
        CommunityWealthStats {
            community_id: 0,
            size,
            n_with_means: size,
            cv,
            centroid,
        }
    }

    #[test]
    fn home_tower_is_modal_with_earliest_tiebreak() {
        let ev = |ts: &str, tower: &str| CdrRecord {
            timestamp: parse_timestamp(ts).unwrap(),
            caller: "u".into(),
            callee: "v".into(),
            tower: tower.into(),
            kind: EventKind::Call,
            duration_s: 1,
        };
        let recs = vec![
            ev("2012-01-03T00:00:00Z", "t9"),
            ev("2012-01-02T00:00:00Z", "t2"),
            ev("2012-01-04T00:00:00Z", "t9"),
            ev("2012-01-01T00:00:00Z", "t2"),
            ev("2012-01-05T00:00:00Z", "t3"),
        ];
        let home = home_towers(&recs);
        assert_eq!(home.get("u").map(|t| t.as_str()), Some("t2"));
        assert!(!home.contains_key("v"));
        let mut reversed = recs.clone();
        reversed.reverse();
        assert_eq!(home_towers(&reversed), home);
    }

    #[test]
    fn community_stats_examples() {
        let stats = vec![
            stats_for_amounts("a".into(), &[100]),
            stats_for_amounts("b".into(), &[100]),
            stats_for_amounts("c".into(), &[100]),
            stats_for_amounts("d".into(), &[300]),
        ];
        let reg = registry(&[("t0", 0.0, 0.0), ("t2", 2.0, 2.0)]);
        let home: BTreeMap<UserId, TowerId> = [("a", "t0"), ("b", "t2"), ("c", "t0"), ("d", "t2")]
            .into_iter()
            .map(|(u, t)| (u.into(), t.into()))
            .collect();
        let comms = vec![ids(&["a", "b"]), ids(&["c", "d"]), ids(&["e"])];
        let out = community_wealth_stats(&comms, &stats, &home, &reg).unwrap();
        assert_eq!(out[0].cv, Some(0.0));
        assert_eq!(out[1].cv, Some(0.5));
        assert_eq!(out[0].centroid, Some((1.0, 1.0)));
        assert_eq!(out[2].cv, None);
        assert_eq!(out[2].centroid, None);
        assert_eq!(weighted_cv(&out).unwrap(), 0.25);

        let missing = registry(&[("t0", 0.0, 0.0)]);
        assert!(community_wealth_stats(&comms, &stats, &home, &missing).is_err());
    }

    #[test]
    fn weighted_cv_examples() {
        assert_eq!(
            weighted_cv(&[cws(3, Some(0.0), None), cws(5, Some(0.0), None)]).unwrap(),
            0.0
        );
        assert_eq!(weighted_cv(&[cws(7, Some(0.3), None)]).unwrap(), 0.3);
        assert!(weighted_cv(&[cws(1, None, None)]).is_err());
        assert!(weighted_cv(&[]).is_err());
    }

    #[test]
    fn baseline_of_uniform_means_is_zero() {
        let stats: Vec<_> = ["a", "b", "c", "d"]
            .iter()
            .map(|u| stats_for_amounts((*u).into(), &[250]))
            .collect();
        let comms = vec![ids(&["a", "b"]), ids(&["c", "d"])];
        let r = shuffled_baseline(&comms, &stats, 10, 5).unwrap();
        assert_eq!(
            (
                r.observed_weighted_cv,
                r.baseline_weighted_cv,
                r.baseline_std
            ),
            (0.0, 0.0, 0.0)
        );
        assert!(shuffled_baseline(&comms, &stats, 0, 5).is_err());
    }

    #[test]
    fn identity_permutation_reproduces_observed() {
        let stats: Vec<_> = (0..12)
            .map(|i| stats_for_amounts(format!("u{i:02}").into(), &[100 + 37 * i as u64]))
            .collect();
        let comms: Vec<Vec<UserId>> = (0..4)
            .map(|c| {
                (0..3)
                    .map(|k| UserId(format!("u{:02}", c * 3 + k)))
                    .collect()
            })
            .collect();
        let r = shuffled_baseline_with(&comms, &stats, 3, 1, |_, _| {}).unwrap();
        assert_eq!(r.observed_weighted_cv, r.baseline_weighted_cv);
        let direct =
            community_wealth_stats(&comms, &stats, &BTreeMap::new(), &TowerRegistry::default())
                .unwrap();
        assert_eq!(weighted_cv(&direct).unwrap(), r.observed_weighted_cv);
    }

    #[test]
    fn tampering_permuter_is_an_invariant_violation() {
        let stats: Vec<_> = (0..4)
            .map(|i| stats_for_amounts(format!("u{i}").into(), &[100 + i as u64]))
            .collect();
        let comms = vec![ids(&["u0", "u1"]), ids(&["u2", "u3"])];
        let err = shuffled_baseline_with(&comms, &stats, 2, 1, |m, _| m[0] = 1.0).unwrap_err();
        assert!(matches!(err, Error::Invariant(_)));
    }

    #[test]
    fn diversity_map_examples() {
        let reg = registry(&[("t1", 0.0, 1.0), ("t2", 0.0, -1.0), ("t3", 5.0, 5.0)]);
        let on_t3 = map_community_diversity(&[cws(4, Some(0.3), Some((5.0, 5.0)))], &reg).unwrap();
        assert_eq!(
            on_t3,
            vec![TowerDiversity {
                tower: "t3".into(),
                diversity_value: 0.3,
                n_communities: 1
            }]
        );

        let two = map_community_diversity(
            &[
                cws(10, Some(0.2), Some((5.0, 5.1))),
                cws(30, Some(0.6), Some((4.9, 5.0))),
            ],
            &reg,
        )
        .unwrap();
        assert_eq!(two.len(), 1);
        assert!((two[0].diversity_value - 0.5).abs() < 1e-12);

        let tie = map_community_diversity(&[cws(2, Some(0.1), Some((0.0, 0.0)))], &reg).unwrap();
        assert_eq!(tie[0].tower.as_str(), "t1");

        assert!(map_community_diversity(&[], &TowerRegistry::default()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn layout() -> impl Strategy<Value = (Vec<Vec<UserId>>, Vec<UserPurchaseStats>)> {
            prop::collection::vec(prop::collection::vec(1u64..10_000, 1..8), 2..12).prop_map(
                |groups| {
                    let mut communities = Vec::new();
                    let mut stats = Vec::new();
                    let mut next = 0;
                    for g in groups {
                        let mut members = Vec::new();
                        for amount in g {
                            let id = UserId(format!("u{next:03}"));
                            next += 1;
                            // every third user has no purchases at all
                            if next % 3 != 0 {
                                stats.push(stats_for_amounts(id.clone(), &[amount, amount + next]));
                            }
                            members.push(id);
                        }
                        communities.push(members);
                    }
                    (communities, stats)
                },
            )
        }

        proptest! {
            #[test]
            fn weighted_cv_ignores_community_labels((comms, stats) in layout(), rot in 0usize..12) {
                let registry = registry(&[("t1", 5.0, -4.0)]);
                let home = BTreeMap::new();
                let direct = weighted_cv(&community_wealth_stats(&comms, &stats, &home, &registry).unwrap());
                let mut relabeled = comms.clone();
                let k = rot % relabeled.len();
                relabeled.rotate_left(k);
                relabeled.reverse();
                let other = weighted_cv(&community_wealth_stats(&relabeled, &stats, &home, &registry).unwrap());
                match (direct, other) {
                    (Ok(a), Ok(b)) => prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0)),
                    (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
                }
            }

            #[test]
            fn identity_hook_matches_observed_exactly((comms, stats) in layout(), seed in any::<u64>()) {
                if let Ok(r) = shuffled_baseline_with(&comms, &stats, 3, seed, |_, _| {}) {
                    prop_assert_eq!(r.observed_weighted_cv, r.baseline_weighted_cv);
                    prop_assert_eq!(r.baseline_std, 0.0);
                }
            }
        }
    }
}
