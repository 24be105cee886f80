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

//! Synthetic CDR / top-up / tower datasets with planted ground truth.
//!
//! Users are split into planted blocks. Each pair of users is contacted with
//! probability `p_in` (same block) or `p_out` (different blocks). Contacted
//! same-block pairs exchange `1 + Poisson(2)` events in every month of the
//! window. Contacted cross-block pairs get the same per-month volume, but half
//! of them only in a random non-empty strict subset of the months, so they fail
//! the every-month edge rule. Each user's income level is their block's level
//! with probability `homophily_strength` and a uniformly drawn block's level
//! otherwise.

use std::collections::HashSet;

use chrono::Duration;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::ingest::{
    CdrRecord, EventKind, ObservationWindow, TopUpRecord, TowerId, TowerInfo, TowerRegistry,
    UserId, YearMonth,
};

const INTRA_EXTRA_EVENTS: f64 = 2.0;
const PARTIAL_INTER_PROBABILITY: f64 = 0.5;
const MAX_CALL_SECONDS: u32 = 600;

// Rough bounding box of Côte d'Ivoire.
const LAT_RANGE: (f64, f64) = (4.5, 10.5);
const LON_RANGE: (f64, f64) = (-8.5, -2.5);

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_users: usize,
    pub n_towers: usize,
    pub n_months: usize,
    pub first_month: YearMonth,
    pub planted_blocks: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    /// Mean purchase amount per block, minor units.
    pub income_levels: Vec<u64>,
    pub homophily_strength: f64,
    /// Target CV of each user's purchase amounts.
    pub purchase_cv: f64,
    /// Mean purchases per month of a user at the lowest income level; the
    /// rate scales inversely with income.
    pub purchases_per_month: f64,
    /// Share of events placed on a random tower instead of the caller's home.
    pub roaming_fraction: f64,
    pub sms_fraction: f64,
    pub n_service_numbers: usize,
    /// Distinct users each service number calls.
    pub service_contacts: usize,
}

impl SynthConfig {
    /// `n_blocks` equal blocks with income levels spaced geometrically from
    /// `income_min` to `income_max`.
    pub fn planted(
        seed: u64,
        n_blocks: usize,
        block_size: usize,
        income_min: u64,
        income_max: u64,
    ) -> Self {
        SynthConfig {
            seed,
            n_users: n_blocks * block_size,
            n_towers: 100,
            n_months: 3,
            first_month: YearMonth {
                year: 2012,
                month: 1,
            },
            planted_blocks: vec![block_size; n_blocks],
            p_in: 0.3,
            p_out: 0.01,
            income_levels: geometric_levels(n_blocks, income_min, income_max),
            homophily_strength: 1.0,
            purchase_cv: 0.5,
            purchases_per_month: 4.0,
            roaming_fraction: 0.1,
            sms_fraction: 0.5,
            n_service_numbers: 0,
            service_contacts: 150,
        }
    }

    pub fn window(&self) -> Result<ObservationWindow> {
        ObservationWindow::from_months(self.first_month, self.n_months)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_users == 0 || self.n_towers == 0 || self.n_months == 0 {
            return bad("n_users, n_towers and n_months must be positive".into());
        }
        if self.planted_blocks.iter().sum::<usize>() != self.n_users
            || self.planted_blocks.contains(&0)
        {
            return bad("planted block sizes must be positive and sum to n_users".into());
        }
        if self.income_levels.len() != self.planted_blocks.len() || self.income_levels.contains(&0)
        {
            return bad("one positive income level per block is required".into());
        }
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !(prob(self.p_in) && prob(self.p_out) && self.p_in > self.p_out) {
            return bad(format!(
                "need 0 <= p_out < p_in <= 1, got p_in={} p_out={}",
                self.p_in, self.p_out
            ));
        }
        if !(prob(self.homophily_strength)
            && prob(self.roaming_fraction)
            && prob(self.sms_fraction))
        {
            return bad(
                "homophily_strength, roaming_fraction and sms_fraction must lie in [0, 1]".into(),
            );
        }
        if !(self.purchase_cv.is_finite() && self.purchase_cv >= 0.0) {
            return bad("purchase_cv must be non-negative".into());
        }
        if !(self.purchases_per_month.is_finite() && self.purchases_per_month > 0.0) {
            return bad("purchases_per_month must be positive".into());
        }
        if self.n_service_numbers > 0 && self.service_contacts == 0 {
            return bad("service_contacts must be positive".into());
        }
        self.window().map(|_| ())
    }
}

/// `n` levels from `min` to `max`, evenly spaced on a log scale.
pub fn geometric_levels(n: usize, min: u64, max: u64) -> Vec<u64> {
    if n == 1 {
        return vec![min];
    }
    let ratio = max as f64 / min as f64;
    (0..n)
        .map(|i| (min as f64 * ratio.powf(i as f64 / (n - 1) as f64)).round() as u64)
        .collect()
}

/// Log-normal shape parameter giving coefficient of variation `cv`.
pub fn lognormal_sigma(cv: f64) -> f64 {
    (1.0 + cv * cv).ln().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserTruth {
    pub user: UserId,
    pub block: usize,
    pub income_level: u64,
    pub home_tower: TowerId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub users: Vec<UserTruth>,
    pub service_numbers: Vec<UserId>,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub window: ObservationWindow,
    pub cdr: Vec<CdrRecord>,
    pub topups: Vec<TopUpRecord>,
    pub towers: TowerRegistry,
    pub truth: GroundTruth,
    pub warnings: Vec<String>,
}

fn padded_ids(prefix: &str, n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).max(1).to_string().len();
    (0..n).map(|i| format!("{prefix}{i:0width$}")).collect()
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

struct Clock<'a> {
    window: &'a ObservationWindow,
}

impl Clock<'_> {
    /// Uniform second inside month `m` of the window.
    fn instant(&self, m: usize, rng: &mut ChaCha8Rng) -> chrono::DateTime<chrono::Utc> {
        let start = self.window.months()[m].start().max(self.window.start());
        let end = self.window.months()[m]
            .next()
            .start()
            .min(self.window.end());
        let secs = (end - start).num_seconds();
        start + Duration::seconds(rng.random_range(0..secs))
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let window = config.window()?;
    let clock = Clock { window: &window };
    let n_months = window.n_months();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut warnings = Vec::new();

    let expected_intra: f64 = config
        .planted_blocks
        .iter()
        .map(|&b| (b * b.saturating_sub(1) / 2) as f64 * config.p_in)
        .sum();
    if expected_intra < 1.0 {
        warnings.push(format!(
            "p_in={} leaves {expected_intra:.2} expected same-block links; the graph will be nearly empty",
            config.p_in
        ));
    }

    // towers on a jittered grid
    let side = (config.n_towers as f64).sqrt().ceil() as usize;
    let cell_lat = (LAT_RANGE.1 - LAT_RANGE.0) / side as f64;
    let cell_lon = (LON_RANGE.1 - LON_RANGE.0) / side as f64;
    let tower_ids = padded_ids("t", config.n_towers);
    let towers: Vec<TowerInfo> = tower_ids
        .iter()
        .enumerate()
        .map(|(k, id)| {
            let (row, col) = (k / side, k % side);
            let jitter_lat = rng.random_range(-0.3..0.3) * cell_lat;
            let jitter_lon = rng.random_range(-0.3..0.3) * cell_lon;
            TowerInfo {
                id: id.as_str().into(),
                lat: round6(LAT_RANGE.0 + (row as f64 + 0.5) * cell_lat + jitter_lat),
                lon: round6(LON_RANGE.0 + (col as f64 + 0.5) * cell_lon + jitter_lon),
            }
        })
        .collect();

    // users
    let user_ids = padded_ids("u", config.n_users);
    let n_blocks = config.planted_blocks.len();
    let mut block_of = Vec::with_capacity(config.n_users);
    for (b, &size) in config.planted_blocks.iter().enumerate() {
        block_of.extend(std::iter::repeat_n(b, size));
    }
    let mut truth = Vec::with_capacity(config.n_users);
    for (u, id) in user_ids.iter().enumerate() {
        let block = block_of[u];
        let income_block = if rng.random_bool(config.homophily_strength) {
            block
        } else {
            rng.random_range(0..n_blocks)
        };
        let home = rng.random_range(0..config.n_towers);
        truth.push(UserTruth {
            user: id.as_str().into(),
            block,
            income_level: config.income_levels[income_block],
            home_tower: tower_ids[home].as_str().into(),
        });
    }
    let home_index: Vec<usize> = truth
        .iter()
        .map(|t| {
            tower_ids
                .binary_search(&t.home_tower.0)
                .expect("generated tower")
        })
        .collect();

    // contacts
    let extra = Poisson::new(INTRA_EXTRA_EVENTS).expect("positive rate");
    let mut cdr = Vec::new();
    let full_months: Vec<usize> = (0..n_months).collect();
    for a in 0..config.n_users {
        for b in a + 1..config.n_users {
            let same = block_of[a] == block_of[b];
            let p = if same { config.p_in } else { config.p_out };
            if !rng.random_bool(p) {
                continue;
            }
            let months = if !same && n_months > 1 && rng.random_bool(PARTIAL_INTER_PROBABILITY) {
                strict_subset(n_months, &mut rng)
            } else {
                full_months.clone()
            };
            let mut used = HashSet::new();
            for &m in &months {
                let count = 1 + extra.sample(&mut rng) as usize;
                for _ in 0..count {
                    let (caller, callee) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
                    let mut ts = clock.instant(m, &mut rng);
                    while !used.insert((ts, caller)) {
                        ts = clock.instant(m, &mut rng);
                    }
                    let tower = if rng.random_bool(config.roaming_fraction) {
                        rng.random_range(0..config.n_towers)
                    } else {
                        home_index[caller]
                    };
                    let (kind, duration_s) = if rng.random_bool(config.sms_fraction) {
                        (EventKind::Sms, 0)
                    } else {
                        (EventKind::Call, rng.random_range(1..=MAX_CALL_SECONDS))
                    };
                    cdr.push(CdrRecord {
                        timestamp: ts,
                        caller: user_ids[caller].as_str().into(),
                        callee: user_ids[callee].as_str().into(),
                        tower: tower_ids[tower].as_str().into(),
                        kind,
                        duration_s,
                    });
                }
            }
        }
    }

    // broadcast numbers: outgoing calls only, to distinct users
    let service_ids = padded_ids("s", config.n_service_numbers);
    if config.n_service_numbers > 0 && config.service_contacts > config.n_users {
        warnings.push(format!(
            "service_contacts={} exceeds n_users={}; service numbers reach everyone",
            config.service_contacts, config.n_users
        ));
    }
    for sid in &service_ids {
        let reach = config.service_contacts.min(config.n_users);
        let tower = rng.random_range(0..config.n_towers);
        for target in index::sample(&mut rng, config.n_users, reach).into_vec() {
            let m = rng.random_range(0..n_months);
            cdr.push(CdrRecord {
                timestamp: clock.instant(m, &mut rng),
                caller: sid.as_str().into(),
                callee: user_ids[target].as_str().into(),
                tower: tower_ids[tower].as_str().into(),
                kind: EventKind::Call,
                duration_s: rng.random_range(1..=MAX_CALL_SECONDS),
            });
        }
    }

    // purchases
    let sigma = lognormal_sigma(config.purchase_cv);
    let shape = Normal::new(-sigma * sigma / 2.0, sigma).expect("finite sigma");
    let min_income = *config.income_levels.iter().min().expect("non-empty") as f64;
    let mut topups = Vec::new();
    for t in &truth {
        let income = t.income_level as f64;
        let per_month =
            Poisson::new(config.purchases_per_month * min_income / income).expect("positive rate");
        let mut used = HashSet::new();
        for m in 0..n_months {
            let count = (per_month.sample(&mut rng) as usize).max(1);
            for _ in 0..count {
                let amount = ((income * shape.sample(&mut rng).exp()).round() as u64).max(1);
                let mut ts = clock.instant(m, &mut rng);
                while !used.insert((ts, amount)) {
                    ts = clock.instant(m, &mut rng);
                }
                topups.push(TopUpRecord {
                    timestamp: ts,
                    user: t.user.clone(),
                    amount_minor: amount,
                });
            }
        }
    }

    cdr.sort_by(|x, y| {
        (x.timestamp, &x.caller, &x.callee, &x.tower).cmp(&(
            y.timestamp,
            &y.caller,
            &y.callee,
            &y.tower,
        ))
    });
    topups.sort_by(|x, y| {
        (x.timestamp, &x.user, x.amount_minor).cmp(&(y.timestamp, &y.user, y.amount_minor))
    });

    Ok(SynthDataset {
        window,
        cdr,
        topups,
        towers: TowerRegistry::from_towers(towers)?,
        truth: GroundTruth {
            users: truth,
            service_numbers: service_ids.into_iter().map(UserId).collect(),
        },
        warnings,
    })
}

/// Uniformly drawn non-empty strict subset of `0..n` (n >= 2), ascending.
fn strict_subset(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    loop {
        let pick: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
        if !pick.is_empty() && pick.len() < n {
            return pick;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn small() -> SynthConfig {
        SynthConfig::planted(1, 4, 25, 100, 1000)
    }

    #[test]
    fn deterministic_for_seed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.cdr, b.cdr);
        assert_eq!(a.topups, b.topups);
        assert_eq!(a.towers, b.towers);
        assert_eq!(a.truth, b.truth);
        let c = generate(&SynthConfig { seed: 2, ..small() }).unwrap();
        assert_ne!(a.cdr, c.cdr);
    }

    #[test]
    fn forced_income_follows_block() {
        let cfg = SynthConfig::planted(3, 2, 50, 100, 1000);
        let data = generate(&cfg).unwrap();
        for t in &data.truth.users {
            assert_eq!(t.income_level, cfg.income_levels[t.block]);
        }
        let mut sizes = BTreeMap::new();
        for t in &data.truth.users {
            *sizes.entry(t.block).or_insert(0usize) += 1;
        }
        assert_eq!(sizes.into_values().collect::<Vec<_>>(), cfg.planted_blocks);
    }

    #[test]
    fn records_respect_ingest_invariants() {
        let data = generate(&SynthConfig {
            n_service_numbers: 2,
            ..small()
        })
        .unwrap();
        assert!(data
            .cdr
            .iter()
            .all(|r| r.caller != r.callee && data.window.contains(r.timestamp)));
        assert!(data
            .cdr
            .iter()
            .all(|r| r.kind == EventKind::Call || r.duration_s == 0));
        assert!(data
            .topups
            .iter()
            .all(|t| t.amount_minor > 0 && data.window.contains(t.timestamp)));
        assert!(data
            .cdr
            .iter()
            .all(|r| data.towers.get(r.tower.as_str()).is_some()));
        let unique: HashSet<_> = data.cdr.iter().collect();
        assert_eq!(unique.len(), data.cdr.len());
        // at least one purchase per user per month
        assert!(data.topups.len() >= small().n_users * small().n_months);
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig {
            p_out: 0.5,
            p_in: 0.3,
            ..small()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            n_users: 99,
            ..small()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            income_levels: vec![1, 2, 0, 4],
            ..small()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            homophily_strength: 1.5,
            ..small()
        }
        .validate()
        .is_err());
        let sparse = generate(&SynthConfig {
            p_in: 0.0001,
            p_out: 0.0,
            ..small()
        })
        .unwrap();
        assert!(!sparse.warnings.is_empty());
    }

    #[test]
    fn lognormal_sigma_hits_target_cv() {
        for cv in [0.1, 0.5, 1.0, 2.38] {
            let s = lognormal_sigma(cv);
            assert!(((s * s).exp_m1().sqrt() - cv).abs() < 1e-12);
        }
        assert_eq!(geometric_levels(3, 100, 10_000), vec![100, 1000, 10_000]);
    }
}
