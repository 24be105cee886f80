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

//! Purchase statistics: per-user mean and coefficient of variation, the
//! cumulative frequency curve of those CVs, and per-tower aggregates of the
//! per-user means.
//!
//! All standard deviations are population standard deviations.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ingest::{TopUpRecord, TowerId, UserId};

/// Above this size [`gini`] switches from the pairwise sum to the sorted
/// identity.
pub const GINI_PAIRWISE_MAX: usize = 10_000;

pub const DEFAULT_MIN_USERS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct UserPurchaseStats {
    pub user: UserId,
    pub n_purchases: usize,
    pub mean_amount: f64,
    pub std_amount: f64,
    /// Only defined with at least two purchases.
    pub cv: Option<f64>,
}

/// Mean and population standard deviation, two-pass.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// σ/μ of `values`; `None` when empty or when the mean is not positive.
pub fn coefficient_of_variation(values: &[f64]) -> Option<f64> {
    let (mean, std) = mean_std(values)?;
    (mean > 0.0).then(|| std / mean)
}

fn integer_mean_std(amounts: &[u64]) -> (f64, f64) {
    let n = amounts.len() as f64;
    let sum: u128 = amounts.iter().map(|&a| a as u128).sum();
    let mean = sum as f64 / n;
    let var = amounts
        .iter()
        .map(|&a| {
            let d = a as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    (mean, var.sqrt())
}

pub fn stats_for_amounts(user: UserId, amounts: &[u64]) -> UserPurchaseStats {
    if amounts.is_empty() {
        return UserPurchaseStats {
            user,
            n_purchases: 0,
            mean_amount: 0.0,
            std_amount: 0.0,
            cv: None,
        };
    }
    let (mean, std) = integer_mean_std(amounts);
    UserPurchaseStats {
        user,
        n_purchases: amounts.len(),
        mean_amount: mean,
        std_amount: std,
        cv: (amounts.len() >= 2).then(|| std / mean),
    }
}

/// Per-user statistics, sorted by user id.
pub fn user_stats(topups: &[TopUpRecord]) -> Vec<UserPurchaseStats> {
    let mut by_user: BTreeMap<&UserId, Vec<u64>> = BTreeMap::new();
    for t in topups {
        by_user.entry(&t.user).or_default().push(t.amount_minor);
    }
    by_user
        .into_iter()
        .map(|(user, amounts)| stats_for_amounts(user.clone(), &amounts))
        .collect()
}

/// CV of the pooled series of every purchase.
pub fn global_cv(amounts: &[u64]) -> Result<f64> {
    if amounts.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "pooled CV needs at least 2 purchases, got {}",
            amounts.len()
        )));
    }
    let (mean, std) = integer_mean_std(amounts);
    Ok(std / mean)
}

/// Empirical cumulative distribution of a set of CVs.
#[derive(Debug, Clone, PartialEq)]
pub struct CfaCurve {
    sorted: Vec<f64>,
}

impl CfaCurve {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("CFA of an empty set".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "CFA value {bad} is not a finite non-negative number"
            )));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(CfaCurve { sorted })
    }

    /// Fraction of values `<= x`.
    pub fn fraction_at(&self, x: f64) -> f64 {
        let count = self.sorted.partition_point(|v| *v <= x);
        count as f64 / self.sorted.len() as f64
    }

    /// Distinct values with the cumulative fraction at each one.
    pub fn breakpoints(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &v) in self.sorted.iter().enumerate() {
            let frac = (i + 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 = frac,
                _ => out.push((v, frac)),
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }
}

pub fn cfa(values: &[f64]) -> Result<CfaCurve> {
    CfaCurve::new(values)
}

fn check_gini_input(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidInput("Gini of an empty set".into()));
    }
    if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "Gini value {bad} is not positive"
        )));
    }
    Ok(())
}

/// `Σᵢ Σⱼ |xᵢ − xⱼ| / (2 n² μ)` by direct pairwise summation.
pub fn gini_pairwise(values: &[f64]) -> Result<f64> {
    check_gini_input(values)?;
    let n = values.len() as f64;
    let total: f64 = values.iter().sum();
    let mut diff = 0.0;
    for (i, a) in values.iter().enumerate() {
        for b in &values[i + 1..] {
            diff += (a - b).abs();
        }
    }
    // each unordered pair appears twice in the double sum
    Ok(2.0 * diff / (2.0 * n * total))
}

/// Same quantity via `Σᵢ (2i − n − 1) x₍ᵢ₎ / (n Σx)` over the sorted values.
pub fn gini_sorted(values: &[f64]) -> Result<f64> {
    check_gini_input(values)?;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let total: f64 = sorted.iter().sum();
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i + 1) as f64 - n as f64 - 1.0) * x)
        .sum();
    Ok(weighted / (n as f64 * total))
}

pub fn gini(values: &[f64]) -> Result<f64> {
    if values.len() <= GINI_PAIRWISE_MAX {
        gini_pairwise(values)
    } else {
        gini_sorted(values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionIndicator {
    pub tower: TowerId,
    pub n_users: usize,
    pub mean_of_means: f64,
    pub cv_of_means: f64,
    pub gini_of_means: f64,
}

/// Mean, CV and Gini of the per-user means of each tower's resident users.
/// Towers with fewer than `min_users` residents are omitted; users without a
/// home tower or without purchases are ignored.
pub fn region_indicators(
    stats: &[UserPurchaseStats],
    home_towers: &BTreeMap<UserId, TowerId>,
    min_users: usize,
) -> Result<Vec<RegionIndicator>> {
    if min_users == 0 {
        return Err(Error::InvalidInput("min_users must be at least 1".into()));
    }
    let mut by_tower: BTreeMap<&TowerId, Vec<f64>> = BTreeMap::new();
    for s in stats.iter().filter(|s| s.n_purchases > 0) {
        if let Some(tower) = home_towers.get(&s.user) {
            by_tower.entry(tower).or_default().push(s.mean_amount);
        }
    }
    let mut out = Vec::new();
    for (tower, mut means) in by_tower {
        if means.len() < min_users {
            continue;
        }
        // sorted so the result does not depend on user order
        means.sort_by(f64::total_cmp);
        let (mean, std) = mean_std(&means).expect("non-empty");
        out.push(RegionIndicator {
            tower: tower.clone(),
            n_users: means.len(),
            mean_of_means: mean,
            cv_of_means: std / mean,
            gini_of_means: gini(&means)?,
        });
    }
    Ok(out)
}
