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

//! Writers and readers for every artifact the pipeline produces.
//!
//! Floats in CSV and GeoJSON outputs are fixed to 6 decimals. The JSON
//! summaries keep full `f64` precision so headline numbers can be compared
//! exactly across stages.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::homophily::{CommunityWealthStats, TowerDiversity};
use crate::ingest::{
    format_timestamp, CdrRecord, RejectionReport, TopUpRecord, TowerId, TowerRegistry, UserId,
};
use crate::purchases::{CfaCurve, RegionIndicator, UserPurchaseStats};
use crate::socialgraph::{FlagReason, FlaggedNode, ServiceFlagReport, SocialGraph};
use crate::synthgen::{GroundTruth, UserTruth};

pub const GROUND_TRUTH_HEADER: [&str; 4] = ["user_id", "block_id", "income_level", "home_tower_id"];
pub const USER_STATS_HEADER: [&str; 5] =
    ["user_id", "n_purchases", "mean_amount", "std_amount", "cv"];
pub const HOME_TOWERS_HEADER: [&str; 2] = ["user_id", "tower_id"];
pub const CFA_HEADER: [&str; 2] = ["cv", "cumulative_fraction"];
pub const INDICATORS_HEADER: [&str; 5] = [
    "tower_id",
    "n_users",
    "mean_of_means",
    "cv_of_means",
    "gini_of_means",
];
pub const GRAPH_HEADER: [&str; 3] = ["user_a", "user_b", "weight"];
pub const FLAGGED_HEADER: [&str; 4] = ["user_id", "distinct_out", "distinct_in", "reason"];
pub const COMMUNITIES_HEADER: [&str; 2] = ["user_id", "community_id"];
pub const COMMUNITY_MAP_HEADER: [&str; 3] = ["tower_id", "diversity_value", "n_communities"];

pub fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

pub fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path, header: &[&str]) -> Result<csv::Writer<BufWriter<File>>> {
    let mut w = csv::WriterBuilder::new().from_writer(create(path)?);
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    Ok(w)
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv_writer(path, header)?;
    for row in rows {
        w.write_record(row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a whole artifact CSV, checking its header. Artifacts are produced by
/// this crate, so any defect is fatal.
fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(std::io::BufReader::new(file));
    let found = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Header {
            path: path.to_owned(),
            expected: header.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    rdr.records()
        .map(|r| {
            let r = r.map_err(|e| Error::csv(path, e))?;
            if r.len() != header.len() {
                return Err(Error::format(
                    path,
                    format!("expected {} fields, got {}", header.len(), r.len()),
                ));
            }
            Ok(r)
        })
        .collect()
}

fn field<T: std::str::FromStr>(path: &Path, value: &str, what: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::format(path, format!("bad {what} `{value}`")))
}

pub fn write_cdr(path: &Path, records: &[CdrRecord]) -> Result<()> {
    write_rows(
        path,
        &crate::ingest::CDR_HEADER,
        records.iter().map(|r| {
            [
                format_timestamp(r.timestamp),
                r.caller.to_string(),
                r.callee.to_string(),
                r.tower.to_string(),
                r.kind.as_str().to_owned(),
                r.duration_s.to_string(),
            ]
        }),
    )
}

pub fn write_topups(path: &Path, records: &[TopUpRecord]) -> Result<()> {
    write_rows(
        path,
        &crate::ingest::TOPUP_HEADER,
        records.iter().map(|r| {
            [
                format_timestamp(r.timestamp),
                r.user.to_string(),
                r.amount_minor.to_string(),
            ]
        }),
    )
}

/// Coordinates are written in shortest round-trip form.
pub fn write_towers(path: &Path, towers: &TowerRegistry) -> Result<()> {
    write_rows(
        path,
        &crate::ingest::TOWER_HEADER,
        towers
            .iter()
            .map(|t| [t.id.to_string(), t.lat.to_string(), t.lon.to_string()]),
    )
}

pub fn write_ground_truth(path: &Path, truth: &GroundTruth) -> Result<()> {
    write_rows(
        path,
        &GROUND_TRUTH_HEADER,
        truth.users.iter().map(|t| {
            [
                t.user.to_string(),
                t.block.to_string(),
                t.income_level.to_string(),
                t.home_tower.to_string(),
            ]
        }),
    )
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<UserTruth>> {
    read_rows(path, &GROUND_TRUTH_HEADER)?
        .iter()
        .map(|r| {
            Ok(UserTruth {
                user: r[0].into(),
                block: field(path, &r[1], "block_id")?,
                income_level: field(path, &r[2], "income_level")?,
                home_tower: r[3].into(),
            })
        })
        .collect()
}

pub fn write_rejections(path: &Path, report: &RejectionReport) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(report.to_text().as_bytes())
        .map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_user_stats(path: &Path, stats: &[UserPurchaseStats]) -> Result<()> {
    write_rows(
        path,
        &USER_STATS_HEADER,
        stats.iter().map(|s| {
            [
                s.user.to_string(),
                s.n_purchases.to_string(),
                fmt6(s.mean_amount),
                fmt6(s.std_amount),
                s.cv.map(fmt6).unwrap_or_default(),
            ]
        }),
    )
}

pub fn read_user_stats(path: &Path) -> Result<Vec<UserPurchaseStats>> {
    read_rows(path, &USER_STATS_HEADER)?
        .iter()
        .map(|r| {
            Ok(UserPurchaseStats {
                user: r[0].into(),
                n_purchases: field(path, &r[1], "n_purchases")?,
                mean_amount: field(path, &r[2], "mean_amount")?,
                std_amount: field(path, &r[3], "std_amount")?,
                cv: if r[4].is_empty() {
                    None
                } else {
                    Some(field(path, &r[4], "cv")?)
                },
            })
        })
        .collect()
}

pub fn write_home_towers(path: &Path, home: &BTreeMap<UserId, TowerId>) -> Result<()> {
    write_rows(
        path,
        &HOME_TOWERS_HEADER,
        home.iter().map(|(u, t)| [u.as_str(), t.as_str()]),
    )
}

pub fn read_home_towers(path: &Path) -> Result<BTreeMap<UserId, TowerId>> {
    Ok(read_rows(path, &HOME_TOWERS_HEADER)?
        .iter()
        .map(|r| (UserId::from(&r[0]), TowerId::from(&r[1])))
        .collect())
}

pub fn write_cfa(path: &Path, curve: &CfaCurve) -> Result<()> {
    // Distinct values can collide once rounded; keep the last fraction so the
    // file stays a function of the printed value.
    let mut rows: Vec<[String; 2]> = Vec::new();
    for (v, f) in curve.breakpoints() {
        let row = [fmt6(v), fmt6(f)];
        match rows.last_mut() {
            Some(last) if last[0] == row[0] => *last = row,
            _ => rows.push(row),
        }
    }
    write_rows(path, &CFA_HEADER, rows)
}

pub fn write_indicators(path: &Path, indicators: &[RegionIndicator]) -> Result<()> {
    write_rows(
        path,
        &INDICATORS_HEADER,
        indicators.iter().map(|i| {
            [
                i.tower.to_string(),
                i.n_users.to_string(),
                fmt6(i.mean_of_means),
                fmt6(i.cv_of_means),
                fmt6(i.gini_of_means),
            ]
        }),
    )
}

pub fn read_indicators(path: &Path) -> Result<Vec<RegionIndicator>> {
    read_rows(path, &INDICATORS_HEADER)?
        .iter()
        .map(|r| {
            Ok(RegionIndicator {
                tower: r[0].into(),
                n_users: field(path, &r[1], "n_users")?,
                mean_of_means: field(path, &r[2], "mean_of_means")?,
                cv_of_means: field(path, &r[3], "cv_of_means")?,
                gini_of_means: field(path, &r[4], "gini_of_means")?,
            })
        })
        .collect()
}

/// One row per edge, `user_a < user_b`, sorted.
pub fn write_graph(path: &Path, graph: &SocialGraph) -> Result<()> {
    write_rows(
        path,
        &GRAPH_HEADER,
        graph.edges().into_iter().map(|(a, b, w)| {
            [
                graph.id(a).to_string(),
                graph.id(b).to_string(),
                w.to_string(),
            ]
        }),
    )
}

pub fn read_graph(path: &Path) -> Result<SocialGraph> {
    let edges = read_rows(path, &GRAPH_HEADER)?
        .iter()
        .map(|r| {
            Ok((
                UserId::from(&r[0]),
                UserId::from(&r[1]),
                field(path, &r[2], "weight")?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    SocialGraph::from_edges(edges).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_flagged(path: &Path, report: &ServiceFlagReport) -> Result<()> {
    write_rows(
        path,
        &FLAGGED_HEADER,
        report.flagged.iter().map(|f| {
            [
                f.user.to_string(),
                f.distinct_out.to_string(),
                f.distinct_in.to_string(),
                f.reason.as_str().to_owned(),
            ]
        }),
    )
}

pub fn read_flagged(path: &Path) -> Result<ServiceFlagReport> {
    let flagged = read_rows(path, &FLAGGED_HEADER)?
        .iter()
        .map(|r| {
            let distinct_out: usize = field(path, &r[1], "distinct_out")?;
            let distinct_in: usize = field(path, &r[2], "distinct_in")?;
            Ok(FlaggedNode {
                user: r[0].into(),
                distinct_out,
                distinct_in,
                asymmetry: distinct_out.abs_diff(distinct_in) as f64
                    / (distinct_out + distinct_in).max(1) as f64,
                reason: FlagReason::parse(&r[3])
                    .ok_or_else(|| Error::format(path, format!("bad reason `{}`", &r[3])))?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ServiceFlagReport { flagged })
}

/// Rows grouped by community id, members ascending.
pub fn write_communities(path: &Path, communities: &[Vec<UserId>]) -> Result<()> {
    let rows = communities.iter().enumerate().flat_map(|(c, members)| {
        let mut sorted: Vec<&UserId> = members.iter().collect();
        sorted.sort();
        sorted
            .into_iter()
            .map(move |u| [u.to_string(), c.to_string()])
    });
    write_rows(path, &COMMUNITIES_HEADER, rows)
}

/// Members per community id; ids must be dense from 0.
pub fn read_communities(path: &Path) -> Result<Vec<Vec<UserId>>> {
    let mut out: Vec<Vec<UserId>> = Vec::new();
    for r in read_rows(path, &COMMUNITIES_HEADER)? {
        let c: usize = field(path, &r[1], "community_id")?;
        if c >= out.len() {
            out.resize(c + 1, Vec::new());
        }
        out[c].push(r[0].into());
    }
    if out.iter().any(Vec::is_empty) {
        return Err(Error::format(path, "community ids are not dense"));
    }
    for members in &mut out {
        members.sort();
    }
    Ok(out)
}

pub fn write_community_map(path: &Path, map: &[TowerDiversity]) -> Result<()> {
    write_rows(
        path,
        &COMMUNITY_MAP_HEADER,
        map.iter().map(|d| {
            [
                d.tower.to_string(),
                fmt6(d.diversity_value),
                d.n_communities.to_string(),
            ]
        }),
    )
}

pub fn read_community_map(path: &Path) -> Result<Vec<TowerDiversity>> {
    read_rows(path, &COMMUNITY_MAP_HEADER)?
        .iter()
        .map(|r| {
            Ok(TowerDiversity {
                tower: r[0].into(),
                diversity_value: field(path, &r[1], "diversity_value")?,
                n_communities: field(path, &r[2], "n_communities")?,
            })
        })
        .collect()
}

pub const COMMUNITY_WEALTH_HEADER: [&str; 6] = [
    "community_id",
    "size",
    "n_with_means",
    "cv",
    "centroid_lat",
    "centroid_lon",
];

/// Per-community CV and centroid; undefined values are left empty.
pub fn write_community_wealth(path: &Path, stats: &[CommunityWealthStats]) -> Result<()> {
    let opt = |v: Option<f64>| v.map(fmt6).unwrap_or_default();
    write_rows(
        path,
        &COMMUNITY_WEALTH_HEADER,
        stats.iter().map(|s| {
            [
                s.community_id.to_string(),
                s.size.to_string(),
                s.n_with_means.to_string(),
                opt(s.cv),
                opt(s.centroid.map(|c| c.0)),
                opt(s.centroid.map(|c| c.1)),
            ]
        }),
    )
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::format(path, e.to_string()))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| Error::format(path, e.to_string()))
}

/// One point feature per tower.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoFeature {
    pub tower: TowerId,
    pub lon: f64,
    pub lat: f64,
    pub properties: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GeoFeatureSet {
    pub features: Vec<GeoFeature>,
}

impl GeoFeatureSet {
    /// Features for every tower carrying at least one indicator, ordered by
    /// tower id, values rounded to 6 decimals.
    pub fn build(
        indicators: &[RegionIndicator],
        diversity: &[TowerDiversity],
        towers: &TowerRegistry,
    ) -> Result<Self> {
        let mut props: BTreeMap<&TowerId, BTreeMap<String, f64>> = BTreeMap::new();
        for i in indicators {
            let p = props.entry(&i.tower).or_default();
            p.insert("mean_of_means".into(), round6(i.mean_of_means));
            p.insert("cv_of_means".into(), round6(i.cv_of_means));
            p.insert("gini_of_means".into(), round6(i.gini_of_means));
        }
        for d in diversity {
            props
                .entry(&d.tower)
                .or_default()
                .insert("community_diversity".into(), round6(d.diversity_value));
        }
        let features = props
            .into_iter()
            .map(|(tower, properties)| {
                let info = towers.get(tower.as_str()).ok_or_else(|| {
                    Error::InvalidInput(format!("tower {tower} is not in the registry"))
                })?;
                if let Some((k, v)) = properties.iter().find(|(_, v)| !v.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "tower {tower}: {k} = {v} is not finite"
                    )));
                }
                Ok(GeoFeature {
                    tower: tower.clone(),
                    lon: info.lon,
                    lat: info.lat,
                    properties,
                })
            })
            .collect::<Result<_>>()?;
        Ok(GeoFeatureSet { features })
    }

    pub fn to_json(&self) -> Value {
        let features: Vec<Value> = self
            .features
            .iter()
            .map(|f| {
                let props: Map<String, Value> = f
                    .properties
                    .iter()
                    .map(|(k, v)| (k.clone(), json!(v)))
                    .collect();
                json!({
                    "type": "Feature",
                    "id": f.tower.as_str(),
                    "geometry": { "type": "Point", "coordinates": [f.lon, f.lat] },
                    "properties": props,
                })
            })
            .collect();
        json!({ "type": "FeatureCollection", "features": features })
    }

    pub fn from_json(value: &Value) -> std::result::Result<Self, String> {
        if value["type"] != "FeatureCollection" {
            return Err("not a FeatureCollection".into());
        }
        let features = value["features"].as_array().ok_or("missing features")?;
        let features = features
            .iter()
            .map(|f| {
                let tower = f["id"].as_str().ok_or("feature without id")?;
                let coords = f["geometry"]["coordinates"]
                    .as_array()
                    .ok_or("feature without coordinates")?;
                let num = |v: &Value| {
                    v.as_f64()
                        .ok_or_else(|| format!("non-numeric value in {tower}"))
                };
                if f["geometry"]["type"] != "Point" || coords.len() != 2 {
                    return Err(format!("feature {tower} is not a point"));
                }
                let properties = f["properties"]
                    .as_object()
                    .ok_or("feature without properties")?
                    .iter()
                    .map(|(k, v)| Ok((k.clone(), num(v)?)))
                    .collect::<std::result::Result<_, String>>()?;
                Ok(GeoFeature {
                    tower: tower.into(),
                    lon: num(&coords[0])?,
                    lat: num(&coords[1])?,
                    properties,
                })
            })
            .collect::<std::result::Result<_, String>>()?;
        Ok(GeoFeatureSet { features })
    }
}

pub fn export_geojson(
    indicators: &[RegionIndicator],
    diversity: &[TowerDiversity],
    towers: &TowerRegistry,
    path: &Path,
) -> Result<GeoFeatureSet> {
    let set = GeoFeatureSet::build(indicators, diversity, towers)?;
    write_json(path, &set.to_json())?;
    Ok(set)
}

pub fn read_geojson(path: &Path) -> Result<GeoFeatureSet> {
    let value: Value = read_json(path)?;
    GeoFeatureSet::from_json(&value).map_err(|m| Error::format(path, m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurchaseSummary {
    pub n_users: usize,
    pub n_users_with_cv: usize,
    pub n_purchases: usize,
    pub global_cv: f64,
    pub cfa_fraction_cv_le_0_62: f64,
    pub cfa_fraction_cv_le_1_00: f64,
    pub n_regions: usize,
    pub min_users: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub nodes: usize,
    pub edges: usize,
    pub total_weight: u64,
    pub n_flagged: usize,
    pub min_months: usize,
    pub avg_clustering: f64,
    pub avg_clustering_shuffled: f64,
    pub shuffle_seed: u64,
    pub swap_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunitySummary {
    pub n_communities: usize,
    pub modularity: f64,
    pub resolution: f64,
    pub seed: u64,
    pub levels: usize,
}

/// Every headline number of the analysis, recomputed on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cfa_fraction_cv_le_0_62: f64,
    pub cfa_fraction_cv_le_1_00: f64,
    pub global_cv: f64,
    pub graph_nodes: usize,
    pub graph_edges: usize,
    pub avg_clustering: f64,
    pub avg_clustering_shuffled: f64,
    pub n_communities: usize,
    pub modularity: f64,
    pub observed_weighted_cv: f64,
    pub baseline_weighted_cv: f64,
    pub baseline_std: f64,
}

impl Summary {
    pub fn assemble(
        purchases: &PurchaseSummary,
        graph: &GraphSummary,
        communities: &CommunitySummary,
        homophily: &crate::homophily::HomophilyResult,
    ) -> Self {
        Summary {
            cfa_fraction_cv_le_0_62: purchases.cfa_fraction_cv_le_0_62,
            cfa_fraction_cv_le_1_00: purchases.cfa_fraction_cv_le_1_00,
            global_cv: purchases.global_cv,
            graph_nodes: graph.nodes,
            graph_edges: graph.edges,
            avg_clustering: graph.avg_clustering,
            avg_clustering_shuffled: graph.avg_clustering_shuffled,
            n_communities: communities.n_communities,
            modularity: communities.modularity,
            observed_weighted_cv: homophily.observed_weighted_cv,
            baseline_weighted_cv: homophily.baseline_weighted_cv,
            baseline_std: homophily.baseline_std,
        }
    }
}

pub fn export_summary(summary: &Summary, path: &Path) -> Result<()> {
    write_json(path, summary)
}
