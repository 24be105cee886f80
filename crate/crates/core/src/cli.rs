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

//! Pipeline orchestration.
//!
//! Every stage reads its inputs from files and writes its products to the
//! output directory, so stages can be re-run independently and a staged run
//! produces the same bytes as `all`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::communities::{louvain_traced, LouvainOptions, Phase, Resolution};
use crate::error::{Error, Result};
use crate::exporter::{self, CommunitySummary, GraphSummary, PurchaseSummary, Summary};
use crate::homophily::{self, HomophilyResult};
use crate::ingest::{self, ObservationWindow, YearMonth};
use crate::purchases;
use crate::socialgraph::{self, ServiceFilter};
use crate::synthgen::{self, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Stage {
    Generate,
    Validate,
    Stats,
    Graph,
    Communities,
    Homophily,
    Export,
    All,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Validate => "validate",
            Stage::Stats => "stats",
            Stage::Graph => "graph",
            Stage::Communities => "communities",
            Stage::Homophily => "homophily",
            Stage::Export => "export",
            Stage::All => "all",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub mod artifact {
    pub const GROUND_TRUTH: &str = "ground_truth.csv";
    pub const REJECTIONS_CDR: &str = "rejections_cdr.txt";
    pub const REJECTIONS_TOPUP: &str = "rejections_topup.txt";
    pub const USER_STATS: &str = "user_stats.csv";
    pub const HOME_TOWERS: &str = "home_towers.csv";
    pub const CFA: &str = "cfa.csv";
    pub const INDICATORS: &str = "indicators.csv";
    pub const STATS: &str = "stats.json";
    pub const FLAGGED: &str = "flagged.csv";
    pub const GRAPH: &str = "graph.csv";
    pub const GRAPH_STATS: &str = "graph.json";
    pub const COMMUNITIES: &str = "communities.csv";
    pub const COMMUNITY_STATS: &str = "communities.json";
    pub const COMMUNITY_WEALTH: &str = "community_stats.csv";
    pub const HOMOPHILY: &str = "homophily.json";
    pub const COMMUNITY_MAP: &str = "community_map.csv";
    pub const GEOJSON: &str = "indicators.geojson";
    pub const SUMMARY: &str = "summary.json";
    pub const MANIFEST: &str = "manifest.json";
}

/// Resolved configuration for one run. Built from defaults, then a flat
/// `key = value` file, then command-line overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub out_dir: PathBuf,
    pub cdr: Option<PathBuf>,
    pub topups: Option<PathBuf>,
    pub towers: Option<PathBuf>,
    pub window_start: YearMonth,
    pub window_months: usize,
    /// Defaults to every month of the window.
    pub min_months: Option<usize>,
    pub max_contacts: usize,
    pub asymmetry: f64,
    pub activity_floor: u64,
    pub min_users: usize,
    pub resolution: f64,
    pub seed: u64,
    pub louvain_seed: Option<u64>,
    pub graph_shuffle_seed: Option<u64>,
    pub homophily_seed: Option<u64>,
    pub shuffles: usize,
    pub swap_factor: f64,
    pub synth: SynthParams,
}

/// Generator knobs exposed through the configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub n_blocks: usize,
    pub block_size: usize,
    pub n_towers: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub income_min: u64,
    pub income_max: u64,
    pub homophily: f64,
    pub purchase_cv: f64,
    pub purchases_per_month: f64,
    pub roaming: f64,
    pub service_numbers: usize,
    pub service_contacts: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            out_dir: PathBuf::from("out"),
            cdr: None,
            topups: None,
            towers: None,
            window_start: YearMonth {
                year: 2012,
                month: 1,
            },
            window_months: 3,
            min_months: None,
            max_contacts: 1000,
            asymmetry: 0.9,
            activity_floor: 100,
            min_users: purchases::DEFAULT_MIN_USERS,
            resolution: 1.0,
            seed: 1,
            louvain_seed: None,
            graph_shuffle_seed: None,
            homophily_seed: None,
            shuffles: homophily::DEFAULT_SHUFFLES,
            swap_factor: socialgraph::DEFAULT_SWAP_FACTOR,
            synth: SynthParams {
                n_blocks: 40,
                block_size: 25,
                n_towers: 100,
                p_in: 0.3,
                p_out: 0.002,
                income_min: 100,
                income_max: 5000,
                homophily: 1.0,
                purchase_cv: 0.5,
                purchases_per_month: 4.0,
                roaming: 0.1,
                service_numbers: 5,
                service_contacts: 150,
            },
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

impl PipelineConfig {
    /// Defaults, then `file`, then `overrides` in order.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (key, value) in parse_flat(&text)? {
                cfg.set(&key, &value)?;
            }
        }
        for (key, value) in overrides {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.synth;
        match key {
            "out" => self.out_dir = PathBuf::from(value),
            "cdr" => self.cdr = Some(PathBuf::from(value)),
            "topups" => self.topups = Some(PathBuf::from(value)),
            "towers" => self.towers = Some(PathBuf::from(value)),
            "window_start" => {
                self.window_start =
                    YearMonth::parse(value).map_err(|e| Error::Config(e.to_string()))?
            }
            "window_months" => self.window_months = parse_value(key, value)?,
            "min_months" => self.min_months = Some(parse_value(key, value)?),
            "max_contacts" => self.max_contacts = parse_value(key, value)?,
            "asymmetry" => self.asymmetry = parse_value(key, value)?,
            "activity_floor" => self.activity_floor = parse_value(key, value)?,
            "min_users" => self.min_users = parse_value(key, value)?,
            "resolution" => self.resolution = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "louvain_seed" => self.louvain_seed = Some(parse_value(key, value)?),
            "graph_shuffle_seed" => self.graph_shuffle_seed = Some(parse_value(key, value)?),
            "homophily_seed" => self.homophily_seed = Some(parse_value(key, value)?),
            "shuffles" => self.shuffles = parse_value(key, value)?,
            "swap_factor" => self.swap_factor = parse_value(key, value)?,
            "n_blocks" => s.n_blocks = parse_value(key, value)?,
            "block_size" => s.block_size = parse_value(key, value)?,
            "n_towers" => s.n_towers = parse_value(key, value)?,
            "p_in" => s.p_in = parse_value(key, value)?,
            "p_out" => s.p_out = parse_value(key, value)?,
            "income_min" => s.income_min = parse_value(key, value)?,
            "income_max" => s.income_max = parse_value(key, value)?,
            "homophily" => s.homophily = parse_value(key, value)?,
            "purchase_cv" => s.purchase_cv = parse_value(key, value)?,
            "purchases_per_month" => s.purchases_per_month = parse_value(key, value)?,
            "roaming" => s.roaming = parse_value(key, value)?,
            "service_numbers" => s.service_numbers = parse_value(key, value)?,
            "service_contacts" => s.service_contacts = parse_value(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        let window = self.window()?;
        let min_months = self.min_months();
        if min_months == 0 || min_months > window.n_months() {
            return bad("min_months must lie between 1 and window_months");
        }
        if self.max_contacts == 0 {
            return bad("max_contacts must be positive");
        }
        if !(self.asymmetry > 0.0 && self.asymmetry <= 1.0) {
            return bad("asymmetry must lie in (0, 1]");
        }
        if self.min_users == 0 {
            return bad("min_users must be at least 1");
        }
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return bad("resolution must be positive");
        }
        if self.shuffles == 0 {
            return bad("shuffles must be at least 1");
        }
        if !(self.swap_factor.is_finite() && self.swap_factor >= 0.0) {
            return bad("swap_factor must be non-negative");
        }
        if self.synth.income_min == 0 || self.synth.income_min > self.synth.income_max {
            return bad("need 0 < income_min <= income_max");
        }
        let paths = [self.cdr_path(), self.topups_path(), self.towers_path()];
        if paths[0] == paths[1] || paths[0] == paths[2] || paths[1] == paths[2] {
            return bad("cdr, topups and towers must be distinct files");
        }
        let outputs: Vec<PathBuf> = [
            artifact::GROUND_TRUTH,
            artifact::GRAPH,
            artifact::INDICATORS,
            artifact::COMMUNITIES,
            artifact::MANIFEST,
        ]
        .iter()
        .map(|a| self.out(a))
        .collect();
        if paths.iter().any(|p| outputs.contains(p)) {
            return bad("an input path collides with an output artifact");
        }
        Ok(())
    }

    pub fn window(&self) -> Result<ObservationWindow> {
        ObservationWindow::from_months(self.window_start, self.window_months)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn min_months(&self) -> usize {
        self.min_months.unwrap_or(self.window_months)
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn cdr_path(&self) -> PathBuf {
        self.cdr.clone().unwrap_or_else(|| self.out("cdr.csv"))
    }

    pub fn topups_path(&self) -> PathBuf {
        self.topups.clone().unwrap_or_else(|| self.out("topup.csv"))
    }

    pub fn towers_path(&self) -> PathBuf {
        self.towers
            .clone()
            .unwrap_or_else(|| self.out("towers.csv"))
    }

    pub fn louvain_seed(&self) -> u64 {
        self.louvain_seed.unwrap_or(self.seed)
    }

    pub fn graph_shuffle_seed(&self) -> u64 {
        self.graph_shuffle_seed.unwrap_or(self.seed)
    }

    pub fn homophily_seed(&self) -> u64 {
        self.homophily_seed.unwrap_or(self.seed)
    }

    pub fn service_filter(&self) -> ServiceFilter {
        ServiceFilter {
            max_contacts: self.max_contacts,
            asymmetry_cutoff: self.asymmetry,
            activity_floor: self.activity_floor,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        let s = &self.synth;
        SynthConfig {
            n_towers: s.n_towers,
            n_months: self.window_months,
            first_month: self.window_start,
            p_in: s.p_in,
            p_out: s.p_out,
            homophily_strength: s.homophily,
            purchase_cv: s.purchase_cv,
            purchases_per_month: s.purchases_per_month,
            roaming_fraction: s.roaming,
            n_service_numbers: s.service_numbers,
            service_contacts: s.service_contacts,
            ..SynthConfig::planted(
                self.seed,
                s.n_blocks,
                s.block_size,
                s.income_min,
                s.income_max,
            )
        }
    }

    /// Every resolved setting, with derived seeds made explicit.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let s = &self.synth;
        let path = |p: PathBuf| p.display().to_string();
        [
            ("out", path(self.out_dir.clone())),
            ("cdr", path(self.cdr_path())),
            ("topups", path(self.topups_path())),
            ("towers", path(self.towers_path())),
            ("window_start", self.window_start.to_string()),
            ("window_months", self.window_months.to_string()),
            ("min_months", self.min_months().to_string()),
            ("max_contacts", self.max_contacts.to_string()),
            ("asymmetry", self.asymmetry.to_string()),
            ("activity_floor", self.activity_floor.to_string()),
            ("min_users", self.min_users.to_string()),
            ("resolution", self.resolution.to_string()),
            ("seed", self.seed.to_string()),
            ("louvain_seed", self.louvain_seed().to_string()),
            ("graph_shuffle_seed", self.graph_shuffle_seed().to_string()),
            ("homophily_seed", self.homophily_seed().to_string()),
            ("shuffles", self.shuffles.to_string()),
            ("swap_factor", self.swap_factor.to_string()),
            ("n_blocks", s.n_blocks.to_string()),
            ("block_size", s.block_size.to_string()),
            ("n_towers", s.n_towers.to_string()),
            ("p_in", s.p_in.to_string()),
            ("p_out", s.p_out.to_string()),
            ("income_min", s.income_min.to_string()),
            ("income_max", s.income_max.to_string()),
            ("homophily", s.homophily.to_string()),
            ("purchase_cv", s.purchase_cv.to_string()),
            ("purchases_per_month", s.purchases_per_month.to_string()),
            ("roaming", s.roaming.to_string()),
            ("service_numbers", s.service_numbers.to_string()),
            ("service_contacts", s.service_contacts.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v))
        .collect()
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_flat(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        out.push((key.to_owned(), value.to_owned()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub started_at: String,
    pub finished_at: String,
    pub config: BTreeMap<String, String>,
    /// sha256 of every artifact written by the run, by file name.
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn require(path: PathBuf, stage: &'static str) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact { path, stage })
    }
}

/// Runs `stage` and writes `manifest.json` into the output directory.
pub fn run(stage: Stage, cfg: &PipelineConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let started_at = Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true);
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;

    let written = match stage {
        Stage::Generate => generate(cfg)?,
        Stage::Validate => validate(cfg)?,
        Stage::Stats => stats(cfg)?,
        Stage::Graph => graph(cfg)?,
        Stage::Communities => communities(cfg)?,
        Stage::Homophily => homophily_stage(cfg)?,
        Stage::Export => export(cfg)?,
        Stage::All => {
            let mut all = validate(cfg)?;
            all.extend(stats(cfg)?);
            all.extend(graph(cfg)?);
            all.extend(communities(cfg)?);
            all.extend(homophily_stage(cfg)?);
            all.extend(export(cfg)?);
            all
        }
    };

    let mut artifacts = BTreeMap::new();
    for path in written {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        artifacts.insert(name, sha256_file(&path)?);
    }
    let manifest = RunManifest {
        command: stage.name().to_owned(),
        started_at,
        finished_at: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
        config: cfg.echo(),
        artifacts,
    };
    exporter::write_json(&cfg.out(artifact::MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn generate(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let data = synthgen::generate(&cfg.synth_config())?;
    for w in &data.warnings {
        eprintln!("warning: {w}");
    }
    let (cdr, topups, towers, truth) = (
        cfg.cdr_path(),
        cfg.topups_path(),
        cfg.towers_path(),
        cfg.out(artifact::GROUND_TRUTH),
    );
    exporter::write_cdr(&cdr, &data.cdr)?;
    exporter::write_topups(&topups, &data.topups)?;
    exporter::write_towers(&towers, &data.towers)?;
    exporter::write_ground_truth(&truth, &data.truth)?;
    Ok(vec![cdr, topups, towers, truth])
}

pub fn validate(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let window = cfg.window()?;
    let cdr = ingest::parse_cdr(&cfg.cdr_path(), &window)?;
    let topups = ingest::parse_topups(&cfg.topups_path(), &window)?;
    ingest::parse_towers(&cfg.towers_path())?;
    let (rc, rt) = (
        cfg.out(artifact::REJECTIONS_CDR),
        cfg.out(artifact::REJECTIONS_TOPUP),
    );
    exporter::write_rejections(&rc, &cdr.report)?;
    exporter::write_rejections(&rt, &topups.report)?;
    Ok(vec![rc, rt])
}

pub fn stats(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let window = cfg.window()?;
    let topups = ingest::parse_topups(&cfg.topups_path(), &window)?.records;
    let cdr = ingest::parse_cdr(&cfg.cdr_path(), &window)?.records;
    let towers = ingest::parse_towers(&cfg.towers_path())?;

    let stats = purchases::user_stats(&topups);
    let home = homophily::home_towers(&cdr);
    if let Some((user, tower)) = home.iter().find(|(_, t)| towers.get(t.as_str()).is_none()) {
        return Err(Error::InvalidInput(format!(
            "home tower {tower} of {user} is not in the tower registry"
        )));
    }
    let cvs: Vec<f64> = stats.iter().filter_map(|s| s.cv).collect();
    let curve = purchases::cfa(&cvs)?;
    let amounts: Vec<u64> = topups.iter().map(|t| t.amount_minor).collect();
    let indicators = purchases::region_indicators(&stats, &home, cfg.min_users)?;

    let summary = PurchaseSummary {
        n_users: stats.len(),
        n_users_with_cv: cvs.len(),
        n_purchases: topups.len(),
        global_cv: purchases::global_cv(&amounts)?,
        cfa_fraction_cv_le_0_62: curve.fraction_at(0.62),
        cfa_fraction_cv_le_1_00: curve.fraction_at(1.0),
        n_regions: indicators.len(),
        min_users: cfg.min_users,
    };
    let out = [
        artifact::USER_STATS,
        artifact::HOME_TOWERS,
        artifact::CFA,
        artifact::INDICATORS,
        artifact::STATS,
    ]
    .map(|a| cfg.out(a));
    exporter::write_user_stats(&out[0], &stats)?;
    exporter::write_home_towers(&out[1], &home)?;
    exporter::write_cfa(&out[2], &curve)?;
    exporter::write_indicators(&out[3], &indicators)?;
    exporter::write_json(&out[4], &summary)?;
    Ok(out.to_vec())
}

pub fn graph(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let window = cfg.window()?;
    let cdr = ingest::parse_cdr(&cfg.cdr_path(), &window)?.records;
    let flagged = socialgraph::flag_service_numbers(&cdr, &cfg.service_filter())?;
    let kept = socialgraph::remove_flagged(&cdr, &flagged);
    let g = socialgraph::build_graph(&kept, &window, cfg.min_months())?;
    let clustering = socialgraph::avg_local_clustering(&g)?;
    let shuffled =
        socialgraph::degree_preserving_shuffle(&g, cfg.graph_shuffle_seed(), cfg.swap_factor)?;
    if shuffled.degree_sequence() != g.degree_sequence() {
        return Err(Error::Invariant(
            "shuffle changed the degree sequence".into(),
        ));
    }
    let summary = GraphSummary {
        nodes: g.node_count(),
        edges: g.edge_count(),
        total_weight: g.total_weight(),
        n_flagged: flagged.flagged.len(),
        min_months: cfg.min_months(),
        avg_clustering: clustering,
        avg_clustering_shuffled: socialgraph::avg_local_clustering(&shuffled)?,
        shuffle_seed: cfg.graph_shuffle_seed(),
        swap_factor: cfg.swap_factor,
    };
    let out = [artifact::FLAGGED, artifact::GRAPH, artifact::GRAPH_STATS].map(|a| cfg.out(a));
    exporter::write_flagged(&out[0], &flagged)?;
    exporter::write_graph(&out[1], &g)?;
    exporter::write_json(&out[2], &summary)?;
    Ok(out.to_vec())
}

pub fn communities(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let g = exporter::read_graph(&require(cfg.out(artifact::GRAPH), "graph")?)?;
    let resolution = Resolution::new(cfg.resolution).map_err(|e| Error::Config(e.to_string()))?;
    let run = louvain_traced(&g, &LouvainOptions::new(resolution, cfg.louvain_seed()))?;
    let members = homophily::members_by_community(&g, &run.partition);
    let summary = CommunitySummary {
        n_communities: run.partition.n_communities(),
        modularity: run.modularity,
        resolution: cfg.resolution,
        seed: cfg.louvain_seed(),
        levels: run
            .phases
            .iter()
            .filter(|p| p.phase == Phase::LocalMoves)
            .count(),
    };
    let out = [artifact::COMMUNITIES, artifact::COMMUNITY_STATS].map(|a| cfg.out(a));
    exporter::write_communities(&out[0], &members)?;
    exporter::write_json(&out[1], &summary)?;
    Ok(out.to_vec())
}

pub fn homophily_stage(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let members =
        exporter::read_communities(&require(cfg.out(artifact::COMMUNITIES), "communities")?)?;
    let stats = exporter::read_user_stats(&require(cfg.out(artifact::USER_STATS), "stats")?)?;
    let home = exporter::read_home_towers(&require(cfg.out(artifact::HOME_TOWERS), "stats")?)?;
    let towers = ingest::parse_towers(&cfg.towers_path())?;

    let wealth = homophily::community_wealth_stats(&members, &stats, &home, &towers)?;
    let result: HomophilyResult =
        homophily::shuffled_baseline(&members, &stats, cfg.shuffles, cfg.homophily_seed())?;
    let map = homophily::map_community_diversity(&wealth, &towers)?;

    let out = [
        artifact::HOMOPHILY,
        artifact::COMMUNITY_MAP,
        artifact::COMMUNITY_WEALTH,
    ]
    .map(|a| cfg.out(a));
    exporter::write_json(&out[0], &result)?;
    exporter::write_community_map(&out[1], &map)?;
    exporter::write_community_wealth(&out[2], &wealth)?;
    Ok(out.to_vec())
}

pub fn export(cfg: &PipelineConfig) -> Result<Vec<PathBuf>> {
    let indicators = exporter::read_indicators(&require(cfg.out(artifact::INDICATORS), "stats")?)?;
    let purchases: PurchaseSummary =
        exporter::read_json(&require(cfg.out(artifact::STATS), "stats")?)?;
    let graph: GraphSummary =
        exporter::read_json(&require(cfg.out(artifact::GRAPH_STATS), "graph")?)?;
    let comms: CommunitySummary =
        exporter::read_json(&require(cfg.out(artifact::COMMUNITY_STATS), "communities")?)?;
    let homophily: HomophilyResult =
        exporter::read_json(&require(cfg.out(artifact::HOMOPHILY), "homophily")?)?;
    let map =
        exporter::read_community_map(&require(cfg.out(artifact::COMMUNITY_MAP), "homophily")?)?;
    let towers = ingest::parse_towers(&cfg.towers_path())?;

    let out = [artifact::GEOJSON, artifact::SUMMARY].map(|a| cfg.out(a));
    exporter::export_geojson(&indicators, &map, &towers, &out[0])?;
    exporter::export_summary(
        &Summary::assemble(&purchases, &graph, &comms, &homophily),
        &out[1],
    )?;
    Ok(out.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_config_parsing() {
        let pairs = parse_flat("# comment\nseed = 7\n\n resolution=2.5 # trailing\n").unwrap();
        assert_eq!(
            pairs,
            vec![
                ("seed".into(), "7".into()),
                ("resolution".into(), "2.5".into())
            ]
        );
        assert!(parse_flat("seed 7").is_err());
    }

    #[test]
    fn overrides_win_and_unknown_keys_fail() {
        let mut cfg = PipelineConfig::default();
        cfg.set("seed", "9").unwrap();
        assert_eq!(
            (cfg.seed, cfg.louvain_seed(), cfg.homophily_seed()),
            (9, 9, 9)
        );
        cfg.set("louvain_seed", "3").unwrap();
        assert_eq!(cfg.louvain_seed(), 3);
        assert!(cfg.set("nope", "1").is_err());
        assert!(cfg.set("seed", "x").is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let with = |k: &str, v: &str| {
            let mut c = PipelineConfig::default();
            c.set(k, v).unwrap();
            c.validate()
        };
        assert!(with("resolution", "0").is_err());
        assert!(with("asymmetry", "1.5").is_err());
        assert!(with("min_months", "4").is_err());
        assert!(with("min_users", "0").is_err());
        assert!(with("shuffles", "0").is_err());
        assert!(with("topups", "out/cdr.csv").is_err());
        assert!(with("cdr", "out/graph.csv").is_err());
        assert!(PipelineConfig::default().validate().is_ok());
    }
}
