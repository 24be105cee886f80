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

//! End-to-end runs through the file-based stages and the binary.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use sha2::{Digest, Sha256};

use cdrwealth::cli::{self, artifact, PipelineConfig, Stage};
use cdrwealth::exporter::{
    self, CommunitySummary, GeoFeatureSet, GraphSummary, PurchaseSummary, Summary,
};
use cdrwealth::homophily::HomophilyResult;
use cdrwealth::{ingest, purchases, Error};

const SMALL: [(&str, &str); 8] = [
    ("n_blocks", "10"),
    ("block_size", "20"),
    ("n_towers", "25"),
    ("p_out", "0.005"),
    ("min_users", "3"),
    ("shuffles", "20"),
    ("service_numbers", "3"),
    ("seed", "11"),
];

fn small_config(dir: &Path) -> PipelineConfig {
    let pairs: Vec<(String, String)> = SMALL
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .chain([("out".to_string(), dir.display().to_string())])
        .collect();
    PipelineConfig::load(None, &pairs).unwrap()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != artifact::MANIFEST)
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn staged_run_matches_all() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ca, cb) = (small_config(a.path()), small_config(b.path()));
    cli::run(Stage::Generate, &ca).unwrap();
    cli::run(Stage::Generate, &cb).unwrap();
    for stage in [
        Stage::Validate,
        Stage::Stats,
        Stage::Graph,
        Stage::Communities,
        Stage::Homophily,
        Stage::Export,
    ] {
        cli::run(stage, &ca).unwrap();
    }
    let manifest = cli::run(Stage::All, &cb).unwrap();
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (name, bytes) in &fa {
        assert!(
            bytes == &fb[name],
            "{name} differs between staged and `all` runs"
        );
    }
    assert!(manifest.artifacts.contains_key(artifact::SUMMARY));
    assert!(!manifest.artifacts.contains_key("cdr.csv"));
}

#[test]
fn manifest_hashes_match_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    cli::run(Stage::Generate, &cfg).unwrap();
    let run = cli::run(Stage::All, &cfg).unwrap();
    let on_disk: cli::RunManifest = exporter::read_json(&cfg.out(artifact::MANIFEST)).unwrap();
    assert_eq!(on_disk, run);
    assert_eq!(run.command, "all");
    assert_eq!(run.config["seed"], "11");
    assert_eq!(run.config["louvain_seed"], "11");
    for (name, hash) in &run.artifacts {
        let bytes = std::fs::read(dir.path().join(name)).unwrap();
        assert_eq!(&hex::encode(Sha256::digest(&bytes)), hash, "{name}");
    }
}

#[test]
fn missing_upstream_artifacts_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    cli::run(Stage::Generate, &cfg).unwrap();
    for (stage, upstream) in [
        (Stage::Communities, "graph"),
        (Stage::Homophily, "communities"),
        (Stage::Export, "stats"),
    ] {
        match cli::run(stage, &cfg) {
            Err(e @ Error::MissingArtifact { .. }) => {
                assert!(
                    e.to_string().contains(&format!("run `{upstream}` first")),
                    "{e}"
                );
                assert_eq!(e.exit_code(), 1);
            }
            other => panic!("{stage}: expected a missing-artifact error, got {other:?}"),
        }
    }
    // nothing was written by the failed stages
    assert!(!cfg.out(artifact::COMMUNITIES).exists());
}

#[test]
fn summary_repeats_stage_outputs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    cli::run(Stage::Generate, &cfg).unwrap();
    cli::run(Stage::All, &cfg).unwrap();
    let first = std::fs::read(cfg.out(artifact::SUMMARY)).unwrap();
    cli::run(Stage::All, &cfg).unwrap();
    assert_eq!(first, std::fs::read(cfg.out(artifact::SUMMARY)).unwrap());

    let summary: Summary = exporter::read_json(&cfg.out(artifact::SUMMARY)).unwrap();
    let p: PurchaseSummary = exporter::read_json(&cfg.out(artifact::STATS)).unwrap();
    let g: GraphSummary = exporter::read_json(&cfg.out(artifact::GRAPH_STATS)).unwrap();
    let c: CommunitySummary = exporter::read_json(&cfg.out(artifact::COMMUNITY_STATS)).unwrap();
    let h: HomophilyResult = exporter::read_json(&cfg.out(artifact::HOMOPHILY)).unwrap();
    assert_eq!(summary, Summary::assemble(&p, &g, &c, &h));

    // pooled CV straight from the input file
    let topups = ingest::parse_topups(&cfg.topups_path(), &cfg.window().unwrap())
        .unwrap()
        .records;
    let x: Vec<f64> = topups.iter().map(|t| t.amount_minor as f64).collect();
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
    assert!((summary.global_cv - sd / mean).abs() < 1e-9);
    assert!(summary.avg_clustering > summary.avg_clustering_shuffled);
    assert_eq!(g.n_flagged, 3);
    assert!(summary.cfa_fraction_cv_le_0_62 <= summary.cfa_fraction_cv_le_1_00);
}

#[test]
fn geojson_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    cli::run(Stage::Generate, &cfg).unwrap();
    cli::run(Stage::All, &cfg).unwrap();

    let path = cfg.out(artifact::GEOJSON);
    let read = exporter::read_geojson(&path).unwrap();
    let towers = ingest::parse_towers(&cfg.towers_path()).unwrap();
    let indicators = exporter::read_indicators(&cfg.out(artifact::INDICATORS)).unwrap();
    let map = exporter::read_community_map(&cfg.out(artifact::COMMUNITY_MAP)).unwrap();
    assert_eq!(
        read,
        GeoFeatureSet::build(&indicators, &map, &towers).unwrap()
    );
    assert!(!read.features.is_empty());
    for f in &read.features {
        let t = towers.get(f.tower.as_str()).unwrap();
        assert_eq!((f.lat, f.lon), (t.lat, t.lon));
    }
    let raw: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(raw["type"], "FeatureCollection");
    assert_eq!(raw["features"][0]["geometry"]["type"], "Point");

    // every region indicator is at least min_users strong
    assert!(indicators.iter().all(|i| i.n_users >= cfg.min_users));
    let stats = exporter::read_user_stats(&cfg.out(artifact::USER_STATS)).unwrap();
    assert_eq!(
        stats.len(),
        purchases::user_stats(
            &ingest::parse_topups(&cfg.topups_path(), &cfg.window().unwrap())
                .unwrap()
                .records
        )
        .len()
    );
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cdrwealth"))
}

#[test]
fn binary_config_precedence_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    let mut text = String::from("# small run\n");
    for (k, v) in SMALL {
        text.push_str(&format!("{k} = {v}\n"));
    }
    std::fs::write(&conf, text).unwrap();
    let out = dir.path().join("out");

    let ok = |args: &[&str]| {
        let o = bin()
            .args(args)
            .arg("--config")
            .arg(&conf)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    ok(&["generate"]);

    let o = bin()
        .args(["communities", "--config"])
        .arg(&conf)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run `graph` first"));

    ok(&[
        "all",
        "--seed",
        "12",
        "--resolution",
        "1.5",
        "--shuffles",
        "10",
    ]);
    let manifest: cli::RunManifest = exporter::read_json(&out.join(artifact::MANIFEST)).unwrap();
    assert_eq!(manifest.config["seed"], "12");
    assert_eq!(manifest.config["resolution"], "1.5");
    assert_eq!(manifest.config["shuffles"], "10");
    assert_eq!(manifest.config["n_blocks"], "10");

    for bad in [
        &["all", "--resolution", "0"][..],
        &["all", "--set", "bogus=1"],
        &["all", "--min-months", "9"],
    ] {
        let o = bin()
            .args(bad)
            .arg("--config")
            .arg(&conf)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(1), "{bad:?}");
    }
}

#[test]
fn corrupt_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    cli::run(Stage::Generate, &cfg).unwrap();
    std::fs::write(cfg.cdr_path(), "not,a,cdr,file\n1,2,3,4\n").unwrap();
    assert!(matches!(
        cli::run(Stage::Validate, &cfg),
        Err(Error::Header { .. })
    ));
    assert!(!cfg.out(artifact::REJECTIONS_CDR).exists());
}

#[test]
fn every_artifact_reparses_under_its_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    cli::run(Stage::Generate, &cfg).unwrap();
    cli::run(Stage::All, &cfg).unwrap();
    let out = |a: &str| cfg.out(a);

    let window = cfg.window().unwrap();
    assert_eq!(
        ingest::parse_cdr(&cfg.cdr_path(), &window)
            .unwrap()
            .report
            .rejected(),
        0
    );
    assert_eq!(
        ingest::parse_topups(&cfg.topups_path(), &window)
            .unwrap()
            .report
            .rejected(),
        0
    );
    let towers = ingest::parse_towers(&cfg.towers_path()).unwrap();
    let truth = exporter::read_ground_truth(&out(artifact::GROUND_TRUTH)).unwrap();
    assert_eq!(truth.len(), 200);
    exporter::read_user_stats(&out(artifact::USER_STATS)).unwrap();
    exporter::read_home_towers(&out(artifact::HOME_TOWERS)).unwrap();
    let indicators = exporter::read_indicators(&out(artifact::INDICATORS)).unwrap();
    let flagged = exporter::read_flagged(&out(artifact::FLAGGED)).unwrap();
    assert_eq!(flagged.flagged.len(), 3);
    let graph = exporter::read_graph(&out(artifact::GRAPH)).unwrap();
    let communities = exporter::read_communities(&out(artifact::COMMUNITIES)).unwrap();
    assert_eq!(
        communities.iter().map(Vec::len).sum::<usize>(),
        graph.node_count()
    );
    let map = exporter::read_community_map(&out(artifact::COMMUNITY_MAP)).unwrap();
    let _: PurchaseSummary = exporter::read_json(&out(artifact::STATS)).unwrap();
    let _: GraphSummary = exporter::read_json(&out(artifact::GRAPH_STATS)).unwrap();
    let _: CommunitySummary = exporter::read_json(&out(artifact::COMMUNITY_STATS)).unwrap();
    let _: HomophilyResult = exporter::read_json(&out(artifact::HOMOPHILY)).unwrap();
    let _: Summary = exporter::read_json(&out(artifact::SUMMARY)).unwrap();
    let geo = exporter::read_geojson(&out(artifact::GEOJSON)).unwrap();

    // one feature per tower with at least one defined indicator
    let mut carrying: Vec<&str> = indicators.iter().map(|i| i.tower.as_str()).collect();
    carrying.extend(map.iter().map(|d| d.tower.as_str()));
    carrying.sort_unstable();
    carrying.dedup();
    assert_eq!(geo.features.len(), carrying.len());
    assert!(carrying.iter().all(|t| towers.get(t).is_some()));

    for text_file in [artifact::REJECTIONS_CDR, artifact::REJECTIONS_TOPUP] {
        let text = std::fs::read_to_string(out(text_file)).unwrap();
        assert!(text.starts_with("reason,count\n") && text.contains("\ntotal,"));
    }
    let cfa = std::fs::read_to_string(out(artifact::CFA)).unwrap();
    assert!(cfa.starts_with("cv,cumulative_fraction\n"));
}

#[test]
fn a_run_is_reproducible_from_its_manifest() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = small_config(a.path());
    cli::run(Stage::Generate, &cfg).unwrap();
    let first = cli::run(Stage::All, &cfg).unwrap();

    // replay the echoed config into a fresh directory, inputs regenerated
    let replay: Vec<(String, String)> = first
        .config
        .iter()
        .filter(|(k, _)| !matches!(k.as_str(), "out" | "cdr" | "topups" | "towers"))
        .map(|(k, v)| (k.clone(), v.clone()))
        .chain([("out".to_string(), b.path().display().to_string())])
        .collect();
    let cfg2 = PipelineConfig::load(None, &replay).unwrap();
    cli::run(Stage::Generate, &cfg2).unwrap();
    let second = cli::run(Stage::All, &cfg2).unwrap();
    assert_eq!(first.artifacts, second.artifacts);
}
