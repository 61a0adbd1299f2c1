use std::fs;
use std::path::{Path, PathBuf};

use urbanlayout::fixture::synthetic_city;
use urbanlayout::pipeline::{run_pipeline, sha256_hex, PipelineConfig, Stage, StageStatus};

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic_city")
}

#[test]
fn bundled_fixture_matches_generator() {
    let city = synthetic_city().unwrap();
    assert_eq!(
        fs::read(bundled().join("features.geojson")).unwrap(),
        city.features_geojson
    );
    assert_eq!(fs::read(bundled().join("heights.rbt")).unwrap(), city.heights_rbt);
    assert_eq!(fs::read(bundled().join("config.json")).unwrap(), city.config_json);
}

#[test]
fn manifests_chain_stage_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = format!("out_dir={}", serde_json::json!(tmp.path().display().to_string()));
    let cfg = PipelineConfig::load(Some(&bundled().join("config.json")), &[out]).unwrap();
    let manifests = run_pipeline(&cfg).unwrap();
    assert_eq!(manifests.iter().map(|m| m.stage).collect::<Vec<_>>(), Stage::ALL);
    let mut produced = std::collections::BTreeMap::new();
    for m in &manifests {
        assert_eq!(m.status, StageStatus::Ok);
        assert_eq!(m.config_hash, cfg.content_hash());
        for (rel, hash) in &m.inputs {
            if let Some(h) = produced.get(rel) {
                assert_eq!(h, hash, "{rel} changed between stages");
            }
        }
        for (rel, hash) in &m.outputs {
            assert_eq!(&sha256_hex(&fs::read(tmp.path().join(rel)).unwrap()), hash);
            produced.insert(rel.clone(), hash.clone());
        }
    }
    let labels = manifests.iter().find(|m| m.stage == Stage::Label).unwrap();
    assert_eq!(labels.outputs.len(), 9);
}
