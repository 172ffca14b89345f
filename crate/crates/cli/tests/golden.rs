mod common;

use std::path::Path;

use common::{mini, mini_config, ok, p};
use olx_core::io::{read_json, write_json, write_prompt_list};
use olx_core::report::{RetrievalReport, SegmentationReport};
use olx_fixtures::compare::{retrieval_diff, segmentation_diff};
use olx_fixtures::{class_list, generate_fixture, oracle_reports, write_fixture};

const TOL: f64 = 1e-12;

fn bless(dir: &Path) {
    let fixture = generate_fixture(&mini_config()).unwrap();
    if dir.exists() {
        std::fs::remove_dir_all(dir).unwrap();
    }
    write_fixture(&fixture, dir).unwrap();
    write_prompt_list(&dir.join("classes.txt"), &class_list(&fixture).unwrap()).unwrap();
    let golden = oracle_reports(&fixture, false).unwrap();
    std::fs::create_dir_all(dir.join("golden")).unwrap();
    write_json(&dir.join("golden/segmentation.json"), &golden.segmentation).unwrap();
    write_json(&dir.join("golden/retrieval.json"), &golden.retrieval).unwrap();
}

#[test]
fn bundled_fixture_matches_oracle_golden() {
    let dir = mini();
    if std::env::var("OLX_BLESS").as_deref() == Ok("1") {
        bless(&dir);
    }
    let out = tempfile::tempdir().unwrap();
    ok(&[
        "eval-seg",
        "--data",
        p(&dir.join("data")),
        "--pred",
        p(&dir.join("predictions")),
        "--class-list",
        p(&dir.join("classes.txt")),
        "--out",
        p(out.path()),
    ]);
    ok(&[
        "eval-retrieval",
        "--data",
        p(&dir.join("data")),
        "--pred",
        p(&dir.join("predictions")),
        "--out",
        p(out.path()),
    ]);

    let got: SegmentationReport = read_json(&out.path().join("segmentation.json")).unwrap();
    let want: SegmentationReport = read_json(&dir.join("golden/segmentation.json")).unwrap();
    assert_eq!(got.scenes.len(), want.scenes.len());
    for (name, s) in &want.scenes {
        assert_eq!(segmentation_diff(&got.scenes[name], s, TOL), None, "{name}");
    }
    assert_eq!(segmentation_diff(&got.dataset, &want.dataset, TOL), None);
    assert_eq!(segmentation_diff(&got.dataset_pooled, &want.dataset_pooled, TOL), None);

    let got: RetrievalReport = read_json(&out.path().join("retrieval.json")).unwrap();
    let want: RetrievalReport = read_json(&dir.join("golden/retrieval.json")).unwrap();
    for (name, s) in &want.scenes {
        assert_eq!(retrieval_diff(&got.scenes[name], s, TOL), None, "{name}");
    }
    assert_eq!(retrieval_diff(&got.dataset, &want.dataset, TOL), None);
}

#[test]
fn bundled_fixture_is_reproducible_from_its_config() {
    if std::env::var("OLX_BLESS").as_deref() == Ok("1") {
        return; // the other test is rewriting the bundle
    }
    let fresh = tempfile::tempdir().unwrap();
    let fixture = generate_fixture(&mini_config()).unwrap();
    write_fixture(&fixture, fresh.path()).unwrap();
    for rel in [
        "data/prompt_list.txt",
        "data/embeddings.olxt",
        "data/scene000/points.ply",
        "data/scene001/labels.json",
        "predictions/scene000/dense_features.olxt",
        "predictions/scene001/instances.json",
        "expected_segmentation.json",
    ] {
        let a = std::fs::read(mini().join(rel)).unwrap();
        let b = std::fs::read(fresh.path().join(rel)).unwrap();
        assert!(a == b, "{rel} differs from a fresh generation");
    }
}
