mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{mini, ok, olx, p};
use olx_core::io::{self, read_json};
use olx_core::labels::CategoryLabelSet;
use olx_core::report::{RetrievalReport, SegmentationReport};
use olx_core::scene::{GroundTruthScene, InstanceId};
use olx_core::stats::{label_stats, LabelStats};
use olx_fixtures::{generate_fixture, write_fixture, FixtureConfig};

fn data() -> String {
    p(&mini().join("data")).to_string()
}

fn pred() -> String {
    p(&mini().join("predictions")).to_string()
}

#[test]
fn top_n_values_give_one_frequency_block_each() {
    let out = ok(&["eval-seg", "--data", &data(), "--pred", &pred(), "--top-n", "1,5,10"]);
    let r: SegmentationReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r.n_values, vec![1, 5, 10]);
    for s in r.scenes.values() {
        assert_eq!(s.frequencies.keys().copied().collect::<Vec<_>>(), vec![1, 5, 10]);
        for f in s.frequencies.values() {
            assert!((f.sum() - 1.0).abs() < 1e-9);
        }
    }
    let out = ok(&["eval-seg", "--data", &data(), "--pred", &pred(), "--top-n", "3"]);
    let r: SegmentationReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r.dataset.frequencies.len(), 1);
}

#[test]
fn csv_has_one_row_per_scene_metric() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["eval-seg", "--data", &data(), "--pred", &pred(), "--out", p(dir.path()), "--format", "both"]);
    let r: SegmentationReport = read_json(&dir.path().join("segmentation.json")).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("segmentation.csv")).unwrap();
    let metrics = r.dataset.metrics().len();
    // header, then every scene plus the two dataset aggregates
    assert_eq!(csv.lines().count(), 1 + (r.scenes.len() + 2) * metrics);
    assert!(!csv.contains("NaN"));
}

#[test]
fn object_mode_segmentation_runs() {
    let out = ok(&["eval-seg", "--data", &data(), "--pred", &pred(), "--mode", "object"]);
    let r: SegmentationReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r.scenes.len(), 2);
}

#[test]
fn missing_embeddings_exit_two_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = generate_fixture(&FixtureConfig::default()).unwrap();
    let paths = write_fixture(&fixture, dir.path()).unwrap();
    let emb = paths.data.join(io::EMBEDDINGS_FILE);
    std::fs::remove_file(&emb).unwrap();
    let out = olx(&["eval-seg", "--data", p(&paths.data), "--pred", p(&paths.predictions)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(p(&emb)), "{err}");
    let diag: serde_json::Value = serde_json::from_str(err.lines().last().unwrap()).unwrap();
    assert_eq!(diag["error"], "io");
    assert_eq!(diag["exit_code"], 2);
}

#[test]
fn metric_errors_exit_one() {
    // N beyond the prompt list
    let out = olx(&["eval-seg", "--data", &data(), "--pred", &pred(), "--top-n", "100000"]);
    assert_eq!(out.status.code(), Some(1));
    // retrieval on dense-only predictions
    let dir = tempfile::tempdir().unwrap();
    let paths = write_fixture(&generate_fixture(&FixtureConfig::default()).unwrap(), dir.path()).unwrap();
    std::fs::remove_file(paths.predictions.join("scene000").join(io::OBJECT_MANIFEST)).unwrap();
    let out = olx(&["eval-retrieval", "--data", p(&paths.data), "--pred", p(&paths.predictions)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("object-level"));
}

#[test]
fn perfect_retrieval_fixture_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["fixtures", "generate", "--seed", "5", "--out", p(dir.path()), "--scenes", "2"]);
    let (d, pr) = (dir.path().join("data"), dir.path().join("predictions"));
    for extra in [&[][..], &["--nms", "0.5"][..], &["--pooled"][..]] {
        let mut args = vec!["eval-retrieval", "--data", p(&d), "--pred", p(&pr)];
        args.extend_from_slice(extra);
        let r: RetrievalReport = serde_json::from_slice(&ok(&args).stdout).unwrap();
        let o = r.dataset.overall.unwrap();
        assert_eq!((o.map, o.ap50, o.ap25), (1.0, 1.0, 1.0), "{extra:?}");
    }
}

#[test]
fn kind_filter_restricts_queries() {
    let all: RetrievalReport = serde_json::from_slice(&ok(&["eval-retrieval", "--data", &data(), "--pred", &pred()]).stdout).unwrap();
    let s: RetrievalReport =
        serde_json::from_slice(&ok(&["eval-retrieval", "--data", &data(), "--pred", &pred(), "--kind", "S"]).stdout).unwrap();
    assert!(s.dataset.queries < all.dataset.queries);
    assert_eq!(s.dataset.by_kind["S+D"], None);
    assert_eq!(s.dataset.overall, all.dataset.by_kind["S"].clone().map(|mut a| {
        a.queries = s.dataset.overall.as_ref().unwrap().queries;
        a
    }));
}

#[test]
fn queries_two_per_object_with_one_synonym_and_one_depiction() {
    let cfg = FixtureConfig {
        synonyms: 1,
        depictions: 1,
        objects: 6,
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let paths = write_fixture(&generate_fixture(&cfg).unwrap(), dir.path()).unwrap();
    let out = ok(&["queries", "--data", p(&paths.data)]);
    let counts: BTreeMap<String, BTreeMap<String, usize>> = serde_json::from_slice(&out.stdout).unwrap();
    let c = &counts["scene000"];
    assert_eq!(c["S"] + c["S+D"], 2 * 6);
    ok(&["queries", "--data", p(&paths.data), "--write"]);
    let q = io::read_queries(&paths.data.join("scene000").join(io::QUERIES_FILE)).unwrap();
    assert_eq!(q.len(), 12);
}

#[test]
fn stats_match_label_stats() {
    let out = ok(&["stats", "--data", &data()]);
    let stats: BTreeMap<String, LabelStats> = serde_json::from_slice(&out.stdout).unwrap();
    for (name, s) in &stats {
        let scene = io::load_ground_truth(&mini().join("data").join(name)).unwrap();
        assert_eq!(*s, label_stats(&scene));
    }
    assert_eq!(stats.len(), 2);
}

fn cube(origin: [f64; 3], side: f64) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                out.push([origin[0] + side * i as f64 / 3.0, origin[1] + side * j as f64 / 3.0, origin[2] + side * k as f64 / 3.0]);
            }
        }
    }
    out
}

#[test]
fn clutter_is_symmetric_and_written_back() {
    let dir = tempfile::tempdir().unwrap();
    let sdir = dir.path().join("room");
    let mut points = Vec::new();
    let mut ids = Vec::new();
    let mut labels = BTreeMap::new();
    for (k, o) in [[0.0, 0.0, 0.0], [0.5, 0.2, 0.0], [5.0, 5.0, 0.0], [5.8, 5.0, 0.0]].iter().enumerate() {
        let c = cube(*o, 1.0);
        ids.extend(std::iter::repeat_n(InstanceId(k as u32), c.len()));
        points.extend(c);
        labels.insert(
            InstanceId(k as u32),
            CategoryLabelSet {
                synonyms: [format!("thing {k}")].into(),
                ..Default::default()
            },
        );
    }
    let scene = GroundTruthScene::new("room", points, ids, labels, BTreeSet::new()).unwrap();
    io::save_ground_truth(&sdir, &scene).unwrap();
    let out = ok(&["clutter", "--data", p(&sdir), "--write"]);
    let map: BTreeMap<String, BTreeMap<String, Vec<u32>>> = serde_json::from_slice(&out.stdout).unwrap();
    let m = &map["room"];
    for (id, ns) in m {
        for n in ns {
            assert!(m[&n.to_string()].contains(&id.parse().unwrap()), "{id} -> {n}");
        }
    }
    assert_eq!(m["0"], vec![1]);
    assert_eq!(m["2"], vec![3]);
    let reloaded = io::load_ground_truth(&sdir).unwrap();
    assert_eq!(reloaded.labels()[&InstanceId(1)].clutter_ids, BTreeSet::from([InstanceId(0)]));
    // idempotent
    let again = ok(&["clutter", "--data", p(&sdir), "--write"]);
    assert_eq!(out.stdout, again.stdout);
}

#[test]
fn curate_writes_labels_and_unlabeled_exclusions() {
    let dir = tempfile::tempdir().unwrap();
    let ann = dir.path().join("annotations.json");
    std::fs::write(
        &ann,
        r#"[
  {"annotator": "a", "instance": "1", "synonyms": "Chair, seat", "depictions": "", "vis_sim": "stool"},
  {"annotator": "b", "instance": "1", "synonyms": "chair", "vis_sim": "seat"},
  {"annotator": "a", "instance": "2", "synonyms": " "},
  {"annotator": "a", "instance": "3", "synonyms": "lamp"}
]"#,
    )
    .unwrap();
    let sdir = dir.path().join("scene");
    ok(&["curate", "--annotations", p(&ann), "--out", p(&sdir)]);
    let labels = io::read_labels(&sdir.join(io::LABELS_FILE)).unwrap();
    let chair = &labels[&InstanceId(1)];
    assert_eq!(chair.synonyms, BTreeSet::from(["chair".to_string()]));
    assert!(chair.visually_similar.contains("seat"));
    assert!(!chair.ambiguous);
    assert!(labels[&InstanceId(3)].ambiguous);
    let excluded: BTreeSet<InstanceId> = read_json(&sdir.join(io::EXCLUDED_FILE)).unwrap();
    assert_eq!(excluded, BTreeSet::from([InstanceId(2)]));
}

#[test]
fn export_viz_writes_category_colours() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.ply");
    ok(&["export-viz", "--data", &data(), "--pred", &pred(), "--scene", "scene000", "--out", p(&out)]);
    let cloud = io::read_ply(&out).unwrap();
    let colours: BTreeSet<[u8; 3]> = cloud.colors.unwrap().into_iter().collect();
    assert!(colours.len() >= 4, "{colours:?}");
}

#[test]
fn threads_flag_and_env_are_accepted() {
    let a = ok(&["--threads", "2", "stats", "--data", &data()]);
    let b = common::olx_env(&["stats", "--data", &data()], &[("OLX_THREADS", "3")]);
    assert!(b.status.success());
    assert_eq!(a.stdout, b.stdout);
}
