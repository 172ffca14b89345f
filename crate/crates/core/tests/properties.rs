use std::collections::BTreeSet;
use std::path::Path;

use proptest::prelude::*;

use olx_core::io::{self, PlyCloud};
use olx_core::labels::{curate_all, split_response, RawAnnotation};
use olx_core::retrieval::average_precision;
use olx_core::seg::{assign_category, point_set_terms, rank_score, PointLabelSets, RankBounds};
use olx_core::similarity::{top_n, FeatureMatrix, RankedLabelList};

const WORDS: [&str; 8] = ["chair", "Seat", "stool ", "lamp", "table  lamp", "plant", "picture", "sofa"];

fn response() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(&WORDS[..]), 0..4).prop_map(|w| w.join(", "))
}

fn annotation() -> impl Strategy<Value = RawAnnotation> {
    (0..4u8, 0..3u8, response(), response(), response()).prop_map(|(a, i, s, d, v)| RawAnnotation {
        annotator: format!("a{a}"),
        instance: i.to_string(),
        synonyms: s,
        depictions: d,
        vis_sim: v,
    })
}

/// Distinct label ids split into synonyms, depictions, visually similar and
/// clutter, over a prompt list of `len` labels.
fn label_sets() -> impl Strategy<Value = (usize, PointLabelSets)> {
    (12usize..60).prop_flat_map(|len| {
        (Just(len), Just((0..len as u32).collect::<Vec<_>>()).prop_shuffle(), 1..4usize, 0..4usize, 0..4usize, 0..4usize)
            .prop_map(|(len, ids, s, d, v, c)| {
                let part = |a: usize, b: usize| {
                    let mut p = ids[a..b].to_vec();
                    p.sort_unstable();
                    p
                };
                let sets = PointLabelSets {
                    synonyms: part(0, s),
                    depictions: part(s, s + d),
                    visually_similar: part(s + d, s + d + v),
                    clutter: part(s + d + v, s + d + v + c),
                };
                (len, sets)
            })
    })
}

proptest! {
    #[test]
    fn curated_categories_are_disjoint(anns in prop::collection::vec(annotation(), 1..12)) {
        let curated = curate_all(&anns, 2).unwrap();
        for (id, set) in &curated.labels {
            prop_assert!(set.overlapping_label().is_none());
            prop_assert!(!curated.unlabeled.contains(id));
            // no label is lost, it only moves to a less specific category
            let mine: Vec<_> = anns.iter().filter(|a| a.instance == id.to_string()).collect();
            let given: BTreeSet<String> = mine
                .iter()
                .flat_map(|a| split_response(&a.synonyms).chain(split_response(&a.depictions)).chain(split_response(&a.vis_sim)))
                .collect();
            let kept: BTreeSet<String> = set.all_labels().cloned().collect();
            prop_assert_eq!(given, kept);
            let vis: BTreeSet<String> = mine.iter().flat_map(|a| split_response(&a.vis_sim)).collect();
            prop_assert_eq!(&vis, &set.visually_similar);
        }
    }

    #[test]
    fn rank_score_is_one_exactly_inside(len in 1u32..10_000, a in 1u32..10_000, b in 1u32..10_000, r in 1u32..10_000) {
        let (a, b, r) = (a.min(len), b.min(len), r.min(len));
        let bounds = RankBounds::new(a.min(b), a.max(b), len).unwrap();
        let s = rank_score(r, &bounds);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s == 1.0, bounds.left <= r && r <= bounds.right);
    }

    #[test]
    fn ideal_ranking_has_no_penalty((len, sets) in label_sets(), noise in prop::collection::vec(0.0f64..1.0, 60)) {
        // synonyms first, then depictions and visually similar labels, then the rest
        let mut sims: Vec<f64> = noise[..len].iter().map(|x| x * 0.1).collect();
        for &l in &sets.synonyms {
            sims[l as usize] = 3.0 + noise[l as usize];
        }
        for &l in sets.depictions.iter().chain(&sets.visually_similar) {
            sims[l as usize] = 1.0 + noise[l as usize];
        }
        let ranking = RankedLabelList::from_similarities(&sims);
        let terms = point_set_terms(&ranking, &sets);
        for t in [terms.synonym, terms.dvs].into_iter().flatten() {
            prop_assert_eq!((t.inlier_rate, t.left_mean, t.right_mean), (1.0, 1.0, 1.0));
        }
        prop_assert_eq!(terms.mean_score(), Some(1.0));
    }

    #[test]
    fn categories_improve_with_n((len, sets) in label_sets(), sims in prop::collection::vec(-1.0f64..1.0, 60)) {
        let ranking = RankedLabelList::from_similarities(&sims[..len]);
        let mut prev = None;
        for n in 1..=len {
            let c = assign_category(top_n(&ranking, n).unwrap(), &sets);
            if let Some(p) = prev {
                prop_assert!(c <= p, "{c:?} at N={n} after {p:?}");
            }
            prev = Some(c);
        }
        prop_assert_eq!(prev, Some(olx_core::seg::Category::Synonym));
    }

    #[test]
    fn average_precision_bounds(hits in prop::collection::vec(any::<bool>(), 0..40), extra in 0usize..5) {
        let tp = hits.iter().filter(|h| **h).count();
        let ap = average_precision(&hits, tp + extra);
        prop_assert!((0.0..=1.0).contains(&ap));
        let mut sorted = hits.clone();
        sorted.sort_by(|a, b| b.cmp(a));
        let best = average_precision(&sorted, tp + extra);
        prop_assert!(best >= ap - 1e-12);
        if tp > 0 {
            prop_assert!((best - tp as f64 / (tp + extra) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn tensor_round_trip(rows in 0usize..6, dim in 1usize..6, seed in any::<u64>()) {
        let data: Vec<f32> = (0..rows * dim).map(|i| ((seed.rotate_left(i as u32 % 64) >> 40) as f32) - 1e6).collect();
        let m = FeatureMatrix::new(rows, dim, data).unwrap();
        let bytes = io::encode_matrix(&m);
        prop_assert_eq!(bytes.len(), 23 + rows * dim * 4);
        prop_assert_eq!(io::decode_matrix(Path::new("m.olxt"), &bytes).unwrap(), m);
    }

    #[test]
    fn truncated_tensors_are_rejected(rows in 1usize..4, dim in 1usize..4, cut in 1usize..8) {
        let m = FeatureMatrix::new(rows, dim, vec![0.5; rows * dim]).unwrap();
        let bytes = io::encode_matrix(&m);
        prop_assert!(io::decode_matrix(Path::new("m.olxt"), &bytes[..bytes.len() - cut]).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ply_round_trip(
        points in prop::collection::vec(prop::array::uniform3(-100.0f32..100.0), 0..50),
        with_ids in any::<bool>(),
        with_colors in any::<bool>(),
    ) {
        let n = points.len();
        let cloud = PlyCloud {
            points: points.iter().map(|p| p.map(f64::from)).collect(),
            instance_ids: with_ids.then(|| (0..n as i32).map(|i| i - 3).collect()),
            colors: with_colors.then(|| (0..n).map(|i| [i as u8, 7, 255]).collect()),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        io::write_ply(&path, &cloud).unwrap();
        prop_assert_eq!(io::read_ply(&path).unwrap(), cloud);
    }
}
