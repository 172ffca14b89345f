//! Tolerance comparison of reports.

use olx_core::report::{SceneRetrieval, SceneSegmentation};

/// First difference between two metric lists beyond `tol`, as a message.
fn diff(a: &[(String, Option<f64>)], b: &[(String, Option<f64>)], tol: f64) -> Option<String> {
    if a.len() != b.len() {
        return Some(format!("{} metrics vs {}", a.len(), b.len()));
    }
    for ((na, va), (nb, vb)) in a.iter().zip(b) {
        if na != nb {
            return Some(format!("metric {na} vs {nb}"));
        }
        match (va, vb) {
            (None, None) => {}
            (Some(x), Some(y)) if (x - y).abs() <= tol => {}
            _ => return Some(format!("{na}: {va:?} vs {vb:?}")),
        }
    }
    None
}

/// `None` when counts agree exactly and every metric within `tol`.
pub fn segmentation_diff(a: &SceneSegmentation, b: &SceneSegmentation, tol: f64) -> Option<String> {
    let counts = |s: &SceneSegmentation| {
        (
            s.objects,
            s.points,
            s.matched_points,
            s.set_ranking.points,
            s.set_ranking.points_synonym,
            s.set_ranking.points_dvs,
        )
    };
    if counts(a) != counts(b) {
        return Some(format!("counts {:?} vs {:?}", counts(a), counts(b)));
    }
    diff(&a.metrics(), &b.metrics(), tol)
}

/// AP at every threshold, overall and per query kind.
fn ap_values(s: &SceneRetrieval) -> Vec<(String, Option<f64>)> {
    let mut out = s.metrics();
    let parts = std::iter::once(("all".to_string(), &s.overall)).chain(s.by_kind.iter().map(|(k, v)| (k.clone(), v)));
    for (name, summary) in parts {
        match summary {
            Some(sum) => out.extend(sum.ap_by_iou.iter().map(|(t, v)| (format!("{name}_AP{t}"), Some(*v)))),
            None => out.push((format!("{name}_AP"), None)),
        }
    }
    out
}

pub fn retrieval_diff(a: &SceneRetrieval, b: &SceneRetrieval, tol: f64) -> Option<String> {
    if (a.queries, a.instances) != (b.queries, b.instances) {
        return Some(format!("queries/instances {:?} vs {:?}", (a.queries, a.instances), (b.queries, b.instances)));
    }
    if a.rank_histogram != b.rank_histogram {
        return Some(format!("rank histogram {:?} vs {:?}", a.rank_histogram, b.rank_histogram));
    }
    diff(&ap_values(a), &ap_values(b), tol)
}
