use crate::similarity::RankedLabelList;

use super::{assign_category, Category, PointLabelSets, RankBounds};

/// Rank-box terms of one label set at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetTerms {
    /// Fraction of the set's labels that land inside the box.
    pub inlier_rate: f64,
    pub left_mean: f64,
    pub right_mean: f64,
    pub score_sum: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSetTerms {
    /// `None` when the instance has no synonyms.
    pub synonym: Option<SetTerms>,
    /// `None` when the instance has no depictions or visually similar labels.
    pub dvs: Option<SetTerms>,
}

impl PointSetTerms {
    /// Mean rank score over synonyms and DVS labels together.
    pub fn mean_score(&self) -> Option<f64> {
        let (mut sum, mut n) = (0.0, 0usize);
        for t in [self.synonym, self.dvs].into_iter().flatten() {
            sum += t.score_sum;
            n += t.count;
        }
        (n > 0).then(|| sum / n as f64)
    }
}

fn set_terms(ranks: &[u32], labels: impl Iterator<Item = u32>, bounds: RankBounds) -> SetTerms {
    let (mut inl, mut left, mut right, mut score, mut n) = (0usize, 0.0, 0.0, 0.0, 0usize);
    for l in labels {
        let r = ranks[l as usize];
        let (lt, rt) = (bounds.left_term(r), bounds.right_term(r));
        let s = lt.min(rt);
        if s == 1.0 {
            inl += 1;
        }
        left += lt;
        right += rt;
        score += s;
        n += 1;
    }
    let k = n as f64;
    SetTerms {
        inlier_rate: inl as f64 / k,
        left_mean: left / k,
        right_mean: right / k,
        score_sum: score,
        count: n,
    }
}

/// Set-ranking terms of one matched point.
pub fn point_set_terms(ranking: &RankedLabelList, sets: &PointLabelSets) -> PointSetTerms {
    let len = ranking.len();
    let ranks = ranking.rank_of_labels();
    let n_syn = sets.synonyms.len();
    let synonym = RankBounds::synonyms(n_syn, len)
        .map(|b| set_terms(&ranks, sets.synonyms.iter().copied(), b));
    let dvs = RankBounds::dvs(n_syn, sets.dvs_len(), len).map(|b| {
        let labels = sets.depictions.iter().chain(&sets.visually_similar).copied();
        set_terms(&ranks, labels, b)
    });
    PointSetTerms { synonym, dvs }
}

/// Membership mask of a closed class list over the prompt list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClosedSet {
    member: Vec<bool>,
}

impl ClosedSet {
    pub fn new(classes: &[u32], prompt_len: usize) -> Self {
        let mut member = vec![false; prompt_len];
        for &c in classes {
            if let Some(m) = member.get_mut(c as usize) {
                *m = true;
            }
        }
        ClosedSet { member }
    }

    pub fn contains(&self, label: u32) -> bool {
        self.member.get(label as usize).copied().unwrap_or(false)
    }

    /// Highest-ranked label that belongs to the class list.
    pub fn top1(&self, ranking: &RankedLabelList) -> Option<u32> {
        ranking.indices.iter().copied().find(|&l| self.contains(l))
    }
}

/// Everything the aggregation needs from one matched point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointOutcome {
    /// One category per requested N, in request order.
    pub categories: Vec<Category>,
    pub set_terms: PointSetTerms,
    pub closed_top1: Option<u32>,
}

/// `n_values` must all lie in `1..=ranking.len()`.
pub fn evaluate_point(
    ranking: &RankedLabelList,
    sets: &PointLabelSets,
    n_values: &[usize],
    closed: Option<&ClosedSet>,
) -> PointOutcome {
    PointOutcome {
        categories: n_values
            .iter()
            .map(|&n| assign_category(&ranking.indices[..n], sets))
            .collect(),
        set_terms: point_set_terms(ranking, sets),
        closed_top1: closed.and_then(|c| c.top1(ranking)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranking(order: &[u32]) -> RankedLabelList {
        let n = order.len();
        let mut sims = vec![0.0; n];
        for (pos, &l) in order.iter().enumerate() {
            sims[l as usize] = 1.0 - pos as f64 / n as f64;
        }
        RankedLabelList::from_similarities(&sims)
    }

    #[test]
    fn perfect_ranking_is_all_inliers() {
        let sets = PointLabelSets {
            synonyms: vec![0, 1],
            depictions: vec![2],
            visually_similar: vec![3],
            clutter: vec![],
        };
        let t = point_set_terms(&ranking(&[1, 0, 3, 2, 4, 5]), &sets);
        let s = t.synonym.unwrap();
        let d = t.dvs.unwrap();
        assert_eq!((s.inlier_rate, d.inlier_rate), (1.0, 1.0));
        assert_eq!((s.right_mean, d.left_mean, d.right_mean), (1.0, 1.0, 1.0));
        assert_eq!(t.mean_score(), Some(1.0));
    }

    #[test]
    fn swapped_tiers() {
        // dvs labels first, synonyms pushed to ranks 3 and 4 of 10
        let sets = PointLabelSets {
            synonyms: vec![0, 1],
            depictions: vec![2, 3],
            ..Default::default()
        };
        let t = point_set_terms(&ranking(&[2, 3, 0, 1, 4, 5, 6, 7, 8, 9]), &sets);
        let s = t.synonym.unwrap();
        let d = t.dvs.unwrap();
        assert_eq!(s.inlier_rate, 0.0);
        // synonym right bound 2, len 10: (3-2)/8 and (4-2)/8
        assert!((s.right_mean - (1.0 - (1.0 / 8.0 + 2.0 / 8.0) / 2.0)).abs() < 1e-15);
        // dvs left bound 3: ranks 1 and 2
        assert!((d.left_mean - ((1.0 / 3.0) + (2.0 / 3.0)) / 2.0).abs() < 1e-15);
        assert_eq!(d.right_mean, 1.0);
        assert_eq!(d.inlier_rate, 0.0);
    }

    #[test]
    fn missing_sets_are_none() {
        let sets = PointLabelSets {
            visually_similar: vec![1],
            ..Default::default()
        };
        let t = point_set_terms(&ranking(&[0, 1, 2]), &sets);
        assert!(t.synonym.is_none());
        // dvs box is [1, 1]; label 1 sits at rank 2
        assert_eq!(t.dvs.unwrap().inlier_rate, 0.0);
        assert!(point_set_terms(&ranking(&[0, 1]), &PointLabelSets::default()).mean_score().is_none());
    }

    #[test]
    fn closed_top1_skips_foreign_labels() {
        let c = ClosedSet::new(&[2, 4], 5);
        assert_eq!(c.top1(&ranking(&[0, 1, 4, 2, 3])), Some(4));
        let out = evaluate_point(
            &ranking(&[0, 1, 4, 2, 3]),
            &PointLabelSets { synonyms: vec![4], ..Default::default() },
            &[1, 3],
            Some(&c),
        );
        assert_eq!(out.categories, vec![Category::Incorrect, Category::Synonym]);
        assert_eq!(out.closed_top1, Some(4));
    }
}
